#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "support.hpp"

using namespace vtamiq;
using vtamiq::testing::TempDir;

namespace {

DatasetManifest scored(std::size_t n, std::uint64_t seed) {
  DatasetManifest m;
  m.name = "s";
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n; ++i)
    m.records.push_back({"r" + std::to_string(i % 7), "d" + std::to_string(i), std::normal_distribution<double>()(rng),
                         "ref" + std::to_string(i % 7)});
  return m;
}

std::vector<std::size_t> all_of(const DatasetManifest& m) {
  std::vector<std::size_t> v(m.records.size());
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

struct OnDisk {
  TempDir dir{"eval"};
  DatasetManifest manifest;
  OnDisk() {
    SyntheticSpec spec;
    spec.references = 3;
    spec.height = spec.width = 16;
    spec.levels = {0.8, 1.6, 2.4, 3.2};
    manifest = write_synthetic_dataset(dir.path(), spec, "disk");
  }
};

}  // namespace

TEST(EvaluatePredictor, OracleScoresPerfectly) {
  const auto m = scored(40, 1);
  const auto t = normalized_targets(m);
  const auto rep = evaluate_predictor([&](std::size_t i, std::size_t) { return 3.0 * t[i] - 1.0; }, m, all_of(m), 3);
  ASSERT_TRUE(rep.ok()) << rep.error;
  EXPECT_EQ(rep.runs, 3u);
  EXPECT_EQ(rep.per_run.size(), 3u);
  EXPECT_NEAR(rep.plcc, 1.0, 1e-6);
  EXPECT_DOUBLE_EQ(rep.srocc, 1.0);
  EXPECT_DOUBLE_EQ(rep.krocc, 1.0);
}

TEST(EvaluatePredictor, ConstantPredictorYieldsAnErrorNotACrash) {
  const auto m = scored(20, 2);
  const auto rep = evaluate_predictor([](std::size_t, std::size_t) { return 0.5; }, m, all_of(m), 2);
  EXPECT_FALSE(rep.ok());
  EXPECT_TRUE(std::isnan(rep.srocc));
  EXPECT_TRUE(rep.per_run.empty());
  std::ostringstream table, csv;
  print_report_table(table, std::span(&rep, 1));
  write_report_csv(csv, std::span(&rep, 1));
  EXPECT_NE(table.str().find("error"), std::string::npos);
  EXPECT_NE(csv.str().find("nan"), std::string::npos);
}

TEST(EvaluatePredictor, ResultIndependentOfIndexOrder) {
  const auto m = scored(30, 3);
  const auto t = normalized_targets(m);
  // Noisy predictor keyed by record identity.
  Predictor p = [&](std::size_t i, std::size_t run) { return t[i] + 0.3 * std::sin(7.0 * double(i) + double(run)); };
  auto idx = all_of(m);
  const auto a = evaluate_predictor(p, m, idx, 2);
  std::reverse(idx.begin(), idx.end());
  const auto b = evaluate_predictor(p, m, idx, 2);
  EXPECT_EQ(a.plcc, b.plcc);
  EXPECT_EQ(a.srocc, b.srocc);
  EXPECT_EQ(a.krocc, b.krocc);
}

TEST(EvaluatePredictor, MeanOverRuns) {
  const auto m = scored(25, 4);
  const auto t = normalized_targets(m);
  Predictor p = [&](std::size_t i, std::size_t run) { return t[i] + (run + 1) * 0.2 * std::cos(3.0 * double(i)); };
  const auto rep = evaluate_predictor(p, m, all_of(m), 3);
  double s = 0;
  for (const auto& r : rep.per_run) s += r.srocc;
  EXPECT_NEAR(rep.srocc, s / 3.0, 1e-15);
  EXPECT_GT(rep.per_run[0].srocc, rep.per_run[2].srocc);
}

TEST(EvaluatePredictor, InvalidRequestsRejected) {
  const auto m = scored(5, 5);
  Predictor p = [](std::size_t i, std::size_t) { return double(i); };
  EXPECT_THROW(evaluate_predictor(p, m, {}, 1), ConfigError);
  EXPECT_THROW(evaluate_predictor(p, m, all_of(m), 0), ConfigError);
}

TEST(EvaluateModel, DeterministicAndCrossDatabaseConsistent) {
  OnDisk d;
  Model<float> model(ModelConfig::tiny(), 1);
  vtamiq::testing::scramble_parameters(model, 2, 0.2);
  ImageCache<float> cache;
  EvalOptions opt;
  opt.n_patches = 16;
  opt.runs = 2;
  opt.seed = 9;
  const auto idx = all_of(d.manifest);
  const auto a = evaluate(model, d.manifest, idx, opt, cache);
  const auto b = evaluate(model, d.manifest, idx, opt, cache);
  EXPECT_EQ(a.plcc, b.plcc);
  EXPECT_EQ(a.srocc, b.srocc);
  EXPECT_EQ(a.n_images, 12u);

  TrainedOn trained{{"disk", d.manifest.records[0].reference_id}, {"other", "x"}};
  const auto x = cross_database_evaluate(model, d.manifest, trained, opt, cache);
  EXPECT_EQ(x.srocc, a.srocc);
  EXPECT_EQ(x.plcc, a.plcc);
  EXPECT_EQ(x.trained_overlap, 4u);  // every distortion of that reference
}

TEST(CrossMatrix, CsvLayout) {
  CorrelationReport r;
  r.plcc = 0.5;
  r.srocc = 0.25;
  r.krocc = 0.125;
  std::ostringstream out;
  const std::vector<std::string> models{"A"}, sets{"B", "C"};
  write_cross_matrix_csv(out, models, sets, {{r, r}});
  EXPECT_EQ(out.str(), "model,B_plcc,B_srocc,B_krocc,C_plcc,C_srocc,C_krocc\nA,0.5,0.25,0.125,0.5,0.25,0.125\n");
}

TEST(Stability, TilingIsPerfectlyStableAndSamplingIsNot) {
  std::mt19937_64 rng(3);
  const auto ref = vtamiq::testing::random_tensor<double>(Shape{16, 16, 3}, rng);
  const auto dist = vtamiq::testing::random_tensor<double>(Shape{16, 16, 3}, rng);
  Model<double> model(ModelConfig::tiny(), 4);
  vtamiq::testing::scramble_parameters(model, 5, 0.3);
  const double tiled = representation_stability(model, ref, dist, SamplerConfig{}, 4, 3, 1, PatchSelection::kTiled);
  EXPECT_NEAR(tiled, 1.0, 1e-12);
  const double sampled = representation_stability(model, ref, dist, SamplerConfig{}, 4, 6, 1);
  EXPECT_LT(sampled, 1.0);
  EXPECT_GT(sampled, -1.0);
  EXPECT_THROW(representation_stability(model, ref, dist, SamplerConfig{}, 4, 1, 1), ContractError);
}

TEST(Stability, CosineSimilarity) {
  const std::vector<double> a{1, 0, 0}, b{0, 2, 0}, c{2, 0, 0}, z{0, 0, 0};
  EXPECT_EQ(cosine_similarity(a, b), 0.0);
  EXPECT_EQ(cosine_similarity(a, c), 1.0);
  EXPECT_THROW(cosine_similarity(a, z), UndefinedCorrelationError);
  EXPECT_THROW(cosine_similarity(a, std::vector<double>{1, 2}), DimensionError);
}
