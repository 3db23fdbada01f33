#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "support.hpp"

using namespace vtamiq;
using vtamiq::testing::TempDir;

namespace {

// A small dataset on disk plus a split, shared by the training tests.
struct SmallData {
  TempDir dir{"train"};
  DatasetManifest manifest;
  SplitSpec split;

  explicit SmallData(std::size_t refs = 6) {
    SyntheticSpec spec;
    spec.references = refs;
    spec.height = spec.width = 16;
    spec.levels = {0.8, 2.0, 3.0};
    manifest = write_synthetic_dataset(dir.path(), spec, "small");
    split = split_by_reference(manifest, {0.5, 0.5, 0.0}, 2);
  }
};

TrainConfig quick_config(std::size_t epochs) {
  TrainConfig c;
  c.batch_size = 3;
  c.patches_train = 8;
  c.patches_eval = 8;
  c.epochs = epochs;
  c.lr_decay_epoch = epochs;
  c.lr_initial = 1e-3;
  c.seed = 4;
  return c;
}

std::vector<float> flatten(const ParameterStore<float>& s) {
  std::vector<float> out;
  for (const auto& p : s) out.insert(out.end(), p.value.values().begin(), p.value.values().end());
  return out;
}

}  // namespace

TEST(AdamW, FirstStepMatchesClosedForm) {
  ParameterStore<double> store;
  store.add("w", Tensor<double>(Shape{3}, std::vector<double>{1.0, -2.0, 0.5}));
  store[0].gradient = Tensor<double>(Shape{3}, std::vector<double>{0.3, -4.0, 0.0});
  AdamW<double> opt(store, AdamWConfig{0.9, 0.999, 1e-8, 0.01});
  opt.step(store, 0.1);
  // Bias correction makes the first moment ratio g / (|g| + eps).
  const double g[] = {0.3, -4.0, 0.0}, p[] = {1.0, -2.0, 0.5};
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(store[0].value[i], p[i] - 0.1 * (g[i] / (std::abs(g[i]) + 1e-8) + 0.01 * p[i]), 1e-12);
  EXPECT_EQ(opt.steps(), 1u);
}

TEST(AdamW, RejectsChangedLayout) {
  ParameterStore<double> store;
  store.add("w", Tensor<double>(Shape{1}));
  AdamW<double> opt(store);
  store.add("v", Tensor<double>(Shape{1}));
  EXPECT_THROW(opt.step(store, 0.1), ContractError);
}

TEST(Schedule, StepDecay) {
  EXPECT_EQ(step_learning_rate(1e-5, 0, 12, 10), 1e-5);
  EXPECT_EQ(step_learning_rate(1e-5, 11, 12, 10), 1e-5);
  EXPECT_DOUBLE_EQ(step_learning_rate(1e-5, 12, 12, 10), 1e-6);
}

TEST(TrainConfigJson, RoundTripAndValidation) {
  TrainConfig c = quick_config(7);
  c.rank_reduction = RankReduction::kSum;
  const json j = c;
  const auto back = j.get<TrainConfig>();
  EXPECT_EQ(json(back), j);
  EXPECT_THROW((json{{"epochs", 3}, {"learning_rate", 1}}.get<TrainConfig>()), ConfigError);
  TrainConfig bad;
  bad.lr_decay_epoch = bad.epochs + 1;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = TrainConfig{};
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Training, ZeroLearningRateWithoutDecayLeavesWeightsUntouched) {
  SmallData d;
  Model<float> model(ModelConfig::tiny(), 1);
  const auto before = flatten(model.parameters());
  auto cfg = quick_config(2);
  cfg.lr_initial = 0;
  cfg.weight_decay = 0;
  ImageCache<float> cache;
  const auto res = train(model, d.manifest, d.split, cfg, SamplerConfig{}, cache);
  EXPECT_EQ(flatten(model.parameters()), before);
  EXPECT_EQ(flatten(res.final), before);
}

TEST(Training, SingleRecordLossFalls) {
  SmallData d(3);
  // One reference in training, one distorted image from it.
  DatasetManifest one = d.manifest;
  one.records = {d.manifest.records[1]};
  SplitSpec split;
  split.train = {one.records[0].reference_id};
  Model<float> model(ModelConfig::tiny(), 2);
  auto cfg = quick_config(5);
  cfg.batch_size = 1;
  cfg.lr_initial = 1e-3;
  ImageCache<float> cache;
  const auto res = train(model, one, split, cfg, SamplerConfig{}, cache);
  ASSERT_EQ(res.history.epochs.size(), 5u);
  EXPECT_LT(res.history.epochs.back().train_loss, res.history.epochs.front().train_loss);
  EXPECT_TRUE(std::isnan(res.history.epochs.front().val_srocc));
}

TEST(Training, DeterministicForFixedSeeds) {
  SmallData d;
  auto run = [&] {
    Model<float> model(ModelConfig::tiny(), 3);
    ImageCache<float> cache;
    auto res = train(model, d.manifest, d.split, quick_config(3), SamplerConfig{}, cache);
    return std::pair{flatten(model.parameters()), res.history};
  };
  const auto [wa, ha] = run();
  const auto [wb, hb] = run();
  EXPECT_EQ(wa, wb);
  ASSERT_EQ(ha.epochs.size(), hb.epochs.size());
  for (std::size_t i = 0; i < ha.epochs.size(); ++i) {
    EXPECT_EQ(ha.epochs[i].train_loss, hb.epochs[i].train_loss);
    EXPECT_EQ(ha.epochs[i].val_srocc, hb.epochs[i].val_srocc);
  }
}

TEST(Training, OnlyTrainingReferencesProduceUpdates) {
  SmallData d;
  Model<float> model(ModelConfig::tiny(), 4);
  ImageCache<float> cache;
  std::size_t callbacks = 0;
  const auto res = train(model, d.manifest, d.split, quick_config(2), SamplerConfig{}, cache,
                         [&](const EpochRecord& e, const ParameterStore<float>&) { EXPECT_EQ(e.epoch, callbacks++); });
  EXPECT_EQ(callbacks, 2u);
  EXPECT_EQ(res.trained_on.size(), d.split.train.size());
  for (const auto& [name, ref] : res.trained_on) {
    EXPECT_EQ(name, "small");
    EXPECT_EQ(subset_of(d.split, ref), Subset::kTrain);
  }
}

TEST(Training, ModelHoldsBestValidationWeights) {
  SmallData d;
  Model<float> model(ModelConfig::tiny(), 5);
  ImageCache<float> cache;
  const auto res = train(model, d.manifest, d.split, quick_config(3), SamplerConfig{}, cache);
  double best = -2;
  for (const auto& e : res.history.epochs)
    if (!std::isnan(e.val_srocc)) best = std::max(best, e.val_srocc);
  EXPECT_EQ(res.history.best_val_srocc, best);
  EXPECT_EQ(res.history.epochs[res.history.best_epoch].val_srocc, best);
  EXPECT_EQ(flatten(model.parameters()), flatten(res.best));
}

TEST(Training, DivergenceIsReported) {
  SmallData d;
  Model<float> model(ModelConfig::tiny(), 6);
  auto cfg = quick_config(3);
  cfg.lr_initial = 1e36;
  ImageCache<float> cache;
  EXPECT_THROW(train(model, d.manifest, d.split, cfg, SamplerConfig{}, cache), DivergenceError);
}

TEST(Training, EmptyTrainingSubsetRejected) {
  SmallData d;
  SplitSpec empty;
  empty.val = d.manifest.reference_ids();
  Model<float> model(ModelConfig::tiny(), 7);
  ImageCache<float> cache;
  EXPECT_THROW(train(model, d.manifest, empty, quick_config(1), SamplerConfig{}, cache), ContractError);
}

TEST(History, CsvLayout) {
  TempDir dir("history");
  TrainingHistory h;
  h.epochs = {{0, 0.5, std::numeric_limits<double>::quiet_NaN(), 1e-3}, {1, 0.25, 0.75, 1e-4}};
  write_history_csv(dir.path() / "h.csv", h);
  std::ifstream in(dir.path() / "h.csv");
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), "epoch,train_loss,val_srocc,lr\n0,0.5,nan,0.001\n1,0.25,0.75,0.0001\n");
}

TEST(RecordSeed, DependsOnIdentityNotLocation) {
  ImageRecord a{"/x/r.png", "/x/d1.png", 1, "r"}, b{"/y/r.png", "/y/d1.png", 2, "r"}, c{"/x/r.png", "/x/d2.png", 1, "r"};
  EXPECT_EQ(record_seed(1, a, 2, 3), record_seed(1, b, 2, 3));
  EXPECT_NE(record_seed(1, a, 2, 3), record_seed(1, c, 2, 3));
  EXPECT_NE(record_seed(1, a, 2, 3), record_seed(1, a, 2, 4));
  EXPECT_NE(record_seed(1, a, 2, 3), record_seed(2, a, 2, 3));
}

TEST(Checkpoint, RoundTripPreservesPredictions) {
  TempDir dir("ckpt");
  Model<float> model(ModelConfig::tiny(), 8);
  vtamiq::testing::scramble_parameters(model, 9, 0.1);
  save_checkpoint(dir.path() / "m.ckpt", model.config(), model.parameters(), json{{"epoch", 3}});
  CheckpointHeader header;
  const auto cfg = model.config();
  const auto back = load_checkpoint<float>(dir.path() / "m.ckpt", &header, &cfg);
  EXPECT_EQ(header.precision, "float32");
  EXPECT_EQ(header.raw.at("epoch"), 3);
  EXPECT_EQ(flatten(back.parameters()), flatten(model.parameters()));

  const auto widened = load_checkpoint<double>(dir.path() / "m.ckpt");
  for (std::size_t k = 0; k < widened.parameters().size(); ++k)
    for (std::size_t i = 0; i < widened.parameters()[k].value.size(); ++i)
      EXPECT_EQ(widened.parameters()[k].value[i], static_cast<double>(model.parameters()[k].value[i]));
}

TEST(Checkpoint, CorruptionDetected) {
  TempDir dir("ckpt_bad");
  Model<float> model(ModelConfig::tiny(), 10);
  const auto path = dir.path() / "m.ckpt";
  save_checkpoint(path, model.config(), model.parameters());
  std::string bytes;
  {
    std::ifstream in(path, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  const auto write = [&](const std::string& b) {
    std::ofstream(dir.path() / "x.ckpt", std::ios::binary) << b;
    return dir.path() / "x.ckpt";
  };
  EXPECT_THROW(load_checkpoint<float>(write(bytes.substr(0, bytes.size() - 3))), CheckpointError);
  EXPECT_THROW(load_checkpoint<float>(write(bytes + "x")), CheckpointError);
  EXPECT_THROW(load_checkpoint<float>(write("NOTACKPT" + bytes.substr(8))), CheckpointError);
  std::string nan_tail = bytes;
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(nan_tail.data() + nan_tail.size() - 4, &nan, 4);
  EXPECT_THROW(load_checkpoint<float>(write(nan_tail)), CheckpointError);

  auto other = ModelConfig::tiny();
  other.vit.num_layers += 1;
  EXPECT_THROW(load_checkpoint<float>(path, nullptr, &other), CheckpointError);
  EXPECT_THROW(load_checkpoint<float>(dir.path() / "missing.ckpt"), IoError);
}

TEST(GradientCheck, CoversEveryParameterAndCatchesFaults) {
  Model<double> model(ModelConfig::tiny(), 11);
  vtamiq::testing::scramble_parameters(model, 12);
  const auto batch = vtamiq::testing::random_patch_batch<double>(3, 4, model.config().vit.patch_size, 13);
  const auto ok = gradient_check(model, batch);
  EXPECT_TRUE(ok.passed()) << ok.worst << " " << ok.max_rel_error;
  EXPECT_EQ(ok.groups.size(), model.parameters().size());
  GradientCheckOptions faulty;
  faulty.fault = 1e-2;
  const auto bad = gradient_check(model, batch, faulty);
  EXPECT_FALSE(bad.passed());
  EXPECT_EQ(bad.worst, model.parameters()[0].name);
}
