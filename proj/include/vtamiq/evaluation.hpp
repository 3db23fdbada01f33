#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include "vtamiq/dataset.hpp"
#include "vtamiq/image_cache.hpp"
#include "vtamiq/metrics.hpp"
#include "vtamiq/model.hpp"
#include "vtamiq/training.hpp"

namespace vtamiq {

struct RunCorrelation {
  double plcc = 0;  // after the logistic map
  double srocc = 0;
  double krocc = 0;
  LogisticParams logistic;
};

/// Mean correlations over `runs` independent evaluation runs. When the correlations cannot be
/// computed (e.g. a constant predictor) `error` holds the reason and the coefficients are NaN.
struct CorrelationReport {
  std::string dataset;
  double plcc = std::numeric_limits<double>::quiet_NaN();
  double srocc = std::numeric_limits<double>::quiet_NaN();
  double krocc = std::numeric_limits<double>::quiet_NaN();
  LogisticParams logistic;  // from the first run
  std::size_t n_images = 0;
  std::size_t runs = 0;
  std::vector<RunCorrelation> per_run;
  std::string error;
  std::size_t trained_overlap = 0;  // records whose reference produced training updates

  bool ok() const { return error.empty(); }
};

/// Prediction for manifest record `index` in evaluation run `run`.
using Predictor = std::function<double(std::size_t index, std::size_t run)>;

namespace detail {

/// Indices sorted by record identity, so results do not depend on manifest order.
inline std::vector<std::size_t> canonical_order(const DatasetManifest& m, std::span<const std::size_t> indices) {
  std::vector<std::size_t> out(indices.begin(), indices.end());
  std::sort(out.begin(), out.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = m.records.at(a);
    const auto& rb = m.records.at(b);
    const auto ka = std::tie(ra.reference_path, ra.distorted_path, ra.score);
    const auto kb = std::tie(rb.reference_path, rb.distorted_path, rb.score);
    return ka < kb;
  });
  return out;
}

}  // namespace detail

inline CorrelationReport evaluate_predictor(const Predictor& predict, const DatasetManifest& m,
                                            std::span<const std::size_t> indices, std::size_t runs) {
  if (indices.empty()) throw ConfigError("evaluate: the evaluation set is empty");
  if (runs == 0) throw ConfigError("evaluate: runs must be positive");
  const auto order = detail::canonical_order(m, indices);
  const auto all_targets = normalized_targets(m);
  std::vector<double> targets;
  for (std::size_t i : order) targets.push_back(all_targets[i]);

  CorrelationReport rep;
  rep.dataset = m.name;
  rep.n_images = order.size();
  rep.runs = runs;
  try {
    for (std::size_t run = 0; run < runs; ++run) {
      std::vector<double> pred;
      pred.reserve(order.size());
      for (std::size_t i : order) pred.push_back(predict(i, run));
      RunCorrelation rc;
      const auto fit = logistic_fit(pred, targets);
      rc.logistic = fit.params;
      rc.plcc = plcc(fit.mapped, targets);
      rc.srocc = srocc(pred, targets);
      rc.krocc = krocc(pred, targets);
      rep.per_run.push_back(rc);
    }
  } catch (const Error& e) {
    rep.per_run.clear();
    rep.error = e.what();
    return rep;
  }
  auto mean = [&](auto field) {
    double s = 0;
    for (const auto& r : rep.per_run) s += r.*field;
    return s / static_cast<double>(rep.per_run.size());
  };
  rep.plcc = mean(&RunCorrelation::plcc);
  rep.srocc = mean(&RunCorrelation::srocc);
  rep.krocc = mean(&RunCorrelation::krocc);
  rep.logistic = rep.per_run.front().logistic;
  return rep;
}

struct EvalOptions {
  std::size_t n_patches = 1024;
  std::size_t runs = 20;
  std::uint64_t seed = 0;
  SamplerConfig sampler;
};

/// Model predictions over `indices` with fresh patch sampling per image and run.
template <typename T>
CorrelationReport evaluate(const Model<T>& model, const DatasetManifest& m, std::span<const std::size_t> indices,
                           EvalOptions opt, ImageCache<T>& cache) {
  opt.sampler.patch_size = model.config().vit.patch_size;
  opt.sampler.validate();
  if (opt.n_patches == 0) throw ConfigError("evaluate: n_patches must be positive");
  Predictor p = [&](std::size_t index, std::size_t run) {
    const std::size_t one[] = {index};
    return predict_records(model, m, one, opt.sampler, opt.n_patches, opt.seed, 0x1000 + run, cache).front();
  };
  return evaluate_predictor(p, m, indices, opt.runs);
}

/// Evaluation on every record of `b`, which must not have been seen in training. Records whose
/// (dataset, reference) pair appears in `trained_on` are counted in `trained_overlap`.
template <typename T>
CorrelationReport cross_database_evaluate(const Model<T>& model, const DatasetManifest& b, const TrainedOn& trained_on,
                                          EvalOptions opt, ImageCache<T>& cache) {
  std::vector<std::size_t> all(b.records.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  auto rep = evaluate(model, b, all, opt, cache);
  for (const auto& r : b.records) rep.trained_overlap += trained_on.count({b.name, r.reference_id});
  return rep;
}

inline void write_report_csv(std::ostream& out, std::span<const CorrelationReport> reports) {
  out << "dataset,n_images,runs,plcc,srocc,krocc,b1,b2,b3,b4,trained_overlap,error\n" << std::setprecision(10);
  for (const auto& r : reports) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << r.dataset << ',' << r.n_images << ',' << r.runs << ',' << r.plcc << ',' << r.srocc << ',' << r.krocc << ','
        << r.logistic.b1 << ',' << r.logistic.b2 << ',' << r.logistic.b3 << ',' << r.logistic.b4 << ','
        << r.trained_overlap << ',' << err << '\n';
  }
}

inline void write_per_run_csv(std::ostream& out, const CorrelationReport& r) {
  out << "run,plcc,srocc,krocc,b1,b2,b3,b4\n" << std::setprecision(10);
  for (std::size_t i = 0; i < r.per_run.size(); ++i) {
    const auto& p = r.per_run[i];
    out << i << ',' << p.plcc << ',' << p.srocc << ',' << p.krocc << ',' << p.logistic.b1 << ',' << p.logistic.b2 << ','
        << p.logistic.b3 << ',' << p.logistic.b4 << '\n';
  }
}

inline void print_report_table(std::ostream& out, std::span<const CorrelationReport> reports) {
  out << std::left << std::setw(16) << "dataset" << std::right << std::setw(8) << "images" << std::setw(6) << "runs"
      << std::setw(9) << "PLCC" << std::setw(9) << "SROCC" << std::setw(9) << "KROCC" << '\n';
  out << std::fixed << std::setprecision(4);
  for (const auto& r : reports) {
    out << std::left << std::setw(16) << r.dataset << std::right << std::setw(8) << r.n_images << std::setw(6) << r.runs;
    if (r.ok()) {
      out << std::setw(9) << r.plcc << std::setw(9) << r.srocc << std::setw(9) << r.krocc << '\n';
    } else {
      out << "  error: " << r.error << '\n';
    }
  }
  out.unsetf(std::ios::fixed);
}

/// One row per trained model and a PLCC/SROCC/KROCC column triple per test dataset.
inline void write_cross_matrix_csv(std::ostream& out, std::span<const std::string> models,
                                   std::span<const std::string> datasets,
                                   const std::vector<std::vector<CorrelationReport>>& cells) {
  out << "model";
  for (const auto& d : datasets) out << ',' << d << "_plcc," << d << "_srocc," << d << "_krocc";
  out << '\n' << std::setprecision(10);
  for (std::size_t i = 0; i < models.size(); ++i) {
    out << models[i];
    for (const auto& c : cells.at(i)) out << ',' << c.plcc << ',' << c.srocc << ',' << c.krocc;
    out << '\n';
  }
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("cosine_similarity: length mismatch");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) throw UndefinedCorrelationError("cosine_similarity: zero vector");
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

enum class PatchSelection { kSampled, kTiled };

/// Encodes the distorted image of a pair `trials` times, each with a fresh draw of `n_patches`
/// (or the fixed non-overlapping tiling), and returns the mean pairwise cosine similarity of the
/// class-token representations.
template <typename T>
double representation_stability(const Model<T>& model, const Tensor<T>& ref, const Tensor<T>& dist,
                                SamplerConfig sampler, std::size_t n_patches, std::size_t trials, std::uint64_t seed,
                                PatchSelection selection = PatchSelection::kSampled) {
  if (trials < 2) throw ContractError("representation_stability: trials must be >= 2");
  sampler.patch_size = model.config().vit.patch_size;
  std::vector<std::vector<double>> reps;
  reps.reserve(trials);
  std::optional<ProbabilityMap> map;
  if (selection == PatchSelection::kSampled) map = build_probability_map(ref, dist, sampler);
  for (std::size_t t = 0; t < trials; ++t) {
    PatchSequence<T> seq = selection == PatchSelection::kTiled
                               ? tile_patches(dist, sampler.patch_size)
                               : sample_patches(ref, dist, *map, n_patches, derive_seed(seed, {0x57AB, t})).second;
    const auto v = model.encode_vector(seq);
    reps.emplace_back(v.values().begin(), v.values().end());
  }
  double sum = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < trials; ++i)
    for (std::size_t j = i + 1; j < trials; ++j, ++pairs) sum += cosine_similarity(reps[i], reps[j]);
  return sum / static_cast<double>(pairs);
}

}  // namespace vtamiq
