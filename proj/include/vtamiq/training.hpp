#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "vtamiq/dataset.hpp"
#include "vtamiq/image_cache.hpp"
#include "vtamiq/losses.hpp"
#include "vtamiq/metrics.hpp"
#include "vtamiq/model.hpp"
#include "vtamiq/optim.hpp"
#include "vtamiq/random.hpp"
#include "vtamiq/sampler.hpp"

namespace vtamiq {

struct TrainConfig {
  std::size_t batch_size = 20;
  std::size_t patches_train = 256;
  std::size_t patches_eval = 1024;
  std::size_t epochs = 20;
  double lr_initial = 1e-5;
  std::size_t lr_decay_epoch = 12;
  double lr_decay_factor = 10;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  double rank_eps = 1e-6;
  RankReduction rank_reduction = RankReduction::kMean;
  std::size_t checkpoint_every = 0;  // 0: no periodic checkpoints

  void validate() const {
    if (batch_size == 0 || patches_train == 0 || patches_eval == 0 || epochs == 0) {
      throw ConfigError("train: batch_size, patch counts and epochs must be positive");
    }
    if (!(lr_initial >= 0) || !std::isfinite(lr_initial)) throw ConfigError("train: lr_initial must be finite and >= 0");
    if (lr_decay_epoch == 0 || lr_decay_epoch > epochs) throw ConfigError("train: lr_decay_epoch must lie in [1, epochs]");
    if (!(lr_decay_factor > 0)) throw ConfigError("train: lr_decay_factor must be positive");
    if (!(weight_decay >= 0)) throw ConfigError("train: weight_decay must be >= 0");
    if (!(rank_eps > 0)) throw ConfigError("train: rank_eps must be positive");
  }
};

NLOHMANN_JSON_SERIALIZE_ENUM(RankReduction, {{RankReduction::kMean, "mean"}, {RankReduction::kSum, "sum"}})

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"batch_size", c.batch_size},       {"patches_train", c.patches_train},   {"patches_eval", c.patches_eval},
       {"epochs", c.epochs},               {"lr_initial", c.lr_initial},         {"lr_decay_epoch", c.lr_decay_epoch},
       {"lr_decay_factor", c.lr_decay_factor}, {"weight_decay", c.weight_decay}, {"seed", c.seed},
       {"rank_eps", c.rank_eps},           {"rank_reduction", c.rank_reduction}, {"checkpoint_every", c.checkpoint_every}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  detail::reject_unknown_keys(j,
                              {"batch_size", "patches_train", "patches_eval", "epochs", "lr_initial", "lr_decay_epoch",
                               "lr_decay_factor", "weight_decay", "seed", "rank_eps", "rank_reduction", "checkpoint_every"},
                              "train");
  detail::read_optional(j, "batch_size", c.batch_size, "train");
  detail::read_optional(j, "patches_train", c.patches_train, "train");
  detail::read_optional(j, "patches_eval", c.patches_eval, "train");
  detail::read_optional(j, "epochs", c.epochs, "train");
  detail::read_optional(j, "lr_initial", c.lr_initial, "train");
  detail::read_optional(j, "lr_decay_epoch", c.lr_decay_epoch, "train");
  detail::read_optional(j, "lr_decay_factor", c.lr_decay_factor, "train");
  detail::read_optional(j, "weight_decay", c.weight_decay, "train");
  detail::read_optional(j, "seed", c.seed, "train");
  detail::read_optional(j, "rank_eps", c.rank_eps, "train");
  detail::read_optional(j, "rank_reduction", c.rank_reduction, "train");
  detail::read_optional(j, "checkpoint_every", c.checkpoint_every, "train");
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0;
  double val_srocc = std::numeric_limits<double>::quiet_NaN();  // NaN: no validation set or undefined
  double lr = 0;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_srocc = std::numeric_limits<double>::quiet_NaN();
};

/// (dataset name, reference id) pairs whose images produced gradient updates.
using TrainedOn = std::set<std::pair<std::string, std::string>>;

template <typename T>
struct TrainResult {
  ParameterStore<T> best;   // parameters of the epoch with the best validation SROCC
  ParameterStore<T> final;  // parameters after the last epoch
  TrainingHistory history;
  TrainedOn trained_on;
};

/// Called after every epoch with the epoch record and the current parameters.
template <typename T>
using EpochCallback = std::function<void(const EpochRecord&, const ParameterStore<T>&)>;

/// Seed of the patch draw for one record. It depends on the record's identity (reference id and
/// distorted file name), not on its list position or the directory the dataset lives in.
inline std::uint64_t record_seed(std::uint64_t master, const ImageRecord& r, std::uint64_t purpose, std::uint64_t round) {
  const auto id = hash_string(r.reference_id + '\n' + r.distorted_path.filename().string());
  return derive_seed(master, {purpose, round, id});
}

/// Scores the records in `indices`, one fresh patch draw per image.
template <typename T>
std::vector<double> predict_records(const Model<T>& model, const DatasetManifest& m, std::span<const std::size_t> indices,
                                    const SamplerConfig& sampler, std::size_t n_patches, std::uint64_t seed,
                                    std::uint64_t round, ImageCache<T>& cache) {
  std::vector<double> out;
  out.reserve(indices.size());
  for (std::size_t idx : indices) {
    const auto& rec = m.records.at(idx);
    auto [ref, dist] = cache.pair(rec);
    const auto& map = cache.probability_map(rec, sampler);
    auto [sr, sd] = sample_patches(*ref, *dist, map, n_patches, record_seed(seed, rec, 0xE7A1, round));
    out.push_back(static_cast<double>(model.predict(sr, sd)));
  }
  return out;
}

inline void write_history_csv(const std::filesystem::path& path, const TrainingHistory& h) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write history '" + path.string() + "'");
  out << "epoch,train_loss,val_srocc,lr\n" << std::setprecision(17);
  for (const auto& e : h.epochs) {
    out << e.epoch << ',' << e.train_loss << ',';
    if (std::isnan(e.val_srocc)) {
      out << "nan";
    } else {
      out << e.val_srocc;
    }
    out << ',' << e.lr << '\n';
  }
}

/// Trains `model` in place on the train subset of `split`. Batches are reshuffled every epoch and
/// each visit to an image draws new patches. The model ends up holding the best-validation weights.
template <typename T>
TrainResult<T> train(Model<T>& model, const DatasetManifest& manifest, const SplitSpec& split, const TrainConfig& cfg,
                     SamplerConfig sampler, ImageCache<T>& cache,
                     const std::type_identity_t<EpochCallback<T>>& on_epoch = {}) {
  cfg.validate();
  sampler.patch_size = model.config().vit.patch_size;
  sampler.validate();
  const auto train_idx = records_in(manifest, split, Subset::kTrain);
  const auto val_idx = records_in(manifest, split, Subset::kVal);
  if (train_idx.empty()) throw ContractError("train: the split has no training records");
  const auto targets = normalized_targets(manifest);

  auto& store = model.parameters();
  AdamW<T> opt(store, AdamWConfig{0.9, 0.999, 1e-8, cfg.weight_decay});
  TrainResult<T> result{store, store, {}, {}};
  bool have_best = false;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = step_learning_rate(cfg.lr_initial, epoch, cfg.lr_decay_epoch, cfg.lr_decay_factor);
    auto order = train_idx;
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, {0x5EED, epoch}));
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform01(shuffle_rng) * static_cast<double>(i));
      std::swap(order[i - 1], order[std::min(j, i - 1)]);
    }

    double loss_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<PatchSequence<T>> refs, dists;
      Tensor<T> expected(Shape{stop - start, 1});
      for (std::size_t k = start; k < stop; ++k) {
        const auto& rec = manifest.records[order[k]];
        if (subset_of(split, rec.reference_id) != Subset::kTrain) {
          throw ContractError("train: record with reference '" + rec.reference_id + "' is not in the training subset");
        }
        auto [ref, dist] = cache.pair(rec);
        const auto& map = cache.probability_map(rec, sampler);
        auto [sr, sd] = sample_patches(*ref, *dist, map, cfg.patches_train, record_seed(cfg.seed, rec, 0x7EA1, epoch));
        refs.push_back(std::move(sr));
        dists.push_back(std::move(sd));
        expected[k - start] = static_cast<T>(targets[order[k]]);
        result.trained_on.emplace(manifest.name, rec.reference_id);
      }

      store.zero_grad();
      Tape<T> tape(store);
      auto pred = model.forward(tape, refs, dists);
      auto loss = refs.size() >= 2 ? total_loss(pred, expected, static_cast<T>(cfg.rank_eps), cfg.rank_reduction)
                                   : mae_loss(pred, expected);
      const double value = static_cast<double>(loss.value()[0]);
      if (!std::isfinite(value)) {
        throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                              std::to_string(start));
      }
      tape.backward(loss, store);
      opt.step(store, lr);
      loss_sum += value * static_cast<double>(stop - start);
    }

    EpochRecord rec{epoch, loss_sum / static_cast<double>(order.size()), std::numeric_limits<double>::quiet_NaN(), lr};
    if (val_idx.size() >= 2) {
      const auto pred = predict_records(model, manifest, val_idx, sampler, cfg.patches_eval, cfg.seed, epoch, cache);
      std::vector<double> tgt;
      for (std::size_t i : val_idx) tgt.push_back(targets[i]);
      try {
        rec.val_srocc = srocc(pred, tgt);
      } catch (const UndefinedCorrelationError&) {
      }
    }
    result.history.epochs.push_back(rec);

    const bool better = !have_best || (!std::isnan(rec.val_srocc) &&
                                       (std::isnan(result.history.best_val_srocc) || rec.val_srocc > result.history.best_val_srocc));
    if (val_idx.size() < 2 || better) {
      result.best = store;
      result.history.best_epoch = epoch;
      result.history.best_val_srocc = rec.val_srocc;
      have_best = true;
    }
    if (on_epoch) on_epoch(rec, store);
  }
  result.final = store;
  store = result.best;
  return result;
}

}  // namespace vtamiq
