#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "vtamiq/autodiff.hpp"
#include "vtamiq/diffnet.hpp"
#include "vtamiq/encoder.hpp"
#include "vtamiq/model_config.hpp"
#include "vtamiq/patch_sequence.hpp"

namespace vtamiq {

struct ParameterCounts {
  std::size_t encoder = 0;     // everything under the ViT, positional table included
  std::size_t positional = 0;  // class token and grid embeddings
  std::size_t diffnet = 0;
  std::size_t head = 0;
  std::size_t total = 0;
};

/// Full-reference quality model: a shared (Siamese) ViT encodes both images, DiffNet modulates
/// the difference of the two class-token vectors and an MLP regresses it to a score.
template <typename T>
class Model {
 public:
  explicit Model(ModelConfig cfg, std::uint64_t seed = 0) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    encoder_ = VitEncoder<T>(params_, cfg_.vit, rng);
    diffnet_ = DiffNet<T>(params_, cfg_.vit.hidden_size, cfg_.diffnet, rng);
    head_ = QualityHead<T>(params_, cfg_.vit.hidden_size, cfg_.diffnet.resolved_head_widths(cfg_.vit.hidden_size), rng);
  }

  const ModelConfig& config() const noexcept { return cfg_; }
  ParameterStore<T>& parameters() noexcept { return params_; }
  const ParameterStore<T>& parameters() const noexcept { return params_; }
  const VitEncoder<T>& encoder() const noexcept { return encoder_; }
  const DiffNet<T>& diffnet() const noexcept { return diffnet_; }
  const QualityHead<T>& head() const noexcept { return head_; }

  /// [1, D] class-token representation.
  Var<T> encode(Tape<T>& tape, const PatchSequence<T>& seq) const { return encoder_(tape, seq); }

  /// Scores rows of reference/distorted feature matrices: [B, D] x [B, D] -> [B, 1].
  Var<T> score_features(Tape<T>& tape, const Var<T>& f_ref, const Var<T>& f_dist) const {
    auto diff = feature_difference(f_ref, f_dist, cfg_.diffnet.absolute_difference);
    return head_(tape, diffnet_(tape, diff));
  }

  /// Predictions for B aligned (reference, distorted) pairs, as a [B, 1] column.
  Var<T> forward(Tape<T>& tape, std::span<const PatchSequence<T>> refs, std::span<const PatchSequence<T>> dists) const {
    if (refs.size() != dists.size() || refs.empty()) {
      throw DimensionError("forward: " + std::to_string(refs.size()) + " references vs " +
                           std::to_string(dists.size()) + " distorted images");
    }
    std::vector<Var<T>> fr, fd;
    fr.reserve(refs.size());
    fd.reserve(refs.size());
    for (std::size_t i = 0; i < refs.size(); ++i) {
      fr.push_back(encode(tape, refs[i]));
      fd.push_back(encode(tape, dists[i]));
    }
    return score_features(tape, concat_rows(fr), concat_rows(fd));
  }

  T predict(const PatchSequence<T>& ref, const PatchSequence<T>& dist) const {
    Tape<T> tape(params_, false);
    return forward(tape, std::span(&ref, 1), std::span(&dist, 1)).value()[0];
  }

  /// D-vector representation of one patch sequence.
  Tensor<T> encode_vector(const PatchSequence<T>& seq) const {
    Tape<T> tape(params_, false);
    const auto& v = encode(tape, seq).value();
    return v.reshaped(Shape{v.size()});
  }

  /// Score from two precomputed representations.
  T predict_quality(const Tensor<T>& f_ref, const Tensor<T>& f_dist) const {
    const std::size_t d = cfg_.vit.hidden_size;
    if (f_ref.size() != d || f_dist.size() != d) {
      throw DimensionError("predict_quality: expected two " + std::to_string(d) + "-vectors");
    }
    Tape<T> tape(params_, false);
    auto a = tape.constant(f_ref.reshaped(Shape{1, d}));
    auto b = tape.constant(f_dist.reshaped(Shape{1, d}));
    return score_features(tape, a, b).value()[0];
  }

  ParameterCounts parameter_counts() const {
    ParameterCounts c;
    c.encoder = params_.count_with_prefix("encoder.");
    c.positional = params_.count_with_prefix("encoder.pos.");
    c.diffnet = params_.count_with_prefix("diffnet.");
    c.head = params_.count_with_prefix("head.");
    c.total = params_.total_count();
    return c;
  }

 private:
  ModelConfig cfg_;
  ParameterStore<T> params_;
  VitEncoder<T> encoder_;
  DiffNet<T> diffnet_;
  QualityHead<T> head_;
};

}  // namespace vtamiq
