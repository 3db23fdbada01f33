#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "vtamiq/autodiff.hpp"
#include "vtamiq/layers.hpp"
#include "vtamiq/model_config.hpp"

namespace vtamiq {

/// Signed f_ref - f_dist, or its magnitude when `absolute` is set.
template <typename T>
Var<T> feature_difference(const Var<T>& f_ref, const Var<T>& f_dist, bool absolute = false) {
  if (f_ref.shape() != f_dist.shape()) {
    throw DimensionError("feature_difference: shapes " + shape_string(f_ref.shape()) + " and " +
                         shape_string(f_dist.shape()) + " differ");
  }
  auto d = sub(f_ref, f_dist);
  return absolute ? abs(d) : d;
}

/// Squeeze-and-excitation over a feature vector. The squeeze (global pooling) of a vector is
/// the vector itself, so only the excitation bottleneck D -> D/r -> D remains.
template <typename T>
struct ChannelAttention {
  Linear<T> squeeze, excite;

  ChannelAttention() = default;
  ChannelAttention(ParameterStore<T>& store, const std::string& name, std::size_t hidden, std::size_t reduction,
                   std::mt19937_64& rng)
      : squeeze(store, name + ".fc1", hidden, hidden / reduction, rng),
        excite(store, name + ".fc2", hidden / reduction, hidden, rng) {}

  /// Gate values in (0, 1).
  Var<T> weights(Tape<T>& tape, const Var<T>& x) const { return sigmoid(excite(tape, gelu(squeeze(tape, x)))); }

  Var<T> operator()(Tape<T>& tape, const Var<T>& x) const { return mul(x, weights(tape, x)); }
};

/// Residual channel-attention block.
template <typename T>
struct Rcab {
  Linear<T> transform;
  ChannelAttention<T> attention;
  Linear<T> affine_gate;  // used only by GateMode::kAffineGate
  GateMode mode = GateMode::kInputAttention;

  Rcab() = default;
  Rcab(ParameterStore<T>& store, const std::string& name, std::size_t hidden, const DiffNetConfig& cfg,
       std::mt19937_64& rng)
      : mode(cfg.gate) {
    transform = Linear<T>(store, name + ".transform", hidden, hidden, rng);
    if (mode == GateMode::kAffineGate) {
      affine_gate = Linear<T>(store, name + ".gate", hidden, hidden, rng);
    } else {
      attention = ChannelAttention<T>(store, name + ".ca", hidden, cfg.reduction, rng);
    }
  }

  Var<T> operator()(Tape<T>& tape, const Var<T>& x) const {
    switch (mode) {
      case GateMode::kTransformedAttention:
        return add(x, attention(tape, transform(tape, x)));
      case GateMode::kAffineGate:
        return add(x, mul(transform(tape, x), affine_gate(tape, x)));
      case GateMode::kInputAttention:
      default:
        return add(x, mul(transform(tape, x), attention(tape, x)));
    }
  }
};

/// x + U(RCAB_n(...RCAB_1(x)))
template <typename T>
struct ResidualGroup {
  std::vector<Rcab<T>> blocks;
  Linear<T> transform;

  ResidualGroup() = default;
  ResidualGroup(ParameterStore<T>& store, const std::string& name, std::size_t hidden, const DiffNetConfig& cfg,
                std::mt19937_64& rng) {
    blocks.reserve(cfg.n_rcab);
    for (std::size_t i = 0; i < cfg.n_rcab; ++i)
      blocks.emplace_back(store, name + ".rcab" + std::to_string(i), hidden, cfg, rng);
    transform = Linear<T>(store, name + ".transform", hidden, hidden, rng);
  }

  Var<T> operator()(Tape<T>& tape, const Var<T>& x) const {
    Var<T> h = x;
    for (const auto& b : blocks) h = b(tape, h);
    return add(x, transform(tape, h));
  }
};

/// Chain of residual groups with no outer skip connection. Zero groups is the identity.
template <typename T>
struct DiffNet {
  std::vector<ResidualGroup<T>> groups;

  DiffNet() = default;
  DiffNet(ParameterStore<T>& store, std::size_t hidden, const DiffNetConfig& cfg, std::mt19937_64& rng) {
    groups.reserve(cfg.n_rg);
    for (std::size_t i = 0; i < cfg.n_rg; ++i)
      groups.emplace_back(store, "diffnet.rg" + std::to_string(i), hidden, cfg, rng);
  }

  Var<T> operator()(Tape<T>& tape, const Var<T>& x) const {
    Var<T> h = x;
    for (const auto& g : groups) h = g(tape, h);
    return h;
  }
};

/// MLP regressing the modulated difference to one score per row.
template <typename T>
struct QualityHead {
  std::vector<Linear<T>> layers;

  QualityHead() = default;
  QualityHead(ParameterStore<T>& store, std::size_t hidden, const std::vector<std::size_t>& widths,
              std::mt19937_64& rng) {
    std::size_t in = hidden;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      layers.emplace_back(store, "head.fc" + std::to_string(i), in, widths[i], rng);
      in = widths[i];
    }
    layers.emplace_back(store, "head.fc" + std::to_string(widths.size()), in, 1, rng);
  }

  Var<T> operator()(Tape<T>& tape, const Var<T>& x) const {
    Var<T> h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      h = layers[i](tape, h);
      if (i + 1 < layers.size()) h = gelu(h);
    }
    return h;
  }
};

}  // namespace vtamiq
