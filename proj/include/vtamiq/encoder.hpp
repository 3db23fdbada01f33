#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "vtamiq/autodiff.hpp"
#include "vtamiq/layers.hpp"
#include "vtamiq/model_config.hpp"
#include "vtamiq/patch_sequence.hpp"

namespace vtamiq {

/// Flattens each [p, p, 3] patch (row, column, channel order) and projects it to the hidden size.
template <typename T>
Var<T> embed_patches(Tape<T>& tape, const Tensor<T>& patches, const Linear<T>& projection) {
  if (patches.rank() != 4 || patches.dim(3) != 3 || patches.dim(1) != patches.dim(2)) {
    throw ConfigError("embed_patches: expected [N,p,p,3] patches, got " + shape_string(patches.shape()));
  }
  const std::size_t n = patches.dim(0);
  const std::size_t features = patches.size() / n;
  if (features != projection.in) {
    throw ConfigError("embed_patches: patches carry " + std::to_string(features) + " values, projection expects " +
                      std::to_string(projection.in));
  }
  return projection(tape, tape.constant(patches.reshaped(Shape{n, features})));
}

/// Cell of a G x G positional grid nearest to the patch centre. The boundary u = 1 (or v = 1)
/// falls into the last row (column).
inline std::size_t positional_index(UV uv, std::size_t grid) {
  if (!(uv.u >= 0.0 && uv.u <= 1.0 && uv.v >= 0.0 && uv.v <= 1.0)) {
    throw ContractError("uv coordinate (" + std::to_string(uv.u) + ", " + std::to_string(uv.v) + ") outside [0,1]^2");
  }
  const auto cell = [grid](double x) {
    return std::min(static_cast<std::size_t>(std::floor(x * static_cast<double>(grid))), grid - 1);
  };
  return cell(uv.u) * grid + cell(uv.v);
}

/// Learned class token and one embedding per positional-grid cell.
template <typename T>
struct PositionalTable {
  std::size_t cls = 0;   // [D]
  std::size_t grid = 0;  // [G*G, D]
  std::size_t grid_size = 0;
};

/// Adds each token's grid embedding and prepends the class token: [N, D] -> [N + 1, D].
template <typename T>
Var<T> assemble_sequence(Tape<T>& tape, const Var<T>& tokens, const std::vector<UV>& uv, const PositionalTable<T>& table) {
  if (tokens.shape().at(0) != uv.size()) {
    throw DimensionError("assemble_sequence: " + std::to_string(tokens.shape()[0]) + " tokens but " +
                         std::to_string(uv.size()) + " uv pairs");
  }
  std::vector<std::size_t> cells;
  cells.reserve(uv.size());
  for (const auto& c : uv) cells.push_back(positional_index(c, table.grid_size));
  const std::size_t d = tokens.shape()[1];
  auto positioned = add(tokens, gather_rows(tape.param(table.grid), std::move(cells)));
  auto cls = reshape(tape.param(table.cls), Shape{1, d});
  return concat_rows<T>({cls, positioned});
}

/// softmax(Q K^T / sqrt(dk)) V for Q, K: [n, dk], V: [n, dv].
template <typename T>
Var<T> scaled_dot_product_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v) {
  if (q.shape() != k.shape() || v.shape().at(0) != q.shape().at(0)) {
    throw DimensionError("attention: query " + shape_string(q.shape()) + ", key " + shape_string(k.shape()) +
                         ", value " + shape_string(v.shape()));
  }
  const T inv_sqrt_dk = T(1) / std::sqrt(static_cast<T>(q.shape()[1]));
  auto scores = scale(matmul(q, transpose(k)), inv_sqrt_dk);
  return matmul(softmax(scores), v);
}

template <typename T>
struct MultiHeadAttention {
  Linear<T> query, key, value, output;
  std::size_t heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore<T>& store, const std::string& name, std::size_t hidden, std::size_t num_heads,
                     std::mt19937_64& rng)
      : heads(num_heads) {
    if (num_heads == 0 || hidden % num_heads != 0) {
      throw ConfigError("multi-head attention: hidden size " + std::to_string(hidden) + " not divisible by " +
                        std::to_string(num_heads) + " heads");
    }
    query = Linear<T>(store, name + ".query", hidden, hidden, rng);
    key = Linear<T>(store, name + ".key", hidden, hidden, rng);
    value = Linear<T>(store, name + ".value", hidden, hidden, rng);
    output = Linear<T>(store, name + ".output", hidden, hidden, rng);
  }

  Var<T> operator()(Tape<T>& tape, const Var<T>& x) const {
    const std::size_t hidden = x.shape().at(1);
    const std::size_t dk = hidden / heads;
    auto q = query(tape, x);
    auto k = key(tape, x);
    auto v = value(tape, x);
    if (heads == 1) return output(tape, scaled_dot_product_attention(q, k, v));
    std::vector<Var<T>> per_head;
    per_head.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      per_head.push_back(scaled_dot_product_attention(slice_cols(q, h * dk, dk), slice_cols(k, h * dk, dk),
                                                      slice_cols(v, h * dk, dk)));
    }
    return output(tape, concat_cols(per_head));
  }
};

/// Pre-norm transformer block: x + MHSA(LN(x)), then + MLP(LN(.)).
template <typename T>
struct EncoderLayer {
  LayerNorm<T> norm1, norm2;
  MultiHeadAttention<T> attention;
  Linear<T> mlp_in, mlp_out;

  EncoderLayer() = default;
  EncoderLayer(ParameterStore<T>& store, const std::string& name, const ViTConfig& cfg, std::mt19937_64& rng) {
    norm1 = LayerNorm<T>(store, name + ".norm1", cfg.hidden_size, cfg.norm_eps);
    attention = MultiHeadAttention<T>(store, name + ".attn", cfg.hidden_size, cfg.num_heads, rng);
    norm2 = LayerNorm<T>(store, name + ".norm2", cfg.hidden_size, cfg.norm_eps);
    mlp_in = Linear<T>(store, name + ".mlp.fc1", cfg.hidden_size, cfg.mlp_ratio * cfg.hidden_size, rng);
    mlp_out = Linear<T>(store, name + ".mlp.fc2", cfg.mlp_ratio * cfg.hidden_size, cfg.hidden_size, rng);
  }

  Var<T> operator()(Tape<T>& tape, const Var<T>& x) const {
    auto h = add(x, attention(tape, norm1(tape, x)));
    return add(h, mlp_out(tape, gelu(mlp_in(tape, norm2(tape, h)))));
  }
};

/// Transformer over an unordered, uv-annotated patch set; the class-token output is the image
/// representation.
template <typename T>
class VitEncoder {
 public:
  VitEncoder() = default;
  VitEncoder(ParameterStore<T>& store, const ViTConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
    cfg.validate();
    embedding_ = Linear<T>(store, "encoder.patch_embed", cfg.patch_features(), cfg.hidden_size, rng);
    table_.grid_size = cfg.pos_grid;
    table_.cls = store.add("encoder.pos.cls", truncated_normal<T>(Shape{cfg.hidden_size}, kInitStd, rng));
    table_.grid = store.add("encoder.pos.grid",
                            truncated_normal<T>(Shape{cfg.pos_grid * cfg.pos_grid, cfg.hidden_size}, kInitStd, rng));
    layers_.reserve(cfg.num_layers);
    for (std::size_t i = 0; i < cfg.num_layers; ++i)
      layers_.emplace_back(store, "encoder.layer" + std::to_string(i), cfg, rng);
    final_norm_ = LayerNorm<T>(store, "encoder.norm", cfg.hidden_size, cfg.norm_eps);
  }

  const ViTConfig& config() const noexcept { return cfg_; }
  const PositionalTable<T>& positional_table() const noexcept { return table_; }
  const Linear<T>& patch_embedding() const noexcept { return embedding_; }
  const std::vector<EncoderLayer<T>>& layers() const noexcept { return layers_; }

  /// Returns the normalised class-token vector as a [1, D] row.
  Var<T> operator()(Tape<T>& tape, const PatchSequence<T>& seq) const {
    if (seq.patches.rank() != 4 || seq.patch_size() != cfg_.patch_size) {
      throw ConfigError("encoder expects " + std::to_string(cfg_.patch_size) + "-pixel patches, got shape " +
                        shape_string(seq.patches.shape()));
    }
    auto x = assemble_sequence(tape, embed_patches(tape, seq.patches, embedding_), seq.uv, table_);
    for (const auto& layer : layers_) x = layer(tape, x);
    return final_norm_(tape, slice_rows(x, 0, 1));
  }

 private:
  ViTConfig cfg_;
  Linear<T> embedding_;
  PositionalTable<T> table_;
  std::vector<EncoderLayer<T>> layers_;
  LayerNorm<T> final_norm_;
};

}  // namespace vtamiq
