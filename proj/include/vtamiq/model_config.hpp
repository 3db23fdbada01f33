#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vtamiq/errors.hpp"

namespace vtamiq {

using json = nlohmann::json;

namespace detail {

/// Rejects keys of `obj` outside `allowed`.
inline void reject_unknown_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                                const std::string& section) {
  if (!obj.is_object()) throw ConfigError("section '" + section + "' must be an object");
  for (const auto& [key, _] : obj.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known) throw ConfigError("unknown key '" + key + "' in section '" + section + "'");
  }
}

template <typename V>
void read_optional(const json& obj, const char* key, V& out, const std::string& section) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<V>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value for '" + section + "." + key + "': " + e.what());
  }
}

}  // namespace detail

struct ViTConfig {
  std::size_t patch_size = 16;
  std::size_t hidden_size = 768;
  std::size_t num_layers = 6;
  std::size_t num_heads = 12;
  std::size_t mlp_ratio = 4;
  std::size_t pos_grid = 14;
  double norm_eps = 1e-6;

  void validate() const {
    if (patch_size == 0 || hidden_size == 0 || num_heads == 0 || mlp_ratio == 0)
      throw ConfigError("vit: sizes must be positive");
    if (num_layers < 1) throw ConfigError("vit: num_layers must be at least 1");
    if (pos_grid < 1) throw ConfigError("vit: pos_grid must be at least 1");
    if (hidden_size % num_heads != 0) {
      throw ConfigError("vit: hidden_size " + std::to_string(hidden_size) + " is not divisible by num_heads " +
                        std::to_string(num_heads));
    }
    if (!(norm_eps > 0)) throw ConfigError("vit: norm_eps must be positive");
  }

  std::size_t head_dim() const { return hidden_size / num_heads; }
  std::size_t patch_features() const { return 3 * patch_size * patch_size; }
};

/// How the gate inside a residual channel-attention block is formed.
enum class GateMode {
  kInputAttention,        // x + U(x) * CA(x)
  kTransformedAttention,  // x + CA(U(x))
  kAffineGate,            // x + U(x) * F(x), CA replaced by a plain affine layer
};

struct DiffNetConfig {
  std::size_t n_rg = 4;
  std::size_t n_rcab = 4;
  std::size_t reduction = 16;
  std::vector<std::size_t> head_widths;  // hidden widths of the regression MLP; empty means {D/2, D/4}
  bool absolute_difference = false;
  GateMode gate = GateMode::kInputAttention;

  void validate(std::size_t hidden) const {
    if (n_rg >= 1 && n_rcab < 1) throw ConfigError("diffnet: n_rcab must be at least 1 when n_rg >= 1");
    if (reduction == 0 || hidden % reduction != 0) {
      throw ConfigError("diffnet: hidden size " + std::to_string(hidden) + " is not divisible by reduction " +
                        std::to_string(reduction));
    }
    for (auto w : resolved_head_widths(hidden))
      if (w == 0) throw ConfigError("diffnet: head widths must be positive");
  }

  std::vector<std::size_t> resolved_head_widths(std::size_t hidden) const {
    if (!head_widths.empty()) return head_widths;
    return {hidden / 2, hidden / 4};
  }
};

NLOHMANN_JSON_SERIALIZE_ENUM(GateMode, {
                                           {GateMode::kInputAttention, "input_attention"},
                                           {GateMode::kTransformedAttention, "transformed_attention"},
                                           {GateMode::kAffineGate, "affine_gate"},
                                       })

struct ModelConfig {
  ViTConfig vit;
  DiffNetConfig diffnet;

  void validate() const {
    vit.validate();
    diffnet.validate(vit.hidden_size);
  }

  /// 16x16 patches, six ViT-Base layers, four residual groups of four blocks.
  static ModelConfig vtamiq_16_6_4_4() { return ModelConfig{}; }

  /// Desk-scale model used by the tests and the toy experiments.
  static ModelConfig tiny() {
    ModelConfig c;
    c.vit = ViTConfig{.patch_size = 4, .hidden_size = 16, .num_layers = 1, .num_heads = 2, .mlp_ratio = 2, .pos_grid = 4};
    c.diffnet.n_rg = 1;
    c.diffnet.n_rcab = 1;
    c.diffnet.reduction = 4;
    return c;
  }
};

inline void to_json(json& j, const ViTConfig& c) {
  j = json{{"patch_size", c.patch_size}, {"hidden_size", c.hidden_size}, {"num_layers", c.num_layers},
           {"num_heads", c.num_heads},   {"mlp_ratio", c.mlp_ratio},     {"pos_grid", c.pos_grid},
           {"norm_eps", c.norm_eps}};
}

inline void from_json(const json& j, ViTConfig& c) {
  detail::reject_unknown_keys(j, {"patch_size", "hidden_size", "num_layers", "num_heads", "mlp_ratio", "pos_grid", "norm_eps"},
                              "vit");
  detail::read_optional(j, "patch_size", c.patch_size, "vit");
  detail::read_optional(j, "hidden_size", c.hidden_size, "vit");
  detail::read_optional(j, "num_layers", c.num_layers, "vit");
  detail::read_optional(j, "num_heads", c.num_heads, "vit");
  detail::read_optional(j, "mlp_ratio", c.mlp_ratio, "vit");
  detail::read_optional(j, "pos_grid", c.pos_grid, "vit");
  detail::read_optional(j, "norm_eps", c.norm_eps, "vit");
}

inline void to_json(json& j, const DiffNetConfig& c) {
  j = json{{"n_rg", c.n_rg},
           {"n_rcab", c.n_rcab},
           {"reduction", c.reduction},
           {"head_widths", c.head_widths},
           {"absolute_difference", c.absolute_difference},
           {"gate", c.gate}};
}

inline void from_json(const json& j, DiffNetConfig& c) {
  detail::reject_unknown_keys(j, {"n_rg", "n_rcab", "reduction", "head_widths", "absolute_difference", "gate"}, "diffnet");
  detail::read_optional(j, "n_rg", c.n_rg, "diffnet");
  detail::read_optional(j, "n_rcab", c.n_rcab, "diffnet");
  detail::read_optional(j, "reduction", c.reduction, "diffnet");
  detail::read_optional(j, "head_widths", c.head_widths, "diffnet");
  detail::read_optional(j, "absolute_difference", c.absolute_difference, "diffnet");
  if (j.contains("gate")) {
    const auto name = j.at("gate").get<std::string>();
    if (name != "input_attention" && name != "transformed_attention" && name != "affine_gate")
      throw ConfigError("unknown diffnet.gate '" + name + "'");
    c.gate = j.at("gate").get<GateMode>();
  }
}

inline void to_json(json& j, const ModelConfig& c) { j = json{{"vit", c.vit}, {"diffnet", c.diffnet}}; }

inline void from_json(const json& j, ModelConfig& c) {
  detail::reject_unknown_keys(j, {"vit", "diffnet"}, "model");
  if (j.contains("vit")) c.vit = j.at("vit").get<ViTConfig>();
  if (j.contains("diffnet")) c.diffnet = j.at("diffnet").get<DiffNetConfig>();
}

}  // namespace vtamiq
