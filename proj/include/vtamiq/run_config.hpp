#pragma once

#include <array>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vtamiq/dataset.hpp"
#include "vtamiq/errors.hpp"
#include "vtamiq/model_config.hpp"
#include "vtamiq/sampler.hpp"
#include "vtamiq/training.hpp"

namespace vtamiq {

NLOHMANN_JSON_SERIALIZE_ENUM(DiffMetric, {{DiffMetric::kMse, "mse"}, {DiffMetric::kSsimLocal, "ssim"}})
NLOHMANN_JSON_SERIALIZE_ENUM(ScoreDirection, {{ScoreDirection::kHigherIsBetter, "higher_is_better"},
                                              {ScoreDirection::kLowerIsBetter, "lower_is_better"}})

inline void to_json(json& j, const SamplerConfig& c) {
  j = {{"alpha", c.alpha},           {"beta", c.beta},         {"gamma", c.gamma},
       {"sigma_center", c.sigma_center}, {"diff_metric", c.diff_metric}, {"ssim_range", c.ssim_range}};
}

inline void from_json(const json& j, SamplerConfig& c) {
  detail::reject_unknown_keys(j, {"alpha", "beta", "gamma", "sigma_center", "diff_metric", "ssim_range"}, "sampler");
  detail::read_optional(j, "alpha", c.alpha, "sampler");
  detail::read_optional(j, "beta", c.beta, "sampler");
  detail::read_optional(j, "gamma", c.gamma, "sampler");
  detail::read_optional(j, "sigma_center", c.sigma_center, "sampler");
  detail::read_optional(j, "diff_metric", c.diff_metric, "sampler");
  detail::read_optional(j, "ssim_range", c.ssim_range, "sampler");
}

struct DataConfig {
  std::filesystem::path manifest;
  std::string name;  // defaults to the manifest stem
  ScoreDirection direction = ScoreDirection::kHigherIsBetter;
  std::array<double, 3> split{0.6, 0.2, 0.2};  // train, val, test reference fractions
};

struct EvalConfig {
  std::size_t runs = 20;
  std::size_t patches = 1024;
};

/// Everything one experiment needs. Relative paths are resolved against the config file.
struct RunConfig {
  ModelConfig model = ModelConfig::vtamiq_16_6_4_4();
  SamplerConfig sampler;
  TrainConfig train;
  EvalConfig eval;
  std::optional<DataConfig> data;
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;
  std::string precision = "float32";

  void validate() const {
    model.validate();
    sampler.validate();
    train.validate();
    if (precision != "float32" && precision != "float64") throw ConfigError("precision must be float32 or float64");
    if (eval.runs == 0 || eval.patches == 0) throw ConfigError("eval: runs and patches must be positive");
  }

  DatasetManifest load_dataset() const {
    if (!data) throw ConfigError("config has no data section");
    return load_manifest(data->manifest, data->direction, data->name);
  }
};

/// Output root when the config does not name one: $VTAMIQ_OUTPUT_ROOT, else ./vtamiq_out.
inline std::filesystem::path default_output_root() {
  if (const char* env = std::getenv("VTAMIQ_OUTPUT_ROOT"); env && *env) return env;
  return "vtamiq_out";
}

inline RunConfig parse_run_config(const json& j, const std::filesystem::path& base_dir) {
  detail::reject_unknown_keys(j, {"model", "sampler", "train", "eval", "data", "output_dir", "seed", "precision"}, "root");
  RunConfig c;
  auto resolve = [&](const std::filesystem::path& p) { return p.is_relative() ? base_dir / p : p; };
  try {
    if (j.contains("model")) c.model = j.at("model").get<ModelConfig>();
    if (j.contains("sampler")) c.sampler = j.at("sampler").get<SamplerConfig>();
    if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      detail::reject_unknown_keys(e, {"runs", "patches"}, "eval");
      detail::read_optional(e, "runs", c.eval.runs, "eval");
      detail::read_optional(e, "patches", c.eval.patches, "eval");
    }
    if (j.contains("data")) {
      const auto& d = j.at("data");
      detail::reject_unknown_keys(d, {"manifest", "name", "score_direction", "split"}, "data");
      DataConfig dc;
      if (!d.contains("manifest")) throw ConfigError("data.manifest is required");
      dc.manifest = resolve(d.at("manifest").get<std::string>());
      detail::read_optional(d, "name", dc.name, "data");
      detail::read_optional(d, "score_direction", dc.direction, "data");
      detail::read_optional(d, "split", dc.split, "data");
      if (!std::filesystem::exists(dc.manifest)) throw ConfigError("data.manifest '" + dc.manifest.string() + "' does not exist");
      c.data = dc;
    }
    std::string out;
    detail::read_optional(j, "output_dir", out, "root");
    c.output_dir = out.empty() ? default_output_root() : resolve(out);
    detail::read_optional(j, "seed", c.seed, "root");
    detail::read_optional(j, "precision", c.precision, "root");
    if (!(j.contains("train") && j.at("train").contains("seed"))) c.train.seed = c.seed;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.sampler.patch_size = c.model.vit.patch_size;
  c.sampler.seed = c.seed;
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(j, path.parent_path());
}

}  // namespace vtamiq
