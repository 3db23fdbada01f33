#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "vtamiq/vtamiq.hpp"

namespace vtamiq::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("vtamiq_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

template <typename T>
Tensor<T> random_tensor(Shape shape, std::mt19937_64& rng, double stddev = 1.0) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> nd(0.0, stddev);
  for (auto& v : t.values()) v = static_cast<T>(nd(rng));
  return t;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, int distinct_levels = 0) {
  std::vector<double> v(n);
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<int> level(0, std::max(distinct_levels - 1, 0));
  for (auto& x : v) x = distinct_levels > 0 ? static_cast<double>(level(rng)) : nd(rng);
  return v;
}

/// Model parameters redrawn from N(0, stddev) so that every path carries signal.
template <typename T>
void scramble_parameters(Model<T>& model, std::uint64_t seed, double stddev = 0.5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, stddev);
  for (auto& p : model.parameters())
    for (auto& v : p.value.values()) v = static_cast<T>(nd(rng));
}

/// Batch of `batch` image pairs, `patches` aligned patches each, for the given patch size.
template <typename T>
PatchBatch<T> random_patch_batch(std::size_t batch, std::size_t patches, std::size_t patch, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  PatchBatch<T> b;
  b.targets = Tensor<T>(Shape{batch});
  const std::size_t side = patch * 4;
  std::uniform_int_distribution<std::size_t> pos(0, side - patch);
  std::normal_distribution<double> nd;
  for (std::size_t i = 0; i < batch; ++i) {
    auto img = random_tensor<T>(Shape{side, side, 3}, rng);
    auto dist = img;
    for (auto& v : dist.values()) v += static_cast<T>(0.3 * nd(rng));
    std::vector<PatchOrigin> origins;
    for (std::size_t k = 0; k < patches; ++k) origins.push_back({pos(rng), pos(rng)});
    b.refs.push_back(extract_patches(img, patch, origins));
    b.dists.push_back(extract_patches(dist, patch, origins));
    b.targets[i] = static_cast<T>(nd(rng));
  }
  return b;
}

/// Settings for the blur-ladder convergence experiment.
struct ToySetup {
  SyntheticSpec data;  // 20 references x 5 blur levels, 32 x 32
  ModelConfig model = ModelConfig::tiny();
  TrainConfig train;
  std::array<double, 3> split{0.75, 0.25, 0.0};  // 15 train, 5 validation references
  std::uint64_t seed = 1;

  ToySetup() {
    model.diffnet.absolute_difference = true;
    train.batch_size = 4;
    train.patches_train = 64;
    train.patches_eval = 256;
    train.epochs = 50;
    train.lr_initial = 2e-3;
    train.lr_decay_epoch = 40;
    train.seed = 3;
  }
};

}  // namespace vtamiq::testing
