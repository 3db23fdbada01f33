#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <utility>

#include "vtamiq/dataset.hpp"
#include "vtamiq/sampler.hpp"

namespace vtamiq {

/// Decoded, normalised images keyed by path, plus per-pair probability maps (which depend only
/// on the two images and the sampler settings). Safe to share between threads.
template <typename T>
class ImageCache {
 public:
  explicit ImageCache(NormalizationSpec norm = {}) : norm_(norm) {}

  const NormalizationSpec& normalization() const noexcept { return norm_; }

  /// Registers an in-memory image under `path`; later lookups do not touch the filesystem.
  void insert(const std::filesystem::path& path, Tensor<T> image) {
    std::lock_guard lock(mu_);
    images_[path.lexically_normal().string()] = std::move(image);
  }

  const Tensor<T>& image(const std::filesystem::path& path) {
    const auto key = path.lexically_normal().string();
    {
      std::lock_guard lock(mu_);
      if (auto it = images_.find(key); it != images_.end()) return it->second;
    }
    Tensor<T> img = load_image_normalized<T>(path, norm_);
    std::lock_guard lock(mu_);
    return images_.emplace(key, std::move(img)).first->second;
  }

  /// Reference and distorted image of a record; they must share H x W.
  std::pair<const Tensor<T>*, const Tensor<T>*> pair(const ImageRecord& r) {
    const auto& ref = image(r.reference_path);
    const auto& dist = image(r.distorted_path);
    if (ref.shape() != dist.shape()) {
      throw DimensionError("record '" + r.distorted_path.string() + "': reference " + shape_string(ref.shape()) +
                           " and distorted " + shape_string(dist.shape()) + " differ in size");
    }
    return {&ref, &dist};
  }

  const ProbabilityMap& probability_map(const ImageRecord& r, const SamplerConfig& cfg) {
    const auto key = r.reference_path.lexically_normal().string() + '\n' + r.distorted_path.lexically_normal().string() +
                     '\n' + sampler_key(cfg);
    {
      std::lock_guard lock(mu_);
      if (auto it = maps_.find(key); it != maps_.end()) return it->second;
    }
    auto [ref, dist] = pair(r);
    ProbabilityMap map = build_probability_map(*ref, *dist, cfg);
    std::lock_guard lock(mu_);
    return maps_.emplace(key, std::move(map)).first->second;
  }

 private:
  static std::string sampler_key(const SamplerConfig& c) {
    return std::to_string(c.alpha) + ',' + std::to_string(c.beta) + ',' + std::to_string(c.gamma) + ',' +
           std::to_string(c.sigma_center) + ',' + std::to_string(static_cast<int>(c.diff_metric)) + ',' +
           std::to_string(c.ssim_range) + ',' + std::to_string(c.patch_size);
  }

  NormalizationSpec norm_;
  std::mutex mu_;
  std::map<std::string, Tensor<T>> images_;
  std::map<std::string, ProbabilityMap> maps_;
};

}  // namespace vtamiq
