#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "vtamiq/errors.hpp"
#include "vtamiq/patch_sequence.hpp"
#include "vtamiq/random.hpp"
#include "vtamiq/tensor.hpp"

namespace vtamiq {

enum class DiffMetric { kMse, kSsimLocal };

/// Context-aware patch sampling: P = alpha * uniform + beta * centre bias + gamma * difference.
struct SamplerConfig {
  double alpha = 0.2;
  double beta = 0.3;
  double gamma = 0.5;
  double sigma_center = 0.25;  // fraction of min(H, W)
  DiffMetric diff_metric = DiffMetric::kMse;
  double ssim_range = 1.0;  // dynamic range L in the SSIM stabilisers (0.01 L)^2, (0.03 L)^2
  std::size_t patch_size = 16;
  std::uint64_t seed = 0;

  void validate() const {
    if (alpha < 0 || beta < 0 || gamma < 0) throw ConfigError("sampler: mixture weights must be nonnegative");
    if (!(alpha + beta + gamma > 0)) throw ConfigError("sampler: alpha + beta + gamma must be positive");
    if (!(sigma_center > 0)) throw ConfigError("sampler: sigma_center must be positive");
    if (patch_size == 0) throw ConfigError("sampler: patch_size must be positive");
  }

  static SamplerConfig uniform(std::size_t patch) {
    SamplerConfig c;
    c.alpha = 1;
    c.beta = 0;
    c.gamma = 0;
    c.patch_size = patch;
    return c;
  }
};

/// Distribution over top-left positions of fully contained p x p windows.
struct ProbabilityMap {
  Tensor<double> grid;  // [H - p + 1, W - p + 1], sums to 1
  std::size_t patch_size = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t rows() const { return grid.dim(0); }
  std::size_t cols() const { return grid.dim(1); }
};

namespace detail {

template <typename T>
void require_image(const Tensor<T>& img, const char* op) {
  if (img.rank() != 3 || img.dim(2) != 3) {
    throw DimensionError(std::string(op) + ": expected an [H,W,3] image, got " + shape_string(img.shape()));
  }
}

inline void require_patch_fits(std::size_t h, std::size_t w, std::size_t p) {
  if (p == 0 || p > h || p > w) {
    throw ConfigError("patch size " + std::to_string(p) + " does not fit a " + std::to_string(h) + "x" +
                      std::to_string(w) + " image");
  }
}

/// Summed-area table with a zero first row and column: [(h + 1) * (w + 1)].
class Integral {
 public:
  Integral(std::size_t h, std::size_t w) : w1_(w + 1), sums_((h + 1) * (w + 1), 0.0) {}

  template <typename F>
  void build(std::size_t h, std::size_t w, F&& value) {
    for (std::size_t r = 0; r < h; ++r) {
      double row = 0;
      for (std::size_t c = 0; c < w; ++c) {
        row += value(r, c);
        sums_[(r + 1) * w1_ + c + 1] = sums_[r * w1_ + c + 1] + row;
      }
    }
  }

  double window(std::size_t r, std::size_t c, std::size_t p) const {
    return sums_[(r + p) * w1_ + c + p] - sums_[r * w1_ + c + p] - sums_[(r + p) * w1_ + c] + sums_[r * w1_ + c];
  }

 private:
  std::size_t w1_;
  std::vector<double> sums_;
};

inline void normalize_in_place(Tensor<double>& t) {
  double total = 0;
  for (double v : t.values()) total += v;
  for (double& v : t.values()) v /= total;
}

}  // namespace detail

/// Local perceptual difference for every valid p x p window: mean squared error over the
/// window and channels, or 1 - SSIM of the window (channel-averaged, clamped at 0).
template <typename T>
Tensor<double> compute_difference_map(const Tensor<T>& ref, const Tensor<T>& dist, std::size_t patch,
                                      DiffMetric metric = DiffMetric::kMse, double ssim_range = 1.0) {
  detail::require_image(ref, "compute_difference_map");
  detail::require_image(dist, "compute_difference_map");
  if (ref.shape() != dist.shape()) {
    throw DimensionError("compute_difference_map: shapes " + shape_string(ref.shape()) + " and " +
                         shape_string(dist.shape()) + " differ");
  }
  const std::size_t h = ref.dim(0), w = ref.dim(1);
  detail::require_patch_fits(h, w, patch);
  const std::size_t hc = h - patch + 1, wc = w - patch + 1;
  Tensor<double> out(Shape{hc, wc});
  const auto px = [&](const Tensor<T>& img, std::size_t r, std::size_t c, std::size_t ch) {
    return static_cast<double>(img[(r * w + c) * 3 + ch]);
  };

  if (metric == DiffMetric::kMse) {
    detail::Integral sq(h, w);
    sq.build(h, w, [&](std::size_t r, std::size_t c) {
      double s = 0;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double d = px(ref, r, c, ch) - px(dist, r, c, ch);
        s += d * d;
      }
      return s;
    });
    const double count = 3.0 * static_cast<double>(patch * patch);
    for (std::size_t r = 0; r < hc; ++r)
      for (std::size_t c = 0; c < wc; ++c) out(r, c) = std::max(0.0, sq.window(r, c, patch) / count);
    return out;
  }

  const double c1 = (0.01 * ssim_range) * (0.01 * ssim_range);
  const double c2 = (0.03 * ssim_range) * (0.03 * ssim_range);
  const double n = static_cast<double>(patch * patch);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    detail::Integral sx(h, w), sy(h, w), sxx(h, w), syy(h, w), sxy(h, w);
    sx.build(h, w, [&](std::size_t r, std::size_t c) { return px(ref, r, c, ch); });
    sy.build(h, w, [&](std::size_t r, std::size_t c) { return px(dist, r, c, ch); });
    sxx.build(h, w, [&](std::size_t r, std::size_t c) { return px(ref, r, c, ch) * px(ref, r, c, ch); });
    syy.build(h, w, [&](std::size_t r, std::size_t c) { return px(dist, r, c, ch) * px(dist, r, c, ch); });
    sxy.build(h, w, [&](std::size_t r, std::size_t c) { return px(ref, r, c, ch) * px(dist, r, c, ch); });
    for (std::size_t r = 0; r < hc; ++r) {
      for (std::size_t c = 0; c < wc; ++c) {
        const double mx = sx.window(r, c, patch) / n, my = sy.window(r, c, patch) / n;
        const double vx = std::max(0.0, sxx.window(r, c, patch) / n - mx * mx);
        const double vy = std::max(0.0, syy.window(r, c, patch) / n - my * my);
        const double cxy = sxy.window(r, c, patch) / n - mx * my;
        const double ssim = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        out(r, c) += (1.0 - ssim) / 3.0;
      }
    }
  }
  for (double& v : out.values()) v = std::max(0.0, v);
  return out;
}

/// Isotropic Gaussian over patch-centre positions around the image centre, summing to 1.
inline Tensor<double> compute_center_bias_map(std::size_t height, std::size_t width, std::size_t patch,
                                              double sigma_center) {
  if (!(sigma_center > 0)) throw ConfigError("sigma_center must be positive");
  detail::require_patch_fits(height, width, patch);
  const std::size_t hc = height - patch + 1, wc = width - patch + 1;
  const double sigma = sigma_center * static_cast<double>(std::min(height, width));
  const double cy = 0.5 * static_cast<double>(height), cx = 0.5 * static_cast<double>(width);
  const double half = 0.5 * static_cast<double>(patch);
  Tensor<double> out(Shape{hc, wc});
  for (std::size_t r = 0; r < hc; ++r) {
    const double dy = static_cast<double>(r) + half - cy;
    for (std::size_t c = 0; c < wc; ++c) {
      const double dx = static_cast<double>(c) + half - cx;
      out(r, c) = std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
    }
  }
  detail::normalize_in_place(out);
  return out;
}

/// Mixes the uniform, centre-bias and normalised difference terms. When the two images do not
/// differ anywhere the difference term is dropped, leaving the (alpha, beta) mixture; if that
/// is empty too the map is uniform.
template <typename T>
ProbabilityMap build_probability_map(const Tensor<T>& ref, const Tensor<T>& dist, const SamplerConfig& cfg) {
  cfg.validate();
  detail::require_image(ref, "build_probability_map");
  const std::size_t h = ref.dim(0), w = ref.dim(1), p = cfg.patch_size;
  detail::require_patch_fits(h, w, p);
  const std::size_t hc = h - p + 1, wc = w - p + 1;

  Tensor<double> diff;
  double diff_total = 0;
  if (cfg.gamma > 0) {
    diff = compute_difference_map(ref, dist, p, cfg.diff_metric, cfg.ssim_range);
    for (double v : diff.values()) diff_total += v;
  } else if (ref.shape() != dist.shape()) {
    throw DimensionError("build_probability_map: image shapes differ");
  }
  const bool use_diff = cfg.gamma > 0 && diff_total > 0;
  const double gamma = use_diff ? cfg.gamma : 0.0;
  double alpha = cfg.alpha;
  const double beta = cfg.beta;
  if (alpha + beta + gamma == 0) alpha = 1.0;

  Tensor<double> center;
  if (beta > 0) center = compute_center_bias_map(h, w, p, cfg.sigma_center);
  const double uniform = 1.0 / static_cast<double>(hc * wc);
  const double total_weight = alpha + beta + gamma;
  const double wa = alpha / total_weight, wb = beta / total_weight, wg = gamma / total_weight;

  ProbabilityMap map{Tensor<double>(Shape{hc, wc}), p, h, w};
  for (std::size_t i = 0; i < hc * wc; ++i) {
    double v = wa * uniform;
    if (beta > 0) v += wb * center[i];
    if (use_diff) v += wg * (diff[i] / diff_total);
    map.grid[i] = v;
  }
  return map;
}

/// Draws `count` window origins i.i.d. (with replacement) from the map.
inline std::vector<PatchOrigin> sample_origins(const ProbabilityMap& map, std::size_t count, std::mt19937_64& rng) {
  const auto& g = map.grid.values();
  std::vector<double> cdf(g.size());
  double acc = 0;
  for (std::size_t i = 0; i < g.size(); ++i) cdf[i] = (acc += g[i]);
  std::vector<PatchOrigin> out;
  out.reserve(count);
  const std::size_t cols = map.cols();
  for (std::size_t k = 0; k < count; ++k) {
    const double u = uniform01(rng) * acc;
    auto idx = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    idx = std::min(idx, g.size() - 1);
    while (g[idx] == 0 && idx > 0) --idx;  // u landed exactly on a boundary
    out.push_back(PatchOrigin{idx / cols, idx % cols});
  }
  return out;
}

/// Samples `count` aligned windows from both images; the two sequences share origins and uv.
template <typename T>
std::pair<PatchSequence<T>, PatchSequence<T>> sample_patches(const Tensor<T>& ref, const Tensor<T>& dist,
                                                             const ProbabilityMap& map, std::size_t count,
                                                             std::uint64_t seed) {
  detail::require_image(ref, "sample_patches");
  if (ref.shape() != dist.shape()) throw DimensionError("sample_patches: image shapes differ");
  if (count == 0) throw ContractError("sample_patches: at least one patch is required");
  detail::require_patch_fits(ref.dim(0), ref.dim(1), map.patch_size);
  if (map.height != ref.dim(0) || map.width != ref.dim(1)) {
    throw DimensionError("sample_patches: probability map was built for a different image size");
  }
  std::mt19937_64 rng(seed);
  const auto origins = sample_origins(map, count, rng);
  return {extract_patches(ref, map.patch_size, origins), extract_patches(dist, map.patch_size, origins)};
}

/// Non-overlapping raster tiling; the bottom/right remainder is dropped.
template <typename T>
PatchSequence<T> tile_patches(const Tensor<T>& image, std::size_t patch) {
  detail::require_image(image, "tile_patches");
  detail::require_patch_fits(image.dim(0), image.dim(1), patch);
  std::vector<PatchOrigin> origins;
  for (std::size_t r = 0; r + patch <= image.dim(0); r += patch)
    for (std::size_t c = 0; c + patch <= image.dim(1); c += patch) origins.push_back({r, c});
  return extract_patches(image, patch, origins);
}

}  // namespace vtamiq
