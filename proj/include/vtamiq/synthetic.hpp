#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "vtamiq/dataset.hpp"
#include "vtamiq/image_io.hpp"
#include "vtamiq/random.hpp"

namespace vtamiq {

/// Textured RGB test image: a sum of coloured gratings with equal amplitudes, so every image
/// carries similar energy at the frequencies that blur removes.
inline Rgb8Image make_procedural_image(std::size_t height, std::size_t width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto u = [&](double lo, double hi) { return lo + (hi - lo) * uniform01(rng); };
  std::vector<double> img(height * width * 3);
  std::array<double, 3> base{u(0.35, 0.65), u(0.35, 0.65), u(0.35, 0.65)};
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = base[i % 3];

  for (int g = 0; g < 4; ++g) {
    const double freq = u(0.1, 0.3);  // cycles per pixel
    const double theta = u(0, std::numbers::pi);
    const double phase = u(0, 2 * std::numbers::pi);
    const double fy = freq * std::sin(theta), fx = freq * std::cos(theta);
    std::array<double, 3> amp{};
    for (auto& a : amp) a = uniform01(rng) < 0.5 ? -0.08 : 0.08;
    for (std::size_t r = 0; r < height; ++r)
      for (std::size_t c = 0; c < width; ++c) {
        const double s = std::sin(2 * std::numbers::pi * (fy * double(r) + fx * double(c)) + phase);
        for (std::size_t ch = 0; ch < 3; ++ch) img[(r * width + c) * 3 + ch] += amp[ch] * s;
      }
  }
  Rgb8Image out{height, width, std::vector<std::uint8_t>(img.size())};
  for (std::size_t i = 0; i < img.size(); ++i) out.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img[i], 0.0, 1.0) * 255));
  return out;
}

/// Separable Gaussian blur with mirrored borders.
inline Rgb8Image gaussian_blur(const Rgb8Image& img, double sigma) {
  if (!(sigma > 0)) return img;
  const int radius = static_cast<int>(std::ceil(3 * sigma));
  std::vector<double> k(2 * radius + 1);
  double norm = 0;
  for (int i = -radius; i <= radius; ++i) norm += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= norm;
  const auto h = static_cast<long>(img.height), w = static_cast<long>(img.width);
  auto mirror = [](long i, long n) {
    while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
    return i;
  };
  std::vector<double> tmp(img.pixels.size());
  for (long r = 0; r < h; ++r)
    for (long c = 0; c < w; ++c)
      for (long ch = 0; ch < 3; ++ch) {
        double s = 0;
        for (int i = -radius; i <= radius; ++i) s += k[i + radius] * img.pixels[(r * w + mirror(c + i, w)) * 3 + ch];
        tmp[(r * w + c) * 3 + ch] = s;
      }
  Rgb8Image out = img;
  for (long r = 0; r < h; ++r)
    for (long c = 0; c < w; ++c)
      for (long ch = 0; ch < 3; ++ch) {
        double s = 0;
        for (int i = -radius; i <= radius; ++i) s += k[i + radius] * tmp[(mirror(r + i, h) * w + c) * 3 + ch];
        out.pixels[(r * w + c) * 3 + ch] = static_cast<std::uint8_t>(std::lround(std::clamp(s, 0.0, 255.0)));
      }
  return out;
}

/// Additive white Gaussian noise; `sigma` in 8-bit units.
inline Rgb8Image add_gaussian_noise(const Rgb8Image& img, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  Rgb8Image out = img;
  for (auto& p : out.pixels) p = static_cast<std::uint8_t>(std::lround(std::clamp(double(p) + n(rng), 0.0, 255.0)));
  return out;
}

enum class SyntheticDistortion { kBlur, kNoise };

struct SyntheticSpec {
  std::size_t references = 20;
  std::size_t height = 32;
  std::size_t width = 32;
  SyntheticDistortion distortion = SyntheticDistortion::kBlur;
  std::vector<double> levels{0.6, 1.2, 1.8, 2.4, 3.0};  // blur sigma in pixels or noise sigma in 8-bit units
  std::uint64_t seed = 0;
};

/// Writes reference and distorted PNGs plus `manifest.csv` into `dir`. Scores fall strictly with
/// the distortion level (level i of L scores L - i) and do not depend on the reference.
inline DatasetManifest write_synthetic_dataset(const std::filesystem::path& dir, const SyntheticSpec& spec,
                                               const std::string& name = "synthetic") {
  if (spec.references == 0 || spec.levels.empty()) throw ConfigError("synthetic dataset needs references and levels");
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.csv");
  if (!manifest) throw IoError("cannot write '" + (dir / "manifest.csv").string() + "'");
  manifest << "ref_path,dist_path,score,ref_id\n";
  const char* tag = spec.distortion == SyntheticDistortion::kBlur ? "blur" : "noise";
  for (std::size_t r = 0; r < spec.references; ++r) {
    std::ostringstream id;
    id << "ref" << std::setw(3) << std::setfill('0') << r;
    const auto ref = make_procedural_image(spec.height, spec.width, derive_seed(spec.seed, {0x1AA6E, r}));
    write_png(dir / (id.str() + ".png"), ref);
    for (std::size_t l = 0; l < spec.levels.size(); ++l) {
      const auto dist = spec.distortion == SyntheticDistortion::kBlur
                            ? gaussian_blur(ref, spec.levels[l])
                            : add_gaussian_noise(ref, spec.levels[l], derive_seed(spec.seed, {0x7015E, r, l}));
      const std::string file = id.str() + "_" + tag + std::to_string(l) + ".png";
      write_png(dir / file, dist);
      manifest << id.str() << ".png," << file << ',' << (spec.levels.size() - l) << ',' << id.str() << '\n';
    }
  }
  manifest.close();
  return load_manifest(dir / "manifest.csv", ScoreDirection::kHigherIsBetter, name);
}

}  // namespace vtamiq
