#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"

using namespace vtamiq;
using vtamiq::testing::random_tensor;

namespace {

Tensor<double> image(std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return random_tensor<double>(Shape{h, w, 3}, rng);
}

double& px(Tensor<double>& t, std::size_t r, std::size_t c, std::size_t ch) { return t[(r * t.dim(1) + c) * 3 + ch]; }
double px(const Tensor<double>& t, std::size_t r, std::size_t c, std::size_t ch) { return t[(r * t.dim(1) + c) * 3 + ch]; }

std::vector<double> copy(std::span<const double> s) { return {s.begin(), s.end()}; }

double grid_sum(const Tensor<double>& t) {
  double s = 0;
  for (double v : t.values()) s += v;
  return s;
}

}  // namespace

TEST(DifferenceMap, MseMatchesDirectWindowMean) {
  const auto a = image(12, 10, 1), b = image(12, 10, 2);
  const std::size_t p = 4;
  const auto d = compute_difference_map(a, b, p);
  ASSERT_EQ(d.shape(), (Shape{9, 7}));
  for (std::size_t r = 0; r < 9; ++r) {
    for (std::size_t c = 0; c < 7; ++c) {
      double s = 0;
      for (std::size_t y = r; y < r + p; ++y)
        for (std::size_t x = c; x < c + p; ++x)
          for (std::size_t ch = 0; ch < 3; ++ch) {
            const double e = px(a, y, x, ch) - px(b, y, x, ch);
            s += e * e;
          }
      EXPECT_NEAR(d(r, c), s / (3.0 * p * p), 1e-12);
    }
  }
}

TEST(DifferenceMap, ZeroForIdenticalImagesUnderBothMetrics) {
  const auto a = image(10, 10, 3);
  const auto mse = compute_difference_map(a, a, 3);
  const auto ssim = compute_difference_map(a, a, 3, DiffMetric::kSsimLocal);
  for (double v : mse.values()) EXPECT_EQ(v, 0.0);
  for (double v : ssim.values()) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(DifferenceMap, SsimLocalizesADistortedRegion) {
  auto a = image(16, 16, 4);
  auto b = a;
  for (std::size_t y = 10; y < 16; ++y)
    for (std::size_t x = 10; x < 16; ++x)
      for (std::size_t ch = 0; ch < 3; ++ch) px(b, y, x, ch) = 0.3;
  const auto d = compute_difference_map(a, b, 4, DiffMetric::kSsimLocal);
  EXPECT_NEAR(d(0, 0), 0.0, 1e-12);
  EXPECT_GT(d(12, 12), 0.5);
}

TEST(DifferenceMap, RejectsMismatchedImages) {
  EXPECT_THROW(compute_difference_map(image(8, 8, 1), image(8, 9, 2), 4), DimensionError);
  EXPECT_THROW(compute_difference_map(image(8, 8, 1), image(8, 8, 2), 9), ConfigError);
  EXPECT_THROW(compute_difference_map(Tensor<double>(Shape{8, 8}), Tensor<double>(Shape{8, 8}), 2), DimensionError);
}

TEST(CenterBias, NormalisedAndPeakedAtTheCentre) {
  const auto m = compute_center_bias_map(21, 21, 5, 0.25);
  EXPECT_NEAR(grid_sum(m), 1.0, 1e-12);
  // Window origin 8 puts the patch centre at 10.5, the image centre.
  for (double v : m.values()) EXPECT_LE(v, m(8, 8));
  EXPECT_NEAR(m(0, 8), m(16, 8), 1e-15);
  EXPECT_THROW(compute_center_bias_map(21, 21, 5, 0.0), ConfigError);
}

TEST(ProbabilityMap, SumsToOneForVariousWeights) {
  const auto a = image(20, 24, 5), b = image(20, 24, 6);
  for (auto [al, be, ga] : {std::tuple{0.2, 0.3, 0.5}, {1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}, {3.0, 1.0, 2.0}}) {
    SamplerConfig cfg;
    cfg.alpha = al;
    cfg.beta = be;
    cfg.gamma = ga;
    cfg.patch_size = 4;
    const auto m = build_probability_map(a, b, cfg);
    EXPECT_EQ(m.rows(), 17u);
    EXPECT_EQ(m.cols(), 21u);
    EXPECT_NEAR(grid_sum(m.grid), 1.0, 1e-12);
    for (double v : m.grid.values()) EXPECT_GE(v, 0.0);
  }
}

TEST(ProbabilityMap, UniformConfigIsFlat) {
  const auto a = image(9, 9, 7);
  const auto m = build_probability_map(a, image(9, 9, 8), SamplerConfig::uniform(3));
  for (double v : m.grid.values()) EXPECT_DOUBLE_EQ(v, 1.0 / 49.0);
}

TEST(ProbabilityMap, IdenticalPairWithOnlyDifferenceWeightFallsBackToUniform) {
  SamplerConfig cfg;
  cfg.alpha = 0;
  cfg.beta = 0;
  cfg.gamma = 1;
  cfg.patch_size = 3;
  const auto a = image(9, 9, 9);
  const auto m = build_probability_map(a, a, cfg);
  for (double v : m.grid.values()) EXPECT_DOUBLE_EQ(v, 1.0 / 49.0);
}

TEST(ProbabilityMap, InvalidConfigRejected) {
  SamplerConfig cfg;
  cfg.alpha = -0.1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = SamplerConfig{};
  cfg.alpha = cfg.beta = cfg.gamma = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = SamplerConfig{};
  cfg.patch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Sampling, DrawsFollowAPointMass) {
  ProbabilityMap m{Tensor<double>(Shape{3, 4}), 2, 4, 5};
  m.grid(1, 2) = 1.0;
  std::mt19937_64 rng(1);
  for (const auto& o : sample_origins(m, 200, rng)) EXPECT_EQ(o, (PatchOrigin{1, 2}));
}

TEST(Sampling, PairsShareOriginsAndAreDeterministic) {
  const auto a = image(16, 16, 10), b = image(16, 16, 11);
  SamplerConfig cfg;
  cfg.patch_size = 4;
  const auto map = build_probability_map(a, b, cfg);
  const auto [ra, da] = sample_patches(a, b, map, 32, 77);
  const auto [rb, db] = sample_patches(a, b, map, 32, 77);
  EXPECT_EQ(ra.origins, da.origins);
  EXPECT_EQ(ra.uv, da.uv);
  EXPECT_EQ(ra.origins, rb.origins);
  EXPECT_EQ(copy(ra.patches.values()), copy(rb.patches.values()));
  for (std::size_t k = 0; k < ra.count(); ++k) {
    const auto o = ra.origins[k];
    EXPECT_EQ(ra.patches[((k * 4 + 1) * 4 + 2) * 3 + 1], px(a, o.row + 1, o.col + 2, 1));
    EXPECT_EQ(da.patches[((k * 4 + 3) * 4 + 0) * 3 + 2], px(b, o.row + 3, o.col, 2));
    EXPECT_EQ(ra.uv[k], patch_center_uv(o, 4, 16, 16));
  }
}

TEST(Sampling, RejectsBadRequests) {
  const auto a = image(16, 16, 12);
  SamplerConfig cfg;
  cfg.patch_size = 4;
  const auto map = build_probability_map(a, a, cfg);
  EXPECT_THROW(sample_patches(a, a, map, 0, 1), ContractError);
  EXPECT_THROW(sample_patches(a, image(16, 15, 13), map, 4, 1), DimensionError);
  EXPECT_THROW(sample_patches(image(20, 16, 14), image(20, 16, 15), map, 4, 1), DimensionError);
}

TEST(Tiling, CoversTheImageInRasterOrder) {
  const auto a = image(10, 13, 16);
  const auto t = tile_patches(a, 4);
  ASSERT_EQ(t.count(), 6u);  // 2 rows x 3 cols; remainder dropped
  EXPECT_EQ(t.origins.front(), (PatchOrigin{0, 0}));
  EXPECT_EQ(t.origins[1], (PatchOrigin{0, 4}));
  EXPECT_EQ(t.origins.back(), (PatchOrigin{4, 8}));
}

TEST(PatchUv, CentresAreNormalised) {
  const auto uv = patch_center_uv({0, 28}, 4, 32, 32);
  EXPECT_DOUBLE_EQ(uv.u, 2.0 / 32.0);
  EXPECT_DOUBLE_EQ(uv.v, 30.0 / 32.0);
  EXPECT_THROW(extract_patches(image(8, 8, 17), 4, {{5, 0}}), ContractError);
}
