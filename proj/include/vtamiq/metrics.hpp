#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "vtamiq/errors.hpp"

namespace vtamiq {

namespace detail {

inline void require_pair(std::span<const double> x, std::span<const double> y, const char* op) {
  if (x.size() != y.size()) {
    throw DimensionError(std::string(op) + ": lengths " + std::to_string(x.size()) + " and " +
                         std::to_string(y.size()) + " differ");
  }
  if (x.size() < 2) throw ContractError(std::string(op) + ": needs at least two observations");
}

}  // namespace detail

/// 1-based ranks; tied values share the mean of the ranks they span.
inline std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

/// Pearson linear correlation.
inline double plcc(std::span<const double> x, std::span<const double> y) {
  detail::require_pair(x, y, "plcc");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0 || syy == 0) throw UndefinedCorrelationError("plcc: an argument has zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Spearman rank-order correlation: Pearson correlation of average-tie ranks.
inline double srocc(std::span<const double> x, std::span<const double> y) {
  detail::require_pair(x, y, "srocc");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  try {
    return plcc(rx, ry);
  } catch (const UndefinedCorrelationError&) {
    throw UndefinedCorrelationError("srocc: an argument is constant");
  }
}

/// Kendall tau-b, computed with Knight's O(n log n) merge-sort algorithm.
inline double krocc(std::span<const double> x, std::span<const double> y) {
  detail::require_pair(x, y, "krocc");
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
  });

  const auto tie_pairs = [](std::uint64_t t) { return t * (t - 1) / 2; };
  const std::uint64_t n0 = tie_pairs(n);
  std::uint64_t x_ties = 0, joint_ties = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    x_ties += tie_pairs(j - i + 1);
    for (std::size_t k = i; k <= j;) {
      std::size_t l = k;
      while (l + 1 <= j && y[order[l + 1]] == y[order[k]]) ++l;
      joint_ties += tie_pairs(l - k + 1);
      k = l + 1;
    }
    i = j + 1;
  }

  // Bottom-up merge sort of y in x-order; every strict inversion is a discordant pair.
  std::vector<double> ys(n), buf(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = y[order[i]];
  std::uint64_t swaps = 0;
  for (std::size_t width = 1; width < n; width *= 2) {
    for (std::size_t lo = 0; lo < n; lo += 2 * width) {
      const std::size_t mid = std::min(lo + width, n), hi = std::min(lo + 2 * width, n);
      std::size_t i = lo, j = mid, k = lo;
      while (i < mid && j < hi) {
        if (ys[j] < ys[i]) {
          swaps += mid - i;
          buf[k++] = ys[j++];
        } else {
          buf[k++] = ys[i++];
        }
      }
      while (i < mid) buf[k++] = ys[i++];
      while (j < hi) buf[k++] = ys[j++];
    }
    ys.swap(buf);
  }

  std::uint64_t y_ties = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && ys[j + 1] == ys[i]) ++j;
    y_ties += tie_pairs(j - i + 1);
    i = j + 1;
  }

  if (n0 == x_ties || n0 == y_ties) throw UndefinedCorrelationError("krocc: an argument is constant");
  const auto numerator = static_cast<std::int64_t>(n0 - x_ties - y_ties + joint_ties) - 2 * static_cast<std::int64_t>(swaps);
  return static_cast<double>(numerator) / std::sqrt(static_cast<double>(n0 - x_ties) * static_cast<double>(n0 - y_ties));
}

/// f(s) = b1 * (1/2 - 1 / (1 + exp(b2 * (s - b3)))) + b4
struct LogisticParams {
  double b1 = 1, b2 = 1, b3 = 0, b4 = 0;

  double operator()(double s) const {
    return b1 * (0.5 - 1.0 / (1.0 + std::exp(b2 * (s - b3)))) + b4;
  }
  std::array<double, 4> as_array() const { return {b1, b2, b3, b4}; }
  static LogisticParams from_array(const std::array<double, 4>& a) { return {a[0], a[1], a[2], a[3]}; }
};

struct LogisticFit {
  LogisticParams params;
  std::vector<double> mapped;
  double sse = 0;
  std::size_t iterations = 0;
  bool converged = false;
};

struct LogisticFitOptions {
  std::size_t max_iterations = 2000;
  double tolerance = 1e-14;  // relative SSE change that counts as converged
};

namespace detail {

inline double logistic_sse(const LogisticParams& p, std::span<const double> s, std::span<const double> t) {
  double sse = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double r = p(s[i]) - t[i];
    sse += r * r;
  }
  return sse;
}

/// Solves a 4x4 system by Gaussian elimination with partial pivoting; false when singular.
inline bool solve4(std::array<std::array<double, 4>, 4> a, std::array<double, 4> b, std::array<double, 4>& x) {
  for (int c = 0; c < 4; ++c) {
    int piv = c;
    for (int r = c + 1; r < 4; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    if (a[piv][c] == 0 || !std::isfinite(a[piv][c])) return false;
    std::swap(a[piv], a[c]);
    std::swap(b[piv], b[c]);
    for (int r = c + 1; r < 4; ++r) {
      const double f = a[r][c] / a[c][c];
      for (int k = c; k < 4; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  for (int r = 3; r >= 0; --r) {
    double acc = b[r];
    for (int k = r + 1; k < 4; ++k) acc -= a[r][k] * x[k];
    x[r] = acc / a[r][r];
  }
  return true;
}

/// Levenberg-Marquardt with Marquardt's diagonal scaling.
inline LogisticFit levenberg_marquardt(LogisticParams start, std::span<const double> s, std::span<const double> t,
                                       const LogisticFitOptions& opt) {
  LogisticFit fit;
  fit.params = start;
  fit.sse = logistic_sse(start, s, t);
  double lambda = 1e-3;
  for (fit.iterations = 0; fit.iterations < opt.max_iterations; ++fit.iterations) {
    const auto& p = fit.params;
    std::array<std::array<double, 4>, 4> jtj{};
    std::array<double, 4> jtr{};
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double d = s[i] - p.b3;
      const double q = 1.0 / (1.0 + std::exp(p.b2 * d));
      const double qq = q * (1.0 - q);
      const std::array<double, 4> j{0.5 - q, p.b1 * qq * d, -p.b1 * qq * p.b2, 1.0};
      const double r = p(s[i]) - t[i];
      for (int a = 0; a < 4; ++a) {
        jtr[a] += j[a] * r;
        for (int b = 0; b < 4; ++b) jtj[a][b] += j[a] * j[b];
      }
    }
    bool stepped = false;
    while (lambda < 1e20) {
      auto m = jtj;
      for (int a = 0; a < 4; ++a) m[a][a] += lambda * std::max(jtj[a][a], 1e-300);
      std::array<double, 4> neg{-jtr[0], -jtr[1], -jtr[2], -jtr[3]}, delta{};
      if (solve4(m, neg, delta)) {
        auto cand = p.as_array();
        for (int a = 0; a < 4; ++a) cand[a] += delta[a];
        const auto cp = LogisticParams::from_array(cand);
        const double sse = logistic_sse(cp, s, t);
        if (std::isfinite(sse) && sse < fit.sse) {
          const double rel = (fit.sse - sse) / std::max(fit.sse, std::numeric_limits<double>::min());
          fit.params = cp;
          fit.sse = sse;
          lambda = std::max(lambda / 3.0, 1e-12);
          stepped = true;
          if (rel < opt.tolerance) {
            fit.converged = true;
            return fit;
          }
          break;
        }
      }
      lambda *= 4.0;
    }
    if (!stepped) {  // no descent direction left: stationary point
      fit.converged = true;
      return fit;
    }
  }
  return fit;
}

}  // namespace detail

/// Least-squares fit of the 4-parameter monotone logistic mapping predictions onto targets.
/// Two starts are tried: one scaled from the data range and one in the near-linear regime
/// that reproduces the best affine fit. The lower-SSE converged result wins. The returned
/// parameters have b2 >= 0.
inline LogisticFit logistic_fit(std::span<const double> predictions, std::span<const double> targets,
                                const LogisticFitOptions& opt = {}) {
  detail::require_pair(predictions, targets, "logistic_fit");
  const std::size_t n = predictions.size();
  if (n < 5) throw ContractError("logistic_fit: needs at least five observations");
  const auto [pmin, pmax] = std::minmax_element(predictions.begin(), predictions.end());
  const auto [tmin, tmax] = std::minmax_element(targets.begin(), targets.end());
  if (*pmin == *pmax) throw ContractError("logistic_fit: predictions are constant");

  double ms = 0, mt = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ms += predictions[i];
    mt += targets[i];
  }
  ms /= static_cast<double>(n);
  mt /= static_cast<double>(n);
  double sst = 0, sss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sss += (predictions[i] - ms) * (predictions[i] - ms);
    sst += (predictions[i] - ms) * (targets[i] - mt);
  }
  const double slope = sst / sss;
  const double std_s = std::sqrt(sss / static_cast<double>(n));

  std::vector<double> sorted(predictions.begin(), predictions.end());
  std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
  const double median = sorted[n / 2];

  const double direction = slope < 0 ? -1.0 : 1.0;
  const double trange = std::max(*tmax - *tmin, 1e-12);
  const LogisticParams range_start{trange, direction * 4.0 / (*pmax - *pmin), median, mt};
  // Around b3 the logistic is b4 + (b1 * b2 / 4) (s - b3); a tiny b2 makes it the affine fit.
  const double small_b2 = 1e-4 / std_s;
  const LogisticParams linear_start{4.0 * slope / small_b2, small_b2, ms, mt};

  LogisticFit best;
  bool have = false;
  for (const auto& start : {range_start, linear_start}) {
    auto fit = detail::levenberg_marquardt(start, predictions, targets, opt);
    if (!std::isfinite(fit.sse)) continue;
    if (!have || (fit.converged && !best.converged) || (fit.converged == best.converged && fit.sse < best.sse)) {
      best = std::move(fit);
      have = true;
    }
  }
  if (!have || !best.converged) {
    throw FitError("logistic fit did not converge after " + std::to_string(opt.max_iterations) +
                   " iterations; residual SSE " + (have ? std::to_string(best.sse) : std::string("non-finite")));
  }
  if (best.params.b2 < 0) {
    best.params.b1 = -best.params.b1;
    best.params.b2 = -best.params.b2;
  }
  best.mapped.resize(n);
  for (std::size_t i = 0; i < n; ++i) best.mapped[i] = best.params(predictions[i]);
  return best;
}

}  // namespace vtamiq
