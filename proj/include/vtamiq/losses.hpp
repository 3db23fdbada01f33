#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "vtamiq/autodiff.hpp"
#include "vtamiq/errors.hpp"

namespace vtamiq {

enum class RankReduction { kMean, kSum };

namespace detail {

inline void require_equal_lengths(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": lengths " + std::to_string(a) + " and " + std::to_string(b) + " differ");
  }
}

}  // namespace detail

/// Mean absolute error.
template <typename T>
T mae_loss(std::span<const T> predicted, std::span<const T> expected) {
  detail::require_equal_lengths(predicted.size(), expected.size(), "mae_loss");
  if (predicted.empty()) throw DimensionError("mae_loss: empty input");
  T total = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) total += std::abs(predicted[i] - expected[i]);
  return total / T(predicted.size());
}

/// Hinge on disagreeing order between two predictions (y1, y2) and their expected scores
/// (e1, e2). When the orders disagree the loss equals the predicted gap, scaled by
/// |e1 - e2| / (|e1 - e2| + eps).
template <typename T>
T pairwise_rank_loss(T y1, T y2, T e1, T e2, T eps) {
  if (!(eps > T(0))) throw ContractError("pairwise_rank_loss: eps must be positive");
  const T de = e1 - e2;
  return std::max(T(0), -de * (y1 - y2) / (std::abs(de) + eps));
}

/// Mean or sum of the pairwise loss over all N-choose-2 pairs of a batch.
template <typename T>
T batch_rank_loss(std::span<const T> predicted, std::span<const T> expected, T eps,
                  RankReduction reduction = RankReduction::kMean) {
  detail::require_equal_lengths(predicted.size(), expected.size(), "batch_rank_loss");
  const std::size_t n = predicted.size();
  if (n < 2) throw ContractError("batch_rank_loss needs at least two samples");
  T total = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      total += pairwise_rank_loss(predicted[i], predicted[j], expected[i], expected[j], eps);
  if (reduction == RankReduction::kMean) total /= T(n * (n - 1) / 2);
  return total;
}

/// MAE plus the batch ranking loss.
template <typename T>
T total_loss(std::span<const T> predicted, std::span<const T> expected, T eps,
             RankReduction reduction = RankReduction::kMean) {
  return mae_loss(predicted, expected) + batch_rank_loss(predicted, expected, eps, reduction);
}

// Differentiable versions over a column of predictions.

template <typename T>
Var<T> mae_loss(const Var<T>& predicted, const Tensor<T>& expected) {
  detail::require_equal_lengths(predicted.value().size(), expected.size(), "mae_loss");
  auto diff = sub(predicted, predicted.tape->constant(expected.reshaped(predicted.shape())));
  return mean(abs(diff));
}

template <typename T>
Var<T> batch_rank_loss(const Var<T>& predicted, const Tensor<T>& expected, T eps,
                       RankReduction reduction = RankReduction::kMean) {
  const auto& p = predicted.value();
  const T value = batch_rank_loss<T>(p.values(), expected.values(), eps, reduction);
  const std::size_t n = p.size();
  const T factor = reduction == RankReduction::kMean ? T(1) / T(n * (n - 1) / 2) : T(1);
  return predicted.tape->record(
      Tensor<T>::scalar(value), {predicted}, [predicted, expected, eps, factor, n](Tape<T>& t, std::size_t self) {
        const T g = t.grad(self)[0] * factor;
        const auto& p = t.value(predicted.id);
        auto& gp = t.grad_buffer(predicted.id);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = i + 1; j < n; ++j) {
            const T de = expected[i] - expected[j];
            const T w = de / (std::abs(de) + eps);
            if (-w * (p[i] - p[j]) > T(0)) {
              gp[i] -= g * w;
              gp[j] += g * w;
            }
          }
        }
      });
}

template <typename T>
Var<T> total_loss(const Var<T>& predicted, const Tensor<T>& expected, T eps,
                  RankReduction reduction = RankReduction::kMean) {
  return add(mae_loss(predicted, expected), batch_rank_loss(predicted, expected, eps, reduction));
}

}  // namespace vtamiq
