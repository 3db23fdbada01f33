#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vtamiq/errors.hpp"
#include "vtamiq/losses.hpp"
#include "vtamiq/model.hpp"
#include "vtamiq/parameters.hpp"

namespace vtamiq {

template <typename T>
using Objective = std::function<T(const ParameterStore<T>&)>;

/// Central-difference gradient of `f` for every scalar in `store`. The store is perturbed in
/// place and restored. Throws OracleError if two baseline evaluations of f differ.
template <typename T>
std::map<std::string, Tensor<T>> finite_diff_gradient(const Objective<T>& f, ParameterStore<T>& store, T h) {
  if (!(h > T(0))) throw ContractError("finite_diff_gradient: step must be positive");
  const T base1 = f(store);
  const T base2 = f(store);
  if (!(base1 == base2)) {
    throw OracleError("objective is not deterministic: " + std::to_string(base1) + " vs " + std::to_string(base2));
  }
  std::map<std::string, Tensor<T>> out;
  for (auto& p : store) {
    Tensor<T> g(p.value.shape());
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const T orig = p.value[i];
      p.value[i] = orig + h;
      const T up = f(store);
      p.value[i] = orig - h;
      const T down = f(store);
      p.value[i] = orig;
      g[i] = (up - down) / (T(2) * h);
    }
    out.emplace(p.name, std::move(g));
  }
  return out;
}

/// |a - b| / max(|a|, |b|, floor)
template <typename T>
T relative_error(T a, T b, T floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

struct GradientGroupResult {
  std::string name;
  std::size_t count = 0;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
};

struct GradientCheckReport {
  std::vector<GradientGroupResult> groups;  // one per parameter, in store order
  double tolerance = 0.0;
  double max_rel_error = 0.0;
  std::string worst;

  bool passed() const { return max_rel_error < tolerance; }
};

/// Compares analytic gradients already stored in `analytic` against `numeric`.
template <typename T>
GradientCheckReport compare_gradients(const ParameterStore<T>& analytic, const std::map<std::string, Tensor<T>>& numeric,
                                      double tolerance, T floor) {
  GradientCheckReport report;
  report.tolerance = tolerance;
  for (const auto& p : analytic) {
    const auto it = numeric.find(p.name);
    if (it == numeric.end()) throw ContractError("no numeric gradient for '" + p.name + "'");
    GradientGroupResult g{p.name, p.value.size(), 0.0, 0.0};
    for (std::size_t i = 0; i < p.gradient.size(); ++i) {
      const T a = p.gradient[i], n = it->second[i];
      g.max_abs_error = std::max(g.max_abs_error, static_cast<double>(std::abs(a - n)));
      g.max_rel_error = std::max(g.max_rel_error, static_cast<double>(relative_error(a, n, floor)));
    }
    if (g.max_rel_error >= report.max_rel_error) {
      report.max_rel_error = g.max_rel_error;
      report.worst = g.name;
    }
    report.groups.push_back(std::move(g));
  }
  return report;
}

/// A frozen batch of aligned patch sequences with target scores.
template <typename T>
struct PatchBatch {
  std::vector<PatchSequence<T>> refs;
  std::vector<PatchSequence<T>> dists;
  Tensor<T> targets;  // [B]
};

struct GradientCheckOptions {
  double tolerance = 1e-4;
  double step = 1e-5;
  double floor = 1e-5;  // gradients smaller than this are compared in absolute terms
  RankReduction reduction = RankReduction::kMean;
  double rank_eps = 1e-6;
  double fault = 0.0;  // nonzero scales the first analytic gradient by (1 + fault)
};

/// Training loss of `model` on `batch`, evaluated through `store`.
template <typename T>
T batch_loss(const Model<T>& model, const ParameterStore<T>& store, const PatchBatch<T>& batch, RankReduction reduction,
             T rank_eps) {
  Tape<T> tape(store, false);
  auto pred = model.forward(tape, batch.refs, batch.dists);
  return total_loss(pred, batch.targets, rank_eps, reduction).value()[0];
}

/// Backward pass versus central differences on every parameter of `model`.
template <typename T>
GradientCheckReport gradient_check(Model<T>& model, const PatchBatch<T>& batch, const GradientCheckOptions& opt = {}) {
  static_assert(std::is_same_v<T, double>, "gradient checks run in 64-bit precision");
  auto& store = model.parameters();
  store.zero_grad();
  {
    Tape<T> tape(store);
    auto pred = model.forward(tape, batch.refs, batch.dists);
    auto loss = total_loss(pred, batch.targets, static_cast<T>(opt.rank_eps), opt.reduction);
    tape.backward(loss, store);
  }
  if (opt.fault != 0.0 && store.size() > 0) {
    for (auto& g : store[0].gradient.values()) g *= static_cast<T>(1.0 + opt.fault);
    // A zero gradient cannot be scaled into an error; shift it instead.
    store[0].gradient[0] += static_cast<T>(opt.fault);
  }
  Objective<T> f = [&](const ParameterStore<T>& s) {
    return batch_loss(model, s, batch, opt.reduction, static_cast<T>(opt.rank_eps));
  };
  ParameterStore<T> probe = store;
  const auto numeric = finite_diff_gradient(f, probe, static_cast<T>(opt.step));
  return compare_gradients(store, numeric, opt.tolerance, static_cast<T>(opt.floor));
}

}  // namespace vtamiq
