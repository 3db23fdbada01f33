#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "vtamiq/errors.hpp"
#include "vtamiq/tensor.hpp"

namespace vtamiq {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> gradient;
};

/// Named trainable tensors in insertion order. Modules refer to entries by index so that a
/// copied store (e.g. a best-epoch snapshot) stays usable by the same model layout.
template <typename T>
class ParameterStore {
 public:
  std::size_t add(std::string name, Tensor<T> value) {
    if (index_.contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    Tensor<T> grad(value.shape());
    index_.emplace(name, params_.size());
    params_.push_back(Parameter<T>{std::move(name), std::move(value), std::move(grad)});
    return params_.size() - 1;
  }

  std::size_t size() const noexcept { return params_.size(); }

  Parameter<T>& operator[](std::size_t i) { return params_.at(i); }
  const Parameter<T>& operator[](std::size_t i) const { return params_.at(i); }

  Parameter<T>& operator[](const std::string& name) { return params_[index_of(name)]; }
  const Parameter<T>& operator[](const std::string& name) const { return params_[index_of(name)]; }

  bool contains(const std::string& name) const { return index_.contains(name); }

  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }

  /// Sum of element counts over all parameters.
  std::size_t total_count() const noexcept {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  /// Element count over parameters whose name starts with `prefix`.
  std::size_t count_with_prefix(std::string_view prefix) const noexcept {
    std::size_t n = 0;
    for (const auto& p : params_)
      if (std::string_view(p.name).starts_with(prefix)) n += p.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.gradient.fill(T(0));
  }

  auto begin() noexcept { return params_.begin(); }
  auto end() noexcept { return params_.end(); }
  auto begin() const noexcept { return params_.begin(); }
  auto end() const noexcept { return params_.end(); }

 private:
  std::vector<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Normal(0, std) truncated to two standard deviations.
template <typename T>
Tensor<T> truncated_normal(Shape shape, double stddev, std::mt19937_64& rng) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& v : t.values()) {
    double z = normal(rng);
    while (std::abs(z) > 2.0) z = normal(rng);
    v = static_cast<T>(z * stddev);
  }
  return t;
}

}  // namespace vtamiq
