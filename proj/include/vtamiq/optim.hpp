#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "vtamiq/errors.hpp"
#include "vtamiq/parameters.hpp"

namespace vtamiq {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Adam with decoupled weight decay: p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p).
template <typename T>
class AdamW {
 public:
  explicit AdamW(const ParameterStore<T>& store, AdamWConfig cfg = {}) : cfg_(cfg) {
    m_.reserve(store.size());
    v_.reserve(store.size());
    for (const auto& p : store) {
      m_.emplace_back(p.value.size(), 0.0);
      v_.emplace_back(p.value.size(), 0.0);
    }
  }

  const AdamWConfig& config() const noexcept { return cfg_; }
  std::size_t steps() const noexcept { return t_; }

  void step(ParameterStore<T>& store, double lr) {
    if (store.size() != m_.size()) throw ContractError("AdamW: store layout changed");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    std::size_t k = 0;
    for (auto& p : store) {
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = static_cast<double>(p.gradient[i]);
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
        const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps) + cfg_.weight_decay * static_cast<double>(p.value[i]);
        p.value[i] -= static_cast<T>(lr * update);
      }
      ++k;
    }
  }

 private:
  AdamWConfig cfg_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Step schedule: `initial` for epochs [0, decay_epoch), then divided by `factor`.
inline double step_learning_rate(double initial, std::size_t epoch, std::size_t decay_epoch, double factor) {
  return epoch < decay_epoch ? initial : initial / factor;
}

}  // namespace vtamiq
