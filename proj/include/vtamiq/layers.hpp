#pragma once

#include <cstddef>
#include <random>
#include <string>

#include "vtamiq/autodiff.hpp"
#include "vtamiq/parameters.hpp"

namespace vtamiq {

inline constexpr double kInitStd = 0.02;

/// y = xW + b with W: [in, out]. Weights start truncated-normal, biases at zero.
template <typename T>
struct Linear {
  std::size_t weight = 0;
  std::size_t bias = 0;
  std::size_t in = 0;
  std::size_t out = 0;

  Linear() = default;
  Linear(ParameterStore<T>& store, const std::string& name, std::size_t in_features, std::size_t out_features,
         std::mt19937_64& rng)
      : in(in_features), out(out_features) {
    weight = store.add(name + ".weight", truncated_normal<T>(Shape{in, out}, kInitStd, rng));
    bias = store.add(name + ".bias", Tensor<T>(Shape{out}));
  }

  Var<T> operator()(Tape<T>& tape, const Var<T>& x) const {
    return affine(x, tape.param(weight), tape.param(bias));
  }
};

template <typename T>
struct LayerNorm {
  std::size_t gamma = 0;
  std::size_t beta = 0;
  T eps = T(1e-6);

  LayerNorm() = default;
  LayerNorm(ParameterStore<T>& store, const std::string& name, std::size_t features, double epsilon)
      : eps(static_cast<T>(epsilon)) {
    gamma = store.add(name + ".gamma", Tensor<T>(Shape{features}, T(1)));
    beta = store.add(name + ".beta", Tensor<T>(Shape{features}));
  }

  Var<T> operator()(Tape<T>& tape, const Var<T>& x) const {
    return layer_norm(x, tape.param(gamma), tape.param(beta), eps);
  }
};

}  // namespace vtamiq
