#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "vtamiq/errors.hpp"
#include "vtamiq/parameters.hpp"
#include "vtamiq/tensor.hpp"

namespace vtamiq {

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(id); }
  const Shape& shape() const { return value().shape(); }
};

/// Reverse-mode gradient tape. Nodes are appended in evaluation order, so walking them
/// backwards is a valid topological order. One tape serves one forward/backward pass.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  /// Parameters read through this tape come from `store`. With `track_gradients` false the
  /// tape records values only, which is all inference needs.
  explicit Tape(const ParameterStore<T>& store, bool track_gradients = true)
      : store_(&store), tracking_(track_gradients) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value) { return push(std::move(value), false, {}, kNoParam); }

  Var<T> param(std::size_t index) {
    if (param_nodes_.size() < store_->size()) param_nodes_.resize(store_->size(), kNoNode);
    if (param_nodes_[index] == kNoNode) {
      param_nodes_[index] = push((*store_)[index].value, tracking_, {}, index).id;
    }
    return Var<T>{this, param_nodes_[index]};
  }

  Var<T> param(const std::string& name) { return param(store_->index_of(name)); }

  /// Appends an operation result. `backward` is kept only if some input needs a gradient.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn backward) {
    return record(std::move(value), std::vector<Var<T>>(inputs), std::move(backward));
  }

  Var<T> record(Tensor<T> value, const std::vector<Var<T>>& inputs, BackwardFn backward) {
    bool needs = false;
    for (const auto& in : inputs) {
      if (in.tape != this) throw ContractError("operation mixes values from different tapes");
      needs = needs || nodes_[in.id].requires_grad;
    }
    Var<T> v = push(std::move(value), needs, {}, kNoParam);
    if (needs) nodes_[v.id].backward = std::move(backward);
    return v;
  }

  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(const Var<T>& v) const { return nodes_[v.id].requires_grad; }
  std::size_t node_count() const noexcept { return nodes_.size(); }

  /// Upstream gradient of node `id`; valid inside a backward callback.
  const Tensor<T>& grad(std::size_t id) const { return grads_[id]; }

  /// Accumulation buffer for node `id`, allocated on first use.
  Tensor<T>& grad_buffer(std::size_t id) {
    if (grads_[id].empty()) grads_[id] = Tensor<T>(nodes_[id].value.shape());
    return grads_[id];
  }

  /// Propagates d(loss)/d(node) back to every parameter read through this tape and adds it
  /// to the matching Parameter::gradient in `store`.
  void backward(const Var<T>& loss, ParameterStore<T>& store) {
    if (&store != store_) throw ContractError("backward into a store the tape did not read from");
    if (loss.tape != this) throw ContractError("loss was not recorded on this tape");
    if (nodes_[loss.id].value.size() != 1) {
      throw ContractError("backward requires a scalar loss, got shape " +
                          shape_string(nodes_[loss.id].value.shape()));
    }
    grads_.assign(nodes_.size(), Tensor<T>());
    if (!nodes_[loss.id].requires_grad) return;
    grads_[loss.id] = Tensor<T>(nodes_[loss.id].value.shape(), T(1));
    for (std::size_t id = loss.id + 1; id-- > 0;) {
      Node& node = nodes_[id];
      if (grads_[id].empty()) continue;
      if (node.backward) node.backward(*this, id);
      if (node.param != kNoParam) {
        auto dst = store[node.param].gradient.values();
        const auto src = grads_[id].values();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
      }
    }
  }

 private:
  static constexpr std::size_t kNoParam = static_cast<std::size_t>(-1);
  static constexpr std::size_t kNoNode = static_cast<std::size_t>(-1);

  struct Node {
    Tensor<T> value;
    bool requires_grad = false;
    BackwardFn backward;
    std::size_t param = kNoParam;
  };

  Var<T> push(Tensor<T> value, bool requires_grad, BackwardFn fn, std::size_t param) {
    nodes_.push_back(Node{std::move(value), requires_grad, std::move(fn), param});
    return Var<T>{this, nodes_.size() - 1};
  }

  const ParameterStore<T>* store_;
  bool tracking_;
  std::vector<Node> nodes_;
  std::vector<Tensor<T>> grads_;
  std::vector<std::size_t> param_nodes_;
};

namespace detail {

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
}

template <typename T>
void require_rank2(const Var<T>& a, const char* op) {
  if (a.value().rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " + shape_string(a.shape()));
  }
}

template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// c[m,n] += a[m,k] * b[k,n]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = a[i * k + p];
      if (aip == T(0)) continue;
      const T* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// c[m,k] += g[m,n] * b[k,n]^T
template <typename T>
void gemm_nt(const T* g, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* gi = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T* bp = b + p * n;
      T acc = 0;
      for (std::size_t j = 0; j < n; ++j) acc += gi[j] * bp[j];
      c[i * k + p] += acc;
    }
  }
}

// c[k,n] += a[m,k]^T * g[m,n]
template <typename T>
void gemm_tn(const T* a, const T* g, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* gi = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = a[i * k + p];
      if (aip == T(0)) continue;
      T* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += aip * gi[j];
    }
  }
}

template <typename T>
T gelu_value(T x) {
  constexpr T c = T(0.7978845608028654);  // sqrt(2/pi)
  const T inner = c * (x + T(0.044715) * x * x * x);
  return T(0.5) * x * (T(1) + std::tanh(inner));
}

template <typename T>
T gelu_derivative(T x) {
  constexpr T c = T(0.7978845608028654);
  const T inner = c * (x + T(0.044715) * x * x * x);
  const T t = std::tanh(inner);
  return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * c * (T(1) + T(3) * T(0.044715) * x * x);
}

template <typename T>
T sigmoid_value(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace detail

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a, b, "add");
  Tensor<T> out = a.value();
  detail::accumulate(out, b.value());
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& t, std::size_t self) {
    if (t.requires_grad(a)) detail::accumulate(t.grad_buffer(a.id), t.grad(self));
    if (t.requires_grad(b)) detail::accumulate(t.grad_buffer(b.id), t.grad(self));
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a, b, "sub");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(a)) detail::accumulate(t.grad_buffer(a.id), g);
    if (t.requires_grad(b)) {
      auto& gb = t.grad_buffer(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

/// Elementwise (Hadamard) product.
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.tape->record(std::move(out), {a, b}, [a, b](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(a)) {
      auto& ga = t.grad_buffer(a.id);
      const auto& bv = t.value(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(b)) {
      auto& gb = t.grad_buffer(b.id);
      const auto& av = t.value(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v *= factor;
  return a.tape->record(std::move(out), {a}, [a, factor](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  Tensor<T> out = a.value().reshaped(std::move(shape));
  return a.tape->record(std::move(out), {a}, [a](Tape<T>& t, std::size_t self) {
    detail::accumulate(t.grad_buffer(a.id), t.grad(self));
  });
}

/// a[m,k] * b[k,n]
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  detail::require_rank2(a, "matmul");
  detail::require_rank2(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions of " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " disagree");
  }
  Tensor<T> out(Shape{m, n});
  detail::gemm_nn(a.value().data(), b.value().data(), out.data(), m, k, n);
  return a.tape->record(std::move(out), {a, b}, [a, b, m, k, n](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(a)) detail::gemm_nt(g.data(), t.value(b.id).data(), t.grad_buffer(a.id).data(), m, k, n);
    if (t.requires_grad(b)) detail::gemm_tn(t.value(a.id).data(), g.data(), t.grad_buffer(b.id).data(), m, k, n);
  });
}

template <typename T>
Var<T> transpose(const Var<T>& a) {
  detail::require_rank2(a, "transpose");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor<T> out(Shape{n, m});
  const auto& av = a.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return a.tape->record(std::move(out), {a}, [a, m, n](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
  });
}

/// y = xW + b over the last axis of x, broadcast across leading axes.
template <typename T>
Var<T> affine(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  detail::require_rank2(w, "affine");
  const std::size_t n = x.value().cols(), rows = x.value().rows();
  const std::size_t m = w.shape()[1];
  if (w.shape()[0] != n || b.value().rank() != 1 || b.shape()[0] != m) {
    throw DimensionError("affine: input " + shape_string(x.shape()) + " with weight " +
                         shape_string(w.shape()) + " and bias " + shape_string(b.shape()));
  }
  Shape out_shape = x.shape();
  out_shape.back() = m;
  Tensor<T> out(out_shape);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy(b.value().data(), b.value().data() + m, out.data() + r * m);
  detail::gemm_nn(x.value().data(), w.value().data(), out.data(), rows, n, m);
  return x.tape->record(std::move(out), {x, w, b}, [x, w, b, rows, n, m](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(x)) detail::gemm_nt(g.data(), t.value(w.id).data(), t.grad_buffer(x.id).data(), rows, n, m);
    if (t.requires_grad(w)) detail::gemm_tn(t.value(x.id).data(), g.data(), t.grad_buffer(w.id).data(), rows, n, m);
    if (t.requires_grad(b)) {
      auto& gb = t.grad_buffer(b.id);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < m; ++j) gb[j] += g[r * m + j];
    }
  });
}

/// Softmax along the last axis, stabilised by subtracting the row maximum.
template <typename T>
Var<T> softmax(const Var<T>& a) {
  const std::size_t n = a.value().cols(), rows = a.value().rows();
  Tensor<T> out(a.shape());
  const auto& av = a.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = av.data() + r * n;
    T* o = out.data() + r * n;
    const T mx = *std::max_element(in, in + n);
    T total = 0;
    for (std::size_t j = 0; j < n; ++j) total += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < n; ++j) o[j] /= total;
  }
  return a.tape->record(std::move(out), {a}, [a, rows, n](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& y = t.value(self);
    auto& ga = t.grad_buffer(a.id);
    for (std::size_t r = 0; r < rows; ++r) {
      T dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
      for (std::size_t j = 0; j < n; ++j) ga[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
    }
  });
}

/// Normalises each last-axis row to zero mean and unit variance, then applies gamma and beta.
/// The variance is biased and offset by `eps`, so a constant row maps to beta.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  const std::size_t n = x.value().cols(), rows = x.value().rows();
  if (gamma.value().size() != n || beta.value().size() != n) {
    throw DimensionError("layer_norm: input " + shape_string(x.shape()) + " with gamma " +
                         shape_string(gamma.shape()) + " and beta " + shape_string(beta.shape()));
  }
  Tensor<T> out(x.shape());
  Tensor<T> xhat(x.shape());
  std::vector<T> inv_std(rows);
  const auto& xv = x.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.data() + r * n;
    T mean = 0;
    for (std::size_t j = 0; j < n; ++j) mean += in[j];
    mean /= T(n);
    T var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= T(n);
    inv_std[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      const T h = (in[j] - mean) * inv_std[r];
      xhat[r * n + j] = h;
      out[r * n + j] = gamma.value()[j] * h + beta.value()[j];
    }
  }
  return x.tape->record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, rows, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<T>& t, std::size_t self) {
        const auto& g = t.grad(self);
        if (t.requires_grad(gamma)) {
          auto& gg = t.grad_buffer(gamma.id);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < n; ++j) gg[j] += g[r * n + j] * xhat[r * n + j];
        }
        if (t.requires_grad(beta)) {
          auto& gb = t.grad_buffer(beta.id);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < n; ++j) gb[j] += g[r * n + j];
        }
        if (t.requires_grad(x)) {
          auto& gx = t.grad_buffer(x.id);
          const auto& gm = t.value(gamma.id);
          for (std::size_t r = 0; r < rows; ++r) {
            T mean_d = 0, mean_dh = 0;
            for (std::size_t j = 0; j < n; ++j) {
              const T d = g[r * n + j] * gm[j];
              mean_d += d;
              mean_dh += d * xhat[r * n + j];
            }
            mean_d /= T(n);
            mean_dh /= T(n);
            for (std::size_t j = 0; j < n; ++j) {
              const T d = g[r * n + j] * gm[j];
              gx[r * n + j] += inv_std[r] * (d - mean_d - xhat[r * n + j] * mean_dh);
            }
          }
        }
      });
}

/// Tanh-approximation GELU.
template <typename T>
Var<T> gelu(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v = detail::gelu_value(v);
  return a.tape->record(std::move(out), {a}, [a](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& av = t.value(a.id);
    auto& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * detail::gelu_derivative(av[i]);
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v = detail::sigmoid_value(v);
  return a.tape->record(std::move(out), {a}, [a](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& y = t.value(self);
    auto& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (T(1) - y[i]);
  });
}

template <typename T>
Var<T> abs(const Var<T>& a) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v = std::abs(v);
  return a.tape->record(std::move(out), {a}, [a](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& av = t.value(a.id);
    auto& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += av[i] > T(0) ? g[i] : (av[i] < T(0) ? -g[i] : T(0));
  });
}

/// Columns [start, start + count) of a matrix.
template <typename T>
Var<T> slice_cols(const Var<T>& a, std::size_t start, std::size_t count) {
  detail::require_rank2(a, "slice_cols");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (count == 0 || start + count > n) throw DimensionError("slice_cols: range out of bounds for " + shape_string(a.shape()));
  Tensor<T> out(Shape{m, count});
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(a.value().data() + i * n + start, count, out.data() + i * count);
  return a.tape->record(std::move(out), {a}, [a, m, n, start, count](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) ga[i * n + start + j] += g[i * count + j];
  });
}

/// Rows [start, start + count) of a matrix.
template <typename T>
Var<T> slice_rows(const Var<T>& a, std::size_t start, std::size_t count) {
  detail::require_rank2(a, "slice_rows");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (count == 0 || start + count > m) throw DimensionError("slice_rows: range out of bounds for " + shape_string(a.shape()));
  Tensor<T> out(Shape{count, n});
  std::copy_n(a.value().data() + start * n, count * n, out.data());
  return a.tape->record(std::move(out), {a}, [a, n, start, count](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < count * n; ++i) ga[start * n + i] += g[i];
  });
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts[0].shape().at(0);
  std::size_t total = 0;
  for (const auto& p : parts) {
    detail::require_rank2(p, "concat_cols");
    if (p.shape()[0] != m) throw DimensionError("concat_cols: row counts differ");
    total += p.shape()[1];
  }
  Tensor<T> out(Shape{m, total});
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.shape()[1];
    for (std::size_t i = 0; i < m; ++i) std::copy_n(p.value().data() + i * w, w, out.data() + i * total + off);
    offsets.push_back(off);
    off += w;
  }
  return parts[0].tape->record(std::move(out), parts, [parts, offsets, m, total](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    for (std::size_t k = 0; k < parts.size(); ++k) {
      if (!t.requires_grad(parts[k])) continue;
      const std::size_t w = parts[k].shape()[1];
      auto& gp = t.grad_buffer(parts[k].id);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += g[i * total + offsets[k] + j];
    }
  });
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t n = parts[0].shape().at(1);
  std::size_t total = 0;
  for (const auto& p : parts) {
    detail::require_rank2(p, "concat_rows");
    if (p.shape()[1] != n) throw DimensionError("concat_rows: column counts differ");
    total += p.shape()[0];
  }
  Tensor<T> out(Shape{total, n});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy_n(p.value().data(), p.value().size(), out.data() + off);
    off += p.value().size();
  }
  return parts[0].tape->record(std::move(out), parts, [parts](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    std::size_t off = 0;
    for (const auto& p : parts) {
      const std::size_t len = p.value().size();
      if (t.requires_grad(p)) {
        auto& gp = t.grad_buffer(p.id);
        for (std::size_t i = 0; i < len; ++i) gp[i] += g[off + i];
      }
      off += len;
    }
  });
}

/// out[i] = table[indices[i]]
template <typename T>
Var<T> gather_rows(const Var<T>& table, std::vector<std::size_t> indices) {
  detail::require_rank2(table, "gather_rows");
  const std::size_t rows = table.shape()[0], n = table.shape()[1];
  if (indices.empty()) throw DimensionError("gather_rows: no indices");
  Tensor<T> out(Shape{indices.size(), n});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows) throw ContractError("gather_rows: index out of range");
    std::copy_n(table.value().data() + indices[i] * n, n, out.data() + i * n);
  }
  return table.tape->record(std::move(out), {table}, [table, n, indices = std::move(indices)](Tape<T>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gt = t.grad_buffer(table.id);
    for (std::size_t i = 0; i < indices.size(); ++i)
      for (std::size_t j = 0; j < n; ++j) gt[indices[i] * n + j] += g[i * n + j];
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T total = 0;
  for (T v : a.value().values()) total += v;
  return a.tape->record(Tensor<T>::scalar(total), {a}, [a](Tape<T>& t, std::size_t self) {
    const T g = t.grad(self)[0];
    for (auto& v : t.grad_buffer(a.id).values()) v += g;
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  return scale(sum(a), T(1) / T(a.value().size()));
}

}  // namespace vtamiq
