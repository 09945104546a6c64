#ifndef TARPRO_AUTODIFF_HPP
#define TARPRO_AUTODIFF_HPP

// Tape-free reverse-mode autodiff over dense tensors. Every op builds a node
// that remembers its parents and a backward closure; backward() walks the
// graph in reverse topological order. Nodes that do not depend on any
// parameter carry no parents, so constants stay detached.

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

#include "tarpro/tensor.hpp"

namespace tarpro::ad {

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor<T>& grad_ref() {
    if (grad.size() != value.size()) grad = Tensor<T>(value.shape());
    return grad;
  }
};

template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> n) : node_(std::move(n)) {}

  static Var constant(Tensor<T> v) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(v);
    return Var(std::move(n));
  }
  static Var parameter(Tensor<T> v) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(v);
    n->requires_grad = true;
    return Var(std::move(n));
  }

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  /// Accumulated gradient; empty tensor when nothing flowed into this node.
  const Tensor<T>& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() == node_->value.size() && node_->value.size(); }
  void zero_grad() { node_->grad = Tensor<T>(); }

  Node<T>* get() const noexcept { return node_.get(); }
  const std::shared_ptr<Node<T>>& ptr() const noexcept { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

namespace detail {

template <class T>
Var<T> make(Tensor<T> value, std::vector<Var<T>> parents, std::function<void(Node<T>&)> fn) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  for (const auto& p : parents) n->requires_grad = n->requires_grad || p.requires_grad();
  if (n->requires_grad) {
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.ptr());
    n->backward_fn = std::move(fn);
  }
  return Var<T>(std::move(n));
}

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
Eigen::Map<RowMat<T>> as_mat(Tensor<T>& t, std::size_t r, std::size_t c) {
  return {t.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
}
template <class T>
Eigen::Map<const RowMat<T>> as_mat(const Tensor<T>& t, std::size_t r, std::size_t c) {
  return {t.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
}

inline void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

template <class T, class F, class DF>
Var<T> unary(const Var<T>& a, F f, DF df) {
  Tensor<T> out(a.shape());
  const auto& av = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
  return make<T>(std::move(out), {a}, [df](Node<T>& n) {
    auto& p = *n.parents[0];
    if (!p.requires_grad) return;
    auto& g = p.grad_ref();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * df(p.value[i], n.value[i]);
  });
}

}  // namespace detail

/// Reverse-mode sweep from a scalar root. Gradients accumulate into every
/// reachable node that requires grad.
template <class T>
void backward(const Var<T>& root) {
  if (root.size() != 1) throw std::invalid_argument("backward: root must be a scalar");
  if (!root.requires_grad()) return;
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.get()->grad_ref()[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward_fn && n->grad.size() == n->value.size()) n->backward_fn(*n);
  }
}

template <class T>
Var<T> detach(const Var<T>& a) {
  return Var<T>::constant(a.value());
}

// ---------------------------------------------------------------- linear algebra

/// [m,k] x [k,n]
template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  detail::require(a.value().rank() == 2 && b.value().rank() == 2 && a.shape()[1] == b.shape()[0],
                  "matmul: shape mismatch");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor<T> out(Shape{m, n});
  detail::as_mat(out, m, n).noalias() = detail::as_mat(a.value(), m, k) * detail::as_mat(b.value(), k, n);
  return detail::make<T>(std::move(out), {a, b}, [m, k, n](Node<T>& nd) {
    auto g = detail::as_mat(std::as_const(nd.grad), m, n);
    auto& pa = *nd.parents[0];
    auto& pb = *nd.parents[1];
    if (pa.requires_grad)
      detail::as_mat(pa.grad_ref(), m, k).noalias() += g * detail::as_mat(std::as_const(pb.value), k, n).transpose();
    if (pb.requires_grad)
      detail::as_mat(pb.grad_ref(), k, n).noalias() += detail::as_mat(std::as_const(pa.value), m, k).transpose() * g;
  });
}

/// [m,k] x [n,k]^T, the layout used for weights stored as (out, in).
template <class T>
Var<T> matmul_nt(const Var<T>& a, const Var<T>& b) {
  detail::require(a.value().rank() == 2 && b.value().rank() == 2 && a.shape()[1] == b.shape()[1],
                  "matmul_nt: shape mismatch");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
  Tensor<T> out(Shape{m, n});
  detail::as_mat(out, m, n).noalias() =
      detail::as_mat(a.value(), m, k) * detail::as_mat(b.value(), n, k).transpose();
  return detail::make<T>(std::move(out), {a, b}, [m, k, n](Node<T>& nd) {
    auto g = detail::as_mat(std::as_const(nd.grad), m, n);
    auto& pa = *nd.parents[0];
    auto& pb = *nd.parents[1];
    if (pa.requires_grad)
      detail::as_mat(pa.grad_ref(), m, k).noalias() += g * detail::as_mat(std::as_const(pb.value), n, k);
    if (pb.requires_grad)
      detail::as_mat(pb.grad_ref(), n, k).noalias() += g.transpose() * detail::as_mat(std::as_const(pa.value), m, k);
  });
}

template <class T>
Var<T> transpose(const Var<T>& a) {
  detail::require(a.value().rank() == 2, "transpose: rank 2 required");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor<T> out(Shape{n, m});
  detail::as_mat(out, n, m) = detail::as_mat(a.value(), m, n).transpose();
  return detail::make<T>(std::move(out), {a}, [m, n](Node<T>& nd) {
    auto& p = *nd.parents[0];
    detail::as_mat(p.grad_ref(), m, n) += detail::as_mat(std::as_const(nd.grad), n, m).transpose();
  });
}

// ---------------------------------------------------------------- elementwise

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require(a.shape() == b.shape(), "add: shape mismatch");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return detail::make<T>(std::move(out), {a, b}, [](Node<T>& n) {
    for (auto& p : n.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->grad_ref();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::require(a.shape() == b.shape(), "sub: shape mismatch");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return detail::make<T>(std::move(out), {a, b}, [](Node<T>& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_ref();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_ref();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::require(a.shape() == b.shape(), "mul: shape mismatch");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return detail::make<T>(std::move(out), {a, b}, [](Node<T>& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_ref();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_ref();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pa.value[i];
    }
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  return detail::unary(a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <class T>
Var<T> add_scalar(const Var<T>& a, T s) {
  return detail::unary(a, [s](T x) { return x + s; }, [](T, T) { return T{1}; });
}

/// [m,n] + [n] broadcast over rows.
template <class T>
Var<T> add_rowvec(const Var<T>& a, const Var<T>& b) {
  detail::require(a.value().rank() == 2 && b.size() == a.shape()[1], "add_rowvec: shape mismatch");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += b.value()[j];
  return detail::make<T>(std::move(out), {a, b}, [m, n](Node<T>& nd) {
    auto& pa = *nd.parents[0];
    auto& pb = *nd.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.grad_ref();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += nd.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_ref();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += nd.grad[i * n + j];
    }
  });
}

template <class T>
Var<T> tanh(const Var<T>& a) {
  return detail::unary(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T{1} - y * y; });
}

template <class T>
Var<T> sigmoid(const Var<T>& a) {
  return detail::unary(
      a, [](T x) { return T{1} / (T{1} + std::exp(-x)); }, [](T, T y) { return y * (T{1} - y); });
}

template <class T>
Var<T> square(const Var<T>& a) {
  return detail::unary(a, [](T x) { return x * x; }, [](T x, T) { return T{2} * x; });
}

/// tanh-approximated GELU.
template <class T>
Var<T> gelu(const Var<T>& a) {
  constexpr T c = T(0.7978845608028654);
  constexpr T k = T(0.044715);
  return detail::unary(
      a,
      [](T x) { return T(0.5) * x * (T{1} + std::tanh(c * (x + k * x * x * x))); },
      [](T x, T) {
        const T u = c * (x + k * x * x * x);
        const T t = std::tanh(u);
        const T du = c * (T{1} + T{3} * k * x * x);
        return T(0.5) * (T{1} + t) + T(0.5) * x * (T{1} - t * t) * du;
      });
}

/// Clamp with zero gradient outside [lo, hi].
template <class T>
Var<T> clamp(const Var<T>& a, T lo, T hi) {
  return detail::unary(
      a, [lo, hi](T x) { return std::clamp(x, lo, hi); },
      [lo, hi](T x, T) { return (x >= lo && x <= hi) ? T{1} : T{0}; });
}

// ---------------------------------------------------------------- reductions

template <class T>
Var<T> sum(const Var<T>& a) {
  T s{0};
  for (T v : a.value().vec()) s += v;
  return detail::make<T>(Tensor<T>::scalar(s), {a}, [](Node<T>& n) {
    auto& g = n.parents[0]->grad_ref();
    for (auto& v : g.vec()) v += n.grad[0];
  });
}

template <class T>
Var<T> mean(const Var<T>& a) {
  return scale(sum(a), T{1} / static_cast<T>(a.size()));
}

/// Mean squared difference; the gradient reaches both arguments.
template <class T>
Var<T> mse(const Var<T>& a, const Var<T>& b) {
  detail::require(a.shape() == b.shape(), "mse: shape mismatch");
  const std::size_t n = a.size();
  T s{0};
  for (std::size_t i = 0; i < n; ++i) {
    const T d = a.value()[i] - b.value()[i];
    s += d * d;
  }
  return detail::make<T>(Tensor<T>::scalar(s / static_cast<T>(n)), {a, b}, [n](Node<T>& nd) {
    auto& pa = *nd.parents[0];
    auto& pb = *nd.parents[1];
    const T k = T{2} * nd.grad[0] / static_cast<T>(n);
    if (pa.requires_grad) {
      auto& g = pa.grad_ref();
      for (std::size_t i = 0; i < n; ++i) g[i] += k * (pa.value[i] - pb.value[i]);
    }
    if (pb.requires_grad) {
      auto& g = pb.grad_ref();
      for (std::size_t i = 0; i < n; ++i) g[i] -= k * (pa.value[i] - pb.value[i]);
    }
  });
}

/// Maximum element; the gradient goes to the first argmax.
template <class T>
Var<T> max_all(const Var<T>& a) {
  detail::require(a.size() > 0, "max_all: empty tensor");
  const auto& v = a.value().vec();
  const std::size_t idx = static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
  return detail::make<T>(Tensor<T>::scalar(v[idx]), {a}, [idx](Node<T>& n) {
    n.parents[0]->grad_ref()[idx] += n.grad[0];
  });
}

// ---------------------------------------------------------------- row-wise

template <class T>
Var<T> softmax_rows(const Var<T>& a) {
  detail::require(a.value().rank() == 2, "softmax_rows: rank 2 required");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = a.value().data() + i * n;
    T mx = *std::max_element(row, row + n);
    T s{0};
    for (std::size_t j = 0; j < n; ++j) s += (out[i * n + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= s;
  }
  return detail::make<T>(std::move(out), {a}, [m, n](Node<T>& nd) {
    auto& g = nd.parents[0]->grad_ref();
    for (std::size_t i = 0; i < m; ++i) {
      T dot{0};
      for (std::size_t j = 0; j < n; ++j) dot += nd.grad[i * n + j] * nd.value[i * n + j];
      for (std::size_t j = 0; j < n; ++j)
        g[i * n + j] += nd.value[i * n + j] * (nd.grad[i * n + j] - dot);
    }
  });
}

template <class T>
Var<T> layernorm_rows(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-6)) {
  detail::require(x.value().rank() == 2 && gamma.size() == x.shape()[1] && beta.size() == x.shape()[1],
                  "layernorm_rows: shape mismatch");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  Tensor<T> out(x.shape());
  Tensor<T> xhat(x.shape());
  std::vector<T> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = x.value().data() + i * n;
    T mu{0};
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<T>(n);
    T var{0};
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(n);
    inv_std[i] = T{1} / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (row[j] - mu) * inv_std[i];
      out[i * n + j] = xhat[i * n + j] * gamma.value()[j] + beta.value()[j];
    }
  }
  return detail::make<T>(
      std::move(out), {x, gamma, beta},
      [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& nd) {
        auto& px = *nd.parents[0];
        auto& pg = *nd.parents[1];
        auto& pb = *nd.parents[2];
        if (pg.requires_grad || pb.requires_grad) {
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
              if (pg.requires_grad) pg.grad_ref()[j] += nd.grad[i * n + j] * xhat[i * n + j];
              if (pb.requires_grad) pb.grad_ref()[j] += nd.grad[i * n + j];
            }
        }
        if (!px.requires_grad) return;
        auto& gx = px.grad_ref();
        for (std::size_t i = 0; i < m; ++i) {
          T s1{0}, s2{0};
          for (std::size_t j = 0; j < n; ++j) {
            const T gh = nd.grad[i * n + j] * pg.value[j];
            s1 += gh;
            s2 += gh * xhat[i * n + j];
          }
          for (std::size_t j = 0; j < n; ++j) {
            const T gh = nd.grad[i * n + j] * pg.value[j];
            gx[i * n + j] += inv_std[i] / static_cast<T>(n) *
                             (static_cast<T>(n) * gh - s1 - xhat[i * n + j] * s2);
          }
        }
      });
}

template <class T>
Var<T> slice_cols(const Var<T>& a, std::size_t c0, std::size_t c1) {
  detail::require(a.value().rank() == 2 && c0 <= c1 && c1 <= a.shape()[1], "slice_cols: bad range");
  const std::size_t m = a.shape()[0], n = a.shape()[1], w = c1 - c0;
  Tensor<T> out(Shape{m, w});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = a.value()[i * n + c0 + j];
  return detail::make<T>(std::move(out), {a}, [m, n, w, c0](Node<T>& nd) {
    auto& g = nd.parents[0]->grad_ref();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) g[i * n + c0 + j] += nd.grad[i * w + j];
  });
}

template <class T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  detail::require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t m = parts[0].shape()[0];
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    detail::require(p.value().rank() == 2 && p.shape()[0] == m, "concat_cols: row mismatch");
    widths.push_back(p.shape()[1]);
    total += p.shape()[1];
  }
  Tensor<T> out(Shape{m, total});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < widths[k]; ++j)
        out[i * total + off + j] = parts[k].value()[i * widths[k] + j];
    off += widths[k];
  }
  return detail::make<T>(std::move(out), parts, [m, total, widths](Node<T>& nd) {
    std::size_t o = 0;
    for (std::size_t k = 0; k < nd.parents.size(); ++k) {
      auto& p = *nd.parents[k];
      if (p.requires_grad) {
        auto& g = p.grad_ref();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j) g[i * widths[k] + j] += nd.grad[i * total + o + j];
      }
      o += widths[k];
    }
  });
}

template <class T>
Var<T> reshape(const Var<T>& a, Shape s) {
  Tensor<T> out = a.value().reshaped(std::move(s));
  return detail::make<T>(std::move(out), {a}, [](Node<T>& nd) {
    auto& g = nd.parents[0]->grad_ref();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += nd.grad[i];
  });
}

// ---------------------------------------------------------------- image layout

/// (C,H,W) -> (num_patches, C*p*p). Patches are row-major over the grid;
/// each patch vector is ordered (channel, dy, dx).
inline std::size_t patch_source_index(std::size_t patch, std::size_t k, std::size_t C, std::size_t H,
                                      std::size_t W, std::size_t p) {
  const std::size_t gw = W / p;
  const std::size_t py = patch / gw, px = patch % gw;
  const std::size_t c = k / (p * p), dy = (k / p) % p, dx = k % p;
  (void)C;
  return (c * H + py * p + dy) * W + px * p + dx;
}

template <class T>
Var<T> patchify(const Var<T>& img, std::size_t p) {
  detail::require(img.value().rank() == 3, "patchify: expected (C,H,W)");
  const std::size_t C = img.shape()[0], H = img.shape()[1], W = img.shape()[2];
  detail::require(p > 0 && H % p == 0 && W % p == 0, "patchify: H and W must be divisible by patch size");
  const std::size_t P = (H / p) * (W / p), D = C * p * p;
  Tensor<T> out(Shape{P, D});
  for (std::size_t i = 0; i < P; ++i)
    for (std::size_t k = 0; k < D; ++k) out[i * D + k] = img.value()[patch_source_index(i, k, C, H, W, p)];
  return detail::make<T>(std::move(out), {img}, [C, H, W, p, P, D](Node<T>& nd) {
    auto& g = nd.parents[0]->grad_ref();
    for (std::size_t i = 0; i < P; ++i)
      for (std::size_t k = 0; k < D; ++k) g[patch_source_index(i, k, C, H, W, p)] += nd.grad[i * D + k];
  });
}

template <class T>
Var<T> unpatchify(const Var<T>& tokens, std::size_t C, std::size_t H, std::size_t W, std::size_t p) {
  const std::size_t P = (H / p) * (W / p), D = C * p * p;
  detail::require(tokens.value().rank() == 2 && tokens.shape()[0] == P && tokens.shape()[1] == D,
                  "unpatchify: token layout does not match image shape");
  Tensor<T> out(Shape{C, H, W});
  for (std::size_t i = 0; i < P; ++i)
    for (std::size_t k = 0; k < D; ++k) out[patch_source_index(i, k, C, H, W, p)] = tokens.value()[i * D + k];
  return detail::make<T>(std::move(out), {tokens}, [C, H, W, p, P, D](Node<T>& nd) {
    auto& g = nd.parents[0]->grad_ref();
    for (std::size_t i = 0; i < P; ++i)
      for (std::size_t k = 0; k < D; ++k) g[i * D + k] += nd.grad[patch_source_index(i, k, C, H, W, p)];
  });
}

}  // namespace tarpro::ad

#endif  // TARPRO_AUTODIFF_HPP
