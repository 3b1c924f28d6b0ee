#pragma once

// Dense row-major tensors with reverse-mode differentiation.
//
// A Tensor<T> is a cheap handle onto a shared buffer. Every operation that
// involves a tensor with requires_grad builds a tape node; calling backward()
// on a scalar result walks the tape once, in reverse topological order, and
// accumulates gradients into the participating leaves. The tape is
// build-then-consume: a second backward() on the same root throws.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <unordered_set>
#include <vector>

#include "sovnet/errors.hpp"

namespace sovnet {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

inline std::vector<std::size_t> row_major_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// Rejects NaN/Inf in op results when enabled. Off by default; verification
// suites turn it on.
inline bool& checked_mode() {
  static bool flag = false;
  return flag;
}

// Tape recording switch. Evaluation paths disable it to skip node creation.
inline bool& grad_enabled() {
  static thread_local bool flag = true;
  return flag;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_enabled()) { grad_enabled() = false; }
  ~NoGradGuard() { grad_enabled() = prev; }
};

template <typename T>
class Tensor {
 public:
  // parent_grad(i) returns the i-th parent's gradient buffer, or nullptr when
  // that parent does not require grad.
  using ParentGrad = std::function<std::vector<T>*(std::size_t)>;
  using BackwardFn = std::function<void(const std::vector<T>& out_grad, const ParentGrad&)>;

  Tensor() = default;

  static Tensor zeros(Shape shape) {
    return from_data(shape, std::vector<T>(shape_numel(shape), T(0)), false);
  }
  static Tensor full(Shape shape, T value) {
    return from_data(shape, std::vector<T>(shape_numel(shape), value), true);
  }
  static Tensor scalar(T value) { return full({}, value); }
  static Tensor from_data(Shape shape, std::vector<T> data, bool check = true) {
    if (shape_numel(shape) != data.size())
      throw ShapeMismatch("from_data: shape " + shape_str(shape) + " does not match buffer of " +
                          std::to_string(data.size()));
    if (check && checked_mode()) {
      for (T v : data)
        if (!std::isfinite(v)) throw NonFiniteResult("from_data: non-finite value");
    }
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(data);
    return t;
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t size() const { return impl_->data.size(); }
  const std::vector<T>& values() const { return impl_->data; }
  // Direct mutation; meant for leaves (parameters) outside of any live tape.
  std::vector<T>& raw_values() { return impl_->data; }

  T item() const {
    if (size() != 1) throw ShapeMismatch("item: tensor has " + std::to_string(size()) + " elements");
    return impl_->data[0];
  }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    impl_->requires_grad = b;
    return *this;
  }

  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  const std::vector<T>& grad() const {
    ensure_grad(*impl_);
    return impl_->grad;
  }
  std::vector<T>& grad_buffer() {
    ensure_grad(*impl_);
    return impl_->grad;
  }
  void zero_grad() {
    if (impl_) std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
  }

  // Identity of the underlying buffer; used for parameter bookkeeping.
  const void* id() const { return impl_.get(); }

  void backward() {
    if (size() != 1) throw NonScalarRoot("backward: root must be scalar, got " + shape_str(shape()));
    if (impl_->consumed) throw TapeAlreadyConsumed("backward: tape already consumed");
    impl_->consumed = true;
    // Reverse topological order over the tape.
    std::vector<Impl*> order;
    std::unordered_set<Impl*> seen;
    std::vector<std::pair<Impl*, std::size_t>> stack;
    stack.push_back({impl_.get(), 0});
    seen.insert(impl_.get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->parents.size()) {
        Impl* p = node->parents[next++].get();
        if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }
    ensure_grad(*impl_);
    impl_->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Impl* node = *it;
      if (!node->backward) continue;
      auto parent_grad = [node](std::size_t i) -> std::vector<T>* {
        Impl& p = *node->parents[i];
        if (!p.requires_grad) return nullptr;
        ensure_grad(p);
        return &p.grad;
      };
      node->backward(node->grad, parent_grad);
      // Saved state is no longer needed once the node has fired.
      node->backward = nullptr;
    }
  }

  static Tensor make_op(std::vector<Tensor> parents, Shape shape, std::vector<T> data, BackwardFn fn) {
    Tensor t = from_data(std::move(shape), std::move(data));
    bool needs = false;
    if (grad_enabled())
      for (const auto& p : parents) needs |= p.requires_grad();
    if (needs) {
      t.impl_->requires_grad = true;
      t.impl_->parents.reserve(parents.size());
      for (auto& p : parents) t.impl_->parents.push_back(p.impl_);
      t.impl_->backward = std::move(fn);
    }
    return t;
  }

 private:
  struct Impl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
    bool consumed = false;
    std::vector<std::shared_ptr<Impl>> parents;
    BackwardFn backward;
  };

  static void ensure_grad(Impl& i) {
    if (i.grad.size() != i.data.size()) i.grad.assign(i.data.size(), T(0));
  }

  std::shared_ptr<Impl> impl_;
};

// ---------------------------------------------------------------------------
// Broadcasting (trailing-dimension rule)

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  Shape out(std::max(a.size(), b.size()));
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::size_t ea = i < out.size() - a.size() ? 1 : a[i - (out.size() - a.size())];
    std::size_t eb = i < out.size() - b.size() ? 1 : b[i - (out.size() - b.size())];
    if (ea != eb && ea != 1 && eb != 1)
      throw ShapeMismatch("broadcast: " + shape_str(a) + " vs " + shape_str(b));
    out[i] = std::max(ea, eb);
  }
  return out;
}

// Strides of `s` aligned into a broadcast result of rank `out_rank`; broadcast
// axes get stride 0.
inline std::vector<std::size_t> broadcast_strides(const Shape& s, const Shape& out) {
  auto st = row_major_strides(s);
  std::vector<std::size_t> r(out.size(), 0);
  std::size_t off = out.size() - s.size();
  for (std::size_t i = 0; i < s.size(); ++i) r[off + i] = (s[i] == 1 && out[off + i] != 1) ? 0 : st[i];
  return r;
}

namespace detail {

// Sum `grad` (shaped `out`) down to shape `s`, for the backward of broadcasts.
template <typename T>
void reduce_to_shape(const std::vector<T>& grad, const Shape& out, const Shape& s, std::vector<T>& acc) {
  auto bst = broadcast_strides(s, out);
  auto ost = row_major_strides(out);
  std::size_t n = shape_numel(out);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t idx = 0;
    std::size_t rem = flat;
    for (std::size_t d = 0; d < out.size(); ++d) {
      std::size_t c = rem / ost[d];
      rem %= ost[d];
      idx += c * bst[d];
    }
    acc[idx] += grad[flat];
  }
}

template <typename T, typename FwdFn, typename BwdFn>
Tensor<T> binary_elementwise(const Tensor<T>& a, const Tensor<T>& b, FwdFn fwd, BwdFn bwd,
                             const char* /*name*/) {
  Shape out = broadcast_shape(a.shape(), b.shape());
  std::size_t n = shape_numel(out);
  std::vector<T> data(n);
  auto ast = broadcast_strides(a.shape(), out);
  auto bst = broadcast_strides(b.shape(), out);
  auto ost = row_major_strides(out);
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<std::size_t> ai(n), bi(n);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t ia = 0, ib = 0, rem = flat;
    for (std::size_t d = 0; d < out.size(); ++d) {
      std::size_t c = rem / ost[d];
      rem %= ost[d];
      ia += c * ast[d];
      ib += c * bst[d];
    }
    ai[flat] = ia;
    bi[flat] = ib;
    data[flat] = fwd(av[ia], bv[ib]);
  }
  auto backward = [a, b, ai = std::move(ai), bi = std::move(bi), bwd](
                      const std::vector<T>& g, const typename Tensor<T>::ParentGrad& pg) {
    std::vector<T>* ga = pg(0);
    std::vector<T>* gb = pg(1);
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t flat = 0; flat < g.size(); ++flat) {
      T da, db;
      bwd(av[ai[flat]], bv[bi[flat]], g[flat], da, db);
      if (ga) (*ga)[ai[flat]] += da;
      if (gb) (*gb)[bi[flat]] += db;
    }
  };
  return Tensor<T>::make_op({a, b}, std::move(out), std::move(data), std::move(backward));
}

template <typename T, typename FwdFn, typename BwdFn>
Tensor<T> unary_elementwise(const Tensor<T>& a, FwdFn fwd, BwdFn bwd) {
  std::vector<T> data(a.size());
  const auto& av = a.values();
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = fwd(av[i]);
  auto backward = [a, data, bwd](const std::vector<T>& g, const typename Tensor<T>::ParentGrad& pg) {
    std::vector<T>* ga = pg(0);
    if (!ga) return;
    const auto& av = a.values();
    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bwd(av[i], data[i]);
  };
  return Tensor<T>::make_op({a}, a.shape(), std::move(data), std::move(backward));
}

inline int normalize_axis(int axis, std::size_t rank) {
  int r = static_cast<int>(rank);
  if (axis < -r || axis >= r) throw AxisOutOfRange("axis " + std::to_string(axis) + " for rank " + std::to_string(r));
  return axis < 0 ? axis + r : axis;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Arithmetic

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_elementwise(
      a, b, [](T x, T y) { return x + y; },
      [](T, T, T g, T& da, T& db) { da = g; db = g; }, "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_elementwise(
      a, b, [](T x, T y) { return x - y; },
      [](T, T, T g, T& da, T& db) { da = g; db = -g; }, "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_elementwise(
      a, b, [](T x, T y) { return x * y; },
      [](T x, T y, T g, T& da, T& db) { da = g * y; db = g * x; }, "mul");
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  if (checked_mode()) {
    for (T v : b.values())
      if (v == T(0)) throw NonFiniteResult("div: zero divisor");
  }
  return detail::binary_elementwise(
      a, b, [](T x, T y) { return x / y; },
      [](T x, T y, T g, T& da, T& db) {
        da = g / y;
        db = -g * x / (y * y);
      },
      "div");
}

template <typename T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T> Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }

template <typename T> Tensor<T> operator*(const Tensor<T>& a, T s) { return mul(a, Tensor<T>::scalar(s)); }
template <typename T> Tensor<T> operator*(T s, const Tensor<T>& a) { return a * s; }
template <typename T> Tensor<T> operator+(const Tensor<T>& a, T s) { return add(a, Tensor<T>::scalar(s)); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a, T s) { return sub(a, Tensor<T>::scalar(s)); }

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& a, std::vector<int> axes, bool keep = false) {
  std::vector<bool> red(a.rank(), false);
  for (int ax : axes) red[detail::normalize_axis(ax, a.rank())] = true;
  Shape out;
  for (std::size_t d = 0; d < a.rank(); ++d) {
    if (!red[d]) out.push_back(a.shape()[d]);
    else if (keep) out.push_back(1);
  }
  Shape kshape(a.rank());  // kept-rank shape, for index mapping
  for (std::size_t d = 0; d < a.rank(); ++d) kshape[d] = red[d] ? 1 : a.shape()[d];
  auto ast = row_major_strides(a.shape());
  auto kst = row_major_strides(kshape);
  std::size_t n = a.size();
  std::vector<T> data(shape_numel(kshape), T(0));
  std::vector<std::size_t> map(n);
  const auto& av = a.values();
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t rem = flat, idx = 0;
    for (std::size_t d = 0; d < a.rank(); ++d) {
      std::size_t c = rem / ast[d];
      rem %= ast[d];
      if (!red[d]) idx += c * kst[d];
    }
    map[flat] = idx;
    data[idx] += av[flat];
  }
  auto backward = [map = std::move(map)](const std::vector<T>& g, const typename Tensor<T>::ParentGrad& pg) {
    std::vector<T>* ga = pg(0);
    if (!ga) return;
    for (std::size_t flat = 0; flat < map.size(); ++flat) (*ga)[flat] += g[map[flat]];
  };
  return Tensor<T>::make_op({a}, std::move(out), std::move(data), std::move(backward));
}

template <typename T>
Tensor<T> reduce_sum_all(const Tensor<T>& a) {
  std::vector<int> axes(a.rank());
  std::iota(axes.begin(), axes.end(), 0);
  return reduce_sum(a, axes, false);
}

// Max along one axis; the subgradient flows to the first attaining element.
template <typename T>
Tensor<T> reduce_max(const Tensor<T>& a, int axis, bool keep = false) {
  int ax = detail::normalize_axis(axis, a.rank());
  Shape out;
  for (std::size_t d = 0; d < a.rank(); ++d) {
    if (static_cast<int>(d) != ax) out.push_back(a.shape()[d]);
    else if (keep) out.push_back(1);
  }
  std::size_t extent = a.shape()[ax];
  auto ast = row_major_strides(a.shape());
  std::size_t inner = ast[ax];
  std::size_t outer = a.size() / (extent * inner);
  std::vector<T> data(outer * inner);
  std::vector<std::size_t> argmax(outer * inner);
  const auto& av = a.values();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      std::size_t base = o * extent * inner + i;
      T best = av[base];
      std::size_t bestk = 0;
      for (std::size_t k = 1; k < extent; ++k) {
        T v = av[base + k * inner];
        if (v > best) { best = v; bestk = k; }
      }
      data[o * inner + i] = best;
      argmax[o * inner + i] = base + bestk * inner;
    }
  auto backward = [argmax = std::move(argmax)](const std::vector<T>& g, const typename Tensor<T>::ParentGrad& pg) {
    std::vector<T>* ga = pg(0);
    if (!ga) return;
    for (std::size_t j = 0; j < g.size(); ++j) (*ga)[argmax[j]] += g[j];
  };
  return Tensor<T>::make_op({a}, std::move(out), std::move(data), std::move(backward));
}

// sqrt(sum(x^2, axis) + eps). eps > 0 keeps the map differentiable at 0.
template <typename T>
Tensor<T> two_norm(const Tensor<T>& a, int axis, T eps, bool keep = false) {
  int ax = detail::normalize_axis(axis, a.rank());
  Shape out;
  for (std::size_t d = 0; d < a.rank(); ++d) {
    if (static_cast<int>(d) != ax) out.push_back(a.shape()[d]);
    else if (keep) out.push_back(1);
  }
  std::size_t extent = a.shape()[ax];
  auto ast = row_major_strides(a.shape());
  std::size_t inner = ast[ax];
  std::size_t outer = a.size() / (extent * inner);
  std::vector<T> data(outer * inner);
  const auto& av = a.values();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      std::size_t base = o * extent * inner + i;
      T acc = eps;
      for (std::size_t k = 0; k < extent; ++k) {
        T v = av[base + k * inner];
        acc += v * v;
      }
      data[o * inner + i] = std::sqrt(acc);
    }
  auto backward = [a, data, extent, inner](const std::vector<T>& g, const typename Tensor<T>::ParentGrad& pg) {
    std::vector<T>* ga = pg(0);
    if (!ga) return;
    const auto& av = a.values();
    std::size_t outer = av.size() / (extent * inner);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < inner; ++i) {
        std::size_t j = o * inner + i;
        if (data[j] == T(0)) continue;  // eps == 0 evaluation mode at exactly 0
        T scale = g[j] / data[j];
        std::size_t base = o * extent * inner + i;
        for (std::size_t k = 0; k < extent; ++k) (*ga)[base + k * inner] += scale * av[base + k * inner];
      }
  };
  return Tensor<T>::make_op({a}, std::move(out), std::move(data), std::move(backward));
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& a, int axis) {
  int ax = detail::normalize_axis(axis, a.rank());
  std::size_t extent = a.shape()[ax];
  auto ast = row_major_strides(a.shape());
  std::size_t inner = ast[ax];
  std::size_t outer = a.size() / (extent * inner);
  std::vector<T> data(a.size());
  const auto& av = a.values();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      std::size_t base = o * extent * inner + i;
      T mx = av[base];
      for (std::size_t k = 1; k < extent; ++k) mx = std::max(mx, av[base + k * inner]);
      T denom = T(0);
      for (std::size_t k = 0; k < extent; ++k) {
        T e = std::exp(av[base + k * inner] - mx);
        data[base + k * inner] = e;
        denom += e;
      }
      for (std::size_t k = 0; k < extent; ++k) data[base + k * inner] /= denom;
    }
  auto backward = [data, extent, inner](const std::vector<T>& g, const typename Tensor<T>::ParentGrad& pg) {
    std::vector<T>* ga = pg(0);
    if (!ga) return;
    std::size_t outer = data.size() / (extent * inner);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < inner; ++i) {
        std::size_t base = o * extent * inner + i;
        T dot = T(0);
        for (std::size_t k = 0; k < extent; ++k) dot += g[base + k * inner] * data[base + k * inner];
        for (std::size_t k = 0; k < extent; ++k)
          (*ga)[base + k * inner] += data[base + k * inner] * (g[base + k * inner] - dot);
      }
  };
  return Tensor<T>::make_op({a}, a.shape(), std::move(data), std::move(backward));
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities

namespace detail {
template <typename T> constexpr T selu_alpha = T(1.6732632423543772848170429916717L);
template <typename T> constexpr T selu_lambda = T(1.0507009873554804934193349852946L);
}  // namespace detail

template <typename T>
Tensor<T> selu(const Tensor<T>& a) {
  constexpr T al = detail::selu_alpha<T>;
  constexpr T lm = detail::selu_lambda<T>;
  return detail::unary_elementwise(
      a, [=](T x) { return x > T(0) ? lm * x : lm * al * (std::exp(x) - T(1)); },
      [=](T x, T y) { return x > T(0) ? lm : y + lm * al; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return detail::unary_elementwise(
      a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return detail::unary_elementwise(
      a, [](T x) { return T(1) / (T(1) + std::exp(-x)); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
  return detail::unary_elementwise(
      a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

// max(x, floor) elementwise; gradient passes where x > floor.
template <typename T>
Tensor<T> clamp_min(const Tensor<T>& a, T floor) {
  return detail::unary_elementwise(
      a, [=](T x) { return x > floor ? x : floor; }, [=](T x, T) { return x > floor ? T(1) : T(0); });
}

// ---------------------------------------------------------------------------
// Shape manipulation

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.size())
    throw ShapeMismatch("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  auto backward = [](const std::vector<T>& g, const typename Tensor<T>::ParentGrad& pg) {
    std::vector<T>* ga = pg(0);
    if (!ga) return;
    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
  };
  return Tensor<T>::make_op({a}, std::move(shape), a.values(), std::move(backward));
}

// Stack equally-shaped tensors along a new leading axis.
template <typename T>
Tensor<T> stack0(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeMismatch("stack0: empty input");
  const Shape& s = parts[0].shape();
  std::size_t block = parts[0].size();
  for (const auto& p : parts)
    if (p.shape() != s) throw ShapeMismatch("stack0: inhomogeneous shapes");
  Shape out;
  out.push_back(parts.size());
  out.insert(out.end(), s.begin(), s.end());
  std::vector<T> data(parts.size() * block);
  for (std::size_t i = 0; i < parts.size(); ++i)
    std::copy(parts[i].values().begin(), parts[i].values().end(), data.begin() + i * block);
  auto backward = [block, n = parts.size()](const std::vector<T>& g, const typename Tensor<T>::ParentGrad& pg) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<T>* gp = pg(i);
      if (!gp) continue;
      for (std::size_t j = 0; j < block; ++j) (*gp)[j] += g[i * block + j];
    }
  };
  return Tensor<T>::make_op(parts, std::move(out), std::move(data), std::move(backward));
}

// Take sub-tensor `i` along axis 0.
template <typename T>
Tensor<T> index0(const Tensor<T>& a, std::size_t i) {
  if (a.rank() == 0 || i >= a.shape()[0]) throw IndexOutOfRange("index0: index " + std::to_string(i));
  Shape out(a.shape().begin() + 1, a.shape().end());
  std::size_t block = shape_numel(out);
  std::vector<T> data(a.values().begin() + i * block, a.values().begin() + (i + 1) * block);
  auto backward = [i, block](const std::vector<T>& g, const typename Tensor<T>::ParentGrad& pg) {
    std::vector<T>* ga = pg(0);
    if (!ga) return;
    for (std::size_t j = 0; j < block; ++j) (*ga)[i * block + j] += g[j];
  };
  return Tensor<T>::make_op({a}, std::move(out), std::move(data), std::move(backward));
}

// y = W x with W (m, n) and x (n,).
template <typename T>
Tensor<T> matvec(const Tensor<T>& w, const Tensor<T>& x) {
  if (w.rank() != 2 || x.rank() != 1 || w.shape()[1] != x.shape()[0])
    throw ShapeMismatch("matvec: " + shape_str(w.shape()) + " * " + shape_str(x.shape()));
  std::size_t m = w.shape()[0], n = w.shape()[1];
  std::vector<T> data(m, T(0));
  const auto& wv = w.values();
  const auto& xv = x.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) data[i] += wv[i * n + j] * xv[j];
  auto backward = [w, x, m, n](const std::vector<T>& g, const typename Tensor<T>::ParentGrad& pg) {
    std::vector<T>* gw = pg(0);
    std::vector<T>* gx = pg(1);
    const auto& wv = w.values();
    const auto& xv = x.values();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (gw) (*gw)[i * n + j] += g[i] * xv[j];
        if (gx) (*gx)[j] += g[i] * wv[i * n + j];
      }
  };
  return Tensor<T>::make_op({w, x}, {m}, std::move(data), std::move(backward));
}

// ---------------------------------------------------------------------------
// Small conveniences used by tests and verification code

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeMismatch("max_abs_diff: shape mismatch");
  T m = T(0);
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

}  // namespace sovnet
