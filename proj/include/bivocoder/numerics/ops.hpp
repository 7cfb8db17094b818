#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bivocoder/numerics/tensor.hpp"

namespace bivocoder::numerics {

namespace detail {

template <typename T, typename Fwd, typename Deriv>
Var<T> unary(const Var<T>& x, Fwd fwd, Deriv deriv) {
  Tensor<T> out(x.shape());
  const auto xs = x.data();
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = fwd(xs[i]);
  return make_result<T>(std::move(out), {x}, [deriv](Node<T>& self) {
    T* gx = self.parent_grad(0);
    if (!gx) return;
    const auto& xv = self.parents[0]->value.data;
    const auto& yv = self.value.data;
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i] * deriv(xv[i], yv[i]);
  });
}

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  require_dims(a == b, std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

}  // namespace detail

// ---- elementwise unary ----

template <typename T>
Var<T> neg(const Var<T>& x) {
  return detail::unary(x, [](T v) { return -v; }, [](T, T) { return T(-1); });
}

template <typename T>
Var<T> scale(const Var<T>& x, T c) {
  return detail::unary(x, [c](T v) { return c * v; }, [c](T, T) { return c; });
}

template <typename T>
Var<T> add_scalar(const Var<T>& x, T c) {
  return detail::unary(x, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> exp(const Var<T>& x) {
  return detail::unary(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

/// log(max(x, floor)); zero gradient where the floor is engaged.
template <typename T>
Var<T> log_floor(const Var<T>& x, T floor) {
  return detail::unary(
      x, [floor](T v) { return std::log(std::max(v, floor)); },
      [floor](T v, T) { return v > floor ? T(1) / v : T(0); });
}

template <typename T>
Var<T> square(const Var<T>& x) {
  return detail::unary(x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Var<T> abs(const Var<T>& x) {
  return detail::unary(
      x, [](T v) { return std::abs(v); }, [](T v, T) { return v > 0 ? T(1) : (v < 0 ? T(-1) : T(0)); });
}

template <typename T>
Var<T> cos(const Var<T>& x) {
  return detail::unary(x, [](T v) { return std::cos(v); }, [](T v, T) { return -std::sin(v); });
}

template <typename T>
Var<T> sin(const Var<T>& x) {
  return detail::unary(x, [](T v) { return std::sin(v); }, [](T v, T) { return std::cos(v); });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  return detail::unary(x, [](T v) { return v > 0 ? v : T(0); }, [](T v, T) { return v > 0 ? T(1) : T(0); });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  return detail::unary(
      x, [slope](T v) { return v > 0 ? v : slope * v; }, [slope](T v, T) { return v > 0 ? T(1) : slope; });
}

/// Exact x * Phi(x) with the erf form of the normal CDF.
template <typename T>
Var<T> gelu(const Var<T>& x) {
  constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  constexpr T inv_sqrt2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
  return detail::unary(
      x, [](T v) { return v * T(0.5) * (T(1) + std::erf(v * inv_sqrt2)); },
      [](T v, T) {
        const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
        return cdf + v * inv_sqrt2pi * std::exp(T(-0.5) * v * v);
      });
}

/// |x - 2*pi*round(x / 2*pi)|, the principal absolute phase error in [0, pi].
template <typename T>
T anti_wrap_value(T x) {
  constexpr T two_pi = T(2) * std::numbers::pi_v<T>;
  return std::abs(x - two_pi * std::round(x / two_pi));
}

template <typename T>
Var<T> anti_wrap(const Var<T>& x) {
  constexpr T two_pi = T(2) * std::numbers::pi_v<T>;
  return detail::unary(
      x, [](T v) { return anti_wrap_value(v); },
      [](T v, T) {
        const T w = v - two_pi * std::round(v / two_pi);
        return w > 0 ? T(1) : (w < 0 ? T(-1) : T(0));
      });
}

// ---- elementwise binary ----

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    for (std::size_t p = 0; p < 2; ++p)
      if (T* g = self.parent_grad(p))
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    if (T* g = self.parent_grad(0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    if (T* g = self.parent_grad(1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    const auto& av = self.parents[0]->value.data;
    const auto& bv = self.parents[1]->value.data;
    if (T* g = self.parent_grad(0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
    if (T* g = self.parent_grad(1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
  });
}

/// Two-argument arctangent folded into (-pi, pi]; the origin maps to 0.
template <typename T>
T principal_atan2(T y, T x) {
  if (y == T(0) && x == T(0)) return T(0);
  const T a = std::atan2(y, x);
  return a == -std::numbers::pi_v<T> ? std::numbers::pi_v<T> : a;
}

/// atan2(y, x) in (-pi, pi]; atan2(0, 0) = 0 with zero gradient there.
template <typename T>
Var<T> atan2(const Var<T>& y, const Var<T>& x) {
  detail::require_same_shape(y.shape(), x.shape(), "atan2");
  Tensor<T> out(y.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = principal_atan2(y.data()[i], x.data()[i]);
  }
  return make_result<T>(std::move(out), {y, x}, [](Node<T>& self) {
    const auto& yv = self.parents[0]->value.data;
    const auto& xv = self.parents[1]->value.data;
    T* gy = self.parent_grad(0);
    T* gx = self.parent_grad(1);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T r2 = xv[i] * xv[i] + yv[i] * yv[i];
      if (r2 == T(0)) continue;
      if (gy) gy[i] += self.grad[i] * xv[i] / r2;
      if (gx) gx[i] -= self.grad[i] * yv[i] / r2;
    }
  });
}

/// sqrt(re^2 + im^2); the subgradient at the origin is taken as zero.
template <typename T>
Var<T> magnitude(const Var<T>& re, const Var<T>& im) {
  detail::require_same_shape(re.shape(), im.shape(), "magnitude");
  Tensor<T> out(re.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::hypot(re.data()[i], im.data()[i]);
  return make_result<T>(std::move(out), {re, im}, [](Node<T>& self) {
    const auto& rv = self.parents[0]->value.data;
    const auto& iv = self.parents[1]->value.data;
    T* gr = self.parent_grad(0);
    T* gi = self.parent_grad(1);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T m = self.value.data[i];
      if (m == T(0)) continue;
      if (gr) gr[i] += self.grad[i] * rv[i] / m;
      if (gi) gi[i] += self.grad[i] * iv[i] / m;
    }
  });
}

// ---- reductions ----

template <typename T>
Var<T> sum(const Var<T>& x) {
  T s = 0;
  for (T v : x.data()) s += v;
  return make_result<T>(Tensor<T>({1}, std::vector<T>{s}), {x}, [](Node<T>& self) {
    if (T* g = self.parent_grad(0)) {
      const T go = self.grad[0];
      for (std::size_t i = 0; i < self.parents[0]->value.size(); ++i) g[i] += go;
    }
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  require_dims(x.size() > 0, "mean of empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

/// Weighted sum of scalars.
template <typename T>
Var<T> weighted_sum(const std::vector<Var<T>>& terms, const std::vector<T>& weights) {
  require_dims(terms.size() == weights.size() && !terms.empty(), "weighted_sum: arity mismatch");
  T s = 0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    require_dims(terms[i].size() == 1, "weighted_sum: terms must be scalars");
    s += weights[i] * terms[i].item();
  }
  return make_result<T>(Tensor<T>({1}, std::vector<T>{s}), terms, [weights](Node<T>& self) {
    for (std::size_t p = 0; p < weights.size(); ++p)
      if (T* g = self.parent_grad(p)) g[0] += self.grad[0] * weights[p];
  });
}

// ---- shape ops ----

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  require_dims(shape_size(shape) == x.size(),
               "reshape: " + shape_string(x.shape()) + " -> " + shape_string(shape));
  Tensor<T> out(std::move(shape), x.value().data);
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    if (T* g = self.parent_grad(0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

/// out[i] = x[index[i]]; backward scatter-adds. Covers slicing, padding, and permutation.
template <typename T>
Var<T> gather(const Var<T>& x, Shape shape, std::vector<std::size_t> index) {
  require_dims(shape_size(shape) == index.size(), "gather: index count does not match shape");
  Tensor<T> out(std::move(shape));
  const auto xs = x.data();
  for (std::size_t i = 0; i < index.size(); ++i) {
    require_dims(index[i] < xs.size(), "gather: index out of range");
    out[i] = xs[index[i]];
  }
  return make_result<T>(std::move(out), {x}, [index = std::move(index)](Node<T>& self) {
    if (T* g = self.parent_grad(0))
      for (std::size_t i = 0; i < index.size(); ++i) g[index[i]] += self.grad[i];
  });
}

namespace detail {

/// Splits a shape around `axis` into (outer, extent, inner) strides.
inline void axis_split(const Shape& s, std::size_t axis, std::size_t& outer, std::size_t& inner) {
  require_dims(axis < s.size(), "axis out of range for shape " + shape_string(s));
  outer = 1;
  inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}

/// Gathers along one axis with a per-position source-index map.
template <typename T>
Var<T> gather_axis(const Var<T>& x, std::size_t axis, const std::vector<std::size_t>& src) {
  std::size_t outer, inner;
  axis_split(x.shape(), axis, outer, inner);
  const std::size_t n_in = x.dim(axis);
  Shape shape = x.shape();
  shape[axis] = src.size();
  std::vector<std::size_t> index;
  index.reserve(outer * src.size() * inner);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t j : src)
      for (std::size_t i = 0; i < inner; ++i) index.push_back((o * n_in + j) * inner + i);
  return gather(x, std::move(shape), std::move(index));
}

}  // namespace detail

/// Elements [start, start + length) along `axis`.
template <typename T>
Var<T> narrow(const Var<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
  require_dims(axis < x.shape().size() && start + length <= x.dim(axis), "narrow: range out of bounds");
  std::vector<std::size_t> src(length);
  std::iota(src.begin(), src.end(), start);
  return detail::gather_axis(x, axis, src);
}

/// Right-pads `axis` to `length` by repeating the last element.
template <typename T>
Var<T> pad_replicate_right(const Var<T>& x, std::size_t axis, std::size_t length) {
  const std::size_t n = x.dim(axis);
  require_dims(n >= 1 && length >= n, "pad_replicate_right: bad length");
  std::vector<std::size_t> src(length);
  for (std::size_t j = 0; j < length; ++j) src[j] = std::min(j, n - 1);
  return detail::gather_axis(x, axis, src);
}

/// Index into a length-n signal after mirror padding (no edge repeat), valid for any offset.
inline std::size_t reflect_index(long long i, std::size_t n) {
  if (n == 1) return 0;
  const long long period = 2 * static_cast<long long>(n - 1);
  long long m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<long long>(n) ? m : period - m);
}

/// Mirror-pads `axis` by `left` and `right` elements.
template <typename T>
Var<T> pad_reflect(const Var<T>& x, std::size_t axis, std::size_t left, std::size_t right) {
  const std::size_t n = x.dim(axis);
  require_dims(n >= 1, "pad_reflect: empty axis");
  std::vector<std::size_t> src(n + left + right);
  for (std::size_t j = 0; j < src.size(); ++j)
    src[j] = reflect_index(static_cast<long long>(j) - static_cast<long long>(left), n);
  return detail::gather_axis(x, axis, src);
}

/// x[.., j+1, ..] - x[.., j, ..] along `axis`; the result is one shorter.
template <typename T>
Var<T> diff(const Var<T>& x, std::size_t axis) {
  const std::size_t n = x.dim(axis);
  require_dims(n >= 2, "diff: axis needs at least two elements");
  return sub(narrow(x, axis, 1, n - 1), narrow(x, axis, 0, n - 1));
}

/// Concatenation along `axis`.
template <typename T>
Var<T> concat(const std::vector<Var<T>>& xs, std::size_t axis) {
  require_dims(!xs.empty(), "concat: no inputs");
  Shape shape = xs[0].shape();
  std::size_t total = 0;
  for (const auto& x : xs) {
    require_dims(x.shape().size() == shape.size(), "concat: rank mismatch");
    for (std::size_t d = 0; d < shape.size(); ++d)
      require_dims(d == axis || x.dim(d) == shape[d], "concat: shape mismatch off the concat axis");
    total += x.dim(axis);
  }
  shape[axis] = total;
  std::size_t outer, inner;
  detail::axis_split(shape, axis, outer, inner);
  Tensor<T> out(shape);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& x : xs) {
    offsets.push_back(off);
    const std::size_t n = x.dim(axis);
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(x.data().data() + o * n * inner, n * inner, out.ptr() + (o * total + off) * inner);
    off += n;
  }
  return make_result<T>(std::move(out), xs, [offsets, outer, inner, total, axis](Node<T>& self) {
    for (std::size_t p = 0; p < self.parents.size(); ++p) {
      T* g = self.parent_grad(p);
      if (!g) continue;
      const std::size_t n = self.parents[p]->value.shape[axis];
      for (std::size_t o = 0; o < outer; ++o) {
        const T* src = self.grad.data() + (o * total + offsets[p]) * inner;
        T* dst = g + o * n * inner;
        for (std::size_t i = 0; i < n * inner; ++i) dst[i] += src[i];
      }
    }
  });
}

}  // namespace bivocoder::numerics
