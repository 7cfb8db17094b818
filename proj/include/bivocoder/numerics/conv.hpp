#pragma once

#include <algorithm>
#include <utility>

#include <Eigen/Core>

#include "bivocoder/numerics/tensor.hpp"

namespace bivocoder::numerics {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using CMatMap = Eigen::Map<const RowMat<T>>;

struct Conv1dGeometry {
  std::size_t batch, in_ch, time, out_ch, kernel, stride, padding, groups, time_out;
  std::size_t in_per_group() const { return in_ch / groups; }
  std::size_t out_per_group() const { return out_ch / groups; }
};

// col[(c*K + k), t] = x[c, t*stride + k - padding], zero outside.
template <typename T>
void im2col_1d(const T* x, std::size_t channels, std::size_t time, std::size_t kernel, std::size_t stride,
               std::size_t padding, std::size_t time_out, T* col) {
  for (std::size_t c = 0; c < channels; ++c) {
    const T* xc = x + c * time;
    for (std::size_t k = 0; k < kernel; ++k) {
      T* row = col + (c * kernel + k) * time_out;
      for (std::size_t t = 0; t < time_out; ++t) {
        const long long src = static_cast<long long>(t * stride + k) - static_cast<long long>(padding);
        row[t] = (src >= 0 && src < static_cast<long long>(time)) ? xc[src] : T(0);
      }
    }
  }
}

template <typename T>
void col2im_1d(const T* col, std::size_t channels, std::size_t time, std::size_t kernel, std::size_t stride,
               std::size_t padding, std::size_t time_out, T* x) {
  for (std::size_t c = 0; c < channels; ++c) {
    T* xc = x + c * time;
    for (std::size_t k = 0; k < kernel; ++k) {
      const T* row = col + (c * kernel + k) * time_out;
      for (std::size_t t = 0; t < time_out; ++t) {
        const long long src = static_cast<long long>(t * stride + k) - static_cast<long long>(padding);
        if (src >= 0 && src < static_cast<long long>(time)) xc[src] += row[t];
      }
    }
  }
}

}  // namespace detail

/// Cross-correlation over [batch, in_ch, time] with zero padding.
/// weight: [out_ch, in_ch / groups, kernel]; bias: [out_ch] or undefined.
template <typename T>
Var<T> conv1d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, std::size_t stride = 1,
              std::size_t padding = 0, std::size_t groups = 1) {
  require_dims(input.shape().size() == 3, "conv1d: input must be [batch, channels, time]");
  require_dims(weight.shape().size() == 3, "conv1d: weight must be [out, in/groups, kernel]");
  detail::Conv1dGeometry g{input.dim(0), input.dim(1), input.dim(2), weight.dim(0), weight.dim(2),
                           stride,       padding,      groups,       0};
  require_dims(g.kernel >= 1 && stride >= 1 && groups >= 1, "conv1d: kernel, stride and groups must be >= 1");
  require_dims(g.in_ch % groups == 0 && g.out_ch % groups == 0, "conv1d: channels not divisible by groups");
  require_dims(weight.dim(1) == g.in_per_group(),
               "conv1d: weight expects " + std::to_string(weight.dim(1) * groups) + " input channels, got " +
                   std::to_string(g.in_ch));
  require_dims(g.time + 2 * padding >= g.kernel, "conv1d: input shorter than kernel");
  const bool has_bias = bias.defined();
  if (has_bias) require_dims(bias.size() == g.out_ch, "conv1d: bias size mismatch");
  g.time_out = (g.time + 2 * padding - g.kernel) / stride + 1;

  const std::size_t icg = g.in_per_group(), ocg = g.out_per_group();
  const std::size_t ck = icg * g.kernel;
  Tensor<T> out({g.batch, g.out_ch, g.time_out});
  const bool depthwise = icg == 1 && ocg == 1;

  std::vector<T> col;
  if (!depthwise) col.resize(ck * g.time_out);
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t grp = 0; grp < groups; ++grp) {
      const T* x = input.value().ptr() + (b * g.in_ch + grp * icg) * g.time;
      T* y = out.ptr() + (b * g.out_ch + grp * ocg) * g.time_out;
      const T* w = weight.value().ptr() + grp * ocg * ck;
      if (depthwise) {
        for (std::size_t t = 0; t < g.time_out; ++t) {
          T acc = 0;
          for (std::size_t k = 0; k < g.kernel; ++k) {
            const long long src = static_cast<long long>(t * stride + k) - static_cast<long long>(padding);
            if (src >= 0 && src < static_cast<long long>(g.time)) acc += w[k] * x[src];
          }
          y[t] = acc;
        }
      } else {
        detail::im2col_1d(x, icg, g.time, g.kernel, stride, padding, g.time_out, col.data());
        detail::MatMap<T>(y, ocg, g.time_out).noalias() =
            detail::CMatMap<T>(w, ocg, ck) * detail::CMatMap<T>(col.data(), ck, g.time_out);
      }
    }
    if (has_bias)
      for (std::size_t o = 0; o < g.out_ch; ++o) {
        T* y = out.ptr() + (b * g.out_ch + o) * g.time_out;
        const T bo = bias.data()[o];
        for (std::size_t t = 0; t < g.time_out; ++t) y[t] += bo;
      }
  }

  std::vector<Var<T>> inputs{input, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result<T>(std::move(out), inputs, [g, has_bias, depthwise](Node<T>& self) {
    const std::size_t icg = g.in_per_group(), ocg = g.out_per_group();
    const std::size_t ck = icg * g.kernel;
    T* gx = self.parent_grad(0);
    T* gw = self.parent_grad(1);
    T* gb = has_bias ? self.parent_grad(2) : nullptr;
    const T* xv = self.parents[0]->value.ptr();
    const T* wv = self.parents[1]->value.ptr();
    const T* gy_all = self.grad.data();
    std::vector<T> col, dcol;
    if (!depthwise) {
      col.resize(ck * g.time_out);
      dcol.resize(ck * g.time_out);
    }
    for (std::size_t b = 0; b < g.batch; ++b) {
      for (std::size_t grp = 0; grp < g.groups; ++grp) {
        const T* x = xv + (b * g.in_ch + grp * icg) * g.time;
        const T* gy = gy_all + (b * g.out_ch + grp * ocg) * g.time_out;
        const T* w = wv + grp * ocg * ck;
        if (depthwise) {
          T* gxi = gx ? gx + (b * g.in_ch + grp) * g.time : nullptr;
          T* gwi = gw ? gw + grp * g.kernel : nullptr;
          for (std::size_t t = 0; t < g.time_out; ++t) {
            const T go = gy[t];
            for (std::size_t k = 0; k < g.kernel; ++k) {
              const long long src = static_cast<long long>(t * g.stride + k) - static_cast<long long>(g.padding);
              if (src < 0 || src >= static_cast<long long>(g.time)) continue;
              if (gxi) gxi[src] += w[k] * go;
              if (gwi) gwi[k] += x[src] * go;
            }
          }
          continue;
        }
        const auto gy_m = detail::CMatMap<T>(gy, ocg, g.time_out);
        if (gw) {
          detail::im2col_1d(x, icg, g.time, g.kernel, g.stride, g.padding, g.time_out, col.data());
          detail::MatMap<T>(gw + grp * ocg * ck, ocg, ck).noalias() +=
              gy_m * detail::CMatMap<T>(col.data(), ck, g.time_out).transpose();
        }
        if (gx) {
          detail::MatMap<T>(dcol.data(), ck, g.time_out).noalias() =
              detail::CMatMap<T>(w, ocg, ck).transpose() * gy_m;
          detail::col2im_1d(dcol.data(), icg, g.time, g.kernel, g.stride, g.padding, g.time_out,
                            gx + (b * g.in_ch + grp * icg) * g.time);
        }
      }
      if (gb)
        for (std::size_t o = 0; o < g.out_ch; ++o) {
          const T* gy = gy_all + (b * g.out_ch + o) * g.time_out;
          T acc = 0;
          for (std::size_t t = 0; t < g.time_out; ++t) acc += gy[t];
          gb[o] += acc;
        }
    }
  });
}

/// Transposed 1-D convolution, the adjoint of conv1d with the same stride and padding.
/// weight: [in_ch, out_ch, kernel]; time_out = (time - 1) * stride + kernel - 2 * padding.
template <typename T>
Var<T> conv_transpose1d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, std::size_t stride = 1,
                        std::size_t padding = 0) {
  require_dims(input.shape().size() == 3, "conv_transpose1d: input must be [batch, channels, time]");
  require_dims(weight.shape().size() == 3, "conv_transpose1d: weight must be [in, out, kernel]");
  require_dims(stride >= 1 && weight.dim(2) >= 1, "conv_transpose1d: stride and kernel must be >= 1");
  require_dims(weight.dim(0) == input.dim(1),
               "conv_transpose1d: weight expects " + std::to_string(weight.dim(0)) + " input channels, got " +
                   std::to_string(input.dim(1)));
  const std::size_t batch = input.dim(0), in_ch = input.dim(1), time = input.dim(2);
  const std::size_t out_ch = weight.dim(1), kernel = weight.dim(2);
  require_dims((time - 1) * stride + kernel > 2 * padding, "conv_transpose1d: padding too large");
  const std::size_t time_out = (time - 1) * stride + kernel - 2 * padding;
  const bool has_bias = bias.defined();
  if (has_bias) require_dims(bias.size() == out_ch, "conv_transpose1d: bias size mismatch");

  // The output plays the role of conv1d's input: col = W^T x, then col2im.
  const std::size_t ck = out_ch * kernel;
  Tensor<T> out({batch, out_ch, time_out});
  std::vector<T> col(ck * time);
  const auto w_m = detail::CMatMap<T>(weight.value().ptr(), in_ch, ck);
  for (std::size_t b = 0; b < batch; ++b) {
    detail::MatMap<T>(col.data(), ck, time).noalias() =
        w_m.transpose() * detail::CMatMap<T>(input.value().ptr() + b * in_ch * time, in_ch, time);
    T* y = out.ptr() + b * out_ch * time_out;
    detail::col2im_1d(col.data(), out_ch, time_out, kernel, stride, padding, time, y);
    if (has_bias)
      for (std::size_t o = 0; o < out_ch; ++o)
        for (std::size_t t = 0; t < time_out; ++t) y[o * time_out + t] += bias.data()[o];
  }

  std::vector<Var<T>> inputs{input, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result<T>(std::move(out), inputs,
                        [=](Node<T>& self) {
                          T* gx = self.parent_grad(0);
                          T* gw = self.parent_grad(1);
                          T* gb = has_bias ? self.parent_grad(2) : nullptr;
                          const T* xv = self.parents[0]->value.ptr();
                          const auto w_m = detail::CMatMap<T>(self.parents[1]->value.ptr(), in_ch, ck);
                          std::vector<T> gcol(ck * time);
                          for (std::size_t b = 0; b < batch; ++b) {
                            const T* gy = self.grad.data() + b * out_ch * time_out;
                            detail::im2col_1d(gy, out_ch, time_out, kernel, stride, padding, time, gcol.data());
                            const auto gcol_m = detail::CMatMap<T>(gcol.data(), ck, time);
                            if (gx)
                              detail::MatMap<T>(gx + b * in_ch * time, in_ch, time).noalias() += w_m * gcol_m;
                            if (gw)
                              detail::MatMap<T>(gw, in_ch, ck).noalias() +=
                                  detail::CMatMap<T>(xv + b * in_ch * time, in_ch, time) * gcol_m.transpose();
                            if (gb)
                              for (std::size_t o = 0; o < out_ch; ++o) {
                                T acc = 0;
                                for (std::size_t t = 0; t < time_out; ++t) acc += gy[o * time_out + t];
                                gb[o] += acc;
                              }
                          }
                        });
}

struct Conv2dParams {
  std::size_t stride_h = 1, stride_w = 1, pad_h = 0, pad_w = 0;
};

namespace detail {

struct Conv2dGeometry {
  std::size_t batch, in_ch, h, w, out_ch, kh, kw, h_out, w_out;
  Conv2dParams p;
};

// Output columns [lo, hi) whose source column for tap j lies inside the input.
inline std::pair<std::size_t, std::size_t> valid_columns(const Conv2dGeometry& g, std::size_t j) {
  const long long s = static_cast<long long>(g.p.stride_w), pad = static_cast<long long>(g.p.pad_w),
                  jj = static_cast<long long>(j), w = static_cast<long long>(g.w);
  const long long lo = std::max(0LL, (pad - jj + s - 1) / s);
  const long long hi = std::min(static_cast<long long>(g.w_out), (w - 1 + pad - jj) / s + 1);
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(std::max(lo, hi))};
}

template <typename T>
void im2col_2d(const T* x, const Conv2dGeometry& g, T* col) {
  const std::size_t n_out = g.h_out * g.w_out;
  for (std::size_t c = 0; c < g.in_ch; ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = col + ((c * g.kh + i) * g.kw + j) * n_out;
        const auto [lo, hi] = valid_columns(g, j);
        for (std::size_t oh = 0; oh < g.h_out; ++oh) {
          const long long sh = static_cast<long long>(oh * g.p.stride_h + i) - static_cast<long long>(g.p.pad_h);
          T* r = row + oh * g.w_out;
          if (sh < 0 || sh >= static_cast<long long>(g.h)) {
            std::fill_n(r, g.w_out, T(0));
            continue;
          }
          const T* xr = x + (c * g.h + static_cast<std::size_t>(sh)) * g.w + (lo * g.p.stride_w + j - g.p.pad_w);
          std::fill_n(r, lo, T(0));
          if (g.p.stride_w == 1)
            std::copy(xr, xr + (hi - lo), r + lo);
          else
            for (std::size_t ow = lo; ow < hi; ++ow) r[ow] = xr[(ow - lo) * g.p.stride_w];
          std::fill(r + hi, r + g.w_out, T(0));
        }
      }
}

template <typename T>
void col2im_2d(const T* col, const Conv2dGeometry& g, T* x) {
  const std::size_t n_out = g.h_out * g.w_out;
  for (std::size_t c = 0; c < g.in_ch; ++c)
    for (std::size_t i = 0; i < g.kh; ++i)
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = col + ((c * g.kh + i) * g.kw + j) * n_out;
        const auto [lo, hi] = valid_columns(g, j);
        for (std::size_t oh = 0; oh < g.h_out; ++oh) {
          const long long sh = static_cast<long long>(oh * g.p.stride_h + i) - static_cast<long long>(g.p.pad_h);
          if (sh < 0 || sh >= static_cast<long long>(g.h)) continue;
          T* xr = x + (c * g.h + static_cast<std::size_t>(sh)) * g.w + (lo * g.p.stride_w + j - g.p.pad_w);
          const T* r = row + oh * g.w_out;
          for (std::size_t ow = lo; ow < hi; ++ow) xr[(ow - lo) * g.p.stride_w] += r[ow];
        }
      }
}

}  // namespace detail

/// 2-D cross-correlation over [batch, in_ch, h, w]; weight [out_ch, in_ch, kh, kw].
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& weight, const Var<T>& bias, Conv2dParams p = {}) {
  require_dims(input.shape().size() == 4, "conv2d: input must be [batch, channels, h, w]");
  require_dims(weight.shape().size() == 4, "conv2d: weight must be [out, in, kh, kw]");
  require_dims(weight.dim(1) == input.dim(1),
               "conv2d: weight expects " + std::to_string(weight.dim(1)) + " input channels, got " +
                   std::to_string(input.dim(1)));
  require_dims(p.stride_h >= 1 && p.stride_w >= 1, "conv2d: stride must be >= 1");
  detail::Conv2dGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), weight.dim(0),
                           weight.dim(2), weight.dim(3), 0, 0, p};
  require_dims(g.h + 2 * p.pad_h >= g.kh && g.w + 2 * p.pad_w >= g.kw, "conv2d: input smaller than kernel");
  g.h_out = (g.h + 2 * p.pad_h - g.kh) / p.stride_h + 1;
  g.w_out = (g.w + 2 * p.pad_w - g.kw) / p.stride_w + 1;
  const bool has_bias = bias.defined();
  if (has_bias) require_dims(bias.size() == g.out_ch, "conv2d: bias size mismatch");

  const std::size_t ck = g.in_ch * g.kh * g.kw, n_out = g.h_out * g.w_out, n_in = g.in_ch * g.h * g.w;
  Tensor<T> out({g.batch, g.out_ch, g.h_out, g.w_out});
  std::vector<T> col(ck * n_out);
  const auto w_m = detail::CMatMap<T>(weight.value().ptr(), g.out_ch, ck);
  for (std::size_t b = 0; b < g.batch; ++b) {
    detail::im2col_2d(input.value().ptr() + b * n_in, g, col.data());
    T* y = out.ptr() + b * g.out_ch * n_out;
    detail::MatMap<T>(y, g.out_ch, n_out).noalias() = w_m * detail::CMatMap<T>(col.data(), ck, n_out);
    if (has_bias)
      for (std::size_t o = 0; o < g.out_ch; ++o)
        for (std::size_t i = 0; i < n_out; ++i) y[o * n_out + i] += bias.data()[o];
  }

  std::vector<Var<T>> inputs{input, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result<T>(std::move(out), inputs, [g, has_bias, ck, n_out, n_in](Node<T>& self) {
    T* gx = self.parent_grad(0);
    T* gw = self.parent_grad(1);
    T* gb = has_bias ? self.parent_grad(2) : nullptr;
    const auto w_m = detail::CMatMap<T>(self.parents[1]->value.ptr(), g.out_ch, ck);
    std::vector<T> col(ck * n_out);
    for (std::size_t b = 0; b < g.batch; ++b) {
      const auto gy_m = detail::CMatMap<T>(self.grad.data() + b * g.out_ch * n_out, g.out_ch, n_out);
      if (gw) {
        detail::im2col_2d(self.parents[0]->value.ptr() + b * n_in, g, col.data());
        detail::MatMap<T>(gw, g.out_ch, ck).noalias() += gy_m * detail::CMatMap<T>(col.data(), ck, n_out).transpose();
      }
      if (gx) {
        detail::MatMap<T>(col.data(), ck, n_out).noalias() = w_m.transpose() * gy_m;
        detail::col2im_2d(col.data(), g, gx + b * n_in);
      }
      if (gb)
        for (std::size_t o = 0; o < g.out_ch; ++o) {
          T acc = 0;
          for (std::size_t i = 0; i < n_out; ++i) acc += gy_m(o, i);
          gb[o] += acc;
        }
    }
  });
}

}  // namespace bivocoder::numerics
