#pragma once

#include <cmath>

#include "bivocoder/numerics/tensor.hpp"

namespace bivocoder::numerics {

/// Layer norm across the channel axis of [batch, C, time], independently per (batch, time).
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  require_dims(x.shape().size() == 3, "layer_norm: input must be [batch, channels, time]");
  const std::size_t batch = x.dim(0), ch = x.dim(1), time = x.dim(2);
  require_dims(gamma.size() == ch && beta.size() == ch, "layer_norm: affine parameters must have C entries");
  require_dims(eps > T(0), "layer_norm: eps must be positive");

  Tensor<T> out(x.shape());
  // Normalized values and inverse std are kept for the backward pass.
  auto xhat = std::make_shared<std::vector<T>>(x.size());
  auto inv_std = std::make_shared<std::vector<T>>(batch * time);
  const T* xv = x.value().ptr();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < time; ++t) {
      const std::size_t base = b * ch * time + t;
      T m = 0;
      for (std::size_t c = 0; c < ch; ++c) m += xv[base + c * time];
      m /= static_cast<T>(ch);
      T var = 0;
      for (std::size_t c = 0; c < ch; ++c) {
        const T d = xv[base + c * time] - m;
        var += d * d;
      }
      var /= static_cast<T>(ch);
      const T is = T(1) / std::sqrt(var + eps);
      (*inv_std)[b * time + t] = is;
      for (std::size_t c = 0; c < ch; ++c) {
        const std::size_t i = base + c * time;
        const T h = (xv[i] - m) * is;
        (*xhat)[i] = h;
        out[i] = gamma.data()[c] * h + beta.data()[c];
      }
    }

  return make_result<T>(std::move(out), {x, gamma, beta}, [=](Node<T>& self) {
    T* gx = self.parent_grad(0);
    T* gg = self.parent_grad(1);
    T* gbeta = self.parent_grad(2);
    const auto& gam = self.parents[1]->value.data;
    const T n = static_cast<T>(ch);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t t = 0; t < time; ++t) {
        const std::size_t base = b * ch * time + t;
        T sum_dh = 0, sum_dh_h = 0;
        for (std::size_t c = 0; c < ch; ++c) {
          const std::size_t i = base + c * time;
          const T go = self.grad[i];
          if (gg) gg[c] += go * (*xhat)[i];
          if (gbeta) gbeta[c] += go;
          const T dh = go * gam[c];
          sum_dh += dh;
          sum_dh_h += dh * (*xhat)[i];
        }
        if (!gx) continue;
        const T is = (*inv_std)[b * time + t];
        for (std::size_t c = 0; c < ch; ++c) {
          const std::size_t i = base + c * time;
          const T dh = self.grad[i] * gam[c];
          gx[i] += is * (dh - sum_dh / n - (*xhat)[i] * sum_dh_h / n);
        }
      }
  });
}

/// Global response normalization over [batch, C, time]:
/// g_c = ||x_c||_2 over time, n_c = g_c / (mean_c g + eps), y = gamma * x * n + beta + x.
template <typename T>
Var<T> grn(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps) {
  require_dims(x.shape().size() == 3, "grn: input must be [batch, channels, time]");
  const std::size_t batch = x.dim(0), ch = x.dim(1), time = x.dim(2);
  require_dims(gamma.size() == ch && beta.size() == ch, "grn: affine parameters must have C entries");
  require_dims(eps > T(0), "grn: eps must be positive");

  Tensor<T> out(x.shape());
  auto gnorm = std::make_shared<std::vector<T>>(batch * ch);
  auto denom = std::make_shared<std::vector<T>>(batch);
  const T* xv = x.value().ptr();
  for (std::size_t b = 0; b < batch; ++b) {
    T gmean = 0;
    for (std::size_t c = 0; c < ch; ++c) {
      T ss = 0;
      const T* xc = xv + (b * ch + c) * time;
      for (std::size_t t = 0; t < time; ++t) ss += xc[t] * xc[t];
      (*gnorm)[b * ch + c] = std::sqrt(ss);
      gmean += (*gnorm)[b * ch + c];
    }
    gmean /= static_cast<T>(ch);
    const T d = gmean + eps;
    (*denom)[b] = d;
    for (std::size_t c = 0; c < ch; ++c) {
      const T nc = (*gnorm)[b * ch + c] / d;
      const T gm = gamma.data()[c], be = beta.data()[c];
      const std::size_t off = (b * ch + c) * time;
      for (std::size_t t = 0; t < time; ++t) out[off + t] = gm * xv[off + t] * nc + be + xv[off + t];
    }
  }

  return make_result<T>(std::move(out), {x, gamma, beta}, [=](Node<T>& self) {
    T* gx = self.parent_grad(0);
    T* gg = self.parent_grad(1);
    T* gbeta = self.parent_grad(2);
    const T* xv = self.parents[0]->value.ptr();
    const auto& gam = self.parents[1]->value.data;
    std::vector<T> dn(ch);
    for (std::size_t b = 0; b < batch; ++b) {
      const T d = (*denom)[b];
      // dL/dn_c = gamma_c * sum_t go * x; then n_c = g_c / d with d = mean(g) + eps.
      T sum_dn_n = 0;
      for (std::size_t c = 0; c < ch; ++c) {
        const std::size_t off = (b * ch + c) * time;
        const T nc = (*gnorm)[b * ch + c] / d;
        T s = 0;
        for (std::size_t t = 0; t < time; ++t) {
          const T go = self.grad[off + t];
          s += go * xv[off + t];
          if (gbeta) gbeta[c] += go;
        }
        if (gg) gg[c] += s * nc;
        dn[c] = gam[c] * s;
        sum_dn_n += dn[c] * nc;
      }
      if (!gx) continue;
      for (std::size_t c = 0; c < ch; ++c) {
        const std::size_t off = (b * ch + c) * time;
        const T gc = (*gnorm)[b * ch + c];
        const T nc = gc / d;
        // dL/dg_c = dn_c / d - sum_k dn_k n_k / (C d)
        const T dg = dn[c] / d - sum_dn_n / (static_cast<T>(ch) * d);
        const T coef = gc > T(0) ? dg / gc : T(0);
        const T direct = gam[c] * nc + T(1);
        for (std::size_t t = 0; t < time; ++t) gx[off + t] += self.grad[off + t] * direct + coef * xv[off + t];
      }
    }
  });
}

}  // namespace bivocoder::numerics
