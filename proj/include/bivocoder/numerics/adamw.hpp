#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "bivocoder/numerics/tensor.hpp"

namespace bivocoder::numerics {

struct AdamWHyper {
  double lr = 2e-4;
  double beta1 = 0.8;
  double beta2 = 0.99;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Moments for every optimized parameter plus the shared step count.
template <typename T>
struct AdamWState {
  std::uint64_t step = 0;
  AdamWHyper hyper;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  AdamWState() = default;
  AdamWState(const std::vector<Var<T>>& params, AdamWHyper h) : hyper(h) {
    for (const auto& p : params) {
      m.emplace_back(p.size(), T(0));
      v.emplace_back(p.size(), T(0));
    }
  }
};

/// Decoupled weight decay Adam with bias correction. Rejects the whole step, leaving
/// parameters and state untouched, if any gradient is non-finite.
template <typename T>
void adamw_step(std::vector<Var<T>>& params, AdamWState<T>& state) {
  require_dims(state.m.size() == params.size() && state.v.size() == params.size(),
               "adamw_step: optimizer state does not match parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_dims(state.m[i].size() == params[i].size() && state.v[i].size() == params[i].size(),
                 "adamw_step: moment buffer shape mismatch for parameter " + std::to_string(i));
    if (params[i].has_grad() && !all_finite<T>(params[i].grad()))
      throw NonFiniteError("adamw_step: non-finite gradient in parameter " + std::to_string(i));
  }

  const auto& h = state.hyper;
  const std::uint64_t t = state.step + 1;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  const T decay = static_cast<T>(1.0 - h.lr * h.weight_decay);
  const T b1 = static_cast<T>(h.beta1), b2 = static_cast<T>(h.beta2);
  const T step_size = static_cast<T>(h.lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(h.eps);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].mutable_value().data;
    const bool has_grad = params[i].has_grad();
    auto grad = params[i].grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const T g = has_grad ? grad[j] : T(0);
      p[j] *= decay;
      m[j] = b1 * m[j] + (T(1) - b1) * g;
      v[j] = b2 * v[j] + (T(1) - b2) * g * g;
      p[j] -= step_size * m[j] / (std::sqrt(v[j]) * inv_sqrt_bc2 + eps);
    }
  }
  state.step = t;
}

}  // namespace bivocoder::numerics
