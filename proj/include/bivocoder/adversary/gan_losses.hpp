#pragma once

#include <string>
#include <vector>

#include "bivocoder/adversary/discriminators.hpp"

namespace bivocoder::adversary {

namespace detail {

template <typename T>
Var<T> average(const std::vector<Var<T>>& terms) {
  numerics::require_dims(!terms.empty(), "loss over an empty set of sub-discriminators");
  return numerics::weighted_sum(terms, std::vector<T>(terms.size(), T(1) / static_cast<T>(terms.size())));
}

}  // namespace detail

/// Mean over sub-discriminators of mean(max(0, 1 - real)) + mean(max(0, 1 + fake)).
template <typename T>
Var<T> hinge_d_loss(const std::vector<Var<T>>& real, const std::vector<Var<T>>& fake) {
  numerics::require_dims(real.size() == fake.size(), "hinge_d_loss: real and fake score lists differ in length");
  std::vector<Var<T>> terms;
  for (std::size_t i = 0; i < real.size(); ++i) {
    auto r = numerics::mean(numerics::relu(numerics::add_scalar(numerics::neg(real[i]), T(1))));
    auto f = numerics::mean(numerics::relu(numerics::add_scalar(fake[i], T(1))));
    terms.push_back(numerics::add(r, f));
  }
  return detail::average(terms);
}

/// Mean over sub-discriminators of mean(max(0, 1 - fake)).
template <typename T>
Var<T> hinge_g_loss(const std::vector<Var<T>>& fake) {
  std::vector<Var<T>> terms;
  for (const auto& f : fake) terms.push_back(numerics::mean(numerics::relu(numerics::add_scalar(numerics::neg(f), T(1)))));
  return detail::average(terms);
}

/// Mean over all paired maps of mean |real - fake|.
template <typename T>
Var<T> feature_matching_loss(const std::vector<std::vector<Var<T>>>& real, const std::vector<std::vector<Var<T>>>& fake) {
  numerics::require_dims(real.size() == fake.size(), "feature_matching_loss: sub-discriminator count mismatch");
  std::vector<Var<T>> terms;
  for (std::size_t i = 0; i < real.size(); ++i) {
    numerics::require_dims(real[i].size() == fake[i].size(),
                           "feature_matching_loss: feature map count mismatch in entry " + std::to_string(i));
    for (std::size_t j = 0; j < real[i].size(); ++j) {
      numerics::require_dims(real[i][j].shape() == fake[i][j].shape(),
                             "feature_matching_loss: map shape mismatch at " + std::to_string(i) + "/" +
                                 std::to_string(j));
      terms.push_back(numerics::mean(numerics::abs(numerics::sub(real[i][j], fake[i][j]))));
    }
  }
  return detail::average(terms);
}

template <typename T>
std::vector<Var<T>> scores(const std::vector<DiscriminatorOutput<T>>& outs) {
  std::vector<Var<T>> s;
  for (const auto& o : outs) s.push_back(o.score);
  return s;
}

template <typename T>
std::vector<std::vector<Var<T>>> feature_maps(const std::vector<DiscriminatorOutput<T>>& outs) {
  std::vector<std::vector<Var<T>>> f;
  for (const auto& o : outs) f.push_back(o.features);
  return f;
}

}  // namespace bivocoder::adversary
