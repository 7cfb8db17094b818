#pragma once

#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "bivocoder/numerics.hpp"

namespace bivocoder::model {

using numerics::Shape;
using numerics::Tensor;
using numerics::Var;

template <typename T>
using ParamList = std::vector<std::pair<std::string, Var<T>>>;

namespace detail {

template <typename T>
Var<T> uniform_param(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<T>(u(rng));
  return Var<T>::parameter(std::move(t));
}

template <typename T>
Var<T> filled_param(Shape shape, T value) {
  return Var<T>::parameter(Tensor<T>(std::move(shape), value));
}

}  // namespace detail

template <typename T>
struct Conv1d {
  Var<T> weight, bias;
  std::size_t stride = 1, padding = 0, groups = 1;

  Conv1d() = default;
  Conv1d(std::size_t in, std::size_t out, std::size_t kernel, std::mt19937_64& rng, std::size_t stride_ = 1,
         std::size_t padding_ = 0, std::size_t groups_ = 1)
      : stride(stride_), padding(padding_), groups(groups_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in / groups * kernel));
    weight = detail::uniform_param<T>({out, in / groups, kernel}, bound, rng);
    bias = detail::uniform_param<T>({out}, bound, rng);
  }

  /// "Same"-length convolution with an odd kernel.
  static Conv1d same(std::size_t in, std::size_t out, std::size_t kernel, std::mt19937_64& rng, std::size_t groups = 1) {
    return Conv1d(in, out, kernel, rng, 1, kernel / 2, groups);
  }

  Var<T> operator()(const Var<T>& x) const { return numerics::conv1d(x, weight, bias, stride, padding, groups); }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
  }
};

template <typename T>
struct ConvTranspose1d {
  Var<T> weight, bias;
  std::size_t stride = 1, padding = 0;

  ConvTranspose1d() = default;
  ConvTranspose1d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride_, std::mt19937_64& rng)
      : stride(stride_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in * kernel / stride_));
    weight = detail::uniform_param<T>({in, out, kernel}, bound, rng);
    bias = detail::uniform_param<T>({out}, bound, rng);
  }

  Var<T> operator()(const Var<T>& x) const { return numerics::conv_transpose1d(x, weight, bias, stride, padding); }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
  }
};

template <typename T>
struct Conv2d {
  Var<T> weight, bias;
  numerics::Conv2dParams params;

  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, std::size_t kh, std::size_t kw, numerics::Conv2dParams p, std::mt19937_64& rng)
      : params(p) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in * kh * kw));
    weight = detail::uniform_param<T>({out, in, kh, kw}, bound, rng);
    bias = detail::uniform_param<T>({out}, bound, rng);
  }

  Var<T> operator()(const Var<T>& x) const { return numerics::conv2d(x, weight, bias, params); }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
  }
};

/// Depthwise large-kernel conv -> layer norm -> 1x1 expand -> GELU -> GRN -> 1x1 project, plus residual.
template <typename T>
struct ConvNeXtV2Block {
  Conv1d<T> depthwise;
  Var<T> norm_gamma, norm_beta;
  Conv1d<T> expand;
  Var<T> grn_gamma, grn_beta;
  Conv1d<T> project;
  T eps = T(1e-6);

  ConvNeXtV2Block() = default;
  ConvNeXtV2Block(std::size_t channels, std::size_t expansion, std::size_t kernel, T eps_, std::mt19937_64& rng)
      : eps(eps_) {
    const std::size_t wide = channels * expansion;
    depthwise = Conv1d<T>::same(channels, channels, kernel, rng, channels);
    norm_gamma = detail::filled_param<T>({channels}, T(1));
    norm_beta = detail::filled_param<T>({channels}, T(0));
    expand = Conv1d<T>(channels, wide, 1, rng);
    grn_gamma = detail::filled_param<T>({wide}, T(0));
    grn_beta = detail::filled_param<T>({wide}, T(0));
    project = Conv1d<T>(wide, channels, 1, rng);
  }

  std::size_t channels() const { return norm_gamma.size(); }

  Var<T> operator()(const Var<T>& x) const {
    numerics::require_dims(x.shape().size() == 3 && x.dim(1) == channels(),
                           "convnext block: expected " + std::to_string(channels()) + " channels, got shape " +
                               numerics::shape_string(x.shape()));
    auto h = depthwise(x);
    h = numerics::layer_norm(h, norm_gamma, norm_beta, eps);
    h = numerics::gelu(expand(h));
    h = numerics::grn(h, grn_gamma, grn_beta, eps);
    return numerics::add(x, project(h));
  }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    depthwise.collect(prefix + ".dwconv", out);
    out.emplace_back(prefix + ".norm.gamma", norm_gamma);
    out.emplace_back(prefix + ".norm.beta", norm_beta);
    expand.collect(prefix + ".pwconv1", out);
    out.emplace_back(prefix + ".grn.gamma", grn_gamma);
    out.emplace_back(prefix + ".grn.beta", grn_beta);
    project.collect(prefix + ".pwconv2", out);
  }
};

}  // namespace bivocoder::model
