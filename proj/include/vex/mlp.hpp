#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "vex/common.hpp"
#include "vex/rng.hpp"

namespace vex {

enum class Activation { relu, identity };

inline const char* activation_name(Activation a) {
  return a == Activation::relu ? "relu" : "identity";
}

template <typename T>
struct Layer {
  Mat<T> weight;  // [out x in]
  Vec<T> bias;    // [out]
  Activation act = Activation::identity;
};

/// Fully connected network parameters. Gradients reuse this type: a gradient
/// holds d(loss)/d(parameter) in the slot of each parameter.
template <typename T>
struct MlpParams {
  std::vector<Layer<T>> layers;

  Eigen::Index input_dim() const { return layers.front().weight.cols(); }
  Eigen::Index output_dim() const { return layers.back().weight.rows(); }

  void validate() const {
    if (layers.empty()) throw ConfigError("mlp: no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const auto& L = layers[l];
      if (L.weight.rows() != L.bias.size())
        throw ConfigError("mlp: bias/weight row mismatch at layer " + std::to_string(l));
      if (l > 0 && L.weight.cols() != layers[l - 1].weight.rows())
        throw ConfigError("mlp: layer shapes do not compose at layer " + std::to_string(l));
      if (!all_finite(L.weight) || !all_finite(L.bias))
        throw NumericError("mlp: non-finite parameter at layer " + std::to_string(l));
    }
  }

  std::string shape_string() const {
    std::string s = std::to_string(input_dim());
    for (const auto& L : layers) {
      s += "-" + std::to_string(L.weight.rows());
      s += (L.act == Activation::relu ? "r" : "i");
    }
    return s;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& L : layers) n += static_cast<std::size_t>(L.weight.size() + L.bias.size());
    return n;
  }
};

/// Zero-initialized network: sizes = {in, h1, ..., out}.
template <typename T>
MlpParams<T> make_mlp(const std::vector<int>& sizes, Activation hidden, Activation output) {
  if (sizes.size() < 2) throw ConfigError("make_mlp: need at least input and output size");
  MlpParams<T> p;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    Layer<T> layer;
    layer.weight = Mat<T>::Zero(sizes[l + 1], sizes[l]);
    layer.bias = Vec<T>::Zero(sizes[l + 1]);
    layer.act = (l + 2 == sizes.size()) ? output : hidden;
    p.layers.push_back(std::move(layer));
  }
  return p;
}

/// Glorot-uniform weights, zero biases.
template <typename T>
void init_glorot(MlpParams<T>& p, Rng& rng) {
  for (auto& L : p.layers) {
    const double bound = std::sqrt(6.0 / static_cast<double>(L.weight.rows() + L.weight.cols()));
    for (Eigen::Index i = 0; i < L.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < L.weight.cols(); ++j)
        L.weight(i, j) = static_cast<T>(rng.uniform(-bound, bound));
    L.bias.setZero();
  }
}

template <typename T>
MlpParams<T> zeros_like(const MlpParams<T>& p) {
  MlpParams<T> z;
  z.layers.reserve(p.layers.size());
  for (const auto& L : p.layers)
    z.layers.push_back({Mat<T>::Zero(L.weight.rows(), L.weight.cols()),
                        Vec<T>::Zero(L.bias.size()), L.act});
  return z;
}

template <typename T>
Mat<T> apply_activation(Activation act, const Mat<T>& pre) {
  if (act == Activation::relu) return pre.cwiseMax(T(0));
  return pre;
}

/// Column-wise concatenation, e.g. (state, action) -> network input.
template <typename T>
Mat<T> concat_columns(const Mat<T>& a, const Mat<T>& b) {
  Mat<T> x(a.rows(), a.cols() + b.cols());
  x.leftCols(a.cols()) = a;
  x.rightCols(b.cols()) = b;
  return x;
}

/// Intermediate values of one forward pass, consumed by mlp_backward.
template <typename T>
struct MlpCache {
  std::vector<Mat<T>> inputs;   // input to each layer
  std::vector<Mat<T>> preacts;  // pre-activation of each layer
};

template <typename T>
Mat<T> mlp_forward(const MlpParams<T>& p, const Mat<T>& x, MlpCache<T>* cache = nullptr) {
  if (x.cols() != p.input_dim())
    throw ConfigError("mlp_forward: input width " + std::to_string(x.cols()) +
                      " does not match first layer " + std::to_string(p.input_dim()));
  if (x.rows() < 1) throw ConfigError("mlp_forward: empty batch");
  if (cache) {
    cache->inputs.clear();
    cache->preacts.clear();
  }
  Mat<T> h = x;
  for (const auto& L : p.layers) {
    Mat<T> pre = h * L.weight.transpose();
    pre.rowwise() += L.bias.transpose();
    if (cache) {
      cache->inputs.push_back(std::move(h));
      cache->preacts.push_back(pre);
    }
    h = apply_activation(L.act, pre);
  }
  return h;
}

/// Exact reverse-mode gradients for one forward pass.
///  d_out:    d(loss)/d(output), same shape as the forward result.
///  grads:    filled with d(loss)/d(parameters); overwritten.
///  d_input:  optional d(loss)/d(input), for losses that differentiate
///            through the network input (e.g. dQ/da in the actor loss).
template <typename T>
void mlp_backward(const MlpParams<T>& p, const MlpCache<T>& cache, const Mat<T>& d_out,
                  MlpParams<T>& grads, Mat<T>* d_input = nullptr) {
  const auto n_layers = static_cast<std::ptrdiff_t>(p.layers.size());
  if (cache.inputs.size() != p.layers.size())
    throw ConfigError("mlp_backward: cache does not match network");
  if (grads.layers.size() != p.layers.size()) grads = zeros_like(p);

  Mat<T> d_pre = d_out;
  for (std::ptrdiff_t l = n_layers - 1; l >= 0; --l) {
    const auto& L = p.layers[static_cast<std::size_t>(l)];
    auto& G = grads.layers[static_cast<std::size_t>(l)];
    if (L.act == Activation::relu) {
      d_pre.array() *=
          (cache.preacts[static_cast<std::size_t>(l)].array() > T(0)).template cast<T>();
    }
    G.weight.noalias() = d_pre.transpose() * cache.inputs[static_cast<std::size_t>(l)];
    G.bias = d_pre.colwise().sum().transpose();
    if (l > 0 || d_input) {
      Mat<T> d_prev = d_pre * L.weight;
      if (l == 0 && d_input) *d_input = std::move(d_prev);
      else d_pre = std::move(d_prev);
    }
  }
}

/// Convenience: loss = mean over batch of ||f(x) - y||^2 / 2, with gradients.
template <typename T>
T mse_loss_grad(const MlpParams<T>& p, const Mat<T>& x, const Mat<T>& y, MlpParams<T>& grads) {
  MlpCache<T> cache;
  const Mat<T> out = mlp_forward(p, x, &cache);
  if (out.rows() != y.rows() || out.cols() != y.cols())
    throw ConfigError("mse_loss_grad: target shape mismatch");
  const Mat<T> resid = out - y;
  const T loss = resid.squaredNorm() / (T(2) * static_cast<T>(x.rows()));
  if (!std::isfinite(static_cast<double>(loss)))
    throw NumericError("mse_loss_grad: non-finite loss");
  const Mat<T> d_out = resid / static_cast<T>(x.rows());
  mlp_backward(p, cache, d_out, grads);
  return loss;
}

}  // namespace vex
