#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "vex/common.hpp"
#include "vex/mlp.hpp"

namespace vex {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment accumulators mirroring an MlpParams layout.
template <typename T>
struct AdamState {
  std::vector<Mat<T>> m_w, v_w;
  std::vector<Vec<T>> m_b, v_b;
  std::int64_t step = 0;

  static AdamState like(const MlpParams<T>& p) {
    AdamState s;
    for (const auto& L : p.layers) {
      s.m_w.push_back(Mat<T>::Zero(L.weight.rows(), L.weight.cols()));
      s.v_w.push_back(Mat<T>::Zero(L.weight.rows(), L.weight.cols()));
      s.m_b.push_back(Vec<T>::Zero(L.bias.size()));
      s.v_b.push_back(Vec<T>::Zero(L.bias.size()));
    }
    return s;
  }
};

namespace detail {

template <typename T, typename P, typename G, typename M, typename V>
void adam_apply(P&& param, const G& grad, M&& m, V&& v, std::int64_t step,
                const AdamConfig& c) {
  const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
  const T corr1 = T(1) - static_cast<T>(std::pow(c.beta1, static_cast<double>(step)));
  const T corr2 = T(1) - static_cast<T>(std::pow(c.beta2, static_cast<double>(step)));
  m = b1 * m + (T(1) - b1) * grad.array();
  v = b2 * v + (T(1) - b2) * grad.array().square();
  param.array() -= static_cast<T>(c.lr) * (m / corr1) /
                   ((v / corr2).sqrt() + static_cast<T>(c.eps));
}

}  // namespace detail

/// One Adam update with bias correction. Shapes must agree; non-finite
/// gradients are rejected.
template <typename T>
void adam_step(MlpParams<T>& params, const MlpParams<T>& grads, AdamState<T>& state,
               const AdamConfig& cfg) {
  if (grads.layers.size() != params.layers.size() || state.m_w.size() != params.layers.size())
    throw ConfigError("adam_step: parameter/gradient/state layout mismatch");
  state.step += 1;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& G = grads.layers[l];
    auto& P = params.layers[l];
    if (G.weight.rows() != P.weight.rows() || G.weight.cols() != P.weight.cols())
      throw ConfigError("adam_step: gradient shape mismatch");
    if (!all_finite(G.weight) || !all_finite(G.bias))
      throw NumericError("adam_step: non-finite gradient at layer " + std::to_string(l));
    auto mw = state.m_w[l].array();
    auto vw = state.v_w[l].array();
    detail::adam_apply<T>(P.weight, G.weight, mw, vw, state.step, cfg);
    auto mb = state.m_b[l].array();
    auto vb = state.v_b[l].array();
    detail::adam_apply<T>(P.bias, G.bias, mb, vb, state.step, cfg);
  }
}

template <typename T>
struct AdamVecState {
  Vec<T> m, v;
  std::int64_t step = 0;
  static AdamVecState like(const Vec<T>& p) {
    return {Vec<T>::Zero(p.size()), Vec<T>::Zero(p.size()), 0};
  }
};

template <typename T>
void adam_step_vec(Vec<T>& param, const Vec<T>& grad, AdamVecState<T>& state,
                   const AdamConfig& cfg) {
  if (grad.size() != param.size()) throw ConfigError("adam_step_vec: shape mismatch");
  if (!all_finite(grad)) throw NumericError("adam_step_vec: non-finite gradient");
  state.step += 1;
  auto m = state.m.array();
  auto v = state.v.array();
  detail::adam_apply<T>(param, grad, m, v, state.step, cfg);
}

template <typename T>
struct AdamScalarState {
  T m = 0, v = 0;
  std::int64_t step = 0;
};

template <typename T>
void adam_step_scalar(T& param, T grad, AdamScalarState<T>& state, const AdamConfig& cfg) {
  if (!std::isfinite(static_cast<double>(grad)))
    throw NumericError("adam_step_scalar: non-finite gradient");
  state.step += 1;
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  state.m = b1 * state.m + (T(1) - b1) * grad;
  state.v = b2 * state.v + (T(1) - b2) * grad * grad;
  const T mhat = state.m / (T(1) - static_cast<T>(std::pow(cfg.beta1, state.step)));
  const T vhat = state.v / (T(1) - static_cast<T>(std::pow(cfg.beta2, state.step)));
  param -= static_cast<T>(cfg.lr) * mhat / (std::sqrt(vhat) + static_cast<T>(cfg.eps));
}

}  // namespace vex
