#pragma once

#include <cmath>

#include "vex/common.hpp"

namespace vex {

inline constexpr double kLogStdMin = -10.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kHalfLog2Pi = 0.91893853320467274178;  // log(2*pi)/2

template <typename T>
T softplus(T x) {
  return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// log(1 - tanh(u)^2) in a form that does not underflow for large |u|.
template <typename T>
T tanh_log_jacobian(T u) {
  return T(2) * (static_cast<T>(M_LN2) - u - softplus(T(-2) * u));
}

/// Diagonal Gaussian squashed through tanh: actions live in (-1, 1)^m.
/// Rows index batch elements; log_std is already clamped.
template <typename T>
struct SquashedGaussian {
  Mat<T> mean;
  Mat<T> log_std;
};

template <typename T>
Mat<T> clamp_log_std(const Mat<T>& raw) {
  return raw.cwiseMax(static_cast<T>(kLogStdMin)).cwiseMin(static_cast<T>(kLogStdMax));
}

template <typename T>
struct SquashedSample {
  Mat<T> action;   // tanh(mean + std * noise)
  Mat<T> pre_tanh;
  Vec<T> log_prob;
};

/// Reparameterized sample and its log-density. The log-density is the
/// diagonal Gaussian log-density at the pre-tanh point minus the tanh
/// change-of-variables term, accumulated over action dimensions.
template <typename T>
SquashedSample<T> sample_log_prob(const SquashedGaussian<T>& dist, const Mat<T>& noise) {
  if (noise.rows() != dist.mean.rows() || noise.cols() != dist.mean.cols())
    throw ConfigError("sample_log_prob: noise shape mismatch");
  SquashedSample<T> out;
  const Mat<T> std = dist.log_std.array().exp();
  out.pre_tanh = dist.mean + std.cwiseProduct(noise);
  out.action = out.pre_tanh.array().tanh();
  out.log_prob = Vec<T>::Zero(noise.rows());
  for (Eigen::Index i = 0; i < noise.rows(); ++i) {
    T lp = T(0);
    for (Eigen::Index d = 0; d < noise.cols(); ++d) {
      lp += -dist.log_std(i, d) - T(0.5) * noise(i, d) * noise(i, d) -
            static_cast<T>(kHalfLog2Pi);
      lp -= tanh_log_jacobian(out.pre_tanh(i, d));
    }
    out.log_prob(i) = lp;
  }
  return out;
}

/// Log-density of a given action in (-1, 1)^m (inverts the squash).
template <typename T>
T log_prob_of_action(const Mat<T>& mean, const Mat<T>& log_std, Eigen::Index row,
                     const Vec<T>& action) {
  T lp = T(0);
  for (Eigen::Index d = 0; d < action.size(); ++d) {
    const T u = std::atanh(action(d));
    const T sd = std::exp(log_std(row, d));
    const T z = (u - mean(row, d)) / sd;
    lp += -log_std(row, d) - T(0.5) * z * z - static_cast<T>(kHalfLog2Pi);
    lp -= tanh_log_jacobian(u);
  }
  return lp;
}

}  // namespace vex
