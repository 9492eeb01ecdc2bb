#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "vex/common.hpp"

namespace vex {

// Named random streams. Each consumer of randomness in a training run owns
// its own stream so that, e.g., changing the rollout horizon does not shift
// the noise seen by environment resets or evaluation.
enum class Stream : std::uint64_t {
  init = 1,            // network weight initialization (policy, critics)
  env = 2,             // environment resets during data collection
  behavior = 3,        // behavior-policy action noise / warmup actions
  batch = 4,           // replay batch index draws
  target_actions = 5,  // action sampling on the critic-target path
  target_noise = 6,    // model noise on the critic-target path
  actor = 7,           // actor-loss action sampling
  temperature = 8,     // temperature-loss action sampling
  eval = 9,            // evaluation episode resets
  model_fit = 10,      // bootstrap resamples, shuffles, holdout split
  model_init = 11,     // ensemble weight initialization
  generic = 12,
};

/// Deterministic seeded generator. Normal draws use Box-Muller directly so
/// the byte stream does not depend on standard-library distribution
/// internals and carries no hidden cache state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
    std::seed_seq seq{seed, stream, std::uint64_t{0x9e3779b97f4a7c15ULL}};
    gen_.seed(seq);
  }
  Rng(std::uint64_t seed, Stream stream) : Rng(seed, static_cast<std::uint64_t>(stream)) {}

  /// Uniform in [0, 1) with 53 random bits.
  double canonical() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * canonical(); }

  /// Standard normal via Box-Muller (cosine branch only).
  double normal() {
    const double u1 = 1.0 - canonical();  // (0, 1]
    const double u2 = canonical();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  /// Uniform integer in [0, n), rejection sampled (no modulo bias).
  std::int64_t uniform_int(std::int64_t n) {
    const auto un = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    std::uint64_t r = gen_();
    while (r >= limit) r = gen_();
    return static_cast<std::int64_t>(r % un);
  }

  template <typename T>
  Mat<T> normal_mat(Eigen::Index rows, Eigen::Index cols) {
    Mat<T> out(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = static_cast<T>(normal());
    return out;
  }

  template <typename T>
  Mat<T> uniform_mat(Eigen::Index rows, Eigen::Index cols, double lo, double hi) {
    Mat<T> out(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = static_cast<T>(uniform(lo, hi));
    return out;
  }

 private:
  std::mt19937_64 gen_;
};

inline Rng make_stream(std::uint64_t seed, Stream stream) { return Rng(seed, stream); }

}  // namespace vex
