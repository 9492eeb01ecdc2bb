#pragma once

#include <Eigen/Core>

#include <charconv>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace vex {

// Batch convention: rows index batch elements, columns index features.
template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// Invalid shapes, ids, or option combinations.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Non-finite values where finite ones are required (losses, gradients).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Caller-supplied data outside the documented domain.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Filesystem failures (unwritable output directory, truncated file).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

/// Shortest decimal form that parses back to the same value. Used for all
/// CSV number output so emitted files round-trip exactly.
template <typename T>
std::string format_number(T value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

inline std::string format_number(int value) { return std::to_string(value); }
inline std::string format_number(std::int64_t value) { return std::to_string(value); }

}  // namespace vex
