#pragma once

#include <functional>
#include <vector>

#include "vex/common.hpp"
#include "vex/rng.hpp"

namespace vex {

template <typename T>
struct SampledActions {
  Mat<T> actions;   // [B x m]
  Vec<T> log_prob;  // [B]
};

/// Maps a batch of states to sampled actions and their log-densities.
template <typename T>
using PolicySampler = std::function<SampledActions<T>(const Mat<T>&, Rng&)>;

/// An H-step trajectory batch from an oracle or learned rollout source.
/// states/actions hold H+1 entries; the final pair is the bootstrap point.
/// masks[b][t] = 1 while transition t of element b is live and 0 from the
/// first terminal transition onward (non-increasing along t).
template <typename T>
struct RolloutBatch {
  std::vector<Mat<T>> states;   // H+1 of [B x n]
  std::vector<Mat<T>> actions;  // H+1 of [B x m]
  Mat<T> rewards;               // [B x H]
  Mat<T> log_probs;             // [B x (H+1)]
  Mat<T> masks;                 // [B x H]
  int nonfinite_truncations = 0;  // elements cut early by a non-finite model prediction

  int horizon() const { return static_cast<int>(states.size()) - 1; }
  Eigen::Index batch() const { return states.empty() ? 0 : states.front().rows(); }

  void validate() const {
    const int H = horizon();
    if (H < 0) throw ConfigError("rollout: empty");
    const Eigen::Index B = batch();
    if (static_cast<int>(actions.size()) != H + 1)
      throw ConfigError("rollout: actions/states length mismatch");
    if (rewards.rows() != B || rewards.cols() != H)
      throw ConfigError("rollout: rewards shape mismatch");
    if (log_probs.rows() != B || log_probs.cols() != H + 1)
      throw ConfigError("rollout: log_probs shape mismatch");
    if (masks.rows() != B || masks.cols() != H)
      throw ConfigError("rollout: masks shape mismatch");
    if (!all_finite(log_probs)) throw NumericError("rollout: non-finite log_probs");
    for (Eigen::Index b = 0; b < B; ++b)
      for (Eigen::Index t = 1; t < masks.cols(); ++t)
        if (masks(b, t) > masks(b, t - 1))
          throw ConfigError("rollout: masks must be non-increasing along the horizon");
  }
};

}  // namespace vex
