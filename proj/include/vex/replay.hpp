#pragma once

#include <cstdint>
#include <vector>

#include "vex/common.hpp"
#include "vex/rng.hpp"

namespace vex {

/// One environment step. `truncated` marks time-limit episode ends and
/// implies `done`; a transition is terminal only if done and not truncated
/// (never the case for the built-in tasks).
template <typename T>
struct Transition {
  Vec<T> state;
  Vec<T> action;
  T reward;
  Vec<T> next_state;
  bool done = false;
  bool truncated = false;
};

/// Column-packed batch of transitions for vectorized loss evaluation.
template <typename T>
struct TransitionBatch {
  Mat<T> states;       // [B x n]
  Mat<T> actions;      // [B x m]
  Vec<T> rewards;      // [B]
  Mat<T> next_states;  // [B x n]
  Vec<T> terminal;     // [B], 1 if done && !truncated

  Eigen::Index size() const { return states.rows(); }
};

/// Fixed-capacity ring buffer with uniform sampling over filled slots.
template <typename T>
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity, int state_dim, int action_dim)
      : capacity_(capacity), state_dim_(state_dim), action_dim_(action_dim) {
    if (capacity == 0) throw ConfigError("replay: capacity must be positive");
  }

  void push(const Transition<T>& t) {
    if (t.state.size() != state_dim_ || t.next_state.size() != state_dim_ ||
        t.action.size() != action_dim_)
      throw ConfigError("replay: transition shape mismatch");
    if (!all_finite(t.state) || !all_finite(t.action) || !all_finite(t.next_state) ||
        !std::isfinite(static_cast<double>(t.reward)))
      throw NumericError("replay: non-finite transition");
    if (t.truncated && !t.done) throw ConfigError("replay: truncated implies done");
    if (storage_.size() < capacity_) {
      storage_.push_back(t);
    } else {
      storage_[write_pos_] = t;
    }
    write_pos_ = (write_pos_ + 1) % capacity_;
    ++inserted_;
  }

  std::size_t size() const { return storage_.size(); }
  std::uint64_t inserted() const { return inserted_; }
  const Transition<T>& operator[](std::size_t i) const { return storage_[i]; }

  std::vector<std::size_t> sample_indices(Eigen::Index batch, Rng& rng) const {
    if (storage_.empty()) throw ConfigError("replay: sampling from empty buffer");
    std::vector<std::size_t> idx(static_cast<std::size_t>(batch));
    for (auto& i : idx)
      i = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(storage_.size())));
    return idx;
  }

  TransitionBatch<T> gather(const std::vector<std::size_t>& idx) const {
    TransitionBatch<T> b;
    const auto B = static_cast<Eigen::Index>(idx.size());
    b.states.resize(B, state_dim_);
    b.actions.resize(B, action_dim_);
    b.rewards.resize(B);
    b.next_states.resize(B, state_dim_);
    b.terminal.resize(B);
    for (Eigen::Index r = 0; r < B; ++r) {
      const auto& t = storage_[idx[static_cast<std::size_t>(r)]];
      b.states.row(r) = t.state.transpose();
      b.actions.row(r) = t.action.transpose();
      b.rewards(r) = t.reward;
      b.next_states.row(r) = t.next_state.transpose();
      b.terminal(r) = (t.done && !t.truncated) ? T(1) : T(0);
    }
    return b;
  }

  TransitionBatch<T> sample(Eigen::Index batch, Rng& rng) const {
    return gather(sample_indices(batch, rng));
  }

 private:
  std::size_t capacity_;
  int state_dim_;
  int action_dim_;
  std::vector<Transition<T>> storage_;
  std::size_t write_pos_ = 0;
  std::uint64_t inserted_ = 0;
};

}  // namespace vex
