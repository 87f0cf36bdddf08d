#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "accmer/env.hpp"

namespace accmer {

/// One stored environment step. State snapshots are the flattened feature
/// vectors the learner consumes; observations are concatenated per agent.
struct Transition {
  std::vector<float> state;
  std::vector<float> obs;        // n_agents * obs_len
  std::vector<ActionId> actions; // n_agents
  float reward = 0.0f;
  std::vector<float> next_state;
  std::vector<float> next_obs;
  bool done = false;
  std::uint64_t step = 0;        // insertion step t

  bool operator==(const Transition&) const = default;
};

/// Fixed-capacity ring store. Slots fill 0..d-1 in order, then the cursor
/// wraps and overwrites strictly oldest-first. Occupied slots are always
/// the prefix [0, size()).
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : slots_(capacity) {
    if (capacity == 0) throw std::invalid_argument("buffer capacity must be >= 1");
  }

  std::size_t capacity() const { return slots_.size(); }
  std::size_t size() const { return fill_; }
  std::size_t write_cursor() const { return cursor_; }

  const Transition& operator[](std::size_t slot) const { return slots_[slot]; }

  std::size_t push(Transition t) {
    const std::size_t slot = cursor_;
    slots_[slot] = std::move(t);
    cursor_ = (cursor_ + 1) % slots_.size();
    fill_ = std::min(fill_ + 1, slots_.size());
    return slot;
  }

  /// Rebuilds a buffer from checkpointed contents.
  static ReplayBuffer restore(std::vector<Transition> slots, std::size_t fill,
                              std::size_t cursor) {
    ReplayBuffer b(slots.size());
    if (fill > slots.size() || cursor >= slots.size())
      throw std::invalid_argument("replay restore: fill/cursor out of range");
    b.slots_ = std::move(slots);
    b.fill_ = fill;
    b.cursor_ = cursor;
    return b;
  }

 private:
  std::vector<Transition> slots_;
  std::size_t cursor_ = 0;
  std::size_t fill_ = 0;
};

/// Dense per-slot priority weights, co-indexed with the replay buffer.
/// Kept as one flat array on purpose: ranking walks it sequentially and
/// the batch write-back touches exactly the sampled slots.
class WeightTable {
 public:
  explicit WeightTable(std::size_t capacity, double initial_weight = 1.0)
      : weights_(capacity, initial_weight),
        generations_(capacity, 0),
        initial_(initial_weight) {
    if (capacity == 0) throw std::invalid_argument("weight table capacity must be >= 1");
    if (!(initial_weight >= 0.0)) throw std::invalid_argument("negative weight");
  }

  std::size_t capacity() const { return weights_.size(); }
  std::size_t occupied() const { return occupied_; }
  double weight(std::size_t slot) const { return weights_[slot]; }
  std::uint32_t generation(std::size_t slot) const { return generations_[slot]; }
  std::span<const double> weights() const { return weights_; }

  /// Called by push() after the buffer write. The fresh slot gets the
  /// current maximum over occupied slots so it is immediately rankable;
  /// the first transition ever stored gets the initial weight.
  void notify_push(std::size_t slot) {
    weights_[slot] = occupied_ == 0 ? initial_ : max_occupied_weight();
    ++generations_[slot];
    occupied_ = std::min(std::max(occupied_, slot + 1), weights_.size());
  }

  /// Writes new weights to exactly the named slots.
  void update(std::span<const std::uint32_t> indices, std::span<const double> new_weights) {
    if (indices.size() != new_weights.size())
      throw std::invalid_argument("indices and weights differ in length");
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (indices[i] >= occupied_)
        throw std::out_of_range("weight update index out of range");
      if (!(new_weights[i] >= 0.0) || !std::isfinite(new_weights[i]))
        throw std::invalid_argument("negative weight");
    }
    for (std::size_t i = 0; i < indices.size(); ++i)
      weights_[indices[i]] = new_weights[i];
  }

  /// Multiplies every occupied slot's weight by gamma_w in (0,1].
  void apply_decay(double gamma_w) {
    if (!(gamma_w > 0.0 && gamma_w <= 1.0))
      throw std::invalid_argument("weight_decay out of (0,1]");
    if (gamma_w == 1.0) return;
    for (std::size_t i = 0; i < occupied_; ++i) weights_[i] *= gamma_w;
  }

  /// The k occupied slots with the largest weights, in descending weight
  /// order; ties break toward the lower slot index.
  std::vector<std::uint32_t> top_k(std::size_t k) const {
    if (k > occupied_)
      throw std::out_of_range("top_k: k exceeds occupied slot count");
    std::vector<std::uint32_t> idx(occupied_);
    std::iota(idx.begin(), idx.end(), 0u);
    const auto better = [this](std::uint32_t a, std::uint32_t b) {
      return weights_[a] != weights_[b] ? weights_[a] > weights_[b] : a < b;
    };
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k),
                      idx.end(), better);
    idx.resize(k);
    return idx;
  }

  double max_occupied_weight() const {
    double m = 0.0;
    for (std::size_t i = 0; i < occupied_; ++i) m = std::max(m, weights_[i]);
    return m;
  }

  /// Rebuilds a table from checkpointed contents.
  static WeightTable restore(std::vector<double> weights,
                             std::vector<std::uint32_t> generations,
                             std::size_t occupied, double initial_weight = 1.0) {
    if (weights.size() != generations.size() || occupied > weights.size())
      throw std::invalid_argument("weight table restore: shape mismatch");
    WeightTable t(weights.size(), initial_weight);
    for (double w : weights)
      if (!(w >= 0.0) || !std::isfinite(w))
        throw std::invalid_argument("negative weight");
    t.weights_ = std::move(weights);
    t.generations_ = std::move(generations);
    t.occupied_ = occupied;
    return t;
  }

 private:
  std::vector<double> weights_;
  std::vector<std::uint32_t> generations_;
  double initial_;
  std::size_t occupied_ = 0;
};

/// Stores a transition and registers the slot with the weight table.
inline std::size_t push(ReplayBuffer& buffer, WeightTable& table, Transition t) {
  const std::size_t slot = buffer.push(std::move(t));
  table.notify_push(slot);
  return slot;
}

}  // namespace accmer
