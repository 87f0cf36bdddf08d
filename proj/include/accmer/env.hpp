#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "accmer/config.hpp"
#include "accmer/rng.hpp"

namespace accmer {

using ActionId = std::uint8_t;

inline constexpr ActionId kActionUp = 0;
inline constexpr ActionId kActionDown = 1;
inline constexpr ActionId kActionLeft = 2;
inline constexpr ActionId kActionRight = 3;
inline constexpr ActionId kActionStay = 4;
inline constexpr ActionId kActionCatch = 5;
inline constexpr int kNumActions = 6;

using Observation = std::vector<float>;

struct Cell {
  int row = 0;
  int col = 0;
  bool operator==(const Cell&) const = default;
};

struct EnvState {
  int grid_size = 0;
  std::vector<Cell> predators;
  std::vector<Cell> prey;
  std::vector<std::uint8_t> prey_alive;  // 1 = alive
  std::int64_t step_count = 0;
};

struct StepResult {
  EnvState state;
  std::vector<Observation> observations;
  double reward = 0.0;
  bool done = false;
  int captures = 0;      // prey taken by >= 2 adjacent catchers
  int solo_catches = 0;  // lone-catcher events (punished)
};

struct ResetResult {
  EnvState state;
  std::vector<Observation> observations;
};

/// Grid-world pursuit task. Predators move on a square grid; a prey is
/// captured when at least two predators in its 4-neighborhood pick `catch`
/// in the same step, for a shared +1 reward. A lone adjacent catcher adds
/// the (non-positive) punishment instead. Surviving prey drift uniformly
/// at random to a free adjacent cell or stay put.
///
/// The env object holds only the task parameters; state is explicit in
/// every call, so tests can inject arbitrary positions.
class PredatorPreyEnv {
 public:
  static constexpr int kObsRadius = 2;                     // 5x5 window
  static constexpr int kObsWindow = 2 * kObsRadius + 1;
  static constexpr int kObsChannels = 3;                   // wall, predator, prey
  static constexpr std::int64_t kEpisodeLimit = 200;

  explicit PredatorPreyEnv(const RunConfig& cfg)
      : n_agents_(cfg.n_agents),
        n_prey_(cfg.n_prey),
        grid_(cfg.grid_size),
        punishment_(cfg.punishment) {}

  int n_agents() const { return n_agents_; }
  int n_prey() const { return n_prey_; }
  int grid_size() const { return grid_; }

  /// Length of one agent's flattened observation vector.
  static constexpr int obs_length() { return kObsChannels * kObsWindow * kObsWindow; }

  /// Length of the global state feature vector (see state_features).
  int state_length() const { return 2 * n_agents_ + 3 * n_prey_ + 1; }

  /// Places predators and prey uniformly at random on distinct cells.
  ResetResult reset(RngStream& rng) const {
    const int cells = grid_ * grid_;
    const int entities = n_agents_ + n_prey_;
    if (entities > cells)
      throw std::runtime_error("grid too small: " + std::to_string(entities) +
                               " entities on " + std::to_string(cells) + " cells");
    // Partial Fisher-Yates over all cell indices; take the first `entities`.
    std::vector<int> idx(cells);
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < entities; ++i) {
      const auto j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(cells - i)));
      std::swap(idx[i], idx[j]);
    }
    EnvState s;
    s.grid_size = grid_;
    s.predators.resize(n_agents_);
    for (int a = 0; a < n_agents_; ++a)
      s.predators[a] = {idx[a] / grid_, idx[a] % grid_};
    s.prey.resize(n_prey_);
    for (int p = 0; p < n_prey_; ++p)
      s.prey[p] = {idx[n_agents_ + p] / grid_, idx[n_agents_ + p] % grid_};
    s.prey_alive.assign(n_prey_, 1);
    s.step_count = 0;
    auto obs = observe_all(s);
    return {std::move(s), std::move(obs)};
  }

  /// Applies one joint action. Movement resolves in agent-index order;
  /// a move onto a wall or another predator leaves the mover in place.
  StepResult step(const EnvState& prev, std::span<const ActionId> joint,
                  RngStream& rng) const {
    if (static_cast<int>(joint.size()) != n_agents_)
      throw std::invalid_argument("joint action length != n_agents");
    for (ActionId a : joint)
      if (a >= kNumActions) throw std::invalid_argument("invalid action id");

    StepResult r;
    r.state = prev;
    EnvState& s = r.state;

    // Predator movement.
    for (int a = 0; a < n_agents_; ++a) {
      const Cell target = moved(s.predators[a], joint[a]);
      if (target == s.predators[a]) continue;
      if (!inside(target)) continue;
      bool blocked = false;
      for (int o = 0; o < n_agents_; ++o)
        if (o != a && s.predators[o] == target) { blocked = true; break; }
      if (!blocked) s.predators[a] = target;
    }

    // Capture resolution on post-move predator positions.
    for (int p = 0; p < n_prey_; ++p) {
      if (!s.prey_alive[p]) continue;
      int catchers = 0;
      for (int a = 0; a < n_agents_; ++a)
        if (joint[a] == kActionCatch && adjacent(s.predators[a], s.prey[p]))
          ++catchers;
      if (catchers >= 2) {
        s.prey_alive[p] = 0;
        r.reward += 1.0;
        ++r.captures;
      } else if (catchers == 1) {
        r.reward += punishment_;
        ++r.solo_catches;
      }
    }

    // Surviving prey drift: uniform over {stay} + free adjacent cells.
    for (int p = 0; p < n_prey_; ++p) {
      if (!s.prey_alive[p]) continue;
      Cell options[5];
      int n_opt = 0;
      options[n_opt++] = s.prey[p];
      for (ActionId m : {kActionUp, kActionDown, kActionLeft, kActionRight}) {
        const Cell c = moved(s.prey[p], m);
        if (inside(c) && free_cell(s, c)) options[n_opt++] = c;
      }
      s.prey[p] = options[rng.below(static_cast<std::uint64_t>(n_opt))];
    }

    s.step_count = prev.step_count + 1;
    const bool all_caught =
        std::none_of(s.prey_alive.begin(), s.prey_alive.end(),
                     [](std::uint8_t v) { return v != 0; });
    r.done = all_caught || s.step_count >= kEpisodeLimit;
    r.observations = observe_all(s);
    return r;
  }

  /// Egocentric 5x5 window, channel planes [wall | other predators | live
  /// prey], row-major within each plane. Cells beyond the boundary read as
  /// wall. Pure function of the state.
  Observation observe(const EnvState& s, int agent) const {
    if (agent < 0 || agent >= n_agents_)
      throw std::invalid_argument("agent index out of range");
    Observation o(obs_length(), 0.0f);
    const Cell me = s.predators[agent];
    const int plane = kObsWindow * kObsWindow;
    for (int dr = -kObsRadius; dr <= kObsRadius; ++dr) {
      for (int dc = -kObsRadius; dc <= kObsRadius; ++dc) {
        const int w = (dr + kObsRadius) * kObsWindow + (dc + kObsRadius);
        const Cell c{me.row + dr, me.col + dc};
        if (!inside(c)) {
          o[w] = 1.0f;  // wall plane
          continue;
        }
        for (int a = 0; a < n_agents_; ++a)
          if (a != agent && s.predators[a] == c) o[plane + w] = 1.0f;
        for (int p = 0; p < n_prey_; ++p)
          if (s.prey_alive[p] && s.prey[p] == c) o[2 * plane + w] = 1.0f;
      }
    }
    return o;
  }

  std::vector<Observation> observe_all(const EnvState& s) const {
    std::vector<Observation> all;
    all.reserve(n_agents_);
    for (int a = 0; a < n_agents_; ++a) all.push_back(observe(s, a));
    return all;
  }

  /// Compact global features for the mixer: predator positions, prey
  /// positions (zeroed once captured), alive flags, and step fraction.
  std::vector<float> state_features(const EnvState& s) const {
    std::vector<float> f;
    f.reserve(state_length());
    const float inv = grid_ > 1 ? 1.0f / static_cast<float>(grid_ - 1) : 0.0f;
    for (const Cell& c : s.predators) {
      f.push_back(static_cast<float>(c.row) * inv);
      f.push_back(static_cast<float>(c.col) * inv);
    }
    for (int p = 0; p < n_prey_; ++p) {
      if (s.prey_alive[p]) {
        f.push_back(static_cast<float>(s.prey[p].row) * inv);
        f.push_back(static_cast<float>(s.prey[p].col) * inv);
      } else {
        f.push_back(0.0f);
        f.push_back(0.0f);
      }
    }
    for (int p = 0; p < n_prey_; ++p)
      f.push_back(s.prey_alive[p] ? 1.0f : 0.0f);
    f.push_back(static_cast<float>(s.step_count) / static_cast<float>(kEpisodeLimit));
    return f;
  }

 private:
  bool inside(const Cell& c) const {
    return c.row >= 0 && c.row < grid_ && c.col >= 0 && c.col < grid_;
  }

  static bool adjacent(const Cell& a, const Cell& b) {
    return std::abs(a.row - b.row) + std::abs(a.col - b.col) == 1;
  }

  static Cell moved(const Cell& c, ActionId a) {
    switch (a) {
      case kActionUp: return {c.row - 1, c.col};
      case kActionDown: return {c.row + 1, c.col};
      case kActionLeft: return {c.row, c.col - 1};
      case kActionRight: return {c.row, c.col + 1};
      default: return c;  // stay / catch
    }
  }

  bool free_cell(const EnvState& s, const Cell& c) const {
    for (const Cell& p : s.predators)
      if (p == c) return false;
    for (int p = 0; p < n_prey_; ++p)
      if (s.prey_alive[p] && s.prey[p] == c) return false;
    return true;
  }

  int n_agents_;
  int n_prey_;
  int grid_;
  double punishment_;
};

/// Transition-log CSV: one row per environment step.
inline std::string transition_log_header() {
  return "# accmer-transitions v1\nstep,actions,reward,captures,solo_catches\n";
}

inline std::string transition_log_row(std::int64_t step, std::span<const ActionId> joint,
                                      double reward, int captures, int solo_catches) {
  std::string row = std::to_string(step) + ",";
  for (std::size_t i = 0; i < joint.size(); ++i) {
    if (i) row += ';';
    row += std::to_string(static_cast<int>(joint[i]));
  }
  row += "," + detail::fmt_double(reward) + "," + std::to_string(captures) + "," +
         std::to_string(solo_catches) + "\n";
  return row;
}

}  // namespace accmer
