#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace accmer {

/// Inputs for one transition's priority weight: the current joint action
/// value, the bootstrapped target it is regressed to, an optimal-value
/// proxy, and each agent's probability of the action it actually took.
struct WeightInputs {
  double q_k = 0.0;
  double bellman_target = 0.0;
  double q_star_estimate = 0.0;
  std::vector<double> action_probs;
};

/// Joint action probability factor:
///   f(p) = 1 + sum_i prod_{j != i} p_j - n * prod_i p_i.
/// Computed with prefix/suffix products, so zeros need no special casing.
/// Maximized (value 2) exactly when one probability is 0 and the rest are 1;
/// f(all ones) = 1.
inline double f_pi(std::span<const double> action_probs) {
  const std::size_t n = action_probs.size();
  if (n < 2) throw std::invalid_argument("f_pi needs at least 2 agents");
  for (double p : action_probs)
    if (!(p >= 0.0 && p <= 1.0))
      throw std::domain_error("action probability out of [0,1]");

  std::vector<double> suffix(n + 1, 1.0);
  for (std::size_t i = n; i-- > 0;) suffix[i] = suffix[i + 1] * action_probs[i];
  double prefix = 1.0;
  double sum_excl = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum_excl += prefix * suffix[i + 1];
    prefix *= action_probs[i];
  }
  const double prod_all = suffix[0];
  return 1.0 + sum_excl - static_cast<double>(n) * prod_all;
}

/// Priority weight: |Q_k - target| * exp(-|Q_k - Q*|) * f(pi).
/// Zero Bellman error annihilates the product.
inline double optimal_weight(const WeightInputs& in) {
  if (!std::isfinite(in.q_k) || !std::isfinite(in.bellman_target) ||
      !std::isfinite(in.q_star_estimate))
    throw std::domain_error("non-finite weight input");
  const double bellman = std::abs(in.q_k - in.bellman_target);
  const double enhancement = std::exp(-std::abs(in.q_k - in.q_star_estimate));
  return bellman * enhancement * f_pi(in.action_probs);
}

/// Rescales a batch of non-negative weights to mean 1, preserving ratios.
/// An all-zero batch degenerates to all ones; `degenerate`, when non-null,
/// reports that so the caller can log it.
inline std::vector<double> normalize_batch(std::span<const double> weights,
                                           bool* degenerate = nullptr) {
  if (weights.empty()) throw std::invalid_argument("empty weight batch");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w))
      throw std::invalid_argument("negative weight");
    sum += w;
  }
  if (degenerate) *degenerate = (sum == 0.0);
  if (sum == 0.0) return std::vector<double>(weights.size(), 1.0);
  const double scale = static_cast<double>(weights.size()) / sum;
  std::vector<double> out(weights.begin(), weights.end());
  for (double& w : out) w *= scale;
  return out;
}

/// Probability the epsilon-greedy policy assigns to `chosen` given the
/// per-action values: eps/|U| + (1-eps) when chosen is the greedy action
/// (lowest-index argmax on ties), eps/|U| otherwise.
template <typename T>
double policy_prob(std::span<const T> q_values, std::size_t chosen, double eps) {
  if (q_values.empty()) throw std::invalid_argument("empty action-value vector");
  if (chosen >= q_values.size()) throw std::invalid_argument("chosen action out of range");
  if (!(eps >= 0.0 && eps <= 1.0)) throw std::domain_error("epsilon out of [0,1]");
  std::size_t best = 0;
  for (std::size_t i = 1; i < q_values.size(); ++i)
    if (q_values[i] > q_values[best]) best = i;
  double p = eps / static_cast<double>(q_values.size());
  if (chosen == best) p += 1.0 - eps;
  return p;
}

}  // namespace accmer
