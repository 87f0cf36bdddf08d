#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "accmer/config.hpp"
#include "accmer/env.hpp"
#include "accmer/net.hpp"
#include "accmer/prioritization.hpp"
#include "accmer/replay.hpp"
#include "accmer/rng.hpp"

namespace accmer {

/// Linear epsilon anneal from epsilon_start to epsilon_end over
/// epsilon_anneal_steps, constant afterwards.
inline double epsilon_at(const RunConfig& cfg, std::int64_t step) {
  if (step >= cfg.epsilon_anneal_steps) return cfg.epsilon_end;
  const double frac = static_cast<double>(step) /
                      static_cast<double>(cfg.epsilon_anneal_steps);
  return cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac;
}

/// Per-agent feedforward Q network (shared parameters across agents).
/// input -> hidden (rectifier) -> one value per action.
template <typename T>
struct AgentNet {
  Linear<T> l1, l2;

  void resize(int input_dim, int hidden, int n_actions) {
    l1.resize(input_dim, hidden);
    l2.resize(hidden, n_actions);
  }

  void init_uniform(RngStream& rng) {
    l1.init_uniform(rng);
    l2.init_uniform(rng);
  }

  /// h receives the post-rectifier hidden activations (needed by backward).
  void forward(const T* x, T* h, T* q) const {
    l1.forward(x, h);
    for (int i = 0; i < l1.out; ++i) h[i] = relu(h[i]);
    l2.forward(h, q);
  }

  /// gq = dL/dq. gh is scratch of hidden size; gx optional.
  void backward(const T* x, const T* h, const T* gq, T* gh, T* gx) {
    l2.backward(h, gq, gh);
    for (int i = 0; i < l1.out; ++i)
      if (h[i] <= T(0)) gh[i] = T(0);
    l1.backward(x, gh, gx);
  }
};

/// Monotonic state-conditioned mixer. Hypernetworks map the global state
/// features to the mixing weights; both weight layers pass through an
/// absolute value, so dQ_tot/dQ_a >= 0 everywhere. A separate state-value
/// head (v1 -> rectifier -> v2) supplies the unconstrained offset.
template <typename T>
struct MixerNet {
  int n_agents = 0;
  int state_len = 0;
  int mix_hidden = 0;
  Linear<T> hw1;  // state -> mix_hidden * n_agents, |.| = first mixing weights
  Linear<T> hb1;  // state -> mix_hidden, first mixing bias
  Linear<T> hw2;  // state -> mix_hidden, |.| = second mixing weights
  Linear<T> v1, v2;

  /// Recorded activations for one forward pass, plus backward scratch.
  struct Work {
    std::vector<T> w1raw, b1, pre1, h1, w2raw, vh;
    std::vector<T> gvh, gpre1, gw1raw, gw2raw;
    void resize(int mix_hidden, int n_agents) {
      w1raw.resize(static_cast<std::size_t>(mix_hidden) * n_agents);
      gw1raw.resize(w1raw.size());
      b1.resize(mix_hidden);
      pre1.resize(mix_hidden);
      h1.resize(mix_hidden);
      w2raw.resize(mix_hidden);
      vh.resize(mix_hidden);
      gvh.resize(mix_hidden);
      gpre1.resize(mix_hidden);
      gw2raw.resize(mix_hidden);
    }
  };

  void resize(int agents, int state_dim, int hidden) {
    n_agents = agents;
    state_len = state_dim;
    mix_hidden = hidden;
    hw1.resize(state_dim, hidden * agents);
    hb1.resize(state_dim, hidden);
    hw2.resize(state_dim, hidden);
    v1.resize(state_dim, hidden);
    v2.resize(hidden, 1);
  }

  void init_uniform(RngStream& rng) {
    hw1.init_uniform(rng);
    hb1.init_uniform(rng);
    hw2.init_uniform(rng);
    v1.init_uniform(rng);
    v2.init_uniform(rng);
  }

  T forward(const T* state, const T* q, Work& wk) const {
    hw1.forward(state, wk.w1raw.data());
    hb1.forward(state, wk.b1.data());
    hw2.forward(state, wk.w2raw.data());
    v1.forward(state, wk.vh.data());
    for (int k = 0; k < mix_hidden; ++k) wk.vh[k] = relu(wk.vh[k]);
    for (int k = 0; k < mix_hidden; ++k) {
      T acc = wk.b1[k];
      const T* row = wk.w1raw.data() + static_cast<std::size_t>(k) * n_agents;
      for (int a = 0; a < n_agents; ++a) acc += std::abs(row[a]) * q[a];
      wk.pre1[k] = acc;
      wk.h1[k] = elu(acc);
    }
    T v = T(0);
    v2.forward(wk.vh.data(), &v);
    T qtot = v;
    for (int k = 0; k < mix_hidden; ++k) qtot += std::abs(wk.w2raw[k]) * wk.h1[k];
    return qtot;
  }

  /// gqtot = dL/dQ_tot. Accumulates hypernet gradients; writes dL/dQ_a
  /// into gq when non-null.
  void backward(const T* state, const T* q, Work& wk, T gqtot, T* gq) {
    const auto sgn = [](T x) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); };

    // State-value head.
    v2.backward(wk.vh.data(), &gqtot, wk.gvh.data());
    for (int k = 0; k < mix_hidden; ++k)
      if (wk.vh[k] <= T(0)) wk.gvh[k] = T(0);
    v1.backward(state, wk.gvh.data(), nullptr);

    // Second mixing layer (through |.|).
    for (int k = 0; k < mix_hidden; ++k)
      wk.gw2raw[k] = gqtot * wk.h1[k] * sgn(wk.w2raw[k]);
    hw2.backward(state, wk.gw2raw.data(), nullptr);

    // First mixing layer.
    for (int k = 0; k < mix_hidden; ++k)
      wk.gpre1[k] = gqtot * std::abs(wk.w2raw[k]) * elu_grad(wk.pre1[k]);
    hb1.backward(state, wk.gpre1.data(), nullptr);
    for (int k = 0; k < mix_hidden; ++k) {
      const T* row = wk.w1raw.data() + static_cast<std::size_t>(k) * n_agents;
      T* grow = wk.gw1raw.data() + static_cast<std::size_t>(k) * n_agents;
      for (int a = 0; a < n_agents; ++a) grow[a] = wk.gpre1[k] * q[a] * sgn(row[a]);
    }
    hw1.backward(state, wk.gw1raw.data(), nullptr);

    if (gq) {
      for (int a = 0; a < n_agents; ++a) gq[a] = T(0);
      for (int k = 0; k < mix_hidden; ++k) {
        const T* row = wk.w1raw.data() + static_cast<std::size_t>(k) * n_agents;
        for (int a = 0; a < n_agents; ++a) gq[a] += std::abs(row[a]) * wk.gpre1[k];
      }
    }
  }
};

template <typename T>
struct LearnerOptions {
  int hidden = 64;
  int mix_hidden = 32;
  std::optional<double> weight_clip;  // cap on raw priority weights, off by default
  double grad_norm_clip = 10.0;       // global L2 clip before Adam; 0 disables
};

template <typename T>
struct UpdateResult {
  double loss = 0.0;
  std::vector<double> raw_weights;  // Lemma-style weights, pre-normalization
  bool degenerate_batch = false;    // all-zero weight batch fell back to ones
  bool skipped = false;             // non-finite gradients, step not applied
};

/// Value-decomposition Q-learner: shared per-agent nets, monotonic mixer,
/// target copies of both, Adam, and the weighted TD update.
template <typename T>
class Learner {
 public:
  Learner(const RunConfig& cfg, int obs_len, int state_len,
          LearnerOptions<T> opt, RngStream& init_rng)
      : cfg_(cfg),
        obs_len_(obs_len),
        state_len_(state_len),
        opt_(opt),
        adam_(cfg.learning_rate) {
    agent.resize(input_dim(), opt.hidden, kNumActions);
    mixer.resize(cfg.n_agents, state_len, opt.mix_hidden);
    agent.init_uniform(init_rng);
    mixer.init_uniform(init_rng);
    sync_targets();
    work_.resize(opt.mix_hidden, cfg.n_agents);
    scratch_input_.resize(input_dim());
    scratch_hidden_.resize(opt.hidden);
    scratch_q_.resize(kNumActions);
    scratch_gh_.resize(opt.hidden);
    scratch_state_.resize(state_len);
    scratch_qs_.resize(cfg.n_agents);
  }

  int obs_len() const { return obs_len_; }
  int state_len() const { return state_len_; }
  int n_agents() const { return cfg_.n_agents; }
  int input_dim() const { return obs_len_ + cfg_.n_agents; }
  int hidden() const { return opt_.hidden; }
  int mix_hidden() const { return opt_.mix_hidden; }
  const RunConfig& config() const { return cfg_; }
  std::uint64_t skipped_steps() const { return skipped_steps_; }

  AgentNet<T> agent, agent_target;
  MixerNet<T> mixer, mixer_target;

  /// Agent-net input: observation followed by the agent's one-hot id.
  void make_input(std::span<const float> obs, int agent_id, T* out) const {
    for (int i = 0; i < obs_len_; ++i) out[i] = static_cast<T>(obs[i]);
    for (int a = 0; a < cfg_.n_agents; ++a)
      out[obs_len_ + a] = (a == agent_id) ? T(1) : T(0);
  }

  /// Per-action values of one agent under `net` (no recording).
  void agent_q(const AgentNet<T>& net, std::span<const float> obs, int agent_id,
               T* q) {
    make_input(obs, agent_id, scratch_input_.data());
    net.forward(scratch_input_.data(), scratch_hidden_.data(), q);
  }

  static int argmax_action(const T* q) {
    int best = 0;
    for (int i = 1; i < kNumActions; ++i)
      if (q[i] > q[best]) best = i;
    return best;
  }

  /// Epsilon-greedy joint action. Per agent: one uniform draw decides
  /// exploration, a second picks the random action when exploring.
  void select_actions(std::span<const Observation> obs, double eps, RngStream& rng,
                      std::span<ActionId> out) {
    for (int a = 0; a < cfg_.n_agents; ++a) {
      if (rng.unit() < eps) {
        out[a] = static_cast<ActionId>(rng.below(kNumActions));
      } else {
        agent_q(agent, obs[a], a, scratch_q_.data());
        out[a] = static_cast<ActionId>(argmax_action(scratch_q_.data()));
      }
    }
  }

  /// Greedy joint action under `net` from concatenated per-agent obs.
  void greedy_actions(const AgentNet<T>& net, std::span<const float> obs_concat,
                      std::span<ActionId> out) {
    for (int a = 0; a < cfg_.n_agents; ++a) {
      agent_q(net, obs_concat.subspan(static_cast<std::size_t>(a) * obs_len_, obs_len_),
              a, scratch_q_.data());
      out[a] = static_cast<ActionId>(argmax_action(scratch_q_.data()));
    }
  }

  /// Joint action value of the online nets at (state, obs, actions).
  T q_tot(std::span<const float> state, std::span<const float> obs_concat,
          std::span<const ActionId> actions) {
    return q_tot_with(agent, mixer, state, obs_concat, actions);
  }

  /// One-step bootstrapped target from the target networks:
  /// r + gamma_env * Q_tot^target(s', greedy joint action), 0 bootstrap when done.
  T td_target(const Transition& tr, double gamma_env) {
    if (tr.done) return static_cast<T>(tr.reward);
    std::vector<ActionId> greedy(cfg_.n_agents);
    greedy_actions(agent_target, tr.next_obs, greedy);
    const T next_q = q_tot_with(agent_target, mixer_target, tr.next_state,
                                tr.next_obs, greedy);
    return static_cast<T>(tr.reward) + static_cast<T>(gamma_env) * next_q;
  }

  /// Greedy joint value of the target nets at the *current* state; proxy
  /// for the optimal value in the priority weight.
  T q_star_estimate(const Transition& tr) {
    std::vector<ActionId> greedy(cfg_.n_agents);
    greedy_actions(agent_target, tr.obs, greedy);
    return q_tot_with(agent_target, mixer_target, tr.state, tr.obs, greedy);
  }

  /// Weighted TD loss, L = sum_i w_i (Q_tot_i - y_i)^2, with targets held
  /// constant. Fills fresh parameter gradients; returns the loss.
  double weighted_loss(std::span<const Transition> batch, std::span<const T> targets,
                       std::span<const T> weights) {
    if (batch.size() != targets.size() || batch.size() != weights.size())
      throw std::invalid_argument("batch, targets, weights differ in length");
    forward_batch([&](std::size_t i) -> const Transition& { return batch[i]; },
                  batch.size());
    std::vector<double> w(weights.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = static_cast<double>(weights[i]);
    std::vector<double> y(targets.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<double>(targets[i]);
    return loss_and_backward(
        [&](std::size_t i) -> const Transition& { return batch[i]; }, w, y);
  }

  /// One full update on sampled slots: targets and priority weights from
  /// the current nets, mean-1 normalized loss weights, gradient step.
  /// Raw (pre-normalization) weights are returned for table write-back.
  UpdateResult<T> train_batch(const ReplayBuffer& buffer,
                              std::span<const std::uint32_t> indices, double eps) {
    const auto get = [&](std::size_t i) -> const Transition& {
      return buffer[indices[i]];
    };
    const std::size_t n = indices.size();
    forward_batch(get, n);

    UpdateResult<T> res;
    res.raw_weights.resize(n);
    std::vector<double> targets(n);
    std::vector<double> probs(cfg_.n_agents);
    for (std::size_t i = 0; i < n; ++i) {
      const Transition& tr = get(i);
      const double y = static_cast<double>(td_target(tr, cfg_.env_discount));
      const double qstar = static_cast<double>(q_star_estimate(tr));
      const double qk = static_cast<double>(batch_qtot_[i]);
      for (int a = 0; a < cfg_.n_agents; ++a) {
        const T* qvec = batch_qvec(i, a);
        probs[a] = policy_prob(std::span<const T>(qvec, kNumActions),
                               tr.actions[a], eps);
      }
      WeightInputs in{qk, y, qstar, probs};
      double w = optimal_weight(in);
      if (opt_.weight_clip) w = std::min(w, *opt_.weight_clip);
      res.raw_weights[i] = w;
      targets[i] = y;
    }

    const std::vector<double> norm = normalize_batch(res.raw_weights,
                                                     &res.degenerate_batch);
    res.loss = loss_and_backward(get, norm, targets);
    res.skipped = !optimize_step();
    return res;
  }

  /// Adam over every parameter tensor, after the optional global-norm
  /// gradient clip; skips (and counts) non-finite steps.
  bool optimize_step() {
    if (opt_.grad_norm_clip > 0) clip_gradients(opt_.grad_norm_clip);
    auto tensors = collect_tensors();
    const bool ok = adam_.step(tensors);
    if (!ok) ++skipped_steps_;
    return ok;
  }

  void clip_gradients(double max_norm) {
    double sq = 0.0;
    for (auto& [p, g] : collect_tensors())
      for (T v : g) sq += static_cast<double>(v) * static_cast<double>(v);
    const double norm = std::sqrt(sq);
    if (!(norm > max_norm)) return;  // also leaves non-finite norms to Adam
    const T scale = static_cast<T>(max_norm / norm);
    for_each_grad([scale](std::vector<T>& g) {
      for (T& v : g) v *= scale;
    });
  }

  void zero_grad() {
    for_each_grad([](std::vector<T>& g) { std::fill(g.begin(), g.end(), T(0)); });
  }

  template <typename Fn>
  void for_each_grad(Fn&& fn) {
    for (Linear<T>* l : {&agent.l1, &agent.l2, &mixer.hw1, &mixer.hb1, &mixer.hw2,
                         &mixer.v1, &mixer.v2}) {
      fn(l->gw);
      fn(l->gb);
    }
  }

  /// Deep copy of the online nets into the target copies.
  void sync_targets() {
    agent_target = agent;
    mixer_target = mixer;
  }

  /// Parameter/gradient tensor pairs in checkpoint and optimizer order.
  std::vector<std::pair<std::span<T>, std::span<const T>>> collect_tensors() {
    std::vector<std::pair<std::span<T>, std::span<const T>>> out;
    const auto add = [&out](Linear<T>& l) {
      out.emplace_back(std::span<T>(l.w), std::span<const T>(l.gw));
      out.emplace_back(std::span<T>(l.b), std::span<const T>(l.gb));
    };
    add(agent.l1);
    add(agent.l2);
    add(mixer.hw1);
    add(mixer.hb1);
    add(mixer.hw2);
    add(mixer.v1);
    add(mixer.v2);
    return out;
  }

 private:
  T q_tot_with(const AgentNet<T>& anet, const MixerNet<T>& mnet,
               std::span<const float> state, std::span<const float> obs_concat,
               std::span<const ActionId> actions) {
    if (static_cast<int>(actions.size()) != cfg_.n_agents)
      throw std::invalid_argument("joint action length != n_agents");
    for (int a = 0; a < cfg_.n_agents; ++a) {
      agent_q(anet, obs_concat.subspan(static_cast<std::size_t>(a) * obs_len_, obs_len_),
              a, scratch_q_.data());
      scratch_qs_[a] = scratch_q_[actions[a]];
    }
    for (int i = 0; i < state_len_; ++i) scratch_state_[i] = static_cast<T>(state[i]);
    return mnet.forward(scratch_state_.data(), scratch_qs_.data(), work_);
  }

  // Recorded per-transition activations of the online forward pass.
  T* batch_input(std::size_t i, int a) {
    return batch_inputs_.data() + (i * cfg_.n_agents + a) * input_dim();
  }
  T* batch_hidden(std::size_t i, int a) {
    return batch_hiddens_.data() + (i * cfg_.n_agents + a) * opt_.hidden;
  }
  T* batch_qvec(std::size_t i, int a) {
    return batch_qvecs_.data() + (i * cfg_.n_agents + a) * kNumActions;
  }
  T* batch_state(std::size_t i) { return batch_states_.data() + i * state_len_; }
  T* batch_qs(std::size_t i) { return batch_chosen_qs_.data() + i * cfg_.n_agents; }

  template <typename Get>
  void forward_batch(Get&& get, std::size_t n) {
    const std::size_t na = static_cast<std::size_t>(cfg_.n_agents);
    batch_inputs_.resize(n * na * input_dim());
    batch_hiddens_.resize(n * na * opt_.hidden);
    batch_qvecs_.resize(n * na * kNumActions);
    batch_states_.resize(n * state_len_);
    batch_chosen_qs_.resize(n * na);
    batch_qtot_.resize(n);
    if (batch_works_.size() < n) {
      batch_works_.resize(n);
      for (auto& w : batch_works_) w.resize(opt_.mix_hidden, cfg_.n_agents);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const Transition& tr = get(i);
      if (static_cast<int>(tr.actions.size()) != cfg_.n_agents)
        throw std::invalid_argument("stored joint action length != n_agents");
      for (int a = 0; a < cfg_.n_agents; ++a) {
        make_input(std::span<const float>(tr.obs).subspan(
                       static_cast<std::size_t>(a) * obs_len_, obs_len_),
                   a, batch_input(i, a));
        agent.forward(batch_input(i, a), batch_hidden(i, a), batch_qvec(i, a));
        batch_qs(i)[a] = batch_qvec(i, a)[tr.actions[a]];
      }
      for (int s = 0; s < state_len_; ++s)
        batch_state(i)[s] = static_cast<T>(tr.state[s]);
      batch_qtot_[i] = mixer.forward(batch_state(i), batch_qs(i), batch_works_[i]);
    }
  }

  template <typename Get>
  double loss_and_backward(Get&& get, std::span<const double> weights,
                           std::span<const double> targets) {
    zero_grad();
    const std::size_t n = weights.size();
    double loss = 0.0;
    std::vector<T> gq(cfg_.n_agents);
    std::vector<T> gqvec(kNumActions);
    for (std::size_t i = 0; i < n; ++i) {
      const Transition& tr = get(i);
      const double err = static_cast<double>(batch_qtot_[i]) - targets[i];
      loss += weights[i] * err * err;
      const T gqtot = static_cast<T>(2.0 * weights[i] * err);
      mixer.backward(batch_state(i), batch_qs(i), batch_works_[i], gqtot, gq.data());
      for (int a = 0; a < cfg_.n_agents; ++a) {
        std::fill(gqvec.begin(), gqvec.end(), T(0));
        gqvec[tr.actions[a]] = gq[a];
        agent.backward(batch_input(i, a), batch_hidden(i, a), gqvec.data(),
                       scratch_gh_.data(), nullptr);
      }
    }
    if (!std::isfinite(loss)) throw std::runtime_error("non-finite loss");
    return loss;
  }

  RunConfig cfg_;
  int obs_len_;
  int state_len_;
  LearnerOptions<T> opt_;
  Adam<T> adam_;
  std::uint64_t skipped_steps_ = 0;

  typename MixerNet<T>::Work work_;
  std::vector<T> scratch_input_, scratch_hidden_, scratch_q_, scratch_gh_;
  std::vector<T> scratch_state_, scratch_qs_;

  std::vector<T> batch_inputs_, batch_hiddens_, batch_qvecs_;
  std::vector<T> batch_states_, batch_chosen_qs_, batch_qtot_;
  std::vector<typename MixerNet<T>::Work> batch_works_;
};

}  // namespace accmer
