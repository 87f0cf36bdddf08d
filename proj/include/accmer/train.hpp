#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "accmer/checkpoint.hpp"
#include "accmer/config.hpp"
#include "accmer/env.hpp"
#include "accmer/learner.hpp"
#include "accmer/manifest.hpp"
#include "accmer/replay.hpp"
#include "accmer/sampler.hpp"
#include "accmer/trace.hpp"

namespace accmer {

struct TrainOptions {
  SamplerMode mode = SamplerMode::accmer;
  int hidden = 64;
  int mix_hidden = 32;
  std::optional<double> weight_clip;
  double grad_norm_clip = 10.0;  // 0 disables
  std::int64_t eval_every = 1000;
  int eval_episodes = 32;
  // Wall-clock values are the one non-deterministic output; the CSV column
  // stays 0 unless timing is requested, so default runs are byte-stable.
  bool timing = false;
  bool write_trace = true;
  bool save_replay = false;
  bool transition_log = false;
  std::string out_dir;  // empty: keep everything in memory
  // Hardware counters are never collected in-process. When an external
  // profiler wraps the run, its output path is recorded in the manifest so
  // the measurement stays attached to the run metadata.
  std::string profiler_log;
};

struct EvalPoint {
  std::int64_t train_step = 0;
  std::int64_t episode = 0;
  double eval_mean_reward = 0.0;
  double loss = 0.0;
  double epsilon = 0.0;
  double wall_ms_per_step = 0.0;
  double distinct_slots_touched = 0.0;
};

struct RunResult {
  std::vector<EvalPoint> curve;
  std::int64_t episodes = 0;
  std::uint64_t batches = 0;
  std::uint64_t degenerate_batches = 0;
  std::uint64_t skipped_steps = 0;
  double mean_sample_wall_ms = 0.0;  // mean per-batch sampling time
  double final_eval_reward = std::numeric_limits<double>::quiet_NaN();
};

inline std::string curves_header() {
  return "# accmer-curves v1\n"
         "train_step,episode,eval_mean_reward,loss,epsilon,wall_ms_per_step,"
         "distinct_slots_touched\n";
}

/// Per-interval summary of the raw priority-weight distribution (the
/// batch-histogram export).
inline std::string weights_header() {
  return "# accmer-weights v1\n"
         "train_step,w_min,w_p25,w_median,w_p75,w_max,w_mean\n";
}

inline std::string weights_row(std::int64_t step, std::vector<double> sample) {
  using detail::fmt_double;
  if (sample.empty())
    return std::to_string(step) + ",0,0,0,0,0,0\n";
  std::sort(sample.begin(), sample.end());
  const auto q = [&](double f) {
    return sample[static_cast<std::size_t>(f * static_cast<double>(sample.size() - 1))];
  };
  double mean = 0.0;
  for (double w : sample) mean += w;
  mean /= static_cast<double>(sample.size());
  return std::to_string(step) + "," + fmt_double(sample.front()) + "," +
         fmt_double(q(0.25)) + "," + fmt_double(q(0.5)) + "," + fmt_double(q(0.75)) +
         "," + fmt_double(sample.back()) + "," + fmt_double(mean) + "\n";
}

inline std::string curves_row(const EvalPoint& p) {
  using detail::fmt_double;
  return std::to_string(p.train_step) + "," + std::to_string(p.episode) + "," +
         fmt_double(p.eval_mean_reward) + "," + fmt_double(p.loss) + "," +
         fmt_double(p.epsilon) + "," + fmt_double(p.wall_ms_per_step) + "," +
         fmt_double(p.distinct_slots_touched) + "\n";
}

/// Greedy rollouts of the current policy; returns each episode's return.
template <typename T>
std::vector<double> eval_episodes(Learner<T>& learner, const PredatorPreyEnv& env,
                                  int episodes, RngStream& rng) {
  std::vector<double> returns;
  returns.reserve(episodes);
  std::vector<ActionId> actions(env.n_agents());
  std::vector<float> obs_concat(
      static_cast<std::size_t>(env.n_agents()) * PredatorPreyEnv::obs_length());
  for (int e = 0; e < episodes; ++e) {
    auto [state, obs] = env.reset(rng);
    double ret = 0.0;
    bool done = false;
    while (!done) {
      for (int a = 0; a < env.n_agents(); ++a)
        std::copy(obs[a].begin(), obs[a].end(),
                  obs_concat.begin() + static_cast<std::size_t>(a) * obs[a].size());
      learner.greedy_actions(learner.agent, obs_concat, actions);
      StepResult r = env.step(state, actions, rng);
      ret += r.reward;
      done = r.done;
      state = std::move(r.state);
      obs = std::move(r.observations);
    }
    returns.push_back(ret);
  }
  return returns;
}

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// The full training loop: act, store, sample, re-weight, decay, step.
/// Single-threaded and deterministic for a fixed config and options
/// (wall-clock fields excepted, and only when timing is on).
inline RunResult train_run(const RunConfig& cfg, const TrainOptions& opt) {
  namespace fs = std::filesystem;
  using clock = std::chrono::steady_clock;

  const PredatorPreyEnv env(cfg);
  const int obs_len = PredatorPreyEnv::obs_length();
  const int state_len = env.state_length();

  RngStream env_rng(cfg.seed, "env");
  RngStream explore_rng(cfg.seed, "exploration");
  RngStream sampler_rng(cfg.seed, "sampler");
  RngStream eval_rng(cfg.seed, "eval");
  RngStream init_rng(cfg.seed, "learner-init");

  LearnerOptions<float> lopt;
  lopt.hidden = opt.hidden;
  lopt.mix_hidden = opt.mix_hidden;
  lopt.weight_clip = opt.weight_clip;
  lopt.grad_norm_clip = opt.grad_norm_clip;
  Learner<float> learner(cfg, obs_len, state_len, lopt, init_rng);

  ReplayBuffer buffer(cfg.buffer_capacity);
  WeightTable table(cfg.buffer_capacity);
  Sampler sampler(opt.mode, cfg);

  // Artifact sinks.
  std::ofstream curves;
  std::ofstream weights_csv;
  std::ofstream transitions;
  std::unique_ptr<TraceWriter> trace;
  std::unique_ptr<RunManifest> manifest;
  if (!opt.out_dir.empty()) {
    fs::create_directories(fs::path(opt.out_dir) / "checkpoints");
    nlohmann::json options{{"mode", std::string(to_string(opt.mode))},
                           {"hidden", opt.hidden},
                           {"mix_hidden", opt.mix_hidden},
                           {"eval_every", opt.eval_every},
                           {"eval_episodes", opt.eval_episodes},
                           {"timing", opt.timing},
                           {"grad_norm_clip", opt.grad_norm_clip},
                           {"weight_clip", opt.weight_clip
                                               ? nlohmann::json(*opt.weight_clip)
                                               : nlohmann::json(nullptr)}};
    manifest = std::make_unique<RunManifest>(
        cfg, std::move(options), (fs::path(opt.out_dir) / "manifest.json").string());
    manifest->add_artifact("curves", "curves.csv");
    manifest->add_artifact("weights", "weights.csv");
    manifest->add_artifact("checkpoint", "checkpoints/final.bin");
    if (opt.write_trace) manifest->add_artifact("trace", "trace.bin");
    if (opt.save_replay) manifest->add_artifact("replay", "checkpoints/replay.bin");
    if (opt.transition_log) manifest->add_artifact("transitions", "transitions.csv");
    if (!opt.profiler_log.empty())
      manifest->add_artifact("profiler_log", opt.profiler_log);
    manifest->write();

    curves.open(fs::path(opt.out_dir) / "curves.csv");
    curves << curves_header();
    curves.flush();
    weights_csv.open(fs::path(opt.out_dir) / "weights.csv");
    weights_csv << weights_header();
    weights_csv.flush();
    if (opt.write_trace)
      trace = std::make_unique<TraceWriter>(
          (fs::path(opt.out_dir) / "trace.bin").string(), opt.mode,
          static_cast<std::uint32_t>(cfg.buffer_capacity),
          static_cast<std::uint32_t>(cfg.batch_size));
    if (opt.transition_log) {
      transitions.open(fs::path(opt.out_dir) / "transitions.csv");
      transitions << transition_log_header();
    }
  }

  RunResult res;
  auto [state, obs] = env.reset(env_rng);
  std::vector<ActionId> actions(cfg.n_agents);

  // Distinct-slot tracking per reuse window.
  const std::uint64_t window_len = sampler.window_length();
  std::vector<std::uint64_t> slot_stamp(cfg.buffer_capacity, 0);
  std::uint64_t current_window = 0;
  std::uint64_t window_distinct = 0;
  double window_sum_since_eval = 0.0;
  std::uint64_t windows_since_eval = 0;

  double loss_sum_since_eval = 0.0;
  std::uint64_t updates_since_eval = 0;
  std::uint64_t sample_ns_total = 0;
  auto interval_start = clock::now();
  std::int64_t steps_in_interval = 0;

  std::vector<std::uint32_t> indices;
  indices.reserve(cfg.batch_size);

  const auto concat = [&](const std::vector<Observation>& per_agent) {
    std::vector<float> flat;
    flat.reserve(static_cast<std::size_t>(cfg.n_agents) * obs_len);
    for (const auto& o : per_agent) flat.insert(flat.end(), o.begin(), o.end());
    return flat;
  };

  for (std::int64_t t = 0; t < cfg.total_steps; ++t) {
    const double eps = epsilon_at(cfg, t);
    learner.select_actions(obs, eps, explore_rng, actions);
    StepResult sr = env.step(state, actions, env_rng);

    Transition tr;
    tr.state = env.state_features(state);
    tr.obs = concat(obs);
    tr.actions.assign(actions.begin(), actions.end());
    tr.reward = static_cast<float>(sr.reward);
    tr.next_state = env.state_features(sr.state);
    tr.next_obs = concat(sr.observations);
    tr.done = sr.done;
    tr.step = static_cast<std::uint64_t>(t);
    push(buffer, table, std::move(tr));

    if (opt.transition_log && transitions.is_open())
      transitions << transition_log_row(t, actions, sr.reward, sr.captures,
                                        sr.solo_catches);

    if (buffer.size() >= cfg.batch_size) {
      const auto t0 = clock::now();
      SampleBatch batch = sampler.next_batch(sampler_rng, buffer, table);
      sample_ns_total += static_cast<std::uint64_t>(
          std::chrono::duration_cast<std::chrono::nanoseconds>(clock::now() - t0)
              .count());

      const auto batch_no = static_cast<std::uint32_t>(res.batches);
      if (trace) trace->append_batch(batch_no, batch);

      indices.clear();
      indices.insert(indices.end(), batch.reuse.begin(), batch.reuse.end());
      indices.insert(indices.end(), batch.fresh.begin(), batch.fresh.end());

      const std::uint64_t w = res.batches / window_len;
      if (w != current_window && res.batches > 0) {
        window_sum_since_eval += static_cast<double>(window_distinct);
        ++windows_since_eval;
        window_distinct = 0;
        current_window = w;
      }
      for (std::uint32_t s : indices)
        if (slot_stamp[s] != w + 1) {
          slot_stamp[s] = w + 1;
          ++window_distinct;
        }

      UpdateResult<float> upd = learner.train_batch(buffer, indices, eps);
      table.update(indices, upd.raw_weights);
      table.apply_decay(cfg.weight_decay);

      loss_sum_since_eval += upd.loss;
      ++updates_since_eval;
      ++res.batches;
      if (upd.degenerate_batch) ++res.degenerate_batches;
      if (upd.skipped) {
        ++res.skipped_steps;
        std::clog << "accmer: non-finite gradient at step " << t
                  << ", update skipped\n";
      }
    }

    if (sr.done) {
      auto reset = env.reset(env_rng);
      state = std::move(reset.state);
      obs = std::move(reset.observations);
      ++res.episodes;
      if (res.episodes % cfg.target_sync_episodes == 0) learner.sync_targets();
    } else {
      state = std::move(sr.state);
      obs = std::move(sr.observations);
    }

    ++steps_in_interval;
    if (opt.eval_every > 0 && (t + 1) % opt.eval_every == 0) {
      const auto returns = eval_episodes(learner, env, opt.eval_episodes, eval_rng);
      EvalPoint p;
      p.train_step = t + 1;
      p.episode = res.episodes;
      p.eval_mean_reward = mean_of(returns);
      p.loss = updates_since_eval
                   ? loss_sum_since_eval / static_cast<double>(updates_since_eval)
                   : 0.0;
      p.epsilon = eps;
      if (opt.timing) {
        const double ms = std::chrono::duration<double, std::milli>(
                              clock::now() - interval_start)
                              .count();
        p.wall_ms_per_step = steps_in_interval ? ms / steps_in_interval : 0.0;
      }
      p.distinct_slots_touched =
          windows_since_eval
              ? window_sum_since_eval / static_cast<double>(windows_since_eval)
              : static_cast<double>(window_distinct);
      res.curve.push_back(p);
      if (curves.is_open()) {
        curves << curves_row(p);
        curves.flush();
      }
      loss_sum_since_eval = 0.0;
      updates_since_eval = 0;
      window_sum_since_eval = 0.0;
      windows_since_eval = 0;
      steps_in_interval = 0;
      interval_start = clock::now();
    }
  }

  if (!res.curve.empty()) res.final_eval_reward = res.curve.back().eval_mean_reward;
  res.mean_sample_wall_ms =
      res.batches ? static_cast<double>(sample_ns_total) / 1e6 /
                        static_cast<double>(res.batches)
                  : 0.0;

  if (!opt.out_dir.empty()) {
    if (trace) trace->close();
    save_learner_checkpoint(
        (fs::path(opt.out_dir) / "checkpoints" / "final.bin").string(), learner);
    if (opt.save_replay)
      save_replay_checkpoint(
          (fs::path(opt.out_dir) / "checkpoints" / "replay.bin").string(), buffer,
          table);
    res.skipped_steps = learner.skipped_steps();
    nlohmann::json summary{
        {"episodes", res.episodes},
        {"batches", res.batches},
        {"degenerate_batches", res.degenerate_batches},
        {"skipped_steps", res.skipped_steps},
        {"mean_sample_wall_ms", opt.timing ? nlohmann::json(res.mean_sample_wall_ms)
                                           : nlohmann::json(nullptr)},
        {"final_eval_reward",
         std::isnan(res.final_eval_reward) ? nlohmann::json(nullptr)
                                           : nlohmann::json(res.final_eval_reward)}};
    manifest->finalize(std::move(summary));
  }
  res.skipped_steps = learner.skipped_steps();
  return res;
}

}  // namespace accmer
