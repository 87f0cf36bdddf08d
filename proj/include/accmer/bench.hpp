#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "accmer/cache_sim.hpp"
#include "accmer/checkpoint.hpp"
#include "accmer/config.hpp"
#include "accmer/env.hpp"
#include "accmer/sampler.hpp"
#include "accmer/trace.hpp"

namespace accmer {

/// Bytes one serialized transition occupies in the replay checkpoint
/// layout; the default footprint used by the cache model.
inline std::uint32_t serialized_transition_bytes(const RunConfig& cfg) {
  const PredatorPreyEnv env(cfg);
  const std::uint64_t state = env.state_length();
  const std::uint64_t obs =
      static_cast<std::uint64_t>(cfg.n_agents) * PredatorPreyEnv::obs_length();
  return static_cast<std::uint32_t>(8 + 4 + 1 + cfg.n_agents +
                                    4 * (2 * state + 2 * obs));
}

struct BenchOptions {
  std::vector<SamplerMode> modes{SamplerMode::uniform, SamplerMode::prioritized,
                                 SamplerMode::accmer};
  std::uint64_t calls = 5000;
  CacheConfig cache;
  std::string out_dir;                  // empty: nothing written
  std::optional<std::string> replay;    // replay checkpoint to sample from
  bool write_traces = true;
};

struct BenchModeResult {
  SamplerMode mode = SamplerMode::uniform;
  AccessTrace trace;
  double sample_wall_ms_mean = 0.0;
};

/// Runs one sampler mode over the shared workload: every mode starts from
/// the same buffer contents, the same uniform weight table, and mode-local
/// RNG substreams derived from the same seed. After each batch the sampled
/// slots get fresh pseudo-random weights and the table decays, emulating
/// the training-time write-back without a learner in the loop.
inline BenchModeResult bench_mode(SamplerMode mode, const RunConfig& cfg,
                                  const ReplayBuffer& buffer, std::uint64_t calls) {
  using clock = std::chrono::steady_clock;
  BenchModeResult res;
  res.mode = mode;
  res.trace.mode = mode;
  res.trace.d = static_cast<std::uint32_t>(cfg.buffer_capacity);
  res.trace.b = static_cast<std::uint32_t>(cfg.batch_size);

  WeightTable table(cfg.buffer_capacity);
  for (std::size_t i = 0; i < buffer.size(); ++i) table.notify_push(i);

  Sampler sampler(mode, cfg);
  RngStream sample_rng(cfg.seed, "sampler");
  RngStream weight_rng(cfg.seed, "bench-weights");

  std::vector<std::uint32_t> indices;
  std::vector<double> new_weights;
  std::uint64_t ns_total = 0;
  for (std::uint64_t call = 0; call < calls; ++call) {
    const auto t0 = clock::now();
    SampleBatch batch = sampler.next_batch(sample_rng, buffer, table);
    ns_total += static_cast<std::uint64_t>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(clock::now() - t0)
            .count());

    const auto batch_no = static_cast<std::uint32_t>(call);
    for (std::uint32_t s : batch.reuse)
      res.trace.records.push_back({batch_no, s, 1});
    for (std::uint32_t s : batch.fresh)
      res.trace.records.push_back({batch_no, s, 0});

    indices.clear();
    indices.insert(indices.end(), batch.reuse.begin(), batch.reuse.end());
    indices.insert(indices.end(), batch.fresh.begin(), batch.fresh.end());
    new_weights.resize(indices.size());
    for (double& w : new_weights) w = weight_rng.unit();
    table.update(indices, new_weights);
    table.apply_decay(cfg.weight_decay);
  }
  res.sample_wall_ms_mean =
      calls ? static_cast<double>(ns_total) / 1e6 / static_cast<double>(calls) : 0.0;
  return res;
}

/// Per-mode cache simulation plus deltas against the uniform baseline.
inline nlohmann::json compare_modes(const CacheConfig& cache,
                                    const std::vector<BenchModeResult>& results) {
  cache.validate();
  nlohmann::json report;
  report["cache"] = {{"capacity_bytes", cache.capacity_bytes},
                     {"line_bytes", cache.line_bytes},
                     {"associativity", cache.associativity},
                     {"transition_bytes", cache.transition_bytes},
                     {"n_sets", cache.n_sets()}};
  report["modes"] = nlohmann::json::array();

  double uniform_miss_rate = -1.0;
  for (const auto& r : results) {
    const auto lines = slots_to_lines(r.trace, cache);
    const SimResult sim = simulate_cache(lines, cache);
    const double distinct = distinct_slots_per_window(r.trace);
    nlohmann::json entry{{"mode", std::string(to_string(r.mode))},
                         {"hits", sim.hits},
                         {"misses", sim.misses},
                         {"miss_rate", sim.miss_rate()},
                         {"distinct_slots_mean",
                          distinct < 0 ? nlohmann::json(nullptr) : nlohmann::json(distinct)},
                         {"sample_wall_ms", r.sample_wall_ms_mean}};
    if (r.trace.b > 0 && r.trace.d >= r.trace.b) {
      entry["window_length"] = r.trace.d / r.trace.b;
      std::uint64_t s_minus = 0;
      for (const TraceRecord& rec : r.trace.records) {
        if (!r.trace.records.empty() && rec.batch != r.trace.records.front().batch) break;
        if (rec.reuse) ++s_minus;
      }
      entry["reuse_set_size"] = s_minus;
    }
    report["modes"].push_back(std::move(entry));
    if (r.mode == SamplerMode::uniform) uniform_miss_rate = sim.miss_rate();
  }

  if (uniform_miss_rate >= 0.0) {
    nlohmann::json deltas = nlohmann::json::object();
    for (const auto& entry : report["modes"]) {
      const std::string mode = entry["mode"];
      if (mode == "uniform") continue;
      const double mr = entry["miss_rate"];
      const double reduction =
          uniform_miss_rate > 0.0 ? (uniform_miss_rate - mr) / uniform_miss_rate : 0.0;
      deltas[mode] = {{"miss_rate_reduction_vs_uniform", reduction}};
    }
    report["deltas_vs_uniform"] = std::move(deltas);
  }
  return report;
}

/// Full bench pipeline: build (or load) the workload buffer, run each mode,
/// simulate, and assemble the report.
inline nlohmann::json run_bench(const RunConfig& cfg, const BenchOptions& opt) {
  namespace fs = std::filesystem;
  CacheConfig cache = opt.cache;
  cache.validate();

  ReplayBuffer buffer(cfg.buffer_capacity);
  if (opt.replay) {
    LoadedReplay loaded = load_replay_checkpoint(*opt.replay);
    if (loaded.buffer.capacity() != cfg.buffer_capacity)
      throw ConfigError("replay checkpoint capacity differs from buffer_capacity");
    buffer = std::move(loaded.buffer);
  } else {
    // Index-only workload: sampling never reads payloads, so the synthetic
    // transitions stay empty and the cache model supplies the footprint.
    for (std::uint64_t i = 0; i < cfg.buffer_capacity; ++i) {
      Transition t;
      t.step = i;
      buffer.push(std::move(t));
    }
  }
  if (buffer.size() < cfg.batch_size)
    throw ConfigError("bench workload smaller than batch_size");

  std::vector<BenchModeResult> results;
  results.reserve(opt.modes.size());
  for (SamplerMode mode : opt.modes)
    results.push_back(bench_mode(mode, cfg, buffer, opt.calls));

  nlohmann::json report = compare_modes(cache, results);
  report["workload"] = {{"calls", opt.calls},
                        {"buffer_capacity", cfg.buffer_capacity},
                        {"batch_size", cfg.batch_size},
                        {"reuse_ratio", cfg.reuse_ratio},
                        {"weight_decay", cfg.weight_decay},
                        {"seed", cfg.seed},
                        {"window_length", cfg.buffer_capacity / cfg.batch_size},
                        {"reuse_set_size",
                         static_cast<std::uint64_t>(std::floor(
                             cfg.reuse_ratio * static_cast<double>(cfg.batch_size)))}};

  if (!opt.out_dir.empty()) {
    fs::create_directories(opt.out_dir);
    if (opt.write_traces) {
      for (const auto& r : results) {
        const std::string path =
            (fs::path(opt.out_dir) /
             ("trace_" + std::string(to_string(r.mode)) + ".bin"))
                .string();
        TraceWriter w(path, r.mode, r.trace.d, r.trace.b);
        for (const TraceRecord& rec : r.trace.records)
          w.append(rec.batch, rec.slot, rec.reuse);
        w.close();
      }
    }
    std::ofstream out(fs::path(opt.out_dir) / "report.json");
    if (!out) throw std::runtime_error("cannot write report.json");
    out << report.dump(2) << '\n';
  }
  return report;
}

}  // namespace accmer
