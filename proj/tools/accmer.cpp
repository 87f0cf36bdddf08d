// accmer - multi-agent experience-replay lab with cache-locality-aware
// prioritized sampling.
//
// Subcommands:
//   train     run the learner and write manifest/curves/trace/checkpoints
//   bench     compare sampler modes on one workload and simulate the cache
//   eval      greedy evaluation of a saved checkpoint
//   simulate  run the cache simulator over a recorded trace file
//
// Exit codes: 0 ok, 2 config error, 3 runtime error.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "accmer/bench.hpp"
#include "accmer/cache_sim.hpp"
#include "accmer/checkpoint.hpp"
#include "accmer/config.hpp"
#include "accmer/train.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::string out_dir = "accmer-run";
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "flat key=value config file");
  cmd->add_option("--out", f.out_dir, "output directory");
  cmd->add_option("--seed", f.seed, "RNG seed (overrides config and ACCMER_SEED)");
}

// Resolution order: preset/defaults < config file < ACCMER_SEED < CLI flags.
accmer::RunConfig resolve_config(const CommonFlags& common,
                                 const std::map<std::string, std::string>& overrides,
                                 const std::string& preset_name) {
  accmer::RunConfig base =
      preset_name.empty() ? accmer::RunConfig{} : accmer::preset(preset_name);
  if (!common.config_path.empty())
    base = accmer::validate_config(accmer::parse_config_file(common.config_path), base);
  accmer::apply_env_seed_override(base);
  base = accmer::validate_config(overrides, base);
  if (common.seed) base.seed = *common.seed;
  accmer::check_config(base);
  return base;
}

std::string fmt(double v) { return accmer::detail::fmt_double(v); }

void add_config_overrides(CLI::App* cmd, std::map<std::string, std::string>& kv) {
  const auto hook = [&kv](const std::string& key) {
    return [&kv, key](const std::string& v) {
      kv[key] = v;
      return true;
    };
  };
  cmd->add_option_function<std::string>("--agents", hook("n_agents"), "number of predators");
  cmd->add_option_function<std::string>("--grid", hook("grid_size"), "grid side length");
  cmd->add_option_function<std::string>("--prey", hook("n_prey"), "number of prey");
  cmd->add_option_function<std::string>("--punishment", hook("punishment"),
                                        "solo-catch reward (<= 0)");
  cmd->add_option_function<std::string>("--buffer", hook("buffer_capacity"),
                                        "replay buffer capacity d");
  cmd->add_option_function<std::string>("--batch-size", hook("batch_size"),
                                        "mini-batch size b");
  cmd->add_option_function<std::string>("--alpha", hook("reuse_ratio"),
                                        "reuse ratio in [0,1]");
  cmd->add_option_function<std::string>("--env-discount", hook("env_discount"),
                                        "TD discount in [0,1)");
  cmd->add_option_function<std::string>("--weight-decay", hook("weight_decay"),
                                        "weight-table decay in (0,1]");
  cmd->add_option_function<std::string>("--epsilon-start", hook("epsilon_start"),
                                        "exploration start");
  cmd->add_option_function<std::string>("--epsilon-end", hook("epsilon_end"),
                                        "exploration end");
  cmd->add_option_function<std::string>("--epsilon-anneal", hook("epsilon_anneal_steps"),
                                        "anneal steps");
  cmd->add_option_function<std::string>("--lr", hook("learning_rate"), "learning rate");
  cmd->add_option_function<std::string>("--target-sync", hook("target_sync_episodes"),
                                        "target sync interval (episodes)");
  cmd->add_option_function<std::string>("--steps", hook("total_steps"),
                                        "total environment steps t_max");
}

int cmd_train(const CommonFlags& common, const std::map<std::string, std::string>& kv,
              const std::string& preset_name, accmer::TrainOptions opt) {
  const accmer::RunConfig cfg = resolve_config(common, kv, preset_name);
  opt.out_dir = common.out_dir;
  const accmer::RunResult res = accmer::train_run(cfg, opt);
  std::cout << "run complete: " << cfg.total_steps << " steps, " << res.episodes
            << " episodes, " << res.batches << " updates\n";
  if (!std::isnan(res.final_eval_reward))
    std::cout << "final eval mean reward: " << fmt(res.final_eval_reward) << "\n";
  std::cout << "artifacts in " << common.out_dir << "\n";
  return 0;
}

int cmd_bench(const CommonFlags& common, const std::map<std::string, std::string>& kv,
              const std::string& preset_name, accmer::BenchOptions opt,
              bool default_transition_bytes) {
  const accmer::RunConfig cfg = resolve_config(common, kv, preset_name);
  if (default_transition_bytes)
    opt.cache.transition_bytes = accmer::serialized_transition_bytes(cfg);
  opt.out_dir = common.out_dir;
  const nlohmann::json report = accmer::run_bench(cfg, opt);

  std::printf("%-12s %12s %12s %10s %16s %16s\n", "mode", "hits", "misses",
              "miss_rate", "distinct/window", "sample_ms/call");
  for (const auto& m : report["modes"]) {
    const std::string mode = m["mode"];
    const double dr = m["distinct_slots_mean"].is_null()
                          ? -1.0
                          : m["distinct_slots_mean"].get<double>();
    std::printf("%-12s %12llu %12llu %10.4f %16.1f %16.4f\n", mode.c_str(),
                static_cast<unsigned long long>(m["hits"].get<std::uint64_t>()),
                static_cast<unsigned long long>(m["misses"].get<std::uint64_t>()),
                m["miss_rate"].get<double>(), dr, m["sample_wall_ms"].get<double>());
  }
  if (report.contains("deltas_vs_uniform")) {
    for (const auto& [mode, delta] : report["deltas_vs_uniform"].items())
      std::printf("%s miss-rate reduction vs uniform: %.1f%%\n", mode.c_str(),
                  100.0 * delta["miss_rate_reduction_vs_uniform"].get<double>());
  }
  std::cout << "report written to " << common.out_dir << "/report.json\n";
  return 0;
}

int cmd_eval(const CommonFlags& common, const std::string& checkpoint, int episodes) {
  if (episodes < 1) throw accmer::ConfigError("need >= 1 episode");
  accmer::LoadedLearner loaded = accmer::load_learner_checkpoint(checkpoint);
  accmer::RunConfig cfg = loaded.config;
  accmer::apply_env_seed_override(cfg);
  if (common.seed) cfg.seed = *common.seed;
  const accmer::PredatorPreyEnv env(cfg);
  accmer::RngStream rng(cfg.seed, "eval");
  const std::vector<double> returns =
      accmer::eval_episodes(loaded.learner, env, episodes, rng);
  const double mean = accmer::mean_of(returns);
  double var = 0.0;
  for (double r : returns) var += (r - mean) * (r - mean);
  const double sd = returns.size() > 1
                        ? std::sqrt(var / static_cast<double>(returns.size() - 1))
                        : 0.0;
  std::cout << "episodes: " << episodes << "\n";
  std::cout << "mean episode reward: " << fmt(mean) << " +/- " << fmt(sd) << "\n";
  return 0;
}

int cmd_simulate(const std::string& trace_path, accmer::CacheConfig cache) {
  cache.validate();
  const accmer::AccessTrace trace = accmer::load_trace(trace_path);
  const auto lines = accmer::slots_to_lines(trace, cache);
  const accmer::SimResult sim = accmer::simulate_cache(lines, cache);
  nlohmann::json out{{"trace", trace_path},
                     {"records", trace.records.size()},
                     {"line_accesses", lines.size()},
                     {"hits", sim.hits},
                     {"misses", sim.misses},
                     {"miss_rate", sim.miss_rate()}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-agent experience replay lab with reuse-window sampling"};
  app.require_subcommand(1);

  // train
  CommonFlags train_common;
  std::map<std::string, std::string> train_kv;
  std::string train_preset;
  accmer::TrainOptions topt;
  std::string train_mode = "accmer";
  double train_clip = 0.0;
  auto* train = app.add_subcommand("train", "run the training loop");
  add_common(train, train_common);
  add_config_overrides(train, train_kv);
  train->add_option("--preset", train_preset, "pp0 | pp15 | pp-scale");
  train->add_option("--mode", train_mode, "uniform | prioritized | accmer");
  train->add_option("--hidden", topt.hidden, "agent net hidden width");
  train->add_option("--mix-hidden", topt.mix_hidden, "mixer hidden width");
  train->add_option("--eval-every", topt.eval_every, "steps between evaluations");
  train->add_option("--eval-episodes", topt.eval_episodes, "episodes per evaluation");
  auto* clip_opt = train->add_option("--weight-clip", train_clip,
                                     "cap raw priority weights (off by default)");
  train->add_option("--grad-clip", topt.grad_norm_clip,
                    "global gradient-norm clip before Adam (0 disables)");
  train->add_flag("--timing", topt.timing,
                  "write real wall-clock columns (breaks byte-reproducibility)");
  train->add_flag("--no-trace", [&topt](std::int64_t) { topt.write_trace = false; },
                  "skip trace.bin");
  train->add_flag("--save-replay", topt.save_replay,
                  "checkpoint the replay buffer + weight table at exit");
  train->add_flag("--transition-log", topt.transition_log,
                  "write per-step transitions.csv");

  // bench
  CommonFlags bench_common;
  std::map<std::string, std::string> bench_kv;
  std::string bench_preset;
  accmer::BenchOptions bopt;
  std::string bench_replay;
  auto* bench = app.add_subcommand("bench", "compare sampler modes");
  add_common(bench, bench_common);
  add_config_overrides(bench, bench_kv);
  bench->add_option("--preset", bench_preset, "pp0 | pp15 | pp-scale");
  bench->add_option("--calls", bopt.calls, "sampling calls per mode");
  bench->add_option("--capacity-bytes", bopt.cache.capacity_bytes, "simulated cache size");
  bench->add_option("--line-bytes", bopt.cache.line_bytes, "cache line size");
  bench->add_option("--assoc", bopt.cache.associativity, "cache associativity");
  auto* tb_opt = bench->add_option("--transition-bytes", bopt.cache.transition_bytes,
                                   "modeled transition footprint (default: serialized size)");
  bench->add_option("--replay", bench_replay, "sample from this replay checkpoint");

  // eval
  CommonFlags eval_common;
  std::string eval_checkpoint;
  int eval_n = 32;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint greedily");
  add_common(eval, eval_common);
  eval->add_option("--checkpoint", eval_checkpoint, "learner checkpoint path")->required();
  eval->add_option("--episodes", eval_n, "number of greedy episodes");

  // simulate
  CommonFlags sim_common;
  std::string sim_trace;
  accmer::CacheConfig sim_cache;
  auto* sim = app.add_subcommand("simulate", "cache-simulate a trace file");
  add_common(sim, sim_common);
  sim->add_option("--trace", sim_trace, "trace file (binary or CSV)")->required();
  sim->add_option("--capacity-bytes", sim_cache.capacity_bytes, "simulated cache size");
  sim->add_option("--line-bytes", sim_cache.line_bytes, "cache line size");
  sim->add_option("--assoc", sim_cache.associativity, "cache associativity");
  sim->add_option("--transition-bytes", sim_cache.transition_bytes,
                  "modeled transition footprint");

  try {
    app.parse(argc, argv);
    if (train->parsed()) {
      topt.mode = accmer::parse_sampler_mode(train_mode);
      if (clip_opt->count() > 0) {
        if (!(train_clip > 0)) throw accmer::ConfigError("weight-clip must be > 0");
        topt.weight_clip = train_clip;
      }
      return cmd_train(train_common, train_kv, train_preset, topt);
    }
    if (bench->parsed()) {
      if (!bench_replay.empty()) bopt.replay = bench_replay;
      return cmd_bench(bench_common, bench_kv, bench_preset, bopt,
                       tb_opt->count() == 0);
    }
    if (eval->parsed()) return cmd_eval(eval_common, eval_checkpoint, eval_n);
    if (sim->parsed()) return cmd_simulate(sim_trace, sim_cache);
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // bad flags are config errors
  } catch (const accmer::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
