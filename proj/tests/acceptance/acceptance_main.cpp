// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Criteria can be selected by number on the command line
// (e.g. `accmer_acceptance 1 2 11`); the default runs everything.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "accmer/bench.hpp"
#include "accmer/cache_sim.hpp"
#include "accmer/learner.hpp"
#include "accmer/prioritization.hpp"
#include "accmer/sampler.hpp"
#include "accmer/train.hpp"

#include "../support/lru_reference.hpp"
#include "../support/mann_kendall.hpp"

namespace {

using namespace accmer;

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Failure(what);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// Shared state between the learning criteria (9 feeds 10).
struct SmokeRuns {
  RunResult accmer;
  RunResult prioritized;
  bool done = false;
};
SmokeRuns g_smoke;

Transition empty_tr(std::uint64_t step) {
  Transition t;
  t.step = step;
  return t;
}

RunConfig sampler_only_cfg(std::size_t d, std::size_t b, double alpha,
                           std::uint64_t seed) {
  RunConfig c;
  c.n_agents = 2;
  c.grid_size = 5;
  c.n_prey = 1;
  c.buffer_capacity = d;
  c.batch_size = b;
  c.reuse_ratio = alpha;
  c.seed = seed;
  return c;
}

// --- criterion 1 -----------------------------------------------------------

std::string c1_reuse_window() {
  const RunConfig cfg = sampler_only_cfg(16, 6, 0.5, 3);
  ReplayBuffer buf(16);
  WeightTable wt(16);
  for (std::uint64_t i = 0; i < 16; ++i) push(buf, wt, empty_tr(i));
  Sampler sampler(SamplerMode::accmer, cfg);
  RngStream rng(cfg.seed, "sampler");

  require(sampler.window_length() == 2, "window length != 2");
  require(sampler.reuse_size() == 3, "|S-| != 3");

  const SampleBatch t1 = sampler.next_batch(rng, buf, wt);
  const SampleBatch t2 = sampler.next_batch(rng, buf, wt);
  require(t1.reuse.size() == 3, "batch reuse size != 3");
  require(t1.reuse == t2.reuse, "T=1 and T=2 disagree on S-");

  const std::uint32_t idx[] = {8, 9, 10};
  const double w[] = {5.0, 4.0, 3.0};
  wt.update(idx, w);
  const SampleBatch t3 = sampler.next_batch(rng, buf, wt);
  const SampleBatch t4 = sampler.next_batch(rng, buf, wt);
  require(t3.reuse == std::vector<std::uint32_t>{8, 9, 10},
          "T=3 did not re-rank to the new top weights");
  require(t3.reuse == t4.reuse, "T=3 and T=4 disagree on S-");
  require(t3.reuse != t1.reuse, "S- was not recomputed at the window boundary");
  return "|S-|=3, window=2, batches 1-2 and 3-4 share their reuse sets";
}

// --- criterion 2 -----------------------------------------------------------

double f_pi_brute(const std::vector<double>& p) {
  const std::size_t n = p.size();
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double prod = 1.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) prod *= p[j];
    sum += prod;
  }
  double all = 1.0;
  for (double v : p) all *= v;
  return 1.0 + sum - static_cast<double>(n) * all;
}

std::string c2_f_pi_grid() {
  const std::vector<double> grid = {0.0, 0.25, 0.5, 0.75, 1.0};
  std::uint64_t evaluated = 0;
  for (std::size_t n = 2; n <= 4; ++n) {
    std::vector<std::size_t> digit(n, 0);
    double max_seen = 0.0;
    while (true) {
      std::vector<double> p(n);
      for (std::size_t i = 0; i < n; ++i) p[i] = grid[digit[i]];
      const double got = f_pi(p);
      require(std::abs(got - f_pi_brute(p)) <= 1e-12,
              "f_pi deviates from brute force at n=" + std::to_string(n));
      max_seen = std::max(max_seen, got);
      ++evaluated;

      int zeros = 0, ones = 0;
      for (double v : p) {
        zeros += v == 0.0;
        ones += v == 1.0;
      }
      const bool extreme = (zeros == 1 && ones == static_cast<int>(n) - 1);
      if (extreme)
        require(got == 2.0, "one-zero-rest-one pattern does not reach 2");
      else
        require(got < 2.0, "non-extreme pattern reached the maximum");

      std::size_t pos = 0;
      while (pos < n && ++digit[pos] == grid.size()) digit[pos++] = 0;
      if (pos == n) break;
    }
    require(max_seen == 2.0, "grid maximum is not exactly 2");
    require(f_pi(std::vector<double>(n, 1.0)) == 1.0, "f(all ones) != 1");
  }
  return std::to_string(evaluated) + " grid points match brute force at 1e-12";
}

// --- criterion 3 -----------------------------------------------------------

std::string c3_weight_oracle() {
  RngStream rng(71, "acceptance-weights");
  for (int iter = 0; iter < 10000; ++iter) {
    WeightInputs in;
    in.q_k = rng.uniform(-20, 20);
    in.bellman_target = rng.uniform(-20, 20);
    in.q_star_estimate = rng.uniform(-20, 20);
    in.action_probs.resize(2 + rng.below(7));
    for (auto& p : in.action_probs) p = rng.unit();
    const double got = optimal_weight(in);
    const double want = std::abs(in.q_k - in.bellman_target) *
                        std::exp(-std::abs(in.q_k - in.q_star_estimate)) *
                        f_pi_brute(in.action_probs);
    require(std::abs(got - want) <= 1e-12 * std::max(1.0, std::abs(want)),
            "optimal_weight deviates from the term-by-term product");
    in.bellman_target = in.q_k;
    require(optimal_weight(in) == 0.0, "zero Bellman error must give weight 0");
  }
  return "10000 random inputs match the Lemma product at 1e-12";
}

// --- criterion 4 -----------------------------------------------------------

std::string c4_gradient_fidelity() {
  RunConfig cfg;
  cfg.n_agents = 2;
  cfg.grid_size = 5;
  cfg.n_prey = 2;
  cfg.buffer_capacity = 64;
  cfg.batch_size = 8;
  cfg.seed = 40;
  const int obs_len = 5, state_len = 4;
  LearnerOptions<double> opt;
  opt.hidden = 6;
  opt.mix_hidden = 5;
  RngStream init(cfg.seed, "learner-init");
  Learner<double> learner(cfg, obs_len, state_len, opt, init);

  RngStream rng(12, "acceptance-grad");
  std::vector<Transition> batch;
  for (int i = 0; i < 4; ++i) {
    Transition t;
    t.state.resize(state_len);
    t.next_state.resize(state_len);
    for (auto& v : t.state) v = static_cast<float>(rng.uniform(-1, 1));
    for (auto& v : t.next_state) v = static_cast<float>(rng.uniform(-1, 1));
    t.obs.resize(2 * obs_len);
    t.next_obs.resize(2 * obs_len);
    for (auto& v : t.obs) v = static_cast<float>(rng.uniform(0, 1));
    for (auto& v : t.next_obs) v = static_cast<float>(rng.uniform(0, 1));
    t.actions = {static_cast<ActionId>(rng.below(kNumActions)),
                 static_cast<ActionId>(rng.below(kNumActions))};
    t.reward = static_cast<float>(rng.uniform(-1, 1));
    batch.push_back(std::move(t));
  }
  std::vector<double> targets(batch.size()), weights(batch.size());
  for (auto& t : targets) t = rng.uniform(-1, 1);
  for (auto& w : weights) w = rng.unit() + 0.1;

  learner.weighted_loss(batch, targets, weights);
  auto tensors = learner.collect_tensors();
  std::vector<double> analytic;
  for (auto& [p, g] : tensors) analytic.insert(analytic.end(), g.begin(), g.end());

  const double h = 1e-5;
  std::size_t offset = 0;
  int checked = 0;
  double worst = 0.0;
  for (auto& [p, g] : tensors) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double orig = p[i];
      p[i] = orig + h;
      const double up = learner.weighted_loss(batch, targets, weights);
      p[i] = orig - h;
      const double down = learner.weighted_loss(batch, targets, weights);
      p[i] = orig;
      const double fd = (up - down) / (2 * h);
      const double an = analytic[offset + i];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
      const double rel = std::abs(fd - an) / denom;
      worst = std::max(worst, rel);
      require(rel < 1e-4, "gradient mismatch at coordinate " +
                              std::to_string(offset + i) + " (rel " + fmt(rel) + ")");
      ++checked;
    }
    offset += p.size();
  }
  require(checked >= 200, "fewer than 200 coordinates checked");
  return std::to_string(checked) + " coordinates, worst relative error " + fmt(worst);
}

// --- criterion 5 -----------------------------------------------------------

std::string c5_mixer_monotonicity() {
  RngStream rng(17, "acceptance-mono");
  MixerNet<double> m;
  m.resize(4, 6, 32);
  m.init_uniform(rng);
  MixerNet<double>::Work wk;
  wk.resize(32, 4);
  const double h = 1e-6;
  double min_grad = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 1000; ++iter) {
    double state[6], q[4];
    for (double& v : state) v = rng.uniform(-2, 2);
    for (double& v : q) v = rng.uniform(-3, 3);
    for (int a = 0; a < 4; ++a) {
      const double orig = q[a];
      q[a] = orig + h;
      const double up = m.forward(state, q, wk);
      q[a] = orig - h;
      const double down = m.forward(state, q, wk);
      q[a] = orig;
      const double grad = (up - down) / (2 * h);
      min_grad = std::min(min_grad, grad);
      require(grad >= -1e-9, "dQ_tot/dQ_a = " + fmt(grad) + " below -1e-9");
    }
  }
  return "1000 inputs x 4 agents, smallest estimated slope " + fmt(min_grad);
}

// --- criterion 6 -----------------------------------------------------------

std::string c6_alpha_zero_equivalence() {
  const std::size_t d = 1000, b = 32, calls = 10000;
  const auto stream_bytes = [&](SamplerMode mode) {
    ReplayBuffer buf(d);
    WeightTable wt(d);
    for (std::uint64_t i = 0; i < d; ++i) push(buf, wt, empty_tr(i));
    Sampler sampler(mode, sampler_only_cfg(d, b, 0.0, 99));
    RngStream rng(99, "sampler");
    std::vector<std::uint8_t> bytes;
    bytes.reserve(calls * b * 4);
    for (std::size_t call = 0; call < calls; ++call) {
      const SampleBatch batch = sampler.next_batch(rng, buf, wt);
      for (std::uint32_t s : batch.reuse)
        for (int k = 0; k < 4; ++k) bytes.push_back((s >> (8 * k)) & 0xff);
      for (std::uint32_t s : batch.fresh)
        for (int k = 0; k < 4; ++k) bytes.push_back((s >> (8 * k)) & 0xff);
    }
    return bytes;
  };
  const auto accmer_stream = stream_bytes(SamplerMode::accmer);
  const auto uniform_stream = stream_bytes(SamplerMode::uniform);
  require(accmer_stream == uniform_stream,
          "batch index streams diverge between accmer(alpha=0) and uniform");
  return std::to_string(calls) + " calls, " + std::to_string(accmer_stream.size()) +
         " stream bytes identical";
}

// --- criterion 7 -----------------------------------------------------------

std::string c7_locality_proxy() {
  RunConfig cfg = sampler_only_cfg(10000, 128, 0.5, 777);
  cfg.weight_decay = 0.8;

  BenchOptions opt;
  opt.modes = {SamplerMode::uniform, SamplerMode::accmer};
  opt.calls = 5000;
  opt.cache.capacity_bytes = 1ull << 20;  // 1 MiB
  opt.cache.line_bytes = 64;
  opt.cache.associativity = 8;
  opt.cache.transition_bytes = 256;
  opt.out_dir = "acceptance_artifacts/locality";
  const nlohmann::json report = run_bench(cfg, opt);

  double uniform_rate = -1, accmer_rate = -1;
  for (const auto& m : report["modes"]) {
    if (m["mode"] == "uniform") uniform_rate = m["miss_rate"];
    if (m["mode"] == "accmer") accmer_rate = m["miss_rate"];
  }
  require(uniform_rate >= 0 && accmer_rate >= 0, "missing mode rows in the report");
  require(accmer_rate < uniform_rate,
          "accmer miss rate is not strictly below uniform");
  const double reduction =
      report["deltas_vs_uniform"]["accmer"]["miss_rate_reduction_vs_uniform"];
  require(reduction >= 0.10, "relative miss-rate reduction " + fmt(reduction) +
                                 " is below the 10% floor");
  return "miss rate " + fmt(accmer_rate) + " vs " + fmt(uniform_rate) +
         " (reduction " + fmt(100 * reduction) +
         "%), recorded in acceptance_artifacts/locality/report.json";
}

// --- criterion 8 -----------------------------------------------------------

std::string c8_distinct_slot_bound() {
  const std::size_t d = 1000, b = 50;
  const double alpha = 0.5;
  ReplayBuffer buf(d);
  WeightTable wt(d);
  for (std::uint64_t i = 0; i < d; ++i) push(buf, wt, empty_tr(i));
  Sampler sampler(SamplerMode::accmer, sampler_only_cfg(d, b, alpha, 5));
  RngStream rng(5, "sampler");
  RngStream wrng(5, "bench-weights");

  const std::size_t window = sampler.window_length();   // 20
  const std::size_t s_minus = sampler.reuse_size();     // 25
  const std::size_t bound = s_minus + window * (b - s_minus);
  std::size_t worst = 0;
  for (int w = 0; w < 100; ++w) {
    std::unordered_set<std::uint32_t> seen;
    for (std::size_t i = 0; i < window; ++i) {
      const SampleBatch batch = sampler.next_batch(rng, buf, wt);
      std::vector<std::uint32_t> idx(batch.reuse);
      idx.insert(idx.end(), batch.fresh.begin(), batch.fresh.end());
      for (std::uint32_t s : idx) seen.insert(s);
      std::vector<double> weights(idx.size());
      for (auto& x : weights) x = wrng.unit();
      wt.update(idx, weights);
      wt.apply_decay(0.9);
    }
    require(seen.size() <= bound,
            "window " + std::to_string(w) + " touched " +
                std::to_string(seen.size()) + " > bound " + std::to_string(bound));
    worst = std::max(worst, seen.size());
  }
  return "100 windows, max distinct " + std::to_string(worst) + " <= bound " +
         std::to_string(bound);
}

// --- criteria 9 and 10 ------------------------------------------------------

RunConfig smoke_cfg() {
  RunConfig cfg;
  cfg.n_agents = 4;
  cfg.grid_size = 7;
  cfg.n_prey = 4;
  cfg.punishment = 0.0;
  cfg.buffer_capacity = 5000;
  cfg.batch_size = 32;
  cfg.reuse_ratio = 0.5;
  cfg.env_discount = 0.99;
  cfg.weight_decay = 1.0;
  cfg.learning_rate = 0.001;
  cfg.target_sync_episodes = 200;
  cfg.total_steps = 150000;
  cfg.seed = 2024;
  return cfg;
}

void run_smoke_once() {
  if (g_smoke.done) return;
  TrainOptions opt;
  opt.hidden = 64;
  opt.mix_hidden = 32;
  opt.eval_every = 1000;
  opt.eval_episodes = 32;
  opt.write_trace = false;

  opt.mode = SamplerMode::accmer;
  opt.out_dir = "acceptance_artifacts/smoke_accmer";
  std::fprintf(stderr, "  [criterion 9] training accmer (150k steps)...\n");
  g_smoke.accmer = train_run(smoke_cfg(), opt);

  opt.mode = SamplerMode::prioritized;
  opt.out_dir = "acceptance_artifacts/smoke_prioritized";
  std::fprintf(stderr, "  [criterion 9] training prioritized (150k steps)...\n");
  g_smoke.prioritized = train_run(smoke_cfg(), opt);
  g_smoke.done = true;
}

std::string c9_learning_smoke() {
  run_smoke_once();
  const auto check_curve = [](const RunResult& res, const std::string& name) {
    require(!res.curve.empty(), name + ": empty evaluation curve");
    std::vector<double> rewards;
    for (const EvalPoint& p : res.curve) rewards.push_back(p.eval_mean_reward);
    const auto mk = accmer::testing::mann_kendall(rewards);
    require(mk.increasing(0.05),
            name + ": trend not significantly increasing (S=" +
                std::to_string(mk.s) + ", p=" + fmt(mk.p_two_sided) + ")");
    require(res.final_eval_reward >= 2.0,
            name + ": final mean reward " + fmt(res.final_eval_reward) + " < 2.0");
    return mk;
  };
  const auto mk_a = check_curve(g_smoke.accmer, "accmer");
  check_curve(g_smoke.prioritized, "prioritized");

  const double acc = g_smoke.accmer.final_eval_reward;
  const double pri = g_smoke.prioritized.final_eval_reward;
  require(std::abs(acc - pri) <= 0.15 * pri,
          "accmer final " + fmt(acc) + " not within 15% of prioritized " + fmt(pri));
  return "accmer " + fmt(acc) + ", prioritized " + fmt(pri) + " (MK p=" +
         fmt(mk_a.p_two_sided) + ")";
}

std::string c10_sampling_walltime() {
  run_smoke_once();
  const double acc = g_smoke.accmer.mean_sample_wall_ms;
  const double pri = g_smoke.prioritized.mean_sample_wall_ms;
  require(acc <= pri, "accmer sampling " + fmt(acc) + " ms/batch exceeds prioritized " +
                          fmt(pri) + " ms/batch");
  return "mean sampling wall time " + fmt(acc) + " ms/batch vs " + fmt(pri) +
         " ms/batch (prioritized)";
}

// --- criterion 11 -----------------------------------------------------------

std::string c11_cache_oracle() {
  RngStream rng(2718, "acceptance-lru");
  for (int iter = 0; iter < 100000; ++iter) {
    CacheConfig cfg;
    cfg.line_bytes = 64;
    cfg.transition_bytes = 64;
    cfg.associativity = 1u << rng.below(3);
    const std::uint64_t sets = 1ull << rng.below(3);
    cfg.capacity_bytes = sets * cfg.associativity * cfg.line_bytes;
    std::vector<std::uint64_t> lines(1 + rng.below(24));
    for (auto& l : lines) l = rng.below(sets * cfg.associativity * 2 + 3);
    const SimResult fast = simulate_cache(lines, cfg);
    const SimResult ref = accmer::testing::lru_reference(lines, cfg);
    require(fast.hits == ref.hits && fast.misses == ref.misses,
            "simulator and reference disagree at iteration " + std::to_string(iter));
  }
  return "100000 random traces match the list-based reference exactly";
}

// --- harness -----------------------------------------------------------------

struct Criterion {
  int number;
  std::string title;
  std::function<std::string()> run;
  double budget_seconds;  // stated runtime bound, 0 = none
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  const std::vector<Criterion> criteria = {
      {1, "reuse-window semantics (d=16, b=6, alpha=0.5)", c1_reuse_window, 1.0},
      {2, "joint action probability factor on the grid", c2_f_pi_grid, 1.0},
      {3, "optimal-weight oracle", c3_weight_oracle, 0.0},
      {4, "weighted-loss gradient fidelity", c4_gradient_fidelity, 30.0},
      {5, "mixer monotonicity", c5_mixer_monotonicity, 0.0},
      {6, "alpha=0 equivalence with uniform sampling", c6_alpha_zero_equivalence, 0.0},
      {7, "simulated-cache locality advantage", c7_locality_proxy, 120.0},
      {8, "distinct-slot bound per reuse window", c8_distinct_slot_bound, 0.0},
      {9, "learning smoke test (4 agents, 7x7)", c9_learning_smoke, 1800.0},
      {10, "sampling wall-clock direction", c10_sampling_walltime, 0.0},
      {11, "cache-simulator oracle", c11_cache_oracle, 0.0},
  };

  std::filesystem::create_directories("acceptance_artifacts");
  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!selected.empty() && !selected.count(c.number)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = true;
    try {
      detail = c.run();
    } catch (const std::exception& e) {
      ok = false;
      detail = e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (ok && c.budget_seconds > 0 && secs > c.budget_seconds) {
      ok = false;
      detail = "exceeded the " + fmt(c.budget_seconds) + " s budget (" + fmt(secs) +
               " s); " + detail;
    }
    std::printf("[%s] criterion %d: %s — %s (%.2f s)\n", ok ? "PASS" : "FAIL",
                c.number, c.title.c_str(), detail.c_str(), secs);
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  if (failures) {
    std::printf("%d criterion(s) failed\n", failures);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
