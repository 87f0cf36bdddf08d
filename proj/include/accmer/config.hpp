#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace accmer {

/// Raised for rejected configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One run's resolved hyper-parameters. Immutable after validation; safe to
/// share read-only across threads. Defaults are the no-punishment preset
/// (batch 256, buffer 100000, lr 0.001, target sync every 200 episodes).
struct RunConfig {
  int n_agents = 8;
  int grid_size = 10;
  int n_prey = 8;
  double punishment = 0.0;              // reward units, <= 0
  std::uint64_t buffer_capacity = 100000;  // d
  std::uint64_t batch_size = 256;          // b
  double reuse_ratio = 0.5;             // alpha in [0,1]
  double env_discount = 0.99;           // gamma_env in [0,1)
  double weight_decay = 1.0;            // gamma_w in (0,1]
  double epsilon_start = 0.995;
  double epsilon_end = 0.05;
  std::int64_t epsilon_anneal_steps = 100000;
  double learning_rate = 0.001;
  std::int64_t target_sync_episodes = 200;
  std::int64_t total_steps = 1000000;   // t_max
  std::uint64_t seed = 1;

  bool operator==(const RunConfig&) const = default;
};

namespace detail {

inline std::string fmt_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

inline double parse_double(const std::string& key, const std::string& s) {
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw ConfigError(key + ": not a number: '" + s + "'");
  return v;
}

inline std::int64_t parse_i64(const std::string& key, const std::string& s) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw ConfigError(key + ": not an integer: '" + s + "'");
  return v;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw ConfigError(key + ": not a non-negative integer: '" + s + "'");
  return v;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

}  // namespace detail

/// Range and consistency checks. Error messages name the offending field.
inline void check_config(const RunConfig& c) {
  if (c.n_agents < 2) throw ConfigError("n_agents must be >= 2");
  if (c.grid_size < 1) throw ConfigError("grid_size must be >= 1");
  if (c.n_prey < 1) throw ConfigError("n_prey must be >= 1");
  if (!(c.punishment <= 0.0)) throw ConfigError("punishment must be <= 0");
  if (c.buffer_capacity < 1) throw ConfigError("buffer_capacity must be >= 1");
  if (c.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (c.batch_size > c.buffer_capacity)
    throw ConfigError("batch_size exceeds buffer_capacity (b > d)");
  if (!(c.reuse_ratio >= 0.0 && c.reuse_ratio <= 1.0))
    throw ConfigError("reuse_ratio out of [0,1]");
  if (!(c.env_discount >= 0.0 && c.env_discount < 1.0))
    throw ConfigError("env_discount out of [0,1)");
  if (!(c.weight_decay > 0.0 && c.weight_decay <= 1.0))
    throw ConfigError("weight_decay out of (0,1]");
  if (!(c.epsilon_start >= 0.0 && c.epsilon_start <= 1.0))
    throw ConfigError("epsilon_start out of [0,1]");
  if (!(c.epsilon_end >= 0.0 && c.epsilon_end <= 1.0))
    throw ConfigError("epsilon_end out of [0,1]");
  if (c.epsilon_anneal_steps < 1)
    throw ConfigError("epsilon_anneal_steps must be >= 1");
  if (!(c.learning_rate > 0.0) || !std::isfinite(c.learning_rate))
    throw ConfigError("learning_rate must be positive and finite");
  if (c.target_sync_episodes < 1)
    throw ConfigError("target_sync_episodes must be >= 1");
  if (c.total_steps < 0) throw ConfigError("total_steps must be >= 0");
}

/// Fills a RunConfig from raw key/value pairs (config file or CLI overrides).
/// Missing keys keep their defaults; unknown keys and out-of-range values are
/// hard errors.
inline RunConfig validate_config(const std::map<std::string, std::string>& raw,
                                 RunConfig base = RunConfig{}) {
  using namespace detail;
  RunConfig c = base;
  for (const auto& [key, val] : raw) {
    if (key == "n_agents") c.n_agents = static_cast<int>(parse_i64(key, val));
    else if (key == "grid_size") c.grid_size = static_cast<int>(parse_i64(key, val));
    else if (key == "n_prey") c.n_prey = static_cast<int>(parse_i64(key, val));
    else if (key == "punishment") c.punishment = parse_double(key, val);
    else if (key == "buffer_capacity") c.buffer_capacity = parse_u64(key, val);
    else if (key == "batch_size") c.batch_size = parse_u64(key, val);
    else if (key == "reuse_ratio") c.reuse_ratio = parse_double(key, val);
    else if (key == "env_discount") c.env_discount = parse_double(key, val);
    else if (key == "weight_decay") c.weight_decay = parse_double(key, val);
    else if (key == "epsilon_start") c.epsilon_start = parse_double(key, val);
    else if (key == "epsilon_end") c.epsilon_end = parse_double(key, val);
    else if (key == "epsilon_anneal_steps")
      c.epsilon_anneal_steps = parse_i64(key, val);
    else if (key == "learning_rate") c.learning_rate = parse_double(key, val);
    else if (key == "target_sync_episodes")
      c.target_sync_episodes = parse_i64(key, val);
    else if (key == "total_steps") c.total_steps = parse_i64(key, val);
    else if (key == "seed") c.seed = parse_u64(key, val);
    else throw ConfigError("unknown key: " + key);
  }
  check_config(c);
  return c;
}

/// Flat `key = value` text, one line per field, in declaration order.
/// Doubles use shortest round-trip formatting, so parse(serialize(c)) == c.
inline std::string serialize(const RunConfig& c) {
  using detail::fmt_double;
  std::ostringstream out;
  out << "n_agents = " << c.n_agents << '\n'
      << "grid_size = " << c.grid_size << '\n'
      << "n_prey = " << c.n_prey << '\n'
      << "punishment = " << fmt_double(c.punishment) << '\n'
      << "buffer_capacity = " << c.buffer_capacity << '\n'
      << "batch_size = " << c.batch_size << '\n'
      << "reuse_ratio = " << fmt_double(c.reuse_ratio) << '\n'
      << "env_discount = " << fmt_double(c.env_discount) << '\n'
      << "weight_decay = " << fmt_double(c.weight_decay) << '\n'
      << "epsilon_start = " << fmt_double(c.epsilon_start) << '\n'
      << "epsilon_end = " << fmt_double(c.epsilon_end) << '\n'
      << "epsilon_anneal_steps = " << c.epsilon_anneal_steps << '\n'
      << "learning_rate = " << fmt_double(c.learning_rate) << '\n'
      << "target_sync_episodes = " << c.target_sync_episodes << '\n'
      << "total_steps = " << c.total_steps << '\n'
      << "seed = " << c.seed << '\n';
  return out.str();
}

/// Parses `key = value` lines. '#' starts a comment; blank lines are skipped.
inline std::map<std::string, std::string> parse_key_values(std::istream& in) {
  using detail::trim;
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view s = line;
    if (auto pos = s.find('#'); pos != std::string_view::npos) s = s.substr(0, pos);
    s = trim(s);
    if (s.empty()) continue;
    auto eq = s.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    std::string key{trim(s.substr(0, eq))};
    std::string val{trim(s.substr(eq + 1))};
    if (key.empty() || val.empty())
      throw ConfigError("line " + std::to_string(lineno) + ": empty key or value");
    kv[key] = val;
  }
  return kv;
}

inline std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  return parse_key_values(in);
}

/// Named presets for the two punishment levels and the scalability setting.
inline RunConfig preset(std::string_view name) {
  RunConfig c;  // defaults are the no-punishment table
  if (name == "pp0") {
    return c;
  }
  if (name == "pp15") {
    c.punishment = -1.5;
    c.batch_size = 128;
    c.buffer_capacity = 10000;
    c.weight_decay = 0.8;
    return c;
  }
  if (name == "pp-scale") {
    c.reuse_ratio = 0.5;
    c.batch_size = 128;
    c.buffer_capacity = 10000;
    c.weight_decay = 0.8;
    return c;
  }
  throw ConfigError(std::string("unknown preset: ") + std::string(name));
}

/// ACCMER_SEED, when set, overrides the seed from file/defaults.
/// (Explicit --seed on the command line still wins over the env var.)
inline bool apply_env_seed_override(RunConfig& c) {
  const char* v = std::getenv("ACCMER_SEED");
  if (!v || !*v) return false;
  c.seed = detail::parse_u64("ACCMER_SEED", v);
  return true;
}

}  // namespace accmer
