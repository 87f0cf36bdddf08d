#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "accmer/config.hpp"
#include "accmer/learner.hpp"
#include "accmer/replay.hpp"

// Binary artifact formats. Both are little-endian with a 4-byte magic and a
// u32 version so future layout changes stay detectable.
//
// Learner checkpoint ("ACLC", version 1):
//   u32 config_len, config text (the flat key=value serialization)
//   u32 obs_len, u32 state_len, u32 hidden, u32 mix_hidden
//   per parameter tensor, in collect_tensors() order: u64 count, f32[count]
//
// Replay checkpoint ("ACRP", version 1):
//   u64 capacity d, u64 fill, u64 cursor
//   u32 state_len, u32 obs_total, u32 n_agents
//   f64 weight[d], u32 generation[d]
//   per occupied slot (fill of them, slot order):
//     u64 step, f32 reward, u8 done, u8 action[n_agents],
//     f32 state[state_len], f32 next_state[state_len],
//     f32 obs[obs_total], f32 next_obs[obs_total]

namespace accmer {

namespace detail {

inline void write_bytes(std::ofstream& out, const void* p, std::size_t n) {
  out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void read_bytes(std::ifstream& in, void* p, std::size_t n, const char* what) {
  in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    throw std::runtime_error(std::string("corrupt checkpoint: truncated ") + what);
}

template <typename V>
void write_pod(std::ofstream& out, V v) {
  write_bytes(out, &v, sizeof(V));
}

template <typename V>
V read_pod(std::ifstream& in, const char* what) {
  V v{};
  read_bytes(in, &v, sizeof(V), what);
  return v;
}

}  // namespace detail

inline constexpr char kLearnerMagic[4] = {'A', 'C', 'L', 'C'};
inline constexpr char kReplayMagic[4] = {'A', 'C', 'R', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void save_learner_checkpoint(const std::string& path, Learner<T>& learner) {
  using namespace detail;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out.write(kLearnerMagic, 4);
  write_pod<std::uint32_t>(out, kCheckpointVersion);
  const std::string cfg = serialize(learner.config());
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.size()));
  write_bytes(out, cfg.data(), cfg.size());
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(learner.obs_len()));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(learner.state_len()));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(learner.hidden()));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(learner.mix_hidden()));
  for (const auto& [params, grads] : learner.collect_tensors()) {
    write_pod<std::uint64_t>(out, params.size());
    for (T v : params) write_pod<float>(out, static_cast<float>(v));
  }
  out.flush();
  if (out.fail()) throw std::runtime_error("checkpoint write failed: " + path);
}

struct LoadedLearner {
  RunConfig config;
  LearnerOptions<float> options;
  Learner<float> learner;
};

inline LoadedLearner load_learner_checkpoint(const std::string& path) {
  using namespace detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4] = {};
  read_bytes(in, magic, 4, "magic");
  if (std::memcmp(magic, kLearnerMagic, 4) != 0)
    throw std::runtime_error("corrupt checkpoint: bad magic in " + path);
  if (read_pod<std::uint32_t>(in, "version") != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version in " + path);
  const auto cfg_len = read_pod<std::uint32_t>(in, "config length");
  std::string cfg_text(cfg_len, '\0');
  read_bytes(in, cfg_text.data(), cfg_len, "config");
  std::istringstream cfg_in(cfg_text);
  const RunConfig cfg = validate_config(parse_key_values(cfg_in));

  const auto obs_len = read_pod<std::uint32_t>(in, "obs_len");
  const auto state_len = read_pod<std::uint32_t>(in, "state_len");
  LearnerOptions<float> opt;
  opt.hidden = static_cast<int>(read_pod<std::uint32_t>(in, "hidden"));
  opt.mix_hidden = static_cast<int>(read_pod<std::uint32_t>(in, "mix_hidden"));

  RngStream init(cfg.seed, "learner-init");
  LoadedLearner loaded{cfg, opt,
                       Learner<float>(cfg, static_cast<int>(obs_len),
                                      static_cast<int>(state_len), opt, init)};
  for (auto& [params, grads] : loaded.learner.collect_tensors()) {
    const auto count = read_pod<std::uint64_t>(in, "tensor size");
    if (count != params.size())
      throw std::runtime_error("corrupt checkpoint: tensor shape mismatch in " + path);
    for (auto& v : params) v = read_pod<float>(in, "tensor data");
  }
  loaded.learner.sync_targets();
  return loaded;
}

inline void save_replay_checkpoint(const std::string& path, const ReplayBuffer& buffer,
                                   const WeightTable& table) {
  using namespace detail;
  if (buffer.capacity() != table.capacity())
    throw std::invalid_argument("buffer and weight table capacities differ");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open replay checkpoint for writing: " + path);

  std::uint32_t state_len = 0, obs_total = 0, n_agents = 0;
  if (buffer.size() > 0) {
    const Transition& t0 = buffer[0];
    state_len = static_cast<std::uint32_t>(t0.state.size());
    obs_total = static_cast<std::uint32_t>(t0.obs.size());
    n_agents = static_cast<std::uint32_t>(t0.actions.size());
  }

  out.write(kReplayMagic, 4);
  write_pod<std::uint32_t>(out, kCheckpointVersion);
  write_pod<std::uint64_t>(out, buffer.capacity());
  write_pod<std::uint64_t>(out, buffer.size());
  write_pod<std::uint64_t>(out, buffer.write_cursor());
  write_pod<std::uint32_t>(out, state_len);
  write_pod<std::uint32_t>(out, obs_total);
  write_pod<std::uint32_t>(out, n_agents);
  for (std::size_t i = 0; i < table.capacity(); ++i)
    write_pod<double>(out, table.weight(i));
  for (std::size_t i = 0; i < table.capacity(); ++i)
    write_pod<std::uint32_t>(out, table.generation(i));
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    const Transition& t = buffer[i];
    if (t.state.size() != state_len || t.obs.size() != obs_total ||
        t.actions.size() != n_agents || t.next_state.size() != state_len ||
        t.next_obs.size() != obs_total)
      throw std::invalid_argument("replay checkpoint requires homogeneous transitions");
    write_pod<std::uint64_t>(out, t.step);
    write_pod<float>(out, t.reward);
    write_pod<std::uint8_t>(out, t.done ? 1 : 0);
    write_bytes(out, t.actions.data(), n_agents);
    write_bytes(out, t.state.data(), state_len * sizeof(float));
    write_bytes(out, t.next_state.data(), state_len * sizeof(float));
    write_bytes(out, t.obs.data(), obs_total * sizeof(float));
    write_bytes(out, t.next_obs.data(), obs_total * sizeof(float));
  }
  out.flush();
  if (out.fail()) throw std::runtime_error("replay checkpoint write failed: " + path);
}

struct LoadedReplay {
  ReplayBuffer buffer;
  WeightTable table;
};

inline LoadedReplay load_replay_checkpoint(const std::string& path) {
  using namespace detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open replay checkpoint: " + path);
  char magic[4] = {};
  read_bytes(in, magic, 4, "magic");
  if (std::memcmp(magic, kReplayMagic, 4) != 0)
    throw std::runtime_error("corrupt replay checkpoint: bad magic in " + path);
  if (read_pod<std::uint32_t>(in, "version") != kCheckpointVersion)
    throw std::runtime_error("unsupported replay checkpoint version in " + path);
  const auto capacity = read_pod<std::uint64_t>(in, "capacity");
  const auto fill = read_pod<std::uint64_t>(in, "fill");
  const auto cursor = read_pod<std::uint64_t>(in, "cursor");
  const auto state_len = read_pod<std::uint32_t>(in, "state_len");
  const auto obs_total = read_pod<std::uint32_t>(in, "obs_total");
  const auto n_agents = read_pod<std::uint32_t>(in, "n_agents");
  if (capacity == 0 || fill > capacity || cursor >= capacity)
    throw std::runtime_error("corrupt replay checkpoint: bad header in " + path);

  std::vector<double> weights(capacity);
  for (auto& w : weights) w = read_pod<double>(in, "weight");
  std::vector<std::uint32_t> gens(capacity);
  for (auto& g : gens) g = read_pod<std::uint32_t>(in, "generation");

  std::vector<Transition> slots(capacity);
  for (std::uint64_t i = 0; i < fill; ++i) {
    Transition t;
    t.step = read_pod<std::uint64_t>(in, "step");
    t.reward = read_pod<float>(in, "reward");
    t.done = read_pod<std::uint8_t>(in, "done") != 0;
    t.actions.resize(n_agents);
    read_bytes(in, t.actions.data(), n_agents, "actions");
    t.state.resize(state_len);
    read_bytes(in, t.state.data(), state_len * sizeof(float), "state");
    t.next_state.resize(state_len);
    read_bytes(in, t.next_state.data(), state_len * sizeof(float), "next state");
    t.obs.resize(obs_total);
    read_bytes(in, t.obs.data(), obs_total * sizeof(float), "obs");
    t.next_obs.resize(obs_total);
    read_bytes(in, t.next_obs.data(), obs_total * sizeof(float), "next obs");
    slots[i] = std::move(t);
  }
  return LoadedReplay{
      ReplayBuffer::restore(std::move(slots), fill, cursor),
      WeightTable::restore(std::move(weights), std::move(gens), fill)};
}

}  // namespace accmer
