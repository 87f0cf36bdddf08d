#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "accmer/config.hpp"
#include "accmer/replay.hpp"
#include "accmer/rng.hpp"

namespace accmer {

enum class SamplerMode : std::uint8_t { uniform = 0, prioritized = 1, accmer = 2 };

inline std::string_view to_string(SamplerMode m) {
  switch (m) {
    case SamplerMode::uniform: return "uniform";
    case SamplerMode::prioritized: return "prioritized";
    case SamplerMode::accmer: return "accmer";
  }
  return "?";
}

inline SamplerMode parse_sampler_mode(std::string_view s) {
  if (s == "uniform") return SamplerMode::uniform;
  if (s == "prioritized") return SamplerMode::prioritized;
  if (s == "accmer") return SamplerMode::accmer;
  throw ConfigError("unknown sampler mode: " + std::string(s));
}

/// One mini-batch of slot indices. `reuse` (S-) holds members of the cached
/// high-priority set, in rank order; `fresh` (S+) holds this call's draws.
/// Uniform mode fills only `fresh`; the prioritized reference mode puts its
/// per-call top-b ranking in `fresh` as well, since nothing is cached.
struct SampleBatch {
  std::vector<std::uint32_t> reuse;
  std::vector<std::uint32_t> fresh;
  std::uint32_t step_in_window = 0;  // batch ordinal within the reuse window

  std::size_t size() const { return reuse.size() + fresh.size(); }
};

/// Ranks the occupied slots and returns the floor(alpha*b) heaviest ones.
inline std::vector<std::uint32_t> refresh_reuse_set(const WeightTable& table,
                                                    double alpha, std::size_t b) {
  if (table.occupied() < b)
    throw std::runtime_error("buffer underfilled: need at least b transitions");
  const auto k = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(b)));
  return table.top_k(k);
}

/// Draws `count` distinct occupied slots uniformly, excluding `s_minus`.
inline std::vector<std::uint32_t> sample_complement(RngStream& rng,
                                                    const ReplayBuffer& buffer,
                                                    std::span<const std::uint32_t> s_minus,
                                                    std::size_t count) {
  const std::size_t fill = buffer.size();
  if (fill < s_minus.size() + count)
    throw std::runtime_error("complement too small for requested draw");
  std::vector<std::uint32_t> excluded(s_minus.begin(), s_minus.end());
  std::sort(excluded.begin(), excluded.end());

  std::vector<std::uint32_t> out;
  out.reserve(count);
  std::unordered_set<std::uint32_t> drawn;
  drawn.reserve(count * 2);
  while (out.size() < count) {
    const auto slot = static_cast<std::uint32_t>(rng.below(fill));
    if (std::binary_search(excluded.begin(), excluded.end(), slot)) continue;
    if (!drawn.insert(slot).second) continue;
    out.push_back(slot);
  }
  return out;
}

/// Batch builder for the three sampling modes.
///
/// accmer: re-ranks the reuse set S- = top floor(alpha*b) once per window of
/// floor(d/b) sampling calls and serves it unchanged within the window; the
/// remaining b-|S-| indices are drawn uniformly from the complement each call.
/// uniform: b distinct uniform draws per call.
/// prioritized: re-ranks every call and takes the top b (reference mode).
class Sampler {
 public:
  Sampler(SamplerMode mode, const RunConfig& cfg)
      : mode_(mode),
        batch_size_(cfg.batch_size),
        reuse_size_(static_cast<std::size_t>(
            std::floor(cfg.reuse_ratio * static_cast<double>(cfg.batch_size)))),
        window_length_(
            static_cast<std::uint32_t>(cfg.buffer_capacity / cfg.batch_size)),
        alpha_(cfg.reuse_ratio) {}

  SamplerMode mode() const { return mode_; }
  std::uint32_t window_length() const { return window_length_; }
  std::size_t reuse_size() const { return reuse_size_; }
  std::uint64_t calls_issued() const { return calls_; }

  SampleBatch next_batch(RngStream& rng, const ReplayBuffer& buffer,
                         const WeightTable& table) {
    if (buffer.size() < batch_size_)
      throw std::runtime_error("buffer underfilled: need at least b transitions");
    SampleBatch batch;
    batch.step_in_window = static_cast<std::uint32_t>(calls_ % window_length_);
    switch (mode_) {
      case SamplerMode::uniform:
        batch.fresh = sample_complement(rng, buffer, {}, batch_size_);
        break;
      case SamplerMode::prioritized:
        batch.fresh = table.top_k(batch_size_);
        break;
      case SamplerMode::accmer:
        if (batch.step_in_window == 0)
          cached_reuse_ = refresh_reuse_set(table, alpha_, batch_size_);
        batch.reuse = cached_reuse_;
        batch.fresh =
            sample_complement(rng, buffer, cached_reuse_, batch_size_ - cached_reuse_.size());
        break;
    }
    ++calls_;
    return batch;
  }

 private:
  SamplerMode mode_;
  std::size_t batch_size_;
  std::size_t reuse_size_;
  std::uint32_t window_length_;
  double alpha_;
  std::vector<std::uint32_t> cached_reuse_;
  std::uint64_t calls_ = 0;
};

}  // namespace accmer
