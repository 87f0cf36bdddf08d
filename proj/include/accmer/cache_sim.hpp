#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "accmer/trace.hpp"

namespace accmer {

/// Parameters of the simulated set-associative LRU cache, plus the modeled
/// size of one serialized transition. Slots are modeled as contiguous
/// storage: slot i occupies bytes [i*transition_bytes, (i+1)*transition_bytes).
struct CacheConfig {
  std::uint64_t capacity_bytes = 1ull << 20;
  std::uint32_t line_bytes = 64;
  std::uint32_t associativity = 8;
  std::uint32_t transition_bytes = 256;

  void validate() const {
    if (capacity_bytes == 0 || line_bytes == 0 || associativity == 0 ||
        transition_bytes == 0)
      throw ConfigError("cache parameters must be positive");
    if ((line_bytes & (line_bytes - 1)) != 0)
      throw ConfigError("line_bytes must be a power of two");
    if (capacity_bytes % (static_cast<std::uint64_t>(line_bytes) * associativity) != 0)
      throw ConfigError("capacity_bytes must be divisible by line_bytes * associativity");
  }

  std::uint64_t n_sets() const {
    return capacity_bytes / (static_cast<std::uint64_t>(line_bytes) * associativity);
  }
};

/// Expands each slot access into the cache-line addresses its bytes span,
/// in address order.
inline std::vector<std::uint64_t> slots_to_lines(const AccessTrace& trace,
                                                 const CacheConfig& cfg) {
  cfg.validate();
  std::vector<std::uint64_t> lines;
  lines.reserve(trace.records.size() *
                ((cfg.transition_bytes + cfg.line_bytes - 1) / cfg.line_bytes));
  for (const TraceRecord& r : trace.records) {
    const std::uint64_t first_byte =
        static_cast<std::uint64_t>(r.slot) * cfg.transition_bytes;
    const std::uint64_t last_byte = first_byte + cfg.transition_bytes - 1;
    for (std::uint64_t line = first_byte / cfg.line_bytes;
         line <= last_byte / cfg.line_bytes; ++line)
      lines.push_back(line);
  }
  return lines;
}

struct SimResult {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;

  double miss_rate() const {
    const std::uint64_t total = hits + misses;
    return total == 0 ? 0.0 : static_cast<double>(misses) / static_cast<double>(total);
  }
};

/// Trace-driven set-associative LRU simulation. set = line mod n_sets;
/// a miss inserts the line, evicting the least recently used way.
inline SimResult simulate_cache(std::span<const std::uint64_t> line_addresses,
                                const CacheConfig& cfg) {
  cfg.validate();
  const std::uint64_t n_sets = cfg.n_sets();
  const std::uint32_t ways = cfg.associativity;

  struct Way {
    std::uint64_t line = 0;
    std::uint64_t stamp = 0;
    bool valid = false;
  };
  std::vector<Way> sets(n_sets * ways);

  SimResult res;
  std::uint64_t clock = 0;
  for (std::uint64_t line : line_addresses) {
    ++clock;
    Way* base = &sets[(line % n_sets) * ways];
    Way* victim = base;
    bool hit = false;
    for (std::uint32_t w = 0; w < ways; ++w) {
      Way& way = base[w];
      if (way.valid && way.line == line) {
        way.stamp = clock;
        ++res.hits;
        hit = true;
        break;
      }
      if (!way.valid) {
        victim = &way;  // empty way beats any LRU candidate
      } else if (victim->valid && way.stamp < victim->stamp) {
        victim = &way;
      }
    }
    if (!hit) {
      ++res.misses;
      victim->valid = true;
      victim->line = line;
      victim->stamp = clock;
    }
  }
  return res;
}

/// Mean number of distinct slots touched per reuse window (floor(d/b)
/// consecutive batches). Returns -1 when the trace lacks d/b metadata.
inline double distinct_slots_per_window(const AccessTrace& trace) {
  if (trace.b == 0 || trace.d == 0 || trace.d < trace.b) return -1.0;
  const std::uint32_t window = trace.d / trace.b;
  std::unordered_set<std::uint64_t> seen;
  std::uint64_t windows = 0;
  double total = 0.0;
  std::uint64_t current = 0;
  bool any = false;
  for (const TraceRecord& r : trace.records) {
    const std::uint64_t w = r.batch / window;
    if (!any || w != current) {
      if (any) {
        total += static_cast<double>(seen.size());
        ++windows;
      }
      seen.clear();
      current = w;
      any = true;
    }
    seen.insert(r.slot);
  }
  if (any) {
    total += static_cast<double>(seen.size());
    ++windows;
  }
  return windows == 0 ? -1.0 : total / static_cast<double>(windows);
}

}  // namespace accmer
