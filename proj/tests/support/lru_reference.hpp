#pragma once

#include <cstdint>
#include <list>
#include <span>
#include <vector>

#include "accmer/cache_sim.hpp"

namespace accmer::testing {

/// Reference LRU simulator built on per-set std::list with explicit
/// move-to-front, deliberately a different mechanism than the stamp-based
/// simulator it checks.
inline SimResult lru_reference(std::span<const std::uint64_t> lines,
                               const CacheConfig& cfg) {
  const std::uint64_t n_sets = cfg.n_sets();
  std::vector<std::list<std::uint64_t>> sets(n_sets);
  SimResult res;
  for (std::uint64_t line : lines) {
    auto& set = sets[line % n_sets];
    auto it = set.begin();
    for (; it != set.end(); ++it)
      if (*it == line) break;
    if (it != set.end()) {
      ++res.hits;
      set.splice(set.begin(), set, it);  // move to front (MRU)
    } else {
      ++res.misses;
      set.push_front(line);
      if (set.size() > cfg.associativity) set.pop_back();
    }
  }
  return res;
}

}  // namespace accmer::testing
