#pragma once

#include <functional>
#include <random>
#include <set>
#include <vector>

#include "cdq/rm_core.hpp"

namespace oracles {

using namespace cdq;

// Language agreement over every sequence up to `depth`, tracked as the set of
// reachable state pairs per length (equivalent to enumerating sequences).
inline bool layered_equivalent(const RewardMachine& a, const RewardMachine& b, std::size_t depth) {
  std::set<std::pair<StateId, StateId>> layer{{a.initial(), b.initial()}};
  for (std::size_t len = 0; len <= depth; ++len) {
    std::set<std::pair<StateId, StateId>> next;
    for (auto [u, v] : layer) {
      if (a.is_terminal(u) != b.is_terminal(v)) return false;
      for (const auto& e : a.alphabet())
        next.emplace(rm_step(a, u, e).state, rm_step(b, v, e).state);
    }
    layer = std::move(next);
  }
  return true;
}

inline bool literal_equivalent(const RewardMachine& a, const RewardMachine& b, std::size_t max_len) {
  EventSeq s;
  std::function<bool(std::size_t)> rec = [&](std::size_t left) {
    if (rm_run(a, s) != rm_run(b, s)) return false;
    if (left == 0) return true;
    for (const auto& e : a.alphabet()) {
      s.push_back(e);
      const bool ok = rec(left - 1);
      s.pop_back();
      if (!ok) return false;
    }
    return true;
  };
  return rec(max_len);
}

inline std::vector<EventAlphabet> random_cover(std::mt19937_64& rng, const EventAlphabet& sigma, std::size_t agents) {
  std::vector<EventAlphabet> locals(agents);
  for (const auto& e : sigma) {
    bool placed = false;
    for (auto& l : locals)
      if (rng() % 2) {
        l.add(e);
        placed = true;
      }
    if (!placed) locals[rng() % agents].add(e);
  }
  return locals;
}

}  // namespace oracles
