#pragma once

#include <span>
#include <utility>
#include <vector>

#include "cdq/projection.hpp"
#include "cdq/rm_core.hpp"

namespace cdq {

struct ComposedRm {
  RewardMachine machine;
  std::vector<std::vector<StateId>> components;  // composed state -> component states
};

/// Parallel composition. An event moves every component whose alphabet holds
/// it, and is undefined unless all of those define it at their current state.
/// Only reachable tuples are kept.
ComposedRm parallel_compose(const RewardMachine& a, const RewardMachine& b);
ComposedRm parallel_compose(std::span<const RewardMachine> machines);

/// Synchronous product with a DFA over a superset alphabet. The DFA always
/// moves; the RM moves where its δ is defined. Terminal iff both components
/// are final.
ComposedRm compose_rm_dfa(const RewardMachine& rm, const Dfa& dfa);

struct BisimResult {
  bool bisimilar = false;
  std::vector<std::pair<StateId, StateId>> relation;  // when bisimilar
  EventSeq counterexample;                             // when not
};

/// Bisimilarity of two task-completion RMs with undefined transitions read as
/// self-loops, so that it coincides with equality of their rm_run languages.
BisimResult bisimilar(const RewardMachine& a, const RewardMachine& b);

/// Projections of `team` onto each local alphabet. The locals must cover the
/// team alphabet.
std::vector<ProjectedRm> project_all(const RewardMachine& team, std::span<const EventAlphabet> locals);
ComposedRm compose_projections(std::span<const ProjectedRm> projections);

BisimResult check_strict(const RewardMachine& team, std::span<const EventAlphabet> locals);
BisimResult check_relaxed(const RewardMachine& team, std::span<const EventAlphabet> locals,
                          const Dfa& causal);

}  // namespace cdq
