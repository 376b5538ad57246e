#pragma once

#include <span>
#include <vector>

#include "cdq/rm_core.hpp"

namespace cdq {

struct Partition {
  std::vector<std::vector<StateId>> blocks;  // sorted members; blocks ordered by lowest member
  std::vector<std::uint32_t> block_of;
};

/// Least equivalence on rm's states that merges across non-local edges and is
/// a congruence for local events.
Partition compute_equivalence(const RewardMachine& rm, const EventAlphabet& local);

struct ProjectedRm {
  RewardMachine machine;                       // over the local alphabet
  std::vector<std::vector<StateId>> members;   // local state -> team states
  std::vector<StateId> local_of;               // team state -> local state (reachable blocks only; else ~0)

  static constexpr StateId kPruned = ~StateId{0};
};

ProjectedRm project(const RewardMachine& rm, const EventAlphabet& local);

EventSeq project_sequence(std::span<const Event> seq, const EventAlphabet& local);

/// `project` output as text, with the block back-map appended as comments.
std::string format_projection(const ProjectedRm& p, const RewardMachine& team);

}  // namespace cdq
