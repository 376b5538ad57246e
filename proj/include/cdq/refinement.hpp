#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cdq/rm_core.hpp"

namespace cdq {

/// Coarsest partition of a complete deterministic automaton that refines
/// `initial_class` and is stable under every symbol (Hopcroft).
/// `delta[s * num_symbols + a]` is the successor of s on a.
/// Classes are numbered by their lowest member state.
std::vector<std::uint32_t> coarsest_stable_partition(std::size_t num_states, std::size_t num_symbols,
                                                     std::span<const StateId> delta,
                                                     std::span<const std::uint32_t> initial_class);

/// Minimal DFA restricted to reachable states, states renumbered in BFS order
/// from the initial state and named q0, q1, ...
Dfa minimize_dfa(const Dfa& dfa);

}  // namespace cdq
