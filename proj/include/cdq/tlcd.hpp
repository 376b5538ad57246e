#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cdq/ltlf.hpp"
#include "cdq/rm_core.hpp"

namespace cdq {

struct Tlcd {
  EventAlphabet alphabet;
  std::vector<Formula> nodes;                            // distinct formulas
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // cause ~> effect
};

/// First meaningful line `alphabet: ...`, then one `lhs ~> rhs` per line.
Tlcd parse_tlcd(std::string_view text);
std::string format_tlcd(const Tlcd& c);

/// Conjunction over edges of G(lhs -> rhs), in edge order.
Formula tlcd_to_formula(const Tlcd& c);

/// G( OR_e (e & AND_{e' != e} !e') )
Formula one_event_constraint(const EventAlphabet& alphabet);

struct CausalDfa {
  Dfa dfa;
  std::optional<StateId> rejecting_sink;
  // More than one dead state existed before minimization merged them.
  bool collapsed_dead_states = false;
};

inline constexpr std::size_t kMaxFormulaStates = 10000;

CausalDfa compile(const Formula& f, const EventAlphabet& alphabet);
CausalDfa compile_tlcd(const Tlcd& c);

/// Unique non-accepting state whose transitions are all self-loops.
std::optional<StateId> find_rejecting_sink(const Dfa& d);

std::string to_dot(const CausalDfa& c);
std::string format_causal_dfa(const CausalDfa& c);

}  // namespace cdq
