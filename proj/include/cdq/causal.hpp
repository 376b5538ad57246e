#pragma once

#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "cdq/rm_core.hpp"
#include "cdq/tlcd.hpp"

namespace cdq {

/// Product of a local RM with a causal DFA. Transitions are total over the
/// DFA alphabet: the DFA always moves, the RM component stays where its δ is
/// undefined. Entering a pair whose DFA component is the rejecting sink (or
/// moving inside it) pays -1; otherwise the local task-completion reward.
class TildeRm {
 public:
  TildeRm(const RewardMachine& local, const CausalDfa& causal);

  const EventAlphabet& alphabet() const noexcept { return alphabet_; }
  std::size_t num_pairs() const noexcept { return pairs_.size(); }
  std::size_t num_rm_states() const noexcept { return num_u_; }
  std::size_t num_dfa_states() const noexcept { return num_q_; }
  StateId initial() const noexcept { return 0; }
  std::pair<StateId, StateId> pair(StateId i) const { return pairs_.at(i); }
  std::optional<StateId> index(StateId u, StateId q) const;
  bool is_terminal(StateId i) const { return terminal_.at(i); }
  bool in_sink(StateId i) const { return sink_.at(i); }
  // By DFA-alphabet index.
  StateId next(StateId i, EventIndex e) const { return delta_[i * alphabet_.size() + e]; }
  double reward(StateId i, EventIndex e) const { return reward_[i * alphabet_.size() + e]; }
  std::optional<StateId> dfa_sink() const noexcept { return dfa_sink_; }

 private:
  EventAlphabet alphabet_;
  std::size_t num_u_, num_q_;
  std::optional<StateId> dfa_sink_;
  std::vector<std::pair<StateId, StateId>> pairs_;
  std::vector<std::int64_t> index_;  // u * num_q + q -> pair or -1
  std::vector<bool> terminal_, sink_;
  std::vector<StateId> delta_;
  std::vector<double> reward_;
};

TildeRm build_tilde(const RewardMachine& local, const CausalDfa& causal);

class ValueTable {
 public:
  ValueTable(const TildeRm& t, std::vector<double> values);

  double value(StateId u, StateId q) const;  // InvalidInput for unknown pairs
  double at(StateId pair_index) const { return values_.at(pair_index); }
  std::size_t sweeps = 0;

  static constexpr double kTolerance = 1e-9;

 private:
  std::size_t num_q_;
  std::vector<double> by_uq_;  // NaN where the pair is unreachable
  std::vector<double> values_;
};

/// Undiscounted Bellman recursion over the product, clamped below at 0,
/// terminals fixed at 0. Throws InvariantViolation if it has not settled
/// after |pairs| + 1 sweeps.
ValueTable value_iteration(const TildeRm& t);

/// True iff V*(u,q) = 0.
bool should_short_circuit(const ValueTable& vt, StateId u, StateId q);

}  // namespace cdq
