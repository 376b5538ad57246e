#include "cdq/causal.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "cdq/errors.hpp"

namespace cdq {

TildeRm::TildeRm(const RewardMachine& local, const CausalDfa& causal)
    : alphabet_(causal.dfa.alphabet()),
      num_u_(local.num_states()),
      num_q_(causal.dfa.num_states()),
      dfa_sink_(causal.rejecting_sink) {
  if (!local.alphabet().is_subset_of(alphabet_))
    throw InvalidInput("causal DFA alphabet {" + alphabet_.to_string(",") + "} does not contain the local alphabet {" +
                       local.alphabet().to_string(",") + "}");
  const Dfa& dfa = causal.dfa;
  const std::size_t k = alphabet_.size();
  std::vector<std::int64_t> rm_idx;
  for (const auto& e : alphabet_) {
    auto i = local.alphabet().index_of(e.name());
    rm_idx.push_back(i ? static_cast<std::int64_t>(*i) : -1);
  }
  index_.assign(num_u_ * num_q_, -1);
  std::queue<StateId> work;
  auto intern = [&](StateId u, StateId q) {
    auto& slot = index_[u * num_q_ + q];
    if (slot < 0) {
      slot = static_cast<std::int64_t>(pairs_.size());
      pairs_.emplace_back(u, q);
      terminal_.push_back(local.is_terminal(u));
      sink_.push_back(dfa_sink_ == q);
      work.push(static_cast<StateId>(slot));
    }
    return static_cast<StateId>(slot);
  };
  intern(local.initial(), dfa.initial());
  while (!work.empty()) {
    const StateId i = work.front();
    work.pop();
    const auto [u, q] = pairs_[i];
    delta_.resize(pairs_.size() * k);
    reward_.resize(pairs_.size() * k);
    for (EventIndex e = 0; e < k; ++e) {
      const StateId u2 = rm_idx[e] < 0 ? u : local.next_or_stay(u, static_cast<EventIndex>(rm_idx[e]));
      const StateId q2 = dfa.next(q, e);
      const StateId j = intern(u2, q2);
      delta_.resize(pairs_.size() * k);
      reward_.resize(pairs_.size() * k);
      delta_[i * k + e] = j;
      reward_[i * k + e] = (dfa_sink_ == q || dfa_sink_ == q2) ? -1.0 : local.reward(u, u2);
    }
  }
}

std::optional<StateId> TildeRm::index(StateId u, StateId q) const {
  if (u >= num_u_ || q >= num_q_) return std::nullopt;
  const auto v = index_[u * num_q_ + q];
  if (v < 0) return std::nullopt;
  return static_cast<StateId>(v);
}

TildeRm build_tilde(const RewardMachine& local, const CausalDfa& causal) { return TildeRm(local, causal); }

ValueTable::ValueTable(const TildeRm& t, std::vector<double> values)
    : num_q_(t.num_dfa_states()),
      by_uq_(t.num_rm_states() * t.num_dfa_states(), std::numeric_limits<double>::quiet_NaN()),
      values_(std::move(values)) {
  for (StateId i = 0; i < t.num_pairs(); ++i) {
    const auto [u, q] = t.pair(i);
    by_uq_[u * num_q_ + q] = values_[i];
  }
}

double ValueTable::value(StateId u, StateId q) const {
  const std::size_t key = static_cast<std::size_t>(u) * num_q_ + q;
  if (q >= num_q_ || key >= by_uq_.size() || std::isnan(by_uq_[key]))
    throw InvalidInput("pair (" + std::to_string(u) + "," + std::to_string(q) + ") is not in the product");
  return by_uq_[key];
}

ValueTable value_iteration(const TildeRm& t) {
  const std::size_t n = t.num_pairs(), k = t.alphabet().size();
  std::vector<double> v(n, 0.0);
  std::size_t sweeps = 0;
  for (bool changed = true; changed;) {
    if (++sweeps > n + 1) throw InvariantViolation("value iteration did not settle; positive reward cycle");
    changed = false;
    for (StateId i = 0; i < n; ++i) {
      if (t.is_terminal(i)) continue;
      double best = 0.0;
      for (EventIndex e = 0; e < k; ++e) best = std::max(best, t.reward(i, e) + v[t.next(i, e)]);
      if (std::abs(best - v[i]) > ValueTable::kTolerance) {
        v[i] = best;
        changed = true;
      }
    }
  }
  ValueTable vt(t, std::move(v));
  vt.sweeps = sweeps;
  return vt;
}

bool should_short_circuit(const ValueTable& vt, StateId u, StateId q) {
  return std::abs(vt.value(u, q)) <= ValueTable::kTolerance;
}

}  // namespace cdq
