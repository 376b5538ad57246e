#include "cdq/composition.hpp"

#include <algorithm>
#include <map>
#include <queue>

#include "cdq/errors.hpp"
#include "cdq/refinement.hpp"

namespace cdq {

namespace {

std::string tuple_name(const std::vector<std::string>& parts) {
  std::string s = "<";
  for (std::size_t i = 0; i < parts.size(); ++i) s += (i ? "|" : "") + parts[i];
  return s + ">";
}

}  // namespace

ComposedRm parallel_compose(std::span<const RewardMachine> ms) {
  if (ms.empty()) throw InvalidInput("parallel composition of zero machines");
  EventAlphabet sigma;
  for (const auto& m : ms) sigma = sigma.united(m.alphabet());

  // comp_idx[i][e] = index of e in machine i, or -1.
  std::vector<std::vector<std::int64_t>> comp_idx(ms.size());
  for (std::size_t i = 0; i < ms.size(); ++i)
    for (const auto& e : sigma) {
      auto idx = ms[i].alphabet().index_of(e.name());
      comp_idx[i].push_back(idx ? static_cast<std::int64_t>(*idx) : -1);
    }

  std::map<std::vector<StateId>, StateId> id;
  std::vector<std::vector<StateId>> tuples;
  std::vector<Transition> ts;
  std::queue<StateId> work;
  auto intern = [&](const std::vector<StateId>& t) {
    auto [it, fresh] = id.try_emplace(t, static_cast<StateId>(tuples.size()));
    if (fresh) {
      tuples.push_back(t);
      work.push(it->second);
    }
    return it->second;
  };
  std::vector<StateId> init;
  for (const auto& m : ms) init.push_back(m.initial());
  intern(init);
  while (!work.empty()) {
    const StateId s = work.front();
    work.pop();
    for (EventIndex e = 0; e < sigma.size(); ++e) {
      // Shared events synchronize: every machine that knows e must move.
      auto next = tuples[s];
      bool all = true;
      for (std::size_t i = 0; i < ms.size() && all; ++i) {
        if (comp_idx[i][e] < 0) continue;
        if (auto v = ms[i].next(next[i], static_cast<EventIndex>(comp_idx[i][e])))
          next[i] = *v;
        else
          all = false;
      }
      if (all) ts.push_back({s, e, intern(next)});
    }
  }
  std::vector<std::string> names;
  std::vector<bool> term;
  for (const auto& t : tuples) {
    std::vector<std::string> parts;
    bool all = true;
    for (std::size_t i = 0; i < ms.size(); ++i) {
      parts.push_back(ms[i].state_name(t[i]));
      all = all && ms[i].is_terminal(t[i]);
    }
    names.push_back(tuple_name(parts));
    term.push_back(all);
  }
  RewardMachine m(std::move(sigma), std::move(names), 0, std::move(term), ts);
  return {std::move(m), std::move(tuples)};
}

ComposedRm parallel_compose(const RewardMachine& a, const RewardMachine& b) {
  const std::vector<RewardMachine> ms{a, b};
  return parallel_compose(std::span<const RewardMachine>(ms));
}

ComposedRm compose_rm_dfa(const RewardMachine& rm, const Dfa& dfa) {
  if (!rm.alphabet().is_subset_of(dfa.alphabet()))
    throw InvalidInput("DFA alphabet {" + dfa.alphabet().to_string(",") +
                       "} does not contain the RM alphabet {" + rm.alphabet().to_string(",") + "}");
  const auto& sigma = dfa.alphabet();
  std::vector<std::int64_t> rm_idx;
  for (const auto& e : sigma) {
    auto idx = rm.alphabet().index_of(e.name());
    rm_idx.push_back(idx ? static_cast<std::int64_t>(*idx) : -1);
  }
  std::map<std::pair<StateId, StateId>, StateId> id;
  std::vector<std::vector<StateId>> tuples;
  std::vector<Transition> ts;
  std::queue<StateId> work;
  auto intern = [&](StateId u, StateId q) {
    auto [it, fresh] = id.try_emplace({u, q}, static_cast<StateId>(tuples.size()));
    if (fresh) {
      tuples.push_back({u, q});
      work.push(it->second);
    }
    return it->second;
  };
  intern(rm.initial(), dfa.initial());
  while (!work.empty()) {
    const StateId s = work.front();
    work.pop();
    const StateId u = tuples[s][0], q = tuples[s][1];
    for (EventIndex e = 0; e < sigma.size(); ++e) {
      const StateId u2 = rm_idx[e] < 0 ? u : rm.next_or_stay(u, static_cast<EventIndex>(rm_idx[e]));
      ts.push_back({s, e, intern(u2, dfa.next(q, e))});
    }
  }
  std::vector<std::string> names;
  std::vector<bool> term;
  for (const auto& t : tuples) {
    names.push_back(tuple_name({rm.state_name(t[0]), dfa.state_name(t[1])}));
    term.push_back(rm.is_terminal(t[0]) && dfa.is_accepting(t[1]));
  }
  RewardMachine m(sigma, std::move(names), 0, std::move(term), ts);
  return {std::move(m), std::move(tuples)};
}

BisimResult bisimilar(const RewardMachine& a, const RewardMachine& b) {
  if (!a.alphabet().same_set(b.alphabet()))
    throw InvalidInput("bisimulation needs equal alphabets: {" + a.alphabet().to_string(",") +
                       "} vs {" + b.alphabet().to_string(",") + "}");
  const std::size_t k = a.alphabet().size();
  std::vector<EventIndex> b_of(k);
  for (EventIndex e = 0; e < k; ++e) b_of[e] = b.alphabet().require(a.alphabet()[e].name());

  // Partition refinement on the completed disjoint union.
  const std::size_t na = a.num_states(), nb = b.num_states();
  std::vector<StateId> delta((na + nb) * k);
  std::vector<std::uint32_t> init(na + nb);
  for (StateId u = 0; u < na; ++u) {
    init[u] = a.is_terminal(u);
    for (EventIndex e = 0; e < k; ++e) delta[u * k + e] = a.next_or_stay(u, e);
  }
  for (StateId v = 0; v < nb; ++v) {
    init[na + v] = b.is_terminal(v);
    for (EventIndex e = 0; e < k; ++e)
      delta[(na + v) * k + e] = static_cast<StateId>(na + b.next_or_stay(v, b_of[e]));
  }
  const auto cls = coarsest_stable_partition(na + nb, k, delta, init);
  const bool equivalent = cls[a.initial()] == cls[na + b.initial()];

  // Synchronous BFS over reachable pairs: yields the relation, or the
  // shortest sequence reaching an acceptance disagreement.
  BisimResult res;
  std::map<std::pair<StateId, StateId>, std::size_t> seen;
  std::vector<std::pair<StateId, StateId>> pairs;
  std::vector<std::pair<std::size_t, EventIndex>> parent;
  std::queue<std::size_t> work;
  auto visit = [&](StateId u, StateId v, std::size_t from, EventIndex e) {
    auto [it, fresh] = seen.try_emplace({u, v}, pairs.size());
    if (!fresh) return false;
    pairs.emplace_back(u, v);
    parent.emplace_back(from, e);
    work.push(it->second);
    return true;
  };
  visit(a.initial(), b.initial(), 0, 0);
  std::optional<std::size_t> bad;
  while (!work.empty() && !bad) {
    const auto i = work.front();
    work.pop();
    const auto [u, v] = pairs[i];
    if (a.is_terminal(u) != b.is_terminal(v)) {
      bad = i;
      break;
    }
    for (EventIndex e = 0; e < k; ++e) visit(a.next_or_stay(u, e), b.next_or_stay(v, b_of[e]), i, e);
  }
  if (equivalent == bad.has_value())
    throw InvariantViolation("partition refinement and product search disagree on bisimilarity");

  if (equivalent) {
    res.bisimilar = true;
    res.relation = std::move(pairs);
    std::sort(res.relation.begin(), res.relation.end());
    return res;
  }
  std::vector<Event> rev;
  for (std::size_t i = *bad; i != 0; i = parent[i].first) rev.push_back(a.alphabet()[parent[i].second]);
  res.counterexample.assign(rev.rbegin(), rev.rend());
  if (rm_run(a, res.counterexample) == rm_run(b, res.counterexample))
    throw InvariantViolation("counterexample '" + format_events(res.counterexample) +
                             "' does not distinguish the machines");
  return res;
}

std::vector<ProjectedRm> project_all(const RewardMachine& team, std::span<const EventAlphabet> locals) {
  if (locals.empty()) throw InvalidInput("at least one local alphabet is required");
  EventAlphabet cover;
  for (const auto& l : locals) {
    if (!l.is_subset_of(team.alphabet()))
      throw InvalidInput("local alphabet {" + l.to_string(",") + "} not contained in team alphabet");
    cover = cover.united(l);
  }
  if (!team.alphabet().is_subset_of(cover))
    throw InvalidInput("local alphabets do not cover the team alphabet {" +
                       team.alphabet().to_string(",") + "}");
  std::vector<ProjectedRm> out;
  for (const auto& l : locals) out.push_back(project(team, l));
  return out;
}

ComposedRm compose_projections(std::span<const ProjectedRm> projections) {
  std::vector<RewardMachine> ms;
  for (const auto& p : projections) ms.push_back(p.machine);
  return parallel_compose(std::span<const RewardMachine>(ms));
}

BisimResult check_strict(const RewardMachine& team, std::span<const EventAlphabet> locals) {
  const auto ps = project_all(team, locals);
  return bisimilar(team, compose_projections(ps).machine);
}

BisimResult check_relaxed(const RewardMachine& team, std::span<const EventAlphabet> locals,
                          const Dfa& causal) {
  if (!team.alphabet().is_subset_of(causal.alphabet()))
    throw InvalidInput("causal DFA alphabet must contain the team alphabet");
  const auto ps = project_all(team, locals);
  const auto composed = compose_projections(ps);
  return bisimilar(compose_rm_dfa(team, causal).machine,
                   compose_rm_dfa(composed.machine, causal).machine);
}

}  // namespace cdq
