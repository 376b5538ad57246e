#include "cdq/projection.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <queue>
#include <sstream>

#include "cdq/errors.hpp"

namespace cdq {

namespace {

struct UnionFind {
  std::vector<std::uint32_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0u); }
  std::uint32_t find(std::uint32_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (a > b) std::swap(a, b);
    parent[b] = a;  // keep the lowest id as root
    return true;
  }
};

}  // namespace

Partition compute_equivalence(const RewardMachine& rm, const EventAlphabet& local) {
  if (!local.is_subset_of(rm.alphabet()))
    throw InvalidInput("local alphabet {" + local.to_string(",") + "} is not a subset of {" +
                       rm.alphabet().to_string(",") + "}");
  const std::size_t n = rm.num_states();
  const auto& sigma = rm.alphabet();
  std::vector<bool> is_local(sigma.size());
  for (EventIndex e = 0; e < sigma.size(); ++e) is_local[e] = local.contains(sigma[e].name());

  UnionFind uf(n);
  for (const auto& t : rm.transitions())
    if (!is_local[t.event]) uf.unite(t.from, t.to);

  // Congruence: per class and local event, all defined successors must share
  // a class. Iterate until no merge happens.
  for (bool changed = true; changed;) {
    changed = false;
    for (EventIndex e = 0; e < sigma.size(); ++e) {
      if (!is_local[e]) continue;
      std::vector<std::int64_t> target(n, -1);
      for (StateId u = 0; u < n; ++u) {
        auto v = rm.next(u, e);
        if (!v) continue;
        auto& slot = target[uf.find(u)];
        if (slot < 0) slot = uf.find(*v);
        else if (uf.unite(static_cast<std::uint32_t>(slot), *v)) {
          changed = true;
          slot = uf.find(*v);
        }
      }
    }
  }

  Partition p;
  p.block_of.resize(n);
  std::map<std::uint32_t, std::uint32_t> id_of_root;
  for (StateId u = 0; u < n; ++u) {
    const auto r = uf.find(u);
    auto [it, fresh] = id_of_root.try_emplace(r, static_cast<std::uint32_t>(p.blocks.size()));
    if (fresh) p.blocks.emplace_back();
    p.blocks[it->second].push_back(u);
    p.block_of[u] = it->second;
  }
  return p;
}

ProjectedRm project(const RewardMachine& rm, const EventAlphabet& local) {
  const auto part = compute_equivalence(rm, local);
  const std::size_t nb = part.blocks.size();

  // Local alphabet keeps its own order; map to team indices.
  std::vector<EventIndex> team_idx;
  for (const auto& e : local) team_idx.push_back(rm.alphabet().require(e.name()));

  std::vector<std::int64_t> bdelta(nb * local.size(), -1);
  for (std::size_t b = 0; b < nb; ++b)
    for (EventIndex le = 0; le < local.size(); ++le)
      for (auto u : part.blocks[b]) {
        auto v = rm.next(u, team_idx[le]);
        if (!v) continue;
        auto& slot = bdelta[b * local.size() + le];
        const auto tb = static_cast<std::int64_t>(part.block_of[*v]);
        if (slot >= 0 && slot != tb)
          throw InvariantViolation("projection congruence broken on event '" + local[le].name() + "'");
        slot = tb;
      }
  std::vector<bool> bterm(nb, false);
  for (StateId u = 0; u < rm.num_states(); ++u)
    if (rm.is_terminal(u)) bterm[part.block_of[u]] = true;

  // Prune blocks unreachable under the local transitions. A terminal block
  // keeps no outgoing transitions (absorbing).
  const auto init_b = part.block_of[rm.initial()];
  std::vector<std::int64_t> order(nb, -1);
  std::vector<std::uint32_t> kept;
  std::queue<std::uint32_t> q;
  order[init_b] = 0;
  kept.push_back(init_b);
  q.push(init_b);
  while (!q.empty()) {
    const auto b = q.front();
    q.pop();
    if (bterm[b]) continue;
    for (EventIndex le = 0; le < local.size(); ++le) {
      const auto t = bdelta[b * local.size() + le];
      if (t >= 0 && order[t] < 0) {
        order[t] = static_cast<std::int64_t>(kept.size());
        kept.push_back(static_cast<std::uint32_t>(t));
        q.push(static_cast<std::uint32_t>(t));
      }
    }
  }
  // Stable naming: sort kept blocks by block id (lowest member); initial first is
  // not required, ids follow the team's numbering.
  std::sort(kept.begin(), kept.end());
  for (std::size_t i = 0; i < kept.size(); ++i) order[kept[i]] = static_cast<std::int64_t>(i);

  std::vector<std::string> names;
  std::vector<bool> term;
  std::vector<Transition> ts;
  std::vector<std::vector<StateId>> members;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const auto b = kept[i];
    std::string name = "[";
    for (std::size_t j = 0; j < part.blocks[b].size(); ++j)
      name += (j ? "+" : "") + rm.state_name(part.blocks[b][j]);
    names.push_back(name + "]");
    term.push_back(bterm[b]);
    members.push_back(part.blocks[b]);
    for (EventIndex le = 0; le < local.size(); ++le) {
      const auto t = bdelta[b * local.size() + le];
      if (t >= 0 && !bterm[b])
        ts.push_back({static_cast<StateId>(i), le, static_cast<StateId>(order[t])});
    }
  }
  std::vector<StateId> local_of(rm.num_states(), ProjectedRm::kPruned);
  for (StateId u = 0; u < rm.num_states(); ++u)
    if (order[part.block_of[u]] >= 0) local_of[u] = static_cast<StateId>(order[part.block_of[u]]);

  RewardMachine m(local, std::move(names), static_cast<StateId>(order[init_b]), std::move(term), ts);
  return ProjectedRm{std::move(m), std::move(members), std::move(local_of)};
}

EventSeq project_sequence(std::span<const Event> seq, const EventAlphabet& local) {
  EventSeq out;
  for (const auto& e : seq)
    if (local.contains(e.name())) out.push_back(e);
  return out;
}

std::string format_projection(const ProjectedRm& p, const RewardMachine& team) {
  std::ostringstream os;
  os << format_reward_machine(p.machine);
  os << "# blocks:\n";
  for (StateId b = 0; b < p.members.size(); ++b) {
    os << "#   " << p.machine.state_name(b) << " =";
    for (auto u : p.members[b]) os << ' ' << team.state_name(u);
    os << '\n';
  }
  return os.str();
}

}  // namespace cdq
