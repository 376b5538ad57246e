#include "cdq/refinement.hpp"

#include <algorithm>
#include <numeric>
#include <queue>

#include "cdq/errors.hpp"

namespace cdq {

namespace {

// Array-backed partition: members of block b occupy elems[first[b], end[b]).
struct Partition {
  std::vector<std::uint32_t> elems, loc, block_of, first, end, marked;

  void mark(std::uint32_t s, std::vector<std::uint32_t>& touched) {
    const auto b = block_of[s];
    const auto pos = loc[s];
    const auto target = first[b] + marked[b];
    if (pos < target) return;  // already marked
    if (marked[b] == 0) touched.push_back(b);
    std::swap(elems[pos], elems[target]);
    loc[elems[pos]] = pos;
    loc[elems[target]] = target;
    ++marked[b];
  }

  std::uint32_t size(std::uint32_t b) const { return end[b] - first[b]; }
};

}  // namespace

std::vector<std::uint32_t> coarsest_stable_partition(std::size_t n, std::size_t k,
                                                     std::span<const StateId> delta,
                                                     std::span<const std::uint32_t> initial_class) {
  if (delta.size() != n * k) throw InvalidInput("transition table has wrong size");
  if (initial_class.size() != n) throw InvalidInput("initial classes must cover every state");
  if (n == 0) return {};

  // Inverse transitions: pred[a][t] lists s with delta(s,a) = t.
  std::vector<std::vector<std::uint32_t>> pred_start(k, std::vector<std::uint32_t>(n + 1, 0));
  std::vector<std::vector<std::uint32_t>> pred(k, std::vector<std::uint32_t>(n));
  for (std::size_t a = 0; a < k; ++a) {
    auto& st = pred_start[a];
    for (std::size_t s = 0; s < n; ++s) {
      const auto t = delta[s * k + a];
      if (t >= n) throw InvalidInput("transition target out of range");
      ++st[t + 1];
    }
    std::partial_sum(st.begin(), st.end(), st.begin());
    auto fill = st;
    for (std::size_t s = 0; s < n; ++s) pred[a][fill[delta[s * k + a]]++] = static_cast<std::uint32_t>(s);
  }

  Partition p;
  p.elems.resize(n);
  std::iota(p.elems.begin(), p.elems.end(), 0u);
  std::stable_sort(p.elems.begin(), p.elems.end(),
                   [&](auto x, auto y) { return initial_class[x] < initial_class[y]; });
  p.loc.resize(n);
  p.block_of.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto s = p.elems[i];
    p.loc[s] = i;
    if (i == 0 || initial_class[s] != initial_class[p.elems[i - 1]]) {
      p.first.push_back(i);
      if (i) p.end.push_back(i);
      p.marked.push_back(0);
    }
    p.block_of[s] = static_cast<std::uint32_t>(p.first.size() - 1);
  }
  p.end.push_back(static_cast<std::uint32_t>(n));

  std::vector<char> in_work;  // indexed block * k + symbol
  std::queue<std::pair<std::uint32_t, std::uint32_t>> work;
  auto push = [&](std::uint32_t b, std::uint32_t a) {
    const std::size_t key = static_cast<std::size_t>(b) * k + a;
    if (in_work.size() <= key) in_work.resize((b + 1) * k, 0);
    if (in_work[key]) return;
    in_work[key] = 1;
    work.emplace(b, a);
  };
  auto queued = [&](std::uint32_t b, std::uint32_t a) {
    const std::size_t key = static_cast<std::size_t>(b) * k + a;
    return key < in_work.size() && in_work[key];
  };

  {
    // Every initial block but the largest is a splitter.
    std::uint32_t largest = 0;
    for (std::uint32_t b = 1; b < p.first.size(); ++b)
      if (p.size(b) > p.size(largest)) largest = b;
    for (std::uint32_t b = 0; b < p.first.size(); ++b)
      if (b != largest)
        for (std::uint32_t a = 0; a < k; ++a) push(b, a);
  }

  std::vector<std::uint32_t> splitter, touched;
  while (!work.empty()) {
    const auto [b, a] = work.front();
    work.pop();
    in_work[static_cast<std::size_t>(b) * k + a] = 0;
    splitter.assign(p.elems.begin() + p.first[b], p.elems.begin() + p.end[b]);
    touched.clear();
    for (auto t : splitter)
      for (auto i = pred_start[a][t]; i < pred_start[a][t + 1]; ++i) p.mark(pred[a][i], touched);
    for (auto y : touched) {
      const auto m = p.marked[y];
      p.marked[y] = 0;
      if (m == p.size(y)) continue;
      // Marked prefix becomes a new block.
      const auto nb = static_cast<std::uint32_t>(p.first.size());
      p.first.push_back(p.first[y]);
      p.end.push_back(p.first[y] + m);
      p.marked.push_back(0);
      p.first[y] += m;
      for (auto i = p.first[nb]; i < p.end[nb]; ++i) p.block_of[p.elems[i]] = nb;
      for (std::uint32_t c = 0; c < k; ++c) {
        if (queued(y, c)) push(nb, c);
        else if (p.size(nb) <= p.size(y)) push(nb, c);
        else push(y, c);
      }
    }
  }

  // Canonical numbering by lowest member.
  std::vector<std::uint32_t> rename(p.first.size(), ~0u), out(n);
  std::uint32_t next = 0;
  for (std::uint32_t s = 0; s < n; ++s) {
    auto& r = rename[p.block_of[s]];
    if (r == ~0u) r = next++;
    out[s] = r;
  }
  return out;
}

Dfa minimize_dfa(const Dfa& dfa) {
  const std::size_t n = dfa.num_states();
  const std::size_t k = dfa.alphabet().size();
  std::vector<std::uint32_t> init(n);
  for (StateId q = 0; q < n; ++q) init[q] = dfa.is_accepting(q) ? 1 : 0;
  const auto cls = coarsest_stable_partition(n, k, dfa.table(), init);

  // BFS over classes from the initial class.
  std::vector<std::int64_t> order(n, -1);
  std::vector<StateId> rep;
  std::queue<StateId> q;
  order[cls[dfa.initial()]] = 0;
  rep.push_back(dfa.initial());
  q.push(dfa.initial());
  while (!q.empty()) {
    const StateId s = q.front();
    q.pop();
    for (EventIndex e = 0; e < k; ++e) {
      const StateId t = dfa.next(s, e);
      if (order[cls[t]] < 0) {
        order[cls[t]] = static_cast<std::int64_t>(rep.size());
        rep.push_back(t);
        q.push(t);
      }
    }
  }
  std::vector<std::string> names;
  std::vector<bool> acc;
  std::vector<Transition> ts;
  for (std::size_t i = 0; i < rep.size(); ++i) {
    names.push_back("q" + std::to_string(i));
    acc.push_back(dfa.is_accepting(rep[i]));
    for (EventIndex e = 0; e < k; ++e)
      ts.push_back({static_cast<StateId>(i), e,
                    static_cast<StateId>(order[cls[dfa.next(rep[i], e)]])});
  }
  return Dfa(dfa.alphabet(), std::move(names), 0, std::move(acc), ts);
}

}  // namespace cdq
