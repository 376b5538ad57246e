#pragma once

#include <random>
#include <string>
#include <vector>

#include "cdq/errors.hpp"
#include "cdq/rm_core.hpp"

namespace testgen {

inline cdq::EventAlphabet letters(std::size_t k) {
  cdq::EventAlphabet a;
  for (std::size_t i = 0; i < k; ++i) a.add(cdq::Event(std::string(1, static_cast<char>('a' + i))));
  return a;
}

// Random task-completion RM with n states over k events; each (state, event)
// is defined with probability `density`.
inline cdq::RewardMachine random_rm(std::mt19937_64& rng, std::size_t n, std::size_t k, double density,
                                    cdq::EventAlphabet alphabet = {}) {
  if (alphabet.empty()) alphabet = letters(k);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<std::string> names;
  std::vector<bool> term(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    names.push_back("s" + std::to_string(i));
    term[i] = coin(rng) < 0.25;
  }
  std::vector<cdq::Transition> ts;
  for (cdq::StateId u = 0; u < n; ++u)
    for (cdq::EventIndex e = 0; e < alphabet.size(); ++e)
      if (coin(rng) < density) ts.push_back({u, e, static_cast<cdq::StateId>(rng() % n)});
  return cdq::RewardMachine(alphabet, names, 0, term, ts);
}

// Resamples until the initial state is not terminal and some terminal state is
// reachable, so that acceptance is neither immediate nor impossible.
inline cdq::RewardMachine random_task_rm(std::mt19937_64& rng, std::size_t n, std::size_t k, double density,
                                         const cdq::EventAlphabet& alphabet = {}) {
  if (n < 2) throw cdq::InvalidInput("a non-trivial task needs at least two states");
  for (;;) {
    auto rm = random_rm(rng, n, k, density, alphabet);
    if (rm.is_terminal(rm.initial())) continue;
    std::vector<bool> seen(rm.num_states(), false);
    std::vector<cdq::StateId> work{rm.initial()};
    seen[rm.initial()] = true;
    while (!work.empty()) {
      const auto u = work.back();
      work.pop_back();
      if (rm.is_terminal(u)) return rm;
      for (cdq::EventIndex e = 0; e < rm.alphabet().size(); ++e)
        if (auto v = rm.next(u, e); v && !seen[*v]) {
          seen[*v] = true;
          work.push_back(*v);
        }
    }
  }
}

// Same language, twice the states: every state gets two copies and each
// transition targets a random copy of its original target.
inline cdq::RewardMachine split_copies(std::mt19937_64& rng, const cdq::RewardMachine& rm) {
  const std::size_t n = rm.num_states();
  std::vector<std::string> names;
  std::vector<bool> term;
  for (std::size_t c = 0; c < 2; ++c)
    for (cdq::StateId u = 0; u < n; ++u) {
      names.push_back(rm.state_name(u) + "." + std::to_string(c));
      term.push_back(rm.is_terminal(u));
    }
  std::vector<cdq::Transition> ts;
  for (std::size_t c = 0; c < 2; ++c)
    for (cdq::StateId u = 0; u < n; ++u)
      for (cdq::EventIndex e = 0; e < rm.alphabet().size(); ++e)
        if (auto v = rm.next(u, e))
          ts.push_back({static_cast<cdq::StateId>(c * n + u), e, static_cast<cdq::StateId>((rng() % 2) * n + *v)});
  return cdq::RewardMachine(rm.alphabet(), names, rm.initial(), term, ts);
}

// Retargets one random (state, event) slot, possibly adding it.
inline cdq::RewardMachine mutate(std::mt19937_64& rng, const cdq::RewardMachine& rm) {
  const std::size_t n = rm.num_states(), k = rm.alphabet().size();
  std::vector<std::string> names;
  std::vector<bool> term;
  for (cdq::StateId u = 0; u < n; ++u) {
    names.push_back(rm.state_name(u));
    term.push_back(rm.is_terminal(u));
  }
  const auto slot = rng() % (n * k);
  std::vector<cdq::Transition> ts;
  for (cdq::StateId u = 0; u < n; ++u)
    for (cdq::EventIndex e = 0; e < k; ++e) {
      if (u * k + e == slot) {
        ts.push_back({u, e, static_cast<cdq::StateId>(rng() % n)});
      } else if (auto v = rm.next(u, e)) {
        ts.push_back({u, e, *v});
      }
    }
  return cdq::RewardMachine(rm.alphabet(), names, rm.initial(), term, ts);
}

inline cdq::Dfa random_dfa(std::mt19937_64& rng, std::size_t n, const cdq::EventAlphabet& alphabet) {
  std::vector<std::string> names;
  std::vector<bool> acc(n);
  for (std::size_t i = 0; i < n; ++i) {
    names.push_back("q" + std::to_string(i));
    acc[i] = rng() % 3 != 0;
  }
  std::vector<cdq::Transition> ts;
  for (cdq::StateId q = 0; q < n; ++q)
    for (cdq::EventIndex e = 0; e < alphabet.size(); ++e)
      ts.push_back({q, e, static_cast<cdq::StateId>(rng() % n)});
  return cdq::Dfa(alphabet, names, 0, acc, ts);
}

}  // namespace testgen
