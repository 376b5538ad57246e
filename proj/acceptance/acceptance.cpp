// Acceptance suite: one PASS/FAIL line per criterion, exit 0 iff all pass.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <deque>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>

#include "cdq/causal.hpp"
#include "cdq/composition.hpp"
#include "cdq/errors.hpp"
#include "cdq/harness.hpp"
#include "cdq/ltlf.hpp"
#include "cdq/projection.hpp"
#include "cdq/tlcd.hpp"
#include "oracles.hpp"
#include "random_machines.hpp"
#include "rollouts.hpp"

using namespace cdq;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string data(const std::string& rel) { return std::string(CDQ_DATA_DIR) + "/" + rel; }

std::size_t workers() { return std::max(1u, std::thread::hardware_concurrency()); }

std::vector<EventAlphabet> locals_of(const TeamEnv& env) {
  std::vector<EventAlphabet> out;
  for (std::size_t i = 0; i < env.num_agents(); ++i) out.push_back(env.local_alphabet(static_cast<int>(i)));
  return out;
}

std::string steps_text(const std::optional<std::size_t>& s) { return s ? std::to_string(*s) : "never"; }

// --- 1 ----------------------------------------------------------------------

Outcome criterion_decisions() {
  std::ostringstream d;
  bool ok = true;
  double slowest = 0.0;
  auto timed = [&](const std::function<void()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    slowest = std::max(slowest, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  };

  timed([&] {
    const auto task = load_task(data("generator/generator.toml"));
    const auto env = make_env(task);
    const auto strict = check_strict(env.team_rm(), locals_of(env));
    const auto composed = compose_projections(project_all(env.team_rm(), locals_of(env))).machine;
    const auto& cex = strict.counterexample;
    const bool differs = rm_run(env.team_rm(), cex) != rm_run(composed, cex);
    const bool gen_strict = !strict.bisimilar && !cex.empty() && cex.size() <= 3 && differs;
    const bool gen_relaxed = check_relaxed(env.team_rm(), locals_of(env), compile_tlcd(*task.team_tlcd).dfa).bisimilar;
    ok = ok && gen_strict && gen_relaxed;
    d << "generator strict " << (strict.bisimilar ? "PASS" : "FAIL") << " on '" << format_events(cex)
      << "', relaxed " << (gen_relaxed ? "PASS" : "FAIL");
  });
  timed([&] {
    const auto task = load_task(data("laboratory/laboratory.toml"));
    const auto env = make_env(task);
    const auto strict = check_strict(env.team_rm(), locals_of(env));
    const bool relaxed = check_relaxed(env.team_rm(), locals_of(env), compile_tlcd(*task.team_tlcd).dfa).bisimilar;
    ok = ok && !strict.bisimilar && relaxed;
    d << "; laboratory strict " << (strict.bisimilar ? "PASS" : "FAIL") << ", relaxed " << (relaxed ? "PASS" : "FAIL");
  });
  timed([&] {
    const auto task = load_task(data("buttons/buttons.toml"));
    const auto env = make_env(task);
    const auto strict = check_strict(env.team_rm(), locals_of(env));
    ok = ok && strict.bisimilar;
    d << "; buttons strict " << (strict.bisimilar ? "PASS" : "FAIL on '" + format_events(strict.counterexample) + "'");
  });
  ok = ok && slowest < 1.0;
  d << "; slowest " << slowest << " s";
  return {ok, d.str()};
}

// --- 2 ----------------------------------------------------------------------

Outcome compatibility_fuzz() {
  std::mt19937_64 rng(20240901);
  std::size_t instances = 0, strict_pass = 0, relaxed_pass = 0, bad = 0;
  while (instances < 1000) {
    const std::size_t k = 2 + rng() % 3;
    const auto sigma = testgen::letters(k);
    auto locals = oracles::random_cover(rng, sigma, 2 + rng() % 2);
    RewardMachine team = testgen::random_task_rm(rng, 2 + rng() % 7, k, 0.5);
    if (instances % 2 == 0) {
      // composed from local parts so that the strict criterion often holds
      if (std::any_of(locals.begin(), locals.end(), [](const EventAlphabet& l) { return l.empty(); })) continue;
      std::vector<RewardMachine> parts;
      for (const auto& l : locals) parts.push_back(testgen::random_task_rm(rng, 2 + rng() % 2, 0, 0.7, l));
      team = parallel_compose(std::span<const RewardMachine>(parts)).machine;
      if (team.num_states() > 8) continue;
    }
    const auto dfa = testgen::random_dfa(rng, 1 + rng() % 5, team.alphabet());
    const bool strict = check_strict(team, locals).bisimilar;
    const bool relaxed = check_relaxed(team, locals, dfa).bisimilar;
    strict_pass += strict;
    relaxed_pass += relaxed;
    bad += strict && !relaxed;
    ++instances;
  }
  std::ostringstream d;
  d << instances << " instances, strict PASS " << strict_pass << ", relaxed PASS " << relaxed_pass
    << ", strict PASS with relaxed FAIL " << bad;
  return {bad == 0 && strict_pass > 0, d.str()};
}

// --- 3 ----------------------------------------------------------------------

std::size_t oracle_mismatches(const CausalDfa& c, const Formula& phi, std::uint64_t seed, std::size_t& checked) {
  const auto& a = c.dfa.alphabet();
  std::size_t bad = 0;
  EventSeq s;
  std::function<void()> rec = [&] {
    ++checked;
    bad += dfa_run(c.dfa, s).accepted != ltlf_eval(phi, s);
    if (s.size() == 6) return;
    for (const auto& e : a) {
      s.push_back(e);
      rec();
      s.pop_back();
    }
  };
  rec();
  std::mt19937_64 rng(seed);
  for (int i = 0; i < 10000; ++i) {
    EventSeq r;
    const auto len = rng() % 21;
    for (std::size_t j = 0; j < len; ++j) r.push_back(a[rng() % a.size()]);
    ++checked;
    bad += dfa_run(c.dfa, r).accepted != ltlf_eval(phi, r);
  }
  return bad;
}

Outcome tlcd_oracle() {
  const auto gen = compile_tlcd(parse_tlcd(read_file(data("generator/team.tlcd"))));
  const auto btn_tlcd = parse_tlcd(read_file(data("buttons/team.tlcd")));
  const auto btn = compile_tlcd(btn_tlcd);
  // formulas written out directly rather than taken from the diagram files
  const auto gen_phi = parse_ltlf("G(D -> G(!X P))", &gen.dfa.alphabet());
  const auto btn_phi = parse_ltlf("G(S -> G !G)", &btn.dfa.alphabet());
  std::size_t checked = 0;
  const auto bad = oracle_mismatches(gen, gen_phi, 1, checked) + oracle_mismatches(btn, btn_phi, 2, checked);
  std::size_t sinks = 0;
  for (StateId q = 0; q < gen.dfa.num_states(); ++q) {
    bool self = !gen.dfa.is_accepting(q);
    for (EventIndex e = 0; e < gen.dfa.alphabet().size(); ++e) self = self && gen.dfa.next(q, e) == q;
    sinks += self;
  }
  const bool shape = gen.dfa.num_states() == 3 && sinks == 1 && gen.rejecting_sink.has_value();
  std::ostringstream d;
  d << checked << " sequences, " << bad << " mismatches; generator DFA " << gen.dfa.num_states() << " states, "
    << sinks << " rejecting sink(s); buttons DFA " << btn.dfa.num_states() << " states";
  return {bad == 0 && shape, d.str()};
}

// --- 4 ----------------------------------------------------------------------

Outcome bisimulation_oracle() {
  std::mt19937_64 rng(4242);
  std::size_t agree = 0, equal = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t k = 1 + rng() % 3;
    RewardMachine a = testgen::random_task_rm(rng, 2 + rng() % 5, k, 0.6), b = a;
    switch (trial % 3) {
      case 0: b = testgen::random_task_rm(rng, 2 + rng() % 5, k, 0.6); break;
      case 1: a = testgen::random_task_rm(rng, 2 + rng() % 2, k, 0.6); b = testgen::split_copies(rng, a); break;
      default: a = testgen::random_task_rm(rng, 2 + rng() % 2, k, 0.6); b = testgen::mutate(rng, testgen::split_copies(rng, a));
    }
    const bool bisim = bisimilar(a, b).bisimilar;
    agree += bisim == oracles::layered_equivalent(a, b, 36);
    equal += bisim;
  }
  std::ostringstream d;
  d << agree << "/200 agree with language equivalence up to length 36 (" << equal << " equivalent pairs)";
  return {agree == 200 && equal > 0 && equal < 200, d.str()};
}

// --- 5, 6 -------------------------------------------------------------------

std::optional<std::size_t> converge(const std::string& task, const char* mode, std::size_t steps) {
  ExperimentConfig c;
  c.task = data(task);
  c.mode = parse_mode(mode);
  c.runs = 10;
  c.seed_base = 0;
  c.train.total_steps = steps;
  c.workers = workers();
  c.success_episodes = 10;
  return convergence_step(run_experiment(c).aggregate);
}

// A run that never converges needs more than its budget, so the budget is a
// conservative stand-in for its convergence step.
bool five_times_faster(const std::optional<std::size_t>& fast, const std::optional<std::size_t>& slow,
                       std::size_t slow_budget) {
  return fast && 5 * *fast <= (slow ? *slow : slow_budget);
}

Outcome generator_speed() {
  const std::size_t dec_budget = 200000, cen_budget = 300000;
  const auto dec = converge("generator/generator.toml", "decentralized-tlcd", dec_budget);
  const auto cen = converge("generator/generator.toml", "centralized-no-tlcd", cen_budget);
  const auto cen_tlcd = converge("generator/generator.toml", "centralized-tlcd", cen_budget);
  const bool a = five_times_faster(dec, cen, cen_budget);
  const bool b = cen_tlcd && (!cen || *cen_tlcd < *cen);
  std::ostringstream d;
  d << "median <= 200 first at: decentralized TL-CD " << steps_text(dec) << ", centralized " << steps_text(cen)
    << ", centralized TL-CD " << steps_text(cen_tlcd) << " (budget " << cen_budget << ")";
  return {a && b, d.str()};
}

Outcome laboratory_speed() {
  const std::size_t dec_budget = 200000, cen_budget = 1000000;
  const auto dec = converge("laboratory/laboratory.toml", "decentralized-tlcd", dec_budget);
  const auto cen = converge("laboratory/laboratory.toml", "centralized-no-tlcd", cen_budget);
  std::ostringstream d;
  d << "median <= 200 first at: decentralized TL-CD " << steps_text(dec) << ", centralized " << steps_text(cen)
    << " (budget " << cen_budget << ")";
  return {five_times_faster(dec, cen, cen_budget), d.str()};
}

// --- 7, 8 -------------------------------------------------------------------

struct ExecutionSample {
  SuccessEstimate trained, early;
};

const ExecutionSample& execution_sample() {
  static const ExecutionSample sample = [] {
    const auto task = load_task(data("generator/generator.toml"));
    const auto env = make_env(task);
    TrainConfig tc;
    tc.total_steps = 200000;
    tc.eval_every = 0;
    const auto trained = train_once(task, env, parse_mode("decentralized-tlcd"), tc);
    // a partly trained controller so that failures occur as well
    tc.total_steps = 1500;
    const auto early = train_once(task, env, parse_mode("decentralized-tlcd"), tc);
    return ExecutionSample{estimate_success(env, trained.policy, 500, 1000, 77),
                           estimate_success(env, early.policy, 500, 1000, 78)};
  }();
  return sample;
}

Outcome execution_equivalence() {
  const auto& s = execution_sample();
  std::ostringstream d;
  d << "trained: " << s.trained.episodes << " episodes, success " << s.trained.team << ", "
    << s.trained.equivalence_violations << " mismatches; early: success " << s.early.team << ", "
    << s.early.equivalence_violations << " mismatches";
  return {s.trained.equivalence_violations == 0 && s.early.equivalence_violations == 0, d.str()};
}

Outcome frechet_bounds() {
  const auto& s = execution_sample();
  const auto t = frechet_check(s.trained), e = frechet_check(s.early);
  std::ostringstream d;
  d << "trained " << s.trained.team << " in [" << t.lower << ", " << t.upper << "] +/- 3*" << t.sigma << "; early "
    << s.early.team << " in [" << e.lower << ", " << e.upper << "] +/- 3*" << e.sigma;
  return {t.holds && e.holds, d.str()};
}

// --- 9 ----------------------------------------------------------------------

// Positive reward reachable from pair `start` without entering the sink.
bool reward_reachable(const TildeRm& t, StateId start) {
  std::vector<bool> seen(t.num_pairs(), false);
  std::deque<StateId> work{start};
  seen[start] = true;
  while (!work.empty()) {
    const StateId p = work.front();
    work.pop_front();
    if (t.in_sink(p)) continue;
    for (EventIndex e = 0; e < t.alphabet().size(); ++e) {
      if (t.reward(p, e) > 0.0) return true;
      const StateId to = t.next(p, e);
      if (!seen[to] && !t.in_sink(to)) {
        seen[to] = true;
        work.push_back(to);
      }
    }
  }
  return false;
}

Outcome short_circuit_soundness() {
  const auto task = load_task(data("generator/generator.toml"));
  const auto env = make_env(task);
  TrainConfig tc;
  tc.total_steps = 200000;
  tc.eval_every = 0;
  const auto with = train_once(task, env, parse_mode("decentralized-tlcd"), tc);
  const auto without = train_once(task, env, parse_mode("decentralized-no-tlcd"), tc);

  std::size_t resets = 0, unsound = 0;
  for (std::size_t i = 0; i < env.num_agents(); ++i) {
    const auto& agent_tlcd = task.agent_tlcds.at(i);
    CausalDfa causal = agent_tlcd ? compile_tlcd(*agent_tlcd)
                                  : CausalDfa{Dfa::trivial(env.local_alphabet(static_cast<int>(i))), std::nullopt, false};
    const TildeRm tilde(env.projection(static_cast<int>(i)).machine, causal);
    for (const auto& [pair, n] : with.stats[i].short_circuit_pairs) {
      resets += n;
      const auto idx = tilde.index(pair.first, pair.second);
      if (!idx || tilde.is_terminal(*idx) || reward_reachable(tilde, *idx)) unsound += n;
    }
  }
  const auto& a1 = env.projection(0).machine;
  const auto stuck = a1.state_index("[u2+u4]");
  auto waste = [&](const AgentStats& st) {
    return stuck ? static_cast<double>(st.steps_in_state[*stuck]) / static_cast<double>(st.steps) : 1.0;
  };
  const double w_with = waste(with.stats[0]), w_without = waste(without.stats[0]);
  std::ostringstream d;
  d << resets << " resets, " << unsound << " at pairs with reachable reward; agent 1 steps after D-before-P: "
    << w_with * 100 << "% with TL-CD, " << w_without * 100 << "% without";
  return {stuck && resets > 0 && unsound == 0 && w_with < 0.05 && w_without > 0.20, d.str()};
}

// --- 10 ---------------------------------------------------------------------

Outcome attainability() {
  std::mt19937_64 rng(1010);
  const auto gen = make_env(load_task(data("generator/generator.toml")));
  const auto gen_phi = parse_ltlf("G(D -> G(!X P))", &gen.events());
  std::size_t gen_bad = 0, gen_d = 0;
  for (int k = 0; k < 10000; ++k) {
    const auto r = rollouts::random_rollout(gen, rng, 1000);
    gen_bad += !ltlf_eval(gen_phi, r.team_events);
    gen_d += std::any_of(r.team_events.begin(), r.team_events.end(), [](const Event& e) { return e.name() == "D"; });
  }
  const auto btn = make_env(load_task(data("buttons/buttons.toml")));
  const auto btn_phi = parse_ltlf("G(S -> G !G)", &btn.events());
  std::size_t btn_bad = 0, btn_s = 0;
  for (int k = 0; k < 10000; ++k) {
    const auto r = rollouts::random_rollout(btn, rng, 1000);
    btn_bad += !ltlf_eval(btn_phi, r.team_events);
    btn_s += std::any_of(r.team_events.begin(), r.team_events.end(), [](const Event& e) { return e.name() == "S"; });
  }
  const auto lab = make_env(load_task(data("laboratory/laboratory.toml")));
  std::size_t fire = 0;
  for (int k = 0; k < 10000; ++k) fire += draw_accident(lab, rng) == "fire";
  const double freq = fire / 10000.0;
  std::ostringstream d;
  d << "generator " << gen_bad << " violations (" << gen_d << " rollouts with D); buttons " << btn_bad
    << " violations (" << btn_s << " with S); fire frequency " << freq;
  return {gen_bad == 0 && btn_bad == 0 && gen_d > 0 && btn_s > 0 && std::abs(freq - 0.5) <= 0.02, d.str()};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double limit_s;
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {1, "criterion decisions", 5, criterion_decisions},
      {2, "compatibility fuzz", 60, compatibility_fuzz},
      {3, "TL-CD compiler oracle", 10, tlcd_oracle},
      {4, "bisimulation oracle", 30, bisimulation_oracle},
      {5, "generator learning speed", 900, generator_speed},
      {6, "laboratory learning speed", 1200, laboratory_speed},
      {7, "execution equivalence", 120, execution_equivalence},
      {8, "Frechet bounds", 120, frechet_bounds},
      {9, "short-circuit soundness", 120, short_circuit_soundness},
      {10, "attainability", 300, attainability},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = o.pass && secs <= c.limit_s;
    failed += !pass;
    std::printf("%s %d %s: %s [%.2f s, limit %.0f s]\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs,
                c.limit_s);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
