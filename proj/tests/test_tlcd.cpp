#include <functional>
#include <random>

#include "cdq/errors.hpp"
#include "cdq/tlcd.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace cdq;
using fixtures::seq;

namespace {

const char* kButtons =
    "alphabet: B B1 B3 A2B3 A2nB3 A3B3 A3nB3 G S\n"
    "S ~> G !G\n";

Formula f(const char* text) { return parse_ltlf(text); }

void each_sequence(const EventAlphabet& a, std::size_t max_len, const std::function<void(const EventSeq&)>& fn) {
  EventSeq s;
  std::function<void()> rec = [&] {
    fn(s);
    if (s.size() == max_len) return;
    for (const auto& e : a) {
      s.push_back(e);
      rec();
      s.pop_back();
    }
  };
  rec();
}

// Shortest distinguishing suffix exists for every pair of distinct states.
bool pairwise_distinguishable(const Dfa& d) {
  const std::size_t n = d.num_states();
  std::vector<std::vector<bool>> dist(n, std::vector<bool>(n, false));
  for (StateId p = 0; p < n; ++p)
    for (StateId q = 0; q < n; ++q) dist[p][q] = d.is_accepting(p) != d.is_accepting(q);
  for (bool changed = true; changed;) {
    changed = false;
    for (StateId p = 0; p < n; ++p)
      for (StateId q = 0; q < n; ++q)
        if (!dist[p][q])
          for (EventIndex e = 0; e < d.alphabet().size(); ++e)
            if (dist[d.next(p, e)][d.next(q, e)]) {
              dist[p][q] = changed = true;
              break;
            }
  }
  for (StateId p = 0; p < n; ++p)
    for (StateId q = p + 1; q < n; ++q)
      if (!dist[p][q]) return false;
  return true;
}

void check_oracle(const Formula& phi, const EventAlphabet& a, std::size_t exhaustive, std::uint64_t seed) {
  const auto c = compile(phi, a);
  std::size_t mismatches = 0;
  each_sequence(a, exhaustive, [&](const EventSeq& s) { mismatches += dfa_run(c.dfa, s).accepted != ltlf_eval(phi, s); });
  std::mt19937_64 rng(seed);
  for (int i = 0; i < 10000; ++i) {
    EventSeq s;
    const auto len = rng() % 21;
    for (std::size_t j = 0; j < len; ++j) s.push_back(a[rng() % a.size()]);
    mismatches += dfa_run(c.dfa, s).accepted != ltlf_eval(phi, s);
  }
  CHECK(mismatches == 0);
  CHECK(pairwise_distinguishable(c.dfa));
}

Formula random_formula(std::mt19937_64& rng, const EventAlphabet& a, int depth) {
  if (depth == 0 || rng() % 4 == 0) {
    const auto r = rng() % (a.size() + 2);
    if (r == a.size()) return Formula::truth();
    if (r == a.size() + 1) return Formula::falsity();
    return Formula::atom(a[r].name());
  }
  auto sub = [&] { return random_formula(rng, a, depth - 1); };
  switch (rng() % 10) {
    case 0: return Formula::negation(sub());
    case 1: return Formula::conjunction(sub(), sub());
    case 2: return Formula::disjunction(sub(), sub());
    case 3: return Formula::implication(sub(), sub());
    case 4: return Formula::next(sub());
    case 5: return Formula::globally(sub());
    case 6: return Formula::finally(sub());
    case 7: return Formula::until(sub(), sub());
    case 8: return Formula::weak_until(sub(), sub());
    default: return Formula::negation(Formula::next(sub()));
  }
}

}  // namespace

TEST_CASE("parse generator diagram") {
  const auto c = parse_tlcd(read_file(fixtures::data_path("generator/team.tlcd")));
  CHECK(c.alphabet.same_set(EventAlphabet{"P", "D", "G"}));
  CHECK(c.edges.size() == 1);
  CHECK(tlcd_to_formula(c) == f("G(D -> G(!X P))"));
  CHECK(tlcd_to_formula(c).to_string() == "G(D -> G !X P)");
}

TEST_CASE("parse buttons diagram, G as both operator and event") {
  const auto c = parse_tlcd(kButtons);
  CHECK(tlcd_to_formula(c) == Formula::globally(Formula::implication(
                                  Formula::atom("S"), Formula::globally(Formula::negation(Formula::atom("G"))))));
}

TEST_CASE("two edges and shared nodes") {
  const auto c = parse_tlcd("alphabet: a b c\na ~> G !b\nc ~> G !b\n");
  CHECK(c.nodes.size() == 3);
  CHECK(c.edges.size() == 2);
  const auto phi = tlcd_to_formula(c);
  CHECK(phi.op() == LtlOp::And);
  CHECK(phi.arity() == 2);
  CHECK(phi.arg(0) == f("G(a -> G !b)"));
  CHECK(phi.arg(1) == f("G(c -> G !b)"));
}

TEST_CASE("diagram syntax errors") {
  auto err = [](const char* text) -> std::pair<std::size_t, std::size_t> {
    try {
      parse_tlcd(text);
    } catch (const ParseError& e) {
      return {e.line(), e.column()};
    }
    return {0, 0};
  };
  CHECK(err("alphabet: a b\n") == std::pair<std::size_t, std::size_t>{1, 0});
  CHECK(err("alphabet: a b\n# only a comment\n").first == 2);
  CHECK(err("a ~> b\n") == std::pair<std::size_t, std::size_t>{1, 1});
  CHECK(err("alphabet: a b\na ~> G !z\n") == std::pair<std::size_t, std::size_t>{2, 9});
  CHECK(err("alphabet: a b\na ~> (b\n") == std::pair<std::size_t, std::size_t>{2, 8});
  CHECK(err("alphabet: a b\na b\n").first == 2);
  CHECK(err("alphabet: a b\na ~> b & \n").first == 2);
  CHECK(err("alphabet: a b\na ~> b $ a\n") == std::pair<std::size_t, std::size_t>{2, 8});
}

TEST_CASE("formula printing round-trips") {
  for (const char* s : {"G(D -> G !X P)", "(a U b) W !c", "F(a & b) | X c", "!(a -> b)", "G F a", "true U false"}) {
    const auto g = f(s);
    CHECK(f(g.to_string().c_str()) == g);
  }
  CHECK(f("a U b U c") == Formula::until(Formula::atom("a"), Formula::until(Formula::atom("b"), Formula::atom("c"))));
  CHECK(f("a | b & c") == Formula::disjunction(Formula::atom("a"), Formula::conjunction(Formula::atom("b"), Formula::atom("c"))));
  CHECK(f("!a -> b -> c").op() == LtlOp::Implies);
  CHECK(f("F").op() == LtlOp::Atom);
  CHECK(f("F | G").op() == LtlOp::Or);
}

TEST_CASE("exactly-one constraint") {
  CHECK(one_event_constraint(EventAlphabet{"P"}) == f("G P"));
  CHECK(one_event_constraint(EventAlphabet{"P", "D"}) == f("G((P & !D) | (D & !P))"));
  const auto three = one_event_constraint(EventAlphabet{"P", "D", "G"});
  CHECK(three == f("G((P & !D & !G) | (D & !P & !G) | (G & !P & !D))"));
  CHECK_THROWS_AS(one_event_constraint(EventAlphabet{}), InvalidInput);
  // holds on every event sequence
  each_sequence(EventAlphabet{"P", "D", "G"}, 4, [&](const EventSeq& s) { CHECK(ltlf_eval(three, s)); });
}

TEST_CASE("finite-trace semantics") {
  const auto phi = f("G(D -> G(!X P))");
  CHECK_FALSE(ltlf_eval(phi, seq("D P")));
  CHECK(ltlf_eval(phi, seq("P D")));
  CHECK_FALSE(ltlf_eval(phi, seq("D G G P")));
  CHECK(ltlf_eval(phi, seq("")));
  CHECK(ltlf_eval(f("G a"), seq("")));
  CHECK(ltlf_eval(f("G false"), seq("")));
  CHECK_FALSE(ltlf_eval(f("X a"), seq("a")));
  CHECK(ltlf_eval(f("X a"), seq("b a")));
  CHECK_FALSE(ltlf_eval(f("!X a"), seq("b a")));
  CHECK(ltlf_eval(f("!X a"), seq("a")));
  CHECK(ltlf_eval(f("a W b"), seq("a a")));
  CHECK_FALSE(ltlf_eval(f("a U b"), seq("a a")));
  CHECK(ltlf_eval(f("a U b"), seq("a b")));
  CHECK_FALSE(ltlf_eval(f("a W b"), seq("a c b")));
  CHECK_FALSE(ltlf_eval(f("F a"), seq("")));
}

TEST_CASE("compile the generator diagram") {
  const auto c = compile_tlcd(parse_tlcd(read_file(fixtures::data_path("generator/team.tlcd"))));
  const Dfa& d = c.dfa;
  REQUIRE(d.num_states() == 3);
  CHECK(d.is_accepting(d.initial()));
  REQUIRE(c.rejecting_sink.has_value());
  CHECK(*c.rejecting_sink == 2);
  const auto P = d.alphabet().require("P"), D = d.alphabet().require("D"), G = d.alphabet().require("G");
  const StateId after_d = d.next(d.initial(), D);
  CHECK(after_d == 1);
  CHECK(d.is_accepting(after_d));
  CHECK(d.next(d.initial(), P) == d.initial());
  CHECK(d.next(d.initial(), G) == d.initial());
  CHECK(d.next(after_d, P) == *c.rejecting_sink);
  CHECK(d.next(after_d, G) == after_d);
  CHECK(d.next(after_d, D) == after_d);
  CHECK(dfa_run(d, seq("D P")).state == *c.rejecting_sink);
  CHECK(dfa_run(d, seq("P D")).accepted);
  CHECK_FALSE(c.collapsed_dead_states);
}

TEST_CASE("compile trivial and buttons formulas") {
  const auto t = compile(f("G true"), EventAlphabet{"P", "D", "G"});
  CHECK(t.dfa.num_states() == 1);
  CHECK(t.dfa.is_accepting(0));
  CHECK_FALSE(t.rejecting_sink.has_value());
  CHECK_FALSE(find_rejecting_sink(Dfa::trivial(EventAlphabet{"a"})).has_value());

  const auto b = compile_tlcd(parse_tlcd(kButtons));
  REQUIRE(b.dfa.num_states() == 3);
  REQUIRE(b.rejecting_sink.has_value());
  const auto S = b.dfa.alphabet().require("S"), G = b.dfa.alphabet().require("G");
  const auto after_s = b.dfa.next(0, S);
  CHECK(b.dfa.is_accepting(after_s));
  CHECK(b.dfa.next(after_s, G) == *b.rejecting_sink);
  CHECK(b.dfa.next(0, G) == 0);
  CHECK_THROWS_AS(compile(f("G !Q"), EventAlphabet{"P"}), InvalidInput);
}

TEST_CASE("compiled automata agree with direct evaluation") {
  check_oracle(f("G(D -> G(!X P))"), EventAlphabet{"P", "D", "G"}, 6, 1);
  check_oracle(tlcd_to_formula(parse_tlcd(kButtons)), parse_tlcd(kButtons).alphabet, 4, 2);
  check_oracle(f("G(F -> G !R) & G(R -> G !F) & G(C -> ((!E & !M) W (F | R)))"), EventAlphabet{"C", "F", "R", "E", "M"}, 5, 3);
}

TEST_CASE("explicit exactly-one conjunct does not change the language") {
  const EventAlphabet a{"P", "D", "G"};
  const auto phi = f("G(D -> G(!X P))");
  const auto plain = compile(phi, a);
  const auto with = compile(Formula::conjunction(phi, one_event_constraint(a)), a);
  each_sequence(a, 6, [&](const EventSeq& s) { CHECK(dfa_run(plain.dfa, s).accepted == dfa_run(with.dfa, s).accepted); });
  CHECK(with.dfa.num_states() == plain.dfa.num_states());
}

TEST_CASE("random formulas compile soundly") {
  std::mt19937_64 rng(77);
  const EventAlphabet a{"a", "b", "c"};
  for (int i = 0; i < 300; ++i) {
    const auto phi = random_formula(rng, a, 4);
    const auto c = compile(phi, a);
    std::size_t bad = 0;
    each_sequence(a, 5, [&](const EventSeq& s) { bad += dfa_run(c.dfa, s).accepted != ltlf_eval(phi, s); });
    CHECK_MESSAGE(bad == 0, phi.to_string());
    CHECK(pairwise_distinguishable(c.dfa));
  }
}

TEST_CASE("two sinks are reported") {
  const auto d = parse_dfa("alphabet: a\nstates: x y z\ninitial: x\naccepting: x\nx -a-> y\ny -a-> y\nz -a-> z\n");
  CHECK_THROWS_AS(find_rejecting_sink(d), InvariantViolation);
}

TEST_CASE("dot and text output") {
  const auto c = compile(f("G(D -> G(!X P))"), EventAlphabet{"P", "D", "G"});
  const auto dot = to_dot(c);
  CHECK(dot.find("digraph") == 0);
  CHECK(dot.find("q1 -> q2 [label=\"P\"]") != std::string::npos);
  const auto text = format_causal_dfa(c);
  CHECK(text.find("# rejecting sink: q2") != std::string::npos);
  CHECK(parse_dfa(text).num_states() == 3);
}
