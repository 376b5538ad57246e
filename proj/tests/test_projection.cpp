#include <algorithm>
#include <random>
#include <set>

#include "cdq/composition.hpp"
#include "cdq/errors.hpp"
#include "cdq/projection.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "random_machines.hpp"

using namespace cdq;
using fixtures::seq;

namespace {

std::vector<std::vector<std::string>> named_blocks(const RewardMachine& rm, const Partition& p) {
  std::vector<std::vector<std::string>> out;
  for (const auto& b : p.blocks) {
    std::vector<std::string> names;
    for (auto u : b) names.push_back(rm.state_name(u));
    out.push_back(names);
  }
  return out;
}

// Naive closure on a boolean relation matrix.
std::vector<std::uint32_t> naive_equivalence(const RewardMachine& rm, const EventAlphabet& local) {
  const std::size_t n = rm.num_states();
  std::vector<std::vector<bool>> r(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i) r[i][i] = true;
  for (bool changed = true; changed;) {
    changed = false;
    auto set = [&](std::size_t a, std::size_t b) {
      if (!r[a][b]) r[a][b] = r[b][a] = changed = true;
    };
    for (const auto& t : rm.transitions())
      if (!local.contains(rm.alphabet()[t.event].name())) set(t.from, t.to);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = 0; b < n; ++b)
        if (r[a][b])
          for (const auto& e : local) {
            auto ea = rm.alphabet().require(e.name());
            auto x = rm.next(static_cast<StateId>(a), ea), y = rm.next(static_cast<StateId>(b), ea);
            if (x && y) set(*x, *y);
          }
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b)
          if (r[a][k] && r[k][b]) set(a, b);
  }
  std::vector<std::uint32_t> cls(n);
  for (std::size_t a = 0; a < n; ++a) {
    std::size_t lowest = a;
    for (std::size_t b = 0; b < a; ++b)
      if (r[a][b]) {
        lowest = b;
        break;
      }
    cls[a] = static_cast<std::uint32_t>(lowest);
  }
  return cls;
}

}  // namespace

TEST_CASE("generator projection onto agent 1") {
  const auto rm = fixtures::load_rm("generator/team.rm");
  const EventAlphabet s1{"P", "D"};
  const auto part = compute_equivalence(rm, s1);
  CHECK(named_blocks(rm, part) ==
        std::vector<std::vector<std::string>>{{"u0"}, {"u1"}, {"u2", "u4"}, {"u3", "u5"}});
  const auto p = project(rm, s1);
  CHECK(p.machine.num_states() == 4);
  CHECK(p.machine.alphabet().same_set(s1));
  for (const char* ok : {"P D", "D P", "P P D", "D D P"}) CHECK(rm_run(p.machine, seq(ok)) == 1);
  for (const char* bad : {"", "P", "D", "P P", "D D"}) CHECK(rm_run(p.machine, seq(bad)) == 0);
  CHECK(p.machine.is_terminal(p.local_of[*rm.state_index("u5")]));
  CHECK(p.local_of[*rm.state_index("u4")] == p.local_of[*rm.state_index("u2")]);
}

TEST_CASE("generator projection onto agent 2") {
  const auto rm = fixtures::load_rm("generator/team.rm");
  const auto part = compute_equivalence(rm, EventAlphabet{"D", "G"});
  CHECK(named_blocks(rm, part) ==
        std::vector<std::vector<std::string>>{{"u0", "u1"}, {"u2", "u3"}, {"u4", "u5"}});
  const auto p = project(rm, EventAlphabet{"D", "G"});
  CHECK(rm_run(p.machine, seq("D G")) == 1);
  CHECK(rm_run(p.machine, seq("G D")) == 0);
  CHECK(rm_run(p.machine, seq("G D G")) == 1);
  CHECK(rm_run(p.machine, seq("D")) == 0);
}

TEST_CASE("laboratory projections") {
  const auto rm = fixtures::load_rm("laboratory/team.rm");
  CHECK(named_blocks(rm, compute_equivalence(rm, EventAlphabet{"C", "F", "E", "M"})) ==
        std::vector<std::vector<std::string>>{{"u0"}, {"u1", "u3"}, {"u2"}, {"u4"}});
  CHECK(named_blocks(rm, compute_equivalence(rm, EventAlphabet{"C", "R", "E", "M"})) ==
        std::vector<std::vector<std::string>>{{"u0"}, {"u1", "u2"}, {"u3"}, {"u4"}});
  const auto p1 = project(rm, EventAlphabet{"C", "F", "E", "M"});
  CHECK(rm_run(p1.machine, seq("C F E")) == 1);
  CHECK(rm_run(p1.machine, seq("C M")) == 1);
  CHECK(rm_run(p1.machine, seq("C E")) == 0);
  const auto p2 = project(rm, EventAlphabet{"C", "R", "E", "M"});
  CHECK(rm_run(p2.machine, seq("C R M")) == 1);
  CHECK(rm_run(p2.machine, seq("C E")) == 1);
  CHECK(rm_run(p2.machine, seq("C M")) == 0);
}

TEST_CASE("degenerate local alphabets") {
  const auto rm = fixtures::load_rm("generator/team.rm");
  const auto all = compute_equivalence(rm, rm.alphabet());
  CHECK(all.blocks.size() == rm.num_states());
  CHECK(bisimilar(project(rm, rm.alphabet()).machine, rm).bisimilar);
  const auto none = compute_equivalence(rm, EventAlphabet{});
  CHECK(none.blocks.size() == 1);
  CHECK_THROWS_AS(compute_equivalence(rm, EventAlphabet{"P", "Q"}), InvalidInput);
}

TEST_CASE("projected sequences") {
  const EventAlphabet s1{"P", "D"}, s2{"D", "G"};
  CHECK(format_events(project_sequence(seq("D G P"), s1)) == "D P");
  CHECK(format_events(project_sequence(seq("D G P"), s2)) == "D G");
  CHECK(project_sequence(seq(""), s1).empty());
}

TEST_CASE("equivalence is the least closed partition on random machines") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 400; ++trial) {
    const auto rm = testgen::random_rm(rng, 2 + rng() % 11, 1 + rng() % 4, 0.6);
    EventAlphabet local;
    for (const auto& e : rm.alphabet())
      if (rng() % 2) local.add(e);
    const auto p = compute_equivalence(rm, local);
    const auto naive = naive_equivalence(rm, local);
    for (StateId a = 0; a < rm.num_states(); ++a)
      for (StateId b = 0; b < rm.num_states(); ++b)
        CHECK((p.block_of[a] == p.block_of[b]) == (naive[a] == naive[b]));
    // block numbering follows lowest member
    for (std::size_t b = 1; b < p.blocks.size(); ++b) CHECK(p.blocks[b - 1][0] < p.blocks[b][0]);
  }
}

TEST_CASE("projection is idempotent and full projection is bisimilar") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const auto rm = testgen::random_rm(rng, 2 + rng() % 8, 2 + rng() % 3, 0.5);
    EventAlphabet local;
    for (const auto& e : rm.alphabet())
      if (rng() % 3) local.add(e);
    const auto once = project(rm, local);
    const auto twice = project(once.machine, local);
    CHECK(bisimilar(once.machine, twice.machine).bisimilar);
    CHECK(bisimilar(project(rm, rm.alphabet()).machine, rm).bisimilar);
  }
}

TEST_CASE("projection output includes the block map") {
  const auto rm = fixtures::load_rm("generator/team.rm");
  const auto text = format_projection(project(rm, EventAlphabet{"P", "D"}), rm);
  CHECK(text.find("#   [u2+u4] = u2 u4") != std::string::npos);
  CHECK(parse_reward_machine(text).num_states() == 4);
}
