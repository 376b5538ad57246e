#include <cmath>
#include <map>
#include <set>

#include "cdq/composition.hpp"
#include "cdq/envs.hpp"
#include "cdq/errors.hpp"
#include "cdq/ltlf.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "rollouts.hpp"

using namespace cdq;
using fixtures::at;
using fixtures::tagged;

namespace {

const TaskSpec& generator_task() {
  static const TaskSpec t = fixtures::load_task("generator/generator.toml");
  return t;
}
const TaskSpec& laboratory_task() {
  static const TaskSpec t = fixtures::load_task("laboratory/laboratory.toml");
  return t;
}
const TaskSpec& buttons_task() {
  static const TaskSpec t = fixtures::load_task("buttons/buttons.toml");
  return t;
}

StateId team_state(const TeamEnv& env, const char* name) { return *env.team_rm().state_index(name); }
StateId local_state(const TeamEnv& env, int i, StateId team_u) { return env.projection(i).local_of[team_u]; }

std::string label_text(const TeamEnv& env, const TeamStep& st) {
  EventSeq s;
  for (auto e : st.label) s.push_back(env.events()[e]);
  return format_events(s);
}

}  // namespace

TEST_CASE("layouts parse with the documented topology") {
  const auto& g = generator_task().grid;
  CHECK(g.width == 11);
  CHECK(g.height == 10);
  CHECK(g.starts.size() == 2);
  CHECK(g.find_tag("pipe") == g.cell(1, 1));
  CHECK(g.find_tag("generator") == g.cell(8, 8));
  // The ramp is the only one-way passage between the two halves of agent 1's side.
  const auto ow = g.one_way_edges();
  CHECK(ow.size() == 2);
  CHECK(std::find(ow.begin(), ow.end(), std::pair<Cell, Cell>{g.cell(3, 4), g.cell(3, 5)}) != ow.end());
  CHECK(std::find(ow.begin(), ow.end(), std::pair<Cell, Cell>{g.cell(3, 5), g.cell(3, 6)}) != ow.end());

  const auto& lab = laboratory_task().grid;
  CHECK(lab.draws == std::vector<std::string>{"fire", "radiation"});
  CHECK(lab.find_tag("conveyor").has_value());
  const auto& b = buttons_task().grid;
  CHECK(b.starts.size() == 3);
  CHECK(b.find_tag("red-button") == b.cell(10, 5));
}

TEST_CASE("layout parse errors carry positions") {
  auto err = [](const char* text) {
    try {
      parse_layout(text);
    } catch (const ParseError& e) {
      return std::pair<std::size_t, std::size_t>{e.line(), e.column()};
    }
    return std::pair<std::size_t, std::size_t>{0, 0};
  };
  CHECK(err("grid:\n#####\n#1.q#\n#####\n") == std::pair<std::size_t, std::size_t>{3, 4});
  CHECK(err("grid:\n#####\n#1.#\n") == std::pair<std::size_t, std::size_t>{3, 0});
  CHECK(err("x = event\ngrid:\n#1#\n").first == 1);
  CHECK(err(". = floor\ngrid:\n#1#\n").first == 1);
  CHECK(err("grid:\n#1.1#\n") == std::pair<std::size_t, std::size_t>{2, 4});
  CHECK(err("x = teleport\ngrid:\n#1#\n").first == 1);
  CHECK(err("grid:\n#2#\n").first > 0);
}

TEST_CASE("local dynamics: walls, stay, barriers, the one-way ramp") {
  const auto env = make_env(generator_task());
  const auto& a1 = env.agent(0);
  const auto& a2 = env.agent(1);
  const StateId u0 = team_state(env, "u0");
  const StateId u3 = team_state(env, "u3");

  SUBCASE("stay keeps the cell") {
    for (std::size_t s = 0; s < a1.num_cells(); ++s) CHECK(a1.step(static_cast<int>(s), 0, Action::Stay) == static_cast<int>(s));
  }
  SUBCASE("walls block") {
    const int corner = at(env, 0, 1, 1);
    CHECK(a1.step(corner, 0, Action::Up) == corner);
    CHECK(a1.step(corner, 0, Action::Left) == corner);
  }
  SUBCASE("door stays shut until agent 2's local machine has read D") {
    const int wait = tagged(env, 1, "door-wait");
    CHECK(a2.step(wait, local_state(env, 1, u0), Action::Down) == wait);
    const int door = tagged(env, 1, "door");
    CHECK(a2.step(wait, local_state(env, 1, u3), Action::Down) == door);
    // the door is a wall for agent 1 in every state
    CHECK_FALSE(a1.state_of(*env.grid().find_tag("door")).has_value());
  }
  SUBCASE("ramp is one way") {
    const int top = at(env, 0, 3, 4);
    const int ramp = a1.step(top, 0, Action::Down);
    CHECK(a1.cell_of(ramp) == env.grid().cell(3, 5));
    CHECK(a1.step(ramp, 0, Action::Up) == ramp);
    CHECK(a1.step(ramp, 0, Action::Left) == ramp);
    const int below = a1.step(ramp, 0, Action::Down);
    CHECK(a1.cell_of(below) == env.grid().cell(3, 6));
    CHECK(a1.step(below, 0, Action::Up) == below);
    // side entry into the ramp is refused
    CHECK(a1.step(at(env, 0, 2, 4), 0, Action::Right) != ramp);
  }
}

TEST_CASE("local labels") {
  const auto env = make_env(generator_task());
  const auto& a1 = env.agent(0);
  const StateId l0 = local_state(env, 0, team_state(env, "u0"));
  const int next_to_pipe = at(env, 0, 2, 1);
  const int p = a1.label(0, next_to_pipe, l0, Action::Left);
  REQUIRE(p >= 0);
  CHECK(env.events()[p].name() == "P");
  CHECK(a1.label(0, next_to_pipe, l0, Action::Down) == -1);
  // once the pipe is fixed the cell is silent for agent 1
  const StateId l1 = local_state(env, 0, team_state(env, "u1"));
  CHECK(a1.label(0, next_to_pipe, l1, Action::Left) == -1);

  SUBCASE("laboratory sensor depends on the accident") {
    const auto lab = make_env(laboratory_task());
    const StateId after_c = team_state(lab, "u1");
    const int sensor = tagged(lab, 0, "sensor");
    const int hatch = tagged(lab, 0, "hatch");
    const int fire = 0, radiation = 1;
    const int f = lab.agent(0).label(fire, hatch, local_state(lab, 0, after_c), Action::Down);
    REQUIRE(f >= 0);
    CHECK(lab.events()[f].name() == "F");
    CHECK(lab.agent(0).label(radiation, hatch, local_state(lab, 0, after_c), Action::Down) == -1);
    CHECK(lab.agent(1).label(fire, tagged(lab, 1, "hatch"), local_state(lab, 1, after_c), Action::Down) == -1);
    const int r = lab.agent(1).label(radiation, tagged(lab, 1, "hatch"), local_state(lab, 1, after_c), Action::Down);
    REQUIRE(r >= 0);
    CHECK(lab.events()[r].name() == "R");
    CHECK(lab.agent(0).step(hatch, local_state(lab, 0, after_c), Action::Down) == sensor);
  }
}

TEST_CASE("two events on one move are rejected while building tables") {
  const char* layout =
      "a = event P agents 1\n"
      "grid:\n"
      "####\n"
      "#1a#\n"
      "####\n";
  const char* layout2 =
      "a = event P agents 1\n"
      "a = event D agents 1\n"
      "grid:\n"
      "####\n"
      "#1a#\n"
      "####\n";
  const RewardMachine solo(EventAlphabet{"P", "D"}, {"x", "y"}, 0, {false, true},
                           {{0, 0, 1}, {0, 1, 1}});
  const std::vector<EventAlphabet> one{EventAlphabet{"P", "D"}};
  CHECK_NOTHROW(TeamEnv(parse_layout(layout), solo, one));
  CHECK_THROWS_AS(TeamEnv(parse_layout(layout2), solo, one), ConsistencyViolation);
  // An agent may not emit an event outside its vocabulary.
  const char* layout3 =
      "a = event G agents 1\n"
      "b = event P agents 1\n"
      "grid:\n"
      "#####\n"
      "#1ab#\n"
      "#####\n";
  const RewardMachine rm(EventAlphabet{"P"}, {"x", "y"}, 0, {false, true}, {{0, 0, 1}});
  CHECK_THROWS_AS(TeamEnv(parse_layout(layout3), rm, std::vector<EventAlphabet>{EventAlphabet{"P"}}), InvalidInput);
}

TEST_CASE("team step") {
  const auto env = make_env(generator_task());
  const StateId u3 = team_state(env, "u3");
  SUBCASE("agent 2 starts the generator from u3") {
    const std::vector<int> s{at(env, 0, 2, 7), at(env, 1, 8, 7)};
    const auto st = env.team_step(s, u3, {Action::Stay, Action::Down}, 0, true);
    CHECK(label_text(env, st) == "G");
    CHECK(env.team_rm().state_name(st.u) == "u5");
    CHECK(st.reward == 1.0);
    CHECK(st.done);
  }
  SUBCASE("all agents stay") {
    const auto s = env.initial_state();
    const auto st = env.team_step(s, 0, {Action::Stay, Action::Stay}, 0, true);
    CHECK(st.s == s);
    CHECK(st.u == 0);
    CHECK(st.reward == 0.0);
    CHECK_FALSE(st.done);
    CHECK(st.label.empty());
  }
  SUBCASE("generator before the pipe is a dead end") {
    const StateId u2 = team_state(env, "u2");
    const std::vector<int> s{at(env, 0, 2, 7), at(env, 1, 8, 7)};
    const auto st = env.team_step(s, u2, {Action::Stay, Action::Down}, 0, true);
    CHECK(env.team_rm().state_name(st.u) == "u4");
    CHECK(st.reward == 0.0);
    CHECK(st.done);
    CHECK(env.team_dead(st.u));
  }
  SUBCASE("shared D needs both agents") {
    const StateId u1 = team_state(env, "u1");
    const int above_switch = at(env, 0, 2, 6);
    const int wait = tagged(env, 1, "door-wait");
    const auto alone = env.team_step({above_switch, at(env, 1, 7, 4)}, u1, {Action::Down, Action::Stay}, 0, true);
    CHECK(alone.label.empty());
    CHECK(alone.u == u1);
    const auto both = env.team_step({above_switch, wait}, u1, {Action::Down, Action::Stay}, 0, true);
    CHECK(label_text(env, both) == "D");
    CHECK(env.team_rm().state_name(both.u) == "u3");
  }
  CHECK_THROWS_AS(env.team_step({0}, 0, {Action::Stay}, 0), InvalidInput);
}

TEST_CASE("decomposability holds on random rollouts of all tasks") {
  std::mt19937_64 rng(7);
  for (const TaskSpec* t : {&generator_task(), &laboratory_task(), &buttons_task()}) {
    const auto env = make_env(*t);
    int bad = 0;
    for (int k = 0; k < 500; ++k)
      if (!rollouts::random_rollout(env, rng, 300).decomposable) ++bad;
    CHECK_MESSAGE(bad == 0, t->name);
  }
}

TEST_CASE("generator attainability: no pipe after the switch") {
  const auto env = make_env(generator_task());
  const auto phi = tlcd_to_formula(*generator_task().team_tlcd);
  std::mt19937_64 rng(11);
  int violations = 0, saw_d = 0;
  for (int k = 0; k < 2000; ++k) {
    const auto r = rollouts::random_rollout(env, rng, 400);
    if (!ltlf_eval(phi, r.team_events) || !ltlf_eval(phi, r.agent_events[0])) ++violations;
    if (std::find(r.agent_events[0].begin(), r.agent_events[0].end(), Event("D")) != r.agent_events[0].end()) ++saw_d;
  }
  CHECK(violations == 0);
  CHECK(saw_d > 0);  // the constraint is exercised, not vacuous
}

TEST_CASE("buttons attainability: no goal after the signal") {
  const auto env = make_env(buttons_task());
  const auto phi = tlcd_to_formula(*buttons_task().team_tlcd);
  std::mt19937_64 rng(13);
  int violations = 0, saw_s = 0;
  for (int k = 0; k < 2000; ++k) {
    const auto r = rollouts::random_rollout(env, rng, 400);
    if (!ltlf_eval(phi, r.agent_events[0])) ++violations;
    if (std::find(r.agent_events[0].begin(), r.agent_events[0].end(), Event("S")) != r.agent_events[0].end()) ++saw_s;
  }
  CHECK(violations == 0);
  CHECK(saw_s > 0);
}

TEST_CASE("laboratory accident draw") {
  const auto env = make_env(laboratory_task());
  std::mt19937_64 a(5), b(5);
  for (int k = 0; k < 20; ++k) CHECK(draw_accident(env, a) == draw_accident(env, b));
  std::mt19937_64 rng(99);
  int fire = 0;
  for (int k = 0; k < 10000; ++k) fire += draw_accident(env, rng) == "fire";
  CHECK(std::abs(fire / 10000.0 - 0.5) <= 0.02);
  CHECK_THROWS_AS(draw_accident(make_env(generator_task()), rng), InvalidInput);

  SUBCASE("fire means agent 2 never senses radiation") {
    const EventIndex r_idx = *env.events().index_of("R");
    const int fire_draw = 0;
    for (StateId u = 0; u < env.team_rm().num_states(); ++u)
      for (std::size_t s = 0; s < env.agent(1).num_cells(); ++s)
        for (Action act : kActions)
          CHECK(env.agent(1).label(fire_draw, static_cast<int>(s), local_state(env, 1, u), act) != static_cast<int>(r_idx));
  }
}

TEST_CASE("buttons red press") {
  const auto env = make_env(buttons_task());
  const int red2 = tagged(env, 1, "red-button"), red3 = tagged(env, 2, "red-button");
  const int left_of_red2 = at(env, 1, 9, 5), right_of_red3 = at(env, 2, 11, 5);
  auto joint = [&](int s2, int s3) { return std::vector<int>{tagged(env, 0, "red-wait"), s2, s3}; };
  CHECK_FALSE(buttons_red_press(env, joint(red2, right_of_red3)));
  CHECK_FALSE(buttons_red_press(env, joint(left_of_red2, red3)));
  CHECK(buttons_red_press(env, joint(red2, red3)));
  CHECK_THROWS_AS(buttons_red_press(make_env(generator_task()), {0, 0}), InvalidInput);

  SUBCASE("both on the button emits B3") {
    const StateId u5 = team_state(env, "u5");
    const auto st = env.team_step(joint(red2, red3), u5, {Action::Stay, Action::Stay, Action::Stay}, 0, true);
    CHECK(label_text(env, st) == "B3");
    CHECK(env.team_rm().state_name(st.u) == "u6");
  }
  SUBCASE("visiting at different steps does not press") {
    StateId u = team_state(env, "u2");
    auto s = joint(left_of_red2, right_of_red3);
    // agent 2 steps on and off, then agent 3 steps on
    auto st = env.team_step(s, u, {Action::Stay, Action::Right, Action::Stay}, 0, true);
    CHECK(label_text(env, st) == "A2B3");
    CHECK_FALSE(buttons_red_press(env, st.s));
    st = env.team_step(st.s, st.u, {Action::Stay, Action::Left, Action::Stay}, 0, true);
    CHECK(label_text(env, st) == "A2nB3");
    st = env.team_step(st.s, st.u, {Action::Stay, Action::Stay, Action::Left}, 0, true);
    CHECK(label_text(env, st) == "A3B3");
    CHECK_FALSE(buttons_red_press(env, st.s));
    CHECK(env.team_rm().state_name(st.u) == "u4");
  }
}

TEST_CASE("task files") {
  const auto& t = generator_task();
  CHECK(t.name == "generator");
  CHECK(t.p_sync == doctest::Approx(0.3));
  CHECK(t.team_tlcd.has_value());
  CHECK(t.agent_tlcds.size() == 2);
  CHECK(t.agent_tlcds[0].has_value());
  const auto& b = buttons_task();
  CHECK(b.agent_tlcds[0].has_value());
  CHECK_FALSE(b.agent_tlcds[1].has_value());
  CHECK(b.observations[0].contains("S"));
  // the buttons task passes the strict criterion and its projections are the intended local tasks
  CHECK(check_strict(b.team, b.locals).bisimilar);
  CHECK(project(b.team, b.locals[0]).machine.num_states() == 4);
  CHECK(project(b.team, b.locals[1]).machine.num_states() == 5);
  CHECK(project(b.team, b.locals[2]).machine.num_states() == 4);
  // the laboratory decomposition TL-CD enables the relaxed criterion
  const auto& lab = laboratory_task();
  CHECK_FALSE(check_strict(lab.team, lab.locals).bisimilar);
  CHECK(check_relaxed(lab.team, lab.locals, compile_tlcd(*lab.team_tlcd).dfa).bisimilar);
  CHECK_THROWS_AS(load_task(fixtures::data_path("missing.toml")), std::exception);
}
