#include <cstdlib>
#include <random>

#include "cdq/errors.hpp"
#include "cdq/harness.hpp"
#include "doctest.h"
#include "fixtures.hpp"

using namespace cdq;

namespace {

// Smallest sample value with at least pct percent of the sample at or below it.
double percentile_by_counting(const std::vector<double>& v, double pct) {
  std::vector<double> s = v;
  std::sort(s.begin(), s.end());
  for (double x : s) {
    const auto at_or_below = std::count_if(v.begin(), v.end(), [&](double y) { return y <= x; });
    if (static_cast<double>(at_or_below) * 100.0 >= pct * static_cast<double>(v.size())) return x;
  }
  return s.back();
}

ExperimentConfig generator_experiment(Mode mode, std::size_t runs, std::size_t steps) {
  ExperimentConfig c;
  c.task = fixtures::data_path("generator/generator.toml");
  c.mode = mode;
  c.runs = runs;
  c.seed_base = 7;
  c.train.total_steps = steps;
  c.success_episodes = 20;
  return c;
}

}  // namespace

TEST_CASE("modes") {
  for (const char* m : {"decentralized-tlcd", "decentralized-no-tlcd", "centralized-tlcd", "centralized-no-tlcd"})
    CHECK(mode_name(parse_mode(m)) == m);
  CHECK(parse_mode("centralized-tlcd") == Mode{Controller::Centralized, true});
  CHECK_THROWS_AS(parse_mode("tlcd"), InvalidInput);
}

TEST_CASE("nearest-rank percentiles") {
  std::vector<double> ten;
  for (int k = 1; k <= 10; ++k) ten.push_back(11 - k);
  CHECK(nearest_rank(ten, 25) == 3);
  CHECK(nearest_rank(ten, 50) == 5);
  CHECK(nearest_rank(ten, 75) == 8);
  CHECK(nearest_rank(ten, 100) == 10);
  CHECK(nearest_rank({4.0}, 25) == 4.0);
  CHECK_THROWS_AS(nearest_rank({}, 50), InvalidInput);
  CHECK_THROWS_AS(nearest_rank({1.0}, 0), InvalidInput);

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> v(1 + rng() % 60);
    for (auto& x : v) x = static_cast<double>(rng() % 50);
    for (double p : {25.0, 50.0, 75.0}) CHECK(nearest_rank(v, p) == percentile_by_counting(v, p));
  }
}

TEST_CASE("aggregation across runs") {
  const std::vector<EvalPoint> a{{0, 1000}, {1000, 40}}, b{{0, 1000}, {1000, 20}}, c{{0, 900}, {1000, 30}};
  const auto one = aggregate_curves({a});
  REQUIRE(one.size() == 2);
  for (const auto& p : one) CHECK((p.p25 == p.p50 && p.p50 == p.p75));
  const auto three = aggregate_curves({a, b, c});
  CHECK(three[0].p25 == 900);
  CHECK(three[0].p50 == 1000);
  CHECK(three[1].p25 == 20);
  CHECK(three[1].p50 == 30);
  CHECK(three[1].p75 == 40);
  CHECK_THROWS_AS(aggregate_curves({a, {{0, 5}}}), InvalidInput);
  CHECK_THROWS_AS(aggregate_curves({a, {{0, 5}, {2000, 5}}}), InvalidInput);
  CHECK(convergence_step(three) == 1000);
  CHECK_FALSE(convergence_step(three, 10).has_value());
}

TEST_CASE("csv format") {
  const std::vector<PercentilePoint> pts{{0, 1000, 1000, 1000}, {1000, 12.3456, 20.5, 33.0004}};
  const auto text = format_csv(pts);
  CHECK(text ==
        "steps,prc_25,prc_50,prc_75\n"
        "0,1000.000,1000.000,1000.000\n"
        "1000,12.346,20.500,33.000\n");
  CHECK(format_csv({pts[0]}) == "steps,prc_25,prc_50,prc_75\n0,1000.000,1000.000,1000.000\n");
  const auto back = parse_csv(text);
  REQUIRE(back.size() == 2);
  CHECK(back[1].step == 1000);
  CHECK(back[1].p25 == doctest::Approx(12.346));
  CHECK(format_csv(back) == text);
  CHECK_THROWS_AS(format_csv({}), InvalidInput);
  CHECK_THROWS_AS(parse_csv("steps,p25,p50,p75\n"), ParseError);
  CHECK_THROWS_AS(parse_csv("steps,prc_25,prc_50,prc_75\n0,1,2\n"), ParseError);
  CHECK_THROWS_AS(parse_csv("steps,prc_25,prc_50,prc_75\n0,1,2,x\n"), ParseError);
  CHECK_THROWS_AS(parse_csv("steps,prc_25,prc_50,prc_75\n5,1,2,3\n5,1,2,3\n"), ParseError);
  CHECK_THROWS_AS(parse_csv(""), ParseError);
}

TEST_CASE("plots") {
  const std::vector<PercentilePoint> a{{0, 900, 1000, 1000}, {1000, 10, 20, 30}};
  const std::vector<PercentilePoint> b{{0, 1000, 1000, 1000}, {1000, 500, 700, 900}};
  const auto svg = render_plot({{"TL-CD", a}, {"No TL-CD", b}});
  CHECK(svg.rfind("<svg", 0) == 0);
  auto count = [&](const std::string& needle) {
    std::size_t n = 0;
    for (auto p = svg.find(needle); p != std::string::npos; p = svg.find(needle, p + 1)) ++n;
    return n;
  };
  CHECK(count("<polygon") == 2);
  CHECK(count("<polyline") == 2);
  CHECK(count(">TL-CD</text>") == 1);
  CHECK(count(">No TL-CD</text>") == 1);
  CHECK(count(">Training Steps</text>") == 1);
  CHECK(count(">Steps to Task Completion</text>") == 1);
  CHECK(count(">1000</text>") == 2);  // y cap and last x tick
  CHECK_THROWS_AS(render_plot({}), InvalidInput);
  CHECK_THROWS_AS(render_plot({{"empty", {}}}), InvalidInput);
  CHECK_THROWS_AS(render_plot({{"a", a}, {"short", {a[0]}}}), InvalidInput);
  CHECK(render_plot({{"a&b", a}}).find("a&amp;b") != std::string::npos);
}

TEST_CASE("output directory precedence") {
  ::unsetenv("CDQ_OUTPUT_DIR");
  CHECK(resolve_output_dir("") == "results");
  ::setenv("CDQ_OUTPUT_DIR", "/tmp/cdq-out", 1);
  CHECK(resolve_output_dir("") == "/tmp/cdq-out");
  CHECK(resolve_output_dir("mine") == "mine");
  ::unsetenv("CDQ_OUTPUT_DIR");
}

TEST_CASE("mode gates") {
  const auto task = fixtures::load_task("generator/generator.toml");
  const auto env = make_env(task);
  CHECK_NOTHROW(check_mode(task, env, parse_mode("decentralized-tlcd")));
  CHECK_NOTHROW(check_mode(task, env, parse_mode("decentralized-no-tlcd")));
  CHECK_NOTHROW(check_mode(task, env, parse_mode("centralized-no-tlcd")));
  auto bare = task;
  bare.team_tlcd.reset();
  CHECK_THROWS_AS(check_mode(bare, env, parse_mode("decentralized-no-tlcd")), CriterionRejected);
  CHECK_THROWS_AS(check_mode(bare, env, parse_mode("decentralized-tlcd")), InvalidInput);
  CHECK_THROWS_AS(check_mode(bare, env, parse_mode("centralized-tlcd")), InvalidInput);
  CHECK_NOTHROW(check_mode(bare, env, parse_mode("centralized-no-tlcd")));

  const auto buttons = fixtures::load_task("buttons/buttons.toml");
  CHECK_NOTHROW(check_mode(buttons, make_env(buttons), parse_mode("decentralized-no-tlcd")));
}

TEST_CASE("experiments are deterministic and independent of the worker count") {
  auto cfg = generator_experiment(parse_mode("decentralized-tlcd"), 4, 6000);
  const auto serial = run_experiment(cfg);
  cfg.workers = 3;
  const auto parallel = run_experiment(cfg);
  REQUIRE(serial.runs.size() == 4);
  CHECK(serial.discarded == 0);
  CHECK(format_csv(serial.aggregate) == format_csv(parallel.aggregate));
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(serial.runs[k].seed == 7 + k);
    CHECK(serial.runs[k].success.team == parallel.runs[k].success.team);
    CHECK(serial.runs[k].success.equivalence_violations == 0);
    for (const auto& p : serial.runs[k].curve) CHECK((p.median_steps >= 1 && p.median_steps <= 1000));
  }
  CHECK(serial.aggregate.size() == 7);

  const auto replay = manifest_from_json(manifest_to_json(cfg));
  CHECK(replay.seed_list() == cfg.seed_list());
  CHECK(format_csv(run_experiment(replay).aggregate) == format_csv(serial.aggregate));

  auto single = generator_experiment(parse_mode("centralized-tlcd"), 1, 3000);
  for (const auto& p : run_experiment(single).aggregate) CHECK((p.p25 == p.p50 && p.p50 == p.p75));

  auto bad = cfg;
  bad.seeds = {1, 2};
  CHECK_THROWS_AS(run_experiment(bad), InvalidInput);
}

TEST_CASE("policy files") {
  const auto task = fixtures::load_task("generator/generator.toml");
  const auto env = make_env(task);
  TrainConfig tc;
  tc.total_steps = 8000;
  tc.seed = 3;
  for (const char* m : {"decentralized-tlcd", "centralized-tlcd", "centralized-no-tlcd"}) {
    CAPTURE(m);
    const auto run = train_once(task, env, parse_mode(m), tc);
    const auto text = policy_to_json(run.policy, task, tc);
    const auto back = policy_from_json(text, task, env);
    CHECK(back.mode == run.policy.mode);
    CHECK(policy_to_json(back, task, tc) == text);
    const auto a = estimate_success(env, run.policy, 50, 1000, 11);
    const auto b = estimate_success(env, back, 50, 1000, 11);
    CHECK(a.team == b.team);
  }
  const auto run = train_once(task, env, parse_mode("decentralized-tlcd"), tc);
  const auto text = policy_to_json(run.policy, task, tc);
  const auto lab = fixtures::load_task("laboratory/laboratory.toml");
  CHECK_THROWS_AS(policy_from_json(text, lab, make_env(lab)), InvalidInput);
  CHECK_THROWS_AS(policy_from_json("{", task, env), InvalidInput);
  CHECK_THROWS_AS(policy_from_json("{\"format\": \"cdq-policy\"}", task, env), InvalidInput);
}

TEST_CASE("Frechet bounds") {
  SuccessEstimate est;
  est.episodes = 100;
  est.agents = {0.9, 0.8};
  est.team = 0.75;
  auto c = frechet_check(est);
  CHECK(c.lower == doctest::Approx(0.7));
  CHECK(c.upper == doctest::Approx(0.8));
  CHECK(c.sigma == doctest::Approx(std::sqrt(0.75 * 0.25 / 100)));
  CHECK(c.holds);
  est.team = 0.95;
  CHECK_FALSE(frechet_check(est).holds);
  est.team = 0.5;
  CHECK_FALSE(frechet_check(est).holds);
  est.agents.clear();
  CHECK_THROWS_AS(frechet_check(est), InvalidInput);
}
