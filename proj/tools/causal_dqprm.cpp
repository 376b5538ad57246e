// causal-dqprm: command-line front end for decomposition checks, automata
// inspection, training, evaluation and plotting.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cdq/causal.hpp"
#include "cdq/composition.hpp"
#include "cdq/errors.hpp"
#include "cdq/harness.hpp"
#include "cdq/projection.hpp"
#include "cdq/tlcd.hpp"

namespace fs = std::filesystem;
using namespace cdq;

namespace {

constexpr int kOk = 0, kRejected = 1, kUsage = 2, kInternal = 3;

std::vector<EventAlphabet> locals_of(const TeamEnv& env) {
  std::vector<EventAlphabet> out;
  for (std::size_t i = 0; i < env.num_agents(); ++i) out.push_back(env.local_alphabet(static_cast<int>(i)));
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << text;
}

EventAlphabet parse_alphabet_list(const std::string& text) {
  EventAlphabet a;
  std::stringstream in(text);
  for (std::string name; std::getline(in, name, ',');) {
    if (name.empty()) throw InvalidInput("empty event name in --alphabet");
    if (a.contains(name)) throw InvalidInput("duplicate event '" + name + "' in --alphabet");
    a.add(Event(name));
  }
  if (a.empty()) throw InvalidInput("--alphabet is empty");
  return a;
}

int agent_index(const TeamEnv& env, int one_based) {
  if (one_based < 1 || one_based > static_cast<int>(env.num_agents()))
    throw InvalidInput("agent must lie in 1.." + std::to_string(env.num_agents()));
  return one_based - 1;
}

// --- check ------------------------------------------------------------------

int run_check(const std::string& task_path, const std::string& tlcd_path) {
  const auto task = load_task(task_path);
  const auto env = make_env(task);
  const auto locals = locals_of(env);
  const auto strict = check_strict(env.team_rm(), locals);
  std::cout << "STRICT: " << (strict.bisimilar ? "PASS" : "FAIL") << "\n";
  if (!strict.bisimilar) std::cout << "  counterexample: " << format_events(strict.counterexample) << "\n";
  if (tlcd_path.empty()) return strict.bisimilar ? kOk : kRejected;
  const auto causal = compile_tlcd(parse_tlcd(read_file(tlcd_path)));
  const auto relaxed = check_relaxed(env.team_rm(), locals, causal.dfa);
  std::cout << "RELAXED: " << (relaxed.bisimilar ? "PASS" : "FAIL") << "\n";
  if (!relaxed.bisimilar) std::cout << "  counterexample: " << format_events(relaxed.counterexample) << "\n";
  return relaxed.bisimilar ? kOk : kRejected;
}

// --- project ----------------------------------------------------------------

int run_project(const std::string& rm_path, const std::string& alphabet, const std::string& task_path, int agent) {
  if (!task_path.empty()) {
    if (!rm_path.empty() || !alphabet.empty()) throw InvalidInput("use either --task or --rm with --alphabet");
    const auto task = load_task(task_path);
    const auto env = make_env(task);
    for (std::size_t i = 0; i < env.num_agents(); ++i) {
      if (agent && static_cast<int>(i) != agent_index(env, agent)) continue;
      std::cout << "# agent " << i + 1 << "\n" << format_projection(env.projection(static_cast<int>(i)), env.team_rm());
    }
    return kOk;
  }
  if (rm_path.empty() || alphabet.empty()) throw InvalidInput("project needs --rm and --alphabet (or --task)");
  const auto team = parse_reward_machine(read_file(rm_path));
  std::cout << format_projection(project(team, parse_alphabet_list(alphabet)), team);
  return kOk;
}

// --- compile-tlcd -----------------------------------------------------------

int run_compile(const std::string& in, const std::string& out, const std::string& dot) {
  const auto causal = compile_tlcd(parse_tlcd(read_file(in)));
  const auto text = format_causal_dfa(causal);
  if (out.empty())
    std::cout << text;
  else
    write_text(out, text);
  if (!dot.empty()) write_text(dot, to_dot(causal));
  return kOk;
}

// --- inspect-tilde ----------------------------------------------------------

int run_inspect(const std::string& task_path, int agent, const std::string& tlcd_path) {
  const auto task = load_task(task_path);
  const auto env = make_env(task);
  const int i = agent_index(env, agent);
  const auto& local = env.projection(i).machine;
  CausalDfa causal{Dfa::trivial(local.alphabet()), std::nullopt, false};
  std::string source = "none (one-state DFA)";
  if (!tlcd_path.empty()) {
    causal = compile_tlcd(parse_tlcd(read_file(tlcd_path)));
    source = tlcd_path;
  } else if (i < static_cast<int>(task.agent_tlcds.size()) && task.agent_tlcds[i]) {
    causal = compile_tlcd(*task.agent_tlcds[i]);
    source = "the task's agent TL-CD";
  }
  const TildeRm tilde(local, causal);
  const auto values = value_iteration(tilde);
  std::cout << "# agent " << agent << ", causal diagram: " << source << "\n";
  std::cout << "# " << tilde.num_pairs() << " reachable pairs over " << tilde.num_rm_states() << " RM states x "
            << tilde.num_dfa_states() << " DFA states\n";
  std::cout << "pair  u  q  terminal  sink  V*  short-circuit\n";
  for (StateId p = 0; p < tilde.num_pairs(); ++p) {
    const auto [u, q] = tilde.pair(p);
    char v[32];
    std::snprintf(v, sizeof v, "%.6f", values.at(p));
    std::cout << p << "  " << local.state_name(u) << "  " << causal.dfa.state_name(q) << "  "
              << (tilde.is_terminal(p) ? "yes" : "no") << "  " << (tilde.in_sink(p) ? "yes" : "no") << "  " << v
              << "  " << (!tilde.is_terminal(p) && should_short_circuit(values, u, q) ? "yes" : "no") << "\n";
  }
  std::cout << "# transitions (event: reward -> pair)\n";
  for (StateId p = 0; p < tilde.num_pairs(); ++p)
    for (EventIndex e = 0; e < tilde.alphabet().size(); ++e) {
      const auto to = tilde.next(p, e);
      if (to == p && tilde.reward(p, e) == 0.0) continue;
      std::cout << p << " -" << tilde.alphabet()[e].name() << "-> " << to << "  r=" << tilde.reward(p, e) << "\n";
    }
  return kOk;
}

// --- train / eval -----------------------------------------------------------

struct TrainFlags {
  std::string task, mode = "decentralized-tlcd", seeds, output_dir, save_policy, manifest;
  std::size_t runs = 10, workers = 1, success_episodes = 100;
  std::uint64_t seed_base = 0;
  TrainConfig train;
};

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream in(text);
  for (std::string s; std::getline(in, s, ',');) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(s, &used);
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (s.empty() || used != s.size()) throw InvalidInput("bad seed '" + s + "'");
    out.push_back(v);
  }
  return out;
}

int run_train(TrainFlags f, const CLI::App& sub) {
  ExperimentConfig cfg;
  if (!f.manifest.empty()) {
    if (sub.count("--task") || sub.count("--mode") || sub.count("--seeds") || sub.count("--runs"))
      throw InvalidInput("--manifest replaces --task, --mode, --runs and --seeds");
    cfg = manifest_from_json(read_file(f.manifest));
  } else {
    if (f.task.empty()) throw InvalidInput("train needs --task or --manifest");
    cfg.task = fs::absolute(f.task);
    cfg.mode = parse_mode(f.mode);
    cfg.seeds = parse_seeds(f.seeds);
    cfg.runs = cfg.seeds.empty() ? f.runs : cfg.seeds.size();
    cfg.seed_base = f.seed_base;
    cfg.train = f.train;
    if (!sub.count("--p-sync")) cfg.train.p_sync = load_task(cfg.task).p_sync;
    cfg.success_episodes = f.success_episodes;
  }
  cfg.workers = f.workers;
  cfg.output_dir = resolve_output_dir(f.output_dir);

  const auto result = run_experiment(cfg, &std::cerr);
  const auto task = load_task(cfg.task);
  const std::string stem = task.name + "_" + mode_name(cfg.mode);
  const fs::path csv = cfg.output_dir / (stem + ".csv");
  emit_csv(result.aggregate, csv);
  write_text(cfg.output_dir / (stem + ".manifest.json"), manifest_to_json(cfg));

  double success = 0.0;
  for (const auto& r : result.runs) success += r.success.team;
  success /= static_cast<double>(result.runs.size());
  const auto conv = convergence_step(result.aggregate);
  std::cout << "task " << task.name << ", mode " << mode_name(cfg.mode) << ", runs " << result.runs.size()
            << " (discarded " << result.discarded << ")\n";
  std::cout << "final median steps " << result.aggregate.back().p50 << ", team success " << success << "\n";
  std::cout << "median <= 200 first at step " << (conv ? std::to_string(*conv) : std::string("never")) << "\n";
  std::cout << "wrote " << csv.string() << "\n";

  if (!f.save_policy.empty()) {
    const auto env = make_env(task);
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seed_list().front();
    const auto run = train_once(task, env, cfg.mode, tc);
    write_text(f.save_policy, policy_to_json(run.policy, task, tc));
    std::cout << "wrote policy (seed " << tc.seed << ") to " << f.save_policy << "\n";
  }
  return kOk;
}

int run_eval(const std::string& task_path, const std::string& policy_path, std::size_t episodes,
             std::size_t max_steps, std::uint64_t seed) {
  const auto task = load_task(task_path);
  const auto env = make_env(task);
  const auto policy = policy_from_json(read_file(policy_path), task, env);
  const auto est = estimate_success(env, policy, episodes, max_steps, seed);
  std::cout << "episodes " << est.episodes << ", team success " << est.team << "\n";
  if (policy.centralized) return kOk;
  for (std::size_t i = 0; i < est.agents.size(); ++i)
    std::cout << "agent " << i + 1 << " local success " << est.agents[i] << "\n";
  const auto fb = frechet_check(est);
  std::cout << "team acceptance differs from all-local acceptance in " << est.equivalence_violations
            << " episodes\n";
  std::cout << "bounds [" << fb.lower << ", " << fb.upper << "] +/- 3*" << fb.sigma << ": "
            << (fb.holds ? "hold" : "violated") << "\n";
  return est.equivalence_violations == 0 && fb.holds ? kOk : kRejected;
}

// --- plot -------------------------------------------------------------------

int run_plot(const std::vector<std::string>& csvs, std::vector<std::string> labels, const std::string& out,
             const std::string& title, double cap) {
  if (!labels.empty() && labels.size() != csvs.size()) throw InvalidInput("give one --label per --csv");
  std::vector<PlotSeries> series;
  for (std::size_t k = 0; k < csvs.size(); ++k)
    series.push_back({labels.empty() ? fs::path(csvs[k]).stem().string() : labels[k], read_csv(csvs[k])});
  emit_plot(series, out, cap, title);
  std::cout << "wrote " << out << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decentralized multi-agent Q-learning over reward machines with temporal-causal diagrams"};
  app.name("causal-dqprm");
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  std::string task, tlcd, rm, alphabet, in, out, dot, policy, title;
  int agent = 0;

  auto* check = app.add_subcommand("check", "Strict and (with --tlcd) relaxed decomposition criteria");
  check->add_option("--task", task, "Task file")->required()->check(CLI::ExistingFile);
  check->add_option("--tlcd", tlcd, "TL-CD file for the relaxed criterion")->check(CLI::ExistingFile);

  auto* proj = app.add_subcommand("project", "Project a team RM onto a local event set");
  proj->add_option("--rm", rm, "Team RM file")->check(CLI::ExistingFile);
  proj->add_option("--alphabet", alphabet, "Comma-separated local events");
  proj->add_option("--task", task, "Task file (projects every agent)")->check(CLI::ExistingFile);
  proj->add_option("--agent", agent, "With --task: only this agent (1-based)");

  auto* comp = app.add_subcommand("compile-tlcd", "Compile a TL-CD into its minimal causal DFA");
  comp->add_option("--in", in, "TL-CD file")->required()->check(CLI::ExistingFile);
  comp->add_option("--out", out, "DFA text output (default stdout)");
  comp->add_option("--dot", dot, "Graphviz output");

  auto* insp = app.add_subcommand("inspect-tilde", "Dump an agent's RM x DFA product and its value table");
  insp->add_option("--task", task, "Task file")->required()->check(CLI::ExistingFile);
  insp->add_option("--agent", agent, "Agent (1-based)")->required();
  insp->add_option("--tlcd", tlcd, "TL-CD overriding the task's agent entry")->check(CLI::ExistingFile);

  TrainFlags tf;
  auto* train = app.add_subcommand("train", "Seeded training runs aggregated into a percentile CSV");
  train->add_option("--task", tf.task, "Task file")->check(CLI::ExistingFile);
  train->add_option("--mode", tf.mode, "decentralized-tlcd | decentralized-no-tlcd | centralized-tlcd | centralized-no-tlcd")
      ->capture_default_str();
  train->add_option("--runs", tf.runs, "Number of runs")->capture_default_str();
  train->add_option("--seeds", tf.seeds, "Comma-separated seeds (overrides --runs)");
  train->add_option("--seed-base", tf.seed_base, "First seed when --seeds is absent")->capture_default_str();
  train->add_option("--steps", tf.train.total_steps, "Training steps per run")->capture_default_str();
  train->add_option("--episode-steps", tf.train.episode_steps, "Step cap per episode")->capture_default_str();
  train->add_option("--p-sync", tf.train.p_sync, "Shared-event success probability in training (default: the task's p_sync)");
  train->add_option("--alpha", tf.train.alpha, "Learning rate")->capture_default_str();
  train->add_option("--gamma", tf.train.gamma, "Discount")->capture_default_str();
  train->add_option("--epsilon", tf.train.epsilon, "Exploration rate")->capture_default_str();
  train->add_option("--eval-every", tf.train.eval_every, "Evaluation cadence in training steps")->capture_default_str();
  train->add_option("--eval-trials", tf.train.eval_trials, "Greedy episodes per evaluation")->capture_default_str();
  train->add_option("--success-episodes", tf.success_episodes, "Greedy episodes for final success rates")
      ->capture_default_str();
  train->add_option("--workers", tf.workers, "Worker threads")->capture_default_str();
  train->add_option("--output-dir", tf.output_dir, "Output directory (default $CDQ_OUTPUT_DIR or results)");
  train->add_option("--save-policy", tf.save_policy, "Write the first run's policy as JSON");
  train->add_option("--manifest", tf.manifest, "Replay a manifest written by an earlier run")->check(CLI::ExistingFile);

  std::size_t episodes = 500, max_steps = 1000;
  std::uint64_t seed = 0;
  auto* eval = app.add_subcommand("eval", "Greedy team execution of a saved policy");
  eval->add_option("--task", task, "Task file")->required()->check(CLI::ExistingFile);
  eval->add_option("--policy", policy, "Policy JSON written by train --save-policy")->required()->check(CLI::ExistingFile);
  eval->add_option("--episodes", episodes, "Episodes")->capture_default_str();
  eval->add_option("--max-steps", max_steps, "Step cap per episode")->capture_default_str();
  eval->add_option("--seed", seed, "Seed")->capture_default_str();

  std::vector<std::string> csvs, labels;
  double cap = 1000.0;
  auto* plot = app.add_subcommand("plot", "SVG of median and interquartile band per CSV");
  plot->add_option("--csv", csvs, "Percentile CSV (repeatable)")->required()->check(CLI::ExistingFile);
  plot->add_option("--label", labels, "Legend label per CSV (repeatable)");
  plot->add_option("--out", out, "SVG output")->required();
  plot->add_option("--title", title, "Title");
  plot->add_option("--cap", cap, "Y axis cap")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*check) return run_check(task, tlcd);
    if (*proj) return run_project(rm, alphabet, task, agent);
    if (*comp) return run_compile(in, out, dot);
    if (*insp) return run_inspect(task, agent, tlcd);
    if (*train) return run_train(tf, *train);
    if (*eval) return run_eval(task, policy, episodes, max_steps, seed);
    if (*plot) return run_plot(csvs, labels, out, title, cap);
  } catch (const CriterionRejected& e) {
    std::cerr << "rejected: " << e.what() << "\n";
    return kRejected;
  } catch (const InvariantViolation& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
