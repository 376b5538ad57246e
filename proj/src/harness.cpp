#include "cdq/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <ostream>
#include <sstream>
#include <thread>

#include "cdq/composition.hpp"
#include "cdq/errors.hpp"

namespace cdq {

namespace {

using json = nlohmann::json;

constexpr std::uint64_t kSuccessSalt = 0x5851f42d4c957f2dULL;

std::vector<EventAlphabet> locals_of(const TeamEnv& env) {
  std::vector<EventAlphabet> out;
  for (std::size_t i = 0; i < env.num_agents(); ++i) out.push_back(env.local_alphabet(static_cast<int>(i)));
  return out;
}

std::vector<std::string> names_of(const EventSeq& seq) {
  std::vector<std::string> out;
  for (const auto& e : seq) out.push_back(e.name());
  return out;
}

const Tlcd& require_team_tlcd(const TaskSpec& task) {
  if (!task.team_tlcd) throw InvalidInput("mode needs a TL-CD but task '" + task.name + "' has none");
  return *task.team_tlcd;
}

bool strict_holds(const TeamEnv& env) { return check_strict(env.team_rm(), locals_of(env)).bisimilar; }

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  out.close();
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string fmt3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

json train_config_json(const TrainConfig& c) {
  return {{"total_steps", c.total_steps}, {"episode_steps", c.episode_steps}, {"p_sync", c.p_sync},
          {"alpha", c.alpha},             {"gamma", c.gamma},                 {"epsilon", c.epsilon},
          {"seed", c.seed},               {"eval_every", c.eval_every},       {"eval_trials", c.eval_trials}};
}

TrainConfig train_config_from(const json& j) {
  TrainConfig c;
  c.total_steps = j.at("total_steps").get<std::size_t>();
  c.episode_steps = j.at("episode_steps").get<std::size_t>();
  c.p_sync = j.at("p_sync").get<double>();
  c.alpha = j.at("alpha").get<double>();
  c.gamma = j.at("gamma").get<double>();
  c.epsilon = j.at("epsilon").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.eval_every = j.at("eval_every").get<std::size_t>();
  c.eval_trials = j.at("eval_trials").get<std::size_t>();
  return c;
}

json qpolicy_json(const QPolicy& q) {
  json rows = json::array();
  q.for_each_row([&](std::uint64_t r, std::span<const double> v) {
    if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) return;
    rows.push_back(json::array({r, std::vector<double>(v.begin(), v.end())}));
  });
  return {{"rows", q.rows()}, {"actions", q.actions()}, {"entries", std::move(rows)}};
}

void load_qpolicy(QPolicy& q, const json& j) {
  if (j.at("rows").get<std::uint64_t>() != q.rows() || j.at("actions").get<std::size_t>() != q.actions())
    throw InvalidInput("policy table shape does not match the task");
  for (const auto& entry : j.at("entries")) {
    const auto row = entry.at(0).get<std::uint64_t>();
    const auto vals = entry.at(1).get<std::vector<double>>();
    if (vals.size() != q.actions()) throw InvalidInput("policy row has the wrong number of actions");
    for (std::size_t a = 0; a < vals.size(); ++a) q.set(row, a, vals[a]);
  }
}

}  // namespace

// ---------------------------------------------------------------------------

Mode parse_mode(std::string_view text) {
  if (text == "decentralized-tlcd") return {Controller::Decentralized, true};
  if (text == "decentralized-no-tlcd") return {Controller::Decentralized, false};
  if (text == "centralized-tlcd") return {Controller::Centralized, true};
  if (text == "centralized-no-tlcd") return {Controller::Centralized, false};
  throw InvalidInput("unknown mode '" + std::string(text) +
                     "' (expected decentralized-tlcd, decentralized-no-tlcd, centralized-tlcd or centralized-no-tlcd)");
}

std::string mode_name(Mode m) {
  return std::string(m.controller == Controller::Decentralized ? "decentralized" : "centralized") +
         (m.tlcd ? "-tlcd" : "-no-tlcd");
}

std::vector<std::uint64_t> ExperimentConfig::seed_list() const {
  if (!seeds.empty()) return seeds;
  std::vector<std::uint64_t> out;
  for (std::size_t k = 0; k < runs; ++k) out.push_back(seed_base + k);
  return out;
}

void ExperimentConfig::validate(const TaskSpec& t) const {
  if (runs == 0 && seeds.empty()) throw InvalidInput("at least one run is required");
  if (!seeds.empty() && runs != 0 && seeds.size() != runs)
    throw InvalidInput("seed list length " + std::to_string(seeds.size()) + " does not match runs " +
                       std::to_string(runs));
  if (workers == 0) throw InvalidInput("workers must be positive");
  if (train.eval_every == 0) throw InvalidInput("experiments need a positive evaluation cadence");
  if (mode.tlcd) require_team_tlcd(t);
  train.validate();
}

std::filesystem::path resolve_output_dir(const std::filesystem::path& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("CDQ_OUTPUT_DIR"); env && *env) return env;
  return "results";
}

// ---------------------------------------------------------------------------

void check_mode(const TaskSpec& task, const TeamEnv& env, Mode mode) {
  if (mode.controller == Controller::Centralized) {
    if (mode.tlcd) require_team_tlcd(task);
    return;
  }
  const auto locals = locals_of(env);
  if (!mode.tlcd) {
    const auto strict = check_strict(env.team_rm(), locals);
    if (strict.bisimilar) return;
    if (!task.team_tlcd)
      throw CriterionRejected("the strict decomposition criterion does not hold; counterexample: " +
                                  format_events(strict.counterexample),
                              names_of(strict.counterexample));
  }
  const auto relaxed = check_relaxed(env.team_rm(), locals, compile_tlcd(require_team_tlcd(task)).dfa);
  if (!relaxed.bisimilar)
    throw CriterionRejected("the relaxed decomposition criterion does not hold; counterexample: " +
                                format_events(relaxed.counterexample),
                            names_of(relaxed.counterexample));
}

TrainedRun train_once(const TaskSpec& task, const TeamEnv& env, Mode mode, const TrainConfig& cfg) {
  TrainedRun out{TrainedPolicy{mode, {}, std::nullopt}, {}, {}};
  if (mode.controller == Controller::Centralized) {
    auto r = centralized_train(env, cfg, mode.tlcd ? task.team_tlcd : std::nullopt);
    out.policy.centralized.emplace(std::move(r.policy));
    out.curve = std::move(r.curve);
    out.stats.push_back(std::move(r.stats));
    return out;
  }
  DecentralizedResult r;
  if (mode.tlcd)
    r = causal_dqprm_train(env, cfg, require_team_tlcd(task), task.agent_tlcds);
  else if (strict_holds(env) || !task.team_tlcd)
    r = dqprm_train(env, cfg);
  else
    r = causal_dqprm_train(env, cfg, *task.team_tlcd, {});
  out.policy.decentralized = std::move(r.policies);
  out.curve = std::move(r.curve);
  out.stats = std::move(r.stats);
  return out;
}

SuccessEstimate estimate_success(const TeamEnv& env, const TrainedPolicy& policy, std::size_t episodes,
                                 std::size_t max_steps, std::uint64_t seed) {
  if (episodes == 0) throw InvalidInput("success estimation needs at least one episode");
  std::mt19937_64 rng(seed);
  SuccessEstimate est;
  est.episodes = episodes;
  std::size_t team = 0;
  std::vector<std::size_t> local(policy.centralized ? 0 : env.num_agents(), 0);
  for (std::size_t k = 0; k < episodes; ++k) {
    if (policy.centralized) {
      team += execute_centralized(env, *policy.centralized, max_steps, rng).success;
      continue;
    }
    const auto r = execute_team(env, policy.decentralized, max_steps, rng);
    team += r.success;
    bool all = true;
    for (std::size_t i = 0; i < local.size(); ++i) {
      local[i] += r.local_accepted[i];
      all = all && r.local_accepted[i];
    }
    est.equivalence_violations += all != r.success;
  }
  const double n = static_cast<double>(episodes);
  est.team = static_cast<double>(team) / n;
  for (auto c : local) est.agents.push_back(static_cast<double>(c) / n);
  return est;
}

FrechetCheck frechet_check(const SuccessEstimate& est) {
  if (est.agents.empty()) throw InvalidInput("bounds need per-agent success estimates");
  const double n = static_cast<double>(est.episodes);
  auto se = [&](double p) { return std::sqrt(p * (1.0 - p) / n); };
  FrechetCheck c;
  double sum = 0.0;
  c.upper = 1.0;
  c.sigma = se(est.team);
  for (double v : est.agents) {
    sum += v;
    c.upper = std::min(c.upper, v);
    c.sigma = std::max(c.sigma, se(v));
  }
  c.lower = std::max(0.0, sum - static_cast<double>(est.agents.size() - 1));
  c.holds = est.team >= c.lower - 3.0 * c.sigma && est.team <= c.upper + 3.0 * c.sigma;
  return c;
}

// ---------------------------------------------------------------------------

double nearest_rank(std::vector<double> values, double pct) {
  if (values.empty()) throw InvalidInput("percentile of an empty sample");
  if (!(pct > 0.0 && pct <= 100.0)) throw InvalidInput("percentile must lie in (0, 100]");
  std::sort(values.begin(), values.end());
  auto rank = static_cast<std::size_t>(std::ceil(pct / 100.0 * static_cast<double>(values.size()) - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  return values[rank - 1];
}

std::vector<PercentilePoint> aggregate_curves(const std::vector<std::vector<EvalPoint>>& curves) {
  if (curves.empty()) throw InvalidInput("nothing to aggregate");
  const auto& ref = curves.front();
  for (const auto& c : curves) {
    if (c.size() != ref.size()) throw InvalidInput("runs have different evaluation schedules");
    for (std::size_t k = 0; k < c.size(); ++k)
      if (c[k].step != ref[k].step) throw InvalidInput("runs have different evaluation schedules");
  }
  std::vector<PercentilePoint> out;
  for (std::size_t k = 0; k < ref.size(); ++k) {
    std::vector<double> v;
    for (const auto& c : curves) v.push_back(c[k].median_steps);
    out.push_back({ref[k].step, nearest_rank(v, 25), nearest_rank(v, 50), nearest_rank(v, 75)});
  }
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream* log) {
  const TaskSpec task = load_task(cfg.task);
  cfg.validate(task);
  check_mode(task, make_env(task), cfg.mode);

  const auto seeds = cfg.seed_list();
  std::vector<std::optional<RunMetrics>> slots(seeds.size());
  std::vector<std::string> errors(seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k; (k = next.fetch_add(1)) < seeds.size();) {
      try {
        const TeamEnv env = make_env(task);
        TrainConfig tc = cfg.train;
        tc.seed = seeds[k];
        auto run = train_once(task, env, cfg.mode, tc);
        RunMetrics m;
        m.seed = seeds[k];
        m.curve = std::move(run.curve);
        m.stats = std::move(run.stats);
        m.success = estimate_success(env, run.policy, cfg.success_episodes, tc.episode_steps, seeds[k] ^ kSuccessSalt);
        slots[k] = std::move(m);
      } catch (const std::exception& e) {
        errors[k] = e.what();
      }
    }
  };
  const std::size_t n_threads = std::min(cfg.workers, seeds.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n_threads; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  ExperimentResult res;
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    if (slots[k]) {
      res.runs.push_back(std::move(*slots[k]));
      continue;
    }
    ++res.discarded;
    if (log) *log << "warning: run with seed " << seeds[k] << " discarded: " << errors[k] << "\n";
  }
  if (res.runs.empty()) throw std::runtime_error("every run failed");
  std::vector<std::vector<EvalPoint>> curves;
  for (const auto& r : res.runs) curves.push_back(r.curve);
  res.aggregate = aggregate_curves(curves);
  return res;
}

std::optional<std::size_t> convergence_step(const std::vector<PercentilePoint>& points, double threshold) {
  for (const auto& p : points)
    if (p.p50 <= threshold) return p.step;
  return std::nullopt;
}

// ---------------------------------------------------------------------------

std::string format_csv(const std::vector<PercentilePoint>& points) {
  if (points.empty()) throw InvalidInput("no evaluation points to write");
  std::string out = "steps,prc_25,prc_50,prc_75\n";
  for (const auto& p : points)
    out += std::to_string(p.step) + "," + fmt3(p.p25) + "," + fmt3(p.p50) + "," + fmt3(p.p75) + "\n";
  return out;
}

void emit_csv(const std::vector<PercentilePoint>& points, const std::filesystem::path& path) {
  write_file(path, format_csv(points));
}

std::vector<PercentilePoint> parse_csv(std::string_view text) {
  std::vector<PercentilePoint> out;
  std::size_t line_no = 0, pos = 0;
  bool header = false;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header) {
      if (line != "steps,prc_25,prc_50,prc_75") throw ParseError("expected header steps,prc_25,prc_50,prc_75", line_no);
      header = true;
      continue;
    }
    std::istringstream in(line);
    std::string f[4];
    for (auto& s : f)
      if (!std::getline(in, s, ',')) throw ParseError("expected four comma-separated fields", line_no);
    std::string rest;
    if (std::getline(in, rest)) throw ParseError("expected four comma-separated fields", line_no);
    try {
      std::size_t used = 0;
      PercentilePoint p;
      p.step = std::stoull(f[0], &used);
      if (used != f[0].size()) throw std::invalid_argument(f[0]);
      double* dst[3] = {&p.p25, &p.p50, &p.p75};
      for (int k = 0; k < 3; ++k) {
        *dst[k] = std::stod(f[k + 1], &used);
        if (used != f[k + 1].size()) throw std::invalid_argument(f[k + 1]);
      }
      if (!out.empty() && p.step <= out.back().step) throw ParseError("steps must increase", line_no);
      out.push_back(p);
    } catch (const std::logic_error&) {
      throw ParseError("malformed number", line_no);
    }
  }
  if (!header) throw ParseError("missing header", line_no == 0 ? 1 : line_no);
  return out;
}

std::vector<PercentilePoint> read_csv(const std::filesystem::path& path) { return parse_csv(read_file(path.string())); }

// ---------------------------------------------------------------------------

std::string render_plot(const std::vector<PlotSeries>& series, double y_cap, const std::string& title) {
  if (series.empty()) throw InvalidInput("a plot needs at least one series");
  if (!(y_cap > 0.0)) throw InvalidInput("the y cap must be positive");
  const auto& ref = series.front().points;
  for (const auto& s : series) {
    if (s.points.empty()) throw InvalidInput("series '" + s.label + "' is empty");
    if (s.points.size() != ref.size()) throw InvalidInput("series lengths differ");
    for (std::size_t k = 0; k < ref.size(); ++k)
      if (s.points[k].step != ref[k].step) throw InvalidInput("series do not share their step axis");
  }
  const double W = 640, H = 420, L = 70, R = 20, T = 40, B = 60;
  const double x_max = std::max<double>(1.0, static_cast<double>(ref.back().step));
  auto X = [&](double step) { return L + (W - L - R) * step / x_max; };
  auto Y = [&](double v) { return H - B - (H - T - B) * std::clamp(v, 0.0, y_cap) / y_cap; };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << " " << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!title.empty())
    o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(title)
      << "</text>\n";
  // axes and ticks
  o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 5; ++k) {
    const double v = y_cap * k / 5.0, y = Y(v);
    o << "<line x1=\"" << L - 4 << "\" y1=\"" << y << "\" x2=\"" << L << "\" y2=\"" << y << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << L - 8 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << static_cast<long long>(v)
      << "</text>\n";
    const double s = x_max * k / 5.0, x = X(s);
    o << "<line x1=\"" << x << "\" y1=\"" << H - B << "\" x2=\"" << x << "\" y2=\"" << H - B + 4
      << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << x << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">" << static_cast<long long>(s)
      << "</text>\n";
  }
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">Training Steps</text>\n";
  o << "<text x=\"18\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
    << (T + H - B) / 2 << ")\">Steps to Task Completion</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& pts = series[i].points;
    const char* c = colors[i % std::size(colors)];
    o << "<polygon fill=\"" << c << "\" fill-opacity=\"0.25\" stroke=\"none\" points=\"";
    for (const auto& p : pts) o << X(static_cast<double>(p.step)) << "," << Y(p.p75) << " ";
    for (auto it = pts.rbegin(); it != pts.rend(); ++it) o << X(static_cast<double>(it->step)) << "," << Y(it->p25) << " ";
    o << "\"/>\n<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"2\" points=\"";
    for (const auto& p : pts) o << X(static_cast<double>(p.step)) << "," << Y(p.p50) << " ";
    o << "\"/>\n";
    const double ly = T + 10 + 18.0 * static_cast<double>(i);
    o << "<line x1=\"" << W - R - 170 << "\" y1=\"" << ly << "\" x2=\"" << W - R - 150 << "\" y2=\"" << ly
      << "\" stroke=\"" << c << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << W - R - 144 << "\" y=\"" << ly + 4 << "\">" << xml_escape(series[i].label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

void emit_plot(const std::vector<PlotSeries>& series, const std::filesystem::path& path, double y_cap,
               const std::string& title) {
  write_file(path, render_plot(series, y_cap, title));
}

// ---------------------------------------------------------------------------

std::string policy_to_json(const TrainedPolicy& policy, const TaskSpec& task, const TrainConfig& cfg) {
  json j{{"format", "cdq-policy"}, {"version", 1}, {"task", task.name}, {"mode", mode_name(policy.mode)},
         {"train", train_config_json(cfg)}};
  json tables = json::array();
  if (policy.centralized)
    tables.push_back(qpolicy_json(policy.centralized->q));
  else
    for (const auto& q : policy.decentralized) tables.push_back(qpolicy_json(q));
  j["tables"] = std::move(tables);
  return j.dump(1) + "\n";
}

TrainedPolicy policy_from_json(std::string_view text, const TaskSpec& task, const TeamEnv& env) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidInput(std::string("policy file is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format") != "cdq-policy" || j.at("version") != 1) throw InvalidInput("not a policy file");
    if (j.at("task").get<std::string>() != task.name)
      throw InvalidInput("policy was trained on task '" + j.at("task").get<std::string>() + "', not '" + task.name +
                         "'");
    const Mode mode = parse_mode(j.at("mode").get<std::string>());
    const TrainConfig cfg = train_config_from(j.at("train"));
    const auto& tables = j.at("tables");
    TrainedPolicy out{mode, {}, std::nullopt};
    if (mode.controller == Controller::Centralized) {
      if (tables.size() != 1) throw InvalidInput("a centralized policy has exactly one table");
      out.centralized.emplace(make_centralized_policy(env, cfg, mode.tlcd ? task.team_tlcd : std::nullopt));
      load_qpolicy(out.centralized->q, tables.at(0));
      return out;
    }
    if (tables.size() != env.num_agents()) throw InvalidInput("expected one table per agent");
    for (std::size_t i = 0; i < env.num_agents(); ++i) {
      const auto& ag = env.agent(static_cast<int>(i));
      out.decentralized.emplace_back(static_cast<std::uint64_t>(ag.num_cells()) * ag.num_rm_states(), kNumActions,
                                     cfg.alpha, cfg.gamma, cfg.epsilon);
      load_qpolicy(out.decentralized.back(), tables.at(i));
    }
    return out;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed policy file: ") + e.what());
  }
}

std::string manifest_to_json(const ExperimentConfig& cfg) {
  json j{{"format", "cdq-manifest"},
         {"version", 1},
         {"task", cfg.task.string()},
         {"mode", mode_name(cfg.mode)},
         {"seeds", cfg.seed_list()},
         {"success_episodes", cfg.success_episodes},
         {"train", train_config_json(cfg.train)}};
  return j.dump(1) + "\n";
}

ExperimentConfig manifest_from_json(std::string_view text) {
  try {
    const json j = json::parse(text);
    if (j.at("format") != "cdq-manifest" || j.at("version") != 1) throw InvalidInput("not a manifest file");
    ExperimentConfig c;
    c.task = j.at("task").get<std::string>();
    c.mode = parse_mode(j.at("mode").get<std::string>());
    c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.runs = c.seeds.size();
    c.success_episodes = j.at("success_episodes").get<std::size_t>();
    c.train = train_config_from(j.at("train"));
    return c;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("malformed manifest: ") + e.what());
  }
}

}  // namespace cdq
