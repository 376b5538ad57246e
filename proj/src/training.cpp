#include "cdq/training.hpp"

#include <algorithm>
#include <cmath>

#include "cdq/composition.hpp"
#include "cdq/errors.hpp"

namespace cdq {

namespace {

constexpr std::uint64_t kDenseLimit = std::uint64_t{1} << 22;  // entries
constexpr std::uint64_t kEvalSalt = 0x9e3779b97f4a7c15ULL;

std::vector<std::string> names_of(const EventSeq& seq) {
  std::vector<std::string> out;
  for (const auto& e : seq) out.push_back(e.name());
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

QPolicy::QPolicy(std::uint64_t rows, std::size_t actions, double alpha, double gamma, double epsilon)
    : rows_(rows), actions_(actions), alpha_(alpha), gamma_(gamma), epsilon_(epsilon) {
  if (actions == 0) throw InvalidInput("a policy needs at least one action");
  dense_ = rows <= kDenseLimit / actions;
  if (dense_) table_.assign(rows * actions, 0.0);
}

std::size_t QPolicy::stored_rows() const noexcept { return dense_ ? rows_ : sparse_.size(); }

const double* QPolicy::find(std::uint64_t row) const {
  if (row >= rows_) throw InvalidInput("policy row " + std::to_string(row) + " out of range");
  if (dense_) return table_.data() + row * actions_;
  auto it = sparse_.find(row);
  return it == sparse_.end() ? nullptr : table_.data() + it->second;
}

double* QPolicy::slot(std::uint64_t row) {
  if (row >= rows_) throw InvalidInput("policy row " + std::to_string(row) + " out of range");
  if (dense_) return table_.data() + row * actions_;
  auto [it, fresh] = sparse_.try_emplace(row, table_.size());
  if (fresh) table_.resize(table_.size() + actions_, 0.0);
  return table_.data() + it->second;
}

double QPolicy::q(std::uint64_t row, std::size_t a) const {
  if (a >= actions_) throw InvalidInput("action out of range");
  const double* r = find(row);
  return r ? r[a] : 0.0;
}

double QPolicy::max_q(std::uint64_t row) const {
  const double* r = find(row);
  return r ? *std::max_element(r, r + actions_) : 0.0;
}

std::size_t QPolicy::greedy(std::uint64_t row, std::mt19937_64& rng) const {
  const double* r = find(row);
  if (!r) return std::uniform_int_distribution<std::size_t>(0, actions_ - 1)(rng);
  const double best = *std::max_element(r, r + actions_);
  std::size_t ties = 0;
  for (std::size_t a = 0; a < actions_; ++a) ties += r[a] == best;
  std::size_t k = ties == 1 ? 0 : std::uniform_int_distribution<std::size_t>(0, ties - 1)(rng);
  for (std::size_t a = 0; a < actions_; ++a)
    if (r[a] == best && k-- == 0) return a;
  return 0;
}

std::size_t QPolicy::explore(std::uint64_t row, std::mt19937_64& rng) const {
  if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < epsilon_)
    return std::uniform_int_distribution<std::size_t>(0, actions_ - 1)(rng);
  return greedy(row, rng);
}

bool QPolicy::all_zero() const {
  return std::all_of(table_.begin(), table_.end(), [](double v) { return v == 0.0; });
}

void QPolicy::for_each_row(const std::function<void(std::uint64_t, std::span<const double>)>& fn) const {
  if (dense_) {
    for (std::uint64_t r = 0; r < rows_; ++r) fn(r, std::span<const double>(table_.data() + r * actions_, actions_));
    return;
  }
  std::vector<std::pair<std::uint64_t, std::size_t>> order(sparse_.begin(), sparse_.end());
  std::sort(order.begin(), order.end());
  for (auto [r, off] : order) fn(r, std::span<const double>(table_.data() + off, actions_));
}

void QPolicy::set(std::uint64_t row, std::size_t a, double value) {
  if (a >= actions_) throw InvalidInput("action out of range");
  if (!std::isfinite(value)) throw InvalidInput("Q values must be finite");
  slot(row)[a] = value;
}

void QPolicy::update(std::uint64_t row, std::size_t a, double r, std::uint64_t next_row, bool terminal) {
  if (a >= actions_) throw InvalidInput("action out of range");
  const double target = terminal ? r : r + gamma_ * max_q(next_row);
  double& v = slot(row)[a];
  v = (1.0 - alpha_) * v + alpha_ * target;
  if (!std::isfinite(v)) throw InvariantViolation("Q value became non-finite");
}

void q_update(QPolicy& pol, std::uint64_t row, std::size_t a, double r, std::uint64_t next_row, bool terminal) {
  pol.update(row, a, r, next_row, terminal);
}

void TrainConfig::validate() const {
  if (total_steps == 0 && eval_every == 0) return;
  if (episode_steps == 0) throw InvalidInput("episode_steps must be positive");
  if (!(p_sync > 0.0 && p_sync <= 1.0)) throw InvalidInput("p_sync must lie in (0, 1]");
  if (alpha < 0.0 || alpha > 1.0) throw InvalidInput("alpha must lie in [0, 1]");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidInput("gamma must lie in (0, 1]");
  if (epsilon < 0.0 || epsilon > 1.0) throw InvalidInput("epsilon must lie in [0, 1]");
  if (eval_every > 0 && eval_trials == 0) throw InvalidInput("eval_trials must be positive");
}

// ---------------------------------------------------------------------------

namespace {

double nearest_rank_median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t rank = (v.size() + 1) / 2;  // ceil(n / 2)
  return v[rank - 1];
}

CausalDfa trivial_causal(const EventAlphabet& alphabet) { return CausalDfa{Dfa::trivial(alphabet), std::nullopt, 0}; }

/// One agent's learner over its (u, q) product.
struct Learner {
  int agent;
  const LocalEnv* local;
  TildeRm tilde;
  ValueTable values;
  std::vector<std::int64_t> dfa_idx;  // env event -> product alphabet index or -1
  int s = 0;
  StateId p = 0;
  int draw = 0;
  std::size_t episode_t = 0;

  Learner(const TeamEnv& env, int i, const CausalDfa& causal)
      : agent(i),
        local(&env.agent(i)),
        tilde(env.projection(i).machine, causal),
        values(value_iteration(tilde)) {
    for (EventIndex e = 0; e < env.events().size(); ++e) {
      auto d = tilde.alphabet().index_of(env.events()[e].name());
      dfa_idx.push_back(d ? static_cast<std::int64_t>(*d) : -1);
    }
  }

  StateId u() const { return tilde.pair(p).first; }
  void reset(const TeamEnv& env, std::mt19937_64& rng) {
    s = local->start();
    p = tilde.initial();
    draw = env.draw(rng);
    episode_t = 0;
  }
};

struct StepOutcome {
  bool terminal = false;
  bool short_circuit = false;
};

StepOutcome learner_step(const TeamEnv& env, const TrainConfig& cfg, Learner& L, QPolicy& pol, AgentStats& st,
                         bool short_circuit, std::mt19937_64& rng) {
  const StateId u = L.u();
  const std::uint64_t row = local_row(env, L.agent, L.s, u);
  const auto a = static_cast<Action>(pol.explore(row, rng));
  const int s2 = L.local->step(L.s, u, a);
  const int l = L.local->label(L.draw, L.s, u, a);
  StateId p2 = L.p;
  double r = 0.0;
  if (l >= 0 && L.dfa_idx[l] >= 0) {
    const bool fires = env.sharers(static_cast<EventIndex>(l)).size() == 1 ||
                       std::uniform_real_distribution<double>(0.0, 1.0)(rng) < cfg.p_sync;
    if (fires) {
      const auto d = static_cast<EventIndex>(L.dfa_idx[l]);
      r = L.tilde.reward(L.p, d);
      p2 = L.tilde.next(L.p, d);
    }
  }
  StepOutcome out;
  out.terminal = L.tilde.is_terminal(p2);
  out.short_circuit = short_circuit && !out.terminal && L.values.at(p2) <= ValueTable::kTolerance;
  const StateId u2 = L.tilde.pair(p2).first;
  pol.update(row, static_cast<std::size_t>(a), r, local_row(env, L.agent, s2, u2), out.terminal || out.short_circuit);
  ++st.steps_in_state[u];
  ++st.steps;
  ++L.episode_t;
  L.s = s2;
  L.p = p2;
  if (out.short_circuit) {
    if (L.values.at(p2) > ValueTable::kTolerance) throw InvariantViolation("short-circuit at a pair with V* > 0");
    ++st.short_circuits;
    ++st.short_circuit_pairs[L.tilde.pair(p2)];
  }
  return out;
}

double evaluate_decentralized(const TeamEnv& env, const std::vector<QPolicy>& pols, const TrainConfig& cfg,
                              std::mt19937_64& rng) {
  std::vector<double> steps;
  for (std::size_t k = 0; k < cfg.eval_trials; ++k) {
    const auto r = execute_team(env, pols, cfg.episode_steps, rng);
    steps.push_back(r.success ? static_cast<double>(r.steps) : static_cast<double>(cfg.episode_steps));
  }
  return nearest_rank_median(steps);
}

std::vector<QPolicy> fresh_policies(const TeamEnv& env, const TrainConfig& cfg) {
  std::vector<QPolicy> pols;
  for (std::size_t i = 0; i < env.num_agents(); ++i) {
    const auto& ag = env.agent(static_cast<int>(i));
    pols.emplace_back(ag.num_cells() * ag.num_rm_states(), kNumActions, cfg.alpha, cfg.gamma, cfg.epsilon);
  }
  return pols;
}

std::vector<AgentStats> fresh_stats(const TeamEnv& env) {
  std::vector<AgentStats> stats(env.num_agents());
  for (std::size_t i = 0; i < env.num_agents(); ++i)
    stats[i].steps_in_state.assign(env.agent(static_cast<int>(i)).num_rm_states(), 0);
  return stats;
}

std::vector<EventAlphabet> locals_of(const TeamEnv& env) {
  std::vector<EventAlphabet> out;
  for (std::size_t i = 0; i < env.num_agents(); ++i) out.push_back(env.local_alphabet(static_cast<int>(i)));
  return out;
}

}  // namespace

DecentralizedResult dqprm_train(const TeamEnv& env, const TrainConfig& cfg) {
  cfg.validate();
  const auto locals = locals_of(env);
  const auto strict = check_strict(env.team_rm(), locals);
  if (!strict.bisimilar)
    throw CriterionRejected("the strict decomposition criterion does not hold; counterexample: " +
                                format_events(strict.counterexample),
                            names_of(strict.counterexample));
  std::mt19937_64 rng(cfg.seed), eval_rng(cfg.seed ^ kEvalSalt);
  DecentralizedResult res{fresh_policies(env, cfg), fresh_stats(env), {}};
  std::vector<Learner> learners;
  for (std::size_t i = 0; i < env.num_agents(); ++i)
    learners.emplace_back(env, static_cast<int>(i), trivial_causal(env.projection(static_cast<int>(i)).machine.alphabet()));

  if (cfg.eval_every) res.curve.push_back({0, evaluate_decentralized(env, res.policies, cfg, eval_rng)});
  std::size_t t = 0;
  while (t < cfg.total_steps) {
    // One episode: every agent restarts, completed agents sit out.
    const int draw = env.draw(rng);
    std::vector<bool> complete(env.num_agents(), false);
    for (auto& L : learners) {
      L.reset(env, rng);
      L.draw = draw;
    }
    for (auto& s : res.stats) ++s.episodes;
    for (std::size_t k = 0; k < cfg.episode_steps && t < cfg.total_steps; ++k) {
      for (std::size_t i = 0; i < learners.size(); ++i) {
        if (complete[i]) continue;
        if (learner_step(env, cfg, learners[i], res.policies[i], res.stats[i], false, rng).terminal) complete[i] = true;
      }
      ++t;
      if (cfg.eval_every && t % cfg.eval_every == 0)
        res.curve.push_back({t, evaluate_decentralized(env, res.policies, cfg, eval_rng)});
      if (std::all_of(complete.begin(), complete.end(), [](bool b) { return b; })) break;
    }
  }
  return res;
}

DecentralizedResult causal_dqprm_train(const TeamEnv& env, const TrainConfig& cfg, const Tlcd& team_tlcd,
                                       const std::vector<std::optional<Tlcd>>& agent_tlcds) {
  cfg.validate();
  if (!agent_tlcds.empty() && agent_tlcds.size() != env.num_agents())
    throw InvalidInput("expected one optional TL-CD per agent");
  const auto locals = locals_of(env);
  const auto gate = compile_tlcd(team_tlcd);
  const auto relaxed = check_relaxed(env.team_rm(), locals, gate.dfa);
  if (!relaxed.bisimilar)
    throw CriterionRejected("the relaxed decomposition criterion does not hold; counterexample: " +
                                format_events(relaxed.counterexample),
                            names_of(relaxed.counterexample));

  std::mt19937_64 rng(cfg.seed), eval_rng(cfg.seed ^ kEvalSalt);
  DecentralizedResult res{fresh_policies(env, cfg), fresh_stats(env), {}};
  std::vector<Learner> learners;
  for (std::size_t i = 0; i < env.num_agents(); ++i) {
    const auto& local_rm = env.projection(static_cast<int>(i)).machine;
    const bool has = !agent_tlcds.empty() && agent_tlcds[i].has_value();
    learners.emplace_back(env, static_cast<int>(i), has ? compile_tlcd(*agent_tlcds[i]) : trivial_causal(local_rm.alphabet()));
  }
  for (std::size_t i = 0; i < learners.size(); ++i) {
    learners[i].reset(env, rng);
    ++res.stats[i].episodes;
  }
  if (cfg.eval_every) res.curve.push_back({0, evaluate_decentralized(env, res.policies, cfg, eval_rng)});
  for (std::size_t t = 1; t <= cfg.total_steps; ++t) {
    for (std::size_t i = 0; i < learners.size(); ++i) {
      const auto out = learner_step(env, cfg, learners[i], res.policies[i], res.stats[i], true, rng);
      if (out.terminal || out.short_circuit || learners[i].episode_t >= cfg.episode_steps) {
        learners[i].reset(env, rng);
        ++res.stats[i].episodes;
      }
    }
    if (cfg.eval_every && t % cfg.eval_every == 0)
      res.curve.push_back({t, evaluate_decentralized(env, res.policies, cfg, eval_rng)});
  }
  return res;
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t joint_cells(const CentralizedPolicy& pol, const std::vector<int>& s) {
  std::uint64_t idx = 0, mul = 1;
  for (std::size_t i = 0; i < s.size(); ++i) {
    idx += static_cast<std::uint64_t>(s[i]) * mul;
    mul *= pol.radix[i];
  }
  return idx;
}

std::size_t aug_states(const TeamEnv& env, const CentralizedPolicy& pol) {
  return pol.tilde ? pol.tilde->num_pairs() : env.team_rm().num_states();
}

std::uint64_t central_row(const TeamEnv& env, const CentralizedPolicy& pol, const std::vector<int>& s, StateId aug) {
  return joint_cells(pol, s) * aug_states(env, pol) + aug;
}

std::vector<Action> decode(std::size_t a, std::size_t n) {
  std::vector<Action> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = kActions[a % kNumActions];
    a /= kNumActions;
  }
  return out;
}

struct CentralStep {
  TeamStep st;
  StateId aug;
  double reward;
};

// Team step plus the causal DFA; `aug` is the product pair (or the team state).
CentralStep central_step(const TeamEnv& env, const CentralizedPolicy& pol, const std::vector<int>& s, StateId aug,
                         const std::vector<Action>& acts, int draw) {
  const StateId u = pol.tilde ? pol.tilde->pair(aug).first : aug;
  CentralStep out{env.team_step(s, u, acts, draw), aug, 0.0};
  if (!pol.tilde) {
    out.aug = out.st.u;
    out.reward = out.st.reward;
    return out;
  }
  StateId p = aug;
  for (auto e : out.st.label) {
    auto d = pol.tilde->alphabet().index_of(env.events()[e].name());
    if (!d) continue;
    out.reward += pol.tilde->reward(p, *d);
    p = pol.tilde->next(p, *d);
  }
  if (pol.tilde->pair(p).first != out.st.u)
    throw InvariantViolation("team RM and causal product disagree on the team state");
  out.aug = p;
  return out;
}

double evaluate_centralized(const TeamEnv& env, const CentralizedPolicy& pol, const TrainConfig& cfg,
                            std::mt19937_64& rng) {
  std::vector<double> steps;
  for (std::size_t k = 0; k < cfg.eval_trials; ++k) {
    const auto r = execute_centralized(env, pol, cfg.episode_steps, rng);
    steps.push_back(r.success ? static_cast<double>(r.steps) : static_cast<double>(cfg.episode_steps));
  }
  return nearest_rank_median(steps);
}

}  // namespace

CentralizedPolicy make_centralized_policy(const TeamEnv& env, const TrainConfig& cfg,
                                          const std::optional<Tlcd>& tlcd) {
  std::optional<TildeRm> tilde;
  std::optional<ValueTable> values;
  if (tlcd) {
    tilde.emplace(env.team_rm(), compile_tlcd(*tlcd));
    values.emplace(value_iteration(*tilde));
  }
  std::vector<std::uint64_t> radix;
  std::uint64_t joint = 1;
  for (std::size_t i = 0; i < env.num_agents(); ++i) {
    radix.push_back(env.agent(static_cast<int>(i)).num_cells());
    joint *= radix.back();
  }
  std::size_t actions = 1;
  for (std::size_t i = 0; i < env.num_agents(); ++i) actions *= kNumActions;
  const std::uint64_t aug = tilde ? tilde->num_pairs() : env.team_rm().num_states();
  return CentralizedPolicy{QPolicy(joint * aug, actions, cfg.alpha, cfg.gamma, cfg.epsilon), std::move(tilde),
                           std::move(values), std::move(radix)};
}

CentralizedResult centralized_train(const TeamEnv& env, const TrainConfig& cfg, const std::optional<Tlcd>& tlcd) {
  cfg.validate();
  CentralizedResult res{make_centralized_policy(env, cfg, tlcd), {}, {}};
  auto& pol = res.policy;
  res.stats.steps_in_state.assign(env.team_rm().num_states(), 0);

  std::mt19937_64 rng(cfg.seed), eval_rng(cfg.seed ^ kEvalSalt);
  auto s = env.initial_state();
  StateId a_state = pol.tilde ? pol.tilde->initial() : env.team_rm().initial();
  int draw = env.draw(rng);
  std::size_t episode_t = 0;
  ++res.stats.episodes;
  auto reset = [&] {
    s = env.initial_state();
    a_state = pol.tilde ? pol.tilde->initial() : env.team_rm().initial();
    draw = env.draw(rng);
    episode_t = 0;
    ++res.stats.episodes;
  };
  if (cfg.eval_every) res.curve.push_back({0, evaluate_centralized(env, pol, cfg, eval_rng)});
  for (std::size_t t = 1; t <= cfg.total_steps; ++t) {
    const std::uint64_t row = central_row(env, pol, s, a_state);
    const std::size_t a = pol.q.explore(row, rng);
    const auto step = central_step(env, pol, s, a_state, decode(a, env.num_agents()), draw);
    bool shorted = false;
    if (pol.values && !step.st.done && pol.values->at(step.aug) <= ValueTable::kTolerance) {
      shorted = true;
      ++res.stats.short_circuits;
      ++res.stats.short_circuit_pairs[pol.tilde->pair(step.aug)];
    }
    pol.q.update(row, a, step.reward, central_row(env, pol, step.st.s, step.aug), step.st.done || shorted);
    ++res.stats.steps_in_state[pol.tilde ? pol.tilde->pair(a_state).first : a_state];
    ++res.stats.steps;
    ++episode_t;
    s = step.st.s;
    a_state = step.aug;
    if (step.st.done || shorted || episode_t >= cfg.episode_steps) reset();
    if (cfg.eval_every && t % cfg.eval_every == 0) res.curve.push_back({t, evaluate_centralized(env, pol, cfg, eval_rng)});
  }
  return res;
}

// ---------------------------------------------------------------------------

ExecResult execute_team(const TeamEnv& env, const std::vector<QPolicy>& policies, std::size_t max_steps,
                        std::mt19937_64& rng, int draw) {
  const std::size_t n = env.num_agents();
  if (policies.size() != n) throw InvalidInput("one policy per agent is required");
  if (draw < 0) draw = env.draw(rng);
  if (draw >= static_cast<int>(env.num_draws())) throw InvalidInput("episode draw out of range");
  const auto& team = env.team_rm();
  std::vector<const RewardMachine*> rms;
  for (std::size_t i = 0; i < n; ++i) rms.push_back(&env.projection(static_cast<int>(i)).machine);

  ExecResult res;
  auto s = env.initial_state();
  std::vector<StateId> u(n);
  for (std::size_t i = 0; i < n; ++i) u[i] = rms[i]->initial();
  StateId tu = team.initial();
  std::vector<int> count(env.events().size());
  auto all_local = [&] {
    for (std::size_t i = 0; i < n; ++i)
      if (!rms[i]->is_terminal(u[i])) return false;
    return true;
  };
  while (res.steps < max_steps && !team.is_terminal(tu) && !env.team_dead(tu) && !all_local()) {
    std::fill(count.begin(), count.end(), 0);
    std::vector<int> s2(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& ag = env.agent(static_cast<int>(i));
      Action a = Action::Stay;
      if (!rms[i]->is_terminal(u[i]))
        a = static_cast<Action>(policies[i].greedy(local_row(env, static_cast<int>(i), s[i], u[i]), rng));
      s2[i] = ag.step(s[i], u[i], a);
      const int l = ag.label(draw, s[i], u[i], a);
      if (l >= 0) ++count[l];
    }
    for (EventIndex e = 0; e < env.events().size(); ++e) {
      if (!count[e] || count[e] != static_cast<int>(env.sharers(e).size())) continue;
      res.events.push_back(env.events()[e]);
      for (std::size_t i = 0; i < n; ++i)
        if (auto li = env.local_event(static_cast<int>(i), e); li >= 0)
          u[i] = rms[i]->next_or_stay(u[i], static_cast<EventIndex>(li));
      if (auto ti = env.team_event(e); ti >= 0) tu = team.next_or_stay(tu, static_cast<EventIndex>(ti));
    }
    s = std::move(s2);
    ++res.steps;
  }
  res.success = team.is_terminal(tu);
  for (std::size_t i = 0; i < n; ++i) res.local_accepted.push_back(rms[i]->is_terminal(u[i]));
  return res;
}

ExecResult execute_centralized(const TeamEnv& env, const CentralizedPolicy& pol, std::size_t max_steps,
                               std::mt19937_64& rng, int draw) {
  if (draw < 0) draw = env.draw(rng);
  ExecResult res;
  auto s = env.initial_state();
  StateId a_state = pol.tilde ? pol.tilde->initial() : env.team_rm().initial();
  bool done = false;
  while (res.steps < max_steps && !done) {
    const std::size_t a = pol.q.greedy(central_row(env, pol, s, a_state), rng);
    const auto step = central_step(env, pol, s, a_state, decode(a, env.num_agents()), draw);
    for (auto e : step.st.label) res.events.push_back(env.events()[e]);
    s = step.st.s;
    a_state = step.aug;
    done = step.st.done;
    ++res.steps;
  }
  const StateId u = pol.tilde ? pol.tilde->pair(a_state).first : a_state;
  res.success = env.team_rm().is_terminal(u);
  return res;
}

}  // namespace cdq
