#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cdq/causal.hpp"
#include "cdq/envs.hpp"
#include "cdq/tlcd.hpp"

namespace cdq {

/// Tabular Q function over (row, action). Small tables are dense; large ones
/// (joint spaces) only store rows that were written.
class QPolicy {
 public:
  QPolicy(std::uint64_t rows, std::size_t actions, double alpha, double gamma, double epsilon);

  std::uint64_t rows() const noexcept { return rows_; }
  std::size_t actions() const noexcept { return actions_; }
  double alpha() const noexcept { return alpha_; }
  double gamma() const noexcept { return gamma_; }
  double epsilon() const noexcept { return epsilon_; }
  bool dense() const noexcept { return dense_; }
  std::size_t stored_rows() const noexcept;

  double q(std::uint64_t row, std::size_t a) const;
  double max_q(std::uint64_t row) const;
  // Ties are broken uniformly at random.
  std::size_t greedy(std::uint64_t row, std::mt19937_64& rng) const;
  std::size_t explore(std::uint64_t row, std::mt19937_64& rng) const;  // epsilon-greedy
  bool all_zero() const;
  // Visits stored rows in ascending row order.
  void for_each_row(const std::function<void(std::uint64_t, std::span<const double>)>& fn) const;
  void set(std::uint64_t row, std::size_t a, double value);

  // Q <- (1-a) Q + a (r + g max Q(next)); no bootstrap when `terminal`.
  void update(std::uint64_t row, std::size_t a, double r, std::uint64_t next_row, bool terminal);

 private:
  const double* find(std::uint64_t row) const;
  double* slot(std::uint64_t row);

  std::uint64_t rows_;
  std::size_t actions_;
  double alpha_, gamma_, epsilon_;
  bool dense_;
  std::vector<double> table_;
  std::unordered_map<std::uint64_t, std::size_t> sparse_;
};

void q_update(QPolicy& pol, std::uint64_t row, std::size_t a, double r, std::uint64_t next_row, bool terminal);

struct TrainConfig {
  std::size_t total_steps = 200000;  // flat budget: numEpisodes * numSteps
  std::size_t episode_steps = 1000;  // numSteps
  double p_sync = 0.3;
  double alpha = 0.1;
  double gamma = 0.9;
  double epsilon = 0.15;
  std::uint64_t seed = 0;
  std::size_t eval_every = 1000;  // 0 disables evaluation
  std::size_t eval_trials = 10;
  void validate() const;
};

struct EvalPoint {
  std::size_t step;
  double median_steps;  // steps to completion, failures count as episode_steps
};

struct AgentStats {
  std::size_t steps = 0;
  std::size_t episodes = 0;
  std::size_t short_circuits = 0;
  std::vector<std::size_t> steps_in_state;  // by local RM state (before the step)
  std::map<std::pair<StateId, StateId>, std::size_t> short_circuit_pairs;  // (u, q) -> count
};

/// Decentralized policies (one per agent, rows = free cell x local RM state).
struct DecentralizedResult {
  std::vector<QPolicy> policies;
  std::vector<AgentStats> stats;
  std::vector<EvalPoint> curve;
};

/// Joint controller over joint cell x team RM state (x causal DFA state).
struct CentralizedPolicy {
  QPolicy q;
  std::optional<TildeRm> tilde;
  std::optional<ValueTable> values;
  std::vector<std::uint64_t> radix;  // per-agent cell counts
};

/// Fresh all-zero joint controller; with a TL-CD the rows range over the
/// product of the team RM and its causal DFA.
CentralizedPolicy make_centralized_policy(const TeamEnv& env, const TrainConfig& cfg,
                                          const std::optional<Tlcd>& tlcd = std::nullopt);

struct CentralizedResult {
  CentralizedPolicy policy;
  AgentStats stats;  // steps_in_state indexed by team RM state
  std::vector<EvalPoint> curve;
};

/// Independent per-agent learners over the projected RMs (nested loops).
/// Throws CriterionRejected unless the strict criterion holds.
DecentralizedResult dqprm_train(const TeamEnv& env, const TrainConfig& cfg);

/// Flat-budget per-agent learners over (u, q) products with short-circuit
/// resets. Throws CriterionRejected unless the relaxed criterion holds with
/// the team TL-CD. Agents without a TL-CD use the one-state DFA.
DecentralizedResult causal_dqprm_train(const TeamEnv& env, const TrainConfig& cfg, const Tlcd& team_tlcd,
                                       const std::vector<std::optional<Tlcd>>& agent_tlcds);

CentralizedResult centralized_train(const TeamEnv& env, const TrainConfig& cfg,
                                    const std::optional<Tlcd>& tlcd = std::nullopt);

struct ExecResult {
  bool success = false;  // team RM accepted
  std::size_t steps = 0;
  std::vector<bool> local_accepted;  // per agent (decentralized only)
  EventSeq events;
};

/// Greedy execution with true synchronization: a shared event advances the
/// local RMs only when every sharer emits it. Agents whose local task is
/// complete stay put. `draw` < 0 samples the episode condition.
ExecResult execute_team(const TeamEnv& env, const std::vector<QPolicy>& policies, std::size_t max_steps,
                        std::mt19937_64& rng, int draw = -1);
ExecResult execute_centralized(const TeamEnv& env, const CentralizedPolicy& policy, std::size_t max_steps,
                               std::mt19937_64& rng, int draw = -1);

/// Row of agent i's table for (free cell s, local RM state u).
inline std::uint64_t local_row(const TeamEnv& env, int agent, int s, StateId u) {
  return static_cast<std::uint64_t>(s) * env.agent(agent).num_rm_states() + u;
}

}  // namespace cdq
