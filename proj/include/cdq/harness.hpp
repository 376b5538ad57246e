#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cdq/envs.hpp"
#include "cdq/training.hpp"

namespace cdq {

enum class Controller { Decentralized, Centralized };

struct Mode {
  Controller controller = Controller::Decentralized;
  bool tlcd = true;
  friend bool operator==(const Mode&, const Mode&) = default;
};

/// Accepts decentralized-tlcd, decentralized-no-tlcd, centralized-tlcd and
/// centralized-no-tlcd.
Mode parse_mode(std::string_view text);
std::string mode_name(Mode m);

struct ExperimentConfig {
  std::filesystem::path task;
  Mode mode;
  std::size_t runs = 10;
  std::vector<std::uint64_t> seeds;  // explicit list; empty means seed_base + k
  std::uint64_t seed_base = 0;
  TrainConfig train;
  std::filesystem::path output_dir;  // empty: CDQ_OUTPUT_DIR, then "results"
  std::size_t workers = 1;
  std::size_t success_episodes = 100;  // greedy episodes after training, per run

  std::vector<std::uint64_t> seed_list() const;
  void validate(const TaskSpec& task) const;  // InvalidInput
};

/// Output directory precedence: explicit flag, CDQ_OUTPUT_DIR, "results".
std::filesystem::path resolve_output_dir(const std::filesystem::path& flag);

/// A trained controller of either kind.
struct TrainedPolicy {
  Mode mode;
  std::vector<QPolicy> decentralized;
  std::optional<CentralizedPolicy> centralized;
};

struct TrainedRun {
  TrainedPolicy policy;
  std::vector<EvalPoint> curve;
  std::vector<AgentStats> stats;  // per agent; one entry for centralized
};

/// Checks the decomposition criterion `mode` relies on. Decentralized without
/// a TL-CD uses the strict criterion when it holds and otherwise the relaxed
/// one with the team TL-CD (agent TL-CDs are then ignored). Throws
/// CriterionRejected or InvalidInput.
void check_mode(const TaskSpec& task, const TeamEnv& env, Mode mode);

TrainedRun train_once(const TaskSpec& task, const TeamEnv& env, Mode mode, const TrainConfig& cfg);

struct SuccessEstimate {
  std::size_t episodes = 0;
  double team = 0.0;
  std::vector<double> agents;  // local acceptance rates (decentralized only)
  std::size_t equivalence_violations = 0;  // team acceptance != all local acceptances
};

SuccessEstimate estimate_success(const TeamEnv& env, const TrainedPolicy& policy, std::size_t episodes,
                                 std::size_t max_steps, std::uint64_t seed);

/// Team success against max(0, sum V_i - (N-1)) and min V_i, widened by
/// three standard errors (largest binomial error among the estimates).
struct FrechetCheck {
  double lower = 0.0, upper = 1.0, sigma = 0.0;
  bool holds = false;
};
FrechetCheck frechet_check(const SuccessEstimate& est);

struct RunMetrics {
  std::uint64_t seed = 0;
  std::vector<EvalPoint> curve;
  SuccessEstimate success;
  std::vector<AgentStats> stats;
};

struct PercentilePoint {
  std::size_t step = 0;
  double p25 = 0.0, p50 = 0.0, p75 = 0.0;
};

struct ExperimentResult {
  std::vector<RunMetrics> runs;  // surviving runs in seed order
  std::vector<PercentilePoint> aggregate;
  std::size_t discarded = 0;
};

/// Nearest-rank percentile: the ceil(pct/100 * n)-th smallest value.
double nearest_rank(std::vector<double> values, double pct);

/// Per-step 25/50/75 percentiles over runs; all curves must share their steps.
std::vector<PercentilePoint> aggregate_curves(const std::vector<std::vector<EvalPoint>>& curves);

/// Trains every seed (concurrently with `workers` threads) and aggregates.
/// Runs failing with an unexpected error are discarded with a warning on
/// `log`; criterion rejections propagate before any training starts.
ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr);

/// First evaluation step whose median is at most `threshold`.
std::optional<std::size_t> convergence_step(const std::vector<PercentilePoint>& points, double threshold = 200.0);

void emit_csv(const std::vector<PercentilePoint>& points, const std::filesystem::path& path);
std::string format_csv(const std::vector<PercentilePoint>& points);
std::vector<PercentilePoint> parse_csv(std::string_view text);  // ParseError
std::vector<PercentilePoint> read_csv(const std::filesystem::path& path);

struct PlotSeries {
  std::string label;
  std::vector<PercentilePoint> points;
};

/// SVG with one median line and interquartile band per series. Series must be
/// non-empty and share their step axis.
std::string render_plot(const std::vector<PlotSeries>& series, double y_cap = 1000.0, const std::string& title = "");
void emit_plot(const std::vector<PlotSeries>& series, const std::filesystem::path& path, double y_cap = 1000.0,
               const std::string& title = "");

/// JSON policy files. Only rows with a non-zero entry are stored.
std::string policy_to_json(const TrainedPolicy& policy, const TaskSpec& task, const TrainConfig& cfg);
TrainedPolicy policy_from_json(std::string_view text, const TaskSpec& task, const TeamEnv& env);

/// Manifest reproducing an experiment: task, mode, seeds and training config.
std::string manifest_to_json(const ExperimentConfig& cfg);
ExperimentConfig manifest_from_json(std::string_view text);

}  // namespace cdq
