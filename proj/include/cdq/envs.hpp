#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cdq/projection.hpp"
#include "cdq/rm_core.hpp"
#include "cdq/tlcd.hpp"

namespace cdq {

enum class Action : std::uint8_t { Up, Down, Left, Right, Stay };
inline constexpr std::size_t kNumActions = 5;
inline constexpr std::array<Action, kNumActions> kActions{Action::Up, Action::Down, Action::Left, Action::Right,
                                                          Action::Stay};
const char* action_name(Action a);

using Cell = std::int32_t;  // y * width + x

enum class Trigger { At, Leave };

struct EventSpec {
  std::string event;
  std::vector<int> agents;  // 0-based
  Trigger trigger = Trigger::At;
  std::string when;         // episode draw that must hold, empty = always
  bool gated = true;        // RM-local events fire only where the local RM defines them
};

struct BarrierSpec {
  std::string event;        // opens once the local RM has necessarily read this event
  std::vector<int> agents;  // other agents treat the cell as a wall
};

struct CellInfo {
  char symbol = '.';
  bool wall = false;
  std::optional<Action> ramp;  // one-way cell: enter and leave only in this direction
  std::vector<EventSpec> events;
  std::optional<BarrierSpec> barrier;
  std::string tag;
};

/// Legend lines:
///   c = event E [agents 1,2] [at|leave] [when D] [ungated] [tag T]
///   c = barrier E agents 2 [tag T]
///   c = floor [tag T]
/// Built in: `#` wall, `.` floor, digits = agent start cells, `> < ^ v` ramps.
struct GridSpec {
  int width = 0, height = 0;
  std::vector<CellInfo> cells;
  std::vector<Cell> starts;             // per agent
  std::vector<std::string> draws;       // episode conditions, drawn uniformly
  std::map<Cell, std::string> special;  // tagged cells

  Cell cell(int x, int y) const { return y * width + x; }
  int x_of(Cell c) const { return c % width; }
  int y_of(Cell c) const { return c / width; }
  std::optional<Cell> neighbor(Cell c, Action a) const;
  // Geometry only (walls, ramps, bounds); barriers are handled per agent.
  bool can_move(Cell from, Action a) const;
  std::vector<std::pair<Cell, Cell>> blocked_edges() const;
  std::vector<std::pair<Cell, Cell>> one_way_edges() const;
  std::optional<Cell> find_tag(const std::string& tag) const;
};

GridSpec parse_layout(std::string_view text);

class TeamEnv;

/// One agent's view: dynamics and labels compiled into tables indexed by the
/// local RM state, the episode draw, the free-cell index and the action.
class LocalEnv {
 public:
  LocalEnv(std::shared_ptr<const GridSpec> grid, int agent, const RewardMachine& local,
           const EventAlphabet& events);

  int agent() const noexcept { return agent_; }
  std::size_t num_cells() const noexcept { return cells_.size(); }  // free cells
  std::size_t num_rm_states() const noexcept { return num_u_; }
  int start() const noexcept { return start_; }
  Cell cell_of(int s) const { return cells_.at(s); }
  std::optional<int> state_of(Cell c) const;

  int step(int s, StateId u, Action a) const {
    return next_[(static_cast<std::size_t>(u) * cells_.size() + s) * kNumActions + static_cast<int>(a)];
  }
  // Event index (in the env event alphabet) emitted on this move, or -1.
  int label(int draw, int s, StateId u, Action a) const {
    return label_[((static_cast<std::size_t>(draw) * num_u_ + u) * cells_.size() + s) * kNumActions +
                  static_cast<int>(a)];
  }
  bool barrier_open(StateId u, Cell c) const;

 private:
  std::shared_ptr<const GridSpec> grid_;
  int agent_;
  std::size_t num_u_;
  int start_;
  std::vector<Cell> cells_;
  std::vector<int> state_of_cell_;
  std::vector<std::vector<bool>> open_;  // per barrier cell index into grid, per u
  std::map<Cell, std::size_t> barrier_slot_;
  std::vector<int> next_;
  std::vector<std::int16_t> label_;
};

struct TeamStep {
  std::vector<int> s;
  StateId u;
  double reward;
  bool done;
  std::vector<EventIndex> label;  // env event indices, ascending
};

class TeamEnv {
 public:
  TeamEnv(GridSpec grid, RewardMachine team, std::vector<EventAlphabet> locals,
          std::vector<EventAlphabet> observations = {});

  std::size_t num_agents() const noexcept { return agents_.size(); }
  const GridSpec& grid() const noexcept { return *grid_; }
  const RewardMachine& team_rm() const noexcept { return team_; }
  const EventAlphabet& events() const noexcept { return events_; }
  const EventAlphabet& local_alphabet(int i) const { return locals_.at(i); }
  const ProjectedRm& projection(int i) const { return projections_.at(i); }
  const LocalEnv& agent(int i) const { return agents_.at(i); }
  const std::vector<int>& sharers(EventIndex e) const { return sharers_.at(e); }
  // Index of an env event in agent i's local RM / the team RM, or -1.
  std::int64_t local_event(int i, EventIndex e) const { return local_idx_[i][e]; }
  std::int64_t team_event(EventIndex e) const { return team_idx_[e]; }
  bool team_dead(StateId u) const { return !team_live_[u]; }
  std::size_t num_draws() const { return std::max<std::size_t>(1, grid_->draws.size()); }
  int draw(std::mt19937_64& rng) const;
  std::vector<int> initial_state() const;

  /// Joint step with unanimity over sharers; agents read their local view of
  /// the team RM state. `verify` checks label-order independence.
  TeamStep team_step(const std::vector<int>& s, StateId u, const std::vector<Action>& a, int draw,
                     bool verify = false) const;

 private:
  std::shared_ptr<const GridSpec> grid_;
  RewardMachine team_;
  std::vector<EventAlphabet> locals_;
  EventAlphabet events_;
  std::vector<ProjectedRm> projections_;
  std::vector<LocalEnv> agents_;
  std::vector<std::vector<int>> sharers_;
  std::vector<std::vector<std::int64_t>> local_idx_;
  std::vector<std::int64_t> team_idx_;
  std::vector<bool> team_live_;
};

/// Laboratory accident: returns the draw's name ("fire" or "radiation").
std::string draw_accident(const TeamEnv& env, std::mt19937_64& rng);

/// Agents 2 and 3 both on the red button cell.
bool buttons_red_press(const TeamEnv& env, const std::vector<int>& s);

struct TaskSpec {
  std::string name;
  std::filesystem::path dir;
  std::filesystem::path layout_path, rm_path;
  GridSpec grid;
  RewardMachine team;
  std::vector<EventAlphabet> locals;
  std::vector<EventAlphabet> observations;
  std::optional<Tlcd> team_tlcd;
  std::vector<std::optional<Tlcd>> agent_tlcds;
  double p_sync = 0.3;
};

/// key = value lines: name, layout, rm, local.N, observe.N, tlcd,
/// tlcd.agents, tlcd.N, p_sync. Paths are relative to the task file.
TaskSpec load_task(const std::filesystem::path& path);
TeamEnv make_env(const TaskSpec& task);

}  // namespace cdq
