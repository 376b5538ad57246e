#include "cdq/envs.hpp"

#include <algorithm>
#include <queue>
#include <set>

#include "cdq/composition.hpp"
#include "cdq/errors.hpp"
#include "text_util.hpp"

namespace cdq {

const char* action_name(Action a) {
  switch (a) {
    case Action::Up: return "up";
    case Action::Down: return "down";
    case Action::Left: return "left";
    case Action::Right: return "right";
    case Action::Stay: return "stay";
  }
  return "?";
}

std::optional<Cell> GridSpec::neighbor(Cell c, Action a) const {
  int x = x_of(c), y = y_of(c);
  switch (a) {
    case Action::Up: --y; break;
    case Action::Down: ++y; break;
    case Action::Left: --x; break;
    case Action::Right: ++x; break;
    case Action::Stay: break;
  }
  if (x < 0 || y < 0 || x >= width || y >= height) return std::nullopt;
  return cell(x, y);
}

bool GridSpec::can_move(Cell from, Action a) const {
  if (a == Action::Stay) return true;
  const auto to = neighbor(from, a);
  if (!to || cells[*to].wall) return false;
  if (cells[from].ramp && *cells[from].ramp != a) return false;
  if (cells[*to].ramp && *cells[*to].ramp != a) return false;
  return true;
}

std::vector<std::pair<Cell, Cell>> GridSpec::blocked_edges() const {
  std::vector<std::pair<Cell, Cell>> out;
  for (Cell c = 0; c < static_cast<Cell>(cells.size()); ++c) {
    if (cells[c].wall) continue;
    for (Action a : {Action::Right, Action::Down}) {
      auto n = neighbor(c, a);
      if (!n || cells[*n].wall) continue;
      const Action back = a == Action::Right ? Action::Left : Action::Up;
      if (!can_move(c, a) && !can_move(*n, back)) out.emplace_back(c, *n);
    }
  }
  return out;
}

std::vector<std::pair<Cell, Cell>> GridSpec::one_way_edges() const {
  std::vector<std::pair<Cell, Cell>> out;
  for (Cell c = 0; c < static_cast<Cell>(cells.size()); ++c) {
    if (cells[c].wall) continue;
    for (Action a : {Action::Up, Action::Down, Action::Left, Action::Right}) {
      auto n = neighbor(c, a);
      if (!n || cells[*n].wall || !can_move(c, a)) continue;
      const Action back = a == Action::Up ? Action::Down : a == Action::Down ? Action::Up
                        : a == Action::Left ? Action::Right : Action::Left;
      if (!can_move(*n, back)) out.emplace_back(c, *n);
    }
  }
  return out;
}

std::optional<Cell> GridSpec::find_tag(const std::string& tag) const {
  for (const auto& [c, t] : special)
    if (t == tag) return c;
  return std::nullopt;
}

namespace {

std::vector<int> parse_agents(const std::string& list, std::size_t line) {
  std::vector<int> out;
  for (const auto& tok : detail::split_tokens(list, ",")) {
    int v = 0;
    try {
      v = std::stoi(tok);
    } catch (...) {
      throw ParseError("bad agent id '" + tok + "'", line);
    }
    if (v < 1) throw ParseError("agent ids start at 1", line);
    out.push_back(v - 1);
  }
  if (out.empty()) throw ParseError("empty agent list", line);
  return out;
}

bool builtin(char c) {
  return c == '#' || c == '.' || c == '>' || c == '<' || c == '^' || c == 'v' || (c >= '1' && c <= '9');
}

}  // namespace

GridSpec parse_layout(std::string_view text) {
  GridSpec g;
  std::map<char, CellInfo> legend;
  std::vector<std::string> rows;
  std::vector<std::size_t> row_lines;
  bool in_grid = false;
  std::size_t line_no = 0;
  for (const auto& raw : detail::split_lines(text)) {
    ++line_no;
    if (in_grid) {
      std::string row = raw;
      while (!row.empty() && (row.back() == ' ' || row.back() == '\r' || row.back() == '\t')) row.pop_back();
      if (row.empty()) continue;
      rows.push_back(row);
      row_lines.push_back(line_no);
      continue;
    }
    const std::string line = detail::trim(detail::strip_comment(raw));
    if (line.empty() || line == "legend:") continue;
    if (line == "grid:") {
      in_grid = true;
      continue;
    }
    if (line.rfind("draws:", 0) == 0) {
      g.draws = detail::split_tokens(line.substr(6), " \t,");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos || detail::trim(line.substr(0, eq)).size() != 1)
      throw ParseError("expected '<char> = ...' legend entry", line_no);
    const char c = detail::trim(line.substr(0, eq))[0];
    if (builtin(c)) throw ParseError(std::string("'") + c + "' is reserved", line_no);
    const auto toks = detail::split_tokens(line.substr(eq + 1), " \t");
    if (toks.empty()) throw ParseError("empty legend entry", line_no);
    CellInfo& info = legend[c];
    info.symbol = c;
    std::size_t i = 1;
    auto need = [&](const char* what) -> const std::string& {
      if (i >= toks.size()) throw ParseError(std::string("missing ") + what, line_no);
      return toks[i++];
    };
    EventSpec ev;
    BarrierSpec bar;
    const std::string kind = toks[0];
    if (kind == "event") {
      ev.event = need("event name");
    } else if (kind == "barrier") {
      bar.event = need("event name");
    } else if (kind != "floor") {
      throw ParseError("unknown legend kind '" + kind + "'", line_no);
    }
    while (i < toks.size()) {
      const std::string& key = toks[i++];
      if (key == "agents") {
        const auto ids = parse_agents(need("agent list"), line_no);
        (kind == "barrier" ? bar.agents : ev.agents) = ids;
      } else if (key == "tag") {
        info.tag = need("tag");
      } else if (kind == "event" && key == "at") {
        ev.trigger = Trigger::At;
      } else if (kind == "event" && key == "leave") {
        ev.trigger = Trigger::Leave;
      } else if (kind == "event" && key == "when") {
        ev.when = need("draw name");
      } else if (kind == "event" && key == "ungated") {
        ev.gated = false;
      } else {
        throw ParseError("unexpected '" + key + "' in legend entry", line_no);
      }
    }
    if (kind == "event") {
      if (ev.agents.empty()) throw ParseError("event entry needs 'agents'", line_no);
      info.events.push_back(ev);
    } else if (kind == "barrier") {
      if (bar.agents.empty()) throw ParseError("barrier entry needs 'agents'", line_no);
      if (info.barrier) throw ParseError("cell already has a barrier", line_no);
      info.barrier = bar;
    }
  }
  if (rows.empty()) throw ParseError("layout has no grid", line_no);
  g.height = static_cast<int>(rows.size());
  g.width = static_cast<int>(rows[0].size());
  std::map<int, Cell> starts;
  for (int y = 0; y < g.height; ++y) {
    if (static_cast<int>(rows[y].size()) != g.width) throw ParseError("grid rows differ in width", row_lines[y]);
    for (int x = 0; x < g.width; ++x) {
      const char c = rows[y][x];
      CellInfo info;
      info.symbol = c;
      switch (c) {
        case '#': info.wall = true; break;
        case '.': break;
        case '>': info.ramp = Action::Right; break;
        case '<': info.ramp = Action::Left; break;
        case '^': info.ramp = Action::Up; break;
        case 'v': info.ramp = Action::Down; break;
        default:
          if (c >= '1' && c <= '9') {
            if (!starts.emplace(c - '1', g.cell(x, y)).second)
              throw ParseError(std::string("agent ") + c + " placed twice", row_lines[y], x + 1);
          } else if (auto it = legend.find(c); it != legend.end()) {
            info = it->second;
          } else {
            throw ParseError(std::string("unknown grid symbol '") + c + "'", row_lines[y], x + 1);
          }
      }
      if (!info.tag.empty()) g.special[g.cell(x, y)] = info.tag;
      g.cells.push_back(info);
    }
  }
  for (std::size_t i = 0; i < starts.size(); ++i) {
    auto it = starts.find(static_cast<int>(i));
    if (it == starts.end()) throw ParseError("agent start cells must be numbered 1..N", line_no);
    g.starts.push_back(it->second);
  }
  if (g.starts.empty()) throw ParseError("no agent start cells", line_no);
  return g;
}

// ---------------------------------------------------------------------------

LocalEnv::LocalEnv(std::shared_ptr<const GridSpec> grid, int agent, const RewardMachine& local,
                   const EventAlphabet& events)
    : grid_(std::move(grid)), agent_(agent), num_u_(local.num_states()) {
  const GridSpec& g = *grid_;
  auto listed = [&](const std::vector<int>& ids) { return std::find(ids.begin(), ids.end(), agent) != ids.end(); };
  state_of_cell_.assign(g.cells.size(), -1);
  for (Cell c = 0; c < static_cast<Cell>(g.cells.size()); ++c) {
    const auto& info = g.cells[c];
    if (info.wall || (info.barrier && !listed(info.barrier->agents))) continue;
    state_of_cell_[c] = static_cast<int>(cells_.size());
    cells_.push_back(c);
  }
  if (agent < 0 || agent >= static_cast<int>(g.starts.size())) throw InvalidInput("agent has no start cell");
  start_ = state_of_cell_[g.starts[agent]];

  // Barrier opens once every path from the initial state has read its event.
  for (Cell c = 0; c < static_cast<Cell>(g.cells.size()); ++c) {
    const auto& b = g.cells[c].barrier;
    if (!b || !listed(b->agents)) continue;
    const auto e = local.alphabet().index_of(b->event);
    if (!e) throw InvalidInput("barrier event '" + b->event + "' is not in agent " + std::to_string(agent + 1) +
                               "'s local alphabet");
    std::vector<bool> without(num_u_, false);
    std::queue<StateId> q;
    without[local.initial()] = true;
    q.push(local.initial());
    while (!q.empty()) {
      const StateId u = q.front();
      q.pop();
      for (EventIndex x = 0; x < local.alphabet().size(); ++x) {
        if (x == *e) continue;
        if (auto v = local.next(u, x); v && !without[*v]) {
          without[*v] = true;
          q.push(*v);
        }
      }
    }
    std::vector<bool> open(num_u_);
    for (StateId u = 0; u < num_u_; ++u) open[u] = !without[u];
    barrier_slot_[c] = open_.size();
    open_.push_back(open);
  }

  const std::size_t n = cells_.size();
  next_.assign(num_u_ * n * kNumActions, 0);
  for (StateId u = 0; u < num_u_; ++u)
    for (std::size_t s = 0; s < n; ++s)
      for (Action a : kActions) {
        int t = static_cast<int>(s);
        const Cell from = cells_[s];
        if (g.can_move(from, a)) {
          const Cell to = *g.neighbor(from, a);
          if (state_of_cell_[to] >= 0 && barrier_open(u, to)) t = state_of_cell_[to];
        }
        next_[(u * n + s) * kNumActions + static_cast<int>(a)] = t;
      }

  const std::size_t draws = std::max<std::size_t>(1, g.draws.size());
  label_.assign(draws * num_u_ * n * kNumActions, -1);
  for (std::size_t d = 0; d < draws; ++d)
    for (StateId u = 0; u < num_u_; ++u)
      for (std::size_t s = 0; s < n; ++s)
        for (Action a : kActions) {
          const int t = step(static_cast<int>(s), u, a);
          std::vector<std::string> fired;
          auto consider = [&](const CellInfo& info, Trigger trig) {
            for (const auto& ev : info.events) {
              if (ev.trigger != trig || !listed(ev.agents)) continue;
              if (!ev.when.empty() && (g.draws.empty() || g.draws[d] != ev.when)) continue;
              const auto le = local.alphabet().index_of(ev.event);
              if (ev.gated && le && !local.next(u, *le)) continue;
              fired.push_back(ev.event);
            }
          };
          consider(g.cells[cells_[t]], Trigger::At);
          if (t != static_cast<int>(s)) consider(g.cells[cells_[s]], Trigger::Leave);
          if (fired.empty()) continue;
          if (fired.size() > 1)
            throw ConsistencyViolation("agent " + std::to_string(agent + 1) + " would emit several events (" +
                                       fired[0] + ", " + fired[1] + ") in one step at local state '" +
                                       local.state_name(u) + "'");
          const auto idx = events.index_of(fired[0]);
          if (!idx) throw InvalidInput("layout event '" + fired[0] + "' is unknown to the task");
          label_[((d * num_u_ + u) * n + s) * kNumActions + static_cast<int>(a)] = static_cast<std::int16_t>(*idx);
        }
}

std::optional<int> LocalEnv::state_of(Cell c) const {
  if (c < 0 || c >= static_cast<Cell>(state_of_cell_.size()) || state_of_cell_[c] < 0) return std::nullopt;
  return state_of_cell_[c];
}

bool LocalEnv::barrier_open(StateId u, Cell c) const {
  auto it = barrier_slot_.find(c);
  if (it == barrier_slot_.end()) return true;
  return open_[it->second][u];
}

// ---------------------------------------------------------------------------

TeamEnv::TeamEnv(GridSpec grid, RewardMachine team, std::vector<EventAlphabet> locals,
                 std::vector<EventAlphabet> observations)
    : grid_(std::make_shared<const GridSpec>(std::move(grid))), team_(std::move(team)), locals_(std::move(locals)) {
  const std::size_t n = locals_.size();
  if (grid_->starts.size() != n)
    throw InvalidInput("layout has " + std::to_string(grid_->starts.size()) + " agents, task has " + std::to_string(n));
  observations.resize(n);
  events_ = team_.alphabet();
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& e : observations[i]) {
      if (locals_[i].contains(e.name()))
        throw InvalidInput("observation '" + e.name() + "' is already in agent " + std::to_string(i + 1) +
                           "'s local alphabet");
      if (team_.alphabet().contains(e.name()))
        throw InvalidInput("observation '" + e.name() + "' is a team RM event");
      if (!events_.contains(e.name())) events_.add(e);
    }
  projections_ = project_all(team_, locals_);

  sharers_.assign(events_.size(), {});
  local_idx_.assign(n, std::vector<std::int64_t>(events_.size(), -1));
  team_idx_.assign(events_.size(), -1);
  for (EventIndex e = 0; e < events_.size(); ++e) {
    if (auto t = team_.alphabet().index_of(events_[e].name())) team_idx_[e] = *t;
    for (std::size_t i = 0; i < n; ++i) {
      if (auto l = locals_[i].index_of(events_[e].name())) local_idx_[i][e] = *l;
      if (local_idx_[i][e] >= 0 || observations[i].contains(events_[e].name()))
        sharers_[e].push_back(static_cast<int>(i));
    }
  }
  // Every agent may only emit events of its own vocabulary.
  for (const auto& info : grid_->cells)
    for (const auto& ev : info.events)
      for (int i : ev.agents) {
        if (i >= static_cast<int>(n)) throw InvalidInput("layout mentions agent " + std::to_string(i + 1));
        auto e = events_.index_of(ev.event);
        if (!e || std::find(sharers_[*e].begin(), sharers_[*e].end(), i) == sharers_[*e].end())
          throw InvalidInput("agent " + std::to_string(i + 1) + " cannot sense event '" + ev.event + "'");
      }
  for (std::size_t i = 0; i < n; ++i) agents_.emplace_back(grid_, static_cast<int>(i), projections_[i].machine, events_);
  team_live_ = team_.coreachable();
}

int TeamEnv::draw(std::mt19937_64& rng) const {
  if (grid_->draws.size() <= 1) return 0;
  return std::uniform_int_distribution<int>(0, static_cast<int>(grid_->draws.size()) - 1)(rng);
}

std::vector<int> TeamEnv::initial_state() const {
  std::vector<int> s;
  for (const auto& a : agents_) s.push_back(a.start());
  return s;
}

TeamStep TeamEnv::team_step(const std::vector<int>& s, StateId u, const std::vector<Action>& a, int draw,
                            bool verify) const {
  const std::size_t n = agents_.size();
  if (s.size() != n || a.size() != n) throw InvalidInput("joint state/action has the wrong number of agents");
  TeamStep out;
  out.s.resize(n);
  std::vector<std::uint8_t> count(events_.size(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    const StateId ui = projections_[i].local_of[u];
    out.s[i] = agents_[i].step(s[i], ui, a[i]);
    const int l = agents_[i].label(draw, s[i], ui, a[i]);
    if (l >= 0) ++count[l];
  }
  for (EventIndex e = 0; e < events_.size(); ++e)
    if (count[e] && count[e] == sharers_[e].size()) out.label.push_back(e);

  StateId cur = u;
  if (verify) {
    LabelSet ls;
    for (auto e : out.label)
      if (team_idx_[e] >= 0) ls.events.push_back(events_[e]);
    cur = rm_read_labelset(team_, u, ls, true).state;
  } else {
    for (auto e : out.label)
      if (team_idx_[e] >= 0) cur = team_.next_or_stay(cur, static_cast<EventIndex>(team_idx_[e]));
  }
  out.u = cur;
  out.reward = team_.reward(u, cur);
  out.done = team_.is_terminal(cur) || !team_live_[cur];
  return out;
}

std::string draw_accident(const TeamEnv& env, std::mt19937_64& rng) {
  if (env.grid().draws.empty()) throw InvalidInput("task has no episode draws");
  return env.grid().draws[env.draw(rng)];
}

bool buttons_red_press(const TeamEnv& env, const std::vector<int>& s) {
  const auto red = env.grid().find_tag("red-button");
  if (!red || env.num_agents() < 3) throw InvalidInput("not a buttons environment");
  return env.agent(1).cell_of(s.at(1)) == *red && env.agent(2).cell_of(s.at(2)) == *red;
}

// ---------------------------------------------------------------------------

namespace {

std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::size_t line_no = 0;
  for (const auto& raw : detail::split_lines(text)) {
    ++line_no;
    const std::string line = detail::trim(detail::strip_comment(raw));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", line_no);
    const std::string key = detail::trim(line.substr(0, eq));
    std::string value = detail::trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (key.empty()) throw ParseError("empty key", line_no);
    if (!kv.emplace(key, value).second) throw ParseError("duplicate key '" + key + "'", line_no);
  }
  return kv;
}

EventAlphabet alphabet_of(const std::string& list) {
  EventAlphabet a;
  for (const auto& n : detail::split_tokens(list, " \t,")) a.add(Event(n));
  return a;
}

}  // namespace

TaskSpec load_task(const std::filesystem::path& path) {
  auto kv = parse_key_values(read_file(path.string()));
  const auto dir = path.parent_path();
  auto take = [&](const std::string& key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  auto require = [&](const std::string& key) {
    auto v = take(key);
    if (!v) throw InvalidInput(path.string() + ": missing key '" + key + "'");
    return *v;
  };
  auto name = take("name").value_or(path.stem().string());
  const auto layout_path = dir / require("layout");
  const auto rm_path = dir / require("rm");
  auto grid = parse_layout(read_file(layout_path.string()));
  TaskSpec t{.name = std::move(name),
             .dir = dir,
             .layout_path = layout_path,
             .rm_path = rm_path,
             .grid = std::move(grid),
             .team = parse_reward_machine(read_file(rm_path.string())),
             .locals = {},
             .observations = {},
             .team_tlcd = std::nullopt,
             .agent_tlcds = {}};
  const std::size_t n = t.grid.starts.size();
  for (std::size_t i = 1; i <= n; ++i) {
    t.locals.push_back(alphabet_of(require("local." + std::to_string(i))));
    t.observations.push_back(alphabet_of(take("observe." + std::to_string(i)).value_or("")));
  }
  if (auto v = take("tlcd")) t.team_tlcd = parse_tlcd(read_file((t.dir / *v).string()));
  t.agent_tlcds.resize(n);
  if (auto v = take("tlcd.agents")) {
    const auto c = parse_tlcd(read_file((t.dir / *v).string()));
    for (auto& slot : t.agent_tlcds) slot = c;
  }
  for (std::size_t i = 1; i <= n; ++i)
    if (auto v = take("tlcd." + std::to_string(i))) t.agent_tlcds[i - 1] = parse_tlcd(read_file((t.dir / *v).string()));
  if (auto v = take("p_sync")) {
    try {
      t.p_sync = std::stod(*v);
    } catch (...) {
      throw InvalidInput(path.string() + ": p_sync is not a number");
    }
    if (!(t.p_sync > 0.0 && t.p_sync <= 1.0)) throw InvalidInput(path.string() + ": p_sync must lie in (0, 1]");
  }
  if (!kv.empty()) throw InvalidInput(path.string() + ": unknown key '" + kv.begin()->first + "'");
  return t;
}

TeamEnv make_env(const TaskSpec& task) { return TeamEnv(task.grid, task.team, task.locals, task.observations); }

}  // namespace cdq
