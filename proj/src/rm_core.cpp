#include "cdq/rm_core.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <queue>
#include <sstream>

#include "cdq/errors.hpp"
#include "text_util.hpp"

namespace cdq {

Event::Event(std::string name) : name_(std::move(name)) {
  if (name_.empty()) throw InvalidInput("event name must be non-empty");
}

EventSeq parse_events(std::string_view text) {
  EventSeq out;
  for (const auto& tok : detail::split_tokens(text, " \t,")) out.emplace_back(tok);
  return out;
}

std::string format_events(std::span<const Event> seq, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (i) out += sep;
    out += seq[i].name();
  }
  return out;
}

EventAlphabet::EventAlphabet(std::initializer_list<std::string_view> names) {
  for (auto n : names) add(Event(std::string(n)));
}

EventIndex EventAlphabet::add(const Event& e) {
  if (index_.count(e.name())) throw InvalidInput("duplicate event '" + e.name() + "' in alphabet");
  const auto idx = static_cast<EventIndex>(events_.size());
  events_.push_back(e);
  index_.emplace(e.name(), idx);
  return idx;
}

std::optional<EventIndex> EventAlphabet::index_of(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

EventIndex EventAlphabet::require(std::string_view name) const {
  auto idx = index_of(name);
  if (!idx) throw InvalidInput("event '" + std::string(name) + "' not in alphabet {" + to_string(",") + "}");
  return *idx;
}

bool EventAlphabet::is_subset_of(const EventAlphabet& other) const {
  return std::all_of(events_.begin(), events_.end(),
                     [&](const Event& e) { return other.contains(e.name()); });
}

bool EventAlphabet::same_set(const EventAlphabet& other) const {
  return size() == other.size() && is_subset_of(other);
}

EventAlphabet EventAlphabet::united(const EventAlphabet& other) const {
  EventAlphabet out = *this;
  for (const auto& e : other)
    if (!out.contains(e.name())) out.add(e);
  return out;
}

std::vector<std::string> EventAlphabet::names() const {
  std::vector<std::string> out;
  for (const auto& e : events_) out.push_back(e.name());
  return out;
}

std::string EventAlphabet::to_string(std::string_view sep) const {
  return format_events(events_, sep);
}

namespace {

void check_state(StateId u, std::size_t n, const char* what) {
  if (u >= n) throw InvalidInput(std::string(what) + " state id " + std::to_string(u) + " out of range");
}

}  // namespace

RewardMachine::RewardMachine(EventAlphabet alphabet, std::vector<std::string> state_names,
                             StateId initial, std::vector<bool> terminal,
                             const std::vector<Transition>& transitions)
    : alphabet_(std::move(alphabet)),
      names_(std::move(state_names)),
      initial_(initial),
      terminal_(std::move(terminal)) {
  const std::size_t n = names_.size();
  if (n == 0) throw InvalidInput("reward machine needs at least one state");
  check_state(initial_, n, "initial");
  if (terminal_.size() != n) throw InvalidInput("terminal flags must cover every state");
  delta_.assign(n * alphabet_.size(), kUndefined);
  for (const auto& t : transitions) {
    check_state(t.from, n, "transition source");
    check_state(t.to, n, "transition target");
    if (t.event >= alphabet_.size()) throw InvalidInput("transition event index out of range");
    if (terminal_[t.from]) continue;
    auto& slot = delta_[t.from * alphabet_.size() + t.event];
    if (slot != kUndefined && slot != static_cast<std::int32_t>(t.to))
      throw InvalidInput("nondeterministic transition from '" + names_[t.from] + "' on '" +
                         alphabet_[t.event].name() + "'");
    slot = static_cast<std::int32_t>(t.to);
  }
}

bool RewardMachine::is_terminal(StateId u) const {
  check_state(u, num_states(), "queried");
  return terminal_[u];
}

const std::string& RewardMachine::state_name(StateId u) const {
  check_state(u, num_states(), "queried");
  return names_[u];
}

std::optional<StateId> RewardMachine::state_index(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<StateId>(it - names_.begin());
}

std::optional<StateId> RewardMachine::next(StateId u, EventIndex e) const {
  check_state(u, num_states(), "queried");
  if (e >= alphabet_.size()) throw InvalidInput("event index out of range");
  const auto v = delta_[u * alphabet_.size() + e];
  if (v == kUndefined) return std::nullopt;
  return static_cast<StateId>(v);
}

double RewardMachine::reward(StateId from, StateId to) const {
  return (!is_terminal(from) && is_terminal(to)) ? 1.0 : 0.0;
}

std::vector<Transition> RewardMachine::transitions() const {
  std::vector<Transition> out;
  for (StateId u = 0; u < num_states(); ++u)
    for (EventIndex e = 0; e < alphabet_.size(); ++e)
      if (auto v = delta_[u * alphabet_.size() + e]; v != kUndefined)
        out.push_back({u, e, static_cast<StateId>(v)});
  return out;
}

std::vector<bool> RewardMachine::reachable() const {
  std::vector<bool> seen(num_states(), false);
  std::queue<StateId> work;
  seen[initial_] = true;
  work.push(initial_);
  while (!work.empty()) {
    const StateId u = work.front();
    work.pop();
    for (EventIndex e = 0; e < alphabet_.size(); ++e)
      if (auto v = delta_[u * alphabet_.size() + e]; v != kUndefined && !seen[v]) {
        seen[v] = true;
        work.push(static_cast<StateId>(v));
      }
  }
  return seen;
}

std::vector<bool> RewardMachine::coreachable() const {
  std::vector<bool> good = terminal_;
  for (bool changed = true; changed;) {
    changed = false;
    for (StateId u = 0; u < num_states(); ++u) {
      if (good[u]) continue;
      for (EventIndex e = 0; e < alphabet_.size(); ++e)
        if (auto v = delta_[u * alphabet_.size() + e]; v != kUndefined && good[v]) {
          good[u] = changed = true;
          break;
        }
    }
  }
  return good;
}

StepResult rm_step(const RewardMachine& rm, StateId u, EventIndex e) {
  const auto v = rm.next(u, e);
  if (!v) return {u, 0.0};
  return {*v, rm.reward(u, *v)};
}

StepResult rm_step(const RewardMachine& rm, StateId u, const Event& e) {
  return rm_step(rm, u, rm.alphabet().require(e.name()));
}

StateId rm_final_state(const RewardMachine& rm, std::span<const Event> seq) {
  StateId u = rm.initial();
  for (const auto& e : seq) u = rm_step(rm, u, e).state;
  return u;
}

int rm_run(const RewardMachine& rm, std::span<const Event> seq) {
  return rm.is_terminal(rm_final_state(rm, seq)) ? 1 : 0;
}

StepResult rm_read_labelset(const RewardMachine& rm, StateId u, const LabelSet& ls, bool verify) {
  std::vector<EventIndex> idx;
  idx.reserve(ls.events.size());
  for (const auto& e : ls.events) idx.push_back(rm.alphabet().require(e.name()));
  std::sort(idx.begin(), idx.end());
  idx.erase(std::unique(idx.begin(), idx.end()), idx.end());

  auto fold = [&](const std::vector<EventIndex>& order) {
    StateId cur = u;
    for (auto e : order) cur = rm.next_or_stay(cur, e);
    return cur;
  };
  const StateId result = fold(idx);
  if (verify && idx.size() > 1) {
    auto perm = idx;
    while (std::next_permutation(perm.begin(), perm.end())) {
      if (fold(perm) != result) {
        std::vector<Event> a, b;
        for (auto e : idx) a.push_back(rm.alphabet()[e]);
        for (auto e : perm) b.push_back(rm.alphabet()[e]);
        throw ConsistencyViolation("label set order dependence at state '" + rm.state_name(u) +
                                   "': [" + format_events(a) + "] vs [" + format_events(b) + "]");
      }
    }
  }
  return {result, rm.reward(u, result)};
}

Dfa::Dfa(EventAlphabet alphabet, std::vector<std::string> state_names, StateId initial,
         std::vector<bool> accepting, const std::vector<Transition>& transitions)
    : alphabet_(std::move(alphabet)),
      names_(std::move(state_names)),
      initial_(initial),
      accepting_(std::move(accepting)) {
  const std::size_t n = names_.size();
  if (n == 0) throw InvalidInput("DFA needs at least one state");
  check_state(initial_, n, "initial");
  if (accepting_.size() != n) throw InvalidInput("accepting flags must cover every state");
  constexpr StateId kUnset = ~StateId{0};
  delta_.assign(n * alphabet_.size(), kUnset);
  for (const auto& t : transitions) {
    check_state(t.from, n, "transition source");
    check_state(t.to, n, "transition target");
    if (t.event >= alphabet_.size()) throw InvalidInput("transition event index out of range");
    auto& slot = delta_[t.from * alphabet_.size() + t.event];
    if (slot != kUnset && slot != t.to) throw InvalidInput("nondeterministic DFA transition");
    slot = t.to;
  }
  for (std::size_t i = 0; i < delta_.size(); ++i)
    if (delta_[i] == kUnset)
      throw InvalidInput("DFA transition function is not total: state '" +
                         names_[i / alphabet_.size()] + "' lacks event '" +
                         alphabet_[static_cast<EventIndex>(i % alphabet_.size())].name() + "'");
}

bool Dfa::is_accepting(StateId q) const {
  check_state(q, num_states(), "queried");
  return accepting_[q];
}

const std::string& Dfa::state_name(StateId q) const {
  check_state(q, num_states(), "queried");
  return names_[q];
}

std::optional<StateId> Dfa::state_index(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<StateId>(it - names_.begin());
}

Dfa Dfa::trivial(const EventAlphabet& alphabet) {
  std::vector<Transition> ts;
  for (EventIndex e = 0; e < alphabet.size(); ++e) ts.push_back({0, e, 0});
  return Dfa(alphabet, {"q0"}, 0, {true}, ts);
}

DfaRun dfa_run(const Dfa& dfa, std::span<const Event> seq) {
  StateId q = dfa.initial();
  for (const auto& e : seq) q = dfa.next(q, dfa.alphabet().require(e.name()));
  return {q, dfa.is_accepting(q)};
}

// ---------------------------------------------------------------------------
// Text format

namespace {

struct MachineText {
  EventAlphabet alphabet;
  std::vector<std::string> states;
  std::string initial;
  std::vector<std::string> final_states;
  struct Arrow {
    std::string from, event, to;
    std::size_t line;
  };
  std::vector<Arrow> arrows;
  std::size_t initial_line = 0;
  std::size_t final_line = 0;
};

MachineText parse_machine_text(std::string_view text, std::string_view final_key) {
  MachineText mt;
  bool have_alphabet = false, have_states = false, have_initial = false, have_final = false;
  std::size_t line_no = 0;
  for (const auto& raw : detail::split_lines(text)) {
    ++line_no;
    const std::string line = detail::trim(detail::strip_comment(raw));
    if (line.empty()) continue;
    const auto arrow = line.rfind("->");
    const auto colon = line.find(':');
    if (colon != std::string::npos && (arrow == std::string::npos || colon < arrow)) {
      const std::string key = detail::trim(line.substr(0, colon));
      const auto values = detail::split_tokens(line.substr(colon + 1), " \t,");
      auto once = [&](bool& flag) {
        if (flag) throw ParseError("duplicate '" + key + "' line", line_no);
        flag = true;
      };
      if (key == "alphabet") {
        once(have_alphabet);
        try {
          for (const auto& v : values) mt.alphabet.add(Event(v));
        } catch (const InvalidInput& e) {
          throw ParseError(e.what(), line_no);
        }
      } else if (key == "states") {
        once(have_states);
        mt.states = values;
        auto sorted = values;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
          throw ParseError("duplicate state name", line_no);
      } else if (key == "initial") {
        once(have_initial);
        if (values.size() != 1) throw ParseError("'initial' takes exactly one state", line_no);
        mt.initial = values[0];
        mt.initial_line = line_no;
      } else if (key == final_key) {
        once(have_final);
        mt.final_states = values;
        mt.final_line = line_no;
      } else {
        throw ParseError("unknown key '" + key + "'", line_no);
      }
      continue;
    }
    if (arrow == std::string::npos)
      throw ParseError("expected 'key: values' or 'from -event-> to'", line_no);
    std::string left = detail::trim(line.substr(0, arrow));
    const std::string to = detail::trim(line.substr(arrow + 2));
    const auto dash = left.find('-');
    if (dash == std::string::npos) throw ParseError("malformed transition arrow", line_no);
    MachineText::Arrow a{detail::trim(left.substr(0, dash)), detail::trim(left.substr(dash + 1)),
                         to, line_no};
    for (const auto* part : {&a.from, &a.event, &a.to})
      if (part->empty() || part->find_first_of(" \t") != std::string::npos)
        throw ParseError("malformed transition '" + line + "'", line_no);
    mt.arrows.push_back(std::move(a));
  }
  if (!have_alphabet) throw ParseError("missing 'alphabet' line", line_no);
  if (!have_states) throw ParseError("missing 'states' line", line_no);
  if (!have_initial) throw ParseError("missing 'initial' line", line_no);
  return mt;
}

struct Resolved {
  StateId initial;
  std::vector<bool> final_flags;
  std::vector<Transition> transitions;
};

Resolved resolve(const MachineText& mt, std::string_view final_key) {
  auto state_of = [&](const std::string& name, std::size_t line) {
    auto it = std::find(mt.states.begin(), mt.states.end(), name);
    if (it == mt.states.end()) throw ParseError("unknown state '" + name + "'", line);
    return static_cast<StateId>(it - mt.states.begin());
  };
  Resolved r;
  r.initial = state_of(mt.initial, mt.initial_line);
  r.final_flags.assign(mt.states.size(), false);
  for (const auto& f : mt.final_states) {
    auto it = std::find(mt.states.begin(), mt.states.end(), f);
    if (it == mt.states.end())
      throw ParseError("unknown " + std::string(final_key) + " state '" + f + "'", mt.final_line);
    r.final_flags[it - mt.states.begin()] = true;
  }
  for (const auto& a : mt.arrows) {
    auto e = mt.alphabet.index_of(a.event);
    if (!e) throw ParseError("event '" + a.event + "' not in alphabet", a.line);
    r.transitions.push_back({state_of(a.from, a.line), *e, state_of(a.to, a.line)});
  }
  return r;
}

template <typename Machine>
std::string format_machine(const Machine& m, const std::vector<bool>& finals, std::string_view key,
                           const std::vector<Transition>& ts) {
  std::ostringstream os;
  os << "alphabet:";
  for (const auto& e : m.alphabet()) os << ' ' << e.name();
  os << "\nstates:";
  for (StateId u = 0; u < m.num_states(); ++u) os << ' ' << m.state_name(u);
  os << "\ninitial: " << m.state_name(m.initial()) << '\n' << key << ':';
  for (StateId u = 0; u < m.num_states(); ++u)
    if (finals[u]) os << ' ' << m.state_name(u);
  os << '\n';
  for (const auto& t : ts)
    os << m.state_name(t.from) << " -" << m.alphabet()[t.event].name() << "-> "
       << m.state_name(t.to) << '\n';
  return os.str();
}

}  // namespace

RewardMachine parse_reward_machine(std::string_view text) {
  auto mt = parse_machine_text(text, "terminal");
  auto r = resolve(mt, "terminal");
  std::vector<std::pair<StateId, EventIndex>> seen;
  for (std::size_t i = 0; i < r.transitions.size(); ++i) {
    const auto& t = r.transitions[i];
    for (std::size_t j = 0; j < i; ++j)
      if (r.transitions[j].from == t.from && r.transitions[j].event == t.event &&
          r.transitions[j].to != t.to)
        throw ParseError("nondeterministic transition", mt.arrows[i].line);
  }
  return RewardMachine(std::move(mt.alphabet), std::move(mt.states), r.initial,
                       std::move(r.final_flags), r.transitions);
}

std::string format_reward_machine(const RewardMachine& rm) {
  return format_machine(rm, rm.terminals(), "terminal", rm.transitions());
}

Dfa parse_dfa(std::string_view text) {
  auto mt = parse_machine_text(text, "accepting");
  auto r = resolve(mt, "accepting");
  try {
    return Dfa(std::move(mt.alphabet), std::move(mt.states), r.initial, std::move(r.final_flags),
               r.transitions);
  } catch (const InvalidInput& e) {
    throw ParseError(e.what(), 0);
  }
}

std::string format_dfa(const Dfa& dfa) {
  std::vector<Transition> ts;
  for (StateId q = 0; q < dfa.num_states(); ++q)
    for (EventIndex e = 0; e < dfa.alphabet().size(); ++e) ts.push_back({q, e, dfa.next(q, e)});
  return format_machine(dfa, dfa.accepting(), "accepting", ts);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace cdq
