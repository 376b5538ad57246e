#pragma once

#include <cstdint>
#include <initializer_list>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cdq {

using StateId = std::uint32_t;
using EventIndex = std::uint32_t;

class Event {
 public:
  explicit Event(std::string name);

  const std::string& name() const noexcept { return name_; }
  friend auto operator<=>(const Event&, const Event&) = default;

 private:
  std::string name_;
};

using EventSeq = std::vector<Event>;

// "D G P" or "D,G,P" -> [D, G, P]
EventSeq parse_events(std::string_view text);
std::string format_events(std::span<const Event> seq, std::string_view sep = " ");

class EventAlphabet {
 public:
  EventAlphabet() = default;
  EventAlphabet(std::initializer_list<std::string_view> names);
  template <typename Range>
  static EventAlphabet from_names(const Range& names) {
    EventAlphabet a;
    for (const auto& n : names) a.add(Event(std::string(n)));
    return a;
  }

  // Throws InvalidInput on duplicates.
  EventIndex add(const Event& e);

  std::size_t size() const noexcept { return events_.size(); }
  bool empty() const noexcept { return events_.empty(); }
  const Event& operator[](EventIndex i) const { return events_.at(i); }
  auto begin() const { return events_.begin(); }
  auto end() const { return events_.end(); }

  std::optional<EventIndex> index_of(std::string_view name) const;
  EventIndex require(std::string_view name) const;  // InvalidInput if absent
  bool contains(std::string_view name) const { return index_of(name).has_value(); }

  bool is_subset_of(const EventAlphabet& other) const;
  bool same_set(const EventAlphabet& other) const;
  EventAlphabet united(const EventAlphabet& other) const;
  std::vector<std::string> names() const;
  std::string to_string(std::string_view sep = " ") const;

 private:
  std::vector<Event> events_;
  std::map<std::string, EventIndex, std::less<>> index_;
};

struct Transition {
  StateId from;
  EventIndex event;
  StateId to;
};

struct StepResult {
  StateId state;
  double reward;
  friend bool operator==(const StepResult&, const StepResult&) = default;
};

/// Event-based task-completion reward machine. δ is partial; σ is derived
/// from the terminal set. Transitions leaving a terminal state are dropped
/// at construction so that terminals are absorbing.
class RewardMachine {
 public:
  static constexpr std::int32_t kUndefined = -1;

  RewardMachine(EventAlphabet alphabet, std::vector<std::string> state_names, StateId initial,
                std::vector<bool> terminal, const std::vector<Transition>& transitions);

  const EventAlphabet& alphabet() const noexcept { return alphabet_; }
  std::size_t num_states() const noexcept { return names_.size(); }
  StateId initial() const noexcept { return initial_; }
  bool is_terminal(StateId u) const;
  const std::vector<bool>& terminals() const noexcept { return terminal_; }
  const std::string& state_name(StateId u) const;
  std::optional<StateId> state_index(std::string_view name) const;

  std::optional<StateId> next(StateId u, EventIndex e) const;
  // Undefined transitions stay put.
  StateId next_or_stay(StateId u, EventIndex e) const {
    const auto v = delta_[u * alphabet_.size() + e];
    return v == kUndefined ? u : static_cast<StateId>(v);
  }
  double reward(StateId from, StateId to) const;
  std::vector<Transition> transitions() const;

  // States from which some terminal is reachable.
  std::vector<bool> coreachable() const;
  std::vector<bool> reachable() const;

 private:
  EventAlphabet alphabet_;
  std::vector<std::string> names_;
  StateId initial_;
  std::vector<bool> terminal_;
  std::vector<std::int32_t> delta_;
};

StepResult rm_step(const RewardMachine& rm, StateId u, const Event& e);
StepResult rm_step(const RewardMachine& rm, StateId u, EventIndex e);
StateId rm_final_state(const RewardMachine& rm, std::span<const Event> seq);
int rm_run(const RewardMachine& rm, std::span<const Event> seq);

struct LabelSet {
  std::vector<Event> events;
  bool empty() const noexcept { return events.empty(); }
};

/// Folds rm_step over the label set in alphabet order. With `verify`, every
/// permutation is tried and a disagreement raises ConsistencyViolation.
/// Events outside the alphabet are rejected as in rm_step.
StepResult rm_read_labelset(const RewardMachine& rm, StateId u, const LabelSet& ls,
                            bool verify = false);

class Dfa {
 public:
  Dfa(EventAlphabet alphabet, std::vector<std::string> state_names, StateId initial,
      std::vector<bool> accepting, const std::vector<Transition>& transitions);

  const EventAlphabet& alphabet() const noexcept { return alphabet_; }
  std::size_t num_states() const noexcept { return names_.size(); }
  StateId initial() const noexcept { return initial_; }
  bool is_accepting(StateId q) const;
  const std::vector<bool>& accepting() const noexcept { return accepting_; }
  const std::string& state_name(StateId q) const;
  std::optional<StateId> state_index(std::string_view name) const;
  StateId next(StateId q, EventIndex e) const { return delta_[q * alphabet_.size() + e]; }
  const std::vector<StateId>& table() const noexcept { return delta_; }

  // Single accepting state with self-loops on every event.
  static Dfa trivial(const EventAlphabet& alphabet);

 private:
  EventAlphabet alphabet_;
  std::vector<std::string> names_;
  StateId initial_;
  std::vector<bool> accepting_;
  std::vector<StateId> delta_;
};

struct DfaRun {
  StateId state;
  bool accepted;
};

DfaRun dfa_run(const Dfa& dfa, std::span<const Event> seq);

// Text formats. Parse errors carry the offending line number.
RewardMachine parse_reward_machine(std::string_view text);
std::string format_reward_machine(const RewardMachine& rm);
Dfa parse_dfa(std::string_view text);
std::string format_dfa(const Dfa& dfa);

std::string read_file(const std::string& path);

}  // namespace cdq
