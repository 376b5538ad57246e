#include "cdq/tlcd.hpp"

#include <map>
#include <queue>
#include <sstream>

#include "cdq/errors.hpp"
#include "cdq/refinement.hpp"
#include "text_util.hpp"

namespace cdq {

Tlcd parse_tlcd(std::string_view text) {
  Tlcd c;
  bool have_alphabet = false;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> node_of;
  auto node = [&](const Formula& f) {
    auto [it, fresh] = node_of.try_emplace(f.to_string(), c.nodes.size());
    if (fresh) c.nodes.push_back(f);
    return it->second;
  };
  for (const auto& raw : detail::split_lines(text)) {
    ++line_no;
    const std::string_view body = detail::strip_comment(raw);
    if (detail::trim(body).empty()) continue;
    if (!have_alphabet) {
      const std::string line = detail::trim(body);
      if (line.rfind("alphabet:", 0) != 0) throw ParseError("first line must be 'alphabet: ...'", line_no, 1);
      try {
        for (const auto& n : detail::split_tokens(line.substr(9), " \t,")) c.alphabet.add(Event(n));
      } catch (const InvalidInput& e) {
        throw ParseError(e.what(), line_no);
      }
      if (c.alphabet.empty()) throw ParseError("empty alphabet", line_no);
      have_alphabet = true;
      continue;
    }
    const auto sep = body.find("~>");
    if (sep == std::string_view::npos) throw ParseError("expected 'cause ~> effect'", line_no, 1);
    if (body.find("~>", sep + 2) != std::string_view::npos)
      throw ParseError("more than one '~>' on a line", line_no, body.find("~>", sep + 2) + 1);
    const Formula lhs = parse_ltlf(body.substr(0, sep), &c.alphabet, line_no, 1);
    const Formula rhs = parse_ltlf(body.substr(sep + 2), &c.alphabet, line_no, sep + 3);
    c.edges.emplace_back(node(lhs), node(rhs));
  }
  if (!have_alphabet) throw ParseError("missing 'alphabet' line", line_no);
  if (c.edges.empty()) throw ParseError("a causal diagram needs at least one edge", line_no);
  return c;
}

std::string format_tlcd(const Tlcd& c) {
  std::string out = "alphabet: " + c.alphabet.to_string() + "\n";
  for (auto [a, b] : c.edges) out += c.nodes[a].to_string() + " ~> " + c.nodes[b].to_string() + "\n";
  return out;
}

Formula tlcd_to_formula(const Tlcd& c) {
  if (c.edges.empty()) throw InvalidInput("causal diagram without edges");
  std::vector<Formula> parts;
  for (auto [a, b] : c.edges) parts.push_back(Formula::globally(Formula::implication(c.nodes.at(a), c.nodes.at(b))));
  return parts.size() == 1 ? parts[0] : Formula::conjunction(parts);
}

Formula one_event_constraint(const EventAlphabet& alphabet) {
  if (alphabet.empty()) throw InvalidInput("exactly-one constraint over an empty alphabet");
  std::vector<Formula> options;
  for (const auto& e : alphabet) {
    std::vector<Formula> conj{Formula::atom(e.name())};
    for (const auto& other : alphabet)
      if (other.name() != e.name()) conj.push_back(Formula::negation(Formula::atom(other.name())));
    options.push_back(conj.size() == 1 ? conj[0] : Formula::conjunction(conj));
  }
  return Formula::globally(options.size() == 1 ? options[0] : Formula::disjunction(options));
}

std::optional<StateId> find_rejecting_sink(const Dfa& d) {
  std::optional<StateId> sink;
  for (StateId q = 0; q < d.num_states(); ++q) {
    if (d.is_accepting(q)) continue;
    bool loops = true;
    for (EventIndex e = 0; e < d.alphabet().size() && loops; ++e) loops = d.next(q, e) == q;
    if (!loops) continue;
    if (sink) throw InvariantViolation("DFA has more than one rejecting sink; it is not minimal");
    sink = q;
  }
  return sink;
}

namespace {

std::vector<bool> can_accept(const Dfa& d) {
  std::vector<bool> good = d.accepting();
  for (bool changed = true; changed;) {
    changed = false;
    for (StateId q = 0; q < d.num_states(); ++q) {
      if (good[q]) continue;
      for (EventIndex e = 0; e < d.alphabet().size(); ++e)
        if (good[d.next(q, e)]) {
          good[q] = changed = true;
          break;
        }
    }
  }
  return good;
}

}  // namespace

CausalDfa compile(const Formula& f, const EventAlphabet& alphabet) {
  if (alphabet.empty()) throw InvalidInput("cannot compile over an empty alphabet");
  for (const auto& a : f.atoms())
    if (!alphabet.contains(a)) throw InvalidInput("atom '" + a + "' is not in the alphabet {" + alphabet.to_string(",") + "}");

  std::map<std::string, StateId> id;
  std::vector<Formula> states;
  std::vector<Transition> ts;
  std::queue<StateId> work;
  auto intern = [&](const Formula& g) {
    auto [it, fresh] = id.try_emplace(g.to_string(), static_cast<StateId>(states.size()));
    if (fresh) {
      if (states.size() >= kMaxFormulaStates)
        throw InvalidInput("compilation exceeded " + std::to_string(kMaxFormulaStates) + " formula states");
      states.push_back(g);
      work.push(it->second);
    }
    return it->second;
  };
  intern(simplify(f));
  while (!work.empty()) {
    const StateId s = work.front();
    work.pop();
    const Formula cur = states[s];
    for (EventIndex e = 0; e < alphabet.size(); ++e) ts.push_back({s, e, intern(progress(cur, alphabet[e].name()))});
  }
  std::vector<std::string> names;
  std::vector<bool> acc;
  for (const auto& g : states) {
    names.push_back("q" + std::to_string(names.size()));
    acc.push_back(accepts_empty(g));
  }
  const Dfa raw(alphabet, names, 0, acc, ts);
  const auto raw_good = can_accept(raw);
  std::size_t dead = 0;
  for (bool g : raw_good) dead += !g;

  CausalDfa out{minimize_dfa(raw), std::nullopt, dead > 1};
  out.rejecting_sink = find_rejecting_sink(out.dfa);
  // After minimization all dead states are one state with only self-loops.
  const auto good = can_accept(out.dfa);
  for (StateId q = 0; q < out.dfa.num_states(); ++q)
    if (!good[q] && out.rejecting_sink != q)
      throw InvariantViolation("minimized DFA has a dead state that is not the rejecting sink");
  return out;
}

CausalDfa compile_tlcd(const Tlcd& c) { return compile(tlcd_to_formula(c), c.alphabet); }

std::string to_dot(const CausalDfa& c) {
  const Dfa& d = c.dfa;
  std::ostringstream os;
  os << "digraph causal_dfa {\n  rankdir=LR;\n  start [shape=point];\n";
  for (StateId q = 0; q < d.num_states(); ++q) {
    os << "  " << d.state_name(q) << " [shape=" << (d.is_accepting(q) ? "doublecircle" : "circle");
    if (c.rejecting_sink == q) os << ", style=filled, fillcolor=lightgray";
    os << "];\n";
  }
  os << "  start -> " << d.state_name(d.initial()) << ";\n";
  for (StateId q = 0; q < d.num_states(); ++q) {
    std::map<StateId, std::string> labels;
    for (EventIndex e = 0; e < d.alphabet().size(); ++e) {
      auto& l = labels[d.next(q, e)];
      l += (l.empty() ? "" : ",") + d.alphabet()[e].name();
    }
    for (const auto& [to, l] : labels)
      os << "  " << d.state_name(q) << " -> " << d.state_name(to) << " [label=\"" << l << "\"];\n";
  }
  os << "}\n";
  return os.str();
}

std::string format_causal_dfa(const CausalDfa& c) {
  std::string out = format_dfa(c.dfa);
  if (c.rejecting_sink) out += "# rejecting sink: " + c.dfa.state_name(*c.rejecting_sink) + "\n";
  return out;
}

}  // namespace cdq
