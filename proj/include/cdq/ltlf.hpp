#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cdq/rm_core.hpp"

namespace cdq {

enum class LtlOp { True, False, Atom, Not, And, Or, Implies, Next, Globally, Finally, Until, WeakUntil };

/// Immutable LTLf formula. Equality is structural.
class Formula {
 public:
  static Formula truth();
  static Formula falsity();
  static Formula atom(std::string name);
  static Formula negation(Formula f);
  static Formula conjunction(std::vector<Formula> args);  // >= 2 args
  static Formula disjunction(std::vector<Formula> args);  // >= 2 args
  static Formula conjunction(Formula a, Formula b) { return conjunction(std::vector<Formula>{a, b}); }
  static Formula disjunction(Formula a, Formula b) { return disjunction(std::vector<Formula>{a, b}); }
  static Formula implication(Formula a, Formula b);
  static Formula next(Formula f);
  static Formula globally(Formula f);
  static Formula finally(Formula f);
  static Formula until(Formula a, Formula b);
  static Formula weak_until(Formula a, Formula b);

  LtlOp op() const;
  const std::string& atom_name() const;  // Atom only
  std::size_t arity() const;
  const Formula& arg(std::size_t i) const;
  const std::vector<Formula>& args() const;

  // Canonical text, parseable back by parse_ltlf.
  const std::string& to_string() const;
  std::vector<std::string> atoms() const;

  friend bool operator==(const Formula& a, const Formula& b) { return a.to_string() == b.to_string(); }
  friend bool operator<(const Formula& a, const Formula& b) { return a.to_string() < b.to_string(); }

  struct Node;

 private:
  explicit Formula(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
  static Formula make(LtlOp op, std::string atom, std::vector<Formula> args);
  std::shared_ptr<const Node> node_;
};

/// `line`/`column` shift reported error positions (for embedding in files).
/// If `alphabet` is given, atoms must belong to it.
Formula parse_ltlf(std::string_view text, const EventAlphabet* alphabet = nullptr, std::size_t line = 1,
                   std::size_t column = 1);

/// Finite-trace semantics; every position carries exactly one event.
bool ltlf_eval(const Formula& f, std::span<const Event> seq);

// Progression machinery, exposed for testing.
Formula simplify(const Formula& f);
Formula progress(const Formula& f, const std::string& event);
bool accepts_empty(const Formula& f);

}  // namespace cdq
