#include "cdq/ltlf.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

#include "cdq/errors.hpp"

namespace cdq {

struct Formula::Node {
  LtlOp op;
  std::string atom;
  std::vector<Formula> args;
  std::string text;
};

namespace {

bool is_binary(LtlOp op) {
  return op == LtlOp::And || op == LtlOp::Or || op == LtlOp::Implies || op == LtlOp::Until ||
         op == LtlOp::WeakUntil;
}

const char* unary_symbol(LtlOp op) {
  switch (op) {
    case LtlOp::Not: return "!";
    case LtlOp::Next: return "X ";
    case LtlOp::Globally: return "G ";
    case LtlOp::Finally: return "F ";
    default: return "";
  }
}

const char* binary_symbol(LtlOp op) {
  switch (op) {
    case LtlOp::And: return " & ";
    case LtlOp::Or: return " | ";
    case LtlOp::Implies: return " -> ";
    case LtlOp::Until: return " U ";
    case LtlOp::WeakUntil: return " W ";
    default: return "";
  }
}

std::string render(LtlOp op, const std::string& atom, const std::vector<Formula>& args) {
  auto wrap = [](const Formula& f) {
    return is_binary(f.op()) ? "(" + f.to_string() + ")" : f.to_string();
  };
  switch (op) {
    case LtlOp::True: return "true";
    case LtlOp::False: return "false";
    case LtlOp::Atom: return atom;
    case LtlOp::Not:
    case LtlOp::Next:
    case LtlOp::Globally:
    case LtlOp::Finally: {
      const Formula& a = args[0];
      std::string s = unary_symbol(op);
      if (op != LtlOp::Not && is_binary(a.op())) s.pop_back();
      return s + wrap(a);
    }
    default: {
      std::string s;
      for (std::size_t i = 0; i < args.size(); ++i) s += (i ? binary_symbol(op) : "") + wrap(args[i]);
      return s;
    }
  }
}

}  // namespace

Formula Formula::make(LtlOp op, std::string atom, std::vector<Formula> args) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->text = render(op, atom, args);
  n->atom = std::move(atom);
  n->args = std::move(args);
  return Formula(std::move(n));
}

Formula Formula::truth() {
  static const Formula t = make(LtlOp::True, "", {});
  return t;
}
Formula Formula::falsity() {
  static const Formula f = make(LtlOp::False, "", {});
  return f;
}
Formula Formula::atom(std::string name) {
  if (name.empty()) throw InvalidInput("empty atom");
  return make(LtlOp::Atom, std::move(name), {});
}
Formula Formula::negation(Formula f) { return make(LtlOp::Not, "", {std::move(f)}); }
Formula Formula::conjunction(std::vector<Formula> args) {
  if (args.size() < 2) throw InvalidInput("conjunction needs two operands");
  return make(LtlOp::And, "", std::move(args));
}
Formula Formula::disjunction(std::vector<Formula> args) {
  if (args.size() < 2) throw InvalidInput("disjunction needs two operands");
  return make(LtlOp::Or, "", std::move(args));
}
Formula Formula::implication(Formula a, Formula b) { return make(LtlOp::Implies, "", {std::move(a), std::move(b)}); }
Formula Formula::next(Formula f) { return make(LtlOp::Next, "", {std::move(f)}); }
Formula Formula::globally(Formula f) { return make(LtlOp::Globally, "", {std::move(f)}); }
Formula Formula::finally(Formula f) { return make(LtlOp::Finally, "", {std::move(f)}); }
Formula Formula::until(Formula a, Formula b) { return make(LtlOp::Until, "", {std::move(a), std::move(b)}); }
Formula Formula::weak_until(Formula a, Formula b) { return make(LtlOp::WeakUntil, "", {std::move(a), std::move(b)}); }

LtlOp Formula::op() const { return node_->op; }
const std::string& Formula::atom_name() const { return node_->atom; }
std::size_t Formula::arity() const { return node_->args.size(); }
const Formula& Formula::arg(std::size_t i) const { return node_->args.at(i); }
const std::vector<Formula>& Formula::args() const { return node_->args; }
const std::string& Formula::to_string() const { return node_->text; }

std::vector<std::string> Formula::atoms() const {
  std::set<std::string> out;
  std::vector<const Formula*> stack{this};
  while (!stack.empty()) {
    const Formula* f = stack.back();
    stack.pop_back();
    if (f->op() == LtlOp::Atom) out.insert(f->atom_name());
    for (const auto& a : f->args()) stack.push_back(&a);
  }
  return {out.begin(), out.end()};
}

// ---------------------------------------------------------------------------
// Parser

namespace {

enum class Tok { Ident, Not, And, Or, Arrow, LParen, RParen, End };

struct Token {
  Tok kind;
  std::string text;
  std::size_t col;
};

class Parser {
 public:
  Parser(std::string_view text, const EventAlphabet* alphabet, std::size_t line, std::size_t col)
      : alphabet_(alphabet), line_(line) {
    tokenize(text, col);
  }

  Formula parse() {
    if (peek().kind == Tok::End) fail("empty formula", peek().col);
    Formula f = implication();
    if (peek().kind != Tok::End) fail("unexpected '" + peek().text + "'", peek().col);
    return f;
  }

 private:
  [[noreturn]] void fail(const std::string& msg, std::size_t col) const { throw ParseError(msg, line_, col); }

  void tokenize(std::string_view s, std::size_t col0) {
    std::size_t i = 0;
    while (i < s.size()) {
      const char c = s[i];
      const std::size_t col = col0 + i;
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++i;
      } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::size_t j = i;
        while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_')) ++j;
        toks_.push_back({Tok::Ident, std::string(s.substr(i, j - i)), col});
        i = j;
      } else if (c == '-' && i + 1 < s.size() && s[i + 1] == '>') {
        toks_.push_back({Tok::Arrow, "->", col});
        i += 2;
      } else {
        Tok k;
        switch (c) {
          case '!': k = Tok::Not; break;
          case '&': k = Tok::And; break;
          case '|': k = Tok::Or; break;
          case '(': k = Tok::LParen; break;
          case ')': k = Tok::RParen; break;
          default: fail(std::string("unexpected character '") + c + "'", col);
        }
        toks_.push_back({k, std::string(1, c), col});
        ++i;
      }
    }
    toks_.push_back({Tok::End, "end of input", col0 + s.size()});
  }

  const Token& peek(std::size_t ahead = 0) const { return toks_[std::min(pos_ + ahead, toks_.size() - 1)]; }
  Token take() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }

  static bool starts_operand(const Token& t) {
    return t.kind == Tok::Ident || t.kind == Tok::Not || t.kind == Tok::LParen;
  }

  Formula implication() {
    Formula lhs = disjunction();
    if (peek().kind == Tok::Arrow) {
      take();
      return Formula::implication(lhs, implication());
    }
    return lhs;
  }

  Formula disjunction() {
    std::vector<Formula> parts{conjunction()};
    while (peek().kind == Tok::Or) {
      take();
      parts.push_back(conjunction());
    }
    return parts.size() == 1 ? parts[0] : Formula::disjunction(parts);
  }

  Formula conjunction() {
    std::vector<Formula> parts{until()};
    while (peek().kind == Tok::And) {
      take();
      parts.push_back(until());
    }
    return parts.size() == 1 ? parts[0] : Formula::conjunction(parts);
  }

  Formula until() {
    Formula lhs = unary();
    const Token& t = peek();
    if (t.kind == Tok::Ident && (t.text == "U" || t.text == "W") && starts_operand(peek(1))) {
      const bool weak = take().text == "W";
      Formula rhs = until();
      return weak ? Formula::weak_until(lhs, rhs) : Formula::until(lhs, rhs);
    }
    return lhs;
  }

  Formula unary() {
    const Token& t = peek();
    if (t.kind == Tok::Not) {
      take();
      return Formula::negation(unary());
    }
    if (t.kind == Tok::Ident && (t.text == "G" || t.text == "X" || t.text == "F") && starts_operand(peek(1))) {
      const std::string op = take().text;
      Formula f = unary();
      if (op == "G") return Formula::globally(f);
      if (op == "X") return Formula::next(f);
      return Formula::finally(f);
    }
    return primary();
  }

  Formula primary() {
    const Token t = take();
    if (t.kind == Tok::LParen) {
      Formula f = implication();
      if (peek().kind != Tok::RParen) fail("expected ')'", peek().col);
      take();
      return f;
    }
    if (t.kind != Tok::Ident) fail("expected an operand, found '" + t.text + "'", t.col);
    if (t.text == "true") return Formula::truth();
    if (t.text == "false") return Formula::falsity();
    if (alphabet_ && !alphabet_->contains(t.text))
      fail("unknown event '" + t.text + "' (alphabet: " + alphabet_->to_string() + ")", t.col);
    return Formula::atom(t.text);
  }

  const EventAlphabet* alphabet_;
  std::size_t line_;
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
};

}  // namespace

Formula parse_ltlf(std::string_view text, const EventAlphabet* alphabet, std::size_t line, std::size_t column) {
  return Parser(text, alphabet, line, column).parse();
}

// ---------------------------------------------------------------------------
// Direct semantics

namespace {

class Evaluator {
 public:
  explicit Evaluator(std::span<const Event> seq) : seq_(seq) {}

  // holds at position i in [0, n]; i == n is the empty suffix
  bool holds(const Formula& f, std::size_t i) {
    const auto key = std::make_pair(&f.to_string(), i);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    const bool v = compute(f, i);
    memo_.emplace(key, v);
    return v;
  }

 private:
  bool compute(const Formula& f, std::size_t i) {
    const std::size_t n = seq_.size();
    switch (f.op()) {
      case LtlOp::True: return true;
      case LtlOp::False: return false;
      case LtlOp::Atom: return i < n && seq_[i].name() == f.atom_name();
      case LtlOp::Not: return !holds(f.arg(0), i);
      case LtlOp::And:
        return std::all_of(f.args().begin(), f.args().end(), [&](const Formula& a) { return holds(a, i); });
      case LtlOp::Or:
        return std::any_of(f.args().begin(), f.args().end(), [&](const Formula& a) { return holds(a, i); });
      case LtlOp::Implies: return !holds(f.arg(0), i) || holds(f.arg(1), i);
      case LtlOp::Next: return i + 1 < n && holds(f.arg(0), i + 1);
      case LtlOp::Globally:
        for (std::size_t j = i; j < n; ++j)
          if (!holds(f.arg(0), j)) return false;
        return true;
      case LtlOp::Finally:
        for (std::size_t j = i; j < n; ++j)
          if (holds(f.arg(0), j)) return true;
        return false;
      case LtlOp::Until:
      case LtlOp::WeakUntil:
        for (std::size_t j = i; j < n; ++j) {
          if (holds(f.arg(1), j)) return true;
          if (!holds(f.arg(0), j)) return false;
        }
        return f.op() == LtlOp::WeakUntil;
    }
    return false;
  }

  std::span<const Event> seq_;
  std::map<std::pair<const std::string*, std::size_t>, bool> memo_;
};

}  // namespace

bool ltlf_eval(const Formula& f, std::span<const Event> seq) { return Evaluator(seq).holds(f, 0); }

// ---------------------------------------------------------------------------
// Progression

namespace {

bool is_const(const Formula& f, LtlOp which) { return f.op() == which; }

Formula mk_not(const Formula& a) {
  if (a.op() == LtlOp::True) return Formula::falsity();
  if (a.op() == LtlOp::False) return Formula::truth();
  if (a.op() == LtlOp::Not) return a.arg(0);
  return Formula::negation(a);
}

// Flattened, sorted, deduplicated n-ary node with constant absorption.
Formula mk_nary(LtlOp op, const std::vector<Formula>& in) {
  const LtlOp unit = op == LtlOp::And ? LtlOp::True : LtlOp::False;
  const LtlOp zero = op == LtlOp::And ? LtlOp::False : LtlOp::True;
  std::map<std::string, Formula> parts;
  std::vector<const Formula*> stack;
  for (auto it = in.rbegin(); it != in.rend(); ++it) stack.push_back(&*it);
  while (!stack.empty()) {
    const Formula* f = stack.back();
    stack.pop_back();
    if (f->op() == op) {
      for (auto it = f->args().rbegin(); it != f->args().rend(); ++it) stack.push_back(&*it);
      continue;
    }
    if (is_const(*f, zero)) return zero == LtlOp::True ? Formula::truth() : Formula::falsity();
    if (is_const(*f, unit)) continue;
    parts.emplace(f->to_string(), *f);
  }
  for (const auto& [k, f] : parts)
    if (f.op() == LtlOp::Not && parts.count(f.arg(0).to_string()))
      return zero == LtlOp::True ? Formula::truth() : Formula::falsity();
  if (parts.empty()) return unit == LtlOp::True ? Formula::truth() : Formula::falsity();
  std::vector<Formula> args;
  for (auto& [k, f] : parts) args.push_back(f);
  if (args.size() == 1) return args[0];
  return op == LtlOp::And ? Formula::conjunction(args) : Formula::disjunction(args);
}

Formula mk_and(const Formula& a, const Formula& b) { return mk_nary(LtlOp::And, {a, b}); }
Formula mk_or(const Formula& a, const Formula& b) { return mk_nary(LtlOp::Or, {a, b}); }

const Formula& nonempty() {
  static const Formula f = Formula::finally(Formula::truth());
  return f;
}

}  // namespace

namespace {

// Boolean layer in disjunctive normal form. Literals are non-Boolean
// subformulas (atoms and temporal nodes) with a polarity.
using Literal = std::pair<std::string, bool>;
using Cube = std::vector<Literal>;  // sorted, no duplicates
using Dnf = std::vector<Cube>;

class DnfBuilder {
 public:
  Dnf convert(const Formula& f, bool positive) {
    switch (f.op()) {
      case LtlOp::True: return positive ? Dnf{Cube{}} : Dnf{};
      case LtlOp::False: return positive ? Dnf{} : Dnf{Cube{}};
      case LtlOp::Not: return convert(f.arg(0), !positive);
      case LtlOp::And:
      case LtlOp::Or: {
        const bool product = (f.op() == LtlOp::And) == positive;
        Dnf acc = product ? Dnf{Cube{}} : Dnf{};
        for (const auto& a : f.args()) {
          Dnf d = convert(a, positive);
          acc = product ? conjoin(acc, d) : disjoin(acc, d);
        }
        return acc;
      }
      case LtlOp::Implies:
        return positive ? disjoin(convert(f.arg(0), false), convert(f.arg(1), true))
                        : conjoin(convert(f.arg(0), true), convert(f.arg(1), false));
      default: {
        const Formula b = basis(f);
        if (b.op() == LtlOp::True || b.op() == LtlOp::False) return convert(b, positive);
        literals_.try_emplace(b.to_string(), b);
        return Dnf{Cube{{b.to_string(), positive}}};
      }
    }
  }

  Formula rebuild(const Dnf& d) const {
    if (d.empty()) return Formula::falsity();
    std::vector<Formula> terms;
    for (const auto& c : d) {
      std::vector<Formula> lits;
      for (const auto& [k, pos] : c) {
        const Formula& b = literals_.at(k);
        lits.push_back(pos ? b : Formula::negation(b));
      }
      if (lits.empty()) return Formula::truth();
      terms.push_back(lits.size() == 1 ? lits[0] : Formula::conjunction(lits));
    }
    return terms.size() == 1 ? terms[0] : Formula::disjunction(terms);
  }

 private:
  static Formula basis(const Formula& f);

  static bool subsumes(const Cube& small, const Cube& big) {
    return std::includes(big.begin(), big.end(), small.begin(), small.end());
  }

  static Dnf prune(Dnf d) {
    std::sort(d.begin(), d.end(), [](const Cube& a, const Cube& b) {
      return a.size() != b.size() ? a.size() < b.size() : a < b;
    });
    d.erase(std::unique(d.begin(), d.end()), d.end());
    Dnf out;
    for (const auto& c : d)
      if (std::none_of(out.begin(), out.end(), [&](const Cube& k) { return subsumes(k, c); })) out.push_back(c);
    std::sort(out.begin(), out.end());
    return out;
  }

  static Dnf disjoin(const Dnf& a, const Dnf& b) {
    Dnf out = a;
    out.insert(out.end(), b.begin(), b.end());
    return prune(std::move(out));
  }

  static Dnf conjoin(const Dnf& a, const Dnf& b) {
    Dnf out;
    for (const auto& x : a)
      for (const auto& y : b) {
        Cube c;
        std::set_union(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(c));
        c.erase(std::unique(c.begin(), c.end()), c.end());
        bool clash = false;
        for (std::size_t i = 1; i < c.size() && !clash; ++i) clash = c[i].first == c[i - 1].first;
        if (!clash) out.push_back(std::move(c));
      }
    return prune(std::move(out));
  }

  std::map<std::string, Formula> literals_;
};

Formula normalize(const Formula& f) {
  DnfBuilder b;
  return b.rebuild(b.convert(f, true));
}

// Simplifies a non-Boolean node: arguments are normalized recursively and a
// few temporal identities applied.
Formula DnfBuilder::basis(const Formula& f) {
  switch (f.op()) {
    case LtlOp::Atom: return f;
    case LtlOp::Next: {
      Formula a = normalize(f.arg(0));
      if (a.op() == LtlOp::False) return a;
      return Formula::next(a);
    }
    case LtlOp::Globally: {
      Formula a = normalize(f.arg(0));
      if (a.op() == LtlOp::True || a.op() == LtlOp::Globally) return a;
      return Formula::globally(a);
    }
    case LtlOp::Finally: {
      Formula a = normalize(f.arg(0));
      if (a.op() == LtlOp::False || a.op() == LtlOp::Finally) return a;
      return Formula::finally(a);
    }
    case LtlOp::Until: {
      Formula a = normalize(f.arg(0)), b = normalize(f.arg(1));
      if (b.op() == LtlOp::False) return b;
      if (a.op() == LtlOp::False) return normalize(mk_and(b, nonempty()));
      if (a.op() == LtlOp::True) return b.op() == LtlOp::Finally ? b : Formula::finally(b);
      return Formula::until(a, b);
    }
    case LtlOp::WeakUntil: {
      Formula a = normalize(f.arg(0)), b = normalize(f.arg(1));
      if (b.op() == LtlOp::True || a.op() == LtlOp::True) return Formula::truth();
      if (b.op() == LtlOp::False) return a.op() == LtlOp::Globally ? a : Formula::globally(a);
      if (a.op() == LtlOp::False) return normalize(mk_or(b, mk_not(nonempty())));
      return Formula::weak_until(a, b);
    }
    default: return normalize(f);
  }
}

}  // namespace

Formula simplify(const Formula& f) { return normalize(f); }

namespace {

// One progression step; callers normalize the result.
Formula prog(const Formula& f, const std::string& e) {
  switch (f.op()) {
    case LtlOp::True:
    case LtlOp::False: return f;
    case LtlOp::Atom: return f.atom_name() == e ? Formula::truth() : Formula::falsity();
    case LtlOp::Not: return mk_not(prog(f.arg(0), e));
    case LtlOp::And:
    case LtlOp::Or: {
      std::vector<Formula> args;
      for (const auto& a : f.args()) args.push_back(prog(a, e));
      return mk_nary(f.op(), args);
    }
    case LtlOp::Implies: return mk_or(mk_not(prog(f.arg(0), e)), prog(f.arg(1), e));
    case LtlOp::Next: return mk_and(f.arg(0), nonempty());
    case LtlOp::Globally: return mk_and(prog(f.arg(0), e), f);
    case LtlOp::Finally: return mk_or(prog(f.arg(0), e), f);
    case LtlOp::Until: return mk_or(prog(f.arg(1), e), mk_and(prog(f.arg(0), e), f));
    case LtlOp::WeakUntil: return mk_or(prog(f.arg(1), e), mk_and(prog(f.arg(0), e), f));
  }
  return f;
}

}  // namespace

Formula progress(const Formula& f, const std::string& event) { return normalize(prog(simplify(f), event)); }

bool accepts_empty(const Formula& f) {
  switch (f.op()) {
    case LtlOp::True: return true;
    case LtlOp::False: return false;
    case LtlOp::Atom: return false;
    case LtlOp::Not: return !accepts_empty(f.arg(0));
    case LtlOp::And:
      return std::all_of(f.args().begin(), f.args().end(), [](const Formula& a) { return accepts_empty(a); });
    case LtlOp::Or:
      return std::any_of(f.args().begin(), f.args().end(), [](const Formula& a) { return accepts_empty(a); });
    case LtlOp::Implies: return !accepts_empty(f.arg(0)) || accepts_empty(f.arg(1));
    case LtlOp::Next: return false;
    case LtlOp::Globally: return true;
    case LtlOp::Finally: return false;
    case LtlOp::Until: return false;
    case LtlOp::WeakUntil: return true;
  }
  return false;
}

}  // namespace cdq
