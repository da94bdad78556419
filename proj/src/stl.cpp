#include "rv/stl.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <utility>

namespace rv::stl {

struct FormulaAccess {
  static FormulaPtr make(NodeKind k, Interval iv, std::string p, FormulaPtr l,
                         FormulaPtr r) {
    return FormulaPtr(new Formula(k, iv, std::move(p), std::move(l), std::move(r)));
  }
};

FormulaPtr Formula::make_true() {
  return FormulaAccess::make(NodeKind::True, {}, {}, nullptr, nullptr);
}
FormulaPtr Formula::pred(std::string name) {
  if (name.empty()) throw ConfigError("predicate name must be non-empty");
  return FormulaAccess::make(NodeKind::Predicate, {}, std::move(name), nullptr, nullptr);
}
FormulaPtr Formula::negation(FormulaPtr f) {
  if (!f) throw ConfigError("null formula operand");
  return FormulaAccess::make(NodeKind::Not, {}, {}, std::move(f), nullptr);
}
FormulaPtr Formula::conjunction(FormulaPtr f, FormulaPtr g) {
  if (!f || !g) throw ConfigError("null formula operand");
  return FormulaAccess::make(NodeKind::And, {}, {}, std::move(f), std::move(g));
}
FormulaPtr Formula::disjunction(FormulaPtr f, FormulaPtr g) {
  if (!f || !g) throw ConfigError("null formula operand");
  return FormulaAccess::make(NodeKind::Or, {}, {}, std::move(f), std::move(g));
}
FormulaPtr Formula::until(Interval iv, FormulaPtr f, FormulaPtr g) {
  if (!f || !g) throw ConfigError("null formula operand");
  return FormulaAccess::make(NodeKind::Until, iv, {}, std::move(f), std::move(g));
}
FormulaPtr Formula::eventually(Interval iv, FormulaPtr f) {
  if (!f) throw ConfigError("null formula operand");
  return FormulaAccess::make(NodeKind::Eventually, iv, {}, std::move(f), nullptr);
}
FormulaPtr Formula::always(Interval iv, FormulaPtr f) {
  if (!f) throw ConfigError("null formula operand");
  return FormulaAccess::make(NodeKind::Always, iv, {}, std::move(f), nullptr);
}

double horizon(const Formula& f) {
  switch (f.kind) {
    case NodeKind::True:
    case NodeKind::Predicate:
      return 0.0;
    case NodeKind::Not:
      return horizon(*f.left);
    case NodeKind::And:
    case NodeKind::Or:
      return std::max(horizon(*f.left), horizon(*f.right));
    case NodeKind::Eventually:
    case NodeKind::Always:
      return f.interval.b + horizon(*f.left);
    case NodeKind::Until:
      return f.interval.b + std::max(horizon(*f.left), horizon(*f.right));
  }
  throw Error("unreachable formula kind");
}

namespace {

// Sample-index window for interval [a,b] at step dt.  Floor/ceil so the
// discrete window always covers the continuous one.
std::pair<int, int> sample_window(const Interval& iv, double dt) {
  if (!(dt > 0.0)) throw FormatError("trace dt must be positive");
  int ia = static_cast<int>(std::floor(iv.a / dt));
  int ib = static_cast<int>(std::ceil(iv.b / dt));
  return {ia, ib};
}

struct EvalCtx {
  const Trace& trace;
  const PredicateMap& preds;
  bool marginal = false;
  std::map<std::pair<const Formula*, int>, double> memo;

  int length() const { return trace.length(); }

  double pred_value(const std::string& name, int t) {
    if (t < 0 || t >= length())
      throw HorizonError("predicate evaluated outside trace at index " +
                         std::to_string(t));
    auto it = preds.find(name);
    if (it == preds.end()) throw UnknownPredicateError("unknown predicate: " + name);
    double v = it->second(trace.samples[static_cast<std::size_t>(t)]);
    if (std::isnan(v)) throw NumericError("predicate " + name + " returned NaN");
    if (v == 0.0) marginal = true;
    return v;
  }

  void check_window(int t, int ib) const {
    if (t + ib >= length())
      throw HorizonError("trace of " + std::to_string(length()) +
                         " samples too short: window reaches index " +
                         std::to_string(t + ib));
  }
};

// Boolean semantics, evaluated in full (no short circuit) so that every
// predicate in scope is probed and marginal zeros are always detected.
bool sat_rec(const Formula& f, int t, EvalCtx& ctx) {
  switch (f.kind) {
    case NodeKind::True:
      if (t < 0 || t >= ctx.length())
        throw HorizonError("formula evaluated outside trace at index " +
                           std::to_string(t));
      return true;
    case NodeKind::Predicate:
      return ctx.pred_value(f.predicate, t) >= 0.0;
    case NodeKind::Not:
      return !sat_rec(*f.left, t, ctx);
    case NodeKind::And: {
      bool a = sat_rec(*f.left, t, ctx);
      bool b = sat_rec(*f.right, t, ctx);
      return a && b;
    }
    case NodeKind::Or: {
      bool a = sat_rec(*f.left, t, ctx);
      bool b = sat_rec(*f.right, t, ctx);
      return a || b;
    }
    case NodeKind::Eventually: {
      auto [ia, ib] = sample_window(f.interval, ctx.trace.dt);
      ctx.check_window(t, ib);
      bool any = false;
      for (int j = t + ia; j <= t + ib; ++j) any = sat_rec(*f.left, j, ctx) || any;
      return any;
    }
    case NodeKind::Always: {
      auto [ia, ib] = sample_window(f.interval, ctx.trace.dt);
      ctx.check_window(t, ib);
      bool all = true;
      for (int j = t + ia; j <= t + ib; ++j) all = sat_rec(*f.left, j, ctx) && all;
      return all;
    }
    case NodeKind::Until: {
      auto [ia, ib] = sample_window(f.interval, ctx.trace.dt);
      ctx.check_window(t, ib);
      bool any = false;
      for (int j = t + ia; j <= t + ib; ++j) {
        bool here = sat_rec(*f.right, j, ctx);
        for (int i = t; i <= j; ++i) here = sat_rec(*f.left, i, ctx) && here;
        any = any || here;
      }
      return any;
    }
  }
  throw Error("unreachable formula kind");
}

double rob_rec(const Formula& f, int t, EvalCtx& ctx) {
  auto key = std::make_pair(&f, t);
  auto hit = ctx.memo.find(key);
  if (hit != ctx.memo.end()) return hit->second;

  double r = 0.0;
  switch (f.kind) {
    case NodeKind::True:
      if (t < 0 || t >= ctx.length())
        throw HorizonError("formula evaluated outside trace at index " +
                           std::to_string(t));
      r = std::numeric_limits<double>::infinity();
      break;
    case NodeKind::Predicate:
      r = ctx.pred_value(f.predicate, t);
      break;
    case NodeKind::Not:
      r = -rob_rec(*f.left, t, ctx);
      break;
    case NodeKind::And:
      r = std::min(rob_rec(*f.left, t, ctx), rob_rec(*f.right, t, ctx));
      break;
    case NodeKind::Or:
      r = std::max(rob_rec(*f.left, t, ctx), rob_rec(*f.right, t, ctx));
      break;
    case NodeKind::Eventually: {
      auto [ia, ib] = sample_window(f.interval, ctx.trace.dt);
      ctx.check_window(t, ib);
      r = -std::numeric_limits<double>::infinity();
      for (int j = t + ia; j <= t + ib; ++j) r = std::max(r, rob_rec(*f.left, j, ctx));
      break;
    }
    case NodeKind::Always: {
      auto [ia, ib] = sample_window(f.interval, ctx.trace.dt);
      ctx.check_window(t, ib);
      r = std::numeric_limits<double>::infinity();
      for (int j = t + ia; j <= t + ib; ++j) r = std::min(r, rob_rec(*f.left, j, ctx));
      break;
    }
    case NodeKind::Until: {
      auto [ia, ib] = sample_window(f.interval, ctx.trace.dt);
      ctx.check_window(t, ib);
      r = -std::numeric_limits<double>::infinity();
      double prefix = std::numeric_limits<double>::infinity();
      for (int i = t; i < t + ia; ++i) prefix = std::min(prefix, rob_rec(*f.left, i, ctx));
      for (int j = t + ia; j <= t + ib; ++j) {
        prefix = std::min(prefix, rob_rec(*f.left, j, ctx));
        r = std::max(r, std::min(rob_rec(*f.right, j, ctx), prefix));
      }
      break;
    }
  }
  ctx.memo.emplace(key, r);
  return r;
}

}  // namespace

SatVerdict satisfies_verdict(const Formula& f, const Trace& trace, int t,
                             const PredicateMap& preds) {
  EvalCtx ctx{trace, preds};
  SatVerdict v;
  v.satisfied = sat_rec(f, t, ctx);
  v.marginal = ctx.marginal;
  return v;
}

bool satisfies(const Formula& f, const Trace& trace, int t, const PredicateMap& preds) {
  return satisfies_verdict(f, trace, t, preds).satisfied;
}

double robustness(const Formula& f, const Trace& trace, int t,
                  const PredicateMap& preds) {
  EvalCtx ctx{trace, preds};
  return rob_rec(f, t, ctx);
}

// ── Parser ──────────────────────────────────────────────────────────────────

namespace {

class Parser {
public:
  explicit Parser(const std::string& text) : s_(text) {}

  FormulaPtr run() {
    FormulaPtr f = parse_or();
    skip_ws();
    if (pos_ < s_.size()) fail("unexpected trailing input");
    return f;
  }

private:
  const std::string& s_;
  std::size_t pos_ = 0;

  [[noreturn]] void fail(const std::string& msg) { throw ParseError(msg, pos_); }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  char peek() {
    skip_ws();
    return pos_ < s_.size() ? s_[pos_] : '\0';
  }

  bool consume(char c) {
    if (peek() == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c, const char* what) {
    if (!consume(c)) fail(std::string("expected '") + c + "' " + what);
  }

  static bool ident_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
  }
  static bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
  }

  // Peeks an identifier without consuming; empty string if none.
  std::string peek_ident() {
    skip_ws();
    if (pos_ >= s_.size() || !ident_start(s_[pos_])) return {};
    std::size_t end = pos_;
    while (end < s_.size() && ident_char(s_[end])) ++end;
    return s_.substr(pos_, end - pos_);
  }

  void consume_ident(const std::string& id) { pos_ += id.size(); }

  // True when the next token after `id` (already peeked, not consumed)
  // opens an interval, marking id as a temporal operator rather than a
  // predicate name.
  bool interval_follows(const std::string& id) {
    std::size_t save = pos_;
    consume_ident(id);
    bool yes = peek() == '[';
    pos_ = save;
    return yes;
  }

  double number() {
    skip_ws();
    const char* begin = s_.c_str() + pos_;
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end == begin) fail("expected a number");
    if (!std::isfinite(v)) fail("interval bound must be finite");
    pos_ += static_cast<std::size_t>(end - begin);
    return v;
  }

  Interval interval_suffix() {
    expect('[', "to open interval");
    double a = number();
    expect(',', "between interval bounds");
    double b = number();
    expect(']', "to close interval");
    if (a < 0.0 || b < a) fail("interval must satisfy 0 <= a <= b");
    return Interval(a, b);
  }

  FormulaPtr parse_or() {
    FormulaPtr f = parse_and();
    while (consume('|')) f = Formula::disjunction(f, parse_and());
    return f;
  }

  FormulaPtr parse_and() {
    FormulaPtr f = parse_until();
    while (consume('&')) f = Formula::conjunction(f, parse_until());
    return f;
  }

  FormulaPtr parse_until() {
    FormulaPtr f = parse_unary();
    std::string id = peek_ident();
    if (id == "U" && interval_follows(id)) {
      consume_ident(id);
      Interval iv = interval_suffix();
      return Formula::until(iv, f, parse_until());
    }
    return f;
  }

  FormulaPtr parse_unary() {
    if (consume('!')) return Formula::negation(parse_unary());
    std::string id = peek_ident();
    if ((id == "G" || id == "F") && interval_follows(id)) {
      consume_ident(id);
      Interval iv = interval_suffix();
      FormulaPtr child = parse_unary();
      return id == "G" ? Formula::always(iv, child) : Formula::eventually(iv, child);
    }
    return parse_atom();
  }

  FormulaPtr parse_atom() {
    if (consume('(')) {
      FormulaPtr f = parse_or();
      expect(')', "to close group");
      return f;
    }
    std::string id = peek_ident();
    if (id.empty()) fail("expected a formula");
    consume_ident(id);
    if (id == "true") return Formula::make_true();
    return Formula::pred(id);
  }
};

// Precedence levels for the printer; parenthesize a child whose level is
// below what its position requires.
int level(NodeKind k) {
  switch (k) {
    case NodeKind::Or: return 1;
    case NodeKind::And: return 2;
    case NodeKind::Until: return 3;
    case NodeKind::Not:
    case NodeKind::Eventually:
    case NodeKind::Always: return 4;
    case NodeKind::True:
    case NodeKind::Predicate: return 5;
  }
  return 5;
}

std::string interval_text(const Interval& iv) {
  return "[" + format_double(iv.a) + "," + format_double(iv.b) + "]";
}

void print_rec(const Formula& f, int min_level, std::string& out) {
  bool parens = level(f.kind) < min_level;
  if (parens) out += '(';
  switch (f.kind) {
    case NodeKind::True:
      out += "true";
      break;
    case NodeKind::Predicate:
      out += f.predicate;
      break;
    case NodeKind::Not:
      out += '!';
      print_rec(*f.left, 4, out);
      break;
    case NodeKind::And:
      print_rec(*f.left, 2, out);
      out += " & ";
      print_rec(*f.right, 3, out);
      break;
    case NodeKind::Or:
      print_rec(*f.left, 1, out);
      out += " | ";
      print_rec(*f.right, 2, out);
      break;
    case NodeKind::Until:
      print_rec(*f.left, 4, out);
      out += " U";
      out += interval_text(f.interval);
      out += ' ';
      print_rec(*f.right, 3, out);
      break;
    case NodeKind::Eventually:
      out += 'F';
      out += interval_text(f.interval);
      out += ' ';
      print_rec(*f.left, 4, out);
      break;
    case NodeKind::Always:
      out += 'G';
      out += interval_text(f.interval);
      out += ' ';
      print_rec(*f.left, 4, out);
      break;
  }
  if (parens) out += ')';
}

}  // namespace

FormulaPtr parse_formula(const std::string& text) { return Parser(text).run(); }

std::string print_formula(const Formula& f) {
  std::string out;
  print_rec(f, 1, out);
  return out;
}

}  // namespace rv::stl
