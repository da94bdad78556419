// ============================================================================
// rv/stl.hpp — signal temporal logic over finite fixed-step traces
// ============================================================================
//
// Formulas are immutable shared ASTs built from:
//
//   true | <pred> | !f | f & g | f | g | f U[a,b] g | F[a,b] f | G[a,b] f
//
// A predicate is a bare identifier bound at evaluation time to a scalar
// function of a trace sample, with satisfaction meaning f(sample) > 0.
// Intervals are in seconds and mapped to sample windows by flooring a/dt
// and ceiling b/dt, so the discrete window always covers the real one.
//
// ============================================================================

#ifndef RV_STL_HPP
#define RV_STL_HPP

#include <functional>
#include <map>
#include <memory>
#include <string>

#include "rv/trace.hpp"

namespace rv::stl {

enum class NodeKind : std::uint8_t {
  True,
  Predicate,
  Not,
  And,
  Or,
  Until,
  Eventually,
  Always,
};

struct Interval {
  double a = 0.0;
  double b = 0.0;

  Interval() = default;
  Interval(double a_, double b_) : a(a_), b(b_) {
    if (!(a >= 0.0) || !(b >= a) || !std::isfinite(b))
      throw ConfigError("interval must satisfy 0 <= a <= b < inf");
  }
};

class Formula;
using FormulaPtr = std::shared_ptr<const Formula>;

class Formula {
public:
  NodeKind kind;
  Interval interval;      // temporal nodes only
  std::string predicate;  // Predicate nodes only
  FormulaPtr left;        // unary child / left operand
  FormulaPtr right;       // Until right operand

  static FormulaPtr make_true();
  static FormulaPtr pred(std::string name);
  static FormulaPtr negation(FormulaPtr f);
  static FormulaPtr conjunction(FormulaPtr f, FormulaPtr g);
  static FormulaPtr disjunction(FormulaPtr f, FormulaPtr g);
  static FormulaPtr until(Interval iv, FormulaPtr f, FormulaPtr g);
  static FormulaPtr eventually(Interval iv, FormulaPtr f);
  static FormulaPtr always(Interval iv, FormulaPtr f);

private:
  Formula(NodeKind k, Interval iv, std::string p, FormulaPtr l, FormulaPtr r)
      : kind(k), interval(iv), predicate(std::move(p)), left(std::move(l)),
        right(std::move(r)) {}
  friend struct FormulaAccess;
};

/// Scalar evaluation of a predicate over one trace sample.
using PredicateFn = std::function<double(const TraceSample&)>;
using PredicateMap = std::map<std::string, PredicateFn>;

/// Minimal trace duration beyond t needed to evaluate the formula, seconds.
double horizon(const Formula& f);

struct SatVerdict {
  bool satisfied = false;
  /// Some predicate on the deciding path evaluated to exactly zero; the
  /// strict `> 0` semantics is ambiguous there and we report satisfied.
  bool marginal = false;
};

/// Boolean semantics by direct recursion over the paper-style definition.
SatVerdict satisfies_verdict(const Formula& f, const Trace& trace, int t,
                             const PredicateMap& preds);
bool satisfies(const Formula& f, const Trace& trace, int t, const PredicateMap& preds);

/// Quantitative space robustness: predicates score f(sample); ! negates,
/// & min, | max, F max-over-window, G min-over-window, U max-min.
/// Positive implies satisfied, negative implies violated.
double robustness(const Formula& f, const Trace& trace, int t, const PredicateMap& preds);

// ── Text form ───────────────────────────────────────────────────────────────
//
//   or      := and ('|' and)*
//   and     := until ('&' until)*
//   until   := unary ('U' '[' num ',' num ']' until)?
//   unary   := '!' unary | 'G[' num ',' num ']' unary
//            | 'F[' num ',' num ']' unary | atom
//   atom    := 'true' | identifier | '(' or ')'
//
// parse_formula(print_formula(f)) reproduces f node for node.

FormulaPtr parse_formula(const std::string& text);
std::string print_formula(const Formula& f);

}  // namespace rv::stl

#endif  // RV_STL_HPP
