// ============================================================================
// rv/falsify.hpp — stochastic search for specification-violating inputs
// ============================================================================
//
// The falsifier drives the environment signal of a closed-loop model through
// a piecewise-constant parameterization and minimizes STL robustness with
// simulated annealing over the control points.  When a reactive bound is
// supplied, every step's raw disturbance is projected onto the admissible
// polytope at the current state before it reaches the plant, so search only
// explores behavior the bound allows.

#ifndef RV_FALSIFY_HPP
#define RV_FALSIFY_HPP

#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "rv/bound.hpp"
#include "rv/stl.hpp"
#include "rv/trace.hpp"

namespace rv {

struct InputParameterization {
  int K = 10;           // control points, held piecewise-constant
  double horizon = 0;   // signal duration, seconds
  Box ranges;           // per-component value box for every control point
};

struct FalsificationResult {
  bool falsified = false;
  Trace best_trace;
  double best_robustness = std::numeric_limits<double>::infinity();
  Vec best_points;            // flattened control points, point-major
  long long evaluations = 0;  // rollouts actually scored
  std::uint64_t seed = 0;
  int empty_projections = 0;  // rollouts abandoned on an empty bound polytope
};

struct FalsifierOptions {
  int restarts = 10;
  double sigma_frac = 0.1;  // proposal sigma as a fraction of each range
  double decay = 0.97;      // temperature factor per accepted move
};

/// Minimize robustness of `phi` over environment signals within `budget`
/// rollouts.  Verdict is falsified only when the best trace both scores
/// negative robustness and fails the independent boolean check.  Rollouts
/// whose projection polytope comes up empty score +inf and are counted.
/// Identical inputs and seed reproduce identical results, and a larger
/// budget can only lower the best robustness (restart streams are
/// prefix-consistent).
FalsificationResult falsify(const SystemModel& model, Controller& controller,
                            const Vec& x0, const PiecewiseReactiveBound* bound,
                            const stl::FormulaPtr& phi, const stl::PredicateMap& preds,
                            const InputParameterization& param, long long budget,
                            std::uint64_t seed, const FalsifierOptions& opt = {});

/// Uniform samples of the search space for diagnostics: sample i draws from
/// the same stream as falsify's restart i, so with samples == restarts the
/// landscape minimum can never beat falsify at the same seed.
std::vector<std::pair<Vec, double>> robustness_landscape(
    const SystemModel& model, Controller& controller, const Vec& x0,
    const PiecewiseReactiveBound* bound, const stl::FormulaPtr& phi,
    const stl::PredicateMap& preds, const InputParameterization& param, int samples,
    std::uint64_t seed);

}  // namespace rv

#endif  // RV_FALSIFY_HPP
