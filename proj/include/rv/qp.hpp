// ============================================================================
// rv/qp.hpp — small exact solvers for the convex subproblems used here
// ============================================================================
//
// Three tools, all dependency-free and sized for desk-scale problems:
//
//   min_norm_point    exact minimum-norm point in a convex hull (Wolfe's
//                     method); backbone of the SVM dual solve
//   project_polytope  exact Euclidean projection onto {d | A d <= b} by
//                     active-subset enumeration over decoupled variable
//                     blocks; doubles as an emptiness test
//   solve_qp_hildreth dual coordinate ascent for strictly convex QPs
//                     (the MPC subproblems)
//
// ============================================================================

#ifndef RV_QP_HPP
#define RV_QP_HPP

#include "rv/trace.hpp"

namespace rv::qp {

struct MinNormResult {
  Vec point;     // the minimum-norm point q* in conv(rows)
  Vec weights;   // convex weights over the input rows, sums to 1
  int iterations = 0;
  bool converged = true;
};

/// Minimum-norm point in the convex hull of the rows of `vertices`.
/// Wolfe's algorithm; exact up to floating point in finitely many steps.
MinNormResult min_norm_point(const Mat& vertices, double tol = 1e-12);

struct ProjectionResult {
  Vec point;
  bool feasible = false;  // false means {d | A d <= b} is empty
  double distance = 0.0;  // ||point - target||_2 when feasible
};

/// argmin ||d - target|| s.t. A d <= b.  Exact via enumeration of active
/// constraint subsets, run independently per decoupled variable block.
/// Blocks are the connected components of the variable-sharing graph of A;
/// a block whose subset count would exceed `enumeration_cap` raises
/// NumericError (never hit by the shipped problem sizes).
ProjectionResult project_polytope(const Mat& A, const Vec& b, const Vec& target,
                                  long enumeration_cap = 2000000);

struct QpResult {
  Vec x;
  Vec lambda;
  bool feasible = true;
  bool converged = true;
  double residual = 0.0;  // max constraint violation at x
  int sweeps = 0;
};

/// min 1/2 x'Px + q'x  s.t.  A x <= b, with P symmetric positive definite.
/// Hildreth's dual coordinate ascent.  Infeasible problems are reported via
/// feasible=false (diverging multipliers / residual that will not close).
QpResult solve_qp_hildreth(const Mat& P, const Vec& q, const Mat& A, const Vec& b,
                           int max_sweeps = 5000, double tol = 1e-11);

}  // namespace rv::qp

#endif  // RV_QP_HPP
