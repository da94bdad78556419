// ============================================================================
// rv/svm.hpp — L1 SVM bound learning
// ============================================================================
//
// Learns the indicator h from labeled snapshots.  The base problem is
//
//     min_{v,c}  sum_i k_i (v'phi_i + c)
//     s.t.       ||v||_2 <= 1,   v'phi_i + c >= 0  for every positive i,
//
// i.e. positives are hard constraints (zero false negatives) and the
// weighted sum of signed margins is pushed down so negatives fall outside.
// Slack elimination reduces it to a min-max over the unit ball, which is
// solved exactly: projected subgradient for a warm start, then a
// minimum-norm-point polish on the active-vertex hull.
//
// Note on slack conventions: the stored slack vector M uses the signed form
// M_i = y_i (v'phi_i + c), so positives satisfy M_i >= 0.  The objective and
// the weighted split m_nw/m_nc refer to the raw margin v'phi_i + c.
//
// ============================================================================

#ifndef RV_SVM_HPP
#define RV_SVM_HPP

#include <functional>
#include <string>
#include <vector>

#include "rv/bound.hpp"
#include "rv/trace.hpp"

namespace rv {

struct SvmSolution {
  Vec v;
  double c = 0.0;
  Vec M;     // per-point slacks, positives first: M_i = y_i (v'phi_i + c)
  Vec m_nw;  // weighted variant only: wrong-side part of each negative margin
  Vec m_nc;  // weighted variant only: correct-side part (<= 0)
  double objective = 0.0;  // sum_i k_i (v'phi_i + c)
  bool converged = true;
  int iterations = 0;
  double dual_gap = 0.0;  // primal objective minus the exact dual value
};

/// Matrix-level solver: rows of phi_pos/phi_neg are feature vectors.
SvmSolution solve_l1_svm_raw(const Mat& phi_pos, const Mat& phi_neg,
                             const Vec& k_pos, const Vec& k_neg);

/// Snapshot-level wrapper; k holds positive weights first, then negative.
SvmSolution solve_l1_svm(const std::vector<Snapshot>& positives,
                         const std::vector<Snapshot>& negatives,
                         const FeatureMap& features, const Vec& k);

/// Weighted variant: negative margins are charged k_nw on the wrong side and
/// credited k_nc on the correct side (k_nc <= k_nw elementwise, both >= 0).
SvmSolution solve_weighted_svm_raw(const Mat& phi_pos, const Mat& phi_neg,
                                   const Vec& k_p, const Vec& k_nc, const Vec& k_nw);
SvmSolution solve_weighted_svm(const std::vector<Snapshot>& positives,
                               const std::vector<Snapshot>& negatives,
                               const FeatureMap& features, const Vec& k_p,
                               const Vec& k_nc, const Vec& k_nw);

/// Greedy multi-hyperplane fit: each round solves the SVM against the still
/// active negatives, then drops the ones now separated by at least
/// eps_active.  Stops after n_h rounds or when nothing stays active.
std::vector<Hyperplane> multi_hyperplane_svm_raw(const Mat& phi_pos, const Mat& phi_neg,
                                                 int n_h, double eps_active);
std::vector<Hyperplane> multi_hyperplane_svm(const std::vector<Snapshot>& positives,
                                             const std::vector<Snapshot>& negatives,
                                             const FeatureMap& features, int n_h,
                                             double eps_active);

/// Feature matrix for a snapshot batch (one row per snapshot).
Mat feature_matrix(const FeatureMap& features, const std::vector<Snapshot>& snaps);

/// Doubled feature map [m1*phi; m2*phi] for the two-region fit; still
/// linear in d when the base map is.
FeatureMap extend_features(const FeatureMap& base,
                           const std::function<double(const Vec&)>& g,
                           double kappa, double gamma);

/// d/dkappa of the objective for a solution on extended features, v and c
/// held fixed:  sum_i k_i gamma m1_i m2_i (v_1' phi_i - v_2' phi_i).
double kappa_objective_gradient(const SvmSolution& solution,
                                const std::vector<Snapshot>& positives,
                                const std::vector<Snapshot>& negatives, double kappa,
                                double gamma, const std::function<double(const Vec&)>& g,
                                const FeatureMap& features, const Vec& k);

struct AutotuneResult {
  PiecewiseReactiveBound bound;
  std::vector<double> kappa_trajectory;     // kappa at each iteration start
  std::vector<double> objective_trajectory; // stage objective at that kappa
  std::vector<double> gradient_trajectory;
  double best_objective = 0.0;
  bool converged = true;
};

/// Alternates multi-hyperplane fits with gradient steps on kappa and returns
/// the bound for the best kappa seen.  step0 < 0 selects the default schedule
/// eta_t = 0.1 * range(g) / sqrt(t); step0 == 0 disables kappa motion.
AutotuneResult autotune_piecewise_svm(const std::vector<Snapshot>& positives,
                                      const std::vector<Snapshot>& negatives,
                                      const FeatureMap& features, const std::string& g_id,
                                      const std::function<double(const Vec&)>& g,
                                      double gamma, double kappa0, int iterations, int n_h,
                                      double eps_active, const Box& d_box,
                                      double step0 = -1.0);

/// Wrap plain hyperplanes as a one-region bound.
PiecewiseReactiveBound single_region_bound(const FeatureMap& features,
                                           const std::vector<Hyperplane>& planes,
                                           const Box& d_box);

}  // namespace rv

#endif  // RV_SVM_HPP
