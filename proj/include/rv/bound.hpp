// ============================================================================
// rv/bound.hpp — reactive disturbance bounds
// ============================================================================
//
// A reactive bound is the sublevel-set description S_d(x) = {d | h(x,d) >= 0}
// of the disturbances the environment has been observed to use at state x.
// h is a min over hyperplanes in feature space; with two regions the
// hyperplanes are blended by a sigmoid membership in a scalar region
// function g(x).  When the feature map is linear in d the bound at a fixed
// state is a polytope, which is what the falsifier projects onto.
//
// ============================================================================

#ifndef RV_BOUND_HPP
#define RV_BOUND_HPP

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rv/trace.hpp"

namespace rv {

struct FeatureMap {
  std::string id;
  int p = 0;  // feature dimension
  int n = 0;  // state dimension
  int k = 0;  // disturbance dimension
  bool linear_in_d = false;
  std::function<Vec(const Vec& x, const Vec& d)> eval;
  // When linear_in_d: phi(x,d) = d_matrix(x) * d + d_offset(x).
  std::function<Mat(const Vec& x)> d_matrix;
  std::function<Vec(const Vec& x)> d_offset;
};

/// Numerical spot check that the declared decomposition reproduces eval and
/// that phi(x,d) - phi(x,0) is linear in d.
bool check_linear_in_d(const FeatureMap& f, const Box& x_box, const Box& d_box,
                       std::uint64_t seed = 0, int trials = 20, double tol = 1e-7);

struct Hyperplane {
  Vec v;
  double c = 0.0;
};

struct PiecewiseReactiveBound {
  std::string g_id;                              // empty for a single region
  std::function<double(const Vec&)> g;           // region function on states
  double kappa = 0.0;
  double gamma = 1.0;
  std::vector<std::vector<Hyperplane>> regions;  // 1 or 2 lists, equal length
  FeatureMap features;
  Box d_box;                                     // physical disturbance box
  // Batch hashes for the certificate protocol: which data tuned kappa and
  // which (fresh) data the hyperplanes were fit on.
  std::uint64_t kappa_tuned_on = 0;
  std::uint64_t hyperplanes_fit_on = 0;

  int n_regions() const { return static_cast<int>(regions.size()); }
  int n_hyperplanes() const {
    return regions.empty() ? 0 : static_cast<int>(regions.front().size());
  }
};

/// Sigmoid region memberships (m1, m2) with m1 + m2 = 1 exactly and
/// overflow-safe exponentials.
std::pair<double, double> membership(double gz, double kappa, double gamma);

/// h(x,d) = min_j sum_r m_r(x) (v_{r,j}' phi(x,d) + c_{r,j}).
double evaluate_h(const PiecewiseReactiveBound& bound, const Vec& x, const Vec& d);

struct Polytope {
  Mat A;
  Vec b;
  bool empty = false;
};

/// The bound at state x as {d | A d <= b}: one row per hyperplane plus the
/// rows of the physical box.  Requires a linear-in-d feature map.
Polytope bound_polytope(const PiecewiseReactiveBound& bound, const Vec& x);

/// Euclidean projection of d_raw onto the bound polytope at x.
/// Throws EmptyPolytopeError when the polytope is empty.
Vec project_to_bound(const PiecewiseReactiveBound& bound, const Vec& x, const Vec& d_raw);

/// Function registry used to rebind callable fields when loading a bound.
struct BoundContext {
  std::map<std::string, FeatureMap> feature_maps;
  std::map<std::string, std::function<double(const Vec&)>> region_fns;
};

void save_bound(const PiecewiseReactiveBound& bound, const std::string& path);
PiecewiseReactiveBound load_bound(const std::string& path, const BoundContext& ctx);

}  // namespace rv

#endif  // RV_BOUND_HPP
