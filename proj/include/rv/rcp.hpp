// ============================================================================
// rv/rcp.hpp — probabilistic certificates for learned reactive bounds
// ============================================================================
//
// Scenario-style guarantees: with N i.i.d. positive samples and a feature
// dimension p, the probability that a fresh sample violates the learned
// halfspace is bounded through a binomial tail.  Multi-hyperplane bounds
// combine the per-plane expectation bound with a Markov step.

#ifndef RV_RCP_HPP
#define RV_RCP_HPP

#include <string>
#include <vector>

#include "rv/bound.hpp"
#include "rv/trace.hpp"

namespace rv {

struct RcpCertificate {
  long long N = 0;      // positive samples in the certified batch
  int p = 0;            // feature dimension the planes live in
  int n_h = 1;          // hyperplanes composed in the min
  double epsilon = 0;   // requested violation level
  double bound = 1.0;   // confidence bound on exceeding epsilon
  std::string kind;     // "single" or "multi"
  bool clamped = false; // bound hit the [0,1] clamp
};

/// P(at most k successes in N trials at success rate epsilon).  Stable in log
/// space; exact at the epsilon = 0 / 1 and k = N endpoints.
double binomial_cdf(double epsilon, long long k, long long N);

/// Confidence bound for a single learned halfspace: binomial_cdf(eps, p+2, N).
/// Requires p + 2 < N.
double misclassification_bound(long long N, int p, double epsilon);

struct EpsilonBar {
  double value = 1.0;      // min over eps of eps + binomial_cdf(eps,k,N)(1-eps)
  double minimizer = 1.0;  // the eps achieving it
};

/// Upper bound on the expected violation probability of one halfspace,
/// optimized over the free tail level.  Found by a 1e-3 grid scan refined
/// with golden-section search.
EpsilonBar epsilon_bar(long long N, long long k);

/// Confidence bound for a min of n_h halfspaces at violation level
/// epsilon_prime: epsilon_bar(N, p+2) * n_h / epsilon_prime, clamped to 1.
/// A non-null `clamped` receives whether the clamp fired.
double multi_hyperplane_bound(long long N, int p, int n_h, double epsilon_prime,
                              bool* clamped = nullptr);

/// Certify a learned bound against the batch it was fit on.  Dispatches to
/// the single-halfspace bound when the bound is one region with one plane,
/// otherwise to the multi-hyperplane bound with the extended feature
/// dimension.  Refuses batches the bound was not fit on, and (for two-region
/// bounds) the batch the region threshold was tuned on.
RcpCertificate certify(const PiecewiseReactiveBound& bound,
                       const std::vector<Snapshot>& batch, double epsilon);

/// Log of clamp events from multi_hyperplane_bound, for run reports.
const std::vector<std::string>& rcp_clamp_log();
void rcp_clamp_log_clear();

}  // namespace rv

#endif  // RV_RCP_HPP
