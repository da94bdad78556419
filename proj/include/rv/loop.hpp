// ============================================================================
// rv/loop.hpp — falsify / relearn verification loop
// ============================================================================
//
// The outer loop alternates two oracles.  The falsifier attacks the closed
// loop under the current reactive bound (iteration 1 runs against the raw
// disturbance box); every counter-example it finds is mined for negative
// snapshots, which accumulate and drive a refit of the bound.  The loop ends
// when the falsifier comes up empty (verified, with a probabilistic
// certificate for the final bound), when the iteration cap is hit, or when
// the last counter-example only uses disturbances the observed data itself
// supports, in which case no tighter bound can save the controller and the
// run is flagged inherently unsafe.
//
// Certification protocol: one i.i.d. snapshot is drawn per positive trace
// and the batch is split in half.  The first half tunes kappa, the second
// half is the certification batch.  Hyperplane fits constrain every positive
// snapshot (so none is ever misclassified) but the certificate counts only
// the held-out half.

#ifndef RV_LOOP_HPP
#define RV_LOOP_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rv/bound.hpp"
#include "rv/falsify.hpp"
#include "rv/rcp.hpp"
#include "rv/stl.hpp"
#include "rv/trace.hpp"

namespace rv {

/// The moving parts of one verification problem.  Leave g_id empty for a
/// single-region bound; otherwise g drives the two-region membership.
struct LoopSystem {
  const SystemModel* model = nullptr;
  Controller* controller = nullptr;
  Vec x0;
  stl::FormulaPtr phi;
  stl::PredicateMap predicates;
  InputParameterization param;  // falsifier search space
  FeatureMap features;          // must be linear in d
  std::string g_id;
  std::function<double(const Vec&)> g;
};

struct LoopConfig {
  int max_iterations = 8;
  long long budget = 2000;   // falsifier rollouts per iteration
  SnapshotSelector selector; // counter-example mining; null importance = uniform
  int n_hyperplanes = 3;
  double gamma = 20.0;
  double kappa0 = 0.0;
  int autotune_iterations = 15;
  double autotune_step0 = -1.0;  // <0: scale from the g range; 0 pins kappa
  double eps_active = 1e-6;
  double cert_epsilon = 0.05;
  double delta_diag = 0.0;  // hull slack for the unsafety diagnosis
  std::uint64_t seed = 0;
  std::vector<std::string> positive_paths;  // trace files, checked up front
  std::vector<Trace> positives;             // used when the paths are empty
  std::string out_dir;                      // empty: keep everything in memory
  FalsifierOptions falsifier;
  int audit_grid = 200;  // fixed (x,d) probe points for the audit trail
};

enum class Verdict { kVerified, kFalsifiedAtCap, kInherentlyUnsafe };
const char* verdict_name(Verdict v);

struct IterationRecord {
  int iteration = 0;  // 1-based
  double robustness_min = 0.0;
  bool falsified = false;
  int negatives_added = 0;
  std::uint64_t bound_hash = 0;  // 0 while no bound exists
  std::string bound_path;        // set when out_dir is used
  std::string trace_path;
  bool has_certificate = false;
  RcpCertificate certificate;
  int monotone_violations = 0;  // separated negatives that came back
  double min_positive_h = 0.0;  // over the positive snapshot batch
  int grid_accepted = 0;        // audit-grid points with h >= 0
  std::vector<double> kappa_trajectory;  // piecewise fits only
  double falsify_seconds = 0.0;
  double learn_seconds = 0.0;
  double certify_seconds = 0.0;
};

struct VerificationResult {
  Verdict verdict = Verdict::kFalsifiedAtCap;
  int iterations = 0;
  bool has_bound = false;
  PiecewiseReactiveBound bound;  // what the last falsifier run saw
  bool has_certificate = false;
  RcpCertificate certificate;
  std::vector<Trace> counterexamples;  // one per falsified iteration
  std::vector<IterationRecord> audit;
  bool has_confirmatory = false;  // verified only: fresh-seed re-run
  FalsificationResult confirmatory;
  bool confirmed = false;                    // the re-run also found nothing
  std::vector<Snapshot> positive_snapshots;  // the i.i.d. learning batch
  double falsify_seconds = 0.0;
  double learn_seconds = 0.0;
  double certify_seconds = 0.0;
  double total_seconds = 0.0;
};

/// Run the loop to a verdict.  Writes per-iteration bounds, counter-example
/// traces, and report.json under config.out_dir when set; a phase error
/// still flushes the report before propagating.
VerificationResult verify_loop(const LoopSystem& system, const LoopConfig& config);

/// True when every step of the final counter-example lies within delta_diag
/// (plus a small numeric tolerance) of the convex hull of the disturbances
/// observed at the k nearest positive states.  Such a trace only replays
/// behavior the data supports, so tightening the bound cannot rescue the
/// controller.  Requires a falsified-at-cap (or already diagnosed) result.
bool diagnose_inherent_unsafety(const VerificationResult& result,
                                const std::vector<Snapshot>& positives,
                                double delta_diag = 0.0, int k_nearest = 25);

}  // namespace rv

#endif  // RV_LOOP_HPP
