// ============================================================================
// rv/trace.hpp — system runs: models, simulation, persistence, snapshots
// ============================================================================
//
// A run is a fixed-step sequence of (x, u, d) samples produced by explicit
// Euler integration of a SystemModel under a controller policy and an
// environment policy.  Snapshots are single labeled (x, d) pairs pulled out
// of traces; they are the training unit for the bound learner.
//
// ============================================================================

#ifndef RV_TRACE_HPP
#define RV_TRACE_HPP

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "rv/common.hpp"

namespace rv {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// ── Box ─────────────────────────────────────────────────────────────────────
// Per-component closed interval limits for states, controls, disturbances.

struct Box {
  Vec lo;
  Vec hi;

  Box() = default;
  Box(Vec lo_, Vec hi_) : lo(std::move(lo_)), hi(std::move(hi_)) {
    if (lo.size() != hi.size()) throw DimensionError("box lo/hi size mismatch");
    for (Eigen::Index i = 0; i < lo.size(); ++i)
      if (lo[i] > hi[i]) throw ConfigError("box has lo > hi");
  }

  /// Symmetric box [-r, r]^dim.
  static Box symmetric(int dim, double r) {
    return Box(Vec::Constant(dim, -r), Vec::Constant(dim, r));
  }

  int dim() const { return static_cast<int>(lo.size()); }

  Vec clamp(const Vec& v) const {
    return v.cwiseMax(lo).cwiseMin(hi);
  }

  bool contains(const Vec& v, double tol = 0.0) const {
    return (v.array() >= lo.array() - tol).all() &&
           (v.array() <= hi.array() + tol).all();
  }

  Vec center() const { return 0.5 * (lo + hi); }

  Vec sample(std::mt19937_64& rng) const {
    Vec v(lo.size());
    for (Eigen::Index i = 0; i < lo.size(); ++i)
      v[i] = std::uniform_real_distribution<double>(lo[i], hi[i])(rng);
    return v;
  }
};

// ── Trace ───────────────────────────────────────────────────────────────────

struct TraceSample {
  Vec x;
  Vec u;
  Vec d;
};

struct Trace {
  double dt = 0.0;
  std::vector<TraceSample> samples;

  int length() const { return static_cast<int>(samples.size()); }
  double duration() const { return samples.empty() ? 0.0 : dt * (length() - 1); }
  const TraceSample& at(int t) const { return samples.at(static_cast<std::size_t>(t)); }
};

struct TraceSchema {
  double dt = 0.0;
  int n = 0;  // state dim
  int m = 0;  // control dim
  int k = 0;  // disturbance dim
};

// ── SystemModel ─────────────────────────────────────────────────────────────
// Continuous dynamics xdot = f(x, u, d) advanced with explicit Euler at the
// model's sample period; states are clamped to the state box after each step
// so that rollouts remain total under any policy.

struct SystemModel {
  std::string name;
  int n = 0, m = 0, k = 0;
  double dt = 0.0;
  Box state_limits;        // X
  Box input_limits;        // U
  Box disturbance_limits;  // D
  std::function<Vec(const Vec& x, const Vec& u, const Vec& d)> deriv;

  Vec step(const Vec& x, const Vec& u, const Vec& d) const {
    Vec xn = x + dt * deriv(x, u, d);
    return state_limits.clamp(xn);
  }
};

// Controller policies may keep internal state (e.g. an MPC that remembers the
// last measured disturbance); environment policies are plain functions of the
// current state and time.
class Controller {
public:
  virtual ~Controller() = default;
  /// d_prev is the disturbance applied at the previous step (zero at t=0).
  virtual Vec act(const Vec& x, double t, const Vec& d_prev) = 0;
  virtual void reset() {}
};

/// Wrap a stateless u = g(x, t) function as a Controller.
class FnController final : public Controller {
public:
  explicit FnController(std::function<Vec(const Vec&, double)> fn) : fn_(std::move(fn)) {}
  Vec act(const Vec& x, double t, const Vec&) override { return fn_(x, t); }

private:
  std::function<Vec(const Vec&, double)> fn_;
};

using EnvPolicy = std::function<Vec(const Vec& x, double t)>;

// ── Snapshot ────────────────────────────────────────────────────────────────

struct Snapshot {
  Vec x;
  Vec d;
  int label = +1;       // +1 observed behavior, -1 from a falsifying trace
  double weight = 1.0;  // SVM cost entry, must stay positive
};

struct SnapshotSelector {
  std::string importance_id;  // diagnostic name only
  std::function<double(const Vec& x, const Vec& d)> importance;
  double threshold = 0.0;
  int max_per_trace = 1;
};

// ── Operations ──────────────────────────────────────────────────────────────

/// Roll the model forward for `horizon` seconds.  Returns a trace with
/// ceil(horizon/dt)+1 samples; u(t) = controller, d(t) = env clamped to D.
Trace simulate(const SystemModel& model, Controller& controller,
               const EnvPolicy& env, const Vec& x0, double horizon);

/// Pick at most selector.max_per_trace samples whose importance score is
/// >= selector.threshold, highest scores first; output keeps trace order.
std::vector<Snapshot> extract_snapshots(const Trace& trace, int label,
                                        const SnapshotSelector& selector);

/// One uniformly random snapshot per trace (label applied to all).  This is
/// the i.i.d.-approximation batch used for certification.
std::vector<Snapshot> iid_snapshots(const std::vector<Trace>& traces, int label,
                                    std::mt19937_64& rng);

// Trace CSV: per trace a header line `dt=<s>,n=<int>,m=<int>,k=<int>`
// followed by one row `t,x...,u...,d...` per sample.  A file may hold many
// traces back to back; an empty list serializes to a lone header.
std::vector<Trace> load_traces(const std::string& path, const TraceSchema& schema);
void save_traces(const std::vector<Trace>& traces, const std::string& path,
                 const TraceSchema& schema);

// Snapshot CSV: one row `y,x0..x{n-1},d0..d{k-1},weight` per snapshot.
std::vector<Snapshot> load_snapshots(const std::string& path, int n, int k);
void save_snapshots(const std::vector<Snapshot>& snaps, const std::string& path);

/// Order-sensitive fingerprint of a snapshot batch (used to pin the
/// certification batch a bound was trained on).
std::uint64_t snapshot_batch_hash(const std::vector<Snapshot>& snaps);

}  // namespace rv

#endif  // RV_TRACE_HPP
