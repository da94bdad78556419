// Benchmark systems: a two-robot pursuit world and a highway lane change.
// Each factory bundles plant, controller, spec formula, feature map and a
// positive-data generator under a stable name, so the CLI and the
// verification loop need no benchmark-specific wiring of their own.

#ifndef RV_BENCHMARKS_HPP
#define RV_BENCHMARKS_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rv/bound.hpp"
#include "rv/falsify.hpp"
#include "rv/loop.hpp"
#include "rv/stl.hpp"
#include "rv/trace.hpp"

namespace rv {

// ── Robot pursuit ───────────────────────────────────────────────────────────
//
// Two planar robots R1 (controlled) and R2 (environment) plus a moving
// target T.  Simulation state x = [p1; p2; pT] in R^6, input u = v1 in R^2,
// disturbance d = [v2; vT] in R^4.  R1 chases the target while keeping radio
// contact with R2: the spec is G[0,T](r_max - ||p1 - p2|| > 0).

struct RobotParams {
  double l = 10.0;       // arena side length; positions live in [-l/2, l/2]^2
  double v_max = 1.0;    // speed cap for every agent
  double r_max = 4.0;    // connectivity radius
  double k1 = 0.6;       // R1 gain toward the target
  double k2 = 0.8;       // R1 gain toward R2
  double noise = 0.2;    // cap on the perturbation added to the R2 rule
  double dt = 0.1;
  double horizon = 20.0;

  // Learned-bound shape: two regions split by the sign of p2_x.
  double gamma = 20.0;
  int n_h = 3;
};

/// v1 = sat_{v_max}(k1 (pT - p1) + k2 (p2 - p1)).
Vec robot_controller_r1(const Vec& p1, const Vec& p2, const Vec& pT,
                        const RobotParams& rp);

/// The rule R2 follows when generating nominal data: a damped rotation around
/// R1 whose sense flips with the sign of p2_x, plus a perturbation dv2 that
/// the caller must keep within ||dv2|| <= noise.
Vec robot_env_r2(const Vec& p1, const Vec& p2, const Vec& dv2,
                 const RobotParams& rp);

/// Disc saturation: x unchanged when ||x|| <= a, else scaled back to the disc.
Vec saturate(const Vec& x, double a);

// ── Lane change ─────────────────────────────────────────────────────────────
//
// Relative coordinates between the autonomous vehicle (AV) and one human
// vehicle (HV) in the target lane: x = [dX, dY, dv, psi], with
// xdot = [dv, v1 sin(psi), a1 - a2, r1].  u = [a1, r1], d = [a2].  The AV
// starts one lane over (dY = -w) and must merge (|dY| <= eps_lc) without ever
// colliding or leaving the two-lane corridor.

struct LaneChangeParams {
  double a = 2.0;        // car width
  double b = 4.5;        // car length
  double w = 3.7;        // lane width
  double eps_lc = 0.2;   // lane-change completion tolerance on dY
  double v1 = 20.0;      // AV longitudinal speed (treated as constant)
  double tau = 2.0;      // decay constant of the HV acceleration prediction
  double horizon = 8.0;
  double dt = 0.2;

  int H = 8;             // MPC prediction steps
  double a1_max = 3.0;   // |a1| cap
  double r1_max = 0.5;   // |r1| cap
  double a2_max = 4.0;   // |a2| cap (the physical limit the falsifier starts from)

  double dx0 = 15.0;     // initial gap: AV this far ahead of the HV
  double dv0 = 0.0;

  // MPC objective weights.
  double w_dy = 1.0;
  double w_psi = 2.0;
  double w_a1 = 0.05;
  double w_r1 = 0.05;

  bool collision_avoidance = true;
};

/// Receding-horizon controller for the lane change.  The prediction model
/// linearizes sin(psi) ~ psi and decays the measured HV acceleration as
/// a2(t) = a2(0) exp(-t/tau); the plant itself keeps the exact sin.  The
/// collision-avoidance disjunction (own lane clear OR far enough ahead) is
/// handled by enumerating region sequences with at most one switch, in both
/// directions: the H+1 lane-change sequences plus the abort sequences back to
/// the own lane.  When every candidate QP is infeasible the controller falls
/// back to braking plus heading hold and counts the event.
class MpcController final : public Controller {
 public:
  explicit MpcController(const LaneChangeParams& lp) : p_(lp) {}

  Vec act(const Vec& x, double t, const Vec& d_prev) override;
  void reset() override { fallback_steps_ = 0; }

  int fallback_steps() const { return fallback_steps_; }

  struct Plan {
    Vec u;                  // stacked [a1_0..a1_{H-1}, r1_0..r1_{H-1}]
    double objective = 0.0;
    bool feasible = false;
    // First step constrained to the target region in a forward sequence;
    // -1 for no-switch and abort sequences.
    int switch_step = -1;
  };

  /// Single-switch enumeration (2H candidate sequences).
  Plan plan(const Vec& x, double a2_now) const;
  /// Exhaustive enumeration over all 2^H per-step region assignments.  Only
  /// meant for small H; used to validate the monotone shortcut.
  Plan plan_exhaustive(const Vec& x, double a2_now) const;

 private:
  Plan solve_sequence(const Vec& x, double a2_now,
                      const std::vector<int>& region) const;

  LaneChangeParams p_;
  int fallback_steps_ = 0;
};

// ── Specs, features, data ───────────────────────────────────────────────────

struct SpecBundle {
  stl::FormulaPtr phi;
  stl::PredicateMap predicates;
};

SpecBundle robot_spec(const RobotParams& rp);

/// G[0,T](!col & lk) & F[0,T](lc), with col/lk/lc as box predicates on
/// (dX, dY).  The lane-keeping corridor spans the origin and target lanes:
/// -1.5 w - 0.5 a <= dY <= 0.5 w - 0.5 a.
SpecBundle lane_change_spec(const LaneChangeParams& lp);

/// phi(x, v2) = [v2; v2.er; v2.et; ||p2-p1|| (v2.er)] with er the unit vector
/// from R1 to R2 and et its 90-degree rotation.  Linear in d; the vT slots of
/// d never enter.
FeatureMap robot_feature_map();

/// phi(x, a2) = [a2; a2 dX; a2 dv; a2 dY; dX; dv; dY; dX dv].  Linear in d.
FeatureMap lane_change_feature_map();

/// Nominal episodes: both robots run their rules, the target does a smoothed
/// random walk at full speed, R2's perturbation is drawn uniformly from the
/// noise disc.  Deterministic per (seed, episode index).
std::vector<Trace> generate_robot_positive_data(const RobotParams& rp,
                                                std::uint64_t seed,
                                                int episodes);

/// Closed-loop lane changes against a mild car-following HV: it tracks a
/// desired gap, decelerates when closing, and its acceleration is jerk-limited
/// with a small random dither.  Deterministic per (seed, episode index).
std::vector<Trace> generate_lane_change_positive_data(const LaneChangeParams& lp,
                                                      std::uint64_t seed,
                                                      int episodes);

/// Count audit states where fleeing R1 straight away at v_max would still be
/// accepted by the bound (h >= 0).  A sound learned bound rejects all of them.
int robot_escape_accepted(const PiecewiseReactiveBound& bound,
                          const std::vector<Snapshot>& states, double v_max);

// ── Registry ────────────────────────────────────────────────────────────────

/// Everything needed to drive one benchmark end to end.
struct Benchmark {
  std::string name;
  SystemModel model;
  std::shared_ptr<Controller> controller;
  stl::FormulaPtr phi;
  stl::PredicateMap predicates;
  FeatureMap features;
  std::string g_id;  // empty: single-region bound
  std::function<double(const Vec&)> g;
  InputParameterization param;
  Vec x0;
  double gamma = 20.0;
  int n_h = 3;
  std::function<std::vector<Trace>(std::uint64_t seed, int episodes)> positive_data;

  TraceSchema schema() const { return TraceSchema{model.dt, model.n, model.m, model.k}; }
  BoundContext bound_context() const;
  LoopSystem loop_system() const;
};

Benchmark make_robot_benchmark(const RobotParams& rp = {});
Benchmark make_lane_change_benchmark(const LaneChangeParams& lp = {});

/// Stable names: "robot", "lane_change", "lane_change_no_avoidance".
const std::vector<std::string>& benchmark_names();
/// Factory by name (default parameters).  Unknown names raise ConfigError.
Benchmark make_benchmark(const std::string& name);

}  // namespace rv

#endif  // RV_BENCHMARKS_HPP
