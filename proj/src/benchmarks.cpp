#include "rv/benchmarks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numbers>
#include <random>

#include "rv/common.hpp"
#include "rv/qp.hpp"

namespace rv {

namespace {

constexpr double kPi = std::numbers::pi;

std::string fmt_time(double t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", t);
  return buf;
}

}  // namespace

Vec saturate(const Vec& x, double a) {
  const double n = x.norm();
  if (n <= a || n == 0.0) return x;
  return (a / n) * x;
}

// ── Robot pursuit ───────────────────────────────────────────────────────────

Vec robot_controller_r1(const Vec& p1, const Vec& p2, const Vec& pT,
                        const RobotParams& rp) {
  return saturate(rp.k1 * (pT - p1) + rp.k2 * (p2 - p1), rp.v_max);
}

Vec robot_env_r2(const Vec& p1, const Vec& p2, const Vec& dv2,
                 const RobotParams& rp) {
  // Damped rotation around R1; the sense of rotation flips with sign(p2_x).
  const double beta = (p2(0) <= 0.0) ? 1.0 : -1.0;
  Mat A(2, 2);
  A << -0.4, -beta, beta, -0.4;
  Vec raw = A * (p2 - p1) + dv2;
  return saturate(raw, rp.v_max);
}

static SystemModel robot_model(const RobotParams& rp) {
  SystemModel m;
  m.name = "robot";
  m.n = 6;
  m.m = 2;
  m.k = 4;
  m.dt = rp.dt;
  const double half = rp.l / 2.0;
  m.state_limits = Box{Vec::Constant(6, -half), Vec::Constant(6, half)};
  m.input_limits = Box{Vec::Constant(2, -rp.v_max), Vec::Constant(2, rp.v_max)};
  m.disturbance_limits =
      Box{Vec::Constant(4, -rp.v_max), Vec::Constant(4, rp.v_max)};
  m.deriv = [](const Vec& x, const Vec& u, const Vec& d) {
    Vec dx(6);
    dx.segment(0, 2) = u;            // p1dot = v1
    dx.segment(2, 2) = d.segment(0, 2);  // p2dot = v2
    dx.segment(4, 2) = d.segment(2, 2);  // pTdot = vT
    return dx;
  };
  return m;
}

SpecBundle robot_spec(const RobotParams& rp) {
  SpecBundle s;
  const double r_max = rp.r_max;
  s.predicates["connected"] = [r_max](const TraceSample& s) {
    return r_max - (s.x.segment(2, 2) - s.x.segment(0, 2)).norm();
  };
  s.phi = stl::parse_formula("G[0," + fmt_time(rp.horizon) + "](connected)");
  return s;
}

FeatureMap robot_feature_map() {
  FeatureMap f;
  f.id = "robot_v2";
  f.p = 5;
  f.n = 6;
  f.k = 4;
  f.linear_in_d = true;
  // er: unit vector from R1 toward R2, et: its 90-degree rotation.  At the
  // (unreachable in practice) coincidence p1 == p2 both default to zero.
  auto frame = [](const Vec& x, Vec& er, Vec& et, double& r) {
    Vec rel = x.segment(2, 2) - x.segment(0, 2);
    r = rel.norm();
    if (r < 1e-9) {
      er = Vec::Zero(2);
      et = Vec::Zero(2);
      return;
    }
    er = rel / r;
    et = Vec(2);
    et << -er(1), er(0);
  };
  f.eval = [frame](const Vec& x, const Vec& d) {
    Vec er, et;
    double r;
    frame(x, er, et, r);
    const Vec v2 = d.segment(0, 2);
    Vec phi(5);
    phi << v2(0), v2(1), v2.dot(er), v2.dot(et), r * v2.dot(er);
    return phi;
  };
  f.d_matrix = [frame](const Vec& x) {
    Vec er, et;
    double r;
    frame(x, er, et, r);
    Mat M = Mat::Zero(5, 4);
    M(0, 0) = 1.0;
    M(1, 1) = 1.0;
    M.row(2).segment(0, 2) = er.transpose();
    M.row(3).segment(0, 2) = et.transpose();
    M.row(4).segment(0, 2) = r * er.transpose();
    return M;
  };
  f.d_offset = [](const Vec&) { return Vec::Zero(5); };
  return f;
}

std::vector<Trace> generate_robot_positive_data(const RobotParams& rp,
                                                std::uint64_t seed,
                                                int episodes) {
  if (episodes < 0) throw ConfigError("generate_robot_positive_data: episodes < 0");
  const SystemModel model = robot_model(rp);
  const double half = rp.l / 2.0;
  std::vector<Trace> out;
  out.reserve(static_cast<std::size_t>(episodes));
  for (int e = 0; e < episodes; ++e) {
    auto rng = std::make_shared<std::mt19937_64>(make_rng(seed, static_cast<std::uint64_t>(e)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    // Start connected: R2 within half the radio range of R1.
    Vec x0(6);
    x0(0) = (unit(*rng) * 2 - 1) * 0.8 * half;
    x0(1) = (unit(*rng) * 2 - 1) * 0.8 * half;
    const double rad = 0.5 + unit(*rng) * (rp.r_max / 2.0 - 0.5);
    const double th = unit(*rng) * 2 * kPi;
    x0(2) = x0(0) + rad * std::cos(th);
    x0(3) = x0(1) + rad * std::sin(th);
    x0(4) = (unit(*rng) * 2 - 1) * 0.8 * half;
    x0(5) = (unit(*rng) * 2 - 1) * 0.8 * half;
    x0 = model.state_limits.clamp(x0);

    auto angle = std::make_shared<double>(unit(*rng) * 2 * kPi);
    EnvPolicy env = [rng, angle, rp, unit](const Vec& x, double) mutable {
      // R2: rule plus a perturbation from the noise disc.
      const double nr = rp.noise * std::sqrt(unit(*rng));
      const double na = unit(*rng) * 2 * kPi;
      Vec dv2(2);
      dv2 << nr * std::cos(na), nr * std::sin(na);
      Vec v2 = robot_env_r2(x.segment(0, 2), x.segment(2, 2), dv2, rp);
      // Target: smoothed random walk at full speed.
      *angle += (unit(*rng) * 2 - 1) * 0.6;
      Vec d(4);
      d << v2(0), v2(1), rp.v_max * std::cos(*angle), rp.v_max * std::sin(*angle);
      return d;
    };
    FnController ctrl([rp](const Vec& x, double) {
      return robot_controller_r1(x.segment(0, 2), x.segment(2, 2),
                                 x.segment(4, 2), rp);
    });
    out.push_back(simulate(model, ctrl, env, x0, rp.horizon));
  }
  return out;
}

int robot_escape_accepted(const PiecewiseReactiveBound& bound,
                          const std::vector<Snapshot>& states, double v_max) {
  int accepted = 0;
  for (const auto& s : states) {
    Vec rel = s.x.segment(2, 2) - s.x.segment(0, 2);
    const double r = rel.norm();
    if (r < 1e-9) continue;
    Vec d = Vec::Zero(4);
    d.segment(0, 2) = (v_max / r) * rel;
    if (evaluate_h(bound, s.x, d) >= 0.0) ++accepted;
  }
  return accepted;
}

// ── Lane change ─────────────────────────────────────────────────────────────

static SystemModel lane_change_model(const LaneChangeParams& lp) {
  SystemModel m;
  m.name = "lane_change";
  m.n = 4;
  m.m = 2;
  m.k = 1;
  m.dt = lp.dt;
  Vec slo(4), shi(4);
  slo << -200.0, -12.0, -40.0, -1.5;
  shi << 200.0, 12.0, 40.0, 1.5;
  m.state_limits = Box{slo, shi};
  Vec ulo(2), uhi(2);
  ulo << -lp.a1_max, -lp.r1_max;
  uhi << lp.a1_max, lp.r1_max;
  m.input_limits = Box{ulo, uhi};
  m.disturbance_limits =
      Box{Vec::Constant(1, -lp.a2_max), Vec::Constant(1, lp.a2_max)};
  const double v1 = lp.v1;
  m.deriv = [v1](const Vec& x, const Vec& u, const Vec& d) {
    Vec dx(4);
    dx << x(2), v1 * std::sin(x(3)), u(0) - d(0), u(1);
    return dx;
  };
  return m;
}

SpecBundle lane_change_spec(const LaneChangeParams& lp) {
  SpecBundle s;
  const double a = lp.a, b = lp.b, w = lp.w, eps = lp.eps_lc;
  // Collision: lateral and longitudinal footprints overlap.
  s.predicates["col"] = [a, b](const TraceSample& s) {
    return std::min(a - std::abs(s.x(1)), b - std::abs(s.x(0)));
  };
  // Lane keeping: stay inside the corridor spanning origin and target lanes.
  const double lk_hi = 0.5 * w - 0.5 * a;
  const double lk_lo = -1.5 * w - 0.5 * a;
  s.predicates["lk"] = [lk_hi, lk_lo](const TraceSample& s) {
    return std::min(lk_hi - s.x(1), s.x(1) - lk_lo);
  };
  s.predicates["lc"] = [eps](const TraceSample& s) { return eps - std::abs(s.x(1)); };
  const std::string T = fmt_time(lp.horizon);
  s.phi = stl::parse_formula("G[0," + T + "](!col & lk) & F[0," + T + "](lc)");
  return s;
}

FeatureMap lane_change_feature_map() {
  FeatureMap f;
  f.id = "lane_a2";
  f.p = 8;
  f.n = 4;
  f.k = 1;
  f.linear_in_d = true;
  f.eval = [](const Vec& x, const Vec& d) {
    const double a2 = d(0);
    Vec phi(8);
    phi << a2, a2 * x(0), a2 * x(2), a2 * x(1), x(0), x(2), x(1), x(0) * x(2);
    return phi;
  };
  f.d_matrix = [](const Vec& x) {
    Mat M = Mat::Zero(8, 1);
    M(0, 0) = 1.0;
    M(1, 0) = x(0);
    M(2, 0) = x(2);
    M(3, 0) = x(1);
    return M;
  };
  f.d_offset = [](const Vec& x) {
    Vec o(8);
    o << 0, 0, 0, 0, x(0), x(2), x(1), x(0) * x(2);
    return o;
  };
  return f;
}

// MPC internals.  States are predicted as affine functions of the stacked
// decision vector u = [a1_0..a1_{H-1}, r1_0..r1_{H-1}]; each candidate region
// sequence contributes linear constraints and the QP is solved by Hildreth's
// method.  Region codes per predicted step: 0 none, 1 own lane (dY <= -a),
// 2 target region (dX >= b).

MpcController::Plan MpcController::solve_sequence(
    const Vec& x, double a2_now, const std::vector<int>& region) const {
  const int H = p_.H;
  const int nv = 2 * H;
  const double dt = p_.dt;

  // Affine prediction coefficients, rows j = 0..H.
  Mat psi_c = Mat::Zero(H + 1, nv), dy_c = Mat::Zero(H + 1, nv);
  Mat dv_c = Mat::Zero(H + 1, nv), dx_c = Mat::Zero(H + 1, nv);
  Vec psi_0 = Vec::Zero(H + 1), dy_0 = Vec::Zero(H + 1);
  Vec dv_0 = Vec::Zero(H + 1), dx_0 = Vec::Zero(H + 1);
  dx_0(0) = x(0);
  dy_0(0) = x(1);
  dv_0(0) = x(2);
  psi_0(0) = x(3);
  for (int j = 0; j < H; ++j) {
    const double a2_hat = a2_now * std::exp(-j * dt / p_.tau);
    psi_c.row(j + 1) = psi_c.row(j);
    psi_c(j + 1, H + j) += dt;
    psi_0(j + 1) = psi_0(j);
    dy_c.row(j + 1) = dy_c.row(j) + dt * p_.v1 * psi_c.row(j);
    dy_0(j + 1) = dy_0(j) + dt * p_.v1 * psi_0(j);
    dv_c.row(j + 1) = dv_c.row(j);
    dv_c(j + 1, j) += dt;
    dv_0(j + 1) = dv_0(j) - dt * a2_hat;
    dx_c.row(j + 1) = dx_c.row(j) + dt * dv_c.row(j);
    dx_0(j + 1) = dx_0(j) + dt * dv_0(j);
  }

  // Forward interval propagation with per-step constraint intersection.  The
  // tube over-approximates the reachable states compatible with the sequence
  // so far (the dy/psi correlation is dropped), so an empty interval proves
  // the sequence infeasible and skips the QP.  This prunes almost all of the
  // jointly infeasible sequences, which Hildreth only rejects slowly.
  const double lk_hi = 0.5 * p_.w - 0.5 * p_.a;
  const double lk_lo = -1.5 * p_.w - 0.5 * p_.a;
  Plan infeasible;
  infeasible.u = Vec::Zero(nv);
  {
    double ylo = x(1), yhi = x(1), plo = x(3), phi = x(3);
    double vlo = x(2), vhi = x(2), xlo = x(0), xhi = x(0);
    for (int j = 1; j <= H; ++j) {
      const double a2_hat = a2_now * std::exp(-(j - 1) * dt / p_.tau);
      const double nylo = ylo + dt * p_.v1 * plo;
      const double nyhi = yhi + dt * p_.v1 * phi;
      plo -= dt * p_.r1_max;
      phi += dt * p_.r1_max;
      const double nxlo = xlo + dt * vlo;
      const double nxhi = xhi + dt * vhi;
      vlo += dt * (-p_.a1_max - a2_hat);
      vhi += dt * (p_.a1_max - a2_hat);
      ylo = std::max(nylo, lk_lo);
      yhi = std::min(nyhi, lk_hi);
      xlo = nxlo;
      xhi = nxhi;
      const int rg = region[static_cast<std::size_t>(j - 1)];
      if (rg == 1) yhi = std::min(yhi, -p_.a);
      if (rg == 2) xlo = std::max(xlo, p_.b);
      if (ylo > yhi || xlo > xhi) return infeasible;
    }
  }

  Mat P = Mat::Zero(nv, nv);
  Vec q = Vec::Zero(nv);
  double c0 = 0.0;
  auto add_sq = [&](const Vec& c, double o, double wgt) {
    P += 2.0 * wgt * c * c.transpose();
    q += 2.0 * wgt * o * c;
    c0 += wgt * o * o;
  };
  for (int j = 1; j <= H; ++j) {
    add_sq(dy_c.row(j).transpose(), dy_0(j), p_.w_dy);
    add_sq(psi_c.row(j).transpose(), psi_0(j), p_.w_psi);
  }
  for (int j = 0; j < H; ++j) {
    P(j, j) += 2.0 * p_.w_a1;
    P(H + j, H + j) += 2.0 * p_.w_r1;
  }

  std::vector<Vec> rows;
  std::vector<double> rhs;
  bool constant_infeasible = false;
  // Rows are scaled to unit norm (helps the dual sweeps); all-zero rows are
  // constant facts and get checked directly.
  auto add_row = [&](const Vec& c, double ub) {
    const double nrm = c.norm();
    if (nrm < 1e-12) {
      if (ub < -1e-9) constant_infeasible = true;
      return;
    }
    rows.push_back(c / nrm);
    rhs.push_back(ub / nrm);
  };
  for (int j = 0; j < H; ++j) {
    Vec e = Vec::Zero(nv);
    e(j) = 1.0;
    add_row(e, p_.a1_max);
    add_row(-e, p_.a1_max);
    Vec f = Vec::Zero(nv);
    f(H + j) = 1.0;
    add_row(f, p_.r1_max);
    add_row(-f, p_.r1_max);
  }
  for (int j = 1; j <= H; ++j) {
    add_row(dy_c.row(j).transpose(), lk_hi - dy_0(j));
    add_row(-dy_c.row(j).transpose(), dy_0(j) - lk_lo);
    switch (region[static_cast<std::size_t>(j - 1)]) {
      case 1:
        add_row(dy_c.row(j).transpose(), -p_.a - dy_0(j));
        break;
      case 2:
        add_row(-dx_c.row(j).transpose(), dx_0(j) - p_.b);
        break;
      default:
        break;
    }
  }
  if (constant_infeasible) return infeasible;
  Mat A(static_cast<Eigen::Index>(rows.size()), nv);
  Vec b(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    A.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    b(static_cast<Eigen::Index>(i)) = rhs[i];
  }

  qp::QpResult r = qp::solve_qp_hildreth(P, q, A, b, 700, 1e-9);
  Plan pl;
  pl.u = r.x;
  pl.feasible = r.feasible && r.residual <= 1e-6;
  pl.objective = 0.5 * r.x.dot(P * r.x) + q.dot(r.x) + c0;
  return pl;
}

MpcController::Plan MpcController::plan(const Vec& x, double a2_now) const {
  const int H = p_.H;
  if (!p_.collision_avoidance) {
    std::vector<int> none(static_cast<std::size_t>(H), 0);
    Plan pl = solve_sequence(x, a2_now, none);
    pl.switch_step = -1;
    return pl;
  }
  Plan best;
  best.feasible = false;
  auto consider = [&](const std::vector<int>& region, int sw) {
    Plan pl = solve_sequence(x, a2_now, region);
    pl.switch_step = sw;
    if (pl.feasible && (!best.feasible || pl.objective < best.objective))
      best = pl;
  };
  std::vector<int> region(static_cast<std::size_t>(H));
  // Forward: s leading steps in the own lane, then the target region.
  for (int s = H; s >= 0; --s) {
    for (int j = 1; j <= H; ++j)
      region[static_cast<std::size_t>(j - 1)] = (j <= s) ? 1 : 2;
    consider(region, s == H ? -1 : s + 1);
  }
  // Abort: already committed to the target region but forced back to the own
  // lane (e.g. the gap ahead is collapsing).  Still at most one switch.
  for (int s = 1; s < H; ++s) {
    for (int j = 1; j <= H; ++j)
      region[static_cast<std::size_t>(j - 1)] = (j <= s) ? 2 : 1;
    consider(region, -1);
  }
  return best;
}

MpcController::Plan MpcController::plan_exhaustive(const Vec& x,
                                                   double a2_now) const {
  const int H = p_.H;
  if (H > 16) throw ConfigError("plan_exhaustive: H too large");
  Plan best;
  best.feasible = false;
  for (std::uint32_t mask = 0; mask < (1u << H); ++mask) {
    std::vector<int> region(static_cast<std::size_t>(H));
    for (int j = 0; j < H; ++j)
      region[static_cast<std::size_t>(j)] = (mask >> j) & 1u ? 2 : 1;
    Plan pl = solve_sequence(x, a2_now, region);
    if (pl.feasible && (!best.feasible || pl.objective < best.objective))
      best = pl;
  }
  return best;
}

Vec MpcController::act(const Vec& x, double, const Vec& d_prev) {
  Plan pl = plan(x, d_prev(0));
  Vec u(2);
  if (!pl.feasible) {
    // No candidate sequence is feasible: brake and hold heading toward zero.
    ++fallback_steps_;
    u << -p_.a1_max, std::clamp(-2.0 * x(3), -p_.r1_max, p_.r1_max);
    return u;
  }
  u << pl.u(0), pl.u(p_.H);
  return u;
}

std::vector<Trace> generate_lane_change_positive_data(
    const LaneChangeParams& lp, std::uint64_t seed, int episodes) {
  if (episodes < 0)
    throw ConfigError("generate_lane_change_positive_data: episodes < 0");
  const SystemModel model = lane_change_model(lp);
  std::vector<Trace> out;
  out.reserve(static_cast<std::size_t>(episodes));
  const double gap_des = 12.0;
  const double jerk_cap = 5.0 * lp.dt;  // per-step acceleration change
  for (int e = 0; e < episodes; ++e) {
    auto rng = std::make_shared<std::mt19937_64>(make_rng(seed, static_cast<std::uint64_t>(e)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Vec x0(4);
    x0 << 10.0 + unit(*rng) * 18.0, -lp.w, (unit(*rng) * 2 - 1) * 2.0, 0.0;
    auto a2_state = std::make_shared<double>(0.0);
    EnvPolicy env = [rng, a2_state, lp, gap_des, jerk_cap, unit](const Vec& x,
                                                                double) mutable {
      // Mild car following: track the desired gap, back off when closing.
      double want = 0.15 * (x(0) - gap_des) + 0.55 * x(2);
      want += (unit(*rng) * 2 - 1) * 0.3;
      const double cap = 0.9 * lp.a2_max;
      want = std::clamp(want, -cap, cap);
      *a2_state += std::clamp(want - *a2_state, -jerk_cap, jerk_cap);
      return Vec::Constant(1, *a2_state);
    };
    MpcController mpc(lp);
    out.push_back(simulate(model, mpc, env, x0, lp.horizon));
  }
  return out;
}

// ── Registry ────────────────────────────────────────────────────────────────

BoundContext Benchmark::bound_context() const {
  BoundContext ctx;
  ctx.feature_maps[features.id] = features;
  if (!g_id.empty()) ctx.region_fns[g_id] = g;
  return ctx;
}

LoopSystem Benchmark::loop_system() const {
  LoopSystem sys;
  sys.model = &model;
  sys.controller = controller.get();
  sys.x0 = x0;
  sys.phi = phi;
  sys.predicates = predicates;
  sys.param = param;
  sys.features = features;
  sys.g_id = g_id;
  sys.g = g;
  return sys;
}

Benchmark make_robot_benchmark(const RobotParams& rp) {
  Benchmark b;
  b.name = "robot";
  b.model = robot_model(rp);
  b.controller = std::make_shared<FnController>([rp](const Vec& x, double) {
    return robot_controller_r1(x.segment(0, 2), x.segment(2, 2),
                               x.segment(4, 2), rp);
  });
  SpecBundle s = robot_spec(rp);
  b.phi = s.phi;
  b.predicates = s.predicates;
  b.features = robot_feature_map();
  b.g_id = "p2x";
  b.g = [](const Vec& x) { return x(2); };
  b.param.K = 10;
  b.param.horizon = rp.horizon;
  b.param.ranges = b.model.disturbance_limits;
  b.x0 = Vec(6);
  b.x0 << -2.0, 0.0, 0.0, 0.0, 3.0, 3.0;
  b.gamma = rp.gamma;
  b.n_h = rp.n_h;
  b.positive_data = [rp](std::uint64_t seed, int episodes) {
    return generate_robot_positive_data(rp, seed, episodes);
  };
  return b;
}

Benchmark make_lane_change_benchmark(const LaneChangeParams& lp) {
  Benchmark b;
  b.name = lp.collision_avoidance ? "lane_change" : "lane_change_no_avoidance";
  b.model = lane_change_model(lp);
  b.controller = std::make_shared<MpcController>(lp);
  SpecBundle s = lane_change_spec(lp);
  b.phi = s.phi;
  b.predicates = s.predicates;
  b.features = lane_change_feature_map();
  b.param.K = 10;
  b.param.horizon = lp.horizon;
  b.param.ranges = b.model.disturbance_limits;
  b.x0 = Vec(4);
  b.x0 << lp.dx0, -lp.w, lp.dv0, 0.0;
  b.n_h = 3;
  b.positive_data = [lp](std::uint64_t seed, int episodes) {
    return generate_lane_change_positive_data(lp, seed, episodes);
  };
  return b;
}

const std::vector<std::string>& benchmark_names() {
  static const std::vector<std::string> names = {
      "robot", "lane_change", "lane_change_no_avoidance"};
  return names;
}

Benchmark make_benchmark(const std::string& name) {
  if (name == "robot") return make_robot_benchmark();
  if (name == "lane_change") return make_lane_change_benchmark();
  if (name == "lane_change_no_avoidance") {
    LaneChangeParams lp;
    lp.collision_avoidance = false;
    return make_lane_change_benchmark(lp);
  }
  throw ConfigError("unknown benchmark: " + name);
}

}  // namespace rv
