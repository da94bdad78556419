#include "rv/config.hpp"

#include <filesystem>
#include <fstream>

#include "rv/common.hpp"

namespace rv {

namespace {

RobotParams robot_params_from(const nlohmann::json& p) {
  RobotParams rp;
  rp.l = p.value("l", rp.l);
  rp.v_max = p.value("v_max", rp.v_max);
  rp.r_max = p.value("r_max", rp.r_max);
  rp.k1 = p.value("k1", rp.k1);
  rp.k2 = p.value("k2", rp.k2);
  rp.noise = p.value("noise", rp.noise);
  rp.dt = p.value("dt", rp.dt);
  rp.horizon = p.value("horizon", rp.horizon);
  rp.gamma = p.value("gamma", rp.gamma);
  rp.n_h = p.value("n_h", rp.n_h);
  return rp;
}

LaneChangeParams lane_params_from(const nlohmann::json& p) {
  LaneChangeParams lp;
  lp.a = p.value("a", lp.a);
  lp.b = p.value("b", lp.b);
  lp.w = p.value("w", lp.w);
  lp.eps_lc = p.value("eps_lc", lp.eps_lc);
  lp.v1 = p.value("v1", lp.v1);
  lp.tau = p.value("tau", lp.tau);
  lp.horizon = p.value("horizon", lp.horizon);
  lp.dt = p.value("dt", lp.dt);
  lp.H = p.value("H", lp.H);
  lp.a1_max = p.value("a1_max", lp.a1_max);
  lp.r1_max = p.value("r1_max", lp.r1_max);
  lp.a2_max = p.value("a2_max", lp.a2_max);
  lp.dx0 = p.value("dx0", lp.dx0);
  lp.dv0 = p.value("dv0", lp.dv0);
  lp.w_dy = p.value("w_dy", lp.w_dy);
  lp.w_psi = p.value("w_psi", lp.w_psi);
  lp.w_a1 = p.value("w_a1", lp.w_a1);
  lp.w_r1 = p.value("w_r1", lp.w_r1);
  lp.collision_avoidance = p.value("collision_avoidance", lp.collision_avoidance);
  return lp;
}

}  // namespace

SnapshotSelector selector_from_json(const nlohmann::json& j) {
  SnapshotSelector sel;
  sel.importance_id = j.value("importance", "uniform");
  sel.threshold = j.value("threshold", 0.0);
  sel.max_per_trace = j.value("max_per_trace", 1);
  if (sel.importance_id == "uniform") {
    sel.importance = [](const Vec&, const Vec&) { return 1.0; };
  } else if (sel.importance_id == "dmag") {
    sel.importance = [](const Vec&, const Vec& d) { return d.norm(); };
  } else if (sel.importance_id == "outward") {
    sel.importance = [](const Vec& x, const Vec& d) {
      Vec rel = x.segment(2, 2) - x.segment(0, 2);
      const double r = rel.norm();
      return r < 1e-9 ? 0.0 : d.segment(0, 2).dot(rel) / r;
    };
  } else if (sel.importance_id == "a2mag") {
    sel.importance = [](const Vec&, const Vec& d) { return std::abs(d(0)); };
  } else {
    throw ConfigError("unknown selector importance: " + sel.importance_id);
  }
  return sel;
}

RunConfig parse_run_config(const nlohmann::json& doc) {
  RunConfig rc;
  const std::string name = doc.value("benchmark", "");
  const nlohmann::json params = doc.value("params", nlohmann::json::object());
  if (name == "robot") {
    rc.benchmark = make_robot_benchmark(robot_params_from(params));
  } else if (name == "lane_change" || name == "lane_change_no_avoidance") {
    LaneChangeParams lp = lane_params_from(params);
    if (name == "lane_change_no_avoidance") lp.collision_avoidance = false;
    rc.benchmark = make_lane_change_benchmark(lp);
  } else {
    throw ConfigError("unknown benchmark: '" + name + "'");
  }

  const nlohmann::json data = doc.value("data", nlohmann::json::object());
  rc.data_seed = data.value("seed", 0);
  rc.data_episodes = data.value("episodes", 100);

  const nlohmann::json lo = doc.value("loop", nlohmann::json::object());
  LoopConfig& cfg = rc.loop;
  cfg.max_iterations = lo.value("max_iterations", cfg.max_iterations);
  cfg.budget = lo.value("budget", cfg.budget);
  cfg.n_hyperplanes = lo.value("n_hyperplanes", rc.benchmark.n_h);
  cfg.gamma = lo.value("gamma", rc.benchmark.gamma);
  cfg.kappa0 = lo.value("kappa0", cfg.kappa0);
  cfg.autotune_iterations = lo.value("autotune_iterations", cfg.autotune_iterations);
  cfg.autotune_step0 = lo.value("autotune_step0", cfg.autotune_step0);
  cfg.eps_active = lo.value("eps_active", 1e-3);
  cfg.cert_epsilon = lo.value("cert_epsilon", cfg.cert_epsilon);
  cfg.delta_diag = lo.value("delta_diag", cfg.delta_diag);
  cfg.audit_grid = lo.value("audit_grid", cfg.audit_grid);
  cfg.selector = selector_from_json(lo.value("selector", nlohmann::json::object()));
  if (lo.contains("falsifier")) {
    const nlohmann::json& fj = lo["falsifier"];
    cfg.falsifier.restarts = fj.value("restarts", cfg.falsifier.restarts);
    cfg.falsifier.sigma_frac = fj.value("sigma_frac", cfg.falsifier.sigma_frac);
    cfg.falsifier.decay = fj.value("decay", cfg.falsifier.decay);
  }
  if (doc.contains("falsify"))
    rc.falsify_budget = doc["falsify"].value("budget", rc.falsify_budget);

  rc.raw = doc;
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  if (!std::filesystem::exists(path))
    throw MissingInputError("config file not found: " + path);
  std::ifstream in(path);
  nlohmann::json doc = nlohmann::json::parse(in);
  return parse_run_config(doc);
}

}  // namespace rv
