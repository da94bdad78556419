#include "rv/falsify.hpp"

#include <cmath>

#include "doctest.h"
#include "rv/common.hpp"
#include "rv/svm.hpp"

using namespace rv;
using namespace rv::stl;

namespace {

// Leaky scalar integrator: xdot = u + d with a mild stabilizing controller.
SystemModel leaky_model() {
  SystemModel m;
  m.name = "leaky";
  m.n = 1;
  m.m = 1;
  m.k = 1;
  m.dt = 0.1;
  m.state_limits = Box::symmetric(1, 10.0);
  m.input_limits = Box::symmetric(1, 1.0);
  m.disturbance_limits = Box::symmetric(1, 1.0);
  m.deriv = [](const Vec&, const Vec& u, const Vec& d) { return Vec(u + d); };
  return m;
}

FnController damping() {
  return FnController([](const Vec& x, double) { return Vec(-0.5 * x); });
}

PredicateMap leaky_preds() {
  PredicateMap preds;
  preds["huge_slack"] = [](const TraceSample& s) { return s.x[0] + 1e9; };
  preds["impossible"] = [](const TraceSample& s) { return s.x[0] - 1e9; };
  preds["small"] = [](const TraceSample& s) { return 0.35 - std::abs(s.x[0]); };
  preds["nonneg"] = [](const TraceSample& s) { return s.x[0] + 1e-6; };
  return preds;
}

InputParameterization leaky_param() {
  InputParameterization p;
  p.K = 5;
  p.horizon = 2.0;
  p.ranges = Box::symmetric(1, 1.0);
  return p;
}

FeatureMap identity_1d() {
  FeatureMap f;
  f.id = "d1";
  f.p = 1;
  f.n = 1;
  f.k = 1;
  f.linear_in_d = true;
  f.eval = [](const Vec&, const Vec& d) { return d; };
  f.d_matrix = [](const Vec&) { return Mat::Identity(1, 1); };
  f.d_offset = [](const Vec&) { return Vec::Zero(1); };
  return f;
}

}  // namespace

TEST_CASE("unfalsifiable and unsatisfiable specs resolve immediately") {
  auto model = leaky_model();
  auto ctrl = damping();
  const auto preds = leaky_preds();
  const Vec x0 = Vec::Zero(1);

  auto easy = parse_formula("G[0,2](huge_slack)");
  auto res = falsify(model, ctrl, x0, nullptr, easy, preds, leaky_param(), 20, 3);
  CHECK_FALSE(res.falsified);
  CHECK(res.best_robustness == doctest::Approx(1e9).epsilon(1e-6));
  CHECK(res.evaluations == 20);

  auto impossible = parse_formula("G[0,2](impossible)");
  res = falsify(model, ctrl, x0, nullptr, impossible, preds, leaky_param(), 20, 3);
  CHECK(res.falsified);
  CHECK(res.best_robustness == doctest::Approx(-1e9).epsilon(1e-6));
  CHECK_FALSE(satisfies(*impossible, res.best_trace, 0, preds));
}

TEST_CASE("falsifying verdicts are re-checked against boolean semantics") {
  auto model = leaky_model();
  auto ctrl = damping();
  const auto preds = leaky_preds();
  auto phi = parse_formula("G[0,2](small)");

  auto res = falsify(model, ctrl, Vec::Zero(1), nullptr, phi, preds, leaky_param(),
                     200, 0);
  REQUIRE(res.falsified);  // a push toward |x| > 0.35 is easy to find
  CHECK(res.best_robustness < 0.0);
  CHECK_FALSE(satisfies(*phi, res.best_trace, 0, preds));
  CHECK(res.best_trace.length() == 21);
  CHECK(res.evaluations == 200);
}

TEST_CASE("projection keeps every rollout inside the reactive bound") {
  auto model = leaky_model();
  auto ctrl = damping();
  const auto preds = leaky_preds();
  auto phi = parse_formula("G[0,2](small)");

  // admissible disturbances: d >= 0 within the physical box
  auto bound = single_region_bound(identity_1d(), {{Vec::Ones(1), 0.0}},
                                   Box::symmetric(1, 1.0));
  auto res = falsify(model, ctrl, Vec::Zero(1), &bound, phi, preds, leaky_param(),
                     60, 5);
  CHECK(res.evaluations == 60);
  CHECK(res.empty_projections == 0);
  REQUIRE(res.best_trace.length() == 21);
  for (const auto& s : res.best_trace.samples) {
    CHECK(evaluate_h(bound, s.x, s.d) >= -1e-6);
    CHECK(s.d[0] >= -1e-12);
  }
}

TEST_CASE("an always-empty bound abandons every rollout") {
  auto model = leaky_model();
  auto ctrl = damping();
  const auto preds = leaky_preds();
  auto phi = parse_formula("G[0,2](small)");

  // requires d >= 2 inside the box [-1,1]: empty everywhere
  auto bound = single_region_bound(identity_1d(), {{Vec::Ones(1), -2.0}},
                                   Box::symmetric(1, 1.0));
  auto res = falsify(model, ctrl, Vec::Zero(1), &bound, phi, preds, leaky_param(),
                     15, 9);
  CHECK_FALSE(res.falsified);
  CHECK(res.empty_projections == 15);
  CHECK(std::isinf(res.best_robustness));
  CHECK(res.best_trace.length() == 0);
}

TEST_CASE("falsification is deterministic in the seed") {
  auto model = leaky_model();
  auto ctrl = damping();
  const auto preds = leaky_preds();
  auto phi = parse_formula("G[0,2](small)");

  auto a = falsify(model, ctrl, Vec::Zero(1), nullptr, phi, preds, leaky_param(), 80, 11);
  auto b = falsify(model, ctrl, Vec::Zero(1), nullptr, phi, preds, leaky_param(), 80, 11);
  CHECK(a.best_robustness == b.best_robustness);
  CHECK(a.evaluations == b.evaluations);
  CHECK(a.falsified == b.falsified);
  REQUIRE(a.best_points.size() == b.best_points.size());
  CHECK((a.best_points - b.best_points).norm() == 0.0);
  REQUIRE(a.best_trace.length() == b.best_trace.length());
  for (int t = 0; t < a.best_trace.length(); ++t)
    CHECK((a.best_trace.at(t).x - b.best_trace.at(t).x).norm() == 0.0);

  auto c = falsify(model, ctrl, Vec::Zero(1), nullptr, phi, preds, leaky_param(), 80, 12);
  CHECK(c.best_robustness != a.best_robustness);  // different stream, different path
}

TEST_CASE("doubling the budget never worsens the best robustness") {
  auto model = leaky_model();
  auto ctrl = damping();
  const auto preds = leaky_preds();
  auto phi = parse_formula("G[0,2](small)");

  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    auto small = falsify(model, ctrl, Vec::Zero(1), nullptr, phi, preds,
                         leaky_param(), 30, seed);
    auto big = falsify(model, ctrl, Vec::Zero(1), nullptr, phi, preds,
                       leaky_param(), 60, seed);
    CHECK(big.best_robustness <= small.best_robustness);
  }
}

TEST_CASE("landscape sampling mirrors the restart streams") {
  auto model = leaky_model();
  auto ctrl = damping();
  const auto preds = leaky_preds();
  auto phi = parse_formula("G[0,2](small)");

  auto land = robustness_landscape(model, ctrl, Vec::Zero(1), nullptr, phi, preds,
                                   leaky_param(), 10, 7);
  REQUIRE(land.size() == 10);
  double lmin = land[0].second;
  for (const auto& [theta, rho] : land) {
    CHECK(std::isfinite(rho));
    CHECK(theta.size() == 5);
    lmin = std::min(lmin, rho);
  }

  auto res = falsify(model, ctrl, Vec::Zero(1), nullptr, phi, preds, leaky_param(),
                     40, 7);
  CHECK(lmin >= res.best_robustness);
}

TEST_CASE("falsifier validates its inputs") {
  auto model = leaky_model();
  auto ctrl = damping();
  const auto preds = leaky_preds();
  auto phi = parse_formula("G[0,2](small)");
  const Vec x0 = Vec::Zero(1);

  auto p = leaky_param();
  p.K = 0;
  CHECK_THROWS_AS(falsify(model, ctrl, x0, nullptr, phi, preds, p, 10, 0), ConfigError);

  p = leaky_param();
  p.horizon = 1.0;  // formula needs 2 seconds
  CHECK_THROWS_AS(falsify(model, ctrl, x0, nullptr, phi, preds, p, 10, 0), HorizonError);

  p = leaky_param();
  p.ranges = Box::symmetric(2, 1.0);
  CHECK_THROWS_AS(falsify(model, ctrl, x0, nullptr, phi, preds, p, 10, 0),
                  DimensionError);

  p = leaky_param();
  CHECK_THROWS_AS(falsify(model, ctrl, x0, nullptr, phi, preds, p, 0, 0), ConfigError);
  CHECK_THROWS_AS(falsify(model, ctrl, x0, nullptr, nullptr, preds, p, 10, 0),
                  ConfigError);

  FalsifierOptions opt;
  opt.restarts = 0;
  CHECK_THROWS_AS(falsify(model, ctrl, x0, nullptr, phi, preds, p, 10, 0, opt),
                  ConfigError);
}
