#include "rv/bound.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "doctest.h"
#include "rv/common.hpp"
#include "rv/svm.hpp"

using namespace rv;

namespace {

Vec vec2(double x, double y) {
  Vec v(2);
  v << x, y;
  return v;
}

// phi(x, d) = d with a scalar dummy state.
FeatureMap identity_features() {
  FeatureMap f;
  f.id = "identity2";
  f.p = 2;
  f.n = 1;
  f.k = 2;
  f.linear_in_d = true;
  f.eval = [](const Vec&, const Vec& d) { return d; };
  f.d_matrix = [](const Vec&) { return Mat::Identity(2, 2); };
  f.d_offset = [](const Vec&) { return Vec::Zero(2); };
  return f;
}

PiecewiseReactiveBound two_region_example() {
  PiecewiseReactiveBound b;
  b.features = identity_features();
  b.g_id = "x0";
  b.g = [](const Vec& x) { return x[0]; };
  b.kappa = 1.0 / 3.0;
  b.gamma = 7.5;
  b.d_box = Box::symmetric(2, 2.0);
  Hyperplane r0a{vec2(0.6, 0.1), 0.25};
  Hyperplane r0b{vec2(-0.3, 0.7), 0.4};
  Hyperplane r1a{vec2(-0.5, 0.2), 0.1};
  Hyperplane r1b{vec2(0.2, -0.8), std::sqrt(2.0)};
  b.regions = {{r0a, r0b}, {r1a, r1b}};
  b.kappa_tuned_on = 0x123456789abcdef0ULL;
  b.hyperplanes_fit_on = 0xfedcba9876543210ULL;
  return b;
}

std::string temp_path(const char* name) {
  return std::string("/tmp/rv_bound_") + name + ".json";
}

}  // namespace

TEST_CASE("membership identities") {
  auto [m1, m2] = membership(0.7, 0.7, 3.0);
  CHECK(m1 == 0.5);
  CHECK(m2 == 0.5);

  std::tie(m1, m2) = membership(40.0 / 5.0 + 1.0, 1.0, 5.0);  // gamma (g-k) = +40
  CHECK(m1 <= 1e-15);
  CHECK(m2 >= 1.0 - 1e-15);

  // overflow safety far beyond double exp range
  std::tie(m1, m2) = membership(1e7, 0.0, 1.0);
  CHECK(std::isfinite(m1));
  CHECK(m1 <= 1e-300);
  CHECK(m2 == 1.0);
  std::tie(m1, m2) = membership(-1e7, 0.0, 1.0);
  CHECK(m1 == 1.0);
  CHECK(m2 == 0.0);

  auto rng = make_rng(3);
  std::uniform_real_distribution<double> U(-5.0, 5.0);
  for (int i = 0; i < 1000; ++i) {
    std::tie(m1, m2) = membership(U(rng), U(rng), std::abs(U(rng)) + 0.1);
    CHECK(m1 + m2 == 1.0);  // exact complement
    CHECK(m1 >= 0.0);
    CHECK(m1 <= 1.0);
  }
}

TEST_CASE("evaluate_h single region") {
  PiecewiseReactiveBound b;
  b.features = identity_features();
  b.d_box = Box::symmetric(2, 3.0);
  b.regions = {{Hyperplane{vec2(1, 0), 0.0}}};
  const Vec x = Vec::Zero(1);

  CHECK(evaluate_h(b, x, vec2(2, 0)) == doctest::Approx(2.0));
  CHECK(evaluate_h(b, x, vec2(-0.5, 9)) == doctest::Approx(-0.5));

  b.regions[0].push_back(Hyperplane{vec2(0, 1), 1.0});
  // values (d1, d2+1): pick d so they are (3, -1)
  CHECK(evaluate_h(b, x, vec2(3, -2)) == doctest::Approx(-1.0));

  CHECK_THROWS_AS(evaluate_h(b, Vec::Zero(2), vec2(0, 0)), DimensionError);
  CHECK_THROWS_AS(evaluate_h(b, x, Vec::Zero(3)), DimensionError);
  b.regions.clear();
  CHECK_THROWS_AS(evaluate_h(b, x, vec2(0, 0)), ConfigError);
}

TEST_CASE("evaluate_h blends regions by membership") {
  auto b = two_region_example();
  auto rng = make_rng(9);
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  for (int i = 0; i < 200; ++i) {
    Vec x(1);
    x << U(rng);
    const Vec d = vec2(U(rng), U(rng));
    const auto [m1, m2] = membership(x[0], b.kappa, b.gamma);
    double expect = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < b.regions[0].size(); ++j) {
      const auto& h0 = b.regions[0][j];
      const auto& h1 = b.regions[1][j];
      expect = std::min(expect, m1 * (h0.v.dot(d) + h0.c) + m2 * (h1.v.dot(d) + h1.c));
    }
    CHECK(evaluate_h(b, x, d) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("bound_polytope rows and emptiness") {
  PiecewiseReactiveBound b;
  b.features = identity_features();
  b.d_box = Box::symmetric(2, 1.0);
  b.regions = {{Hyperplane{vec2(1, 0), 0.0}}};
  const Vec x = Vec::Zero(1);

  SUBCASE("halfspace plus box") {
    Polytope P = bound_polytope(b, x);
    REQUIRE(P.A.rows() == 5);
    CHECK(!P.empty);
    CHECK(P.A(0, 0) == doctest::Approx(-1.0));
    CHECK(P.A(0, 1) == doctest::Approx(0.0));
    CHECK(P.b[0] == doctest::Approx(0.0));
    // box rows: d_i <= 1, -d_i <= 1
    CHECK(P.A(1, 0) == doctest::Approx(1.0));
    CHECK(P.b[1] == doctest::Approx(1.0));
    CHECK(P.A(2, 0) == doctest::Approx(-1.0));
    CHECK(P.b[2] == doctest::Approx(1.0));
  }
  SUBCASE("contradictory hyperplanes flag empty") {
    b.regions[0] = {Hyperplane{vec2(1, 0), -0.5}, Hyperplane{vec2(-1, 0), -0.5}};
    Polytope P = bound_polytope(b, x);
    CHECK(P.empty);
  }
  SUBCASE("not linear in d") {
    b.features.linear_in_d = false;
    CHECK_THROWS_AS(bound_polytope(b, x), ConfigError);
  }
}

TEST_CASE("bound_polytope membership agrees with evaluate_h") {
  auto b = two_region_example();
  auto rng = make_rng(17);
  std::uniform_real_distribution<double> U(-1.5, 1.5);
  int checked = 0;
  for (int i = 0; i < 1200 && checked < 1000; ++i) {
    Vec x(1);
    x << U(rng);
    const Polytope P = bound_polytope(b, x);
    const Vec d = b.d_box.sample(rng);
    const double h = evaluate_h(b, x, d);
    if (std::abs(h) < 1e-9) continue;  // boundary: either answer is fine
    ++checked;
    const bool inside = ((P.A * d - P.b).array() <= 1e-9).all();
    CHECK(inside == (h >= 0.0));
  }
  CHECK(checked >= 1000);
}

TEST_CASE("project_to_bound") {
  PiecewiseReactiveBound b;
  b.features = identity_features();
  b.d_box = Box::symmetric(2, 1.0);
  b.regions = {{Hyperplane{vec2(0, 1), 0.2}}};  // d2 >= -0.2, inside the unit box
  const Vec x = Vec::Zero(1);

  SUBCASE("interior point unchanged") {
    const Vec d = vec2(0.3, 0.4);
    CHECK((project_to_bound(b, x, d) - d).norm() < 1e-12);
  }
  SUBCASE("box clipping") {
    CHECK((project_to_bound(b, x, vec2(2.0, 0.5)) - vec2(1.0, 0.5)).norm() < 1e-9);
  }
  SUBCASE("halfspace clipping") {
    CHECK((project_to_bound(b, x, vec2(0.0, -0.9)) - vec2(0.0, -0.2)).norm() < 1e-9);
  }
  SUBCASE("empty bound throws") {
    b.regions[0] = {Hyperplane{vec2(1, 0), -2.0}};  // d1 >= 2 outside the box
    CHECK_THROWS_AS(project_to_bound(b, x, vec2(0, 0)), EmptyPolytopeError);
  }
}

TEST_CASE("check_linear_in_d") {
  auto f = identity_features();
  CHECK(check_linear_in_d(f, Box::symmetric(1, 1.0), Box::symmetric(2, 2.0)));

  FeatureMap q = f;
  q.id = "quadratic";
  q.eval = [](const Vec&, const Vec& d) { return Vec(d.cwiseProduct(d)); };
  CHECK(!check_linear_in_d(q, Box::symmetric(1, 1.0), Box::symmetric(2, 2.0)));

  FeatureMap noflag = f;
  noflag.linear_in_d = false;
  CHECK(!check_linear_in_d(noflag, Box::symmetric(1, 1.0), Box::symmetric(2, 2.0)));
}

TEST_CASE("extended features stay linear in d") {
  auto base = identity_features();
  auto g = [](const Vec& x) { return x[0]; };
  auto ext = extend_features(base, g, 0.25, 4.0);
  CHECK(ext.p == 4);
  CHECK(check_linear_in_d(ext, Box::symmetric(1, 1.0), Box::symmetric(2, 2.0)));

  auto rng = make_rng(23);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    Vec x(1);
    x << U(rng);
    const Vec d = vec2(U(rng), U(rng));
    const Vec phi = ext.eval(x, d);
    const Vec lin = ext.d_matrix(x) * d + ext.d_offset(x);
    CHECK((phi - lin).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("bound JSON round trip is bit identical") {
  auto b = two_region_example();
  const auto path = temp_path("roundtrip");
  save_bound(b, path);

  BoundContext ctx;
  ctx.feature_maps[b.features.id] = b.features;
  ctx.region_fns[b.g_id] = b.g;
  auto loaded = load_bound(path, ctx);

  CHECK(loaded.kappa == b.kappa);
  CHECK(loaded.gamma == b.gamma);
  CHECK(loaded.g_id == b.g_id);
  CHECK(loaded.kappa_tuned_on == b.kappa_tuned_on);
  CHECK(loaded.hyperplanes_fit_on == b.hyperplanes_fit_on);
  CHECK(loaded.d_box.lo == b.d_box.lo);
  CHECK(loaded.d_box.hi == b.d_box.hi);
  REQUIRE(loaded.n_regions() == 2);
  REQUIRE(loaded.n_hyperplanes() == 2);

  auto rng = make_rng(31);
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  for (int i = 0; i < 50; ++i) {
    Vec x(1);
    x << U(rng);
    const Vec d = vec2(U(rng), U(rng));
    CHECK(evaluate_h(loaded, x, d) == evaluate_h(b, x, d));  // exact
  }
  std::remove(path.c_str());
}

TEST_CASE("bound load error paths") {
  auto b = two_region_example();
  BoundContext ctx;
  ctx.feature_maps[b.features.id] = b.features;
  ctx.region_fns[b.g_id] = b.g;

  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_bound("/tmp/rv_bound_does_not_exist.json", ctx), ConfigError);
  }
  SUBCASE("unknown feature map") {
    const auto path = temp_path("nofm");
    save_bound(b, path);
    BoundContext empty;
    empty.region_fns[b.g_id] = b.g;
    CHECK_THROWS_AS(load_bound(path, empty), ConfigError);
    std::remove(path.c_str());
  }
  SUBCASE("unknown region function") {
    const auto path = temp_path("nog");
    save_bound(b, path);
    BoundContext noreg;
    noreg.feature_maps[b.features.id] = b.features;
    CHECK_THROWS_AS(load_bound(path, noreg), ConfigError);
    std::remove(path.c_str());
  }
  SUBCASE("garbage JSON") {
    const auto path = temp_path("garbage");
    {
      std::FILE* fp = std::fopen(path.c_str(), "wb");
      std::fputs("{not json", fp);
      std::fclose(fp);
    }
    CHECK_THROWS_AS(load_bound(path, ctx), FormatError);
    std::remove(path.c_str());
  }
  SUBCASE("missing fields") {
    const auto path = temp_path("missing");
    {
      std::FILE* fp = std::fopen(path.c_str(), "wb");
      std::fputs("{\"feature_map\": \"identity2\"}", fp);
      std::fclose(fp);
    }
    CHECK_THROWS_AS(load_bound(path, ctx), FormatError);
    std::remove(path.c_str());
  }
}
