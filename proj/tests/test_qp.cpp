#include "rv/qp.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "doctest.h"
#include "rv/common.hpp"

using rv::Mat;
using rv::Vec;
using namespace rv::qp;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vec vec2(double x, double y) {
  Vec v(2);
  v << x, y;
  return v;
}

// Random 2-D polytope that contains a ball of radius 0.1 and whose constraint
// normals keep pairwise angles away from 0 and pi.  Both properties matter for
// the grid oracle below: the ball makes the coarse pass find a feasible point,
// and the angle bound keeps every boundary cone wide enough that a grid of
// step s always lands within ~6s of the true projection.
struct Poly {
  Mat A;
  Vec b;
};

Poly random_fat_polytope(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (;;) {
    const int m = 3 + static_cast<int>(U(rng) * 4.999);
    Vec c = vec2(-1.0 + 2.0 * U(rng), -1.0 + 2.0 * U(rng));
    Mat A(m, 2);
    Vec b(m);
    bool ok = true;
    for (int i = 0; i < m && ok; ++i) {
      const double th = 2.0 * M_PI * U(rng);
      A(i, 0) = std::cos(th);
      A(i, 1) = std::sin(th);
      for (int j = 0; j < i; ++j) {
        const double cosang = A.row(i).dot(A.row(j));
        const double ang = std::acos(std::clamp(cosang, -1.0, 1.0));
        if (ang < 0.35 || ang > M_PI - 0.35) ok = false;
      }
      b[i] = A.row(i).dot(c) + 0.1 + 1.1 * U(rng);
    }
    if (ok) return {A, b};
  }
}

bool grid_feasible(const Poly& P, double x, double y) {
  for (int i = 0; i < P.A.rows(); ++i)
    if (P.A(i, 0) * x + P.A(i, 1) * y > P.b[i] + 1e-9) return false;
  return true;
}

// Multi-resolution grid search for the projection of t onto P.
//   pass 0: step 0.02 over a box covering every generated polytope;
//   pass 1: step 2e-3 over the ball around t that must contain the optimum;
//   pass 2: step 1e-3 around the pass-1 incumbent (sound by the fat-cone
//           property of the generator).
std::optional<std::pair<Vec, double>> grid_project(const Poly& P, const Vec& t) {
  double best = kInf;
  Vec bp = vec2(0, 0);
  auto scan = [&](double x0, double x1, double y0, double y1, double step) {
    for (double x = x0; x <= x1 + 0.5 * step; x += step)
      for (double y = y0; y <= y1 + 0.5 * step; y += step) {
        if (!grid_feasible(P, x, y)) continue;
        const double d = std::hypot(x - t[0], y - t[1]);
        if (d < best) {
          best = d;
          bp = vec2(x, y);
        }
      }
  };
  scan(-3.2, 3.2, -3.2, 3.2, 0.02);
  if (!std::isfinite(best)) return std::nullopt;
  double r = best + 0.01;
  scan(t[0] - r, t[0] + r, t[1] - r, t[1] + r, 2e-3);
  r = 0.03;
  scan(bp[0] - r, bp[0] + r, bp[1] - r, bp[1] + r, 1e-3);
  return std::make_pair(bp, best);
}

}  // namespace

TEST_CASE("min_norm_point hand examples") {
  SUBCASE("segment between (1,0) and (0,1)") {
    Mat V(2, 2);
    V << 1, 0, 0, 1;
    auto r = min_norm_point(V);
    CHECK(r.converged);
    CHECK(r.point[0] == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(r.point[1] == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(r.weights.sum() == doctest::Approx(1.0).epsilon(1e-10));
  }
  SUBCASE("single vertex") {
    Mat V(1, 3);
    V << 2, -1, 4;
    auto r = min_norm_point(V);
    CHECK((r.point - V.row(0).transpose()).norm() < 1e-12);
    CHECK(r.weights[0] == doctest::Approx(1.0));
  }
  SUBCASE("hull containing the origin") {
    Mat V(4, 2);
    V << 1, 1, -1, 1, 1, -1, -1, -1;
    auto r = min_norm_point(V);
    CHECK(r.point.norm() < 1e-6);
  }
  SUBCASE("duplicate vertices") {
    Mat V(3, 2);
    V << 2, 0, 2, 0, 3, 1;
    auto r = min_norm_point(V);
    CHECK(r.point[0] == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(std::abs(r.point[1]) < 1e-9);
  }
  SUBCASE("segment crossing near the origin") {
    Mat V(2, 2);
    V << -2, 1, 2, 1;  // hull is the line y=1, x in [-2,2]
    auto r = min_norm_point(V);
    CHECK(std::abs(r.point[0]) < 1e-9);
    CHECK(r.point[1] == doctest::Approx(1.0));
  }
}

TEST_CASE("min_norm_point optimality certificate on random hulls") {
  // q* is the minimum-norm point of conv{v_i} iff v_i' q* >= ||q*||^2 for all
  // i.  That is an exact first-order certificate, checked here directly.
  auto rng = rv::make_rng(11);
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  std::uniform_int_distribution<int> Dn(1, 5), DN(1, 12);
  for (int rep = 0; rep < 60; ++rep) {
    const int dim = Dn(rng), N = DN(rng);
    Mat V(N, dim);
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < dim; ++j) V(i, j) = U(rng);
    if (rep % 3 == 0 && N > 1) V.row(N - 1) = V.row(0);  // duplicates

    auto r = min_norm_point(V);
    double scale = 1.0;
    for (int i = 0; i < N; ++i) scale = std::max(scale, V.row(i).squaredNorm());

    CHECK((r.weights.array() >= -1e-12).all());
    CHECK(r.weights.sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK((V.transpose() * r.weights - r.point).norm() < 1e-8);
    const double q2 = r.point.squaredNorm();
    for (int i = 0; i < N; ++i) CHECK(V.row(i).dot(r.point) >= q2 - 1e-7 * scale);
    for (int i = 0; i < N; ++i) CHECK(r.point.norm() <= V.row(i).norm() + 1e-9);
  }
}

TEST_CASE("project_polytope hand examples") {
  Mat box(4, 2);
  box << 1, 0, -1, 0, 0, 1, 0, -1;
  Vec one = Vec::Ones(4);  // unit box [-1,1]^2

  SUBCASE("interior target is a fixed point") {
    auto r = project_polytope(box, one, vec2(0.3, -0.4));
    CHECK(r.feasible);
    CHECK(r.distance == doctest::Approx(0.0));
    CHECK((r.point - vec2(0.3, -0.4)).norm() < 1e-12);
  }
  SUBCASE("face projection") {
    auto r = project_polytope(box, one, vec2(2.5, 0.25));
    CHECK(r.feasible);
    CHECK((r.point - vec2(1.0, 0.25)).norm() < 1e-9);
    CHECK(r.distance == doctest::Approx(1.5));
  }
  SUBCASE("corner projection") {
    auto r = project_polytope(box, one, vec2(3.0, -2.0));
    CHECK(r.feasible);
    CHECK((r.point - vec2(1.0, -1.0)).norm() < 1e-9);
    CHECK(r.distance == doctest::Approx(std::hypot(2.0, 1.0)));
  }
  SUBCASE("halfplane closed form") {
    Mat A(1, 2);
    A << 3, 4;  // 3x + 4y <= 10
    Vec b(1);
    b << 10;
    Vec t = vec2(6, 7);
    auto r = project_polytope(A, b, t);
    const double viol = (3 * 6 + 4 * 7 - 10) / 25.0;
    Vec expect = t - viol * A.row(0).transpose();
    CHECK(r.feasible);
    CHECK((r.point - expect).norm() < 1e-9);
  }
  SUBCASE("empty slab") {
    Mat A(2, 1);
    A << 1, -1;
    Vec b(2);
    b << -1, -1;  // x <= -1 and x >= 1
    auto r = project_polytope(A, b, Vec::Zero(1));
    CHECK(!r.feasible);
  }
  SUBCASE("zero rows") {
    Mat A = Mat::Zero(2, 2);
    Vec b(2);
    b << 0.5, 0.1;  // vacuous
    auto r = project_polytope(A, b, vec2(7, -7));
    CHECK(r.feasible);
    CHECK(r.distance == doctest::Approx(0.0));
    b[1] = -0.1;  // 0 <= -0.1 is false
    r = project_polytope(A, b, vec2(7, -7));
    CHECK(!r.feasible);
  }
  SUBCASE("no constraints") {
    auto r = project_polytope(Mat(0, 2), Vec(0), vec2(1, 2));
    CHECK(r.feasible);
    CHECK(r.distance == doctest::Approx(0.0));
  }
}

TEST_CASE("project_polytope decouples independent variable blocks") {
  // vars (0,1) live in the unit box, var 2 in [2, 5]; block projection must
  // equal the per-block answers stitched together.
  Mat A = Mat::Zero(6, 3);
  Vec b(6);
  A(0, 0) = 1;
  A(1, 0) = -1;
  A(2, 1) = 1;
  A(3, 1) = -1;
  b.head(4).setOnes();
  A(4, 2) = 1;
  b[4] = 5;
  A(5, 2) = -1;
  b[5] = -2;
  Vec t(3);
  t << 4.0, 0.5, 0.0;
  auto r = project_polytope(A, b, t);
  CHECK(r.feasible);
  CHECK(r.point[0] == doctest::Approx(1.0));
  CHECK(r.point[1] == doctest::Approx(0.5));
  CHECK(r.point[2] == doctest::Approx(2.0));
  CHECK(r.distance == doctest::Approx(std::hypot(3.0, 2.0)));
}

TEST_CASE("project_polytope enumeration cap") {
  auto rng = rv::make_rng(5);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  Mat A(20, 3);
  Vec b(20);
  for (int i = 0; i < 20; ++i) {
    for (int j = 0; j < 3; ++j) A(i, j) = 0.55 + 0.45 * U(rng);  // fully coupled block
    b[i] = 5.0 + U(rng);
  }
  const Vec far_t = Vec::Constant(3, 100.0);  // infeasible, so enumeration runs
  CHECK_THROWS_AS(project_polytope(A, b, far_t, 50), rv::NumericError);
  CHECK_NOTHROW(project_polytope(A, b, far_t));
}

TEST_CASE("project_polytope matches the grid oracle on random polytopes") {
  auto rng = rv::make_rng(21);
  std::uniform_real_distribution<double> U(-2.5, 2.5);
  int done = 0;
  while (done < 25) {
    Poly P = random_fat_polytope(rng);
    Vec t = vec2(U(rng), U(rng));
    auto oracle = grid_project(P, t);
    REQUIRE(oracle.has_value());
    if (oracle->second > 1.8) continue;  // keep the fine grid affordable
    ++done;

    auto r = project_polytope(P.A, P.b, t);
    REQUIRE(r.feasible);
    CHECK(((P.A * r.point - P.b).array() <= 1e-7).all());
    CHECK(r.distance <= oracle->second + 1e-9);
    CHECK(std::abs(r.distance - oracle->second) <= 1e-2);
    CHECK((r.point - oracle->first).norm() <= 3e-2);

    auto again = project_polytope(P.A, P.b, r.point);
    CHECK(again.feasible);
    CHECK((again.point - r.point).norm() <= 1e-9);
  }
}

TEST_CASE("project_polytope flags random empty slabs") {
  auto rng = rv::make_rng(33);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int rep = 0; rep < 10; ++rep) {
    const double th = 2.0 * M_PI * U(rng);
    Vec a = vec2(std::cos(th), std::sin(th));
    const double alpha = -1.0 + 2.0 * U(rng);
    Mat A(3, 2);
    Vec b(3);
    A.row(0) = a.transpose();
    b[0] = alpha;
    A.row(1) = -a.transpose();
    b[1] = -alpha - 0.05 - U(rng);  // contradicts row 0
    A.row(2) = vec2(std::cos(th + 1.0), std::sin(th + 1.0)).transpose();
    b[2] = 2.0;
    auto r = project_polytope(A, b, vec2(U(rng), U(rng)));
    CHECK(!r.feasible);
  }
}

TEST_CASE("hildreth unconstrained and box-clamped solutions") {
  SUBCASE("no constraints") {
    Mat P(2, 2);
    P << 2, 0, 0, 8;
    Vec q(2);
    q << -2, -8;
    auto r = solve_qp_hildreth(P, q, Mat(0, 2), Vec(0));
    CHECK(r.feasible);
    CHECK(r.x[0] == doctest::Approx(1.0));
    CHECK(r.x[1] == doctest::Approx(1.0));
  }
  SUBCASE("separable box clamp") {
    Mat P(2, 2);
    P << 1, 0, 0, 4;
    Vec q(2);
    q << -2, -8;  // unconstrained optimum (2, 2)
    Mat A(4, 2);
    A << 1, 0, -1, 0, 0, 1, 0, -1;
    Vec b = Vec::Constant(4, 0.5);
    auto r = solve_qp_hildreth(P, q, A, b);
    CHECK(r.feasible);
    CHECK(r.converged);
    CHECK(r.x[0] == doctest::Approx(0.5).epsilon(1e-8));
    CHECK(r.x[1] == doctest::Approx(0.5).epsilon(1e-8));
    CHECK((r.lambda.array() >= 0).all());
  }
  SUBCASE("not positive definite") {
    Mat P = Mat::Zero(2, 2);
    P(0, 0) = 1.0;  // singular
    CHECK_THROWS_AS(solve_qp_hildreth(P, Vec::Zero(2), Mat(0, 2), Vec(0)), rv::NumericError);
  }
  SUBCASE("infeasible slab") {
    Mat P = Mat::Identity(2, 2);
    Mat A(2, 2);
    A << 1, 0, -1, 0;
    Vec b(2);
    b << -1, -1;
    auto r = solve_qp_hildreth(P, Vec::Zero(2), A, b);
    CHECK(!r.feasible);
  }
}

TEST_CASE("hildreth agrees with the exact projector") {
  // With P = I and q = -t the QP is the projection of t.
  auto rng = rv::make_rng(44);
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  for (int rep = 0; rep < 30; ++rep) {
    Poly P = random_fat_polytope(rng);
    Vec t = vec2(U(rng), U(rng));
    auto proj = project_polytope(P.A, P.b, t);
    REQUIRE(proj.feasible);
    auto r = solve_qp_hildreth(Mat::Identity(2, 2), -t, P.A, P.b);
    CHECK(r.feasible);
    CHECK((r.x - proj.point).norm() < 1e-6);
  }
}

TEST_CASE("hildreth satisfies the KKT conditions on random dense QPs") {
  auto rng = rv::make_rng(55);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int rep = 0; rep < 40; ++rep) {
    const int n = 4, m = 6;
    Mat B(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) B(i, j) = U(rng);
    Mat P = B.transpose() * B + Mat::Identity(n, n);
    Vec q(n), x0(n);
    for (int i = 0; i < n; ++i) {
      q[i] = 2.0 * U(rng);
      x0[i] = U(rng);
    }
    Mat A(m, n);
    Vec b(m);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) A(i, j) = U(rng);
      b[i] = A.row(i).dot(x0) + 0.25 * (U(rng) + 1.0);  // x0 stays feasible
    }
    auto r = solve_qp_hildreth(P, q, A, b);
    REQUIRE(r.feasible);
    CHECK(r.converged);
    CHECK((r.lambda.array() >= 0).all());
    CHECK(r.residual <= 1e-7);
    CHECK((P * r.x + q + A.transpose() * r.lambda).cwiseAbs().maxCoeff() < 1e-6);
    const Vec slack = A * r.x - b;
    for (int i = 0; i < m; ++i) CHECK(std::abs(r.lambda[i] * slack[i]) < 1e-5);
  }
}
