#include "rv/qp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

namespace rv::qp {

namespace {

// min ||sum_i alpha_i p_i|| over the affine hull of the rows indexed by S.
// KKT system [G -1; 1' 0][alpha; lambda] = [0; 1] with G = P_S P_S'.
Vec affine_min_norm(const Mat& P, const std::vector<int>& S) {
  const int s = static_cast<int>(S.size());
  Mat K(s + 1, s + 1);
  for (int i = 0; i < s; ++i)
    for (int j = 0; j < s; ++j) K(i, j) = P.row(S[i]).dot(P.row(S[j]));
  for (int i = 0; i < s; ++i) {
    K(i, s) = -1.0;
    K(s, i) = 1.0;
  }
  K(s, s) = 0.0;
  Vec rhs = Vec::Zero(s + 1);
  rhs[s] = 1.0;
  Vec sol = K.completeOrthogonalDecomposition().solve(rhs);
  Vec alpha = sol.head(s);
  const double total = alpha.sum();
  if (std::abs(total) > 1e-12) alpha /= total;
  return alpha;
}

}  // namespace

MinNormResult min_norm_point(const Mat& vertices, double tol) {
  const int N = static_cast<int>(vertices.rows());
  if (N == 0) throw DimensionError("min_norm_point: no vertices");

  double scale = 1.0;
  for (int i = 0; i < N; ++i) scale = std::max(scale, vertices.row(i).squaredNorm());

  int i0 = 0;
  vertices.rowwise().squaredNorm().minCoeff(&i0);
  std::vector<int> S{i0};
  std::vector<double> mu{1.0};
  Vec q = vertices.row(i0);

  MinNormResult res;
  res.converged = false;
  const int max_iter = 2 * N + 100;
  int iter = 0;
  for (; iter < max_iter; ++iter) {
    int j = 0;
    const double mn = (vertices * q).minCoeff(&j);
    if (q.squaredNorm() - mn <= tol * scale) {
      res.converged = true;
      break;
    }
    if (std::find(S.begin(), S.end(), j) != S.end()) {
      res.converged = true;  // oracle re-proposes an active vertex: numeric floor
      break;
    }
    S.push_back(j);
    mu.push_back(0.0);

    // Minor cycle: pull the affine minimizer back into the simplex.
    while (true) {
      Vec alpha = affine_min_norm(vertices, S);
      if ((alpha.array() >= -1e-12).all()) {
        for (std::size_t i = 0; i < S.size(); ++i) mu[i] = std::max(0.0, alpha[static_cast<Eigen::Index>(i)]);
        break;
      }
      double theta = 1.0;
      for (std::size_t i = 0; i < S.size(); ++i) {
        const double a = alpha[static_cast<Eigen::Index>(i)];
        if (a < 0.0 && mu[i] - a > 0.0) theta = std::min(theta, mu[i] / (mu[i] - a));
      }
      std::vector<int> S2;
      std::vector<double> mu2;
      for (std::size_t i = 0; i < S.size(); ++i) {
        const double w = (1.0 - theta) * mu[i] + theta * alpha[static_cast<Eigen::Index>(i)];
        if (w > 1e-12) {
          S2.push_back(S[i]);
          mu2.push_back(w);
        }
      }
      if (S2.empty()) {  // numerically degenerate; keep the best single vertex
        S2.push_back(S.back());
        mu2.push_back(1.0);
      }
      S = std::move(S2);
      mu = std::move(mu2);
    }
    const double total = std::accumulate(mu.begin(), mu.end(), 0.0);
    for (double& w : mu) w /= total;
    q = Vec::Zero(vertices.cols());
    for (std::size_t i = 0; i < S.size(); ++i) q += mu[i] * vertices.row(S[i]).transpose();
  }

  res.iterations = iter;
  res.point = q;
  res.weights = Vec::Zero(N);
  for (std::size_t i = 0; i < S.size(); ++i) res.weights[S[i]] += mu[i];
  return res;
}

// ── Projection ──────────────────────────────────────────────────────────────

namespace {

struct DisjointSet {
  std::vector<int> parent;
  explicit DisjointSet(int n) : parent(static_cast<std::size_t>(n)) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int a) {
    while (parent[static_cast<std::size_t>(a)] != a) {
      parent[static_cast<std::size_t>(a)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(a)])];
      a = parent[static_cast<std::size_t>(a)];
    }
    return a;
  }
  void unite(int a, int b) { parent[static_cast<std::size_t>(find(a))] = find(b); }
};

double subset_count(int m, int kmax) {
  double total = 1.0;  // the empty set (feasible target short-circuit)
  double c = 1.0;
  for (int k = 1; k <= kmax; ++k) {
    c = c * (m - k + 1) / k;
    total += c;
  }
  return total;
}

// Exact projection of t onto {d | A d <= b} for one small dense block.
std::optional<Vec> project_block(const Mat& A, const Vec& b, const Vec& t, long cap) {
  const int m = static_cast<int>(A.rows());
  const int n = static_cast<int>(A.cols());
  const double ftol = 1e-9 * (1.0 + b.cwiseAbs().maxCoeff() + t.cwiseAbs().maxCoeff());

  if (((A * t - b).array() <= ftol).all()) return t;

  const int kmax = std::min(m, n);
  if (subset_count(m, kmax) > static_cast<double>(cap))
    throw NumericError("project_polytope: block too large to enumerate (" +
                       std::to_string(m) + " rows, " + std::to_string(n) + " vars)");

  std::optional<Vec> best;
  double best_dist = std::numeric_limits<double>::infinity();

  std::vector<int> comb;
  for (int k = 1; k <= kmax; ++k) {
    comb.resize(static_cast<std::size_t>(k));
    std::iota(comb.begin(), comb.end(), 0);
    while (true) {
      Mat As(k, n);
      Vec bs(k);
      for (int i = 0; i < k; ++i) {
        As.row(i) = A.row(comb[static_cast<std::size_t>(i)]);
        bs[i] = b[comb[static_cast<std::size_t>(i)]];
      }
      const Mat M = As * As.transpose();
      const Vec rhs = As * t - bs;
      Eigen::FullPivLU<Mat> lu(M);
      if (lu.isInvertible()) {
        const Vec lambda = lu.solve(rhs);
        if ((lambda.array() >= -1e-9).all()) {
          const Vec d = t - As.transpose() * lambda;
          if (((A * d - b).array() <= ftol).all()) {
            const double dist = (d - t).norm();
            if (dist < best_dist) {
              best_dist = dist;
              best = d;
            }
          }
        }
      }
      // next combination
      int i = k - 1;
      while (i >= 0 && comb[static_cast<std::size_t>(i)] == m - k + i) --i;
      if (i < 0) break;
      ++comb[static_cast<std::size_t>(i)];
      for (int j = i + 1; j < k; ++j) comb[static_cast<std::size_t>(j)] = comb[static_cast<std::size_t>(j - 1)] + 1;
    }
  }
  return best;
}

}  // namespace

ProjectionResult project_polytope(const Mat& A, const Vec& b, const Vec& target,
                                  long enumeration_cap) {
  const int m = static_cast<int>(A.rows());
  const int n = static_cast<int>(A.cols());
  if (b.size() != m) throw DimensionError("project_polytope: A/b row mismatch");
  if (target.size() != n) throw DimensionError("project_polytope: target dimension mismatch");

  ProjectionResult out;
  out.point = target;

  // Normalize rows; drop numerically zero rows (infeasible only if b < 0).
  std::vector<int> rows;
  Mat An(m, n);
  Vec bn(m);
  for (int i = 0; i < m; ++i) {
    const double nrm = A.row(i).norm();
    if (nrm < 1e-12) {
      if (b[i] < -1e-9) return out;  // 0 <= b_i fails: empty
      continue;
    }
    An.row(static_cast<Eigen::Index>(rows.size())) = A.row(i) / nrm;
    bn[static_cast<Eigen::Index>(rows.size())] = b[i] / nrm;
    rows.push_back(i);
  }
  const int mr = static_cast<int>(rows.size());
  if (mr == 0) {
    out.feasible = true;
    return out;
  }

  // Decouple variables into connected components of the support graph.
  DisjointSet ds(n);
  for (int i = 0; i < mr; ++i) {
    int first = -1;
    for (int j = 0; j < n; ++j) {
      if (An(i, j) != 0.0) {
        if (first < 0)
          first = j;
        else
          ds.unite(first, j);
      }
    }
  }

  std::vector<std::vector<int>> comp_vars(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) comp_vars[static_cast<std::size_t>(ds.find(j))].push_back(j);

  Vec result = target;
  for (int root = 0; root < n; ++root) {
    const auto& vars = comp_vars[static_cast<std::size_t>(root)];
    if (vars.empty()) continue;
    std::vector<int> crows;
    for (int i = 0; i < mr; ++i) {
      for (int j : vars) {
        if (An(i, j) != 0.0) {
          crows.push_back(i);
          break;
        }
      }
    }
    if (crows.empty()) continue;

    Mat Ac(static_cast<Eigen::Index>(crows.size()), static_cast<Eigen::Index>(vars.size()));
    Vec bc(static_cast<Eigen::Index>(crows.size()));
    Vec tc(static_cast<Eigen::Index>(vars.size()));
    for (std::size_t i = 0; i < crows.size(); ++i) {
      for (std::size_t j = 0; j < vars.size(); ++j) Ac(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = An(crows[i], vars[j]);
      bc[static_cast<Eigen::Index>(i)] = bn[crows[i]];
    }
    for (std::size_t j = 0; j < vars.size(); ++j) tc[static_cast<Eigen::Index>(j)] = target[vars[j]];

    auto proj = project_block(Ac, bc, tc, enumeration_cap);
    if (!proj) return out;  // this block is empty, so the polytope is
    for (std::size_t j = 0; j < vars.size(); ++j) result[vars[j]] = (*proj)[static_cast<Eigen::Index>(j)];
  }

  out.point = result;
  out.feasible = true;
  out.distance = (result - target).norm();
  return out;
}

// ── Hildreth ────────────────────────────────────────────────────────────────

QpResult solve_qp_hildreth(const Mat& P, const Vec& q, const Mat& A, const Vec& b,
                           int max_sweeps, double tol) {
  const int n = static_cast<int>(q.size());
  const int m = static_cast<int>(A.rows());
  if (P.rows() != n || P.cols() != n) throw DimensionError("solve_qp_hildreth: P size mismatch");
  if (m > 0 && A.cols() != n) throw DimensionError("solve_qp_hildreth: A column mismatch");
  if (b.size() != m) throw DimensionError("solve_qp_hildreth: b size mismatch");

  const Mat Ps = 0.5 * (P + P.transpose());
  Eigen::LLT<Mat> llt(Ps);
  if (llt.info() != Eigen::Success)
    throw NumericError("solve_qp_hildreth: P is not positive definite");

  QpResult res;
  if (m == 0) {
    res.x = -llt.solve(q);
    res.lambda = Vec(0);
    return res;
  }

  const Mat R = llt.solve(A.transpose());  // P^{-1} A'
  const Mat G = A * R;                     // m x m
  const Vec g = A * llt.solve(q) + b;
  const double scale = 1.0 + b.cwiseAbs().maxCoeff();

  Vec lambda = Vec::Zero(m);
  res.converged = false;
  int sweep = 0;
  for (; sweep < max_sweeps; ++sweep) {
    double delta = 0.0;
    for (int i = 0; i < m; ++i) {
      const double gii = G(i, i);
      if (gii <= 1e-14) {
        if (b[i] < -1e-9 * scale) res.feasible = false;  // 0 <= b_i violated
        continue;
      }
      const double w = g[i] + G.row(i).dot(lambda) - gii * lambda[i];
      const double nl = std::max(0.0, -w / gii);
      delta = std::max(delta, std::abs(nl - lambda[i]));
      lambda[i] = nl;
    }
    if (delta <= tol * (1.0 + lambda.cwiseAbs().maxCoeff())) {
      res.converged = true;
      ++sweep;
      break;
    }
    if (lambda.norm() > 1e10) {
      res.feasible = false;
      break;
    }
  }

  res.sweeps = sweep;
  res.lambda = lambda;
  res.x = -llt.solve(q + A.transpose() * lambda);
  res.residual = std::max(0.0, (A * res.x - b).maxCoeff());
  if (res.residual > 1e-6 * scale) res.feasible = false;
  return res;
}

}  // namespace rv::qp
