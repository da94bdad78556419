#include "rv/svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

#include "rv/common.hpp"
#include "rv/qp.hpp"

namespace rv {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double optimal_c(const Mat& phi_pos, const Vec& v) {
  return -(phi_pos * v).minCoeff();
}

struct CoreOut {
  Vec v;
  double c = 0.0;
  double J = 0.0;
  double rnorm = 0.0;  // distance realizing the exact dual value -rnorm
  int iters = 0;
};

// Exact solve of min_{||v||<=1} w'v - s min_pos v'phi after slack and offset
// elimination.  A short projected-subgradient run (with iterate averaging)
// seeds the search; the minimum-norm-point polish on the vertex hull
// { s phi_i - w | i positive } is what makes the answer exact.
CoreOut core_solve(const Mat& phi_pos, const Mat& phi_neg, const Vec& k_pos,
                   const Vec& k_neg) {
  const int Np = static_cast<int>(phi_pos.rows());
  const int p = static_cast<int>(phi_pos.cols());
  Vec w = phi_pos.transpose() * k_pos;
  if (phi_neg.rows() > 0) w += phi_neg.transpose() * k_neg;
  const double s = k_pos.sum() + k_neg.sum();

  CoreOut out;
  out.v = Vec::Zero(p);
  if (s <= 0.0) return out;  // every weight vanishes: anything is optimal

  Mat R(Np, p);
  for (int i = 0; i < Np; ++i) R.row(i) = s * phi_pos.row(i) - w.transpose();
  double G = 1e-12;
  for (int i = 0; i < Np; ++i) G = std::max(G, R.row(i).norm());

  auto evalJ = [&](const Vec& v) { return w.dot(v) + s * optimal_c(phi_pos, v); };

  Vec v = Vec::Zero(p), vsum = Vec::Zero(p);
  Vec vbest = v;
  double Jbest = 0.0;  // evalJ(0) == 0
  auto consider = [&](const Vec& cand) {
    const double J = evalJ(cand);
    if (J < Jbest) {
      Jbest = J;
      vbest = cand;
    }
  };

  const int T = 200;
  for (int t = 1; t <= T; ++t) {
    int j = 0;
    (phi_pos * v).minCoeff(&j);
    const Vec grad = w - s * phi_pos.row(j).transpose();
    v -= grad / (G * std::sqrt(static_cast<double>(t)));
    const double nv = v.norm();
    if (nv > 1.0) v /= nv;
    vsum += v;
    consider(v);
    ++out.iters;
  }
  consider(vsum / T);

  auto mnp = qp::min_norm_point(R);
  out.rnorm = mnp.point.norm();
  if (out.rnorm > 1e-154) consider(mnp.point / out.rnorm);

  out.v = vbest;
  out.c = optimal_c(phi_pos, vbest);
  out.J = Jbest;
  return out;
}

void validate_raw(const Mat& phi_pos, const Mat& phi_neg, int expect_neg_weights,
                  const char* who) {
  if (phi_pos.rows() < 1)
    throw ConfigError(std::string(who) + ": at least one positive point required");
  if (phi_neg.rows() > 0 && phi_neg.cols() != phi_pos.cols())
    throw DimensionError(std::string(who) + ": feature dimensions differ");
  (void)expect_neg_weights;
}

void fill_slacks(SvmSolution& sol, const Mat& phi_pos, const Mat& phi_neg) {
  const int Np = static_cast<int>(phi_pos.rows());
  const int Nn = static_cast<int>(phi_neg.rows());
  sol.M = Vec(Np + Nn);
  for (int i = 0; i < Np; ++i) sol.M[i] = phi_pos.row(i).dot(sol.v) + sol.c;
  for (int i = 0; i < Nn; ++i) sol.M[Np + i] = -(phi_neg.row(i).dot(sol.v) + sol.c);
}

double gradient_block(const Vec& v1, const Vec& v2, const Mat& base, const Vec& gvals,
                      const Vec& k, double kappa, double gamma) {
  double acc = 0.0;
  for (int i = 0; i < base.rows(); ++i) {
    const auto [m1, m2] = membership(gvals[i], kappa, gamma);
    const double diff = base.row(i).dot(v1) - base.row(i).dot(v2);
    acc += k[i] * gamma * m1 * m2 * diff;
  }
  return acc;
}

int strict_cuts(const Mat& phi_neg, const Vec& v, double c) {
  int n = 0;
  for (Eigen::Index j = 0; j < phi_neg.rows(); ++j)
    if (phi_neg.row(j).dot(v) + c < -1e-10 * (1.0 + std::abs(c))) ++n;
  return n;
}

// When the data surrounds the positives in feature space the exact optimum of
// the stage problem is the null plane (objective 0), which cuts nothing and
// stalls the greedy loop.  In that case pick the best unit-norm direction
// instead: minimize the same objective restricted to the sphere, breaking
// near-ties by how many of the current negatives the induced plane cuts.
std::pair<Vec, double> sphere_recover(const Mat& phi_pos, const Mat& phi_neg,
                                      const Vec& k_pos, const Vec& k_neg) {
  const int Np = static_cast<int>(phi_pos.rows());
  const int p = static_cast<int>(phi_pos.cols());
  Vec w = phi_pos.transpose() * k_pos;
  if (phi_neg.rows() > 0) w += phi_neg.transpose() * k_neg;
  const double s = k_pos.sum() + k_neg.sum();

  auto evalJ = [&](const Vec& v) { return w.dot(v) + s * optimal_c(phi_pos, v); };

  std::vector<Vec> pool;
  const int stride = std::max(1, Np / 200);
  for (int i = 0; i < Np; i += stride) {
    Vec r = s * phi_pos.row(i).transpose() - w;
    const double nr = r.norm();
    if (nr > 1e-12 * (1.0 + w.norm())) pool.push_back(-r / nr);
  }
  for (int j = 0; j < p; ++j) {
    pool.push_back(Vec::Unit(p, j));
    pool.push_back(-Vec::Unit(p, j));
  }

  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t i = 0; i < pool.size(); ++i) ranked.emplace_back(evalJ(pool[i]), i);
  std::sort(ranked.begin(), ranked.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  // Polish the most promising starts: projected subgradient on the sphere.
  const std::size_t polish = std::min<std::size_t>(6, ranked.size());
  std::vector<Vec> refined;
  for (std::size_t k = 0; k < polish; ++k) {
    Vec v = pool[ranked[k].second];
    Vec best = v;
    double fbest = ranked[k].first;
    for (int t = 1; t <= 120; ++t) {
      int j = 0;
      (phi_pos * v).minCoeff(&j);
      Vec grad = w - s * phi_pos.row(j).transpose();
      const double ng = grad.norm();
      if (ng < 1e-300) break;
      v -= (0.5 / std::sqrt(static_cast<double>(t))) * grad / ng;
      const double nv = v.norm();
      if (nv < 1e-9) break;
      v /= nv;
      const double f = evalJ(v);
      if (f < fbest) {
        fbest = f;
        best = v;
      }
    }
    refined.push_back(best);
  }
  pool.insert(pool.end(), refined.begin(), refined.end());

  double fmin = kInf;
  for (const auto& v : pool) fmin = std::min(fmin, evalJ(v));
  Vec vbest;
  double cbest = 0.0;
  int cuts_best = -1;
  for (const auto& v : pool) {
    if (evalJ(v) > fmin + 1e-9 * (1.0 + std::abs(fmin))) continue;
    const double c = optimal_c(phi_pos, v);
    const int cuts = strict_cuts(phi_neg, v, c);
    if (cuts > cuts_best) {
      cuts_best = cuts;
      vbest = v;
      cbest = c;
    }
  }
  return {vbest, cbest};
}

// One stage of the greedy loop: the exact solver, plus the degenerate-case
// recovery.  A stage that cuts no negative strictly has hit the null optimum
// (any strictly better plane would have a negative objective).
SvmSolution stage_solve(const Mat& phi_pos, const Mat& phi_neg, const Vec& k_pos,
                        const Vec& k_neg) {
  SvmSolution sol = solve_l1_svm_raw(phi_pos, phi_neg, k_pos, k_neg);
  if (phi_neg.rows() == 0 || strict_cuts(phi_neg, sol.v, sol.c) > 0) return sol;
  auto [v, c] = sphere_recover(phi_pos, phi_neg, k_pos, k_neg);
  if (v.size() == 0 || strict_cuts(phi_neg, v, c) == 0) return sol;
  sol.v = v;
  sol.c = c;
  fill_slacks(sol, phi_pos, phi_neg);
  sol.objective = k_pos.dot(phi_pos * v) + k_neg.dot(phi_neg * v) +
                  (k_pos.sum() + k_neg.sum()) * c;
  return sol;
}

std::vector<Hyperplane> greedy_multi(const Mat& phi_pos, const Mat& phi_neg, int n_h,
                                     double eps_active, std::vector<SvmSolution>* sols) {
  if (n_h < 1) throw ConfigError("multi_hyperplane_svm: need n_h >= 1");
  if (!(eps_active > 0)) throw ConfigError("multi_hyperplane_svm: eps_active must be > 0");
  const int Np = static_cast<int>(phi_pos.rows());
  const int Nn = static_cast<int>(phi_neg.rows());
  const int p = static_cast<int>(phi_pos.cols());

  std::vector<int> active(static_cast<std::size_t>(Nn));
  std::iota(active.begin(), active.end(), 0);
  std::vector<Hyperplane> out;
  for (int t = 0; t < n_h; ++t) {
    Mat Pa(static_cast<Eigen::Index>(active.size()), p);
    for (std::size_t i = 0; i < active.size(); ++i) Pa.row(static_cast<Eigen::Index>(i)) = phi_neg.row(active[i]);
    SvmSolution sol = stage_solve(phi_pos, Pa, Vec::Ones(Np),
                                  Vec::Ones(static_cast<Eigen::Index>(active.size())));
    out.push_back({sol.v, sol.c});
    if (sols) sols->push_back(std::move(sol));
    std::vector<int> next;
    for (int idx : active)
      if (phi_neg.row(idx).dot(out.back().v) + out.back().c >= eps_active) next.push_back(idx);
    active = std::move(next);
    if (active.empty()) break;
  }
  return out;
}

}  // namespace

SvmSolution solve_l1_svm_raw(const Mat& phi_pos, const Mat& phi_neg, const Vec& k_pos,
                             const Vec& k_neg) {
  validate_raw(phi_pos, phi_neg, static_cast<int>(k_neg.size()), "solve_l1_svm");
  if (k_pos.size() != phi_pos.rows() || k_neg.size() != phi_neg.rows())
    throw DimensionError("solve_l1_svm: weight vector sizes");
  if ((k_pos.array() < 0).any() || (k_neg.size() > 0 && (k_neg.array() < 0).any()))
    throw ConfigError("solve_l1_svm: weights must be nonnegative");

  const CoreOut core = core_solve(phi_pos, phi_neg, k_pos, k_neg);
  SvmSolution sol;
  sol.v = core.v;
  sol.c = core.c;
  sol.objective = core.J;
  sol.iterations = core.iters;
  sol.dual_gap = std::max(0.0, core.J + core.rnorm);
  sol.converged = sol.dual_gap <= 1e-6 * (1.0 + std::abs(core.J));
  fill_slacks(sol, phi_pos, phi_neg);
  return sol;
}

SvmSolution solve_l1_svm(const std::vector<Snapshot>& positives,
                         const std::vector<Snapshot>& negatives,
                         const FeatureMap& features, const Vec& k) {
  const auto Np = static_cast<Eigen::Index>(positives.size());
  const auto Nn = static_cast<Eigen::Index>(negatives.size());
  if (k.size() != Np + Nn) throw DimensionError("solve_l1_svm: weight count");
  if ((k.array() <= 0).any()) throw ConfigError("solve_l1_svm: weights must be positive");
  return solve_l1_svm_raw(feature_matrix(features, positives),
                          feature_matrix(features, negatives), k.head(Np), k.tail(Nn));
}

SvmSolution solve_weighted_svm_raw(const Mat& phi_pos, const Mat& phi_neg, const Vec& k_p,
                                   const Vec& k_nc, const Vec& k_nw) {
  validate_raw(phi_pos, phi_neg, static_cast<int>(k_nw.size()), "solve_weighted_svm");
  const int Np = static_cast<int>(phi_pos.rows());
  const int Nn = static_cast<int>(phi_neg.rows());
  const int p = static_cast<int>(phi_pos.cols());
  if (k_p.size() != Np || k_nc.size() != Nn || k_nw.size() != Nn)
    throw DimensionError("solve_weighted_svm: weight vector sizes");
  if ((k_p.array() < -1e-12).any() || (Nn > 0 && (k_nc.array() < -1e-12).any()))
    throw ConfigError("solve_weighted_svm: weights must be nonnegative");
  if (Nn > 0 && ((k_nw - k_nc).array() < -1e-12).any())
    throw ConfigError("solve_weighted_svm: needs k_nc <= k_nw elementwise");

  // Each negative margin m is charged max(k_nc m, k_nw m): k_nw on the wrong
  // side, k_nc on the correct side.  Whole objective stays convex in (v, c).
  auto trueG = [&](const Vec& v) {
    const double c = optimal_c(phi_pos, v);
    double G = k_p.dot(phi_pos * v) + k_p.sum() * c;
    for (int i = 0; i < Nn; ++i) {
      const double m = phi_neg.row(i).dot(v) + c;
      G += (m >= 0 ? k_nw[i] : k_nc[i]) * m;
    }
    return G;
  };
  auto sign_weights = [&](const Vec& v) {
    const double c = optimal_c(phi_pos, v);
    Vec kap(Nn);
    for (int i = 0; i < Nn; ++i)
      kap[i] = (phi_neg.row(i).dot(v) + c >= 0) ? k_nw[i] : k_nc[i];
    return kap;
  };

  Vec vbest = Vec::Zero(p);
  double Gbest = trueG(vbest);
  double lb = -kInf;
  int iters = 0;
  bool fixed_point = false;
  auto consider = [&](const Vec& v) {
    const double G = trueG(v);
    if (G < Gbest) {
      Gbest = G;
      vbest = v;
    }
  };

  // Sign-freezing rounds from both extreme charge patterns.  Every frozen
  // subproblem underestimates the true objective pointwise, so its exact
  // dual value is a valid global lower bound.
  for (int start = 0; start < 2; ++start) {
    Vec kap = (start == 0) ? k_nw : k_nc;
    for (int round = 0; round < 10; ++round) {
      const CoreOut core = core_solve(phi_pos, phi_neg, k_p, kap);
      iters += core.iters;
      lb = std::max(lb, -core.rnorm);
      consider(core.v);
      const Vec next = sign_weights(core.v);
      if (Nn == 0 || (next - kap).cwiseAbs().maxCoeff() == 0.0) {
        fixed_point = true;
        break;
      }
      kap = next;
    }
  }

  // Projected subgradient on the true objective from the incumbent.
  {
    double G = 1e-12;
    for (int i = 0; i < Np; ++i) G = std::max(G, phi_pos.row(i).norm());
    for (int i = 0; i < Nn; ++i) G = std::max(G, phi_neg.row(i).norm());
    const double wscale = std::max({1.0, k_p.maxCoeff(), Nn > 0 ? k_nw.maxCoeff() : 0.0});
    G *= wscale * (Np + Nn);
    Vec v = vbest;
    for (int t = 1; t <= 300; ++t) {
      const Vec kap = sign_weights(v);
      Vec w = phi_pos.transpose() * k_p;
      if (Nn > 0) w += phi_neg.transpose() * kap;
      const double s = k_p.sum() + kap.sum();
      int j = 0;
      (phi_pos * v).minCoeff(&j);
      const Vec grad = w - s * phi_pos.row(j).transpose();
      v -= grad / (G * std::sqrt(static_cast<double>(t)));
      const double nv = v.norm();
      if (nv > 1.0) v /= nv;
      consider(v);
      ++iters;
    }
  }

  // Final freeze at the incumbent's signs.
  {
    const CoreOut core = core_solve(phi_pos, phi_neg, k_p, sign_weights(vbest));
    iters += core.iters;
    lb = std::max(lb, -core.rnorm);
    consider(core.v);
  }

  SvmSolution sol;
  sol.v = vbest;
  sol.c = optimal_c(phi_pos, vbest);
  sol.objective = Gbest;
  sol.iterations = iters;
  sol.dual_gap = std::max(0.0, Gbest - lb);
  sol.converged = fixed_point || sol.dual_gap <= 1e-6 * (1.0 + std::abs(Gbest));
  fill_slacks(sol, phi_pos, phi_neg);
  sol.m_nw = Vec::Zero(Nn);
  sol.m_nc = Vec::Zero(Nn);
  for (int i = 0; i < Nn; ++i) {
    const double m = phi_neg.row(i).dot(sol.v) + sol.c;
    if (m >= 0)
      sol.m_nw[i] = m;
    else
      sol.m_nc[i] = m;
  }
  return sol;
}

SvmSolution solve_weighted_svm(const std::vector<Snapshot>& positives,
                               const std::vector<Snapshot>& negatives,
                               const FeatureMap& features, const Vec& k_p,
                               const Vec& k_nc, const Vec& k_nw) {
  return solve_weighted_svm_raw(feature_matrix(features, positives),
                                feature_matrix(features, negatives), k_p, k_nc, k_nw);
}

std::vector<Hyperplane> multi_hyperplane_svm_raw(const Mat& phi_pos, const Mat& phi_neg,
                                                 int n_h, double eps_active) {
  return greedy_multi(phi_pos, phi_neg, n_h, eps_active, nullptr);
}

std::vector<Hyperplane> multi_hyperplane_svm(const std::vector<Snapshot>& positives,
                                             const std::vector<Snapshot>& negatives,
                                             const FeatureMap& features, int n_h,
                                             double eps_active) {
  return greedy_multi(feature_matrix(features, positives),
                      feature_matrix(features, negatives), n_h, eps_active, nullptr);
}

Mat feature_matrix(const FeatureMap& features, const std::vector<Snapshot>& snaps) {
  Mat M(static_cast<Eigen::Index>(snaps.size()), features.p);
  for (std::size_t i = 0; i < snaps.size(); ++i) {
    const Snapshot& s = snaps[i];
    if (s.x.size() != features.n || s.d.size() != features.k)
      throw DimensionError("feature_matrix: snapshot dimensions");
    const Vec phi = features.eval(s.x, s.d);
    if (phi.size() != features.p)
      throw DimensionError("feature_matrix: feature map returned wrong dimension");
    M.row(static_cast<Eigen::Index>(i)) = phi.transpose();
  }
  return M;
}

FeatureMap extend_features(const FeatureMap& base,
                           const std::function<double(const Vec&)>& g, double kappa,
                           double gamma) {
  FeatureMap f;
  f.id = base.id + "+pw";
  f.p = 2 * base.p;
  f.n = base.n;
  f.k = base.k;
  f.linear_in_d = base.linear_in_d;
  const int p = base.p;
  f.eval = [eval = base.eval, g, kappa, gamma, p](const Vec& x, const Vec& d) {
    const auto [m1, m2] = membership(g(x), kappa, gamma);
    const Vec phi = eval(x, d);
    Vec out(2 * p);
    out.head(p) = m1 * phi;
    out.tail(p) = m2 * phi;
    return out;
  };
  if (base.linear_in_d && base.d_matrix && base.d_offset) {
    f.d_matrix = [dm = base.d_matrix, g, kappa, gamma](const Vec& x) {
      const auto [m1, m2] = membership(g(x), kappa, gamma);
      const Mat A = dm(x);
      Mat out(2 * A.rows(), A.cols());
      out.topRows(A.rows()) = m1 * A;
      out.bottomRows(A.rows()) = m2 * A;
      return out;
    };
    f.d_offset = [db = base.d_offset, g, kappa, gamma](const Vec& x) {
      const auto [m1, m2] = membership(g(x), kappa, gamma);
      const Vec b = db(x);
      Vec out(2 * b.size());
      out.head(b.size()) = m1 * b;
      out.tail(b.size()) = m2 * b;
      return out;
    };
  }
  return f;
}

double kappa_objective_gradient(const SvmSolution& solution,
                                const std::vector<Snapshot>& positives,
                                const std::vector<Snapshot>& negatives, double kappa,
                                double gamma, const std::function<double(const Vec&)>& g,
                                const FeatureMap& features, const Vec& k) {
  const int p = features.p;
  if (solution.v.size() != 2 * p)
    throw DimensionError("kappa_objective_gradient: solution is not on extended features");
  const auto Np = static_cast<Eigen::Index>(positives.size());
  const auto Nn = static_cast<Eigen::Index>(negatives.size());
  if (k.size() != Np + Nn) throw DimensionError("kappa_objective_gradient: weight count");

  const Vec v1 = solution.v.head(p);
  const Vec v2 = solution.v.tail(p);
  auto gvals = [&](const std::vector<Snapshot>& snaps) {
    Vec out(static_cast<Eigen::Index>(snaps.size()));
    for (std::size_t i = 0; i < snaps.size(); ++i) out[static_cast<Eigen::Index>(i)] = g(snaps[i].x);
    return out;
  };
  double grad = gradient_block(v1, v2, feature_matrix(features, positives),
                               gvals(positives), k.head(Np), kappa, gamma);
  if (Nn > 0)
    grad += gradient_block(v1, v2, feature_matrix(features, negatives), gvals(negatives),
                           k.tail(Nn), kappa, gamma);
  return grad;
}

AutotuneResult autotune_piecewise_svm(const std::vector<Snapshot>& positives,
                                      const std::vector<Snapshot>& negatives,
                                      const FeatureMap& features, const std::string& g_id,
                                      const std::function<double(const Vec&)>& g,
                                      double gamma, double kappa0, int iterations, int n_h,
                                      double eps_active, const Box& d_box, double step0) {
  if (iterations < 1) throw ConfigError("autotune_piecewise_svm: iterations must be >= 1");
  if (!(gamma > 0)) throw ConfigError("autotune_piecewise_svm: gamma must be positive");
  if (!g) throw ConfigError("autotune_piecewise_svm: region function required");

  const int p = features.p;
  const Mat Bp = feature_matrix(features, positives);
  const Mat Bn = feature_matrix(features, negatives);
  Vec gp(Bp.rows()), gn(Bn.rows());
  for (Eigen::Index i = 0; i < Bp.rows(); ++i) gp[i] = g(positives[static_cast<std::size_t>(i)].x);
  for (Eigen::Index i = 0; i < Bn.rows(); ++i) gn[i] = g(negatives[static_cast<std::size_t>(i)].x);

  double gmin = kInf, gmax = -kInf;
  for (Eigen::Index i = 0; i < gp.size(); ++i) {
    gmin = std::min(gmin, gp[i]);
    gmax = std::max(gmax, gp[i]);
  }
  for (Eigen::Index i = 0; i < gn.size(); ++i) {
    gmin = std::min(gmin, gn[i]);
    gmax = std::max(gmax, gn[i]);
  }
  if (!std::isfinite(gmin)) {
    gmin = kappa0 - 1.0;
    gmax = kappa0 + 1.0;
  }
  const double range = (gmax > gmin) ? gmax - gmin : 1.0;
  const double eta0 = step0 < 0 ? 0.1 * range : step0;

  const Vec ones_p = Vec::Ones(Bp.rows());
  const Vec ones_n = Vec::Ones(Bn.rows());
  const Vec kfull = Vec::Ones(Bp.rows() + Bn.rows());
  constexpr double kPenalty = 1e3;  // keeps positive slacks pinned during descent

  auto extended = [&](double kap, const Mat& B, const Vec& gv) {
    Mat E(B.rows(), 2 * p);
    for (Eigen::Index i = 0; i < B.rows(); ++i) {
      const auto [m1, m2] = membership(gv[i], kap, gamma);
      E.row(i).head(p) = m1 * B.row(i);
      E.row(i).tail(p) = m2 * B.row(i);
    }
    return E;
  };
  // The equality objective alone rewards degenerate fits: a kappa that dumps
  // the negatives where no plane cuts them scores the null optimum.  The
  // tracked objective therefore charges positive slacks and every negative
  // the min-composition fails to cut, so only separating kappas compete.
  auto penalized = [&](const SvmSolution& sol, const std::vector<Hyperplane>& planes,
                       const Mat& En) {
    double pen = 0.0;
    for (Eigen::Index i = 0; i < Bp.rows(); ++i) pen += std::max(0.0, -sol.M[i]);
    for (Eigen::Index j = 0; j < En.rows(); ++j) {
      double h = kInf;
      for (const auto& pl : planes) h = std::min(h, En.row(j).dot(pl.v) + pl.c);
      pen += std::max(0.0, h + eps_active);
    }
    return sol.objective + kPenalty * pen;
  };
  auto stage_objective = [&](double kap) {
    const Mat Ep = extended(kap, Bp, gp);
    const Mat En = extended(kap, Bn, gn);
    std::vector<SvmSolution> sols;
    const auto planes = greedy_multi(Ep, En, n_h, eps_active, &sols);
    return penalized(sols.front(), planes, En);
  };

  AutotuneResult res;
  double kappa = kappa0;
  double bestJ = kInf, bestKappa = kappa0;
  std::vector<Hyperplane> bestPlanes;

  for (int t = 1; t <= iterations; ++t) {
    const Mat Ep = extended(kappa, Bp, gp);
    const Mat En = extended(kappa, Bn, gn);
    std::vector<SvmSolution> sols;
    auto planes = greedy_multi(Ep, En, n_h, eps_active, &sols);
    const double J = penalized(sols.front(), planes, En);
    const Vec v1 = sols.front().v.head(p);
    const Vec v2 = sols.front().v.tail(p);
    double grad = gradient_block(v1, v2, Bp, gp, ones_p, kappa, gamma);
    if (Bn.rows() > 0) grad += gradient_block(v1, v2, Bn, gn, ones_n, kappa, gamma);

    res.kappa_trajectory.push_back(kappa);
    res.objective_trajectory.push_back(J);
    res.gradient_trajectory.push_back(grad);
    if (J < bestJ) {
      bestJ = J;
      bestKappa = kappa;
      bestPlanes = planes;
    }
    if (t == iterations || eta0 == 0.0 || grad == 0.0) continue;

    double eta = eta0 / std::sqrt(static_cast<double>(t));
    for (int bt = 0; bt < 5; ++bt) {
      const double cand = std::clamp(kappa - eta * grad, gmin, gmax);
      if (stage_objective(cand) <= J + 1e-12) {
        kappa = cand;
        break;
      }
      eta *= 0.5;
    }
  }

  PiecewiseReactiveBound bound;
  bound.g_id = g_id;
  bound.g = g;
  bound.kappa = bestKappa;
  bound.gamma = gamma;
  bound.features = features;
  bound.d_box = d_box;
  bound.regions.resize(2);
  for (const auto& plane : bestPlanes) {
    bound.regions[0].push_back({plane.v.head(p), plane.c});
    bound.regions[1].push_back({plane.v.tail(p), plane.c});
  }
  // Fingerprint the positive batch only: negatives come from the falsifier
  // and are side constraints, not part of the i.i.d. certification batch.
  bound.kappa_tuned_on = snapshot_batch_hash(positives);
  bound.hyperplanes_fit_on = bound.kappa_tuned_on;

  res.bound = std::move(bound);
  res.best_objective = bestJ;
  res.converged = true;
  return res;
}

PiecewiseReactiveBound single_region_bound(const FeatureMap& features,
                                           const std::vector<Hyperplane>& planes,
                                           const Box& d_box) {
  if (planes.empty()) throw ConfigError("single_region_bound: no hyperplanes");
  PiecewiseReactiveBound bound;
  bound.features = features;
  bound.d_box = d_box;
  bound.regions = {planes};
  return bound;
}

}  // namespace rv
