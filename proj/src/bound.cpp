#include "rv/bound.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "rv/common.hpp"
#include "rv/qp.hpp"

namespace rv {

bool check_linear_in_d(const FeatureMap& f, const Box& x_box, const Box& d_box,
                       std::uint64_t seed, int trials, double tol) {
  if (!f.linear_in_d || !f.d_matrix || !f.d_offset) return false;
  auto rng = make_rng(seed, 0x11ec);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int t = 0; t < trials; ++t) {
    const Vec x = x_box.sample(rng);
    const Vec d1 = d_box.sample(rng);
    const Vec d2 = d_box.sample(rng);
    const double a = U(rng);
    const Mat A = f.d_matrix(x);
    const Vec b = f.d_offset(x);
    if ((f.eval(x, d1) - (A * d1 + b)).cwiseAbs().maxCoeff() > tol) return false;
    // phi(x, a d1 + (1-a) d2) must interpolate exactly
    const Vec mix = a * d1 + (1.0 - a) * d2;
    const Vec lhs = f.eval(x, mix);
    const Vec rhs = a * f.eval(x, d1) + (1.0 - a) * f.eval(x, d2);
    if ((lhs - rhs).cwiseAbs().maxCoeff() > tol) return false;
  }
  return true;
}

std::pair<double, double> membership(double gz, double kappa, double gamma) {
  const double t = std::clamp(gamma * (gz - kappa), -700.0, 700.0);
  const double m1 = 1.0 / (1.0 + std::exp(t));
  return {m1, 1.0 - m1};
}

namespace {

void check_bound_shape(const PiecewiseReactiveBound& bound) {
  const auto R = bound.regions.size();
  if (R < 1 || R > 2) throw ConfigError("bound must have 1 or 2 regions");
  if (bound.regions.front().empty()) throw ConfigError("bound has an empty hyperplane list");
  if (R == 2) {
    if (bound.regions[0].size() != bound.regions[1].size())
      throw ConfigError("bound region hyperplane lists differ in length");
    if (!bound.g) throw ConfigError("two-region bound needs a region function");
  }
}

}  // namespace

double evaluate_h(const PiecewiseReactiveBound& bound, const Vec& x, const Vec& d) {
  check_bound_shape(bound);
  if (x.size() != bound.features.n) throw DimensionError("evaluate_h: state dimension");
  if (d.size() != bound.features.k) throw DimensionError("evaluate_h: disturbance dimension");
  const Vec phi = bound.features.eval(x, d);
  double m1 = 1.0, m2 = 0.0;
  if (bound.n_regions() == 2) {
    std::tie(m1, m2) = membership(bound.g(x), bound.kappa, bound.gamma);
  }
  double h = std::numeric_limits<double>::infinity();
  for (int j = 0; j < bound.n_hyperplanes(); ++j) {
    const auto& h0 = bound.regions[0][static_cast<std::size_t>(j)];
    double val = m1 * (h0.v.dot(phi) + h0.c);
    if (bound.n_regions() == 2) {
      const auto& h1 = bound.regions[1][static_cast<std::size_t>(j)];
      val += m2 * (h1.v.dot(phi) + h1.c);
    }
    h = std::min(h, val);
  }
  return h;
}

Polytope bound_polytope(const PiecewiseReactiveBound& bound, const Vec& x) {
  check_bound_shape(bound);
  const FeatureMap& f = bound.features;
  if (!f.linear_in_d || !f.d_matrix || !f.d_offset)
    throw ConfigError("bound_polytope requires a linear-in-d feature map");
  if (x.size() != f.n) throw DimensionError("bound_polytope: state dimension");

  const Mat A_x = f.d_matrix(x);
  const Vec b_x = f.d_offset(x);
  double m1 = 1.0, m2 = 0.0;
  if (bound.n_regions() == 2) {
    std::tie(m1, m2) = membership(bound.g(x), bound.kappa, bound.gamma);
  }

  const int nh = bound.n_hyperplanes();
  const int nbox = bound.d_box.dim() > 0 ? 2 * f.k : 0;
  Polytope P;
  P.A = Mat::Zero(nh + nbox, f.k);
  P.b = Vec::Zero(nh + nbox);
  for (int j = 0; j < nh; ++j) {
    Vec v_eff = m1 * bound.regions[0][static_cast<std::size_t>(j)].v;
    double c_eff = m1 * bound.regions[0][static_cast<std::size_t>(j)].c;
    if (bound.n_regions() == 2) {
      v_eff += m2 * bound.regions[1][static_cast<std::size_t>(j)].v;
      c_eff += m2 * bound.regions[1][static_cast<std::size_t>(j)].c;
    }
    // h_j >= 0  <=>  -(A(x)' v)' d <= v' b(x) + c
    P.A.row(j) = -(A_x.transpose() * v_eff).transpose();
    P.b[j] = v_eff.dot(b_x) + c_eff;
  }
  if (nbox > 0) {
    if (bound.d_box.dim() != f.k) throw DimensionError("bound_polytope: d_box dimension");
    for (int i = 0; i < f.k; ++i) {
      P.A(nh + 2 * i, i) = 1.0;
      P.b[nh + 2 * i] = bound.d_box.hi[i];
      P.A(nh + 2 * i + 1, i) = -1.0;
      P.b[nh + 2 * i + 1] = -bound.d_box.lo[i];
    }
  }
  const Vec probe = bound.d_box.dim() > 0 ? bound.d_box.center() : Vec::Zero(f.k);
  P.empty = !qp::project_polytope(P.A, P.b, probe).feasible;
  return P;
}

Vec project_to_bound(const PiecewiseReactiveBound& bound, const Vec& x, const Vec& d_raw) {
  const Polytope P = bound_polytope(bound, x);
  if (P.empty) throw EmptyPolytopeError("reactive bound is empty at this state");
  auto r = qp::project_polytope(P.A, P.b, d_raw);
  if (!r.feasible) throw EmptyPolytopeError("reactive bound is empty at this state");
  return r.point;
}

// ── Serialization ───────────────────────────────────────────────────────────

using nlohmann::json;

void save_bound(const PiecewiseReactiveBound& bound, const std::string& path) {
  check_bound_shape(bound);
  json doc;
  doc["feature_map"] = bound.features.id;
  doc["g"] = bound.g_id;
  doc["kappa"] = bound.kappa;
  doc["gamma"] = bound.gamma;
  json regions = json::array();
  for (const auto& region : bound.regions) {
    json list = json::array();
    for (const auto& h : region) {
      json hp;
      hp["v"] = std::vector<double>(h.v.data(), h.v.data() + h.v.size());
      hp["c"] = h.c;
      list.push_back(std::move(hp));
    }
    regions.push_back(std::move(list));
  }
  doc["regions"] = std::move(regions);
  if (bound.d_box.dim() > 0) {
    doc["d_box"] = {
        {"lo", std::vector<double>(bound.d_box.lo.data(), bound.d_box.lo.data() + bound.d_box.lo.size())},
        {"hi", std::vector<double>(bound.d_box.hi.data(), bound.d_box.hi.data() + bound.d_box.hi.size())}};
  }
  doc["meta"] = {{"kappa_tuned_on", std::to_string(bound.kappa_tuned_on)},
                 {"hyperplanes_fit_on", std::to_string(bound.hyperplanes_fit_on)}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write bound file: " + path);
  out << doc.dump(2) << "\n";
}

PiecewiseReactiveBound load_bound(const std::string& path, const BoundContext& ctx) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read bound file: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("bound file is not valid JSON: ") + e.what());
  }
  PiecewiseReactiveBound bound;
  try {
    const std::string fid = doc.at("feature_map").get<std::string>();
    auto fit = ctx.feature_maps.find(fid);
    if (fit == ctx.feature_maps.end())
      throw ConfigError("unknown feature map in bound file: " + fid);
    bound.features = fit->second;
    bound.g_id = doc.value("g", std::string{});
    bound.kappa = doc.at("kappa").get<double>();
    bound.gamma = doc.at("gamma").get<double>();
    for (const auto& region : doc.at("regions")) {
      std::vector<Hyperplane> list;
      for (const auto& hp : region) {
        Hyperplane h;
        const auto v = hp.at("v").get<std::vector<double>>();
        h.v = Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
        h.c = hp.at("c").get<double>();
        list.push_back(std::move(h));
      }
      bound.regions.push_back(std::move(list));
    }
    if (doc.contains("d_box")) {
      const auto lo = doc["d_box"].at("lo").get<std::vector<double>>();
      const auto hi = doc["d_box"].at("hi").get<std::vector<double>>();
      bound.d_box.lo = Eigen::Map<const Vec>(lo.data(), static_cast<Eigen::Index>(lo.size()));
      bound.d_box.hi = Eigen::Map<const Vec>(hi.data(), static_cast<Eigen::Index>(hi.size()));
    }
    if (doc.contains("meta")) {
      bound.kappa_tuned_on = std::stoull(doc["meta"].value("kappa_tuned_on", "0"));
      bound.hyperplanes_fit_on = std::stoull(doc["meta"].value("hyperplanes_fit_on", "0"));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("bound file malformed: ") + e.what());
  }
  if (!bound.g_id.empty()) {
    auto git = ctx.region_fns.find(bound.g_id);
    if (git == ctx.region_fns.end())
      throw ConfigError("unknown region function in bound file: " + bound.g_id);
    bound.g = git->second;
  } else if (bound.regions.size() == 2) {
    throw FormatError("two-region bound file without a region function id");
  }
  check_bound_shape(bound);
  return bound;
}

}  // namespace rv
