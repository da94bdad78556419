#include "rv/falsify.hpp"

#include <algorithm>
#include <cmath>

#include "rv/common.hpp"

namespace rv {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void validate(const SystemModel& model, const stl::FormulaPtr& phi,
              const InputParameterization& param, long long budget) {
  if (!phi) throw ConfigError("falsify: null formula");
  if (param.K < 1) throw ConfigError("falsify: need K >= 1 control points");
  if (!(param.horizon > 0)) throw ConfigError("falsify: horizon must be positive");
  if (param.ranges.dim() != model.k)
    throw DimensionError("falsify: control-point ranges must match disturbance dim");
  for (int i = 0; i < param.ranges.dim(); ++i)
    if (!std::isfinite(param.ranges.lo[i]) || !std::isfinite(param.ranges.hi[i]))
      throw ConfigError("falsify: control-point ranges must be finite");
  if (stl::horizon(*phi) > param.horizon + 1e-9)
    throw HorizonError("falsify: formula horizon exceeds the signal horizon");
  if (budget < 1) throw ConfigError("falsify: need budget >= 1");
}

Vec sample_points(const InputParameterization& param, std::mt19937_64& rng) {
  const int k = param.ranges.dim();
  Vec theta(param.K * k);
  for (int j = 0; j < param.K; ++j) theta.segment(j * k, k) = param.ranges.sample(rng);
  return theta;
}

struct Rollout {
  double rho = kInf;
  Trace trace;
  bool empty = false;
};

Rollout evaluate(const SystemModel& model, Controller& controller, const Vec& x0,
                 const PiecewiseReactiveBound* bound, const stl::FormulaPtr& phi,
                 const stl::PredicateMap& preds, const InputParameterization& param,
                 const Vec& theta) {
  const int k = param.ranges.dim();
  auto env = [&](const Vec& x, double t) {
    int idx = static_cast<int>(t / param.horizon * param.K);
    idx = std::clamp(idx, 0, param.K - 1);
    Vec d = theta.segment(idx * k, k);
    if (bound) d = project_to_bound(*bound, x, d);
    return d;
  };
  Rollout out;
  try {
    out.trace = simulate(model, controller, env, x0, param.horizon);
  } catch (const EmptyPolytopeError&) {
    out.empty = true;  // the bound admits nothing here; skip this rollout
    return out;
  }
  out.rho = stl::robustness(*phi, out.trace, 0, preds);
  return out;
}

}  // namespace

FalsificationResult falsify(const SystemModel& model, Controller& controller,
                            const Vec& x0, const PiecewiseReactiveBound* bound,
                            const stl::FormulaPtr& phi, const stl::PredicateMap& preds,
                            const InputParameterization& param, long long budget,
                            std::uint64_t seed, const FalsifierOptions& opt) {
  validate(model, phi, param, budget);
  if (opt.restarts < 1) throw ConfigError("falsify: need restarts >= 1");

  const int k = param.ranges.dim();
  Vec sigma(k);
  for (int i = 0; i < k; ++i)
    sigma[i] = opt.sigma_frac * (param.ranges.hi[i] - param.ranges.lo[i]);

  FalsificationResult res;
  res.seed = seed;

  const long long base = budget / opt.restarts;
  const long long extra = budget % opt.restarts;
  for (int r = 0; r < opt.restarts; ++r) {
    long long quota = base + (r < extra ? 1 : 0);
    if (quota == 0) continue;
    auto rng = make_rng(seed, static_cast<std::uint64_t>(r));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    Vec theta = sample_points(param, rng);
    Rollout cur = evaluate(model, controller, x0, bound, phi, preds, param, theta);
    ++res.evaluations;
    --quota;
    if (cur.empty) ++res.empty_projections;
    if (cur.rho < res.best_robustness) {
      res.best_robustness = cur.rho;
      res.best_trace = cur.trace;
      res.best_points = theta;
    }

    double temp = std::max(std::abs(std::isfinite(cur.rho) ? cur.rho : 1.0), 1e-3);
    while (quota > 0) {
      Vec prop = theta;
      for (int j = 0; j < param.K; ++j)
        for (int i = 0; i < k; ++i) prop[j * k + i] += sigma[i] * gauss(rng);
      for (int j = 0; j < param.K; ++j)
        prop.segment(j * k, k) = param.ranges.clamp(prop.segment(j * k, k));

      Rollout next = evaluate(model, controller, x0, bound, phi, preds, param, prop);
      ++res.evaluations;
      --quota;
      if (next.empty) ++res.empty_projections;
      if (next.rho < res.best_robustness) {
        res.best_robustness = next.rho;
        res.best_trace = next.trace;
        res.best_points = prop;
      }
      const double delta = next.rho - cur.rho;
      const bool accept =
          delta <= 0.0 ||
          (std::isfinite(delta) && unif(rng) < std::exp(-delta / temp));
      if (accept) {
        theta = prop;
        cur = next;
        temp *= opt.decay;
      }
    }
  }

  res.falsified = res.best_robustness < 0.0 &&
                  res.best_trace.length() > 0 &&
                  !stl::satisfies(*phi, res.best_trace, 0, preds);
  return res;
}

std::vector<std::pair<Vec, double>> robustness_landscape(
    const SystemModel& model, Controller& controller, const Vec& x0,
    const PiecewiseReactiveBound* bound, const stl::FormulaPtr& phi,
    const stl::PredicateMap& preds, const InputParameterization& param, int samples,
    std::uint64_t seed) {
  validate(model, phi, param, std::max(1, samples));
  if (samples < 0) throw ConfigError("robustness_landscape: negative sample count");

  std::vector<std::pair<Vec, double>> out;
  out.reserve(static_cast<std::size_t>(samples));
  for (int i = 0; i < samples; ++i) {
    auto rng = make_rng(seed, static_cast<std::uint64_t>(i));
    const Vec theta = sample_points(param, rng);
    const Rollout roll =
        evaluate(model, controller, x0, bound, phi, preds, param, theta);
    out.emplace_back(theta, roll.rho);
  }
  return out;
}

}  // namespace rv
