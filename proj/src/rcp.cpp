#include "rv/rcp.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "rv/common.hpp"

namespace rv {

namespace {

std::mutex g_clamp_mutex;
std::vector<std::string> g_clamp_log;

void log_clamp(const std::string& msg) {
  std::lock_guard<std::mutex> lock(g_clamp_mutex);
  g_clamp_log.push_back(msg);
}

}  // namespace

const std::vector<std::string>& rcp_clamp_log() { return g_clamp_log; }

void rcp_clamp_log_clear() {
  std::lock_guard<std::mutex> lock(g_clamp_mutex);
  g_clamp_log.clear();
}

double binomial_cdf(double epsilon, long long k, long long N) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0))
    throw ConfigError("binomial_cdf: epsilon must lie in [0, 1]");
  if (N < 0 || k < 0 || k > N) throw ConfigError("binomial_cdf: need 0 <= k <= N");
  if (k == N) return 1.0;       // full-support CDF
  if (epsilon == 0.0) return 1.0;  // only the j = 0 term survives, value 1
  if (epsilon == 1.0) return 0.0;  // every retained term carries (1-eps)^(N-j), N > k >= j

  const long double le = std::log(static_cast<long double>(epsilon));
  const long double lo = std::log1p(static_cast<long double>(-epsilon));
  const long double lgN = std::lgamma(static_cast<long double>(N) + 1.0L);

  // Kahan-compensated sum of exp(log C(N,j) + j log e + (N-j) log(1-e)).
  long double sum = 0.0L, comp = 0.0L;
  for (long long j = 0; j <= k; ++j) {
    const long double lt = lgN - std::lgamma(static_cast<long double>(j) + 1.0L) -
                           std::lgamma(static_cast<long double>(N - j) + 1.0L) +
                           static_cast<long double>(j) * le +
                           static_cast<long double>(N - j) * lo;
    const long double term = std::exp(lt);
    const long double y = term - comp;
    const long double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  return std::clamp(static_cast<double>(sum), 0.0, 1.0);
}

double misclassification_bound(long long N, int p, double epsilon) {
  if (p < 0) throw ConfigError("misclassification_bound: p must be nonnegative");
  if (p + 2 >= N)
    throw HypothesisError("misclassification_bound: requires p + 2 < N (got p = " +
                          std::to_string(p) + ", N = " + std::to_string(N) + ")");
  return binomial_cdf(epsilon, p + 2, N);
}

EpsilonBar epsilon_bar(long long N, long long k) {
  if (N < 0 || k < 0 || k > N) throw ConfigError("epsilon_bar: need 0 <= k <= N");
  auto f = [&](double eps) { return eps + binomial_cdf(eps, k, N) * (1.0 - eps); };

  EpsilonBar best;
  best.minimizer = 0.0;
  best.value = f(0.0);
  auto consider = [&](double eps, double val) {
    if (val < best.value) {
      best.value = val;
      best.minimizer = eps;
    }
  };
  const int grid = 1000;
  for (int i = 1; i <= grid; ++i) {
    const double eps = static_cast<double>(i) / grid;
    consider(eps, f(eps));
  }

  // Golden-section refinement around the winning grid cell.
  double a = std::max(0.0, best.minimizer - 1.0 / grid);
  double b = std::min(1.0, best.minimizer + 1.0 / grid);
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - inv_phi * (b - a), x2 = a + inv_phi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  consider(x1, f1);
  consider(x2, f2);
  for (int it = 0; it < 80 && b - a > 1e-14; ++it) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = f(x1);
      consider(x1, f1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = f(x2);
      consider(x2, f2);
    }
  }
  return best;
}

double multi_hyperplane_bound(long long N, int p, int n_h, double epsilon_prime,
                              bool* clamped) {
  if (n_h < 1) throw ConfigError("multi_hyperplane_bound: need n_h >= 1");
  if (!(epsilon_prime > 0.0 && epsilon_prime <= 1.0))
    throw ConfigError("multi_hyperplane_bound: epsilon_prime must lie in (0, 1]");
  if (p < 0) throw ConfigError("multi_hyperplane_bound: p must be nonnegative");
  if (p + 2 >= N)
    throw HypothesisError("multi_hyperplane_bound: requires p + 2 < N (got p = " +
                          std::to_string(p) + ", N = " + std::to_string(N) + ")");
  const double raw = epsilon_bar(N, p + 2).value * n_h / epsilon_prime;
  const bool clip = raw > 1.0;
  if (clamped) *clamped = clip;
  if (clip)
    log_clamp("multi_hyperplane_bound: " + format_double(raw) +
              " clamped to 1 (N=" + std::to_string(N) + ", p=" + std::to_string(p) +
              ", n_h=" + std::to_string(n_h) +
              ", eps'=" + format_double(epsilon_prime) + ")");
  return clip ? 1.0 : raw;
}

RcpCertificate certify(const PiecewiseReactiveBound& bound,
                       const std::vector<Snapshot>& batch, double epsilon) {
  const int regions = bound.n_regions();
  const int planes = bound.n_hyperplanes();
  const int p_eff = bound.features.p * regions;
  const long long N = static_cast<long long>(batch.size());

  const std::uint64_t batch_hash = snapshot_batch_hash(batch);
  if (bound.hyperplanes_fit_on == 0 || bound.hyperplanes_fit_on != batch_hash)
    throw ConfigError("certify: bound was not fit on the supplied batch");
  if (regions == 2 && bound.kappa_tuned_on == batch_hash)
    throw ConfigError(
        "certify: region threshold was tuned on this batch; certify with the "
        "held-out batch the planes were refit on");
  if (p_eff + 2 >= N)
    throw HypothesisError("certify: batch too small, need N > p + 2 = " +
                          std::to_string(p_eff + 2) + " positive samples, got " +
                          std::to_string(N));

  RcpCertificate cert;
  cert.N = N;
  cert.p = p_eff;
  cert.n_h = planes;
  cert.epsilon = epsilon;
  if (regions == 1 && planes == 1) {
    cert.kind = "single";
    cert.bound = misclassification_bound(N, p_eff, epsilon);
  } else {
    cert.kind = "multi";
    cert.bound = multi_hyperplane_bound(N, p_eff, planes, epsilon, &cert.clamped);
  }
  return cert;
}

}  // namespace rv
