#include "rv/loop.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <utility>

#include "json.hpp"
#include "rv/common.hpp"
#include "rv/qp.hpp"
#include "rv/svm.hpp"

namespace rv {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Canonical fingerprint of a bound's numeric content; stable across runs and
// independent of whether the bound was also written to disk.
std::uint64_t bound_content_hash(const PiecewiseReactiveBound& b) {
  std::ostringstream os;
  os << b.g_id << '|' << format_double(b.kappa) << '|' << format_double(b.gamma);
  for (const auto& region : b.regions)
    for (const auto& plane : region) {
      os << '|' << format_double(plane.c);
      for (int i = 0; i < plane.v.size(); ++i) os << ',' << format_double(plane.v[i]);
    }
  return fnv1a(os.str());
}

void preflight(const LoopSystem& sys, const LoopConfig& cfg) {
  if (sys.model == nullptr) throw ConfigError("verify_loop: no system model");
  if (sys.controller == nullptr) throw ConfigError("verify_loop: no controller");
  if (!sys.phi) throw ConfigError("verify_loop: no specification formula");
  if (sys.features.p <= 0) throw ConfigError("verify_loop: feature map has no dimension");
  if (!sys.features.linear_in_d)
    throw ConfigError("verify_loop: projection needs a linear-in-d feature map");
  if (!sys.g_id.empty() && !sys.g)
    throw ConfigError("verify_loop: g_id set but no region function");
  if (sys.param.ranges.dim() != sys.model->k)
    throw ConfigError("verify_loop: input parameterization dimension mismatch");
  if (cfg.max_iterations < 1) throw ConfigError("verify_loop: max_iterations must be >= 1");
  if (cfg.budget < 1) throw ConfigError("verify_loop: budget must be >= 1");
  if (cfg.n_hyperplanes < 1) throw ConfigError("verify_loop: n_hyperplanes must be >= 1");
  if (!(cfg.cert_epsilon > 0.0 && cfg.cert_epsilon <= 1.0))
    throw ConfigError("verify_loop: cert_epsilon must be in (0, 1]");
  if (cfg.audit_grid < 0) throw ConfigError("verify_loop: audit_grid must be >= 0");
  for (const auto& path : cfg.positive_paths)
    if (!fs::exists(path)) throw ConfigError("verify_loop: missing positive data " + path);
}

// The certified object when the raw box already verifies: h == 0 accepts
// every disturbance in the box, which is exactly what the falsifier saw.
PiecewiseReactiveBound box_bound(const LoopSystem& sys) {
  Hyperplane zero{Vec::Zero(sys.features.p), 0.0};
  return single_region_bound(sys.features, {zero}, sys.model->disturbance_limits);
}

nlohmann::json cert_json(const RcpCertificate& c) {
  return {{"N", c.N},       {"p", c.p},           {"n_h", c.n_h},
          {"epsilon", c.epsilon}, {"bound", c.bound}, {"kind", c.kind},
          {"clamped", c.clamped}};
}

struct LoopState {
  std::vector<Snapshot> tune_batch;  // kappa tuning half
  std::vector<Snapshot> cert_batch;  // held-out certification half
  std::vector<Snapshot> all_pos;     // union, hard-constrained in every fit
  std::vector<Snapshot> dense_pos;   // every trace sample, for the diagnosis
  std::vector<Snapshot> negatives;
  std::vector<char> separated;  // per negative: was h <= -eps_active once
  std::vector<std::pair<Vec, Vec>> grid;
  double kappa_warm = 0.0;
};

void write_report(const LoopSystem& sys, const LoopConfig& cfg,
                  const VerificationResult& res, const std::string& error) {
  if (cfg.out_dir.empty()) return;
  nlohmann::json doc;
  doc["tool"] = kToolVersion;
  doc["verdict"] = verdict_name(res.verdict);
  doc["iterations"] = res.iterations;
  doc["aborted"] = !error.empty();
  if (!error.empty()) doc["error"] = error;
  doc["config"] = {{"max_iterations", cfg.max_iterations},
                   {"budget", cfg.budget},
                   {"n_hyperplanes", cfg.n_hyperplanes},
                   {"gamma", cfg.gamma},
                   {"kappa0", cfg.kappa0},
                   {"autotune_iterations", cfg.autotune_iterations},
                   {"eps_active", cfg.eps_active},
                   {"cert_epsilon", cfg.cert_epsilon},
                   {"delta_diag", cfg.delta_diag},
                   {"seed", cfg.seed},
                   {"restarts", cfg.falsifier.restarts},
                   {"audit_grid", cfg.audit_grid}};
  doc["system"] = {{"model", sys.model != nullptr ? sys.model->name : ""},
                   {"features", sys.features.id},
                   {"piecewise", !sys.g_id.empty()},
                   {"g", sys.g_id},
                   {"control_points", sys.param.K},
                   {"horizon", sys.param.horizon}};
  doc["iteration_records"] = nlohmann::json::array();
  for (const auto& rec : res.audit) {
    nlohmann::json it = {{"iteration", rec.iteration},
                         {"robustness_min", rec.robustness_min},
                         {"falsified", rec.falsified},
                         {"negatives_added", rec.negatives_added},
                         {"bound_hash", rec.bound_hash != 0
                                            ? nlohmann::json(std::to_string(rec.bound_hash))
                                            : nlohmann::json(nullptr)},
                         {"monotone_violations", rec.monotone_violations},
                         {"min_positive_h", rec.min_positive_h},
                         {"grid_accepted", rec.grid_accepted},
                         {"timing",
                          {{"falsify_s", rec.falsify_seconds},
                           {"learn_s", rec.learn_seconds},
                           {"certify_s", rec.certify_seconds}}}};
    it["certificate"] =
        rec.has_certificate ? cert_json(rec.certificate) : nlohmann::json(nullptr);
    if (!rec.bound_path.empty()) it["bound_file"] = rec.bound_path;
    if (!rec.trace_path.empty()) it["trace_file"] = rec.trace_path;
    if (!rec.kappa_trajectory.empty()) it["kappa_trajectory"] = rec.kappa_trajectory;
    doc["iteration_records"].push_back(std::move(it));
  }
  doc["certificate"] =
      res.has_certificate ? cert_json(res.certificate) : nlohmann::json(nullptr);
  if (res.has_confirmatory)
    doc["confirmatory"] = {{"seed", res.confirmatory.seed},
                           {"falsified", res.confirmatory.falsified},
                           {"best_robustness", res.confirmatory.best_robustness},
                           {"evaluations", res.confirmatory.evaluations},
                           {"agrees", res.confirmed}};
  doc["diagnosis"] = {{"ran", res.verdict != Verdict::kVerified},
                      {"inherently_unsafe", res.verdict == Verdict::kInherentlyUnsafe},
                      {"delta_diag", cfg.delta_diag},
                      {"note",
                       "heuristic check: counter-example disturbances against the "
                       "convex hull of observed disturbances at nearby states"}};
  doc["positive_snapshots"] = res.positive_snapshots.size();
  doc["counterexamples"] = res.counterexamples.size();
  doc["timing"] = {{"falsify_s", res.falsify_seconds},
                   {"learn_s", res.learn_seconds},
                   {"certify_s", res.certify_seconds},
                   {"total_s", res.total_seconds}};

  std::ofstream out(fs::path(cfg.out_dir) / "report.json");
  out << doc.dump(2) << '\n';
}

// One fit of the bound on (all positives, accumulated negatives).  Piecewise
// mode tunes kappa on the first batch, then refits every hyperplane with
// kappa frozen so the certification hash can point at the held-out batch.
PiecewiseReactiveBound learn_bound(const LoopSystem& sys, const LoopConfig& cfg,
                                   LoopState& st, std::vector<double>* kappa_traj) {
  const Box& d_box = sys.model->disturbance_limits;
  PiecewiseReactiveBound bound;
  if (sys.g_id.empty()) {
    auto planes = multi_hyperplane_svm(st.all_pos, st.negatives, sys.features,
                                       cfg.n_hyperplanes, cfg.eps_active);
    bound = single_region_bound(sys.features, planes, d_box);
  } else {
    auto tuned = autotune_piecewise_svm(st.tune_batch, st.negatives, sys.features,
                                        sys.g_id, sys.g, cfg.gamma, st.kappa_warm,
                                        cfg.autotune_iterations, cfg.n_hyperplanes,
                                        cfg.eps_active, d_box, cfg.autotune_step0);
    st.kappa_warm = tuned.bound.kappa;
    if (kappa_traj != nullptr) *kappa_traj = tuned.kappa_trajectory;
    auto refit = autotune_piecewise_svm(st.all_pos, st.negatives, sys.features,
                                        sys.g_id, sys.g, cfg.gamma, tuned.bound.kappa,
                                        1, cfg.n_hyperplanes, cfg.eps_active, d_box,
                                        /*step0=*/0.0);
    bound = refit.bound;
    bound.kappa_tuned_on = snapshot_batch_hash(st.tune_batch);
  }
  bound.hyperplanes_fit_on = snapshot_batch_hash(st.cert_batch);
  return bound;
}

// Audit checks for a freshly learned bound: positive preservation, audit-grid
// acceptance, and the monotone-restriction count over separated negatives.
void audit_bound(const PiecewiseReactiveBound& bound, const LoopConfig& cfg,
                 LoopState& st, IterationRecord& rec) {
  double min_h = std::numeric_limits<double>::infinity();
  for (const auto& s : st.all_pos) min_h = std::min(min_h, evaluate_h(bound, s.x, s.d));
  rec.min_positive_h = st.all_pos.empty() ? 0.0 : min_h;
  int accepted = 0;
  for (const auto& [x, d] : st.grid)
    if (evaluate_h(bound, x, d) >= 0.0) ++accepted;
  rec.grid_accepted = accepted;
  int violations = 0;
  for (std::size_t j = 0; j < st.negatives.size(); ++j) {
    const double h = evaluate_h(bound, st.negatives[j].x, st.negatives[j].d);
    if (st.separated[j] != 0 && h > cfg.eps_active) ++violations;
    if (h <= -cfg.eps_active) st.separated[j] = 1;
  }
  rec.monotone_violations = violations;
}

}  // namespace

const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::kVerified: return "verified";
    case Verdict::kFalsifiedAtCap: return "falsified-at-cap";
    case Verdict::kInherentlyUnsafe: return "inherently-unsafe";
  }
  return "unknown";
}

VerificationResult verify_loop(const LoopSystem& sys, const LoopConfig& cfg) {
  preflight(sys, cfg);
  const auto t_start = Clock::now();

  std::vector<Trace> positives = cfg.positives;
  if (!cfg.positive_paths.empty()) {
    positives.clear();
    const TraceSchema schema{sys.model->dt, sys.model->n, sys.model->m, sys.model->k};
    for (const auto& path : cfg.positive_paths) {
      auto batch = load_traces(path, schema);
      positives.insert(positives.end(), batch.begin(), batch.end());
    }
  }
  if (positives.empty()) throw ConfigError("verify_loop: no positive traces");

  SnapshotSelector selector = cfg.selector;
  if (!selector.importance) {
    selector.importance = [](const Vec&, const Vec&) { return 1.0; };
    if (selector.importance_id.empty()) selector.importance_id = "uniform";
  }

  LoopState st;
  st.kappa_warm = cfg.kappa0;
  {
    // One i.i.d. snapshot per trace, shuffled, then halved: first part tunes
    // kappa, second part is the certification batch.
    auto rng = make_rng(cfg.seed, 7);
    st.all_pos = iid_snapshots(positives, +1, rng);
    std::shuffle(st.all_pos.begin(), st.all_pos.end(), rng);
    const std::size_t half = st.all_pos.size() / 2;
    st.tune_batch.assign(st.all_pos.begin(), st.all_pos.begin() + half);
    st.cert_batch.assign(st.all_pos.begin() + half, st.all_pos.end());
    for (const auto& trace : positives)
      for (const auto& sample : trace.samples)
        st.dense_pos.push_back({sample.x, sample.d, +1, 1.0});
    auto grng = make_rng(cfg.seed, 11);
    for (int i = 0; i < cfg.audit_grid; ++i)
      st.grid.emplace_back(sys.model->state_limits.sample(grng),
                           sys.model->disturbance_limits.sample(grng));
  }

  if (!cfg.out_dir.empty()) fs::create_directories(cfg.out_dir);
  const TraceSchema schema{sys.model->dt, sys.model->n, sys.model->m, sys.model->k};

  VerificationResult res;
  res.positive_snapshots = st.all_pos;
  bool have_bound = false;
  PiecewiseReactiveBound bound;

  try {
    for (int iter = 1; iter <= cfg.max_iterations; ++iter) {
      IterationRecord rec;
      rec.iteration = iter;
      res.iterations = iter;

      auto t0 = Clock::now();
      FalsificationResult fr =
          falsify(*sys.model, *sys.controller, sys.x0, have_bound ? &bound : nullptr,
                  sys.phi, sys.predicates, sys.param, cfg.budget,
                  derive_seed(cfg.seed, 100 + static_cast<std::uint64_t>(iter)),
                  cfg.falsifier);
      rec.falsify_seconds = seconds_since(t0);
      res.falsify_seconds += rec.falsify_seconds;
      rec.robustness_min = fr.best_robustness;
      rec.falsified = fr.falsified;

      if (!fr.falsified) {
        res.verdict = Verdict::kVerified;
        if (!have_bound) {
          bound = box_bound(sys);
          bound.hyperplanes_fit_on = snapshot_batch_hash(st.cert_batch);
          have_bound = true;
        }
        rec.bound_hash = bound_content_hash(bound);
        audit_bound(bound, cfg, st, rec);
        t0 = Clock::now();
        res.certificate = certify(bound, st.cert_batch, cfg.cert_epsilon);
        rec.certify_seconds = seconds_since(t0);
        res.certify_seconds += rec.certify_seconds;
        res.has_certificate = true;
        rec.has_certificate = true;
        rec.certificate = res.certificate;
        // A verified claim is budget-relative; re-run with a fresh seed and
        // the same budget so the report carries a second, independent look.
        res.confirmatory =
            falsify(*sys.model, *sys.controller, sys.x0, &bound, sys.phi,
                    sys.predicates, sys.param, cfg.budget, derive_seed(cfg.seed, 999),
                    cfg.falsifier);
        res.has_confirmatory = true;
        res.confirmed = !res.confirmatory.falsified;
        res.audit.push_back(std::move(rec));
        break;
      }

      res.counterexamples.push_back(fr.best_trace);
      if (!cfg.out_dir.empty()) {
        rec.trace_path =
            (fs::path(cfg.out_dir) / ("cex_iter_" + std::to_string(iter) + ".csv"))
                .string();
        save_traces({fr.best_trace}, rec.trace_path, schema);
      }
      auto negs = extract_snapshots(fr.best_trace, -1, selector);
      rec.negatives_added = static_cast<int>(negs.size());
      for (auto& s : negs) {
        st.negatives.push_back(std::move(s));
        st.separated.push_back(0);
      }

      if (iter == cfg.max_iterations) {
        // Cap reached: keep the bound the counter-example complied with so
        // the trace remains admissible evidence against the controller.
        if (have_bound) {
          rec.bound_hash = bound_content_hash(bound);
          audit_bound(bound, cfg, st, rec);
        } else {
          rec.min_positive_h = 0.0;
          rec.grid_accepted = static_cast<int>(st.grid.size());
        }
        res.audit.push_back(std::move(rec));
        break;
      }

      t0 = Clock::now();
      bound = learn_bound(sys, cfg, st, &rec.kappa_trajectory);
      have_bound = true;
      rec.learn_seconds = seconds_since(t0);
      res.learn_seconds += rec.learn_seconds;
      rec.bound_hash = bound_content_hash(bound);
      audit_bound(bound, cfg, st, rec);
      if (!cfg.out_dir.empty()) {
        rec.bound_path =
            (fs::path(cfg.out_dir) / ("bound_iter_" + std::to_string(iter) + ".json"))
                .string();
        save_bound(bound, rec.bound_path);
      }
      t0 = Clock::now();
      try {
        rec.certificate = certify(bound, st.cert_batch, cfg.cert_epsilon);
        rec.has_certificate = true;
      } catch (const HypothesisError&) {
        rec.has_certificate = false;  // batch too small for this dimension
      }
      rec.certify_seconds = seconds_since(t0);
      res.certify_seconds += rec.certify_seconds;
      res.audit.push_back(std::move(rec));
    }

    res.has_bound = have_bound;
    res.bound = bound;
    if (res.verdict == Verdict::kFalsifiedAtCap &&
        diagnose_inherent_unsafety(res, st.dense_pos, cfg.delta_diag))
      res.verdict = Verdict::kInherentlyUnsafe;
    if (have_bound && !cfg.out_dir.empty())
      save_bound(bound, (fs::path(cfg.out_dir) / "bound_final.json").string());
  } catch (const std::exception& e) {
    res.has_bound = have_bound;
    res.bound = bound;
    res.total_seconds = seconds_since(t_start);
    write_report(sys, cfg, res, e.what());
    throw;
  }

  res.total_seconds = seconds_since(t_start);
  write_report(sys, cfg, res, "");
  return res;
}

bool diagnose_inherent_unsafety(const VerificationResult& result,
                                const std::vector<Snapshot>& positives,
                                double delta_diag, int k_nearest) {
  if (result.verdict == Verdict::kVerified)
    throw ConfigError("diagnose_inherent_unsafety: result is not falsified-at-cap");
  if (result.counterexamples.empty())
    throw ConfigError("diagnose_inherent_unsafety: no counter-example recorded");
  if (positives.empty()) return false;
  if (k_nearest < 1) throw ConfigError("diagnose_inherent_unsafety: k_nearest must be >= 1");

  const Trace& trace = result.counterexamples.back();
  const int k = std::min<int>(k_nearest, static_cast<int>(positives.size()));
  std::vector<std::pair<double, int>> by_dist(positives.size());
  for (const auto& sample : trace.samples) {
    for (std::size_t j = 0; j < positives.size(); ++j)
      by_dist[j] = {(positives[j].x - sample.x).squaredNorm(), static_cast<int>(j)};
    std::nth_element(by_dist.begin(), by_dist.begin() + (k - 1), by_dist.end());
    // Ties with the k-th distance all count as "nearby" (common at shared
    // initial states, where many traces sit at exactly the same x).
    const double cutoff = by_dist[static_cast<std::size_t>(k - 1)].first + 1e-18;
    std::vector<int> nearby;
    for (const auto& [d2, j] : by_dist)
      if (d2 <= cutoff) nearby.push_back(j);
    Mat hull(static_cast<int>(nearby.size()), sample.d.size());
    for (std::size_t r = 0; r < nearby.size(); ++r)
      hull.row(static_cast<int>(r)) =
          (positives[static_cast<std::size_t>(nearby[r])].d - sample.d).transpose();
    const auto mnp = qp::min_norm_point(hull);
    if (mnp.point.norm() > delta_diag + 1e-7) return false;
  }
  return true;
}

}  // namespace rv
