// rv — reactive-bound verification workbench.
//
//   rv <generate|learn|falsify|verify|cert|report> --config <file> --out <dir>
//      [--seed <list>]
//
// Exit codes: 0 success/verified, 1 falsified, 2 falsified at the iteration
// cap, 3 inherently unsafe, 64 usage, 65 data format, 66 missing input.
// Every run appends exactly one line to <out>/manifest.jsonl; nothing is
// written to standard error on success.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rv/benchmarks.hpp"
#include "rv/config.hpp"
#include "rv/loop.hpp"
#include "rv/rcp.hpp"
#include "rv/svm.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string iso_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

struct CommandContext {
  std::string command;
  std::string config_path;
  std::string out_dir;
  std::vector<int> seeds;
  json config_echo;
  std::string started = iso_now();
  json results = json::object();
  json timings = json::object();
};

void append_manifest(const CommandContext& ctx) {
  json line = {{"command", ctx.command},
               {"config", ctx.config_path},
               {"seeds", ctx.seeds},
               {"out", ctx.out_dir},
               {"tool_version", rv::kToolVersion},
               {"started", ctx.started},
               {"finished", iso_now()},
               {"config_echo", ctx.config_echo},
               {"timings", ctx.timings},
               {"results", ctx.results}};
  std::ofstream out(fs::path(ctx.out_dir) / "manifest.jsonl", std::ios::app);
  out << line.dump() << '\n';
}

json load_json_file(const std::string& path) {
  if (!fs::exists(path)) throw rv::MissingInputError("config file not found: " + path);
  std::ifstream in(path);
  return json::parse(in);
}

std::string seed_tag(int s) { return "s" + std::to_string(s); }

json cert_to_json(const rv::RcpCertificate& c) {
  return {{"N", c.N},     {"p", c.p},         {"n_h", c.n_h},       {"epsilon", c.epsilon},
          {"bound", c.bound}, {"kind", c.kind}, {"clamped", c.clamped}};
}

// ── generate ────────────────────────────────────────────────────────────────

int cmd_generate(const rv::RunConfig& rc, CommandContext& ctx) {
  const rv::TraceSchema schema = rc.benchmark.schema();
  for (int s : ctx.seeds) {
    Stopwatch sw;
    const auto traces =
        rc.benchmark.positive_data(static_cast<std::uint64_t>(rc.data_seed + s),
                                   rc.data_episodes);
    const std::string file =
        (fs::path(ctx.out_dir) / ("data_" + seed_tag(s) + ".csv")).string();
    rv::save_traces(traces, file, schema);
    ctx.results["files"].push_back(file);
    ctx.results["episodes"].push_back(traces.size());
    ctx.timings["generate_" + seed_tag(s)] = sw.seconds();
    std::cout << "generated " << traces.size() << " episodes -> " << file << '\n';
  }
  return 0;
}

// ── learn ───────────────────────────────────────────────────────────────────

int cmd_learn(const rv::RunConfig& rc, CommandContext& ctx) {
  const json learn = ctx.config_echo.value("learn", json::object());
  const rv::TraceSchema schema = rc.benchmark.schema();
  std::vector<std::string> snap_paths, trace_paths;
  for (const auto& p : learn.value("data", json::array()))
    snap_paths.push_back(p.get<std::string>());
  for (const auto& p : learn.value("traces", json::array()))
    trace_paths.push_back(p.get<std::string>());
  if (snap_paths.empty() && trace_paths.empty())
    throw rv::ConfigError("learn requires a 'learn' section listing 'data' or 'traces'");
  for (const auto& p : snap_paths)
    if (!fs::exists(p)) throw rv::MissingInputError("data file not found: " + p);
  for (const auto& p : trace_paths)
    if (!fs::exists(p)) throw rv::MissingInputError("trace file not found: " + p);

  std::vector<rv::Snapshot> pos, neg;
  for (const auto& p : snap_paths)
    for (auto& sn : rv::load_snapshots(p, schema.n, schema.k))
      (sn.label > 0 ? pos : neg).push_back(sn);
  std::vector<std::vector<rv::Trace>> trace_sets;
  for (const auto& p : trace_paths) trace_sets.push_back(rv::load_traces(p, schema));

  const rv::LoopConfig& cfg = rc.loop;
  const rv::Benchmark& b = rc.benchmark;
  for (int s : ctx.seeds) {
    Stopwatch sw;
    auto rng = rv::make_rng(static_cast<std::uint64_t>(s), 7);
    std::vector<rv::Snapshot> positives = pos;
    for (const auto& ts : trace_sets)
      for (auto& sn : rv::iid_snapshots(ts, +1, rng)) positives.push_back(sn);
    if (positives.empty()) throw rv::ConfigError("no positive snapshots to learn from");

    rv::PiecewiseReactiveBound bound;
    json log;
    if (b.g_id.empty()) {
      const auto planes = rv::multi_hyperplane_svm(positives, neg, b.features,
                                                   cfg.n_hyperplanes, cfg.eps_active);
      bound = rv::single_region_bound(b.features, planes, b.model.disturbance_limits);
      // Per-plane positive-side objective: the equality objective at unit
      // weights, a quick fit-quality signal.
      const rv::Mat phi = rv::feature_matrix(b.features, positives);
      json objs = json::array();
      for (const auto& pl : planes) {
        double o = 0;
        for (Eigen::Index i = 0; i < phi.rows(); ++i)
          o += phi.row(i).dot(pl.v) + pl.c;
        objs.push_back(o);
      }
      log = {{"kind", "single"}, {"hyperplanes", planes.size()}, {"objectives", objs}};
    } else {
      const auto ar = rv::autotune_piecewise_svm(
          positives, neg, b.features, b.g_id, b.g, cfg.gamma, cfg.kappa0,
          cfg.autotune_iterations, cfg.n_hyperplanes, cfg.eps_active,
          b.model.disturbance_limits);
      bound = ar.bound;
      log = {{"kind", "piecewise"},
             {"kappa", bound.kappa},
             {"kappa_trajectory", ar.kappa_trajectory},
             {"objective_trajectory", ar.objective_trajectory},
             {"gradient_trajectory", ar.gradient_trajectory},
             {"best_objective", ar.best_objective},
             {"converged", ar.converged}};
    }
    log["positives"] = positives.size();
    log["negatives"] = neg.size();

    const std::string bound_file =
        (fs::path(ctx.out_dir) / ("bound_" + seed_tag(s) + ".json")).string();
    rv::save_bound(bound, bound_file);
    const std::string log_file =
        (fs::path(ctx.out_dir) / ("learn_log_" + seed_tag(s) + ".json")).string();
    std::ofstream lf(log_file);
    lf << log.dump(2) << '\n';

    ctx.results["bounds"].push_back(bound_file);
    ctx.results["logs"].push_back(log_file);
    ctx.timings["learn_" + seed_tag(s)] = sw.seconds();
    std::cout << "learned bound (" << (b.g_id.empty() ? "single" : "piecewise")
              << ", " << bound.n_hyperplanes() << " hyperplanes) -> " << bound_file
              << '\n';
  }
  return 0;
}

// ── falsify ─────────────────────────────────────────────────────────────────

int cmd_falsify(const rv::RunConfig& rc, CommandContext& ctx) {
  const json fsec = ctx.config_echo.value("falsify", json::object());
  const rv::Benchmark& b = rc.benchmark;
  const rv::LoopSystem sys = b.loop_system();

  rv::PiecewiseReactiveBound bound;
  const rv::PiecewiseReactiveBound* bound_ptr = nullptr;
  const std::string bound_path = fsec.value("bound", std::string());
  if (!bound_path.empty()) {
    if (!fs::exists(bound_path))
      throw rv::MissingInputError("bound file not found: " + bound_path);
    bound = rv::load_bound(bound_path, b.bound_context());
    bound_ptr = &bound;
  }

  const int landscape_samples = fsec.value("landscape_samples", 20);
  bool any_falsified = false;
  double worst = std::numeric_limits<double>::infinity();
  const rv::TraceSchema schema = b.schema();
  for (int s : ctx.seeds) {
    Stopwatch sw;
    const auto fr = rv::falsify(b.model, *b.controller, b.x0, bound_ptr, b.phi,
                                b.predicates, sys.param, rc.falsify_budget,
                                static_cast<std::uint64_t>(s), rc.loop.falsifier);
    any_falsified = any_falsified || fr.falsified;

    const std::string trace_file =
        (fs::path(ctx.out_dir) / ("trace_" + seed_tag(s) + ".csv")).string();
    rv::save_traces({fr.best_trace}, trace_file, schema);
    if (fr.best_robustness < worst) {
      worst = fr.best_robustness;
      rv::save_traces({fr.best_trace}, (fs::path(ctx.out_dir) / "worst_trace.csv").string(),
                      schema);
    }

    json rep = {{"seed", s},
                {"falsified", fr.falsified},
                {"robustness", fr.best_robustness},
                {"evaluations", fr.evaluations},
                {"empty_projections", fr.empty_projections},
                {"bound", bound_path.empty() ? json(nullptr) : json(bound_path)},
                {"trace_file", trace_file}};
    if (bound_ptr != nullptr) {
      double min_h = std::numeric_limits<double>::infinity();
      for (const auto& sample : fr.best_trace.samples)
        min_h = std::min(min_h, rv::evaluate_h(bound, sample.x, sample.d));
      rep["min_h_on_trace"] = min_h;
    }
    std::ofstream rf(fs::path(ctx.out_dir) / ("falsify_" + seed_tag(s) + ".json"));
    rf << rep.dump(2) << '\n';

    if (landscape_samples > 0) {
      const auto land =
          rv::robustness_landscape(b.model, *b.controller, b.x0, bound_ptr, b.phi,
                                   b.predicates, sys.param, landscape_samples,
                                   static_cast<std::uint64_t>(s));
      std::ofstream lf(fs::path(ctx.out_dir) / ("landscape_" + seed_tag(s) + ".csv"));
      lf << "sample,robustness\n";
      for (std::size_t i = 0; i < land.size(); ++i)
        lf << i << ',' << rv::format_double(land[i].second) << '\n';
    }

    ctx.results["falsified"].push_back(fr.falsified);
    ctx.results["robustness"].push_back(fr.best_robustness);
    ctx.timings["falsify_" + seed_tag(s)] = sw.seconds();
    std::cout << "seed " << s << ": "
              << (fr.falsified ? "falsified" : "not falsified")
              << ", best robustness " << fr.best_robustness << '\n';
  }
  return any_falsified ? 1 : 0;
}

// ── verify ──────────────────────────────────────────────────────────────────

int cmd_verify(const rv::RunConfig& rc, CommandContext& ctx) {
  if (rc.loop.max_iterations < 1)
    throw rv::ConfigError("verify needs max_iterations >= 1");
  const rv::LoopSystem sys = rc.benchmark.loop_system();
  int exit_code = 0;
  for (int s : ctx.seeds) {
    rv::LoopConfig cfg = rc.loop;
    cfg.seed = static_cast<std::uint64_t>(s);
    cfg.out_dir = (fs::path(ctx.out_dir) / ("seed_" + std::to_string(s))).string();
    cfg.positives = rc.benchmark.positive_data(
        static_cast<std::uint64_t>(rc.data_seed + s), rc.data_episodes);
    const auto res = rv::verify_loop(sys, cfg);

    json r = {{"seed", s},
              {"verdict", rv::verdict_name(res.verdict)},
              {"iterations", res.iterations},
              {"report", (fs::path(cfg.out_dir) / "report.json").string()}};
    if (res.has_certificate) r["certificate"] = cert_to_json(res.certificate);
    ctx.results["runs"].push_back(r);
    ctx.timings["verify_" + seed_tag(s)] = {{"falsify_s", res.falsify_seconds},
                                            {"learn_s", res.learn_seconds},
                                            {"certify_s", res.certify_seconds},
                                            {"total_s", res.total_seconds}};
    if (res.verdict == rv::Verdict::kInherentlyUnsafe)
      exit_code = 3;
    else if (res.verdict == rv::Verdict::kFalsifiedAtCap && exit_code != 3)
      exit_code = 2;
    std::cout << "seed " << s << ": " << rv::verdict_name(res.verdict) << " in "
              << res.iterations << " iteration" << (res.iterations == 1 ? "" : "s")
              << " (" << rv::format_double(res.total_seconds) << " s)\n";
  }
  return exit_code;
}

// ── cert ────────────────────────────────────────────────────────────────────

int cmd_cert(CommandContext& ctx) {
  const json c = ctx.config_echo.value("cert", json::object());
  if (!c.contains("N") || !c.contains("p") || !c.contains("epsilon"))
    throw rv::ConfigError("cert needs a 'cert' section with N, p and epsilon");
  const long long N = c["N"].get<long long>();
  const int p = c["p"].get<int>();
  const int n_h = c.value("n_h", 1);
  const double epsilon = c["epsilon"].get<double>();

  Stopwatch sw;
  json out = {{"N", N}, {"p", p}, {"n_h", n_h}, {"epsilon", epsilon}};
  if (n_h <= 1) {
    out["kind"] = "single";
    out["bound"] = rv::misclassification_bound(N, p, epsilon);
    out["clamped"] = false;
  } else {
    bool clamped = false;
    out["kind"] = "multi";
    out["bound"] = rv::multi_hyperplane_bound(N, p, n_h, epsilon, &clamped);
    out["clamped"] = clamped;
    const auto eb = rv::epsilon_bar(N, p + 2);
    out["epsilon_bar"] = eb.value;
    out["epsilon_bar_minimizer"] = eb.minimizer;
  }
  std::cout << out.dump(2) << '\n';
  std::ofstream cf(fs::path(ctx.out_dir) / "certificate.json");
  cf << out.dump(2) << '\n';
  ctx.results = out;
  ctx.timings["cert_s"] = sw.seconds();
  return 0;
}

// ── report ──────────────────────────────────────────────────────────────────

int cmd_report(const rv::RunConfig& rc, CommandContext& ctx) {
  const fs::path dir(ctx.out_dir);
  if (!fs::exists(dir / "manifest.jsonl"))
    throw rv::MissingInputError("no manifest.jsonl in " + ctx.out_dir +
                                " (not a run directory?)");

  std::map<int, json> reports;  // seed -> report.json
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    if (name.rfind("seed_", 0) != 0) continue;
    const fs::path rp = entry.path() / "report.json";
    if (!fs::exists(rp)) continue;
    std::ifstream in(rp);
    reports[std::stoi(name.substr(5))] = json::parse(in);
  }
  if (reports.empty())
    throw rv::MissingInputError("no seed_*/report.json under " + ctx.out_dir);

  Stopwatch sw;
  // Human-readable summary.
  std::ofstream txt(dir / "summary.txt");
  json summary = {{"seeds", json::array()}};
  int verified = 0;
  txt << "run summary: " << reports.size() << " seed(s)\n";
  for (const auto& [seed, rep] : reports) {
    const std::string verdict = rep.value("verdict", "?");
    const int iters = rep.value("iterations", 0);
    if (verdict == "verified") ++verified;
    txt << "  seed " << seed << ": " << verdict << " in " << iters << " iteration"
        << (iters == 1 ? "" : "s");
    if (rep.contains("certificate") && !rep["certificate"].is_null()) {
      const json& ce = rep["certificate"];
      txt << "; certificate N=" << ce.value("N", 0LL) << " p=" << ce.value("p", 0)
          << " n_h=" << ce.value("n_h", 0) << " eps=" << ce.value("epsilon", 0.0)
          << " bound=" << ce.value("bound", 1.0);
    }
    if (rep.contains("timing"))
      txt << "; " << rep["timing"].value("total_s", 0.0) << " s";
    txt << '\n';
    summary["seeds"].push_back({{"seed", seed},
                                {"verdict", verdict},
                                {"iterations", iters},
                                {"certificate", rep.value("certificate", json(nullptr))},
                                {"timing", rep.value("timing", json(nullptr))}});
  }
  txt << "verified " << verified << "/" << reports.size() << '\n';
  summary["verified"] = verified;
  summary["total"] = reports.size();
  std::ofstream sj(dir / "summary.json");
  sj << summary.dump(2) << '\n';

  // Plot data: per-iteration robustness and the kappa trajectories.
  std::ofstream rob(dir / "robustness_iteration.csv");
  rob << "seed,iteration,robustness_min,falsified,negatives_added\n";
  std::ofstream kap(dir / "kappa_trajectory.csv");
  kap << "seed,iteration,step,kappa\n";
  for (const auto& [seed, rep] : reports) {
    for (const auto& it : rep.value("iteration_records", json::array())) {
      rob << seed << ',' << it.value("iteration", 0) << ','
          << rv::format_double(it.value("robustness_min", 0.0)) << ','
          << (it.value("falsified", false) ? 1 : 0) << ','
          << it.value("negatives_added", 0) << '\n';
      if (it.contains("kappa_trajectory")) {
        int step = 0;
        for (const auto& kv : it["kappa_trajectory"])
          kap << seed << ',' << it.value("iteration", 0) << ',' << step++ << ','
              << rv::format_double(kv.get<double>()) << '\n';
      }
    }
  }

  // Bound slice at the benchmark start state: grid the first two disturbance
  // components (others zero).  For a scalar disturbance the second axis is
  // the leading state coordinate instead, so the slice is still a surface.
  const int grid = ctx.config_echo.value("report", json::object()).value("grid", 40);
  std::string slice_source;
  for (const auto& [seed, rep] : reports) {
    const fs::path bf = dir / ("seed_" + std::to_string(seed)) / "bound_final.json";
    if (fs::exists(bf)) {
      slice_source = bf.string();
      break;
    }
  }
  if (!slice_source.empty() && grid > 0) {
    const auto bound = rv::load_bound(slice_source, rc.benchmark.bound_context());
    const rv::Box& db = rc.benchmark.model.disturbance_limits;
    const rv::Box& xb = rc.benchmark.model.state_limits;
    const int k = rc.benchmark.model.k;
    std::ofstream sl(dir / "bound_slice.csv");
    const auto axis = [grid](double lo, double hi, int i) {
      return lo + (hi - lo) * (grid == 1 ? 0.5 : double(i) / (grid - 1));
    };
    if (k >= 2) {
      sl << "d0,d1,h\n";
      for (int i = 0; i < grid; ++i)
        for (int j = 0; j < grid; ++j) {
          rv::Vec d = rv::Vec::Zero(k);
          d(0) = axis(db.lo(0), db.hi(0), i);
          d(1) = axis(db.lo(1), db.hi(1), j);
          sl << rv::format_double(d(0)) << ',' << rv::format_double(d(1)) << ','
             << rv::format_double(rv::evaluate_h(bound, rc.benchmark.x0, d)) << '\n';
        }
    } else {
      sl << "x0,d0,h\n";
      for (int i = 0; i < grid; ++i)
        for (int j = 0; j < grid; ++j) {
          rv::Vec x = rc.benchmark.x0;
          x(0) = axis(xb.lo(0), xb.hi(0), i);
          rv::Vec d(1);
          d(0) = axis(db.lo(0), db.hi(0), j);
          sl << rv::format_double(x(0)) << ',' << rv::format_double(d(0)) << ','
             << rv::format_double(rv::evaluate_h(bound, x, d)) << '\n';
        }
    }
    ctx.results["bound_slice"] = slice_source;
  }

  ctx.results["seeds_reported"] = reports.size();
  ctx.results["verified"] = verified;
  ctx.timings["report_s"] = sw.seconds();
  std::cout << "report: " << verified << "/" << reports.size() << " verified -> "
            << (dir / "summary.txt").string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reactive-bound verification workbench"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::vector<int> seeds;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "run configuration file")->required();
    sub->add_option("--out", out_dir, "output directory")->required();
    sub->add_option("--seed", seeds, "seed list")->delimiter(',');
  };
  add_common(app.add_subcommand("generate", "sample positive data from a benchmark"));
  add_common(app.add_subcommand("learn", "fit a reactive bound from snapshots"));
  add_common(app.add_subcommand("falsify", "search for specification violations"));
  add_common(app.add_subcommand("verify", "run the falsify/relearn loop to a verdict"));
  add_common(app.add_subcommand("cert", "evaluate certificate formulas"));
  add_common(app.add_subcommand("report", "summarize a run directory"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << '\n';
    return 64;
  }

  CommandContext ctx;
  ctx.command = app.get_subcommands().front()->get_name();
  ctx.config_path = config_path;
  ctx.out_dir = out_dir;
  ctx.seeds = seeds.empty() ? std::vector<int>{0} : seeds;

  try {
    fs::create_directories(out_dir);
    ctx.config_echo = load_json_file(config_path);

    int code = 0;
    if (ctx.command == "cert") {
      code = cmd_cert(ctx);
    } else {
      const rv::RunConfig rc = rv::parse_run_config(ctx.config_echo);
      if (ctx.command == "generate")
        code = cmd_generate(rc, ctx);
      else if (ctx.command == "learn")
        code = cmd_learn(rc, ctx);
      else if (ctx.command == "falsify")
        code = cmd_falsify(rc, ctx);
      else if (ctx.command == "verify")
        code = cmd_verify(rc, ctx);
      else
        code = cmd_report(rc, ctx);
    }
    ctx.results["exit_code"] = code;
    append_manifest(ctx);
    return code;
  } catch (const rv::MissingInputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 66;
  } catch (const rv::FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 65;
  } catch (const rv::HypothesisError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 65;
  } catch (const rv::DimensionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 65;
  } catch (const rv::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 64;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 65;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 70;
  }
}
