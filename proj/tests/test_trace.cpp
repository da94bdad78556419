#include "rv/trace.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>

#include "doctest.h"

using namespace rv;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

SystemModel integrator_model(double dt = 0.1) {
  SystemModel m;
  m.name = "integrator";
  m.n = 1;
  m.m = 1;
  m.k = 1;
  m.dt = dt;
  m.state_limits = Box::symmetric(1, 100.0);
  m.input_limits = Box::symmetric(1, 10.0);
  m.disturbance_limits = Box::symmetric(1, 2.0);
  m.deriv = [](const Vec&, const Vec&, const Vec& d) { return d; };
  return m;
}

bool traces_equal(const Trace& a, const Trace& b) {
  if (a.dt != b.dt || a.length() != b.length()) return false;
  for (int i = 0; i < a.length(); ++i) {
    if (a.at(i).x != b.at(i).x) return false;
    if (a.at(i).u != b.at(i).u) return false;
    if (a.at(i).d != b.at(i).d) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("constant-rate integration reaches x(1)=1") {
  SystemModel m = integrator_model();
  FnController zero([](const Vec&, double) { return Vec::Zero(1); });
  EnvPolicy env = [](const Vec&, double) { return Vec::Ones(1); };
  Trace tr = simulate(m, zero, env, Vec::Zero(1), 1.0);
  CHECK(tr.length() == 11);
  CHECK(tr.at(10).x[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(tr.duration() == doctest::Approx(1.0));
}

TEST_CASE("disturbances outside the box are clamped to its boundary") {
  SystemModel m = integrator_model();
  FnController zero([](const Vec&, double) { return Vec::Zero(1); });
  EnvPolicy env = [](const Vec&, double) { return Vec::Constant(1, 50.0); };
  Trace tr = simulate(m, zero, env, Vec::Zero(1), 1.0);
  for (int i = 0; i < tr.length(); ++i) CHECK(tr.at(i).d[0] == 2.0);
}

TEST_CASE("controls are clamped and states stay inside the limits") {
  SystemModel m = integrator_model();
  m.state_limits = Box(Vec::Constant(1, -0.2), Vec::Constant(1, 0.2));
  m.deriv = [](const Vec&, const Vec& u, const Vec& d) { return u + d; };
  FnController big([](const Vec&, double) { return Vec::Constant(1, 99.0); });
  EnvPolicy env = [](const Vec&, double) { return Vec::Ones(1); };
  Trace tr = simulate(m, big, env, Vec::Zero(1), 2.0);
  for (int i = 0; i < tr.length(); ++i) {
    CHECK(tr.at(i).u[0] == 10.0);
    CHECK(m.state_limits.contains(tr.at(i).x));
    CHECK(m.disturbance_limits.contains(tr.at(i).d));
  }
  CHECK(tr.at(tr.length() - 1).x[0] == 0.2);
}

TEST_CASE("simulate is deterministic under a fixed seed") {
  SystemModel m = integrator_model();
  auto run = [&](std::uint64_t seed) {
    auto rng = std::make_shared<std::mt19937_64>(make_rng(seed));
    FnController zero([](const Vec&, double) { return Vec::Zero(1); });
    EnvPolicy env = [rng](const Vec&, double) {
      std::normal_distribution<double> g(0.0, 0.5);
      return Vec::Constant(1, g(*rng));
    };
    return simulate(m, zero, env, Vec::Zero(1), 3.0);
  };
  CHECK(traces_equal(run(7), run(7)));
  CHECK(!traces_equal(run(7), run(8)));
}

TEST_CASE("dimension mismatches are rejected") {
  SystemModel m = integrator_model();
  FnController bad([](const Vec&, double) { return Vec::Zero(2); });
  EnvPolicy env = [](const Vec&, double) { return Vec::Ones(1); };
  CHECK_THROWS_AS(simulate(m, bad, env, Vec::Zero(1), 1.0), DimensionError);
  FnController zero([](const Vec&, double) { return Vec::Zero(1); });
  CHECK_THROWS_AS(simulate(m, zero, env, Vec::Zero(2), 1.0), DimensionError);
  EnvPolicy bad_env = [](const Vec&, double) { return Vec::Ones(3); };
  CHECK_THROWS_AS(simulate(m, zero, bad_env, Vec::Zero(1), 1.0), DimensionError);
}

TEST_CASE("snapshot extraction respects threshold and cap, keeps trace order") {
  Trace tr;
  tr.dt = 1.0;
  for (int i = 0; i < 6; ++i)
    tr.samples.push_back({Vec::Constant(1, double(i)), Vec::Zero(1), Vec::Constant(1, -double(i))});

  SnapshotSelector sel;
  sel.importance = [](const Vec& x, const Vec&) { return x[0]; };

  SUBCASE("high threshold filters everything out") {
    sel.threshold = 100.0;
    sel.max_per_trace = 10;
    CHECK(extract_snapshots(tr, +1, sel).empty());
  }
  SUBCASE("-inf threshold with a big cap keeps every sample") {
    sel.threshold = -std::numeric_limits<double>::infinity();
    sel.max_per_trace = tr.length();
    auto snaps = extract_snapshots(tr, +1, sel);
    REQUIRE(snaps.size() == 6);
    for (int i = 0; i < 6; ++i) {
      CHECK(snaps[i].x == tr.at(i).x);
      CHECK(snaps[i].d == tr.at(i).d);
      CHECK(snaps[i].label == +1);
      CHECK(snaps[i].weight == 1.0);
    }
  }
  SUBCASE("cap keeps the highest scores, emitted in trace order") {
    sel.threshold = 0.0;
    sel.max_per_trace = 2;
    auto snaps = extract_snapshots(tr, -1, sel);
    REQUIRE(snaps.size() == 2);
    CHECK(snaps[0].x[0] == 4.0);
    CHECK(snaps[1].x[0] == 5.0);
    CHECK(snaps[0].label == -1);
  }
}

TEST_CASE("iid subsampling picks exactly one sample per trace") {
  std::vector<Trace> traces;
  for (int t = 0; t < 5; ++t) {
    Trace tr;
    tr.dt = 0.5;
    for (int i = 0; i < 4; ++i)
      tr.samples.push_back({Vec::Constant(2, 10.0 * t + i), Vec::Zero(1), Vec::Constant(1, double(i))});
    traces.push_back(tr);
  }
  auto rng = make_rng(3);
  auto snaps = iid_snapshots(traces, +1, rng);
  REQUIRE(snaps.size() == 5);
  for (int t = 0; t < 5; ++t) {
    const double v = snaps[size_t(t)].x[0];
    CHECK(v >= 10.0 * t);
    CHECK(v <= 10.0 * t + 3);
  }
}

TEST_CASE("trace CSV round-trips bit for bit") {
  SystemModel m = integrator_model();
  auto rng = std::make_shared<std::mt19937_64>(make_rng(11));
  FnController ctl([rng](const Vec& x, double) {
    std::normal_distribution<double> g(0.0, 1.0);
    return Vec::Constant(1, g(*rng) - 0.3 * x[0]);
  });
  EnvPolicy env = [rng](const Vec&, double t) {
    std::normal_distribution<double> g(0.0, 1.0);
    return Vec::Constant(1, g(*rng) + std::sin(t));
  };
  std::vector<Trace> traces;
  traces.push_back(simulate(m, ctl, env, Vec::Zero(1), 1.0));
  traces.push_back(simulate(m, ctl, env, Vec::Constant(1, 0.37), 0.5));

  TraceSchema schema{m.dt, m.n, m.m, m.k};
  auto path = temp_file("rv_traces_roundtrip.csv");
  save_traces(traces, path.string(), schema);
  auto back = load_traces(path.string(), schema);
  REQUIRE(back.size() == 2);
  CHECK(traces_equal(back[0], traces[0]));
  CHECK(traces_equal(back[1], traces[1]));
}

TEST_CASE("trace CSV rejects malformed input") {
  TraceSchema schema{1.0, 1, 1, 1};
  auto path = temp_file("rv_traces_bad.csv");

  SUBCASE("wrong column count") {
    std::ofstream(path) << "dt=1,n=1,m=1,k=1\n0,1,2\n";
    CHECK_THROWS_AS(load_traces(path.string(), schema), FormatError);
  }
  SUBCASE("missing header") {
    std::ofstream(path) << "0,1,2,3\n";
    CHECK_THROWS_AS(load_traces(path.string(), schema), FormatError);
  }
  SUBCASE("schema mismatch in header") {
    std::ofstream(path) << "dt=1,n=2,m=1,k=1\n";
    CHECK_THROWS_AS(load_traces(path.string(), schema), FormatError);
  }
  SUBCASE("garbage value") {
    std::ofstream(path) << "dt=1,n=1,m=1,k=1\n0,1,oops,3\n";
    CHECK_THROWS_AS(load_traces(path.string(), schema), FormatError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_traces("/nonexistent/rv.csv", schema), ConfigError);
  }
}

TEST_CASE("empty trace list serializes to a header-only file") {
  TraceSchema schema{0.25, 2, 1, 1};
  auto path = temp_file("rv_traces_empty.csv");
  save_traces({}, path.string(), schema);
  std::ifstream in(path);
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "dt=0.25,n=2,m=1,k=1");
  CHECK(!std::getline(in, line));
  CHECK(load_traces(path.string(), schema).empty());
}

TEST_CASE("non-finite sample values refuse to serialize") {
  Trace tr;
  tr.dt = 1.0;
  tr.samples.push_back({Vec::Constant(1, std::numeric_limits<double>::quiet_NaN()),
                        Vec::Zero(1), Vec::Zero(1)});
  TraceSchema schema{1.0, 1, 1, 1};
  CHECK_THROWS_AS(save_traces({tr}, temp_file("rv_traces_nan.csv").string(), schema),
                  FormatError);
}

TEST_CASE("snapshot CSV round-trips and validates labels and weights") {
  std::vector<Snapshot> snaps;
  auto rng = make_rng(21);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int i = 0; i < 20; ++i) {
    Snapshot s;
    s.x = Vec::NullaryExpr(3, [&](Eigen::Index) { return u(rng); });
    s.d = Vec::NullaryExpr(2, [&](Eigen::Index) { return u(rng); });
    s.label = (i % 3 == 0) ? -1 : +1;
    s.weight = 0.1 + i;
    snaps.push_back(s);
  }
  auto path = temp_file("rv_snaps_roundtrip.csv");
  save_snapshots(snaps, path.string());
  auto back = load_snapshots(path.string(), 3, 2);
  REQUIRE(back.size() == snaps.size());
  for (std::size_t i = 0; i < snaps.size(); ++i) {
    CHECK(back[i].x == snaps[i].x);
    CHECK(back[i].d == snaps[i].d);
    CHECK(back[i].label == snaps[i].label);
    CHECK(back[i].weight == snaps[i].weight);
  }
  CHECK(snapshot_batch_hash(back) == snapshot_batch_hash(snaps));

  SUBCASE("bad label") {
    std::ofstream(path) << "2,0,0,0,0,0,1\n";
    CHECK_THROWS_AS(load_snapshots(path.string(), 3, 2), FormatError);
  }
  SUBCASE("nonpositive weight") {
    std::ofstream(path) << "1,0,0,0,0,0,0\n";
    CHECK_THROWS_AS(load_snapshots(path.string(), 3, 2), FormatError);
  }
}

TEST_CASE("batch hash is order- and content-sensitive") {
  Snapshot a{Vec::Constant(2, 1.0), Vec::Constant(1, 2.0), +1, 1.0};
  Snapshot b{Vec::Constant(2, 3.0), Vec::Constant(1, 4.0), -1, 1.0};
  CHECK(snapshot_batch_hash({a, b}) != snapshot_batch_hash({b, a}));
  Snapshot a2 = a;
  a2.weight = 2.0;
  CHECK(snapshot_batch_hash({a, b}) != snapshot_batch_hash({a2, b}));
  CHECK(snapshot_batch_hash({a, b}) == snapshot_batch_hash({a, b}));
}

TEST_CASE("format_double emits shortest round-trip decimals") {
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(0.25) == "0.25");
  CHECK(format_double(-3.5) == "-3.5");
  auto rng = make_rng(5);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 2000; ++i) {
    const double v = u(rng) * std::pow(10.0, int(i % 13) - 6);
    CHECK(std::strtod(format_double(v).c_str(), nullptr) == v);
  }
}

TEST_CASE("box utilities behave") {
  Box b(Vec::Constant(2, -1.0), Vec::Constant(2, 3.0));
  CHECK(b.center()[0] == 1.0);
  CHECK(b.contains(Vec::Constant(2, 3.0)));
  CHECK(!b.contains(Vec::Constant(2, 3.1)));
  CHECK(b.contains(Vec::Constant(2, 3.1), 0.2));
  CHECK(b.clamp(Vec::Constant(2, 9.0))[1] == 3.0);
  auto rng = make_rng(1);
  for (int i = 0; i < 100; ++i) CHECK(b.contains(b.sample(rng)));
  CHECK_THROWS_AS(Box(Vec::Ones(2), Vec::Zero(2)), ConfigError);
  CHECK_THROWS_AS(Box(Vec::Ones(2), Vec::Zero(3)), DimensionError);
}
