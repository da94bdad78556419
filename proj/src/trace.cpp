#include "rv/trace.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

namespace rv {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  // Trim to the shortest representation that round-trips.
  for (int prec = 1; prec < 17; ++prec) {
    char s[40];
    std::snprintf(s, sizeof s, "%.*g", prec, v);
    if (std::strtod(s, nullptr) == v) return s;
  }
  return buf;
}

Trace simulate(const SystemModel& model, Controller& controller,
               const EnvPolicy& env, const Vec& x0, double horizon) {
  if (x0.size() != model.n) throw DimensionError("simulate: x0 dimension mismatch");
  if (model.dt <= 0.0) throw ConfigError("simulate: model dt must be positive");
  const int steps = static_cast<int>(std::ceil(horizon / model.dt - 1e-9));

  Trace trace;
  trace.dt = model.dt;
  trace.samples.reserve(static_cast<std::size_t>(steps) + 1);

  controller.reset();
  Vec x = model.state_limits.clamp(x0);
  Vec d_prev = Vec::Zero(model.k);
  for (int i = 0; i <= steps; ++i) {
    const double t = i * model.dt;
    Vec u = controller.act(x, t, d_prev);
    if (u.size() != model.m) throw DimensionError("simulate: controller output dimension mismatch");
    u = model.input_limits.clamp(u);
    Vec d = env(x, t);
    if (d.size() != model.k) throw DimensionError("simulate: environment output dimension mismatch");
    d = model.disturbance_limits.clamp(d);
    trace.samples.push_back({x, u, d});
    if (!x.allFinite() || !u.allFinite() || !d.allFinite())
      throw NumericError("simulate: non-finite value at t=" + std::to_string(t) +
                         " in model '" + model.name + "'");
    if (i < steps) x = model.step(x, u, d);
    d_prev = d;
  }
  return trace;
}

std::vector<Snapshot> extract_snapshots(const Trace& trace, int label,
                                        const SnapshotSelector& selector) {
  if (trace.samples.empty()) throw ConfigError("extract_snapshots: empty trace");
  std::vector<std::pair<double, int>> scored;  // (importance, index)
  for (int i = 0; i < trace.length(); ++i) {
    const double s = selector.importance(trace.samples[i].x, trace.samples[i].d);
    if (s >= selector.threshold) scored.emplace_back(s, i);
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  if (static_cast<int>(scored.size()) > selector.max_per_trace)
    scored.resize(static_cast<std::size_t>(selector.max_per_trace));
  std::vector<int> idx;
  idx.reserve(scored.size());
  for (const auto& [s, i] : scored) idx.push_back(i);
  std::sort(idx.begin(), idx.end());

  std::vector<Snapshot> out;
  out.reserve(idx.size());
  for (int i : idx)
    out.push_back({trace.samples[static_cast<std::size_t>(i)].x,
                   trace.samples[static_cast<std::size_t>(i)].d, label, 1.0});
  return out;
}

std::vector<Snapshot> iid_snapshots(const std::vector<Trace>& traces, int label,
                                    std::mt19937_64& rng) {
  std::vector<Snapshot> out;
  out.reserve(traces.size());
  for (const Trace& tr : traces) {
    if (tr.samples.empty()) continue;
    std::uniform_int_distribution<int> pick(0, tr.length() - 1);
    const TraceSample& s = tr.samples[static_cast<std::size_t>(pick(rng))];
    out.push_back({s.x, s.d, label, 1.0});
  }
  return out;
}

namespace {

std::vector<double> parse_row(const std::string& line, const std::string& path, int lineno) {
  std::vector<double> vals;
  std::size_t pos = 0;
  while (pos <= line.size()) {
    std::size_t comma = line.find(',', pos);
    if (comma == std::string::npos) comma = line.size();
    const std::string field = line.substr(pos, comma - pos);
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    if (end == field.c_str() || *end != '\0')
      throw FormatError(path + ":" + std::to_string(lineno) + ": malformed value '" + field + "'");
    vals.push_back(v);
    pos = comma + 1;
    if (comma == line.size()) break;
  }
  return vals;
}

bool parse_header(const std::string& line, TraceSchema& out) {
  // dt=<seconds>,n=<int>,m=<int>,k=<int>
  TraceSchema s;
  int consumed = 0;
  const int got = std::sscanf(line.c_str(), "dt=%lf,n=%d,m=%d,k=%d%n",
                              &s.dt, &s.n, &s.m, &s.k, &consumed);
  if (got != 4 || consumed != static_cast<int>(line.size())) return false;
  out = s;
  return true;
}

}  // namespace

std::vector<Trace> load_traces(const std::string& path, const TraceSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trace file: " + path);

  std::vector<Trace> traces;
  Trace current;
  bool in_trace = false;
  auto flush = [&] {
    if (in_trace && !current.samples.empty()) traces.push_back(std::move(current));
    current = Trace{};
    in_trace = false;
  };

  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    TraceSchema header;
    if (parse_header(line, header)) {
      if (header.n != schema.n || header.m != schema.m || header.k != schema.k)
        throw FormatError(path + ":" + std::to_string(lineno) +
                          ": schema mismatch (file n=" + std::to_string(header.n) +
                          " m=" + std::to_string(header.m) + " k=" + std::to_string(header.k) + ")");
      flush();
      current.dt = header.dt;
      in_trace = true;
      continue;
    }
    if (!in_trace) throw FormatError(path + ":" + std::to_string(lineno) + ": missing header line");
    const std::vector<double> vals = parse_row(line, path, lineno);
    const std::size_t expect = 1 + static_cast<std::size_t>(schema.n + schema.m + schema.k);
    if (vals.size() != expect)
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(expect) + " columns, got " + std::to_string(vals.size()));
    TraceSample s;
    s.x = Eigen::Map<const Vec>(vals.data() + 1, schema.n);
    s.u = Eigen::Map<const Vec>(vals.data() + 1 + schema.n, schema.m);
    s.d = Eigen::Map<const Vec>(vals.data() + 1 + schema.n + schema.m, schema.k);
    current.samples.push_back(std::move(s));
  }
  flush();
  return traces;
}

void save_traces(const std::vector<Trace>& traces, const std::string& path,
                 const TraceSchema& schema) {
  std::ofstream out(path, std::ios::binary);  // LF line endings on all platforms
  if (!out) throw ConfigError("cannot write trace file: " + path);

  auto write_header = [&](double dt) {
    out << "dt=" << format_double(dt) << ",n=" << schema.n << ",m=" << schema.m
        << ",k=" << schema.k << "\n";
  };

  if (traces.empty()) {
    write_header(schema.dt);
    return;
  }
  for (const Trace& tr : traces) {
    write_header(tr.dt);
    for (int i = 0; i < tr.length(); ++i) {
      const TraceSample& s = tr.samples[static_cast<std::size_t>(i)];
      if (!s.x.allFinite() || !s.u.allFinite() || !s.d.allFinite())
        throw FormatError("save_traces: non-finite sample value");
      out << format_double(i * tr.dt);
      for (Eigen::Index j = 0; j < s.x.size(); ++j) out << ',' << format_double(s.x[j]);
      for (Eigen::Index j = 0; j < s.u.size(); ++j) out << ',' << format_double(s.u[j]);
      for (Eigen::Index j = 0; j < s.d.size(); ++j) out << ',' << format_double(s.d[j]);
      out << "\n";
    }
  }
  if (!out) throw ConfigError("write failure: " + path);
}

std::vector<Snapshot> load_snapshots(const std::string& path, int n, int k) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open snapshot file: " + path);
  std::vector<Snapshot> snaps;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<double> vals = parse_row(line, path, lineno);
    const std::size_t expect = static_cast<std::size_t>(2 + n + k);
    if (vals.size() != expect)
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(expect) + " columns, got " + std::to_string(vals.size()));
    Snapshot s;
    const double y = vals[0];
    if (y != 1.0 && y != -1.0)
      throw FormatError(path + ":" + std::to_string(lineno) + ": label must be +1 or -1");
    s.label = static_cast<int>(y);
    s.x = Eigen::Map<const Vec>(vals.data() + 1, n);
    s.d = Eigen::Map<const Vec>(vals.data() + 1 + n, k);
    s.weight = vals.back();
    if (!(s.weight > 0.0))
      throw FormatError(path + ":" + std::to_string(lineno) + ": weight must be positive");
    snaps.push_back(std::move(s));
  }
  return snaps;
}

void save_snapshots(const std::vector<Snapshot>& snaps, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write snapshot file: " + path);
  for (const Snapshot& s : snaps) {
    out << s.label;
    for (Eigen::Index j = 0; j < s.x.size(); ++j) out << ',' << format_double(s.x[j]);
    for (Eigen::Index j = 0; j < s.d.size(); ++j) out << ',' << format_double(s.d[j]);
    out << ',' << format_double(s.weight) << "\n";
  }
}

std::uint64_t snapshot_batch_hash(const std::vector<Snapshot>& snaps) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Snapshot& s : snaps) {
    h = fnv1a(&s.label, sizeof s.label, h);
    h = fnv1a(s.x.data(), sizeof(double) * static_cast<std::size_t>(s.x.size()), h);
    h = fnv1a(s.d.data(), sizeof(double) * static_cast<std::size_t>(s.d.size()), h);
    h = fnv1a(&s.weight, sizeof s.weight, h);
  }
  return h;
}

}  // namespace rv
