// JSON run configuration: one structured file per run describing the
// benchmark, its constants and the loop/falsifier settings.  The CLI and the
// test harnesses share this loader so the shipped config files are the single
// source of the default profiles.

#ifndef RV_CONFIG_HPP
#define RV_CONFIG_HPP

#include <string>
#include <vector>

#include "json.hpp"
#include "rv/benchmarks.hpp"
#include "rv/loop.hpp"

namespace rv {

struct RunConfig {
  Benchmark benchmark;
  LoopConfig loop;       // seed/out_dir/positives left for the caller
  int data_seed = 0;     // positive-data generation
  int data_episodes = 100;
  long long falsify_budget = 2000;  // cmd_falsify standalone budget
  nlohmann::json raw;    // full echo for manifests
};

/// Parse a configuration document.  Unknown benchmark names raise ConfigError;
/// malformed documents raise nlohmann::json exceptions.
RunConfig parse_run_config(const nlohmann::json& doc);

/// Load and parse a configuration file.  Missing files raise MissingInputError.
RunConfig load_run_config(const std::string& path);

/// Named snapshot-importance functions usable in config files: "uniform",
/// "dmag" (|d|), "outward" (robot radial escape speed), "a2mag" (|a2|).
SnapshotSelector selector_from_json(const nlohmann::json& j);

}  // namespace rv

#endif  // RV_CONFIG_HPP
