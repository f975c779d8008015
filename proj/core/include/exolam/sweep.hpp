#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "exolam/config.hpp"

namespace exolam {

struct ResultRow {
  std::string config_hash;
  std::string swept_json;  // canonical {"path": value} object
  std::uint64_t seed = 0;
  std::map<std::string, double> metrics;
  double wall_seconds = 0.0;
  bool failed = false;
  std::string error;
};

// Full single-run pipeline: derive streams from (master, seed), generate,
// train, evaluate; returns the registry metrics for the run.
std::map<std::string, double> run_experiment(const ExperimentConfig& cfg,
                                             std::uint64_t master,
                                             std::uint64_t seed);

struct SweepResult {
  std::vector<ResultRow> rows;   // sorted by (config_hash, seed)
  std::string runs_csv;          // per-run table (includes wall_seconds)
  std::string aggregate_csv;     // mean/stderr per config, no wall clock
  std::size_t failures = 0;
};

// Executes every (config, seed) job on a bounded pool. Results and the
// aggregate CSV depend only on (spec, master), never on scheduling.
SweepResult run_sweep(const SweepSpec& spec, std::uint64_t master,
                      std::size_t jobs);

// Store layout: <dir>/runs.csv, <dir>/aggregate.csv, <dir>/configs/<hash>.json
void write_sweep_store(const std::string& dir, const SweepSpec& spec,
                       const SweepResult& result);

std::string format_float(double v);  // %.17g

}  // namespace exolam
