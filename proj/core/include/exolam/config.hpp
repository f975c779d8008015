#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "exolam/env.hpp"
#include "exolam/grid_env.hpp"
#include "exolam/grid_lam.hpp"
#include "exolam/linear_lam.hpp"

namespace exolam {

// Named objective bundles; `custom` leaves the lambda fields as given.
enum class Objective { custom, baseline, xexo, action_pred, q_pred };

std::string objective_name(Objective o);
Objective objective_from_name(const std::string& s);

struct EvalConfig {
  double lambda_ridge = 1e-6;
  std::size_t anchors = 512;
  std::size_t draws = 16;
  std::size_t eval_traj = 512;    // linear eval dataset trajectories
  std::size_t eval_steps = 2048;  // grid eval dataset transitions
};

// Parsed and validated experiment; per-run seeds are derived from
// (master seed, seed-list entry) at run time, never stored in the JSON.
struct ExperimentConfig {
  std::string kind;  // "linear" | "grid"
  Objective objective = Objective::baseline;
  LinearEnvConfig env;
  LinearTrainConfig model;
  GridEnvConfig grid_env;
  GridModelConfig grid_model;
  EvalConfig eval;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4};

  bool is_linear() const { return kind == "linear"; }
};

// Strict parse: unknown keys are rejected with a JSON-pointer path.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig parse_experiment_config_file(const std::string& path);

// Canonical form (sorted keys, round-trip floats) and the FNV-1a hash of
// the canonical form with the seeds list removed.
std::string canonical_config_json(const ExperimentConfig& cfg);
std::string config_hash(const ExperimentConfig& cfg);

// Stable FNV-1a 64-bit over bytes, rendered as 16 hex chars.
std::string fnv1a_hex(const std::string& bytes);

struct SweepAxis {
  std::string path;  // dot notation, e.g. "env.p_switch"
  std::vector<std::string> values;  // JSON literals
};

struct SweepSpec {
  std::string base_json;  // experiment config JSON
  std::vector<SweepAxis> axes;
  std::string figure;  // optional figure tag
  std::size_t total_runs = 0;

  std::vector<std::pair<ExperimentConfig, std::string>> expand() const;
  // second: canonical swept-values JSON object for CSV columns
};

SweepSpec parse_sweep_spec(const std::string& json_text);
SweepSpec parse_sweep_spec_file(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace exolam
