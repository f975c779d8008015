#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "exolam/env.hpp"
#include "exolam/grid_lam.hpp"
#include "exolam/linear_lam.hpp"
#include "exolam/matrix.hpp"

namespace exolam {

// a_hat(z) = M z + b, fit in closed form on centered data.
struct ProbeParams {
  Matrix M;                // d_a x d_z
  std::vector<double> b;   // d_a
};

// Ridge probe; the LAM is frozen, only (M, b) are fit. Needs at least
// d_z + 1 samples.
ProbeParams fit_probe(const Matrix& z, const Matrix& a, double lambda_ridge);

// mean ||a - a_hat||^2 / mean ||a - a_bar||^2 with a_bar the mean of the
// evaluation actions. Throws if the actions have zero variance.
double nmse(const ProbeParams& probe, const Matrix& z, const Matrix& a);

// 80/20 split helper: fits on the first 80% of rows and evaluates on the
// held-out tail.
double probe_nmse_split(const Matrix& z, const Matrix& a, double lambda_ridge);

struct VarianceMetricConfig {
  std::size_t anchors = 512;
  std::size_t draws = 16;
  std::uint64_t seed = 0;
};

struct VarianceResult {
  double value = 0.0;
  bool degenerate = false;  // kernel cannot vary (p_switch=0 or n_xi=1)
};

// Var_{xi'}(z | s, xi, a) / E||z||^2: counterfactual next-xi draws from the
// switching kernel at anchors matched to the trajectory state marginal.
VarianceResult var_xi_prime(const LinearLamParams& p,
                            const LinearEnvConfig& env, const EmissionSet& em,
                            const VarianceMetricConfig& mc);

// Var_{xi,xi'}(z | s, a) / E||z||^2: both exogenous states resampled.
VarianceResult var_xi_pair(const LinearLamParams& p,
                           const LinearEnvConfig& env, const EmissionSet& em,
                           const VarianceMetricConfig& mc);

// mean ||z - z_tilde||^2 over rows of a paired batch (linear model).
double consistency_loss(const LinearLamParams& p, const TransitionBatch& batch);

struct GridConsistency {
  double z_mse = 0.0;             // mean ||z_pre - z_pre~||^2
  double code_disagreement = 0.0; // fraction of pairs picking different codes
};

GridConsistency grid_consistency(const GridModelConfig& cfg,
                                 const std::vector<Matrix>& params,
                                 const GridBatch& data);

// Pixel MSE of the decoder prediction restricted to the exogenous row.
double exo_region_mse(const GridModelConfig& cfg,
                      const std::vector<Matrix>& params, const GridBatch& data);
// Same restriction for an arbitrary prediction buffer (n x 16).
double exo_region_mse_of(const std::vector<float>& pred, const GridBatch& data);

// Number of distinct codes selected over the dataset.
std::size_t grid_code_usage(const GridModelConfig& cfg,
                            const std::vector<Matrix>& params,
                            const GridBatch& data);

struct MetricsRecord {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::size_t step = 0;
  std::string metric;
  double value = 0.0;
};

// Fixed registry of metric names; CSV columns use exactly these keys.
const std::vector<std::string>& metric_registry();
bool is_registered_metric(const std::string& name);

MetricsRecord make_metric(const std::string& config_hash, std::uint64_t seed,
                          std::size_t step, const std::string& name,
                          double value);

}  // namespace exolam
