#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "exolam/adam.hpp"
#include "exolam/env.hpp"
#include "exolam/matrix.hpp"

namespace exolam {

// Stream-id registry: every consumer of randomness derives its stream from
// the run seed with one of these ids, so runs are reproducible and streams
// never collide.
enum StreamId : std::uint64_t {
  kStreamEmissions = 0,
  kStreamData = 1,
  kStreamInit = 2,
  kStreamMinibatch = 3,
  kStreamEvalData = 4,
  kStreamEvalDraws = 5,
  kStreamParamDraw = 6,
  kStreamLabels = 7,
};

enum class RobustTarget { none, action, q };

std::string robust_target_name(RobustTarget t);
RobustTarget robust_target_from_name(const std::string& s);

// z = C o + D o'; o_hat' = A o + B z; optional robust head W.
struct LinearLamParams {
  Matrix A, B, C, D;
  Matrix W;  // empty when absent

  bool has_w() const { return W.size() > 0; }
  std::size_t d_o() const { return A.rows(); }
  std::size_t d_z() const { return B.cols(); }

  std::vector<Matrix> as_list() const;  // A,B,C,D[,W]
  static LinearLamParams from_list(const std::vector<Matrix>& l);
};

struct LinearTrainConfig {
  std::size_t d_z = 8;
  double lr = 1e-3;
  std::size_t steps = 20000;
  std::size_t batch_size = 128;
  double lambda_xexo = 0.0;
  double lambda_robust = 0.0;
  RobustTarget robust_target = RobustTarget::none;
  double grad_clip = 0.0;  // 0 = no clipping (linear runs default)
  std::uint64_t seed = 0;
  std::size_t log_every = 1000;

  // Early stop on full-data loss plateau (used by the proposition
  // verifiers; disabled by default so `steps` is exact).
  bool stop_on_plateau = false;
  double plateau_rel_improve = 1e-6;
  std::size_t plateau_window = 500;

  // Encoder sees H_{xi}(s') instead of o' (the xi'-independent
  // counterfactual input used by the leakage verifier).
  bool encoder_counterfactual = false;

  void validate(std::size_t d_o) const;
};

// Column-major minibatch: column j holds row j's rendered vectors.
struct ObsColumns {
  Matrix o;            // d_o x B
  Matrix o_next_enc;   // what the IDM sees as the next observation
  Matrix o_next_tgt;   // what the FDM must reconstruct
  Matrix o_tilde;      // paired stream (empty if absent)
  Matrix o_tilde_next;
  Matrix y;            // robust target rows (empty if absent)
  bool has_pairs = false;
  bool has_y = false;
  std::size_t cols() const { return o.cols(); }
};

ObsColumns make_columns(const TransitionBatch& batch,
                        const std::vector<std::size_t>& rows,
                        RobustTarget target, bool encoder_counterfactual);

std::vector<double> idm(const LinearLamParams& p, const std::vector<double>& o,
                        const std::vector<double>& o_next);
std::vector<double> fdm(const LinearLamParams& p, const std::vector<double>& o,
                        const std::vector<double>& z);

struct LossBreakdown {
  double lam = 0.0;
  double xexo = 0.0;
  double robust = 0.0;
  double total = 0.0;
};

struct LinearLamGrads {
  Matrix A, B, C, D, W;
  std::vector<Matrix> as_list(bool with_w) const;
};

// Mean losses over the given columns and (optionally) their exact analytic
// gradients. lambda weights follow the training objective
// L_lam + lambda_xexo * L_xexo + lambda_robust * L_robust.
LossBreakdown linear_loss_grad(const LinearLamParams& p, const ObsColumns& c,
                               double lambda_xexo, double lambda_robust,
                               LinearLamGrads* grads);

// Whole-batch convenience wrappers (chunked).
double loss_lam(const LinearLamParams& p, const TransitionBatch& batch);
double loss_xexo(const LinearLamParams& p, const TransitionBatch& batch);
double loss_robust(const LinearLamParams& p, const TransitionBatch& batch,
                   RobustTarget target);
LossBreakdown loss_all(const LinearLamParams& p, const TransitionBatch& batch,
                       double lambda_xexo, double lambda_robust,
                       RobustTarget target, bool encoder_counterfactual = false);
LinearLamGrads grad_total(const LinearLamParams& p,
                          const TransitionBatch& batch,
                          const LinearTrainConfig& cfg);

LinearLamParams init_params(std::size_t d_o, std::size_t d_z,
                            std::size_t d_y /* 0 = no W */, RngStream& rng);

struct TrainCheckpoint {
  LinearLamParams params;
  std::vector<Matrix> adam_m, adam_v;
  std::int64_t adam_t = 0;
  RngStream::State minibatch_rng;
  std::size_t step = 0;
};

struct TrainHistoryEntry {
  std::size_t step;
  LossBreakdown minibatch;
  double full_loss = -1.0;  // filled when plateau tracking is on
};

struct TrainResult {
  LinearLamParams params;
  std::vector<TrainHistoryEntry> history;
  LossBreakdown final_full;  // exact losses on the whole batch
  std::size_t steps_run = 0;
  bool plateau_stopped = false;
  TrainCheckpoint checkpoint;  // state after the last step
};

// Adam training with with-replacement minibatches from a dedicated stream;
// bit-deterministic given (config, data). Throws on NaN loss, echoing the
// step index and config.
TrainResult train(const LinearTrainConfig& cfg, const TransitionBatch& data,
                  const TrainCheckpoint* resume_from = nullptr);

// Mean ||q + eps||^2: the loss of the do-nothing predictor (A = I, B = 0).
double do_nothing_baseline(const TransitionBatch& batch);

}  // namespace exolam
