#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "exolam/grid_env.hpp"
#include "exolam/matrix.hpp"
#include "exolam/rng.hpp"
#include "exolam/tape.hpp"

namespace exolam {

struct GridModelConfig {
  std::size_t d_z = 32;
  std::size_t codebook_size = 5;
  double beta = 0.25;
  std::vector<std::size_t> enc_channels{128, 128, 128};
  std::size_t mlp_hidden = 64;
  std::vector<std::size_t> dec_channels{32, 32, 32, 32};
  double lr = 3e-4;
  std::size_t steps = 16000;
  std::size_t batch_size = 128;
  double grad_clip = 5.0;
  double lambda_xexo = 0.0;
  double lambda_robust = 0.0;
  double label_fraction = 0.01;
  std::uint64_t seed = 0;
  std::size_t log_every = 500;

  void validate() const;
};

struct ParamSpec {
  std::string name;
  std::size_t rows, cols;
};

std::vector<ParamSpec> grid_param_specs(const GridModelConfig& cfg);
std::size_t grid_param_count(const GridModelConfig& cfg);
std::vector<Matrix> grid_init_params(const GridModelConfig& cfg,
                                     RngStream& rng);

// Tape-backed encoder/quantizer/decoder for a fixed batch size. Weights are
// shared between the main and paired encoder applications; the paired branch
// (cross-exogenous reconstruction + consistency readout) is built only when
// requested.
class GridModel {
 public:
  // quantize=false swaps the VQ bottleneck for a gradient-passthrough
  // identity, yielding a fully differentiable network for FD checks.
  GridModel(GridModelConfig cfg, std::size_t batch, bool with_pair,
            bool quantize = true);

  const GridModelConfig& config() const { return cfg_; }
  std::size_t batch() const { return batch_; }
  bool with_pair() const { return with_pair_; }

  void load_params(const std::vector<Matrix>& params);
  std::vector<Matrix> grads() const;  // after backward(), doubles

  void load_rows(const GridBatch& data, const std::vector<std::size_t>& rows,
                 const std::vector<std::uint8_t>* labeled_mask);
  void forward();
  void backward();

  double recon_loss() const { return recon_->value; }
  double vq_loss() const { return vq_main_ ? vq_main_->vq_loss() : 0.0; }
  double xexo_loss() const { return xexo_ ? xexo_->value : 0.0; }
  double robust_loss() const { return robust_->value; }
  std::size_t labeled_in_batch() const { return robust_->labeled_in_batch; }
  double total_loss() const;

  const float* z_pre_main() const;   // batch x d_z
  const float* z_pre_pair() const;   // batch x d_z (with_pair only)
  const float* prediction() const;   // batch x 16
  const std::uint32_t* codes_main() const;
  const std::uint32_t* codes_pair() const;

 private:
  GridModelConfig cfg_;
  std::size_t batch_;
  bool with_pair_;
  bool quantize_ = true;
  Tape tape_;
  std::vector<int> param_ids_;
  int in_main_ = -1, in_pair_ = -1, in_frame_ = -1;
  int z_pre_main_id_ = -1, z_pre_pair_id_ = -1;
  int z_st_main_id_ = -1, z_st_pair_id_ = -1;
  int pred_id_ = -1, pred_x_id_ = -1;
  VectorQuantize* vq_main_ = nullptr;
  VectorQuantize* vq_pair_ = nullptr;
  MseLoss* recon_ = nullptr;
  MseLoss* xexo_ = nullptr;
  RobustHead* robust_ = nullptr;
};

struct GridEncodeResult {
  std::vector<float> z_pre, z_q;
  std::size_t code = 0;
};

// Single-pair convenience ops.
GridEncodeResult grid_encode(const GridModelConfig& cfg,
                             const std::vector<Matrix>& params,
                             const float* obs, const float* obs_next);
std::vector<float> grid_decode(const GridModelConfig& cfg,
                               const std::vector<Matrix>& params,
                               const float* obs, const float* z_q);

struct GridLossBreakdown {
  double recon = 0.0, vq = 0.0, xexo = 0.0, robust = 0.0;
  double total(const GridModelConfig& cfg) const {
    return recon + vq + cfg.lambda_xexo * xexo + cfg.lambda_robust * robust;
  }
};

// Whole-dataset losses (chunked). Throws if the robust loss is requested
// and the mask labels no rows.
GridLossBreakdown grid_losses(const GridModelConfig& cfg,
                              const std::vector<Matrix>& params,
                              const GridBatch& data,
                              const std::vector<std::uint8_t>* labeled_mask);

std::vector<std::uint8_t> make_labeled_mask(std::size_t n, double fraction,
                                            std::uint64_t seed);

struct GridHistoryEntry {
  std::size_t step;
  GridLossBreakdown losses;
};

struct GridTrainResult {
  std::vector<Matrix> params;
  std::vector<GridHistoryEntry> history;
  GridLossBreakdown final_losses;
  std::vector<std::uint8_t> labeled_mask;
  std::size_t param_count = 0;
};

// Adam (double master weights, float compute) with global-norm clipping;
// deterministic per seed. Throws on NaN with step diagnostics.
GridTrainResult train_grid(const GridModelConfig& cfg, const GridBatch& data);

}  // namespace exolam
