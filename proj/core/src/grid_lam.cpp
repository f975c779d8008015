#include "exolam/grid_lam.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "exolam/adam.hpp"
#include "exolam/linear_lam.hpp"

namespace exolam {

void GridModelConfig::validate() const {
  if (d_z == 0 || codebook_size == 0)
    throw std::invalid_argument("GridModelConfig: zero d_z or codebook");
  if (enc_channels.empty() || dec_channels.empty())
    throw std::invalid_argument("GridModelConfig: empty conv stack");
  if (mlp_hidden == 0)
    throw std::invalid_argument("GridModelConfig: mlp_hidden == 0");
  if (batch_size == 0)
    throw std::invalid_argument("GridModelConfig: batch_size == 0");
  if (beta < 0.0 || label_fraction < 0.0 || label_fraction > 1.0)
    throw std::invalid_argument("GridModelConfig: bad beta or label_fraction");
  if (lambda_xexo < 0.0 || lambda_robust < 0.0)
    throw std::invalid_argument("GridModelConfig: negative lambda");
}

std::vector<ParamSpec> grid_param_specs(const GridModelConfig& cfg) {
  std::vector<ParamSpec> specs;
  std::size_t c_in = 2;
  for (std::size_t i = 0; i < cfg.enc_channels.size(); ++i) {
    const std::size_t c_out = cfg.enc_channels[i];
    specs.push_back({"enc_conv" + std::to_string(i) + "_w", c_out, 9 * c_in});
    specs.push_back({"enc_conv" + std::to_string(i) + "_b", 1, c_out});
    c_in = c_out;
  }
  specs.push_back({"enc_mlp_w", cfg.mlp_hidden, 16 * c_in});
  specs.push_back({"enc_mlp_b", 1, cfg.mlp_hidden});
  specs.push_back({"enc_head_w", cfg.d_z, cfg.mlp_hidden});
  specs.push_back({"enc_head_b", 1, cfg.d_z});
  specs.push_back({"codebook", cfg.codebook_size, cfg.d_z});
  c_in = 1 + cfg.d_z;
  for (std::size_t i = 0; i < cfg.dec_channels.size(); ++i) {
    const std::size_t c_out = cfg.dec_channels[i];
    specs.push_back({"dec_conv" + std::to_string(i) + "_w", c_out, 9 * c_in});
    specs.push_back({"dec_conv" + std::to_string(i) + "_b", 1, c_out});
    c_in = c_out;
  }
  specs.push_back({"dec_out_w", 1, 9 * c_in});
  specs.push_back({"dec_out_b", 1, 1});
  specs.push_back({"robust_w", 4, cfg.d_z});
  return specs;
}

std::size_t grid_param_count(const GridModelConfig& cfg) {
  std::size_t n = 0;
  for (const auto& s : grid_param_specs(cfg)) n += s.rows * s.cols;
  return n;
}

std::vector<Matrix> grid_init_params(const GridModelConfig& cfg,
                                     RngStream& rng) {
  std::vector<Matrix> out;
  for (const auto& s : grid_param_specs(cfg)) {
    if (s.name.size() >= 2 && s.name.compare(s.name.size() - 2, 2, "_b") == 0) {
      out.emplace_back(s.rows, s.cols);  // biases start at zero
    } else if (s.name == "codebook" || s.name == "robust_w") {
      out.push_back(Matrix::gaussian(
          s.rows, s.cols, rng, 1.0 / std::sqrt(static_cast<double>(cfg.d_z))));
    } else {
      // fan-in scaled: cols is 9*c_in for convs and n_in for dense layers
      out.push_back(Matrix::gaussian(
          s.rows, s.cols, rng, 1.0 / std::sqrt(static_cast<double>(s.cols))));
    }
  }
  return out;
}

namespace {

struct EncoderIds {
  int z_pre;
};

// Builds the conv+MLP encoder from `input` (B,16,2); weight slots are
// passed in so both streams share them. `pi` walks the param id list.
EncoderIds build_encoder(Tape& tape, const GridModelConfig& cfg,
                         const std::vector<int>& pids, std::size_t* pi,
                         int input, std::size_t B) {
  int cur = input;
  std::size_t c_in = 2;
  for (std::size_t i = 0; i < cfg.enc_channels.size(); ++i) {
    const std::size_t c_out = cfg.enc_channels[i];
    const int w = pids[(*pi)++], b = pids[(*pi)++];
    const int conv_out = tape.alloc(B * 16 * c_out);
    tape.emit<Conv3x3>(cur, w, b, conv_out, B, c_in, c_out);
    const int act = tape.alloc(B * 16 * c_out);
    tape.emit<Relu>(conv_out, act);
    cur = act;
    c_in = c_out;
  }
  // (B,16,C) flat is already (B, 16*C): flatten is a no-op.
  const int mw = pids[(*pi)++], mb = pids[(*pi)++];
  const int mlp_out = tape.alloc(B * cfg.mlp_hidden);
  tape.emit<Dense>(cur, mw, mb, mlp_out, B, 16 * c_in, cfg.mlp_hidden);
  const int mlp_act = tape.alloc(B * cfg.mlp_hidden);
  tape.emit<Relu>(mlp_out, mlp_act);
  const int hw = pids[(*pi)++], hb = pids[(*pi)++];
  const int z_pre = tape.alloc(B * cfg.d_z);
  tape.emit<Dense>(mlp_act, hw, hb, z_pre, B, cfg.mlp_hidden, cfg.d_z);
  return {z_pre};
}

int build_decoder(Tape& tape, const GridModelConfig& cfg,
                  const std::vector<int>& pids, std::size_t* pi, int frame,
                  int z, std::size_t B) {
  std::size_t c_in = 1 + cfg.d_z;
  const int assembled = tape.alloc(B * 16 * c_in);
  tape.emit<AssembleDecoderInput>(frame, z, assembled, B, cfg.d_z);
  int cur = assembled;
  for (std::size_t i = 0; i < cfg.dec_channels.size(); ++i) {
    const std::size_t c_out = cfg.dec_channels[i];
    const int w = pids[(*pi)++], b = pids[(*pi)++];
    const int conv_out = tape.alloc(B * 16 * c_out);
    tape.emit<Conv3x3>(cur, w, b, conv_out, B, c_in, c_out);
    const int act = tape.alloc(B * 16 * c_out);
    tape.emit<Relu>(conv_out, act);
    cur = act;
    c_in = c_out;
  }
  const int w = pids[(*pi)++], b = pids[(*pi)++];
  const int pred = tape.alloc(B * 16);
  tape.emit<Conv3x3>(cur, w, b, pred, B, c_in, 1);
  return pred;
}

std::size_t encoder_param_tensors(const GridModelConfig& cfg) {
  return cfg.enc_channels.size() * 2 + 4;
}
std::size_t decoder_param_tensors(const GridModelConfig& cfg) {
  return cfg.dec_channels.size() * 2 + 2;
}

}  // namespace

GridModel::GridModel(GridModelConfig cfg, std::size_t batch, bool with_pair,
                     bool quantize)
    : cfg_(std::move(cfg)),
      batch_(batch),
      with_pair_(with_pair),
      quantize_(quantize) {
  cfg_.validate();
  const auto specs = grid_param_specs(cfg_);
  for (const auto& s : specs)
    param_ids_.push_back(tape_.alloc(s.rows * s.cols, /*param=*/true));

  in_main_ = tape_.alloc(batch_ * 16 * 2);
  in_frame_ = tape_.alloc(batch_ * 16);
  if (with_pair_) in_pair_ = tape_.alloc(batch_ * 16 * 2);

  const std::size_t cb_index = encoder_param_tensors(cfg_);  // codebook slot
  std::size_t pi = 0;
  EncoderIds enc_main = build_encoder(tape_, cfg_, param_ids_, &pi, in_main_,
                                      batch_);
  z_pre_main_id_ = enc_main.z_pre;
  const int cb = param_ids_[cb_index];
  z_st_main_id_ = tape_.alloc(batch_ * cfg_.d_z);
  if (quantize_)
    vq_main_ = tape_.emit<VectorQuantize>(z_pre_main_id_, cb, z_st_main_id_,
                                          batch_, cfg_.d_z, cfg_.codebook_size,
                                          cfg_.beta, /*apply_vq_loss=*/true);
  else
    tape_.emit<Identity>(z_pre_main_id_, z_st_main_id_);

  if (with_pair_) {
    std::size_t pj = 0;
    EncoderIds enc_pair =
        build_encoder(tape_, cfg_, param_ids_, &pj, in_pair_, batch_);
    z_pre_pair_id_ = enc_pair.z_pre;
    z_st_pair_id_ = tape_.alloc(batch_ * cfg_.d_z);
    if (quantize_)
      vq_pair_ = tape_.emit<VectorQuantize>(
          z_pre_pair_id_, cb, z_st_pair_id_, batch_, cfg_.d_z,
          cfg_.codebook_size, cfg_.beta, /*apply_vq_loss=*/false);
    else
      tape_.emit<Identity>(z_pre_pair_id_, z_st_pair_id_);
  }

  std::size_t pd = cb_index + 1;
  pred_id_ = build_decoder(tape_, cfg_, param_ids_, &pd, in_frame_,
                           z_st_main_id_, batch_);
  recon_ = tape_.emit<MseLoss>(pred_id_, batch_ * 16, 1.0);

  if (with_pair_) {
    std::size_t pd2 = cb_index + 1;
    pred_x_id_ = build_decoder(tape_, cfg_, param_ids_, &pd2, in_frame_,
                               z_st_pair_id_, batch_);
    xexo_ = tape_.emit<MseLoss>(pred_x_id_, batch_ * 16, cfg_.lambda_xexo);
  }

  const std::size_t w_index = specs.size() - 1;  // robust_w is last
  robust_ = tape_.emit<RobustHead>(z_pre_main_id_, param_ids_[w_index], batch_,
                                   cfg_.d_z, 4, cfg_.lambda_robust);
}

void GridModel::load_params(const std::vector<Matrix>& params) {
  const auto specs = grid_param_specs(cfg_);
  if (params.size() != specs.size())
    throw std::invalid_argument("GridModel::load_params: expected " +
                                std::to_string(specs.size()) + " tensors, got " +
                                std::to_string(params.size()));
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (params[i].rows() != specs[i].rows || params[i].cols() != specs[i].cols)
      throw std::invalid_argument("GridModel::load_params: " + specs[i].name +
                                  " is " + shape_str(params[i]) + ", want " +
                                  std::to_string(specs[i].rows) + "x" +
                                  std::to_string(specs[i].cols));
    float* dst = tape_.val(param_ids_[i]);
    const double* src = params[i].data();
    for (std::size_t j = 0; j < params[i].size(); ++j)
      dst[j] = static_cast<float>(src[j]);
  }
}

std::vector<Matrix> GridModel::grads() const {
  const auto specs = grid_param_specs(cfg_);
  std::vector<Matrix> out;
  out.reserve(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    Matrix g(specs[i].rows, specs[i].cols);
    const float* src =
        const_cast<Tape&>(tape_).grad(param_ids_[i]);
    for (std::size_t j = 0; j < g.size(); ++j) g.data()[j] = src[j];
    out.push_back(std::move(g));
  }
  return out;
}

void GridModel::load_rows(const GridBatch& data,
                          const std::vector<std::size_t>& rows,
                          const std::vector<std::uint8_t>* labeled_mask) {
  if (rows.size() != batch_)
    throw std::invalid_argument("GridModel::load_rows: batch size mismatch");
  float* main_in = tape_.val(in_main_);
  float* frame_in = tape_.val(in_frame_);
  float* pair_in = with_pair_ ? tape_.val(in_pair_) : nullptr;
  for (std::size_t bi = 0; bi < batch_; ++bi) {
    const std::size_t r = rows[bi];
    const float* o = data.frame_obs(r);
    const float* on = data.frame_obs_next(r);
    for (int p = 0; p < 16; ++p) {
      main_in[(bi * 16 + p) * 2 + 0] = o[p];
      main_in[(bi * 16 + p) * 2 + 1] = on[p];
      frame_in[bi * 16 + p] = o[p];
      recon_->target[bi * 16 + p] = on[p];
      if (xexo_) xexo_->target[bi * 16 + p] = on[p];
    }
    if (with_pair_) {
      const float* ot = data.frame_obs_tilde(r);
      const float* otn = data.frame_obs_tilde_next(r);
      for (int p = 0; p < 16; ++p) {
        pair_in[(bi * 16 + p) * 2 + 0] = ot[p];
        pair_in[(bi * 16 + p) * 2 + 1] = otn[p];
      }
    }
    for (std::size_t yv = 0; yv < 4; ++yv)
      robust_->onehot[bi * 4 + yv] = data.action[r] == yv ? 1.f : 0.f;
    robust_->mask[bi] =
        labeled_mask ? (*labeled_mask)[r] : static_cast<std::uint8_t>(0);
  }
}

void GridModel::forward() { tape_.forward(); }
void GridModel::backward() { tape_.backward(); }

double GridModel::total_loss() const {
  return recon_->value + vq_loss() +
         cfg_.lambda_xexo * (xexo_ ? xexo_->value : 0.0) +
         cfg_.lambda_robust * robust_->value;
}

const float* GridModel::z_pre_main() const {
  return const_cast<Tape&>(tape_).val(z_pre_main_id_);
}
const float* GridModel::z_pre_pair() const {
  if (!with_pair_) throw std::logic_error("GridModel: no paired branch");
  return const_cast<Tape&>(tape_).val(z_pre_pair_id_);
}
const float* GridModel::prediction() const {
  return const_cast<Tape&>(tape_).val(pred_id_);
}
const std::uint32_t* GridModel::codes_main() const {
  if (!vq_main_) throw std::logic_error("GridModel: quantizer bypassed");
  return vq_main_->indices.data();
}
const std::uint32_t* GridModel::codes_pair() const {
  if (!vq_pair_) throw std::logic_error("GridModel: no paired branch");
  return vq_pair_->indices.data();
}

GridEncodeResult grid_encode(const GridModelConfig& cfg,
                             const std::vector<Matrix>& params,
                             const float* obs, const float* obs_next) {
  GridModel m(cfg, 1, /*with_pair=*/false);
  m.load_params(params);
  GridBatch one;
  one.n = 1;
  one.sigma = 0.0;
  one.obs.assign(obs, obs + 16);
  one.obs_next.assign(obs_next, obs_next + 16);
  one.obs_tilde = one.obs;
  one.obs_tilde_next = one.obs_next;
  one.action.assign(1, 0);
  one.cell.assign(1, 0);
  one.cell_next.assign(1, 0);
  m.load_rows(one, {0}, nullptr);
  m.forward();
  GridEncodeResult r;
  r.z_pre.assign(m.z_pre_main(), m.z_pre_main() + cfg.d_z);
  r.code = m.codes_main()[0];
  r.z_q.resize(cfg.d_z);
  const Matrix& cb = params[cfg.enc_channels.size() * 2 + 4];
  for (std::size_t j = 0; j < cfg.d_z; ++j)
    r.z_q[j] = static_cast<float>(cb(r.code, j));
  return r;
}

std::vector<float> grid_decode(const GridModelConfig& cfg,
                               const std::vector<Matrix>& params,
                               const float* obs, const float* z_q) {
  // Decode-only graph: frame + externally supplied latent.
  Tape tape;
  std::vector<int> pids;
  const auto specs = grid_param_specs(cfg);
  for (const auto& s : specs) pids.push_back(tape.alloc(s.rows * s.cols, true));
  const int frame = tape.alloc(16);
  const int z = tape.alloc(cfg.d_z);
  std::size_t pd = cfg.enc_channels.size() * 2 + 4 + 1;
  const int pred = build_decoder(tape, cfg, pids, &pd, frame, z, 1);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    float* dst = tape.val(pids[i]);
    for (std::size_t j = 0; j < params[i].size(); ++j)
      dst[j] = static_cast<float>(params[i].data()[j]);
  }
  std::copy(obs, obs + 16, tape.val(frame));
  std::copy(z_q, z_q + cfg.d_z, tape.val(z));
  tape.forward();
  return std::vector<float>(tape.val(pred), tape.val(pred) + 16);
}

std::vector<std::uint8_t> make_labeled_mask(std::size_t n, double fraction,
                                            std::uint64_t seed) {
  RngStream rng(seed, kStreamLabels);
  std::vector<std::uint8_t> mask(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    mask[i] = rng.next_unit() < fraction ? 1 : 0;
  return mask;
}

GridLossBreakdown grid_losses(const GridModelConfig& cfg,
                              const std::vector<Matrix>& params,
                              const GridBatch& data,
                              const std::vector<std::uint8_t>* labeled_mask) {
  if (data.n == 0) throw std::invalid_argument("grid_losses: empty batch");
  if (cfg.lambda_robust > 0.0) {
    std::size_t labeled = 0;
    if (labeled_mask)
      for (auto v : *labeled_mask) labeled += v;
    if (labeled == 0)
      throw std::runtime_error(
          "grid_losses: robust loss requested but the mask labels zero rows");
  }
  const std::size_t chunk = std::min<std::size_t>(256, data.n);
  GridModel model(cfg, chunk, /*with_pair=*/true);
  model.load_params(params);

  GridLossBreakdown acc;
  std::size_t robust_rows = 0;
  double robust_sum = 0.0;
  std::vector<std::size_t> rows(chunk);

  auto accumulate = [&](GridModel& m, std::size_t count) {
    const double w = static_cast<double>(count);
    acc.recon += m.recon_loss() * w;
    acc.vq += m.vq_loss() * w;
    acc.xexo += m.xexo_loss() * w;
    robust_sum += m.robust_loss() * static_cast<double>(m.labeled_in_batch());
    robust_rows += m.labeled_in_batch();
  };

  std::size_t start = 0;
  for (; start + chunk <= data.n; start += chunk) {
    for (std::size_t j = 0; j < chunk; ++j) rows[j] = start + j;
    model.load_rows(data, rows, labeled_mask);
    model.forward();
    accumulate(model, chunk);
  }
  if (start < data.n) {
    const std::size_t rem = data.n - start;
    GridModel tail(cfg, rem, /*with_pair=*/true);
    tail.load_params(params);
    std::vector<std::size_t> tail_rows(rem);
    for (std::size_t j = 0; j < rem; ++j) tail_rows[j] = start + j;
    tail.load_rows(data, tail_rows, labeled_mask);
    tail.forward();
    accumulate(tail, rem);
  }
  const double n = static_cast<double>(data.n);
  acc.recon /= n;
  acc.vq /= n;
  acc.xexo /= n;
  acc.robust = robust_rows > 0 ? robust_sum / static_cast<double>(robust_rows)
                               : 0.0;
  return acc;
}

GridTrainResult train_grid(const GridModelConfig& cfg, const GridBatch& data) {
  cfg.validate();
  if (data.n == 0) throw std::invalid_argument("train_grid: empty dataset");

  GridTrainResult res;
  res.labeled_mask = make_labeled_mask(data.n, cfg.label_fraction, cfg.seed);
  if (cfg.lambda_robust > 0.0) {
    std::size_t labeled = 0;
    for (auto v : res.labeled_mask) labeled += v;
    if (labeled == 0)
      throw std::runtime_error(
          "train_grid: robust loss active but label_fraction labels zero of " +
          std::to_string(data.n) + " rows");
  }

  RngStream init_rng(cfg.seed, kStreamInit);
  std::vector<Matrix> params = grid_init_params(cfg, init_rng);
  res.param_count = grid_param_count(cfg);

  const bool with_pair = cfg.lambda_xexo > 0.0;
  GridModel model(cfg, cfg.batch_size, with_pair);
  AdamState adam({cfg.lr, 0.9, 0.999, 1e-8, cfg.grad_clip}, params);

  RngStream mb_rng(cfg.seed, kStreamMinibatch);
  std::vector<std::size_t> rows(cfg.batch_size);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    for (auto& r : rows) r = mb_rng.next_below(data.n);
    model.load_params(params);
    model.load_rows(data, rows, &res.labeled_mask);
    model.forward();
    const double total = model.total_loss();
    if (!std::isfinite(total))
      throw std::runtime_error("train_grid: non-finite loss at step " +
                               std::to_string(step) + " (sigma=" +
                               std::to_string(data.sigma) + ", lr=" +
                               std::to_string(cfg.lr) + ")");
    model.backward();
    std::vector<Matrix> grads = model.grads();
    adam.step(params, grads);

    if (cfg.log_every > 0 && (step + 1) % cfg.log_every == 0) {
      GridHistoryEntry e;
      e.step = step + 1;
      e.losses.recon = model.recon_loss();
      e.losses.vq = model.vq_loss();
      e.losses.xexo = model.xexo_loss();
      e.losses.robust = model.robust_loss();
      res.history.push_back(e);
    }
  }

  res.params = params;
  res.final_losses = grid_losses(cfg, params, data,
                                 cfg.lambda_robust > 0.0 ? &res.labeled_mask
                                                         : nullptr);
  return res;
}

}  // namespace exolam
