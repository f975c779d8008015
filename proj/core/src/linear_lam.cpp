#include "exolam/linear_lam.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace exolam {

std::string robust_target_name(RobustTarget t) {
  switch (t) {
    case RobustTarget::none: return "none";
    case RobustTarget::action: return "action";
    case RobustTarget::q: return "q";
  }
  return "none";
}

RobustTarget robust_target_from_name(const std::string& s) {
  if (s == "none") return RobustTarget::none;
  if (s == "action") return RobustTarget::action;
  if (s == "q") return RobustTarget::q;
  throw std::invalid_argument("unknown robust target '" + s +
                              "' (expected none|action|q)");
}

std::vector<Matrix> LinearLamParams::as_list() const {
  std::vector<Matrix> l{A, B, C, D};
  if (has_w()) l.push_back(W);
  return l;
}

LinearLamParams LinearLamParams::from_list(const std::vector<Matrix>& l) {
  if (l.size() != 4 && l.size() != 5)
    throw std::invalid_argument("LinearLamParams::from_list: need 4 or 5");
  LinearLamParams p;
  p.A = l[0];
  p.B = l[1];
  p.C = l[2];
  p.D = l[3];
  if (l.size() == 5) p.W = l[4];
  return p;
}

void LinearTrainConfig::validate(std::size_t d_o) const {
  if (d_z == 0) throw std::invalid_argument("LinearTrainConfig: d_z == 0");
  if (d_z > d_o)
    throw std::invalid_argument("LinearTrainConfig: d_z " +
                                std::to_string(d_z) + " exceeds d_o " +
                                std::to_string(d_o));
  if (batch_size == 0)
    throw std::invalid_argument("LinearTrainConfig: batch_size == 0");
  if (lambda_xexo < 0.0 || lambda_robust < 0.0)
    throw std::invalid_argument("LinearTrainConfig: negative lambda");
  if (lambda_robust > 0.0 && robust_target == RobustTarget::none)
    throw std::invalid_argument(
        "LinearTrainConfig: lambda_robust > 0 requires robust_target");
}

namespace {

void render_column(const TransitionBatch& b, std::size_t row, Matrix& m,
                   std::size_t col, void (TransitionBatch::*fn)(std::size_t, double*) const) {
  thread_local std::vector<double> buf;
  buf.resize(m.rows());
  (b.*fn)(row, buf.data());
  for (std::size_t k = 0; k < m.rows(); ++k) m(k, col) = buf[k];
}

}  // namespace

ObsColumns make_columns(const TransitionBatch& batch,
                        const std::vector<std::size_t>& rows,
                        RobustTarget target, bool encoder_counterfactual) {
  const std::size_t B = rows.size(), d_o = batch.d_o();
  ObsColumns c;
  c.o = Matrix(d_o, B);
  c.o_next_tgt = Matrix(d_o, B);
  c.o_next_enc = Matrix(d_o, B);
  c.has_pairs = batch.has_pairs();
  if (c.has_pairs) {
    c.o_tilde = Matrix(d_o, B);
    c.o_tilde_next = Matrix(d_o, B);
  }
  c.has_y = target != RobustTarget::none;
  if (target == RobustTarget::action) c.y = Matrix(batch.d_a(), B);
  if (target == RobustTarget::q) c.y = Matrix(d_o, B);

  for (std::size_t j = 0; j < B; ++j) {
    const std::size_t i = rows[j];
    render_column(batch, i, c.o, j, &TransitionBatch::o);
    render_column(batch, i, c.o_next_tgt, j, &TransitionBatch::o_next);
    if (encoder_counterfactual)
      render_column(batch, i, c.o_next_enc, j,
                    &TransitionBatch::o_next_current_xi);
    else
      render_column(batch, i, c.o_next_enc, j, &TransitionBatch::o_next);
    if (c.has_pairs) {
      render_column(batch, i, c.o_tilde, j, &TransitionBatch::o_tilde);
      render_column(batch, i, c.o_tilde_next, j,
                    &TransitionBatch::o_tilde_next);
    }
    if (target == RobustTarget::action) {
      const double* a = batch.a(i);
      for (std::size_t k = 0; k < batch.d_a(); ++k) c.y(k, j) = a[k];
    } else if (target == RobustTarget::q) {
      render_column(batch, i, c.y, j, &TransitionBatch::q);
    }
  }
  return c;
}

std::vector<double> idm(const LinearLamParams& p, const std::vector<double>& o,
                        const std::vector<double>& o_next) {
  if (o.size() != p.C.cols() || o_next.size() != p.D.cols())
    throw std::invalid_argument("idm: observation dim mismatch");
  std::vector<double> z(p.C.rows()), tmp(p.D.rows());
  matvec(p.C, o.data(), z.data());
  matvec(p.D, o_next.data(), tmp.data());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] += tmp[i];
  return z;
}

std::vector<double> fdm(const LinearLamParams& p, const std::vector<double>& o,
                        const std::vector<double>& z) {
  if (o.size() != p.A.cols() || z.size() != p.B.cols())
    throw std::invalid_argument("fdm: dim mismatch");
  std::vector<double> out(p.A.rows()), tmp(p.B.rows());
  matvec(p.A, o.data(), out.data());
  matvec(p.B, z.data(), tmp.data());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += tmp[i];
  return out;
}

std::vector<Matrix> LinearLamGrads::as_list(bool with_w) const {
  std::vector<Matrix> l{A, B, C, D};
  if (with_w) l.push_back(W);
  return l;
}

LossBreakdown linear_loss_grad(const LinearLamParams& p, const ObsColumns& c,
                               double lambda_xexo, double lambda_robust,
                               LinearLamGrads* grads) {
  const std::size_t B = c.cols();
  if (B == 0) throw std::invalid_argument("linear_loss_grad: empty batch");
  if (lambda_xexo > 0.0 && !c.has_pairs)
    throw std::runtime_error(
        "loss_xexo: batch has no paired exogenous stream; regenerate the "
        "dataset with n_xi > 1 so pairs exist");
  if (lambda_robust > 0.0 && (!c.has_y || !p.has_w()))
    throw std::runtime_error(
        "loss_robust: needs a robust head W and target columns");
  const double inv_b = 1.0 / static_cast<double>(B);

  LossBreakdown out;

  // z = C o + D o_enc'
  Matrix z = matmul(p.C, c.o);
  matmul_into(z, p.D, c.o_next_enc, /*accumulate=*/true);

  // r = o_tgt' - A o - B z
  Matrix r = matmul(p.A, c.o);
  matmul_into(r, p.B, z, true);
  for (std::size_t i = 0; i < r.size(); ++i)
    r.data()[i] = c.o_next_tgt.data()[i] - r.data()[i];
  out.lam = frob_norm_sq(r) * inv_b;

  Matrix zt, rx;
  if (lambda_xexo > 0.0) {
    zt = matmul(p.C, c.o_tilde);
    matmul_into(zt, p.D, c.o_tilde_next, true);
    rx = matmul(p.A, c.o);
    matmul_into(rx, p.B, zt, true);
    for (std::size_t i = 0; i < rx.size(); ++i)
      rx.data()[i] = c.o_next_tgt.data()[i] - rx.data()[i];
    out.xexo = frob_norm_sq(rx) * inv_b;
  }

  Matrix rr;
  if (lambda_robust > 0.0) {
    rr = matmul(p.W, z);
    for (std::size_t i = 0; i < rr.size(); ++i)
      rr.data()[i] = c.y.data()[i] - rr.data()[i];
    out.robust = frob_norm_sq(rr) * inv_b;
  }

  out.total = out.lam + lambda_xexo * out.xexo + lambda_robust * out.robust;

  if (grads) {
    LinearLamGrads& g = *grads;
    g.A = Matrix(p.A.rows(), p.A.cols());
    g.B = Matrix(p.B.rows(), p.B.cols());
    g.C = Matrix(p.C.rows(), p.C.cols());
    g.D = Matrix(p.D.rows(), p.D.cols());
    if (p.has_w()) g.W = Matrix(p.W.rows(), p.W.cols());

    const double s = -2.0 * inv_b;
    // L_lam part
    Matrix rs = r;
    scale(rs, s);
    matmul_nt_into(g.A, rs, c.o, true);
    matmul_nt_into(g.B, rs, z, true);
    Matrix dz = matmul_tn(p.B, rs);  // d_z x B

    if (lambda_xexo > 0.0) {
      Matrix rxs = rx;
      scale(rxs, s * lambda_xexo);
      matmul_nt_into(g.A, rxs, c.o, true);
      matmul_nt_into(g.B, rxs, zt, true);
      Matrix dzt = matmul_tn(p.B, rxs);
      matmul_nt_into(g.C, dzt, c.o_tilde, true);
      matmul_nt_into(g.D, dzt, c.o_tilde_next, true);
    }

    if (lambda_robust > 0.0) {
      Matrix rrs = rr;
      scale(rrs, s * lambda_robust);
      matmul_nt_into(g.W, rrs, z, true);
      matmul_tn_into(dz, p.W, rrs, true);
    }

    matmul_nt_into(g.C, dz, c.o, true);
    matmul_nt_into(g.D, dz, c.o_next_enc, true);
  }
  return out;
}

namespace {

constexpr std::size_t kChunk = 2048;

LossBreakdown chunked_loss(const LinearLamParams& p,
                           const TransitionBatch& batch, double lx, double lr,
                           RobustTarget target, bool counterfactual) {
  const std::size_t n = batch.size();
  if (n == 0) throw std::invalid_argument("loss: empty batch");
  LossBreakdown acc;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t stop = std::min(n, start + kChunk);
    rows.resize(stop - start);
    std::iota(rows.begin(), rows.end(), start);
    ObsColumns c = make_columns(batch, rows, target, counterfactual);
    LossBreakdown part = linear_loss_grad(p, c, lx, lr, nullptr);
    const double w = static_cast<double>(rows.size());
    acc.lam += part.lam * w;
    acc.xexo += part.xexo * w;
    acc.robust += part.robust * w;
  }
  acc.lam /= static_cast<double>(n);
  acc.xexo /= static_cast<double>(n);
  acc.robust /= static_cast<double>(n);
  acc.total = acc.lam + lx * acc.xexo + lr * acc.robust;
  return acc;
}

}  // namespace

double loss_lam(const LinearLamParams& p, const TransitionBatch& batch) {
  return chunked_loss(p, batch, 0.0, 0.0, RobustTarget::none, false).lam;
}

double loss_xexo(const LinearLamParams& p, const TransitionBatch& batch) {
  if (!batch.has_pairs())
    throw std::runtime_error(
        "loss_xexo: batch has no paired exogenous stream; regenerate the "
        "dataset with n_xi > 1 so pairs exist");
  return chunked_loss(p, batch, 1.0, 0.0, RobustTarget::none, false).xexo;
}

double loss_robust(const LinearLamParams& p, const TransitionBatch& batch,
                   RobustTarget target) {
  if (target == RobustTarget::none)
    throw std::invalid_argument("loss_robust: target must be action or q");
  return chunked_loss(p, batch, 0.0, 1.0, target, false).robust;
}

LossBreakdown loss_all(const LinearLamParams& p, const TransitionBatch& batch,
                       double lambda_xexo, double lambda_robust,
                       RobustTarget target, bool encoder_counterfactual) {
  return chunked_loss(p, batch, lambda_xexo, lambda_robust, target,
                      encoder_counterfactual);
}

LinearLamGrads grad_total(const LinearLamParams& p,
                          const TransitionBatch& batch,
                          const LinearTrainConfig& cfg) {
  std::vector<std::size_t> rows(batch.size());
  std::iota(rows.begin(), rows.end(), 0);
  ObsColumns c = make_columns(batch, rows, cfg.robust_target,
                              cfg.encoder_counterfactual);
  LinearLamGrads g;
  linear_loss_grad(p, c, cfg.lambda_xexo, cfg.lambda_robust, &g);
  return g;
}

LinearLamParams init_params(std::size_t d_o, std::size_t d_z, std::size_t d_y,
                            RngStream& rng) {
  LinearLamParams p;
  const double so = 1.0 / std::sqrt(static_cast<double>(d_o));
  const double sz = 1.0 / std::sqrt(static_cast<double>(d_z));
  p.A = Matrix::gaussian(d_o, d_o, rng, so);
  p.B = Matrix::gaussian(d_o, d_z, rng, sz);
  p.C = Matrix::gaussian(d_z, d_o, rng, so);
  p.D = Matrix::gaussian(d_z, d_o, rng, so);
  if (d_y > 0) p.W = Matrix::gaussian(d_y, d_z, rng, sz);
  return p;
}

TrainResult train(const LinearTrainConfig& cfg, const TransitionBatch& data,
                  const TrainCheckpoint* resume_from) {
  cfg.validate(data.d_o());
  if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
  if (cfg.lambda_xexo > 0.0 && !data.has_pairs())
    throw std::runtime_error(
        "train: lambda_xexo > 0 but the dataset has no paired stream; "
        "regenerate with n_xi > 1");

  const std::size_t d_y = cfg.robust_target == RobustTarget::action
                              ? data.d_a()
                              : cfg.robust_target == RobustTarget::q
                                    ? data.d_o()
                                    : 0;

  TrainResult res;
  RngStream mb_rng(cfg.seed, kStreamMinibatch);
  AdamState adam;
  std::size_t start_step = 0;

  if (resume_from) {
    res.params = resume_from->params;
    adam = AdamState({cfg.lr, 0.9, 0.999, 1e-8, cfg.grad_clip},
                     res.params.as_list());
    adam.restore(resume_from->adam_m, resume_from->adam_v,
                 resume_from->adam_t);
    mb_rng.restore(resume_from->minibatch_rng);
    start_step = resume_from->step;
  } else {
    RngStream init_rng(cfg.seed, kStreamInit);
    res.params = init_params(data.d_o(), cfg.d_z, d_y, init_rng);
    adam = AdamState({cfg.lr, 0.9, 0.999, 1e-8, cfg.grad_clip},
                     res.params.as_list());
  }

  std::vector<Matrix> plist = res.params.as_list();
  const bool with_w = d_y > 0;

  std::vector<std::size_t> rows(cfg.batch_size);
  LinearLamGrads grads;
  double plateau_prev = -1.0;

  std::size_t step = start_step;
  for (; step < cfg.steps; ++step) {
    for (auto& r : rows) r = mb_rng.next_below(data.size());
    ObsColumns c = make_columns(data, rows, cfg.robust_target,
                                cfg.encoder_counterfactual);
    LinearLamParams cur = LinearLamParams::from_list(plist);
    LossBreakdown lb =
        linear_loss_grad(cur, c, cfg.lambda_xexo, cfg.lambda_robust, &grads);
    if (!std::isfinite(lb.total))
      throw std::runtime_error(
          "train: non-finite loss at step " + std::to_string(step) +
          " (d_z=" + std::to_string(cfg.d_z) + ", lr=" + std::to_string(cfg.lr) +
          ", lambda_xexo=" + std::to_string(cfg.lambda_xexo) +
          ", lambda_robust=" + std::to_string(cfg.lambda_robust) + ")");

    adam.step(plist, grads.as_list(with_w));

    const bool log_now = cfg.log_every > 0 && ((step + 1) % cfg.log_every == 0);
    const bool plateau_now = cfg.stop_on_plateau &&
                             ((step + 1) % cfg.plateau_window == 0);
    if (log_now || plateau_now) {
      TrainHistoryEntry e;
      e.step = step + 1;
      e.minibatch = lb;
      if (plateau_now) {
        LinearLamParams snap = LinearLamParams::from_list(plist);
        e.full_loss = loss_all(snap, data, cfg.lambda_xexo, cfg.lambda_robust,
                               cfg.robust_target, cfg.encoder_counterfactual)
                          .total;
        if (plateau_prev >= 0.0 &&
            plateau_prev - e.full_loss <
                cfg.plateau_rel_improve * std::fabs(plateau_prev)) {
          res.history.push_back(e);
          res.plateau_stopped = true;
          ++step;
          break;
        }
        plateau_prev = e.full_loss;
      }
      res.history.push_back(e);
    }
  }

  res.params = LinearLamParams::from_list(plist);
  res.steps_run = step;
  res.final_full =
      loss_all(res.params, data, cfg.lambda_xexo, cfg.lambda_robust,
               cfg.robust_target, cfg.encoder_counterfactual);

  res.checkpoint.params = res.params;
  res.checkpoint.adam_m = adam.m();
  res.checkpoint.adam_v = adam.v();
  res.checkpoint.adam_t = adam.steps();
  res.checkpoint.minibatch_rng = mb_rng.state();
  res.checkpoint.step = step;
  return res;
}

double do_nothing_baseline(const TransitionBatch& batch) {
  const std::size_t n = batch.size(), d_o = batch.d_o();
  std::vector<double> q(d_o), e(d_o);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    batch.q(i, q.data());
    batch.eps(i, e.data());
    for (std::size_t k = 0; k < d_o; ++k) {
      const double v = q[k] + e[k];
      acc += v * v;
    }
  }
  return acc / static_cast<double>(n);
}

}  // namespace exolam
