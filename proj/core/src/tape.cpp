#include "exolam/tape.hpp"

#include <cstring>
#include <limits>
#include <stdexcept>

#include "exolam/matrix.hpp"

namespace exolam {

int Tape::alloc(std::size_t size, bool param) {
  vals_.emplace_back(size, 0.f);
  grads_.emplace_back(size, 0.f);
  const int id = static_cast<int>(vals_.size()) - 1;
  if (param) param_ids_.push_back(id);
  return id;
}

void Tape::forward() {
  for (auto& n : nodes_) n->forward(*this);
}

void Tape::backward() {
  for (auto& g : grads_) std::memset(g.data(), 0, g.size() * sizeof(float));
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
    (*it)->backward(*this);
}

// ---- Conv3x3 ------------------------------------------------------------

namespace {

// Neighbor pixel index for kernel position p (0..8) at pixel (y,x) on the
// 4x4 grid, or -1 when it falls in the zero padding.
inline int neighbor(int pix, int p) {
  const int y = pix / 4, x = pix % 4;
  const int ny = y + p / 3 - 1, nx = x + p % 3 - 1;
  if (ny < 0 || ny > 3 || nx < 0 || nx > 3) return -1;
  return ny * 4 + nx;
}

}  // namespace

Conv3x3::Conv3x3(int in, int w, int b, int out, std::size_t batch,
                 std::size_t c_in, std::size_t c_out)
    : in(in), w(w), b(b), out(out), batch(batch), c_in(c_in), c_out(c_out) {
  patches.resize(batch * 16 * 9 * c_in);
  dpatches.resize(batch * 16 * 9 * c_in);
}

void Conv3x3::forward(Tape& t) {
  const float* x = t.val(in);
  const std::size_t prow = 9 * c_in;
  for (std::size_t bi = 0; bi < batch; ++bi) {
    const float* xb = x + bi * 16 * c_in;
    for (int pix = 0; pix < 16; ++pix) {
      float* pr = patches.data() + (bi * 16 + pix) * prow;
      for (int p = 0; p < 9; ++p) {
        const int nb = neighbor(pix, p);
        if (nb < 0)
          std::memset(pr + p * c_in, 0, c_in * sizeof(float));
        else
          std::memcpy(pr + p * c_in, xb + nb * c_in, c_in * sizeof(float));
      }
    }
  }
  // out(B*16, c_out) = patches(B*16, 9*c_in) * W(c_out, 9*c_in)^T
  sgemm_nt(batch * 16, c_out, prow, patches.data(), t.val(w), t.val(out));
  const float* bias = t.val(b);
  float* o = t.val(out);
  for (std::size_t r = 0; r < batch * 16; ++r)
    for (std::size_t c = 0; c < c_out; ++c) o[r * c_out + c] += bias[c];
}

void Conv3x3::backward(Tape& t) {
  const float* dout = t.grad(out);
  const std::size_t prow = 9 * c_in;
  // dW += dout^T * patches
  sgemm_tn(c_out, prow, batch * 16, dout, patches.data(), t.grad(w),
           /*accumulate=*/true);
  float* db = t.grad(b);
  for (std::size_t r = 0; r < batch * 16; ++r)
    for (std::size_t c = 0; c < c_out; ++c) db[c] += dout[r * c_out + c];
  // dpatches = dout * W, then scatter-add back through the gather.
  sgemm(batch * 16, prow, c_out, dout, t.val(w), dpatches.data());
  float* dx = t.grad(in);
  for (std::size_t bi = 0; bi < batch; ++bi) {
    float* dxb = dx + bi * 16 * c_in;
    for (int pix = 0; pix < 16; ++pix) {
      const float* pr = dpatches.data() + (bi * 16 + pix) * prow;
      for (int p = 0; p < 9; ++p) {
        const int nb = neighbor(pix, p);
        if (nb < 0) continue;
        float* dst = dxb + nb * c_in;
        const float* src = pr + p * c_in;
        for (std::size_t c = 0; c < c_in; ++c) dst[c] += src[c];
      }
    }
  }
}

// ---- Dense ----------------------------------------------------------------

Dense::Dense(int in, int w, int b, int out, std::size_t batch,
             std::size_t n_in, std::size_t n_out)
    : in(in), w(w), b(b), out(out), batch(batch), n_in(n_in), n_out(n_out) {}

void Dense::forward(Tape& t) {
  sgemm_nt(batch, n_out, n_in, t.val(in), t.val(w), t.val(out));
  const float* bias = t.val(b);
  float* o = t.val(out);
  for (std::size_t r = 0; r < batch; ++r)
    for (std::size_t c = 0; c < n_out; ++c) o[r * n_out + c] += bias[c];
}

void Dense::backward(Tape& t) {
  const float* dout = t.grad(out);
  sgemm_tn(n_out, n_in, batch, dout, t.val(in), t.grad(w), true);
  float* db = t.grad(b);
  for (std::size_t r = 0; r < batch; ++r)
    for (std::size_t c = 0; c < n_out; ++c) db[c] += dout[r * n_out + c];
  sgemm(batch, n_in, n_out, dout, t.val(w), t.grad(in), true);
}

// ---- Relu -----------------------------------------------------------------

void Relu::forward(Tape& t) {
  const float* x = t.val(in);
  float* o = t.val(out);
  const std::size_t n = t.slot_size(in);
  for (std::size_t i = 0; i < n; ++i) o[i] = x[i] > 0.f ? x[i] : 0.f;
}

void Relu::backward(Tape& t) {
  const float* x = t.val(in);
  const float* dout = t.grad(out);
  float* dx = t.grad(in);
  const std::size_t n = t.slot_size(in);
  for (std::size_t i = 0; i < n; ++i)
    if (x[i] > 0.f) dx[i] += dout[i];
}

// ---- Identity ---------------------------------------------------------------

void Identity::forward(Tape& t) {
  std::memcpy(t.val(out), t.val(in), t.slot_size(in) * sizeof(float));
}

void Identity::backward(Tape& t) {
  const float* dout = t.grad(out);
  float* din = t.grad(in);
  const std::size_t n = t.slot_size(in);
  for (std::size_t i = 0; i < n; ++i) din[i] += dout[i];
}

// ---- AssembleDecoderInput ---------------------------------------------------

AssembleDecoderInput::AssembleDecoderInput(int frame, int z, int out,
                                           std::size_t batch, std::size_t d_z)
    : frame(frame), z(z), out(out), batch(batch), d_z(d_z) {}

void AssembleDecoderInput::forward(Tape& t) {
  const float* f = t.val(frame);
  const float* zv = t.val(z);
  float* o = t.val(out);
  const std::size_t c = 1 + d_z;
  for (std::size_t bi = 0; bi < batch; ++bi) {
    const float* zb = zv + bi * d_z;
    for (int pix = 0; pix < 16; ++pix) {
      float* op = o + (bi * 16 + pix) * c;
      op[0] = f[bi * 16 + pix];
      std::memcpy(op + 1, zb, d_z * sizeof(float));
    }
  }
}

void AssembleDecoderInput::backward(Tape& t) {
  const float* dout = t.grad(out);
  float* dz = t.grad(z);
  float* df = t.grad(frame);
  const std::size_t c = 1 + d_z;
  for (std::size_t bi = 0; bi < batch; ++bi) {
    float* dzb = dz + bi * d_z;
    for (int pix = 0; pix < 16; ++pix) {
      const float* dop = dout + (bi * 16 + pix) * c;
      df[bi * 16 + pix] += dop[0];
      for (std::size_t j = 0; j < d_z; ++j) dzb[j] += dop[1 + j];
    }
  }
}

// ---- VectorQuantize ---------------------------------------------------------

VectorQuantize::VectorQuantize(int z_pre, int codebook, int out,
                               std::size_t batch, std::size_t d_z,
                               std::size_t k, double beta, bool apply_vq_loss)
    : z_pre(z_pre),
      codebook(codebook),
      out(out),
      batch(batch),
      d_z(d_z),
      k(k),
      beta(beta),
      apply_vq_loss(apply_vq_loss) {
  indices.resize(batch);
}

void VectorQuantize::forward(Tape& t) {
  const float* z = t.val(z_pre);
  const float* cb = t.val(codebook);
  float* o = t.val(out);
  double cb_loss = 0.0, cm_loss = 0.0;
  for (std::size_t bi = 0; bi < batch; ++bi) {
    const float* zb = z + bi * d_z;
    std::size_t best = 0;
    float best_d = std::numeric_limits<float>::max();
    for (std::size_t ci = 0; ci < k; ++ci) {
      const float* e = cb + ci * d_z;
      float d = 0.f;
      for (std::size_t j = 0; j < d_z; ++j) {
        const float t2 = zb[j] - e[j];
        d += t2 * t2;
      }
      if (d < best_d) {
        best_d = d;
        best = ci;
      }
    }
    indices[bi] = static_cast<std::uint32_t>(best);
    std::memcpy(o + bi * d_z, cb + best * d_z, d_z * sizeof(float));
    cb_loss += best_d;
    cm_loss += best_d;
  }
  codebook_loss = cb_loss / static_cast<double>(batch);
  commitment_loss = cm_loss / static_cast<double>(batch);
}

void VectorQuantize::backward(Tape& t) {
  const float* dout = t.grad(out);
  float* dz = t.grad(z_pre);
  const std::size_t n = batch * d_z;
  // Straight-through: the quantized slot's adjoint flows to z_pre as-is.
  for (std::size_t i = 0; i < n; ++i) dz[i] += dout[i];
  if (!apply_vq_loss) return;

  const float* z = t.val(z_pre);
  const float* cb = t.val(codebook);
  float* dcb = t.grad(codebook);
  const float s = 2.f / static_cast<float>(batch);
  for (std::size_t bi = 0; bi < batch; ++bi) {
    const float* zb = z + bi * d_z;
    const float* e = cb + indices[bi] * d_z;
    float* de = dcb + indices[bi] * d_z;
    float* dzb = dz + bi * d_z;
    for (std::size_t j = 0; j < d_z; ++j) {
      const float diff = zb[j] - e[j];
      de[j] += -s * diff;                              // codebook term
      dzb[j] += static_cast<float>(beta) * s * diff;   // commitment term
    }
  }
}

// ---- MseLoss ----------------------------------------------------------------

MseLoss::MseLoss(int pred, std::size_t size, double weight)
    : pred(pred), size(size), weight(weight) {
  target.resize(size, 0.f);
}

void MseLoss::forward(Tape& t) {
  const float* p = t.val(pred);
  double acc = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(p[i]) - target[i];
    acc += d * d;
  }
  value = acc / static_cast<double>(size);
}

void MseLoss::backward(Tape& t) {
  if (weight == 0.0) return;
  const float* p = t.val(pred);
  float* dp = t.grad(pred);
  const float s = static_cast<float>(2.0 * weight / static_cast<double>(size));
  for (std::size_t i = 0; i < size; ++i) dp[i] += s * (p[i] - target[i]);
}

// ---- RobustHead -------------------------------------------------------------

RobustHead::RobustHead(int z, int w, std::size_t batch, std::size_t d_z,
                       std::size_t d_y, double weight)
    : z(z), w(w), batch(batch), d_z(d_z), d_y(d_y), weight(weight) {
  onehot.resize(batch * d_y, 0.f);
  mask.resize(batch, 0);
}

void RobustHead::forward(Tape& t) {
  const float* zv = t.val(z);
  const float* wv = t.val(w);
  double acc = 0.0;
  labeled_in_batch = 0;
  for (std::size_t bi = 0; bi < batch; ++bi) {
    if (!mask[bi]) continue;
    ++labeled_in_batch;
    const float* zb = zv + bi * d_z;
    for (std::size_t r = 0; r < d_y; ++r) {
      double pred = 0.0;
      const float* wr = wv + r * d_z;
      for (std::size_t j = 0; j < d_z; ++j) pred += wr[j] * zb[j];
      const double d = onehot[bi * d_y + r] - pred;
      acc += d * d;
    }
  }
  value = labeled_in_batch > 0 ? acc / static_cast<double>(labeled_in_batch)
                               : 0.0;
}

void RobustHead::backward(Tape& t) {
  if (weight == 0.0 || labeled_in_batch == 0) return;
  const float* zv = t.val(z);
  const float* wv = t.val(w);
  float* dz = t.grad(z);
  float* dw = t.grad(w);
  const float s =
      static_cast<float>(2.0 * weight / static_cast<double>(labeled_in_batch));
  for (std::size_t bi = 0; bi < batch; ++bi) {
    if (!mask[bi]) continue;
    const float* zb = zv + bi * d_z;
    float* dzb = dz + bi * d_z;
    for (std::size_t r = 0; r < d_y; ++r) {
      const float* wr = wv + r * d_z;
      float pred = 0.f;
      for (std::size_t j = 0; j < d_z; ++j) pred += wr[j] * zb[j];
      const float resid = pred - onehot[bi * d_y + r];  // d/dpred of (y-pred)^2
      float* dwr = dw + r * d_z;
      for (std::size_t j = 0; j < d_z; ++j) {
        dwr[j] += s * resid * zb[j];
        dzb[j] += s * resid * wr[j];
      }
    }
  }
}

}  // namespace exolam
