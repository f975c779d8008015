#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace exolam {

// Minimal reverse-mode engine for the grid model. Values are float32;
// loss reductions accumulate in double. Slots pair a forward value with
// exactly one adjoint buffer; nodes run in emission order forward and in
// exact reverse order backward.
class Tape {
 public:
  struct Node {
    virtual ~Node() = default;
    virtual void forward(Tape& t) = 0;
    virtual void backward(Tape& t) = 0;
  };

  int alloc(std::size_t size, bool param = false);
  std::size_t slot_size(int id) const { return vals_[id].size(); }
  float* val(int id) { return vals_[id].data(); }
  const float* val(int id) const { return vals_[id].data(); }
  float* grad(int id) { return grads_[id].data(); }
  const float* grad(int id) const { return grads_[id].data(); }

  const std::vector<int>& params() const { return param_ids_; }

  template <typename T, typename... Args>
  T* emit(Args&&... args) {
    auto node = std::make_unique<T>(std::forward<Args>(args)...);
    T* raw = node.get();
    nodes_.push_back(std::move(node));
    return raw;
  }

  void forward();
  void backward();  // zeroes adjoints, then reverse sweep

 private:
  std::vector<std::vector<float>> vals_, grads_;
  std::vector<int> param_ids_;
  std::vector<std::unique_ptr<Node>> nodes_;
};

// ---- nodes -------------------------------------------------------------

// Tensors with spatial extent use layout (B, 16, C): pixel-major with the
// channel contiguous, so flattening to (B, 16*C) is a no-op and conv
// patches gather contiguous channel runs. Conv weights are stored as
// (C_out, 9*C_in) with the kernel position outer and channel inner.
struct Conv3x3 : Tape::Node {
  Conv3x3(int in, int w, int b, int out, std::size_t batch, std::size_t c_in,
          std::size_t c_out);
  void forward(Tape& t) override;
  void backward(Tape& t) override;
  int in, w, b, out;
  std::size_t batch, c_in, c_out;
  std::vector<float> patches, dpatches;  // (B*16) x (9*c_in)
};

// out = in * W^T + bias, in is (B, n_in), W is (n_out, n_in).
struct Dense : Tape::Node {
  Dense(int in, int w, int b, int out, std::size_t batch, std::size_t n_in,
        std::size_t n_out);
  void forward(Tape& t) override;
  void backward(Tape& t) override;
  int in, w, b, out;
  std::size_t batch, n_in, n_out;
};

struct Relu : Tape::Node {
  Relu(int in, int out) : in(in), out(out) {}
  void forward(Tape& t) override;
  void backward(Tape& t) override;
  int in, out;
};

// Decoder input assembly: channel 0 of every pixel is the conditioning
// frame, channels 1..d_z broadcast z across the 16 pixels.
struct AssembleDecoderInput : Tape::Node {
  AssembleDecoderInput(int frame, int z, int out, std::size_t batch,
                       std::size_t d_z);
  void forward(Tape& t) override;
  void backward(Tape& t) override;
  int frame, z, out;
  std::size_t batch, d_z;
};

// Value copy with gradient passthrough; stands in for the quantizer in
// fully differentiable truncated models.
struct Identity : Tape::Node {
  Identity(int in, int out) : in(in), out(out) {}
  void forward(Tape& t) override;
  void backward(Tape& t) override;
  int in, out;
};

// Nearest-code vector quantization with the straight-through estimator:
// out takes the selected code's value; out's adjoint flows to z_pre
// unchanged. When apply_vq_loss is set the node also owns the
// codebook + commitment terms (weight 1, beta inside) and injects their
// gradients during backward.
struct VectorQuantize : Tape::Node {
  VectorQuantize(int z_pre, int codebook, int out, std::size_t batch,
                 std::size_t d_z, std::size_t k, double beta,
                 bool apply_vq_loss);
  void forward(Tape& t) override;
  void backward(Tape& t) override;
  int z_pre, codebook, out;
  std::size_t batch, d_z, k;
  double beta;
  bool apply_vq_loss;
  std::vector<std::uint32_t> indices;
  double codebook_loss = 0.0, commitment_loss = 0.0;
  double vq_loss() const { return codebook_loss + beta * commitment_loss; }
};

// Mean squared error over all entries of pred vs a target buffer owned by
// the caller; contributes weight * dL/dpred in backward.
struct MseLoss : Tape::Node {
  MseLoss(int pred, std::size_t size, double weight);
  void forward(Tape& t) override;
  void backward(Tape& t) override;
  void set_weight(double w) { weight = w; }
  int pred;
  std::size_t size;
  double weight;
  std::vector<float> target;
  double value = 0.0;
};

// || onehot(a) - W z ||^2 averaged over the masked (labeled) rows.
// Skips cleanly when no row in the batch is labeled.
struct RobustHead : Tape::Node {
  RobustHead(int z, int w, std::size_t batch, std::size_t d_z, std::size_t d_y,
             double weight);
  void forward(Tape& t) override;
  void backward(Tape& t) override;
  int z, w;
  std::size_t batch, d_z, d_y;
  double weight;
  std::vector<float> onehot;        // batch x d_y
  std::vector<std::uint8_t> mask;   // batch
  double value = 0.0;
  std::size_t labeled_in_batch = 0;
};

}  // namespace exolam
