#pragma once

#include <cstdint>
#include <vector>

#include "exolam/matrix.hpp"

namespace exolam {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 0.0;  // 0 disables global gradient-norm clipping
};

// Standard Adam with bias correction. Moment accumulators mirror the
// parameter shapes; the step counter advances by exactly 1 per update.
class AdamState {
 public:
  AdamState() = default;
  AdamState(AdamConfig cfg, const std::vector<Matrix>& params);

  // In-place update. Clipping (if enabled) rescales the whole gradient
  // list before the moment updates.
  void step(std::vector<Matrix>& params, const std::vector<Matrix>& grads);

  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

  std::vector<Matrix>& m() { return m_; }
  std::vector<Matrix>& v() { return v_; }
  void restore(std::vector<Matrix> m, std::vector<Matrix> v, std::int64_t t);

 private:
  AdamConfig cfg_;
  std::vector<Matrix> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace exolam
