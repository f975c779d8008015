#include "exolam/adam.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace exolam {

AdamState::AdamState(AdamConfig cfg, const std::vector<Matrix>& params)
    : cfg_(cfg) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const auto& p : params) {
    m_.emplace_back(p.rows(), p.cols());
    v_.emplace_back(p.rows(), p.cols());
  }
}

void AdamState::step(std::vector<Matrix>& params,
                     const std::vector<Matrix>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw std::invalid_argument("AdamState::step: expected " +
                                std::to_string(m_.size()) + " tensors, got " +
                                std::to_string(params.size()) + " params / " +
                                std::to_string(grads.size()) + " grads");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].same_shape(m_[i]) || !grads[i].same_shape(m_[i]))
      throw std::invalid_argument(
          "AdamState::step: parameter " + std::to_string(i) + " is " +
          shape_str(params[i]) + ", gradient " + shape_str(grads[i]) +
          ", state " + shape_str(m_[i]));
  }

  double gscale = 1.0;
  if (cfg_.clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& g : grads) sq += frob_norm_sq(g);
    const double norm = std::sqrt(sq);
    if (norm > cfg_.clip_norm) gscale = cfg_.clip_norm / norm;
  }

  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* p = params[i].data();
    const double* g = grads[i].data();
    double* m = m_[i].data();
    double* v = v_[i].data();
    const std::size_t n = params[i].size();
    for (std::size_t j = 0; j < n; ++j) {
      const double gj = gscale * g[j];
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
      p[j] -= cfg_.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg_.eps);
    }
  }
}

void AdamState::restore(std::vector<Matrix> m, std::vector<Matrix> v,
                        std::int64_t t) {
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = t;
}

}  // namespace exolam
