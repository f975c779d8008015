#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "exolam/matrix.hpp"
#include "exolam/rng.hpp"

namespace exolam {

struct LinearEnvConfig {
  std::size_t d_s = 8;
  std::size_t d_a = 8;
  std::size_t d_o = 128;
  std::size_t n_xi = 8;
  double p_switch = 0.0;
  double alpha = 0.5;
  std::size_t n_traj = 8000;
  std::size_t traj_len = 16;  // traj_len - 1 transitions per trajectory
  std::uint64_t seed = 0;

  std::size_t rows() const { return n_traj * (traj_len - 1); }
  void validate() const;  // throws on inconsistent settings
};

// xi-indexed family of observation maps H_xi = H0 + alpha * R[xi].
struct EmissionSet {
  Matrix H0;
  std::vector<Matrix> R;
  double alpha = 0.0;

  std::size_t n_xi() const { return R.size(); }
  const Matrix& H(std::size_t xi) const;  // cached H0 + alpha*R[xi]

  std::vector<Matrix> cached_H;  // filled by build_emissions / finalize()
  void finalize();
};

// Transition rows (s, a, s', xi, xi') plus the synchronized paired
// exogenous stream (same s, a, s' under an independent chain with
// xi_tilde != xi wherever n_xi > 1). Observations and the derived
// (q, eps) fields are rendered exactly from the stored state and the
// emission set; nothing is cached, so rendering is bit-reproducible.
class TransitionBatch {
 public:
  TransitionBatch() = default;
  TransitionBatch(std::size_t n, std::size_t d_s, std::size_t d_a,
                  std::size_t d_o, std::shared_ptr<const EmissionSet> em);

  std::size_t size() const { return n_; }
  std::size_t d_s() const { return d_s_; }
  std::size_t d_a() const { return d_a_; }
  std::size_t d_o() const { return d_o_; }
  const EmissionSet& emissions() const { return *em_; }
  std::shared_ptr<const EmissionSet> emissions_ptr() const { return em_; }

  double* s(std::size_t i) { return s_.data() + i * d_s_; }
  double* a(std::size_t i) { return a_.data() + i * d_a_; }
  double* s_next(std::size_t i) { return s_next_.data() + i * d_s_; }
  const double* s(std::size_t i) const { return s_.data() + i * d_s_; }
  const double* a(std::size_t i) const { return a_.data() + i * d_a_; }
  const double* s_next(std::size_t i) const {
    return s_next_.data() + i * d_s_;
  }

  std::vector<std::int64_t> xi, xi_next, xi_tilde, xi_tilde_next;

  bool has_pairs() const { return has_pairs_; }
  void set_has_pairs(bool v) { has_pairs_ = v; }
  bool cross_pair(std::size_t i) const { return xi_tilde[i] != xi[i]; }

  // Exact renders into caller buffers of length d_o.
  void o(std::size_t i, double* out) const;        // H_{xi} s
  void o_next(std::size_t i, double* out) const;   // H_{xi'} s'
  void o_tilde(std::size_t i, double* out) const;  // H_{xi~} s
  void o_tilde_next(std::size_t i, double* out) const;
  // Counterfactual next observation under the *current* exogenous state.
  void o_next_current_xi(std::size_t i, double* out) const;  // H_{xi} s'
  void q(std::size_t i, double* out) const;        // H_{xi} a
  void eps(std::size_t i, double* out) const;      // (H_{xi'} - H_{xi}) s'
  void q_tilde(std::size_t i, double* out) const;
  void eps_tilde(std::size_t i, double* out) const;

  // n x d_o matrices of u = o' - o (and the paired u~), used by the
  // cross-exogenous analysis.
  Matrix u_rows() const;
  Matrix u_tilde_rows() const;
  Matrix action_rows() const;  // n x d_a
  Matrix q_rows() const;       // n x d_o

 private:
  std::size_t n_ = 0, d_s_ = 0, d_a_ = 0, d_o_ = 0;
  std::vector<double> s_, a_, s_next_;
  std::shared_ptr<const EmissionSet> em_;
  bool has_pairs_ = false;
};

// Draws H0 and each R_xi with i.i.d. N(0, 1/d_s) entries.
EmissionSet build_emissions(const LinearEnvConfig& cfg, RngStream& rng);

// Rolls out n_traj trajectories: s0 ~ N(0,I), a_t ~ N(0,I), s' = s + a,
// xi' switching with probability p_switch, and the paired chain kept off
// the main chain at every step.
TransitionBatch generate(const LinearEnvConfig& cfg,
                         std::shared_ptr<const EmissionSet> em,
                         RngStream& rng);

// o = H_xi s.
std::vector<double> render(const double* s, std::size_t d_s, std::size_t xi,
                           const EmissionSet& em);

struct NoiseEnergyReport {
  double lhs = 0.0;          // mean ||eps||^2 over all rows
  double p_hat = 0.0;        // fraction of rows with xi' != xi
  double cond = 0.0;         // mean ||eps||^2 over switching rows
  double delta_h_hat = 0.0;  // max over rows x xi-pairs of ||h(s',b)-h(s',a)||^2
  std::size_t n_rows = 0;
  std::size_t n_switch = 0;
};

// Empirical decomposition of the exogenous-noise energy and the
// sensitivity bound inputs; the xi-pair scan is exhaustive over the
// batch rows.
NoiseEnergyReport noise_energy_report(const TransitionBatch& batch);

}  // namespace exolam
