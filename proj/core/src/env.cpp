#include "exolam/env.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace exolam {

void LinearEnvConfig::validate() const {
  if (d_s == 0 || d_a == 0 || d_o == 0)
    throw std::invalid_argument("LinearEnvConfig: zero dimension");
  if (d_a != d_s)
    throw std::invalid_argument(
        "LinearEnvConfig: d_a must equal d_s (s' = s + a), got d_a=" +
        std::to_string(d_a) + " d_s=" + std::to_string(d_s));
  if (n_xi == 0)
    throw std::invalid_argument("LinearEnvConfig: n_xi must be >= 1");
  if (p_switch < 0.0 || p_switch > 1.0)
    throw std::invalid_argument("LinearEnvConfig: p_switch out of [0,1]");
  if (p_switch > 0.0 && n_xi == 1)
    throw std::invalid_argument(
        "LinearEnvConfig: p_switch > 0 with n_xi = 1: no other exogenous "
        "state to switch to");
  if (alpha < 0.0) throw std::invalid_argument("LinearEnvConfig: alpha < 0");
  if (n_traj == 0 || traj_len < 2)
    throw std::invalid_argument(
        "LinearEnvConfig: need n_traj >= 1 and traj_len >= 2");
}

const Matrix& EmissionSet::H(std::size_t xi) const {
  if (xi >= cached_H.size())
    throw std::out_of_range("EmissionSet::H: xi " + std::to_string(xi) +
                            " out of range [0, " +
                            std::to_string(cached_H.size()) + ")");
  return cached_H[xi];
}

void EmissionSet::finalize() {
  cached_H.clear();
  cached_H.reserve(R.size());
  for (const auto& r : R) {
    Matrix h = H0;
    add_scaled(h, alpha, r);
    cached_H.push_back(std::move(h));
  }
}

EmissionSet build_emissions(const LinearEnvConfig& cfg, RngStream& rng) {
  cfg.validate();
  EmissionSet em;
  em.alpha = cfg.alpha;
  const double stddev = 1.0 / std::sqrt(static_cast<double>(cfg.d_s));
  em.H0 = Matrix::gaussian(cfg.d_o, cfg.d_s, rng, stddev);
  em.R.reserve(cfg.n_xi);
  for (std::size_t i = 0; i < cfg.n_xi; ++i)
    em.R.push_back(Matrix::gaussian(cfg.d_o, cfg.d_s, rng, stddev));
  em.finalize();
  return em;
}

TransitionBatch::TransitionBatch(std::size_t n, std::size_t d_s,
                                 std::size_t d_a, std::size_t d_o,
                                 std::shared_ptr<const EmissionSet> em)
    : n_(n),
      d_s_(d_s),
      d_a_(d_a),
      d_o_(d_o),
      s_(n * d_s),
      a_(n * d_a),
      s_next_(n * d_s),
      em_(std::move(em)) {
  xi.resize(n);
  xi_next.resize(n);
  xi_tilde.resize(n);
  xi_tilde_next.resize(n);
}

void TransitionBatch::o(std::size_t i, double* out) const {
  matvec(em_->H(xi[i]), s(i), out);
}

void TransitionBatch::o_next(std::size_t i, double* out) const {
  matvec(em_->H(xi_next[i]), s_next(i), out);
}

void TransitionBatch::o_tilde(std::size_t i, double* out) const {
  matvec(em_->H(xi_tilde[i]), s(i), out);
}

void TransitionBatch::o_tilde_next(std::size_t i, double* out) const {
  matvec(em_->H(xi_tilde_next[i]), s_next(i), out);
}

void TransitionBatch::o_next_current_xi(std::size_t i, double* out) const {
  matvec(em_->H(xi[i]), s_next(i), out);
}

void TransitionBatch::q(std::size_t i, double* out) const {
  matvec(em_->H(xi[i]), a(i), out);
}

void TransitionBatch::eps(std::size_t i, double* out) const {
  std::vector<double> tmp(d_o_);
  matvec(em_->H(xi_next[i]), s_next(i), out);
  matvec(em_->H(xi[i]), s_next(i), tmp.data());
  for (std::size_t k = 0; k < d_o_; ++k) out[k] -= tmp[k];
}

void TransitionBatch::q_tilde(std::size_t i, double* out) const {
  matvec(em_->H(xi_tilde[i]), a(i), out);
}

void TransitionBatch::eps_tilde(std::size_t i, double* out) const {
  std::vector<double> tmp(d_o_);
  matvec(em_->H(xi_tilde_next[i]), s_next(i), out);
  matvec(em_->H(xi_tilde[i]), s_next(i), tmp.data());
  for (std::size_t k = 0; k < d_o_; ++k) out[k] -= tmp[k];
}

Matrix TransitionBatch::u_rows() const {
  Matrix u(n_, d_o_);
  std::vector<double> a(d_o_), b(d_o_);
  for (std::size_t i = 0; i < n_; ++i) {
    o_next(i, a.data());
    o(i, b.data());
    for (std::size_t k = 0; k < d_o_; ++k) u(i, k) = a[k] - b[k];
  }
  return u;
}

Matrix TransitionBatch::u_tilde_rows() const {
  Matrix u(n_, d_o_);
  std::vector<double> a(d_o_), b(d_o_);
  for (std::size_t i = 0; i < n_; ++i) {
    o_tilde_next(i, a.data());
    o_tilde(i, b.data());
    for (std::size_t k = 0; k < d_o_; ++k) u(i, k) = a[k] - b[k];
  }
  return u;
}

Matrix TransitionBatch::action_rows() const {
  Matrix m(n_, d_a_);
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t k = 0; k < d_a_; ++k) m(i, k) = a(i)[k];
  return m;
}

Matrix TransitionBatch::q_rows() const {
  Matrix m(n_, d_o_);
  std::vector<double> tmp(d_o_);
  for (std::size_t i = 0; i < n_; ++i) {
    q(i, tmp.data());
    for (std::size_t k = 0; k < d_o_; ++k) m(i, k) = tmp[k];
  }
  return m;
}

namespace {

// Next state of the switching kernel: keep xi with prob 1 - p, else move
// uniformly to one of the other n_xi - 1 states.
std::int64_t step_kernel(std::int64_t cur, std::size_t n_xi, double p_switch,
                         RngStream& rng) {
  if (n_xi == 1) return cur;
  if (rng.next_unit() >= p_switch) return cur;
  std::uint64_t r = rng.next_below(n_xi - 1);
  return static_cast<std::int64_t>(r >= static_cast<std::uint64_t>(cur) ? r + 1
                                                                        : r);
}

// Uniform over [0, n_xi) \ {banned}.
std::int64_t draw_avoiding(std::size_t n_xi, std::int64_t banned,
                           RngStream& rng) {
  std::uint64_t r = rng.next_below(n_xi - 1);
  return static_cast<std::int64_t>(
      r >= static_cast<std::uint64_t>(banned) ? r + 1 : r);
}

// Paired chain update: follows the same switching law but is kept off the
// main chain's current state. With n_xi == 2 the complement state is forced.
std::int64_t step_paired(std::int64_t cur_tilde, std::int64_t main_next,
                         std::size_t n_xi, double p_switch, RngStream& rng) {
  if (n_xi == 1) return main_next;  // degenerate: pairs coincide
  if (n_xi == 2) return 1 - main_next;
  const bool switch_now = rng.next_unit() < p_switch;
  if (!switch_now) {
    if (cur_tilde != main_next) return cur_tilde;
    return draw_avoiding(n_xi, main_next, rng);  // collision: forced move
  }
  // Uniform over states excluding both the current paired state and the
  // main chain's next state.
  std::int64_t lo = std::min(cur_tilde, main_next);
  std::int64_t hi = std::max(cur_tilde, main_next);
  if (lo == hi) return draw_avoiding(n_xi, main_next, rng);
  std::uint64_t r = rng.next_below(n_xi - 2);
  std::int64_t v = static_cast<std::int64_t>(r);
  if (v >= lo) ++v;
  if (v >= hi) ++v;
  return v;
}

}  // namespace

TransitionBatch generate(const LinearEnvConfig& cfg,
                         std::shared_ptr<const EmissionSet> em,
                         RngStream& rng) {
  cfg.validate();
  if (!em || em->n_xi() != cfg.n_xi)
    throw std::invalid_argument("generate: emission set inconsistent with config");

  const std::size_t steps = cfg.traj_len - 1;
  TransitionBatch batch(cfg.rows(), cfg.d_s, cfg.d_a, cfg.d_o, em);
  batch.set_has_pairs(cfg.n_xi > 1);

  std::vector<double> s(cfg.d_s), s_next(cfg.d_s);
  std::size_t row = 0;
  for (std::size_t traj = 0; traj < cfg.n_traj; ++traj) {
    for (auto& v : s) v = rng.next_gaussian();
    std::int64_t xi = static_cast<std::int64_t>(rng.next_below(cfg.n_xi));
    std::int64_t xi_tilde =
        cfg.n_xi > 1 ? draw_avoiding(cfg.n_xi, xi, rng) : xi;

    for (std::size_t t = 0; t < steps; ++t, ++row) {
      double* arow = batch.a(row);
      for (std::size_t k = 0; k < cfg.d_a; ++k) arow[k] = rng.next_gaussian();
      for (std::size_t k = 0; k < cfg.d_s; ++k)
        s_next[k] = s[k] + arow[k];

      const std::int64_t xi_next =
          step_kernel(xi, cfg.n_xi, cfg.p_switch, rng);
      const std::int64_t xi_tilde_next =
          step_paired(xi_tilde, xi_next, cfg.n_xi, cfg.p_switch, rng);

      std::copy(s.begin(), s.end(), batch.s(row));
      std::copy(s_next.begin(), s_next.end(), batch.s_next(row));
      batch.xi[row] = xi;
      batch.xi_next[row] = xi_next;
      batch.xi_tilde[row] = xi_tilde;
      batch.xi_tilde_next[row] = xi_tilde_next;

      s = s_next;
      xi = xi_next;
      xi_tilde = xi_tilde_next;
    }
  }
  return batch;
}

std::vector<double> render(const double* s, std::size_t d_s, std::size_t xi,
                           const EmissionSet& em) {
  const Matrix& h = em.H(xi);
  if (h.cols() != d_s)
    throw std::invalid_argument("render: state dim " + std::to_string(d_s) +
                                " vs emission " + shape_str(h));
  std::vector<double> out(h.rows());
  matvec(h, s, out.data());
  return out;
}

NoiseEnergyReport noise_energy_report(const TransitionBatch& batch) {
  if (batch.size() == 0)
    throw std::invalid_argument("noise_energy_report: empty batch");
  const std::size_t n = batch.size(), d_o = batch.d_o();
  const EmissionSet& em = batch.emissions();
  const std::size_t n_xi = em.n_xi();

  NoiseEnergyReport rep;
  rep.n_rows = n;

  double sum_sq = 0.0;
  std::vector<double> eps(d_o);
  std::vector<std::vector<double>> renders(n_xi,
                                           std::vector<double>(d_o));
  for (std::size_t i = 0; i < n; ++i) {
    batch.eps(i, eps.data());
    double e = 0.0;
    for (double v : eps) e += v * v;
    sum_sq += e;
    if (batch.xi_next[i] != batch.xi[i]) ++rep.n_switch;

    // Exhaustive xi-pair scan at this row's s'.
    for (std::size_t x = 0; x < n_xi; ++x)
      matvec(em.H(x), batch.s_next(i), renders[x].data());
    for (std::size_t a = 0; a + 1 < n_xi; ++a)
      for (std::size_t b = a + 1; b < n_xi; ++b) {
        double d = 0.0;
        for (std::size_t k = 0; k < d_o; ++k) {
          const double t = renders[b][k] - renders[a][k];
          d += t * t;
        }
        rep.delta_h_hat = std::max(rep.delta_h_hat, d);
      }
  }

  rep.lhs = sum_sq / static_cast<double>(n);
  rep.p_hat = static_cast<double>(rep.n_switch) / static_cast<double>(n);
  rep.cond = rep.n_switch > 0 ? sum_sq / static_cast<double>(rep.n_switch)
                              : 0.0;
  return rep;
}

}  // namespace exolam
