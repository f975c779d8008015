#include "exolam/linalg.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "exolam/decomp.hpp"

namespace exolam {

Matrix ridge_solve(const Matrix& x, const Matrix& y, double lambda_ridge) {
  if (x.rows() != y.rows())
    throw std::invalid_argument("ridge_solve: X has " +
                                std::to_string(x.rows()) + " rows, Y has " +
                                std::to_string(y.rows()));
  if (x.rows() < 1) throw std::invalid_argument("ridge_solve: empty system");
  if (lambda_ridge < 0.0)
    throw std::invalid_argument("ridge_solve: negative lambda");

  Matrix g = matmul_tn(x, x);
  for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) += lambda_ridge;
  Matrix rhs = matmul_tn(x, y);
  return cholesky_solve(g, rhs);
}

Matrix sample_covariance(const Matrix& samples) {
  const std::size_t n = samples.rows(), d = samples.cols();
  if (n < 2) throw std::invalid_argument("sample_covariance: need n >= 2");
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += samples(i, j);
  for (auto& m : mean) m /= static_cast<double>(n);

  Matrix cov(d, d);
  std::vector<double> row(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) row[j] = samples(i, j) - mean[j];
    for (std::size_t a = 0; a < d; ++a) {
      const double ra = row[a];
      for (std::size_t b = a; b < d; ++b) cov(a, b) += ra * row[b];
    }
  }
  const double norm = 1.0 / static_cast<double>(n - 1);
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a; b < d; ++b) {
      cov(a, b) *= norm;
      cov(b, a) = cov(a, b);
    }
  return cov;
}

WhitenResult whiten(const Matrix& samples, double eps_reg) {
  const std::size_t n = samples.rows(), d = samples.cols();
  if (eps_reg <= 0.0) throw std::invalid_argument("whiten: eps_reg <= 0");
  WhitenResult r;
  r.mean.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) r.mean[j] += samples(i, j);
  for (auto& m : r.mean) m /= static_cast<double>(n);

  Matrix cov = sample_covariance(samples);
  EighResult eig = eigh_sym(cov);
  for (double lam : eig.eigenvalues)
    if (lam < -1e-10)
      throw std::runtime_error("whiten: covariance eigenvalue " +
                               std::to_string(lam) + " below -1e-10");

  // transform = Q diag(1/sqrt(lam + eps)) Q^T
  const std::size_t dd = d;
  Matrix scaled = eig.eigenvectors;
  for (std::size_t k = 0; k < dd; ++k) {
    const double inv = 1.0 / std::sqrt(std::max(eig.eigenvalues[k], 0.0) + eps_reg);
    for (std::size_t i = 0; i < dd; ++i) scaled(i, k) *= inv;
  }
  r.transform = matmul_nt(scaled, eig.eigenvectors);

  r.whitened = Matrix(n, d);
  std::vector<double> centered(d), out(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) centered[j] = samples(i, j) - r.mean[j];
    matvec(r.transform, centered.data(), out.data());
    for (std::size_t j = 0; j < d; ++j) r.whitened(i, j) = out[j];
  }
  return r;
}

Matrix apply_whiten(const WhitenResult& w, const Matrix& samples) {
  const std::size_t n = samples.rows(), d = samples.cols();
  if (d != w.mean.size())
    throw std::invalid_argument("apply_whiten: dimension mismatch");
  Matrix out(n, d);
  std::vector<double> centered(d), y(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) centered[j] = samples(i, j) - w.mean[j];
    matvec(w.transform, centered.data(), y.data());
    for (std::size_t j = 0; j < d; ++j) out(i, j) = y[j];
  }
  return out;
}

std::vector<Matrix> finite_diff_grad(const LossFn& loss,
                                     std::vector<Matrix> params, double h) {
  if (h <= 0.0) throw std::invalid_argument("finite_diff_grad: h <= 0");
  std::vector<Matrix> grads;
  grads.reserve(params.size());
  for (const auto& p : params) grads.emplace_back(p.rows(), p.cols());

  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t i = 0; i < params[t].size(); ++i) {
      const double orig = params[t].data()[i];
      params[t].data()[i] = orig + h;
      const double lp = loss(params);
      params[t].data()[i] = orig - h;
      const double lm = loss(params);
      params[t].data()[i] = orig;
      grads[t].data()[i] = (lp - lm) / (2.0 * h);
    }
  }
  return grads;
}

double max_rel_error(const std::vector<Matrix>& a, const std::vector<Matrix>& b,
                     double floor) {
  if (a.size() != b.size())
    throw std::invalid_argument("max_rel_error: list sizes differ");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max(frob_norm(b[i]), floor);
    Matrix d = a[i] - b[i];
    worst = std::max(worst, frob_norm(d) / denom);
  }
  return worst;
}

}  // namespace exolam
