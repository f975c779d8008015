#include "exolam/decomp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace exolam {

namespace {

constexpr int kMaxSweeps = 10000;
constexpr double kConvTol = 1e-12;  // on normalized off-diagonal mass

void require_finite(const Matrix& m, const char* what) {
  if (!m.is_finite())
    throw std::invalid_argument(std::string(what) + ": non-finite input " +
                                shape_str(m));
}

// Orthonormal sign fix: flip column k of u (and v) so the
// largest-magnitude entry of u's column is positive.
void fix_signs(Matrix& u, Matrix& v) {
  for (std::size_t k = 0; k < u.cols(); ++k) {
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < u.rows(); ++i) {
      const double a = std::fabs(u(i, k));
      if (a > best) {
        best = a;
        arg = i;
      }
    }
    if (u(arg, k) < 0.0) {
      for (std::size_t i = 0; i < u.rows(); ++i) u(i, k) = -u(i, k);
      for (std::size_t i = 0; i < v.rows(); ++i) v(i, k) = -v(i, k);
    }
  }
}

// Fill near-zero columns of u with canonical basis vectors orthogonalized
// against the existing columns, so U keeps orthonormal columns even for
// rank-deficient input.
void complete_column(Matrix& u, std::size_t k) {
  const std::size_t m = u.rows();
  for (std::size_t cand = 0; cand < m; ++cand) {
    std::vector<double> e(m, 0.0);
    e[cand] = 1.0;
    for (std::size_t j = 0; j < u.cols(); ++j) {
      if (j == k) continue;
      double dot = 0.0;
      for (std::size_t i = 0; i < m; ++i) dot += e[i] * u(i, j);
      for (std::size_t i = 0; i < m; ++i) e[i] -= dot * u(i, j);
    }
    double nrm = 0.0;
    for (double x : e) nrm += x * x;
    nrm = std::sqrt(nrm);
    if (nrm > 1e-6) {
      for (std::size_t i = 0; i < m; ++i) u(i, k) = e[i] / nrm;
      return;
    }
  }
  throw std::runtime_error("svd: failed to complete orthonormal basis");
}

SvdResult svd_tall(const Matrix& input) {
  const std::size_t m = input.rows(), n = input.cols();
  Matrix a = input;
  Matrix v = Matrix::identity(n);

  bool converged = false;
  for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
    double max_off = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double app = 0.0, aqq = 0.0, apq = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double x = a(i, p), y = a(i, q);
          app += x * x;
          aqq += y * y;
          apq += x * y;
        }
        const double denom = std::sqrt(app * aqq);
        if (denom <= 0.0) continue;
        const double off = std::fabs(apq) / denom;
        max_off = std::max(max_off, off);
        if (off <= kConvTol) continue;

        const double zeta = (aqq - app) / (2.0 * apq);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double x = a(i, p), y = a(i, q);
          a(i, p) = c * x - s * y;
          a(i, q) = s * x + c * y;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double x = v(i, p), y = v(i, q);
          v(i, p) = c * x - s * y;
          v(i, q) = s * x + c * y;
        }
      }
    }
    converged = max_off <= kConvTol;
  }
  if (!converged)
    throw std::runtime_error("svd: no convergence after " +
                             std::to_string(kMaxSweeps) + " sweeps on " +
                             shape_str(input));

  std::vector<double> s(n);
  for (std::size_t j = 0; j < n; ++j) {
    double nrm = 0.0;
    for (std::size_t i = 0; i < m; ++i) nrm += a(i, j) * a(i, j);
    s[j] = std::sqrt(nrm);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return s[i] > s[j]; });

  SvdResult r;
  r.U = Matrix(m, n);
  r.V = Matrix(n, n);
  r.S.resize(n);
  const double smax = s.empty() ? 0.0 : s[order[0]];
  const double tiny = std::max(smax, 1.0) * 1e-300;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    r.S[k] = s[j];
    for (std::size_t i = 0; i < n; ++i) r.V(i, k) = v(i, j);
    if (s[j] > tiny) {
      for (std::size_t i = 0; i < m; ++i) r.U(i, k) = a(i, j) / s[j];
    }
  }
  for (std::size_t k = 0; k < n; ++k)
    if (r.S[k] <= tiny) complete_column(r.U, k);

  fix_signs(r.U, r.V);
  return r;
}

}  // namespace

SvdResult svd(const Matrix& m) {
  require_finite(m, "svd");
  if (m.rows() == 0 || m.cols() == 0)
    throw std::invalid_argument("svd: empty matrix " + shape_str(m));
  if (m.rows() >= m.cols()) return svd_tall(m);
  SvdResult t = svd_tall(transpose(m));
  SvdResult r;
  r.U = std::move(t.V);
  r.V = std::move(t.U);
  r.S = std::move(t.S);
  // The convention is anchored to the left factor, so re-apply it after
  // the swap.
  fix_signs(r.U, r.V);
  return r;
}

Matrix svd_reconstruct(const SvdResult& r) {
  Matrix us = r.U;
  for (std::size_t k = 0; k < us.cols(); ++k)
    for (std::size_t i = 0; i < us.rows(); ++i) us(i, k) *= r.S[k];
  return matmul_nt(us, r.V);
}

EighResult eigh_sym(const Matrix& m) {
  require_finite(m, "eigh_sym");
  if (m.rows() != m.cols())
    throw std::invalid_argument("eigh_sym: not square: " + shape_str(m));
  const std::size_t n = m.rows();
  Matrix a = m;
  Matrix q = Matrix::identity(n);

  bool converged = false;
  for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
    double max_off = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t i = p + 1; i < n; ++i) {
        const double scale =
            std::fabs(a(p, p)) + std::fabs(a(i, i)) + 1e-300;
        const double off = std::fabs(a(p, i)) / scale;
        max_off = std::max(max_off, off);
        if (off <= kConvTol) continue;

        const double theta = (a(i, i) - a(p, p)) / (2.0 * a(p, i));
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(1.0 + theta * theta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), aki = a(k, i);
          a(k, p) = c * akp - s * aki;
          a(k, i) = s * akp + c * aki;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aik = a(i, k);
          a(p, k) = c * apk - s * aik;
          a(i, k) = s * apk + c * aik;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double qkp = q(k, p), qki = q(k, i);
          q(k, p) = c * qkp - s * qki;
          q(k, i) = s * qkp + c * qki;
        }
      }
    }
    converged = max_off <= kConvTol;
  }
  if (!converged)
    throw std::runtime_error("eigh_sym: no convergence on " + shape_str(m));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return a(i, i) > a(j, j);
  });

  EighResult r;
  r.eigenvalues.resize(n);
  r.eigenvectors = Matrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    r.eigenvalues[k] = a(order[k], order[k]);
    for (std::size_t i = 0; i < n; ++i)
      r.eigenvectors(i, k) = q(i, order[k]);
  }
  Matrix dummy(n, n);
  fix_signs(r.eigenvectors, dummy);
  return r;
}

Matrix cholesky_solve(const Matrix& s, const Matrix& b) {
  if (s.rows() != s.cols())
    throw std::invalid_argument("cholesky_solve: not square: " + shape_str(s));
  if (b.rows() != s.rows())
    throw std::invalid_argument("cholesky_solve: rhs " + shape_str(b) +
                                " vs system " + shape_str(s));
  const std::size_t n = s.rows();
  Matrix l(n, n);
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    max_diag = std::max(max_diag, std::fabs(s(i, i)));
  const double tol = std::max(max_diag, 1.0) * 1e-13;

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double sum = s(i, j);
      for (std::size_t k = 0; k < j; ++k) sum -= l(i, k) * l(j, k);
      if (i == j) {
        if (sum <= tol)
          throw std::runtime_error(
              "cholesky_solve: rank-deficient system (pivot " +
              std::to_string(sum) + " at index " + std::to_string(i) + ")");
        l(i, i) = std::sqrt(sum);
      } else {
        l(i, j) = sum / l(j, j);
      }
    }
  }

  // Forward then backward substitution, column by column of b.
  Matrix x = b;
  for (std::size_t c = 0; c < b.cols(); ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double sum = x(i, c);
      for (std::size_t k = 0; k < i; ++k) sum -= l(i, k) * x(k, c);
      x(i, c) = sum / l(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double sum = x(ii, c);
      for (std::size_t k = ii + 1; k < n; ++k) sum -= l(k, ii) * x(k, c);
      x(ii, c) = sum / l(ii, ii);
    }
  }
  return x;
}

}  // namespace exolam
