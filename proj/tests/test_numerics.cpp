#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "exolam/adam.hpp"
#include "exolam/decomp.hpp"
#include "exolam/linalg.hpp"
#include "exolam/matrix.hpp"
#include "exolam/rng.hpp"

using namespace exolam;

namespace {

// Straight-line reference multiply, independent of the blocked kernels.
Matrix naive_mul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

double orthonormality_defect(const Matrix& u) {
  Matrix g = matmul_tn(u, u);
  for (std::size_t i = 0; i < g.rows(); ++i) g(i, i) -= 1.0;
  return max_abs(g);
}

}  // namespace

TEST_CASE("matrix basics and kernel agreement") {
  CHECK_THROWS(Matrix(2, 3, {1.0, 2.0}));

  RngStream rng(3, 0);
  Matrix a = Matrix::gaussian(17, 9, rng);
  Matrix b = Matrix::gaussian(9, 13, rng);
  CHECK(max_abs_diff(matmul(a, b), naive_mul(a, b)) < 1e-12);

  Matrix bt = transpose(b);
  CHECK(max_abs_diff(matmul_nt(a, bt), naive_mul(a, b)) < 1e-12);
  Matrix at = transpose(a);
  CHECK(max_abs_diff(matmul_tn(at, b), naive_mul(a, b)) < 1e-12);
}

TEST_CASE("rng determinism and stream independence") {
  RngStream r1(42, 7), r2(42, 7), r3(42, 8);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 1000; ++i) {
    const auto a = r1.next_u64(), b = r2.next_u64(), c = r3.next_u64();
    all_equal = all_equal && a == b;
    any_diff = any_diff || a != c;
  }
  CHECK(all_equal);
  CHECK(any_diff);

  // Gaussian sequence is bit-identical too.
  RngStream g1(9, 1), g2(9, 1);
  for (int i = 0; i < 100; ++i) CHECK(g1.next_gaussian() == g2.next_gaussian());

  // Restore reproduces the continuation exactly.
  RngStream s(5, 0);
  for (int i = 0; i < 13; ++i) s.next_gaussian();
  const auto st = s.state();
  std::vector<double> ahead;
  for (int i = 0; i < 10; ++i) ahead.push_back(s.next_gaussian());
  RngStream t(5, 0);
  t.restore(st);
  for (int i = 0; i < 10; ++i) CHECK(t.next_gaussian() == ahead[i]);
}

TEST_CASE("rng gaussian moments") {
  RngStream rng(11, 0);
  const int n = 200000;
  double m1 = 0.0, m2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.next_gaussian();
    m1 += x;
    m2 += x * x;
  }
  m1 /= n;
  m2 /= n;
  CHECK(std::fabs(m1) < 0.01);
  CHECK(std::fabs(m2 - 1.0) < 0.02);
}

TEST_CASE("svd identity and diagonal") {
  SvdResult r = svd(Matrix::identity(3));
  for (double s : r.S) CHECK(s == doctest::Approx(1.0).epsilon(1e-12));

  Matrix d(3, 3);
  d(0, 0) = 3.0;
  d(1, 1) = 2.0;
  d(2, 2) = 1.0;
  SvdResult rd = svd(d);
  CHECK(rd.S[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(rd.S[1] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(rd.S[2] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(max_abs_diff(rd.U, Matrix::identity(3)) < 1e-12);
  CHECK(max_abs_diff(rd.V, Matrix::identity(3)) < 1e-12);
}

TEST_CASE("svd reconstruction and orthonormality") {
  RngStream rng(7, 0);
  for (std::size_t n : {std::size_t{8}, std::size_t{33}, std::size_t{128},
                        std::size_t{256}}) {
    Matrix m = Matrix::gaussian(n, n, rng);
    SvdResult r = svd(m);
    Matrix rec = svd_reconstruct(r);
    CHECK(frob_norm(rec - m) / frob_norm(m) < 1e-9);
    CHECK(orthonormality_defect(r.U) < 1e-10);
    CHECK(orthonormality_defect(r.V) < 1e-10);
    for (std::size_t k = 0; k + 1 < r.S.size(); ++k)
      CHECK(r.S[k] >= r.S[k + 1]);
  }
  // Rectangular both ways.
  Matrix wide = Matrix::gaussian(6, 15, rng);
  SvdResult rw = svd(wide);
  CHECK(frob_norm(svd_reconstruct(rw) - wide) / frob_norm(wide) < 1e-9);
  Matrix tall = Matrix::gaussian(15, 6, rng);
  SvdResult rt = svd(tall);
  CHECK(frob_norm(svd_reconstruct(rt) - tall) / frob_norm(tall) < 1e-9);
}

TEST_CASE("svd sign convention is deterministic") {
  RngStream rng(21, 0);
  Matrix m = Matrix::gaussian(12, 12, rng);
  SvdResult a = svd(m), b = svd(m);
  CHECK(a.U == b.U);
  CHECK(a.V == b.V);
  for (std::size_t k = 0; k < a.U.cols(); ++k) {
    double best = 0.0, val = 0.0;
    for (std::size_t i = 0; i < a.U.rows(); ++i)
      if (std::fabs(a.U(i, k)) > best) {
        best = std::fabs(a.U(i, k));
        val = a.U(i, k);
      }
    CHECK(val > 0.0);
  }
}

TEST_CASE("svd of zero matrix completes an orthonormal basis") {
  Matrix z(5, 3);
  SvdResult r = svd(z);
  for (double s : r.S) CHECK(s == 0.0);
  CHECK(orthonormality_defect(r.U) < 1e-12);
}

TEST_CASE("ridge identity cases") {
  Matrix i4 = Matrix::identity(4);
  CHECK(max_abs_diff(ridge_solve(i4, i4, 0.0), i4) < 1e-12);

  RngStream rng(5, 0);
  Matrix y = Matrix::gaussian(4, 2, rng);
  Matrix half = ridge_solve(i4, y, 1.0);
  CHECK(max_abs_diff(half, 0.5 * y) < 1e-12);
}

TEST_CASE("ridge matches the svd-route solution") {
  RngStream rng(13, 0);
  Matrix x = Matrix::gaussian(200, 8, rng);
  Matrix y = Matrix::gaussian(200, 8, rng);
  const double lambda = 1e-6;
  Matrix b = ridge_solve(x, y, lambda);

  // Independent route: B = V (S^2 + lambda)^-1 S U^T Y.
  SvdResult sv = svd(x);
  Matrix uty = matmul_tn(sv.U, y);
  for (std::size_t k = 0; k < sv.S.size(); ++k) {
    const double f = sv.S[k] / (sv.S[k] * sv.S[k] + lambda);
    for (std::size_t j = 0; j < uty.cols(); ++j) uty(k, j) *= f;
  }
  Matrix b_svd = matmul(sv.V, uty);
  CHECK(max_abs_diff(b, b_svd) < 1e-8);

  // Residual orthogonality: X^T (Y - X B) = lambda B.
  Matrix resid = y - matmul(x, b);
  Matrix lhs = matmul_tn(x, resid);
  Matrix rhs = lambda * b;
  CHECK(max_abs_diff(lhs, rhs) < 1e-8);
}

TEST_CASE("ridge rank deficiency raises at lambda 0") {
  Matrix x(3, 2);
  x(0, 0) = 1.0;
  x(1, 0) = 2.0;
  x(2, 0) = 3.0;  // second column all zero
  Matrix y(3, 1);
  y(0, 0) = 1.0;
  CHECK_THROWS_WITH_AS(ridge_solve(x, y, 0.0),
                       doctest::Contains("rank-deficient"), std::runtime_error);
}

TEST_CASE("adam zero gradient is the identity on params") {
  RngStream rng(2, 0);
  std::vector<Matrix> params{Matrix::gaussian(3, 4, rng),
                             Matrix::gaussian(2, 2, rng)};
  std::vector<Matrix> zero{Matrix(3, 4), Matrix(2, 2)};
  const std::vector<Matrix> before = params;
  AdamState adam({0.1, 0.9, 0.999, 1e-8, 0.0}, params);
  adam.step(params, zero);
  CHECK(adam.steps() == 1);
  CHECK(params[0] == before[0]);
  CHECK(params[1] == before[1]);
}

TEST_CASE("adam descends on x^2 and solves a 2-d quadratic") {
  std::vector<Matrix> x{Matrix(1, 1)};
  x[0](0, 0) = 1.0;
  AdamState adam({0.1, 0.9, 0.999, 1e-8, 0.0}, x);
  std::vector<Matrix> g{Matrix(1, 1)};
  g[0](0, 0) = 2.0 * x[0](0, 0);
  adam.step(x, g);
  CHECK(x[0](0, 0) < 1.0);

  // f(v) = 2 v0^2 + 0.5 v1^2 from (3, -2): 200 steps, loss drops 1e4x.
  std::vector<Matrix> v{Matrix(1, 2)};
  v[0](0, 0) = 3.0;
  v[0](0, 1) = -2.0;
  auto loss = [&]() {
    return 2.0 * v[0](0, 0) * v[0](0, 0) + 0.5 * v[0](0, 1) * v[0](0, 1);
  };
  const double initial = loss();
  AdamState opt({0.2, 0.9, 0.999, 1e-8, 0.0}, v);
  std::vector<Matrix> gv{Matrix(1, 2)};
  for (int i = 0; i < 200; ++i) {
    gv[0](0, 0) = 4.0 * v[0](0, 0);
    gv[0](0, 1) = 1.0 * v[0](0, 1);
    opt.step(v, gv);
  }
  CHECK(loss() <= 1e-4 * initial);
}

TEST_CASE("adam rejects shape mismatch naming the parameter") {
  std::vector<Matrix> params{Matrix(2, 2), Matrix(3, 3)};
  AdamState adam({0.1, 0.9, 0.999, 1e-8, 0.0}, params);
  std::vector<Matrix> bad{Matrix(2, 2), Matrix(3, 2)};
  CHECK_THROWS_WITH_AS(adam.step(params, bad), doctest::Contains("parameter 1"),
                       std::invalid_argument);
}

TEST_CASE("adam global clip equals pre-scaling the gradient") {
  std::vector<Matrix> p1{Matrix(1, 2)}, p2{Matrix(1, 2)};
  p1[0](0, 0) = p2[0](0, 0) = 0.7;
  p1[0](0, 1) = p2[0](0, 1) = -0.2;
  std::vector<Matrix> g{Matrix(1, 2)};
  g[0](0, 0) = 30.0;
  g[0](0, 1) = 40.0;  // norm 50, clip 5 scales by 0.1
  AdamState clipped({0.01, 0.9, 0.999, 1e-8, 5.0}, p1);
  clipped.step(p1, g);
  std::vector<Matrix> gs{0.1 * g[0]};
  AdamState unclipped({0.01, 0.9, 0.999, 1e-8, 0.0}, p2);
  unclipped.step(p2, gs);
  CHECK(p1[0] == p2[0]);

  // Below the threshold the clip must not engage.
  std::vector<Matrix> small{0.01 * g[0]};
  AdamState c2({0.01, 0.9, 0.999, 1e-8, 5.0}, p1);
  AdamState u2({0.01, 0.9, 0.999, 1e-8, 0.0}, p2);
  c2.step(p1, small);
  u2.step(p2, small);
  CHECK(p1[0] == p2[0]);
}

TEST_CASE("finite differences on analytic cases") {
  LossFn sq = [](const std::vector<Matrix>& p) {
    double s = 0.0;
    for (const auto& m : p)
      for (std::size_t i = 0; i < m.size(); ++i)
        s += m.data()[i] * m.data()[i];
    return s;
  };
  std::vector<Matrix> x{Matrix(1, 2)};
  x[0](0, 0) = 1.0;
  x[0](0, 1) = 2.0;
  auto g = finite_diff_grad(sq, x, 1e-5);
  CHECK(g[0](0, 0) == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(g[0](0, 1) == doctest::Approx(4.0).epsilon(1e-6));

  LossFn constant = [](const std::vector<Matrix>&) { return 3.5; };
  auto gz = finite_diff_grad(constant, x, 1e-5);
  CHECK(max_abs(gz[0]) == 0.0);
}

TEST_CASE("whiten recovers identity and scale") {
  RngStream rng(17, 0);
  Matrix white = Matrix::gaussian(20000, 3, rng);
  WhitenResult w = whiten(white);
  CHECK(max_abs_diff(w.transform, Matrix::identity(3)) < 0.05);

  Matrix scaled = 3.0 * white;
  WhitenResult ws = whiten(scaled);
  Matrix third = (1.0 / 3.0) * Matrix::identity(3);
  CHECK(max_abs_diff(ws.transform, third) < 0.02);
}

TEST_CASE("whiten decorrelates a correlated gaussian") {
  RngStream rng(19, 0);
  const std::size_t n = 10000;
  Matrix samples(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.next_gaussian();
    const double y = rng.next_gaussian();
    samples(i, 0) = 2.0 * x + 0.5;
    samples(i, 1) = 1.5 * x + 0.8 * y - 1.0;
  }
  WhitenResult w = whiten(samples);
  Matrix cov = sample_covariance(w.whitened);
  CHECK(max_abs_diff(cov, Matrix::identity(2)) < 0.05);
  double m0 = 0.0, m1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    m0 += w.whitened(i, 0);
    m1 += w.whitened(i, 1);
  }
  CHECK(std::fabs(m0 / n) < 1e-10);
  CHECK(std::fabs(m1 / n) < 1e-10);
}

TEST_CASE("eigh on a known symmetric matrix") {
  Matrix m(2, 2);
  m(0, 0) = 2.0;
  m(0, 1) = 1.0;
  m(1, 0) = 1.0;
  m(1, 1) = 2.0;
  EighResult e = eigh_sym(m);
  CHECK(e.eigenvalues[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(e.eigenvalues[1] == doctest::Approx(1.0).epsilon(1e-12));
}
