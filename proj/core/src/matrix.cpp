#include "exolam/matrix.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "exolam/rng.hpp"

namespace exolam {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols)
    throw std::invalid_argument("Matrix: data length " +
                                std::to_string(data_.size()) +
                                " != " + std::to_string(rows) + "x" +
                                std::to_string(cols));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::gaussian(std::size_t rows, std::size_t cols, RngStream& rng,
                        double stddev) {
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i)
    m.data()[i] = stddev * rng.next_gaussian();
  return m;
}

void Matrix::fill(double v) {
  for (auto& x : data_) x = v;
}

bool Matrix::is_finite() const {
  for (double x : data_)
    if (!std::isfinite(x)) return false;
  return true;
}

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

namespace {

void check_mul(const Matrix& c, std::size_t m, std::size_t n, std::size_t ka,
               std::size_t kb, const char* what) {
  if (ka != kb)
    throw std::invalid_argument(std::string(what) + ": inner dims " +
                                std::to_string(ka) + " vs " +
                                std::to_string(kb));
  if (c.rows() != m || c.cols() != n)
    throw std::invalid_argument(std::string(what) + ": output is " +
                                shape_str(c) + ", want " + std::to_string(m) +
                                "x" + std::to_string(n));
}

}  // namespace

void matmul_into(Matrix& c, const Matrix& a, const Matrix& b,
                 bool accumulate) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  check_mul(c, m, n, k, b.rows(), "matmul");
  if (!accumulate) c.fill(0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* cr = c.row(i);
    const double* ar = a.row(i);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ar[p];
      const double* br = b.row(p);
      for (std::size_t j = 0; j < n; ++j) cr[j] += aip * br[j];
    }
  }
}

void matmul_nt_into(Matrix& c, const Matrix& a, const Matrix& b,
                    bool accumulate) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  check_mul(c, m, n, k, b.cols(), "matmul_nt");
  // Transpose b once so the inner loop runs over contiguous memory; the
  // dot-product form defeats vectorization under strict FP semantics.
  thread_local std::vector<double> bt;
  bt.resize(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    const double* br = b.row(j);
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = br[p];
  }
  if (!accumulate) c.fill(0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* cr = c.row(i);
    const double* ar = a.row(i);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ar[p];
      const double* btr = bt.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) cr[j] += aip * btr[j];
    }
  }
}

void matmul_tn_into(Matrix& c, const Matrix& a, const Matrix& b,
                    bool accumulate) {
  const std::size_t m = a.cols(), k = a.rows(), n = b.cols();
  check_mul(c, m, n, k, b.rows(), "matmul_tn");
  if (!accumulate) c.fill(0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double* ar = a.row(p);
    const double* br = b.row(p);
    for (std::size_t i = 0; i < m; ++i) {
      const double aip = ar[i];
      double* cr = c.row(i);
      for (std::size_t j = 0; j < n; ++j) cr[j] += aip * br[j];
    }
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  matmul_into(c, a, b);
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.rows());
  matmul_nt_into(c, a, b);
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  Matrix c(a.cols(), b.cols());
  matmul_tn_into(c, a, b);
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("operator+: shapes " + shape_str(a) + " vs " +
                                shape_str(b));
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
  return c;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("operator-: shapes " + shape_str(a) + " vs " +
                                shape_str(b));
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] -= b.data()[i];
  return c;
}

Matrix operator*(double s, const Matrix& a) {
  Matrix c = a;
  scale(c, s);
  return c;
}

void add_scaled(Matrix& dst, double s, const Matrix& src) {
  if (!dst.same_shape(src))
    throw std::invalid_argument("add_scaled: shapes " + shape_str(dst) +
                                " vs " + shape_str(src));
  for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += s * src.data()[i];
}

void scale(Matrix& m, double s) {
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] *= s;
}

double frob_norm_sq(const Matrix& m) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) s += m.data()[i] * m.data()[i];
  return s;
}

double frob_norm(const Matrix& m) { return std::sqrt(frob_norm_sq(m)); }

double max_abs(const Matrix& m) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i)
    s = std::max(s, std::fabs(m.data()[i]));
  return s;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("max_abs_diff: shapes " + shape_str(a) +
                                " vs " + shape_str(b));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    s = std::max(s, std::fabs(a.data()[i] - b.data()[i]));
  return s;
}

void matvec(const Matrix& a, const double* x, double* y) {
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ar = a.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += ar[j] * x[j];
    y[i] = s;
  }
}

void sgemm(std::size_t m, std::size_t n, std::size_t k, const float* a,
           const float* b, float* c, bool accumulate) {
  if (!accumulate) std::memset(c, 0, m * n * sizeof(float));
  for (std::size_t i = 0; i < m; ++i) {
    float* cr = c + i * n;
    const float* ar = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const float aip = ar[p];
      const float* br = b + p * n;
      for (std::size_t j = 0; j < n; ++j) cr[j] += aip * br[j];
    }
  }
}

void sgemm_tn(std::size_t m, std::size_t n, std::size_t k, const float* a,
              const float* b, float* c, bool accumulate) {
  // a is k x m, b is k x n
  if (!accumulate) std::memset(c, 0, m * n * sizeof(float));
  for (std::size_t p = 0; p < k; ++p) {
    const float* ar = a + p * m;
    const float* br = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const float aip = ar[i];
      float* cr = c + i * n;
      for (std::size_t j = 0; j < n; ++j) cr[j] += aip * br[j];
    }
  }
}

void sgemm_nt(std::size_t m, std::size_t n, std::size_t k, const float* a,
              const float* b, float* c, bool accumulate) {
  // a is m x k, b is n x k; transpose b for contiguous inner loops.
  thread_local std::vector<float> bt;
  bt.resize(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    const float* br = b + j * k;
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = br[p];
  }
  if (!accumulate) std::memset(c, 0, m * n * sizeof(float));
  for (std::size_t i = 0; i < m; ++i) {
    float* cr = c + i * n;
    const float* ar = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const float aip = ar[p];
      const float* btr = bt.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) cr[j] += aip * btr[j];
    }
  }
}

}  // namespace exolam
