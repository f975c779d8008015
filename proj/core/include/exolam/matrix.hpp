#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace exolam {

class RngStream;

// Dense row-major matrix of doubles. All heavy arithmetic in the
// workbench goes through the free functions below.
class Matrix {
 public:
  Matrix() : rows_(0), cols_(0) {}
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  // Entries i.i.d. N(0, stddev^2), drawn row by row.
  static Matrix gaussian(std::size_t rows, std::size_t cols, RngStream& rng,
                         double stddev = 1.0);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double* row(std::size_t r) { return data_.data() + r * cols_; }
  const double* row(std::size_t r) const { return data_.data() + r * cols_; }

  void fill(double v);
  bool same_shape(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }
  bool is_finite() const;

  bool operator==(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
  }

 private:
  std::size_t rows_, cols_;
  std::vector<double> data_;
};

std::string shape_str(const Matrix& m);

// C = A*B (plus optional accumulate). The _nt/_tn variants multiply by a
// transposed operand without materializing the transpose.
void matmul_into(Matrix& c, const Matrix& a, const Matrix& b,
                 bool accumulate = false);
void matmul_nt_into(Matrix& c, const Matrix& a, const Matrix& b,
                    bool accumulate = false);  // C = A * B^T
void matmul_tn_into(Matrix& c, const Matrix& a, const Matrix& b,
                    bool accumulate = false);  // C = A^T * B

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);
void add_scaled(Matrix& dst, double s, const Matrix& src);  // dst += s*src
void scale(Matrix& m, double s);

double frob_norm(const Matrix& m);
double frob_norm_sq(const Matrix& m);
double max_abs(const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);

// y = A*x for a contiguous vector x of length A.cols().
void matvec(const Matrix& a, const double* x, double* y);

// Single-precision GEMM used by the grid-world tape: C = A*B with raw
// row-major buffers, optional accumulate.
void sgemm(std::size_t m, std::size_t n, std::size_t k, const float* a,
           const float* b, float* c, bool accumulate = false);
void sgemm_tn(std::size_t m, std::size_t n, std::size_t k, const float* a,
              const float* b, float* c, bool accumulate = false);
void sgemm_nt(std::size_t m, std::size_t n, std::size_t k, const float* a,
              const float* b, float* c, bool accumulate = false);

}  // namespace exolam
