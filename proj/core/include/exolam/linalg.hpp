#pragma once

#include <functional>
#include <vector>

#include "exolam/matrix.hpp"

namespace exolam {

// argmin_B ||Y - X B||^2 + lambda ||B||^2  =  (X^T X + lambda I)^-1 X^T Y.
// At lambda = 0 a singular normal system raises a rank-deficiency error.
Matrix ridge_solve(const Matrix& x, const Matrix& y, double lambda_ridge);

struct WhitenResult {
  Matrix whitened;           // n x d, mean-centered and decorrelated
  Matrix transform;          // d x d symmetric, (Sigma + eps I)^{-1/2}
  std::vector<double> mean;  // column means of the input
};

// Whitens rows of `samples` via the symmetric inverse square root of the
// sample covariance (1/(n-1) normalization). A covariance eigenvalue below
// -1e-10 is a numerical failure.
WhitenResult whiten(const Matrix& samples, double eps_reg = 1e-8);

// Applies a previously computed whitening to fresh samples.
Matrix apply_whiten(const WhitenResult& w, const Matrix& samples);

using LossFn = std::function<double(const std::vector<Matrix>&)>;

// Central finite differences, entry by entry:
// (L(p + h e_i) - L(p - h e_i)) / 2h.
std::vector<Matrix> finite_diff_grad(const LossFn& loss,
                                     std::vector<Matrix> params, double h);

// max_i ||a_i - b_i||_F / max(||b_i||_F, floor), used by gradient checks.
double max_rel_error(const std::vector<Matrix>& a,
                     const std::vector<Matrix>& b, double floor = 1e-12);

Matrix sample_covariance(const Matrix& samples);  // 1/(n-1), mean removed

}  // namespace exolam
