#pragma once

#include <vector>

#include "exolam/matrix.hpp"

namespace exolam {

struct SvdResult {
  Matrix U;               // orthonormal columns, left singular vectors
  std::vector<double> S;  // non-increasing, nonnegative
  Matrix V;               // orthonormal columns, right singular vectors
};

// Thin SVD via one-sided Jacobi. Deterministic sign convention: the
// largest-magnitude entry of each left singular vector is positive
// (first such index on ties). Throws on non-convergence after the
// sweep cap, naming the dimensions.
SvdResult svd(const Matrix& m);

// Reconstruction U * diag(S) * V^T.
Matrix svd_reconstruct(const SvdResult& r);

struct EighResult {
  std::vector<double> eigenvalues;  // descending
  Matrix eigenvectors;              // columns, orthonormal
};

// Symmetric eigendecomposition via cyclic two-sided Jacobi.
EighResult eigh_sym(const Matrix& m);

// Solve S * X = B for symmetric positive-definite S via Cholesky.
// Throws naming the pivot if S is not positive definite.
Matrix cholesky_solve(const Matrix& s, const Matrix& b);

}  // namespace exolam
