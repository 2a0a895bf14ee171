#ifndef EGOEQ_LINALG_HPP
#define EGOEQ_LINALG_HPP

#include <span>
#include <vector>

#include "egoeq/tensor.hpp"

namespace egoeq {

// Small dense helpers for the desk-scale solves (normal equations, map
// composition, latent worlds). Matrices are row-major Tensors.

std::vector<double> matvec(const Tensor& m, std::span<const double> x);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& m);

// In-place Cholesky of an SPD matrix. Returns false on a non-positive pivot
// (singular / indefinite input).
bool cholesky(Tensor& a);

// Solves A X = B for SPD A using a precomputed Cholesky factor (lower).
// B is (n, m); the solution overwrites a copy and is returned.
Tensor cholesky_solve(const Tensor& chol, const Tensor& b);

// Least-squares solve of A x ~= b via normal equations; A is (n, m), n >= m.
// Adds `ridge` to the Gram diagonal. Throws NumericError if the Gram matrix
// is not positive definite.
Tensor normal_equations_solve(const Tensor& a, const Tensor& b, double ridge = 0.0);

double frobenius_norm(const Tensor& m);

}  // namespace egoeq

#endif
