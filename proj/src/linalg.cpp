#include "egoeq/linalg.hpp"

#include <cmath>

namespace egoeq {

std::vector<double> matvec(const Tensor& m, std::span<const double> x) {
  require(m.rank() == 2 && m.dim(1) == x.size(), "matvec: dimension mismatch");
  std::vector<double> y(m.dim(0), 0.0);
  for (std::size_t i = 0; i < m.dim(0); ++i) {
    const double* row = m.data() + i * m.dim(1);
    double acc = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
  return y;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
          "matmul: dimension mismatch");
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  Tensor c({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < k; ++t) {
      const double av = a[i * k + t];
      if (av == 0.0) continue;
      const double* brow = b.data() + t * m;
      double* crow = c.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Tensor transpose(const Tensor& m) {
  require(m.rank() == 2, "transpose: matrix required");
  Tensor t({m.dim(1), m.dim(0)});
  for (std::size_t i = 0; i < m.dim(0); ++i) {
    for (std::size_t j = 0; j < m.dim(1); ++j) t.at2(j, i) = m.at2(i, j);
  }
  return t;
}

bool cholesky(Tensor& a) {
  require(a.rank() == 2 && a.dim(0) == a.dim(1), "cholesky: square matrix required");
  const std::size_t n = a.dim(0);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a.at2(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= a.at2(j, k) * a.at2(j, k);
    if (!(d > 0.0)) return false;
    const double lj = std::sqrt(d);
    a.at2(j, j) = lj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a.at2(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= a.at2(i, k) * a.at2(j, k);
      a.at2(i, j) = s / lj;
    }
    for (std::size_t k = j + 1; k < n; ++k) a.at2(j, k) = 0.0;
  }
  return true;
}

Tensor cholesky_solve(const Tensor& chol, const Tensor& b) {
  const std::size_t n = chol.dim(0);
  require(b.rank() == 2 && b.dim(0) == n, "cholesky_solve: rhs shape mismatch");
  const std::size_t m = b.dim(1);
  Tensor x = b;
  // forward substitution L y = b
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < m; ++c) {
      double s = x.at2(i, c);
      for (std::size_t k = 0; k < i; ++k) s -= chol.at2(i, k) * x.at2(k, c);
      x.at2(i, c) = s / chol.at2(i, i);
    }
  }
  // back substitution L^T x = y
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t c = 0; c < m; ++c) {
      double s = x.at2(i, c);
      for (std::size_t k = i + 1; k < n; ++k) s -= chol.at2(k, i) * x.at2(k, c);
      x.at2(i, c) = s / chol.at2(i, i);
    }
  }
  return x;
}

Tensor normal_equations_solve(const Tensor& a, const Tensor& b, double ridge) {
  require(a.rank() == 2 && b.rank() == 2 && a.dim(0) == b.dim(0),
          "normal_equations_solve: row counts must match");
  Tensor at = transpose(a);
  Tensor gram = matmul(at, a);
  for (std::size_t i = 0; i < gram.dim(0); ++i) gram.at2(i, i) += ridge;
  Tensor rhs = matmul(at, b);
  if (!cholesky(gram)) {
    throw NumericError("normal_equations_solve: Gram matrix not positive definite");
  }
  return cholesky_solve(gram, rhs);
}

double frobenius_norm(const Tensor& m) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) s += m[i] * m[i];
  return std::sqrt(s);
}

}  // namespace egoeq
