#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "pigram/common.hpp"

namespace pigram::detail {

/// Dense row-major square matrix, just enough for closure computations.
struct DenseMatrix {
  std::size_t n = 0;
  std::vector<double> a;

  explicit DenseMatrix(std::size_t size = 0) : n(size), a(size * size, 0.0) {}
  double& operator()(std::size_t i, std::size_t j) { return a[i * n + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * n + j]; }
};

/// Returns (I - m)^-1, the reflexive-transitive closure sum I + m + m^2 + ...
/// of a substochastic relation matrix. Throws when the series diverges
/// (a probability-one cycle).
inline DenseMatrix closure(const DenseMatrix& m) {
  const std::size_t n = m.n;
  DenseMatrix lhs(n), inv(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) lhs(i, j) = (i == j ? 1.0 : 0.0) - m(i, j);
    inv(i, i) = 1.0;
  }
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(lhs(r, col)) > std::abs(lhs(pivot, col))) pivot = r;
    if (std::abs(lhs(pivot, col)) < 1e-12) throw Error("probability-one cycle in unit or left-corner relation");
    if (pivot != col) {
      for (std::size_t j = 0; j < n; ++j) {
        std::swap(lhs(pivot, j), lhs(col, j));
        std::swap(inv(pivot, j), inv(col, j));
      }
    }
    const double d = lhs(col, col);
    for (std::size_t j = 0; j < n; ++j) {
      lhs(col, j) /= d;
      inv(col, j) /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = lhs(r, col);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        lhs(r, j) -= f * lhs(col, j);
        inv(r, j) -= f * inv(col, j);
      }
    }
  }
  // Entries of a true closure are non-negative; clear rounding noise.
  for (auto& v : inv.a)
    if (v < 0.0 && v > -1e-12) v = 0.0;
  return inv;
}

}  // namespace pigram::detail
