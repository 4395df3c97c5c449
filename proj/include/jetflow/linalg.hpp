#pragma once

#include <cstddef>
#include <vector>

namespace jetflow {

// Dense row-major matrix, just large enough for Gram blocks and test
// diagnostics.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), 0.0) {}

  double& at(int r, int c) { return a[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)]; }
  double at(int r, int c) const { return a[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)]; }
};

// Determinant of a d x d block stored row-major, d in {2,3}.
double det_small(const double* m, int d);

// Inverse of a d x d block stored row-major, d in {2,3}.
void invert_small(const double* m, int d, double* out);

}  // namespace jetflow
