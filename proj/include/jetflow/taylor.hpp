#pragma once

#include <vector>

#include "jetflow/multiindex.hpp"

namespace jetflow {

// Multivariate polynomial truncated at a total degree, with coefficients
// indexed by MultiIndexTable ids. Products truncate; no other rounding is
// introduced, so jet manipulations built from these are exact.
struct TaylorPoly {
  int dim = 2;
  int degree = 0;
  std::vector<double> c;

  static TaylorPoly zero(int dim, int degree);
  static TaylorPoly constant(int dim, int degree, double value);

  double coeff(const MultiIndex& m) const;
  void set_coeff(const MultiIndex& m, double v);

  // beta! * coeff(beta): the partial derivative at the expansion point.
  double derivative(const MultiIndex& m) const;

  double eval(const double* x) const;

  TaylorPoly& operator+=(const TaylorPoly& o);
  TaylorPoly& operator-=(const TaylorPoly& o);
  TaylorPoly& operator*=(double s);
};

TaylorPoly operator+(TaylorPoly a, const TaylorPoly& b);
TaylorPoly operator-(TaylorPoly a, const TaylorPoly& b);
TaylorPoly operator*(const TaylorPoly& a, double s);

// Product truncated at the degree of the operands (which must agree).
TaylorPoly truncated_mul(const TaylorPoly& a, const TaylorPoly& b);

// Composition P(s_0(x), ..., s_{d-1}(x)) truncated at P's degree; every
// substituted component must have zero constant term.
TaylorPoly compose(const TaylorPoly& p, const std::vector<TaylorPoly>& args);

// Re-expansion of a polynomial (given around the origin) around a new base
// point, truncated at out_degree.
TaylorPoly shift_base(const TaylorPoly& p, const double* point, int out_degree);

// A polynomial vector field with one TaylorPoly per component, expanded
// around the origin. Used as the test-field space for pairing checks.
struct PolyVectorField {
  int dim = 2;
  std::vector<TaylorPoly> comp;

  static PolyVectorField zero(int dim, int degree);
  void eval(const double* x, double* out) const;
  // Jets of all components around a point, truncated at jet_degree.
  std::vector<TaylorPoly> jets_at(const double* point, int jet_degree) const;
};

}  // namespace jetflow
