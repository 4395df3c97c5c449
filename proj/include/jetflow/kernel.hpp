#pragma once

#include <cmath>
#include <string>

#include "jetflow/errors.hpp"
#include "jetflow/linalg.hpp"
#include "jetflow/multiindex.hpp"
#include "jetflow/state.hpp"

namespace jetflow {

// Scalar-isotropic Gaussian reproducing kernel k(x) = exp(-|x|^2 / (2 sigma^2)).
// The matrix-valued kernel of the metric operator is k(x) * Identity.
struct KernelConfig {
  double sigma = 1.0;
  int dim = 2;

  KernelConfig(double sigma_, int dim_) : sigma(sigma_), dim(dim_) {
    if (!(sigma > 0.0) || !std::isfinite(sigma))
      throw InvariantViolationError("kernel sigma must be positive, got " + std::to_string(sigma_));
    if (dim != 2 && dim != 3)
      throw InvariantViolationError("kernel dim must be 2 or 3, got " + std::to_string(dim_));
  }
};

namespace detail {

// Per-axis factors f_n with d^n/dt^n exp(-t^2/(2 s^2)) = f_n(t) exp(-t^2/(2 s^2)),
// i.e. f_n(t) = (-1/s)^n He_n(t/s) with the probabilists' Hermite polynomials
// He_0 = 1, He_1 = x, He_{n+1} = x He_n - n He_{n-1}. Exact closed forms, no
// finite differences anywhere.
template <class T>
void hermite_factors(double sigma, const T& t, int max_order, T* f) {
  const double inv_sigma = 1.0 / sigma;
  const T s = t * inv_sigma;
  T he_prev = s * 0.0 + 1.0;  // He_0
  f[0] = he_prev;
  if (max_order == 0) return;
  T he = s;  // He_1
  f[1] = he * (-inv_sigma);
  double scale = -inv_sigma;
  for (int n = 1; n < max_order; ++n) {
    T he_next = s * he - static_cast<double>(n) * he_prev;
    he_prev = he;
    he = he_next;
    scale *= -inv_sigma;
    f[n + 1] = he * scale;
  }
}

// Gaussian value; |x|^2 accumulated over dim axes.
template <class T>
T gaussian_value(const KernelConfig& cfg, const T* x) {
  using std::exp;
  T r2 = x[0] * x[0];
  for (int e = 1; e < cfg.dim; ++e) r2 = r2 + x[e] * x[e];
  return exp(r2 * (-0.5 / (cfg.sigma * cfg.sigma)));
}

// All kernel derivatives up to max_order at once, indexed by
// MultiIndexTable::get(cfg.dim) ids. The Gaussian factorizes per axis, so
// each entry is a product of per-axis Hermite factors times one shared
// exponential.
template <class T>
void gaussian_derivatives(const KernelConfig& cfg, const T* x, int max_order, T* out) {
  const MultiIndexTable& table = MultiIndexTable::get(cfg.dim);
  T axis[3][kMaxDerivOrder + 1];
  for (int e = 0; e < cfg.dim; ++e) hermite_factors(cfg.sigma, x[e], max_order, axis[e]);
  const T value = gaussian_value(cfg, x);
  const int n = table.count_up_to(max_order);
  for (int id = 0; id < n; ++id) {
    const MultiIndex& m = table.indices()[static_cast<std::size_t>(id)];
    T prod = axis[0][m[0]];
    for (int e = 1; e < cfg.dim; ++e) prod = prod * axis[e][m[e]];
    out[id] = prod * value;
  }
}

}  // namespace detail

// k(x); total function with values in (0, 1].
double eval_k(const KernelConfig& cfg, const double* x);

// Exact partial derivative of k of any total order up to kMaxDerivOrder.
double eval_k_deriv(const KernelConfig& cfg, const MultiIndex& alpha, const double* x);

// Block Gram matrix coupling the derivative momenta of a configuration, for
// jet order k: rows and columns indexed by (particle, multi-index of order
// <= k, component), entry
//   G[(i,a,c),(j,b,c')] = delta_{cc'} (-1)^{|b|} d^{a+b} k(q_i - q_j).
// Symmetric positive semi-definite; the reduced Hamiltonian is
// H = 1/2 m^T G m on multi-index momentum coefficients.
Matrix gram_matrix(const KernelConfig& cfg, const JetState& state, int order);

// Row count of gram_matrix for a given shape.
int gram_size(int dim, int order, int count);

}  // namespace jetflow
