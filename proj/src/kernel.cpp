#include "jetflow/kernel.hpp"

#include <cmath>

namespace jetflow {

double eval_k(const KernelConfig& cfg, const double* x) {
  return detail::gaussian_value(cfg, x);
}

double eval_k_deriv(const KernelConfig& cfg, const MultiIndex& alpha, const double* x) {
  if (alpha.total() > kMaxDerivOrder)
    throw DerivativeOrderError("kernel derivative order " + std::to_string(alpha.total()) +
                               " exceeds the supported maximum " + std::to_string(kMaxDerivOrder));
  double axis[3][kMaxDerivOrder + 1];
  for (int e = 0; e < cfg.dim; ++e)
    detail::hermite_factors(cfg.sigma, x[e], alpha[e], axis[e]);
  double prod = detail::gaussian_value(cfg, x);
  for (int e = 0; e < cfg.dim; ++e) prod *= axis[e][alpha[e]];
  return prod;
}

int gram_size(int dim, int order, int count) {
  return count * MultiIndexTable::get(dim).count_up_to(order) * dim;
}

Matrix gram_matrix(const KernelConfig& cfg, const JetState& state, int order) {
  if (order < 0 || order > 2)
    throw InvariantViolationError("gram_matrix jet order must be 0, 1 or 2");
  if (state.dim != cfg.dim)
    throw InvariantViolationError("kernel and state dimensions disagree");
  validate(state);

  const MultiIndexTable& table = MultiIndexTable::get(cfg.dim);
  const int m_count = table.count_up_to(order);
  const int d = cfg.dim;
  const int n = state.count * m_count * d;
  Matrix g(n, n);

  const int deriv_count = table.count_up_to(2 * order);
  std::vector<double> derivs(static_cast<std::size_t>(deriv_count));
  std::vector<double> diff(static_cast<std::size_t>(d));

  // Upper triangle of the (i, j) particle blocks from the closed form, then
  // mirrored, so symmetry holds bit-exactly.
  for (int i = 0; i < state.count; ++i) {
    for (int j = i; j < state.count; ++j) {
      for (int e = 0; e < d; ++e) diff[static_cast<std::size_t>(e)] = state.position(i)[e] - state.position(j)[e];
      detail::gaussian_derivatives(cfg, diff.data(), 2 * order, derivs.data());
      for (int ai = 0; ai < m_count; ++ai) {
        const MultiIndex& a = table.indices()[static_cast<std::size_t>(ai)];
        for (int bi = 0; bi < m_count; ++bi) {
          const MultiIndex& b = table.indices()[static_cast<std::size_t>(bi)];
          const double sign = (b.total() % 2 == 0) ? 1.0 : -1.0;
          const double entry = sign * derivs[static_cast<std::size_t>(table.id(a + b))];
          for (int c = 0; c < d; ++c) {
            const int row = (i * m_count + ai) * d + c;
            const int col = (j * m_count + bi) * d + c;
            if (col < row) continue;
            g.at(row, col) = entry;
            g.at(col, row) = entry;
          }
        }
      }
    }
  }
  return g;
}

}  // namespace jetflow
