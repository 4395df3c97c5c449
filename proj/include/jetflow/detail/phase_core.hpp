#pragma once

// Scalar-generic core of the reduced particle dynamics, instantiated with
// double for integration and with the reverse-mode tape variable for exact
// adjoints. All loops run in a fixed order so results are bit-reproducible.

#include <array>
#include <vector>

#include "jetflow/dynamics.hpp"
#include "jetflow/kernel.hpp"
#include "jetflow/multiindex.hpp"

namespace jetflow::detail {

// Table id of e_axis and of e_a + e_b.
int table_axis_id(int dim, int axis);
int table_axis_pair_id(int dim, int a, int b);

// Precomputed index tables for one (dim, order) pair.
struct JetTerms {
  int dim = 2;
  int order = 0;
  int m_count = 0;       // momentum slots per (particle, component)
  int du_count = 0;      // velocity derivative ids needed at particles (order <= k+1)
  int kernel_count = 0;  // kernel derivative ids per pair (order <= 2k+1)

  // Velocity assembly: du[g][a] += sign * c[j][b][a] * K[kernel_id].
  struct VelTerm {
    int g, b, kernel_id;
    double sign;
  };
  std::vector<VelTerm> vel;

  // Momentum stretch terms: dc[delta][a] += coef * c[beta][a] * du[du_id][e].
  struct StretchTerm {
    int delta, beta, e, du_id;
    double coef;
  };
  std::vector<StretchTerm> stretch;

  // Momentum force terms: dc[delta][alpha] -= coef * sum_b c[beta][b] * du[gamma + e_alpha][b].
  struct ForceTerm {
    int delta, beta;
    std::array<int, 3> gamma_plus_axis;  // du id of gamma + e_alpha per alpha
    double coef;
  };
  std::vector<ForceTerm> force;

  // Axis decompositions of the momentum slots: axis for first-order slots,
  // ordered pair (b <= c) for second-order slots.
  std::vector<int> slot_axis1;
  std::vector<std::array<int, 2>> slot_axes2;

  // Velocity term list for an arbitrary derivative limit (used for flow
  // seeds, whose jets may need more derivative orders than the particles).
  std::vector<VelTerm> make_vel_terms(int du_limit) const;

  static const JetTerms& get(int dim, int order);
};

// gaussian_derivatives for the first `limit` table ids.
template <class T>
void gaussian_derivatives_limited(const KernelConfig& cfg, const T* x, int limit, T* out) {
  const MultiIndexTable& table = MultiIndexTable::get(cfg.dim);
  T axis[3][kMaxDerivOrder + 1];
  int max_axis_order = 0;
  for (int id = 0; id < limit; ++id)
    for (int e = 0; e < cfg.dim; ++e)
      if (table.indices()[static_cast<std::size_t>(id)][e] > max_axis_order)
        max_axis_order = table.indices()[static_cast<std::size_t>(id)][e];
  for (int e = 0; e < cfg.dim; ++e) hermite_factors(cfg.sigma, x[e], max_axis_order, axis[e]);
  const T value = gaussian_value(cfg, x);
  for (int id = 0; id < limit; ++id) {
    const MultiIndex& m = table.indices()[static_cast<std::size_t>(id)];
    T prod = axis[0][m[0]];
    for (int e = 1; e < cfg.dim; ++e) prod = prod * axis[e][m[e]];
    out[id] = prod * value;
  }
}

// Momentum coefficients of one particle in multi-index form: for mixed
// second-order slots the two mirrored dense entries are summed, which both
// absorbs the ordered multiplicity and routes adjoints to both entries.
template <class T>
void momentum_coefficients(const JetTerms& jt, const T* p, const T* mu1, const T* mu2, T* out) {
  const int d = jt.dim;
  for (int a = 0; a < d; ++a) out[a] = p[a];
  if (jt.order < 1) return;
  const MultiIndexTable& table = MultiIndexTable::get(d);
  for (int s = 1; s < jt.m_count; ++s) {
    const MultiIndex& m = table.indices()[static_cast<std::size_t>(s)];
    if (m.total() == 1) {
      const int b = jt.slot_axis1[static_cast<std::size_t>(s)];
      for (int a = 0; a < d; ++a) out[s * d + a] = mu1[a * d + b];
    } else {
      const int b = jt.slot_axes2[static_cast<std::size_t>(s)][0];
      const int c = jt.slot_axes2[static_cast<std::size_t>(s)][1];
      if (b == c)
        for (int a = 0; a < d; ++a) out[s * d + a] = mu2[(a * d + b) * d + b];
      else
        for (int a = 0; a < d; ++a)
          out[s * d + a] = mu2[(a * d + b) * d + c] + mu2[(a * d + c) * d + b];
    }
  }
}

// Derivatives of the induced velocity at x for all ids below du_limit,
// assembled from the given term list; du indexed [deriv_id * dim + a].
template <class T>
void velocity_derivs_at(const KernelConfig& cfg, const JetTerms& jt, int count, const T* positions,
                        const T* coeffs, const T* x, int du_limit, int kernel_limit,
                        const std::vector<JetTerms::VelTerm>& terms, T* du, T* kernel_buf,
                        T* diff_buf) {
  const int d = jt.dim;
  const T zero = x[0] * 0.0;
  for (int i = 0; i < du_limit * d; ++i) du[i] = zero;
  for (int j = 0; j < count; ++j) {
    for (int e = 0; e < d; ++e) diff_buf[e] = x[e] - positions[j * d + e];
    gaussian_derivatives_limited(cfg, diff_buf, kernel_limit, kernel_buf);
    const T* cj = coeffs + static_cast<std::size_t>(j) * static_cast<std::size_t>(jt.m_count * d);
    for (const auto& t : terms) {
      const T k = kernel_buf[t.kernel_id] * t.sign;
      for (int a = 0; a < d; ++a) du[t.g * d + a] = du[t.g * d + a] + cj[t.b * d + a] * k;
    }
  }
}

// Time derivative of the flat phase vector.
template <class T>
void phase_rhs_flat(const KernelConfig& cfg, const PhaseLayout& layout, const T* y, T* dy) {
  const JetTerms& jt = JetTerms::get(layout.dim, layout.order);
  const MultiIndexTable& table = MultiIndexTable::get(layout.dim);
  const int d = layout.dim;
  const int n = layout.count;
  const int m = jt.m_count;

  const T* pos = y + layout.off_pos;
  const T* jac = y + layout.off_jac;
  const T* hess = y + layout.off_hess;

  std::vector<T> coeffs(static_cast<std::size_t>(n) * static_cast<std::size_t>(m * d));
  for (int j = 0; j < n; ++j)
    momentum_coefficients(jt, y + layout.off_p + j * d,
                          layout.order >= 1 ? y + layout.off_mu1 + j * d * d : nullptr,
                          layout.order >= 2 ? y + layout.off_mu2 + j * d * d * d : nullptr,
                          coeffs.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(m * d));

  std::vector<T> du(static_cast<std::size_t>(jt.du_count * d));
  std::vector<T> kernel_buf(static_cast<std::size_t>(jt.kernel_count));
  std::vector<T> dc(static_cast<std::size_t>(m * d));
  T diff[3];

  for (int i = 0; i < n; ++i) {
    velocity_derivs_at(cfg, jt, n, pos, coeffs.data(), pos + i * d, jt.du_count, jt.kernel_count,
                       jt.vel, du.data(), kernel_buf.data(), diff);

    // Positions ride the field.
    for (int a = 0; a < d; ++a) dy[layout.off_pos + i * d + a] = du[a];

    // Momentum coefficient rates.
    const T zero = du[0] * 0.0;
    for (std::size_t s = 0; s < dc.size(); ++s) dc[s] = zero;
    const T* ci = coeffs.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(m * d);
    for (const auto& t : jt.stretch)
      for (int a = 0; a < d; ++a)
        dc[static_cast<std::size_t>(t.delta * d + a)] =
            dc[static_cast<std::size_t>(t.delta * d + a)] +
            (ci[t.beta * d + a] * du[t.du_id * d + t.e]) * t.coef;
    for (const auto& t : jt.force)
      for (int alpha = 0; alpha < d; ++alpha) {
        T acc = ci[t.beta * d + 0] * du[t.gamma_plus_axis[static_cast<std::size_t>(alpha)] * d + 0];
        for (int b = 1; b < d; ++b)
          acc = acc + ci[t.beta * d + b] * du[t.gamma_plus_axis[static_cast<std::size_t>(alpha)] * d + b];
        dc[static_cast<std::size_t>(t.delta * d + alpha)] =
            dc[static_cast<std::size_t>(t.delta * d + alpha)] - acc * t.coef;
      }

    for (int a = 0; a < d; ++a) dy[layout.off_p + i * d + a] = dc[static_cast<std::size_t>(a)];
    if (layout.order >= 1)
      for (int s = 1; s < m; ++s) {
        const MultiIndex& mi = table.indices()[static_cast<std::size_t>(s)];
        if (mi.total() == 1) {
          const int b = jt.slot_axis1[static_cast<std::size_t>(s)];
          for (int a = 0; a < d; ++a)
            dy[layout.off_mu1 + (i * d + a) * d + b] = dc[static_cast<std::size_t>(s * d + a)];
        } else {
          const int b = jt.slot_axes2[static_cast<std::size_t>(s)][0];
          const int c = jt.slot_axes2[static_cast<std::size_t>(s)][1];
          for (int a = 0; a < d; ++a) {
            if (b == c) {
              dy[layout.off_mu2 + ((i * d + a) * d + b) * d + b] = dc[static_cast<std::size_t>(s * d + a)];
            } else {
              const T half = dc[static_cast<std::size_t>(s * d + a)] * 0.5;
              dy[layout.off_mu2 + ((i * d + a) * d + b) * d + c] = half;
              dy[layout.off_mu2 + ((i * d + a) * d + c) * d + b] = half;
            }
          }
        }
      }

    // Jet slots advect with the derivatives of u.
    if (layout.order >= 1) {
      const T* ji = jac + i * d * d;
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
          T acc = du[table_axis_id(d, 0) * d + a] * ji[0 * d + b];
          for (int e = 1; e < d; ++e) acc = acc + du[table_axis_id(d, e) * d + a] * ji[e * d + b];
          dy[layout.off_jac + (i * d + a) * d + b] = acc;
        }
    }
    if (layout.order >= 2) {
      const T* ji = jac + i * d * d;
      const T* hi = hess + i * d * d * d;
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
          for (int c = b; c < d; ++c) {
            T acc = zero;
            for (int e = 0; e < d; ++e)
              acc = acc + du[table_axis_id(d, e) * d + a] * hi[(e * d + b) * d + c];
            for (int e = 0; e < d; ++e)
              for (int f = 0; f < d; ++f)
                acc = acc + du[table_axis_pair_id(d, e, f) * d + a] * (ji[e * d + b] * ji[f * d + c]);
            dy[layout.off_hess + ((i * d + a) * d + b) * d + c] = acc;
            if (c != b) dy[layout.off_hess + ((i * d + a) * d + c) * d + b] = acc;
          }
    }
  }
}

// Reduced Hamiltonian over the flat representation.
template <class T>
T hamiltonian_flat(const KernelConfig& cfg, const PhaseLayout& layout, const T* y) {
  const JetTerms& jt = JetTerms::get(layout.dim, layout.order);
  const MultiIndexTable& table = MultiIndexTable::get(layout.dim);
  const int d = layout.dim;
  const int n = layout.count;
  const int m = jt.m_count;
  const T* pos = y + layout.off_pos;

  std::vector<T> coeffs(static_cast<std::size_t>(n) * static_cast<std::size_t>(m * d));
  for (int j = 0; j < n; ++j)
    momentum_coefficients(jt, y + layout.off_p + j * d,
                          layout.order >= 1 ? y + layout.off_mu1 + j * d * d : nullptr,
                          layout.order >= 2 ? y + layout.off_mu2 + j * d * d * d : nullptr,
                          coeffs.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(m * d));

  const int kernel_limit = table.count_up_to(2 * layout.order);
  std::vector<T> kernel_buf(static_cast<std::size_t>(kernel_limit));
  T diff[3];
  T acc = T(0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      for (int e = 0; e < d; ++e) diff[e] = pos[i * d + e] - pos[j * d + e];
      gaussian_derivatives_limited(cfg, diff, kernel_limit, kernel_buf.data());
      const T* c_i = coeffs.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(m * d);
      const T* c_j = coeffs.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(m * d);
      for (int sa = 0; sa < m; ++sa) {
        const MultiIndex& ma = table.indices()[static_cast<std::size_t>(sa)];
        for (int sb = 0; sb < m; ++sb) {
          const MultiIndex& mb = table.indices()[static_cast<std::size_t>(sb)];
          const double sign = (mb.total() % 2 == 0) ? 1.0 : -1.0;
          const T k = kernel_buf[static_cast<std::size_t>(table.id(ma + mb))] * sign;
          T dot = c_i[sa * d + 0] * c_j[sb * d + 0];
          for (int a = 1; a < d; ++a) dot = dot + c_i[sa * d + a] * c_j[sb * d + a];
          acc = acc + dot * k;
        }
      }
    }
  return acc * 0.5;
}

}  // namespace jetflow::detail
