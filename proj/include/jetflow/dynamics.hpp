#pragma once

#include <cstddef>
#include <vector>

#include "jetflow/kernel.hpp"
#include "jetflow/state.hpp"
#include "jetflow/taylor.hpp"

namespace jetflow {

// Fixed-step classical Runge-Kutta on a uniform grid over [0,1] (or a
// reversed span for backward transport). Deterministic by construction.
struct IntegratorConfig {
  int steps = 100;
};

// Flat storage layout of a phase point: positions, Jacobian slots, Hessian
// slots, then the momentum blocks.
struct PhaseLayout {
  int dim = 2;
  int order = 0;
  int count = 0;
  std::size_t off_pos = 0, off_jac = 0, off_hess = 0;
  std::size_t off_p = 0, off_mu1 = 0, off_mu2 = 0;
  std::size_t size = 0;

  static PhaseLayout of(int dim, int order, int count);
};

std::vector<double> flatten(const PhasePoint& x);
PhasePoint unflatten(const PhaseLayout& layout, const double* y);

struct Trajectory {
  PhaseLayout layout;
  std::vector<double> times;
  std::vector<std::vector<double>> samples;

  int sample_count() const { return static_cast<int>(times.size()); }
  PhasePoint at(int i) const { return unflatten(layout, samples[static_cast<std::size_t>(i)].data()); }
};

// The kernel-weighted Eulerian velocity field induced by a phase point,
//   u_a(x) = sum_j sum_{|b| <= k} (-1)^{|b|} d^b k(x - q_j) m_{j,b,a},
// with m_{j,0} = p_j, m_{j,e_c} = mu1_j[a,c], and the mixed second-order
// slots of mu2 carrying their ordered multiplicity.
struct VelocityField {
  PhasePoint source;
  KernelConfig kernel;
};

// d^alpha u at x; requires alpha.total() + source order <= kMaxDerivOrder.
void velocity_at(const VelocityField& v, const MultiIndex& alpha, const double* x, double* out);

// Reduced Hamiltonian H = 1/2 m^T G m; nonnegative.
double hamiltonian(const KernelConfig& cfg, const PhasePoint& x);

// Time derivative of a phase point. Positions advect with u and the jet
// slots advect with its derivatives:
//   d/dt q    = u(q)
//   d/dt q1   = Du(q) q1
//   d/dt q2[a,b,c] = sum_e Du[a,e] q2[e,b,c] + sum_{e,f} D2u[a,e,f] q1[e,b] q1[f,c].
// The momentum coefficients follow the coefficient-matched advection law on
// derivative-of-delta momenta (indices δ, β range over multi-indices of
// order <= k, C are componentwise binomials):
//   d/dt c_{δ,a} =   sum_{e: δ_e > 0} sum_{β ⊇ δ-e_e, β ≠ δ-e_e} C(β, δ-e_e) c_{β,a} (d^{β-δ+e_e} u_e)(q)
//                  - sum_b           sum_{β ⊇ δ}                C(β, δ)     c_{β,b} (d^{β-δ} d_a u_b)(q),
// which for k = 0 is exactly the particle system
//   d/dt q_i = sum_j k(q_i - q_j) p_j,  d/dt p_i = -sum_j (p_i . p_j) grad k(q_i - q_j).
// The sign placement for k >= 1 is pinned by the transport oracle: pushing
// the endpoint momentum back along the flow must reproduce the integrated
// momentum (see pushforward_momentum).
// The returned PhasePoint is a tangent container; its slots hold rates.
PhasePoint rhs(const KernelConfig& cfg, const PhasePoint& x);

// RK4 trajectory at steps+1 uniform times on [0,1]. Throws BlowUpError on
// non-finite positions and CoincidentParticlesError when particles pass
// within kCoincidenceTol of each other.
Trajectory integrate(const KernelConfig& cfg, const IntegratorConfig& icfg, const PhasePoint& x0);

// A discretized time-dependent diffeomorphism: seed trajectories plus, per
// stored time, derivative jets of the flow map of increasing order. times
// may run backward when the flow was integrated in reverse.
struct FlowMap {
  int dim = 2;
  int jet_order = 0;  // 0 points, 1 +Jacobians, 2 +second, 3 +third derivatives
  int seed_count = 0;
  std::vector<double> times;
  std::vector<double> points;     // [time][seed][dim]
  std::vector<double> jacobians;  // [time][seed][dim^2]
  std::vector<double> second;     // [time][seed][dim^3]
  std::vector<double> third;      // [time][seed][dim^4]

  const double* point(int t, int s) const;
  const double* jacobian(int t, int s) const;
  const double* second_deriv(int t, int s) const;
  const double* third_deriv(int t, int s) const;
  double jacobian_det(int t, int s) const;
};

// Integrates dy/dt = u(t, y) for each seed alongside the phase trajectory;
// with_jacobian co-integrates d(DPhi)/dt = Du(Phi) DPhi from the identity.
FlowMap flow_points(const KernelConfig& cfg, const IntegratorConfig& icfg, const PhasePoint& x0,
                    const std::vector<double>& seeds, bool with_jacobian);

// General engine behind flow_points: flow jets up to jet_order (<= 3),
// integrated over [t0, t1] (t1 < t0 gives the reverse-time flow) with the
// phase point given at t0. Optionally exposes the co-integrated phase
// trajectory.
FlowMap flow_jets(const KernelConfig& cfg, const IntegratorConfig& icfg, const PhasePoint& x_at_t0,
                  const std::vector<double>& seeds, int jet_order, double t0, double t1,
                  Trajectory* phase_out = nullptr);

// Pushforward of a distributional momentum m under the flow map's sample
// `sample_index`, defined by <Phi_* m, Phi_* w> = <m, w> for all test
// fields. m lives at the flow's seed points; the result lives at their
// images. A momentum of order k needs flow jets of order k+1
// (MissingJacobianError otherwise).
JetMomentum pushforward_momentum(const FlowMap& flow, int sample_index, const JetMomentum& m);

// Pairing <m, w> of a jet momentum at x.state's positions with a polynomial
// test field. Exact in the coefficients.
double pair_with_field(const PhasePoint& x, const PolyVectorField& w);

// The momentum-map trivialization sending a cotangent in the plain slot
// derivatives (as produced by dissimilarity gradients) to the distributional
// momentum coefficients (p, mu1, mu2) at the same configuration. For order 0
// this is the identity on the p slot.
JetMomentum spatial_momentum_from_cotangent(const JetState& q, const StateCotangent& cot);

}  // namespace jetflow
