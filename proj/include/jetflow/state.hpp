#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "jetflow/errors.hpp"

namespace jetflow {

// Distance below which two particle positions count as coincident, both at
// construction and as the collision guard during integration.
inline constexpr double kCoincidenceTol = 1e-12;

// A particle configuration of jet order k in {0,1,2}: positions, plus local
// Jacobian data for k>=1 and local Hessian data (symmetric in the last two
// slots) for k>=2. All blocks are row-major per particle.
struct JetState {
  int dim = 2;
  int order = 0;
  int count = 0;
  std::vector<double> positions;  // count * dim
  std::vector<double> jacobians;  // count * dim^2, present iff order >= 1
  std::vector<double> hessians;   // count * dim^3, present iff order >= 2

  double* position(int i) { return positions.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(dim); }
  const double* position(int i) const { return positions.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(dim); }
  double* jacobian(int i) { return jacobians.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(dim * dim); }
  const double* jacobian(int i) const { return jacobians.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(dim * dim); }
  double* hessian(int i) { return hessians.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(dim * dim * dim); }
  const double* hessian(int i) const { return hessians.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(dim * dim * dim); }
};

// Coefficients of a distributional momentum supported at the paired state's
// particle positions: point momenta p, first-derivative coefficients mu1
// (k>=1), and second-derivative coefficients mu2 (k>=2, symmetric in the
// last two slots).
struct JetMomentum {
  int dim = 2;
  int order = 0;
  int count = 0;
  std::vector<double> p;    // count * dim
  std::vector<double> mu1;  // count * dim^2
  std::vector<double> mu2;  // count * dim^3

  double* point(int i) { return p.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(dim); }
  const double* point(int i) const { return p.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(dim); }
  double* first(int i) { return mu1.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(dim * dim); }
  const double* first(int i) const { return mu1.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(dim * dim); }
  double* second(int i) { return mu2.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(dim * dim * dim); }
  const double* second(int i) const { return mu2.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(dim * dim * dim); }
};

struct PhasePoint {
  JetState state;
  JetMomentum momentum;
};

// Plain partial derivatives of a scalar functional with respect to the slots
// of a JetState, with the same block shapes.
struct StateCotangent {
  int dim = 2;
  int order = 0;
  int count = 0;
  std::vector<double> d_pos;   // count * dim
  std::vector<double> d_jac;   // count * dim^2, order >= 1
  std::vector<double> d_hess;  // count * dim^3, order >= 2
};

StateCotangent make_state_cotangent(int dim, int order, int count);

// Zero-filled containers of consistent shape. make_jet_state starts the
// Jacobian slots at the identity.
JetState make_jet_state(int dim, int order, int count);
JetMomentum make_jet_momentum(int dim, int order, int count);
PhasePoint make_phase_point(int dim, int order, int count);

// Average each rank-3 block with its transpose in the last two slots.
void symmetrize_last_two(std::vector<double>& tensors, int dim);

// Structural checks; throw InvariantViolationError or
// CoincidentParticlesError. Validation of a JetState includes pairwise
// distinct positions and invertible Jacobian slots.
void validate(const JetState& s);
void validate(const JetMomentum& m);
void validate(const PhasePoint& x);

// Embed into a higher jet order (identity Jacobians, zero Hessians, zero
// higher momenta) or truncate to a lower one.
PhasePoint project_order(const PhasePoint& x, int target_order);

// Versioned plain-text phase file. Round-trips valid PhasePoints exactly.
PhasePoint read_state(const std::string& path);
void write_state(const std::string& path, const PhasePoint& x);

// Plain point lists share the same text container (used for landmark files).
std::vector<double> read_points(const std::string& path, int* dim_out);
void write_points(const std::string& path, const std::vector<double>& points, int dim);

}  // namespace jetflow
