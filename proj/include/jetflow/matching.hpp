#pragma once

#include <string>
#include <variant>
#include <vector>

#include "jetflow/dynamics.hpp"
#include "jetflow/image.hpp"

namespace jetflow {

// Squared-distance landmark endpoint cost sum_i |z_i - y_i|^2 with a single
// tradeoff multiplier applied by the shooting energy.
struct LandmarkTarget {
  int dim = 2;
  std::vector<double> targets;  // N * dim
  double weight = 1.0;
};

// Per-particle desired position plus optional desired Jacobian / Hessian
// slots, each with its own quadratic penalty weight. Component weights are
// part of the cost itself, so the overall tradeoff multiplier is 1.
struct JetTarget {
  int dim = 2;
  std::vector<double> positions;  // N * dim
  std::vector<double> jacobians;  // N * dim^2 or empty
  std::vector<double> hessians;   // N * dim^3 or empty (symmetric)
  double weight_pos = 1.0;
  double weight_jac = 1.0;
  double weight_hess = 1.0;
};

// Pointwise image dissimilarity sum_x h^d |I0(z_x) - I1(x)|^2 over a lattice,
// where z_x is the lattice particle that started at x.
struct ImageTarget {
  RasterImage fixed;   // I1, sampled at the lattice points
  RasterImage moving;  // I0, sampled at the transported particles
  Lattice grid;
  double weight = 1.0;
};

using Target = std::variant<LandmarkTarget, JetTarget, ImageTarget>;

// Geodesic shooting problem: minimize H(q0, p0) + w * F(q(1)) over p0.
struct ShootingProblem {
  JetState initial_state;
  Target target;
  KernelConfig kernel;
  IntegratorConfig integrator;
};

double tradeoff_weight(const Target& target);

// F(q1) >= 0; zero iff the measured components match exactly.
double dissimilarity(const Target& target, const JetState& q1);

// Plain partial derivatives of F with respect to the state slots.
StateCotangent dissimilarity_gradient(const Target& target, const JetState& q1);

double shooting_energy(const ShootingProblem& prob, const JetMomentum& p0);

// Exact gradient of shooting_energy with respect to p0, computed by the
// discrete adjoint of the RK4 recursion (the derivative of the actually
// computed objective, not of the continuous flow). Mixed second-order slots
// of the returned cotangent are symmetrized so that full dense inner
// products give directional derivatives of symmetric perturbations.
JetMomentum shooting_gradient(const ShootingProblem& prob, const JetMomentum& p0,
                              double* energy_out = nullptr);

// Full dense inner product over the momentum slots.
double momentum_dot(const JetMomentum& a, const JetMomentum& b);
double momentum_norm(const JetMomentum& a);

struct OptimizerSettings {
  int max_iters = 200;
  double grad_tol = 1e-6;
  double armijo_c1 = 1e-4;
  double backtrack = 0.5;
  double init_step = 1.0;
  double min_step = 1e-16;
};

enum class SolveStatus { Converged, IterationBudget, LineSearchFailure };

struct SolveDiagnostics {
  SolveStatus status = SolveStatus::Converged;
  int iterations = 0;
  std::vector<double> energies;     // accepted energy per recorded point
  std::vector<double> grad_norms;   // gradient norm per recorded point
  std::vector<double> step_sizes;   // accepted step length (0 for the initial record)
  double initial_dissimilarity = 0.0;
  double final_dissimilarity = 0.0;
};

struct SolveResult {
  JetMomentum p0;
  SolveDiagnostics diagnostics;
};

// Gradient descent with Armijo backtracking from p0_init; deterministic
// given the settings. A stalled line search is reported in the diagnostics
// with the last iterate rather than thrown.
SolveResult solve(const ShootingProblem& prob, const JetMomentum& p0_init,
                  const OptimizerSettings& opt);

// Image shooting setup: lattice particles (order 0) start at the lattice of
// the fixed image, carrying plain momenta.
ShootingProblem make_image_problem(const RasterImage& fixed, const RasterImage& moving, int stride,
                                   double sigma, double weight, const IntegratorConfig& icfg);

namespace detail {

// Vector-Jacobian product (d rhs / d y)^T ybar of the phase right-hand side.
// Order 0 uses a hand-coded closed form; higher orders replay the generic
// right-hand side through the reverse-mode tape. Both paths are exact.
void rhs_vjp(const KernelConfig& cfg, const PhaseLayout& layout, const double* y, const double* ybar,
             double* out);
void rhs_vjp_hand_k0(const KernelConfig& cfg, const PhaseLayout& layout, const double* y,
                     const double* ybar, double* out);
void rhs_vjp_tape(const KernelConfig& cfg, const PhaseLayout& layout, const double* y,
                  const double* ybar, double* out);

// d H / d y over the flat layout (all slots, including positions).
void hamiltonian_grad_flat(const KernelConfig& cfg, const PhaseLayout& layout, const double* y,
                           double* out);

}  // namespace detail

}  // namespace jetflow
