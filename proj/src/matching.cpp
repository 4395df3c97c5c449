#include "jetflow/matching.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "jetflow/autodiff.hpp"
#include "jetflow/detail/phase_core.hpp"

namespace jetflow {

namespace {

void check_counts(int have, int want, const char* what) {
  if (have != want)
    throw InvariantViolationError(std::string(what) + ": expected " + std::to_string(want) +
                                  " entries, got " + std::to_string(have));
}

}  // namespace

double tradeoff_weight(const Target& target) {
  return std::visit(
      [](const auto& t) -> double {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, JetTarget>)
          return 1.0;
        else
          return t.weight;
      },
      target);
}

double dissimilarity(const Target& target, const JetState& q1) {
  if (const auto* lm = std::get_if<LandmarkTarget>(&target)) {
    check_counts(static_cast<int>(lm->targets.size()), q1.count * q1.dim, "landmark targets");
    double acc = 0.0;
    for (int i = 0; i < q1.count * q1.dim; ++i) {
      const double diff = q1.positions[static_cast<std::size_t>(i)] - lm->targets[static_cast<std::size_t>(i)];
      acc += diff * diff;
    }
    return acc;
  }
  if (const auto* jt = std::get_if<JetTarget>(&target)) {
    check_counts(static_cast<int>(jt->positions.size()), q1.count * q1.dim, "jet target positions");
    if (!jt->jacobians.empty()) {
      if (q1.order < 1) throw InvariantViolationError("jet target has Jacobian slots but the state is order 0");
      check_counts(static_cast<int>(jt->jacobians.size()), q1.count * q1.dim * q1.dim, "jet target jacobians");
    }
    if (!jt->hessians.empty()) {
      if (q1.order < 2) throw InvariantViolationError("jet target has Hessian slots but the state order is below 2");
      check_counts(static_cast<int>(jt->hessians.size()), q1.count * q1.dim * q1.dim * q1.dim,
                   "jet target hessians");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < jt->positions.size(); ++i) {
      const double diff = q1.positions[i] - jt->positions[i];
      acc += jt->weight_pos * diff * diff;
    }
    for (std::size_t i = 0; i < jt->jacobians.size(); ++i) {
      const double diff = q1.jacobians[i] - jt->jacobians[i];
      acc += jt->weight_jac * diff * diff;
    }
    for (std::size_t i = 0; i < jt->hessians.size(); ++i) {
      const double diff = q1.hessians[i] - jt->hessians[i];
      acc += jt->weight_hess * diff * diff;
    }
    return acc;
  }
  const auto& im = std::get<ImageTarget>(target);
  check_counts(static_cast<int>(im.grid.points.size()), q1.count * q1.dim, "image lattice");
  if (q1.dim != 2) throw InvariantViolationError("image matching is two-dimensional");
  const double cell = im.grid.h * im.grid.h;
  double acc = 0.0;
  for (int i = 0; i < q1.count; ++i) {
    const double* z = q1.position(i);
    if (!std::isfinite(z[0]) || !std::isfinite(z[1]))
      throw BlowUpError("lattice particle " + std::to_string(i) + " left the representable range");
    const double moving = sample(im.moving, z);
    const double fixed = sample(im.fixed, im.grid.points.data() + 2 * i);
    const double diff = moving - fixed;
    acc += cell * diff * diff;
  }
  return acc;
}

StateCotangent dissimilarity_gradient(const Target& target, const JetState& q1) {
  StateCotangent cot = make_state_cotangent(q1.dim, q1.order, q1.count);
  if (const auto* lm = std::get_if<LandmarkTarget>(&target)) {
    check_counts(static_cast<int>(lm->targets.size()), q1.count * q1.dim, "landmark targets");
    for (std::size_t i = 0; i < cot.d_pos.size(); ++i)
      cot.d_pos[i] = 2.0 * (q1.positions[i] - lm->targets[i]);
    return cot;
  }
  if (const auto* jt = std::get_if<JetTarget>(&target)) {
    check_counts(static_cast<int>(jt->positions.size()), q1.count * q1.dim, "jet target positions");
    for (std::size_t i = 0; i < cot.d_pos.size(); ++i)
      cot.d_pos[i] = 2.0 * jt->weight_pos * (q1.positions[i] - jt->positions[i]);
    for (std::size_t i = 0; i < jt->jacobians.size(); ++i)
      cot.d_jac[i] = 2.0 * jt->weight_jac * (q1.jacobians[i] - jt->jacobians[i]);
    for (std::size_t i = 0; i < jt->hessians.size(); ++i)
      cot.d_hess[i] = 2.0 * jt->weight_hess * (q1.hessians[i] - jt->hessians[i]);
    return cot;
  }
  const auto& im = std::get<ImageTarget>(target);
  check_counts(static_cast<int>(im.grid.points.size()), q1.count * q1.dim, "image lattice");
  const double cell = im.grid.h * im.grid.h;
  for (int i = 0; i < q1.count; ++i) {
    const double* z = q1.position(i);
    const double moving = sample(im.moving, z);
    const double fixed = sample(im.fixed, im.grid.points.data() + 2 * i);
    double grad_i0[2];
    gradient(im.moving, z, grad_i0);
    cot.d_pos[static_cast<std::size_t>(2 * i)] = 2.0 * cell * (moving - fixed) * grad_i0[0];
    cot.d_pos[static_cast<std::size_t>(2 * i + 1)] = 2.0 * cell * (moving - fixed) * grad_i0[1];
  }
  return cot;
}

namespace detail {

void rhs_vjp_tape(const KernelConfig& cfg, const PhaseLayout& layout, const double* y,
                  const double* ybar, double* out) {
  ad::Tape tape;
  ad::TapeScope scope(tape);
  std::vector<ad::Var> yv;
  yv.reserve(layout.size);
  for (std::size_t i = 0; i < layout.size; ++i) yv.push_back(ad::Var::leaf(y[i]));
  std::vector<ad::Var> dyv(layout.size);
  phase_rhs_flat<ad::Var>(cfg, layout, yv.data(), dyv.data());
  tape.seed_adjoints();
  for (std::size_t i = 0; i < layout.size; ++i)
    if (ybar[i] != 0.0) tape.adjoint(dyv[i].idx) += ybar[i];
  tape.backprop();
  for (std::size_t i = 0; i < layout.size; ++i) out[i] = tape.adjoint(yv[i].idx);
}

// Closed-form VJP of the order-0 system
//   qdot_i = sum_j k_ij p_j,   pdot_i = -sum_j (p_i . p_j) g_ij
// with g = grad k and Hk = hess k:
//   out_q_m = sum_j [(a_m . p_j) + (a_j . p_m)] g_mj + (p_m . p_j) Hk_mj (b_j - b_m)
//   out_p_m = sum_j k_mj a_j + [(b_j - b_m) . g_mj] p_j
// where (a, b) are the incoming adjoints of (qdot, pdot).
void rhs_vjp_hand_k0(const KernelConfig& cfg, const PhaseLayout& layout, const double* y,
                     const double* ybar, double* out) {
  const int d = layout.dim;
  const int n = layout.count;
  const double* q = y + layout.off_pos;
  const double* p = y + layout.off_p;
  const double* a = ybar + layout.off_pos;
  const double* b = ybar + layout.off_p;
  const double inv_s2 = 1.0 / (cfg.sigma * cfg.sigma);
  std::fill(out, out + layout.size, 0.0);
  double diff[3], g[3], hb[3];
  for (int m = 0; m < n; ++m) {
    double* oq = out + layout.off_pos + m * d;
    double* op = out + layout.off_p + m * d;
    for (int j = 0; j < n; ++j) {
      double r2 = 0.0;
      for (int e = 0; e < d; ++e) {
        diff[e] = q[m * d + e] - q[j * d + e];
        r2 += diff[e] * diff[e];
      }
      const double k = std::exp(-0.5 * r2 * inv_s2);
      for (int e = 0; e < d; ++e) g[e] = -k * diff[e] * inv_s2;
      double am_pj = 0.0, aj_pm = 0.0, pm_pj = 0.0, db_g = 0.0;
      for (int e = 0; e < d; ++e) {
        am_pj += a[m * d + e] * p[j * d + e];
        aj_pm += a[j * d + e] * p[m * d + e];
        pm_pj += p[m * d + e] * p[j * d + e];
        db_g += (b[j * d + e] - b[m * d + e]) * g[e];
      }
      // Hk_mj (b_j - b_m) with Hk = k (diff diff^T / s^4 - I / s^2)
      double diff_db = 0.0;
      for (int e = 0; e < d; ++e) diff_db += diff[e] * (b[j * d + e] - b[m * d + e]);
      for (int e = 0; e < d; ++e)
        hb[e] = k * (diff[e] * diff_db * inv_s2 * inv_s2 - (b[j * d + e] - b[m * d + e]) * inv_s2);
      for (int e = 0; e < d; ++e) {
        oq[e] += (am_pj + aj_pm) * g[e] + pm_pj * hb[e];
        op[e] += k * a[j * d + e] + db_g * p[j * d + e];
      }
    }
  }
}

void rhs_vjp(const KernelConfig& cfg, const PhaseLayout& layout, const double* y, const double* ybar,
             double* out) {
  if (layout.order == 0)
    rhs_vjp_hand_k0(cfg, layout, y, ybar, out);
  else
    rhs_vjp_tape(cfg, layout, y, ybar, out);
}

void hamiltonian_grad_flat(const KernelConfig& cfg, const PhaseLayout& layout, const double* y,
                           double* out) {
  if (layout.order == 0) {
    // dH/dp_m = sum_j k_mj p_j, dH/dq_m = sum_j (p_m . p_j) g_mj.
    const int d = layout.dim;
    const int n = layout.count;
    const double* q = y + layout.off_pos;
    const double* p = y + layout.off_p;
    const double inv_s2 = 1.0 / (cfg.sigma * cfg.sigma);
    std::fill(out, out + layout.size, 0.0);
    double diff[3];
    for (int m = 0; m < n; ++m)
      for (int j = 0; j < n; ++j) {
        double r2 = 0.0;
        for (int e = 0; e < d; ++e) {
          diff[e] = q[m * d + e] - q[j * d + e];
          r2 += diff[e] * diff[e];
        }
        const double k = std::exp(-0.5 * r2 * inv_s2);
        double pm_pj = 0.0;
        for (int e = 0; e < d; ++e) pm_pj += p[m * d + e] * p[j * d + e];
        for (int e = 0; e < d; ++e) {
          out[layout.off_p + m * d + e] += k * p[j * d + e];
          out[layout.off_pos + m * d + e] += -k * diff[e] * inv_s2 * pm_pj;
        }
      }
    return;
  }
  ad::Tape tape;
  ad::TapeScope scope(tape);
  std::vector<ad::Var> yv;
  yv.reserve(layout.size);
  for (std::size_t i = 0; i < layout.size; ++i) yv.push_back(ad::Var::leaf(y[i]));
  const ad::Var h = hamiltonian_flat<ad::Var>(cfg, layout, yv.data());
  tape.seed_adjoints();
  tape.adjoint(h.idx) = 1.0;
  tape.backprop();
  for (std::size_t i = 0; i < layout.size; ++i) out[i] = tape.adjoint(yv[i].idx);
}

}  // namespace detail

namespace {

void check_problem(const ShootingProblem& prob, const JetMomentum& p0) {
  validate(prob.initial_state);
  validate(p0);
  if (prob.initial_state.dim != p0.dim || prob.initial_state.order != p0.order ||
      prob.initial_state.count != p0.count)
    throw InvariantViolationError("initial state and momentum shapes disagree");
  if (prob.kernel.dim != prob.initial_state.dim)
    throw InvariantViolationError("kernel and state dimensions disagree");
}

// Embed w * dF/dq(1) into the state slots of a flat adjoint vector.
std::vector<double> endpoint_adjoint(const PhaseLayout& layout, const StateCotangent& cot, double w) {
  std::vector<double> lambda(layout.size, 0.0);
  for (std::size_t i = 0; i < cot.d_pos.size(); ++i) lambda[layout.off_pos + i] = w * cot.d_pos[i];
  for (std::size_t i = 0; i < cot.d_jac.size(); ++i) lambda[layout.off_jac + i] = w * cot.d_jac[i];
  for (std::size_t i = 0; i < cot.d_hess.size(); ++i) lambda[layout.off_hess + i] = w * cot.d_hess[i];
  return lambda;
}

JetMomentum momentum_from_flat(const PhaseLayout& layout, const std::vector<double>& flat) {
  JetMomentum g = make_jet_momentum(layout.dim, layout.order, layout.count);
  std::copy(flat.begin() + static_cast<std::ptrdiff_t>(layout.off_p),
            flat.begin() + static_cast<std::ptrdiff_t>(layout.off_p) + static_cast<std::ptrdiff_t>(g.p.size()),
            g.p.begin());
  if (layout.order >= 1)
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(layout.off_mu1),
              flat.begin() + static_cast<std::ptrdiff_t>(layout.off_mu1) + static_cast<std::ptrdiff_t>(g.mu1.size()),
              g.mu1.begin());
  if (layout.order >= 2) {
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(layout.off_mu2),
              flat.begin() + static_cast<std::ptrdiff_t>(layout.off_mu2) + static_cast<std::ptrdiff_t>(g.mu2.size()),
              g.mu2.begin());
    symmetrize_last_two(g.mu2, layout.dim);
  }
  return g;
}

}  // namespace

double shooting_energy(const ShootingProblem& prob, const JetMomentum& p0) {
  check_problem(prob, p0);
  const PhasePoint x0{prob.initial_state, p0};
  const double h = hamiltonian(prob.kernel, x0);
  const Trajectory traj = integrate(prob.kernel, prob.integrator, x0);
  const double f = dissimilarity(prob.target, traj.at(traj.sample_count() - 1).state);
  return h + tradeoff_weight(prob.target) * f;
}

JetMomentum shooting_gradient(const ShootingProblem& prob, const JetMomentum& p0, double* energy_out) {
  check_problem(prob, p0);
  const PhasePoint x0{prob.initial_state, p0};
  const PhaseLayout layout = PhaseLayout::of(x0.state.dim, x0.state.order, x0.state.count);
  const KernelConfig& cfg = prob.kernel;
  const Trajectory traj = integrate(cfg, prob.integrator, x0);
  const JetState q1 = traj.at(traj.sample_count() - 1).state;
  const double w = tradeoff_weight(prob.target);

  if (energy_out) {
    const double h0 = detail::hamiltonian_flat<double>(cfg, layout, traj.samples.front().data());
    *energy_out = h0 + w * dissimilarity(prob.target, q1);
  }

  // Reverse sweep of the RK4 recursion, recomputing the stage states.
  std::vector<double> lambda = endpoint_adjoint(layout, dissimilarity_gradient(prob.target, q1), w);
  const int steps = prob.integrator.steps;
  const double h = 1.0 / steps;
  const std::size_t n = layout.size;
  std::vector<double> k1(n), k2(n), k3(n), z2(n), z3(n), z4(n);
  std::vector<double> kbar(n), v(n), lambda_next(n);
  for (int s = steps - 1; s >= 0; --s) {
    const std::vector<double>& y = traj.samples[static_cast<std::size_t>(s)];
    detail::phase_rhs_flat<double>(cfg, layout, y.data(), k1.data());
    for (std::size_t i = 0; i < n; ++i) z2[i] = y[i] + 0.5 * h * k1[i];
    detail::phase_rhs_flat<double>(cfg, layout, z2.data(), k2.data());
    for (std::size_t i = 0; i < n; ++i) z3[i] = y[i] + 0.5 * h * k2[i];
    detail::phase_rhs_flat<double>(cfg, layout, z3.data(), k3.data());
    for (std::size_t i = 0; i < n; ++i) z4[i] = y[i] + h * k3[i];

    lambda_next = lambda;
    // k4 stage
    for (std::size_t i = 0; i < n; ++i) kbar[i] = (h / 6.0) * lambda[i];
    detail::rhs_vjp(cfg, layout, z4.data(), kbar.data(), v.data());
    for (std::size_t i = 0; i < n; ++i) lambda_next[i] += v[i];
    // k3 stage: kbar3 = (h/3) lambda + h * v4
    for (std::size_t i = 0; i < n; ++i) kbar[i] = (h / 3.0) * lambda[i] + h * v[i];
    detail::rhs_vjp(cfg, layout, z3.data(), kbar.data(), v.data());
    for (std::size_t i = 0; i < n; ++i) lambda_next[i] += v[i];
    // k2 stage: kbar2 = (h/3) lambda + (h/2) v3
    for (std::size_t i = 0; i < n; ++i) kbar[i] = (h / 3.0) * lambda[i] + 0.5 * h * v[i];
    detail::rhs_vjp(cfg, layout, z2.data(), kbar.data(), v.data());
    for (std::size_t i = 0; i < n; ++i) lambda_next[i] += v[i];
    // k1 stage: kbar1 = (h/6) lambda + (h/2) v2
    for (std::size_t i = 0; i < n; ++i) kbar[i] = (h / 6.0) * lambda[i] + 0.5 * h * v[i];
    detail::rhs_vjp(cfg, layout, y.data(), kbar.data(), v.data());
    for (std::size_t i = 0; i < n; ++i) lambda_next[i] += v[i];
    lambda.swap(lambda_next);
  }

  std::vector<double> hgrad(n);
  detail::hamiltonian_grad_flat(cfg, layout, traj.samples.front().data(), hgrad.data());
  for (std::size_t i = 0; i < n; ++i) lambda[i] += hgrad[i];
  return momentum_from_flat(layout, lambda);
}

double momentum_dot(const JetMomentum& a, const JetMomentum& b) {
  if (a.dim != b.dim || a.order != b.order || a.count != b.count)
    throw InvariantViolationError("momentum shapes disagree");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.p.size(); ++i) acc += a.p[i] * b.p[i];
  for (std::size_t i = 0; i < a.mu1.size(); ++i) acc += a.mu1[i] * b.mu1[i];
  for (std::size_t i = 0; i < a.mu2.size(); ++i) acc += a.mu2[i] * b.mu2[i];
  return acc;
}

double momentum_norm(const JetMomentum& a) { return std::sqrt(momentum_dot(a, a)); }

SolveResult solve(const ShootingProblem& prob, const JetMomentum& p0_init, const OptimizerSettings& opt) {
  check_problem(prob, p0_init);
  SolveResult res;
  res.p0 = p0_init;
  SolveDiagnostics& diag = res.diagnostics;

  const auto endpoint_dissimilarity = [&](const JetMomentum& p0) {
    const Trajectory traj = integrate(prob.kernel, prob.integrator, PhasePoint{prob.initial_state, p0});
    return dissimilarity(prob.target, traj.at(traj.sample_count() - 1).state);
  };

  double energy = 0.0;
  JetMomentum grad = shooting_gradient(prob, res.p0, &energy);
  double gnorm = momentum_norm(grad);
  diag.energies.push_back(energy);
  diag.grad_norms.push_back(gnorm);
  diag.step_sizes.push_back(0.0);
  diag.initial_dissimilarity = endpoint_dissimilarity(res.p0);

  const auto finish = [&](SolveStatus status, int iterations) {
    diag.status = status;
    diag.iterations = iterations;
    diag.final_dissimilarity = endpoint_dissimilarity(res.p0);
    return res;
  };

  double step = opt.init_step;
  for (int it = 0; it < opt.max_iters; ++it) {
    if (gnorm <= opt.grad_tol) return finish(SolveStatus::Converged, it);
    // Backtracking from twice the previously accepted step.
    double alpha = std::min(opt.init_step, 2.0 * step);
    bool accepted = false;
    JetMomentum candidate = res.p0;
    while (alpha >= opt.min_step) {
      candidate = res.p0;
      for (std::size_t i = 0; i < candidate.p.size(); ++i) candidate.p[i] -= alpha * grad.p[i];
      for (std::size_t i = 0; i < candidate.mu1.size(); ++i) candidate.mu1[i] -= alpha * grad.mu1[i];
      for (std::size_t i = 0; i < candidate.mu2.size(); ++i) candidate.mu2[i] -= alpha * grad.mu2[i];
      double cand_energy;
      try {
        cand_energy = shooting_energy(prob, candidate);
      } catch (const Error&) {
        alpha *= opt.backtrack;  // trajectory blew up or collided; shorten
        continue;
      }
      // The strict decrease guards against zero-progress steps once true
      // decreases fall below floating-point resolution of the energy.
      if (cand_energy <= energy - opt.armijo_c1 * alpha * gnorm * gnorm && cand_energy < energy) {
        res.p0 = candidate;
        energy = cand_energy;
        accepted = true;
        break;
      }
      alpha *= opt.backtrack;
    }
    if (!accepted) return finish(SolveStatus::LineSearchFailure, it);
    step = alpha;
    grad = shooting_gradient(prob, res.p0, &energy);
    gnorm = momentum_norm(grad);
    diag.energies.push_back(energy);
    diag.grad_norms.push_back(gnorm);
    diag.step_sizes.push_back(alpha);
  }
  return finish(gnorm <= opt.grad_tol ? SolveStatus::Converged : SolveStatus::IterationBudget,
                opt.max_iters);
}

ShootingProblem make_image_problem(const RasterImage& fixed, const RasterImage& moving, int stride,
                                   double sigma, double weight, const IntegratorConfig& icfg) {
  validate(fixed);
  validate(moving);
  Lattice lat = make_lattice(fixed, stride);
  const double mv_x_max = moving.origin_x + moving.spacing * (moving.width - 1);
  const double mv_y_max = moving.origin_y + moving.spacing * (moving.height - 1);
  for (std::size_t i = 0; i < lat.points.size(); i += 2)
    if (lat.points[i] < moving.origin_x || lat.points[i] > mv_x_max ||
        lat.points[i + 1] < moving.origin_y || lat.points[i + 1] > mv_y_max)
      throw InvalidParamsError("lattice point lies outside the moving image domain");

  JetState state = make_jet_state(2, 0, lat.nx * lat.ny);
  state.positions = lat.points;
  ImageTarget target;
  target.fixed = fixed;
  target.moving = moving;
  target.grid = std::move(lat);
  target.weight = weight;
  return ShootingProblem{std::move(state), Target{std::move(target)}, KernelConfig(sigma, 2), icfg};
}

}  // namespace jetflow
