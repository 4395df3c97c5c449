#include "jetflow/dynamics.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "jetflow/detail/phase_core.hpp"
#include "jetflow/linalg.hpp"

namespace jetflow {

namespace detail {

int table_axis_id(int dim, int axis) {
  return MultiIndexTable::get(dim).id(MultiIndex::unit(dim, axis));
}

int table_axis_pair_id(int dim, int a, int b) {
  return MultiIndexTable::get(dim).id(MultiIndex::unit(dim, a) + MultiIndex::unit(dim, b));
}

std::vector<JetTerms::VelTerm> JetTerms::make_vel_terms(int du_limit) const {
  const MultiIndexTable& table = MultiIndexTable::get(dim);
  std::vector<VelTerm> out;
  for (int g = 0; g < du_limit; ++g) {
    const MultiIndex& mg = table.indices()[static_cast<std::size_t>(g)];
    for (int b = 0; b < m_count; ++b) {
      const MultiIndex& mb = table.indices()[static_cast<std::size_t>(b)];
      const double sign = (mb.total() % 2 == 0) ? 1.0 : -1.0;
      out.push_back(VelTerm{g, b, table.id(mg + mb), sign});
    }
  }
  return out;
}

namespace {

JetTerms build_terms(int dim, int order) {
  const MultiIndexTable& table = MultiIndexTable::get(dim);
  JetTerms jt;
  jt.dim = dim;
  jt.order = order;
  jt.m_count = table.count_up_to(order);
  jt.du_count = table.count_up_to(order + 1);
  jt.kernel_count = table.count_up_to(2 * order + 1);
  jt.vel = jt.make_vel_terms(jt.du_count);

  jt.slot_axis1.assign(static_cast<std::size_t>(jt.m_count), -1);
  jt.slot_axes2.assign(static_cast<std::size_t>(jt.m_count), {-1, -1});
  for (int s = 0; s < jt.m_count; ++s) {
    const MultiIndex& m = table.indices()[static_cast<std::size_t>(s)];
    if (m.total() == 1) {
      for (int e = 0; e < dim; ++e)
        if (m[e] == 1) jt.slot_axis1[static_cast<std::size_t>(s)] = e;
    } else if (m.total() == 2) {
      int first = -1, second = -1;
      for (int e = 0; e < dim; ++e) {
        if (m[e] == 2) first = second = e;
        if (m[e] == 1) (first < 0 ? first : second) = e;
      }
      jt.slot_axes2[static_cast<std::size_t>(s)] = {first, second};
    }
  }

  for (int delta = 0; delta < jt.m_count; ++delta) {
    const MultiIndex& md = table.indices()[static_cast<std::size_t>(delta)];
    for (int e = 0; e < dim; ++e) {
      if (md[e] == 0) continue;
      MultiIndex gamma = subtract(md, MultiIndex::unit(dim, e));
      for (int beta = 0; beta < jt.m_count; ++beta) {
        const MultiIndex& mb = table.indices()[static_cast<std::size_t>(beta)];
        if (!contains(mb, gamma) || beta == table.id(gamma)) continue;
        // derivative index beta - gamma = beta - delta + e_e
        const MultiIndex du_idx = subtract(mb, gamma);
        jt.stretch.push_back(JetTerms::StretchTerm{delta, beta, e, table.id(du_idx),
                                                   static_cast<double>(binomial(mb, gamma))});
      }
    }
    for (int beta = 0; beta < jt.m_count; ++beta) {
      const MultiIndex& mb = table.indices()[static_cast<std::size_t>(beta)];
      if (!contains(mb, md)) continue;
      const MultiIndex gamma = subtract(mb, md);
      JetTerms::ForceTerm t;
      t.delta = delta;
      t.beta = beta;
      t.coef = static_cast<double>(binomial(mb, md));
      t.gamma_plus_axis = {0, 0, 0};
      for (int alpha = 0; alpha < dim; ++alpha)
        t.gamma_plus_axis[static_cast<std::size_t>(alpha)] =
            table.id(gamma + MultiIndex::unit(dim, alpha));
      jt.force.push_back(t);
    }
  }
  return jt;
}

}  // namespace

const JetTerms& JetTerms::get(int dim, int order) {
  static const JetTerms t20 = build_terms(2, 0);
  static const JetTerms t21 = build_terms(2, 1);
  static const JetTerms t22 = build_terms(2, 2);
  static const JetTerms t30 = build_terms(3, 0);
  static const JetTerms t31 = build_terms(3, 1);
  static const JetTerms t32 = build_terms(3, 2);
  if (dim == 2) return order == 0 ? t20 : (order == 1 ? t21 : t22);
  return order == 0 ? t30 : (order == 1 ? t31 : t32);
}

}  // namespace detail

PhaseLayout PhaseLayout::of(int dim, int order, int count) {
  PhaseLayout l;
  l.dim = dim;
  l.order = order;
  l.count = count;
  const std::size_t n = static_cast<std::size_t>(count);
  const std::size_t d = static_cast<std::size_t>(dim);
  l.off_pos = 0;
  l.off_jac = l.off_pos + n * d;
  l.off_hess = l.off_jac + (order >= 1 ? n * d * d : 0);
  l.off_p = l.off_hess + (order >= 2 ? n * d * d * d : 0);
  l.off_mu1 = l.off_p + n * d;
  l.off_mu2 = l.off_mu1 + (order >= 1 ? n * d * d : 0);
  l.size = l.off_mu2 + (order >= 2 ? n * d * d * d : 0);
  return l;
}

std::vector<double> flatten(const PhasePoint& x) {
  const PhaseLayout l = PhaseLayout::of(x.state.dim, x.state.order, x.state.count);
  std::vector<double> y(l.size, 0.0);
  std::copy(x.state.positions.begin(), x.state.positions.end(), y.begin() + static_cast<std::ptrdiff_t>(l.off_pos));
  std::copy(x.state.jacobians.begin(), x.state.jacobians.end(), y.begin() + static_cast<std::ptrdiff_t>(l.off_jac));
  std::copy(x.state.hessians.begin(), x.state.hessians.end(), y.begin() + static_cast<std::ptrdiff_t>(l.off_hess));
  std::copy(x.momentum.p.begin(), x.momentum.p.end(), y.begin() + static_cast<std::ptrdiff_t>(l.off_p));
  std::copy(x.momentum.mu1.begin(), x.momentum.mu1.end(), y.begin() + static_cast<std::ptrdiff_t>(l.off_mu1));
  std::copy(x.momentum.mu2.begin(), x.momentum.mu2.end(), y.begin() + static_cast<std::ptrdiff_t>(l.off_mu2));
  return y;
}

PhasePoint unflatten(const PhaseLayout& l, const double* y) {
  PhasePoint x = make_phase_point(l.dim, l.order, l.count);
  std::copy(y + l.off_pos, y + l.off_pos + x.state.positions.size(), x.state.positions.begin());
  std::copy(y + l.off_jac, y + l.off_jac + x.state.jacobians.size(), x.state.jacobians.begin());
  std::copy(y + l.off_hess, y + l.off_hess + x.state.hessians.size(), x.state.hessians.begin());
  std::copy(y + l.off_p, y + l.off_p + x.momentum.p.size(), x.momentum.p.begin());
  std::copy(y + l.off_mu1, y + l.off_mu1 + x.momentum.mu1.size(), x.momentum.mu1.begin());
  std::copy(y + l.off_mu2, y + l.off_mu2 + x.momentum.mu2.size(), x.momentum.mu2.begin());
  return x;
}

void velocity_at(const VelocityField& v, const MultiIndex& alpha, const double* x, double* out) {
  const JetState& st = v.source.state;
  if (alpha.total() + st.order > kMaxDerivOrder)
    throw DerivativeOrderError("velocity derivative order " + std::to_string(alpha.total()) +
                               " plus jet order " + std::to_string(st.order) + " exceeds " +
                               std::to_string(kMaxDerivOrder));
  if (v.kernel.dim != st.dim) throw InvariantViolationError("kernel and source dimensions disagree");
  const detail::JetTerms& jt = detail::JetTerms::get(st.dim, st.order);
  const MultiIndexTable& table = MultiIndexTable::get(st.dim);
  const int d = st.dim;

  std::vector<double> coeffs(static_cast<std::size_t>(st.count) * static_cast<std::size_t>(jt.m_count * d));
  for (int j = 0; j < st.count; ++j)
    detail::momentum_coefficients(jt, v.source.momentum.point(j),
                                  st.order >= 1 ? v.source.momentum.first(j) : nullptr,
                                  st.order >= 2 ? v.source.momentum.second(j) : nullptr,
                                  coeffs.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(jt.m_count * d));

  for (int a = 0; a < d; ++a) out[a] = 0.0;
  const int kernel_limit = table.count_up_to(alpha.total() + st.order);
  std::vector<double> kernel_buf(static_cast<std::size_t>(kernel_limit));
  double diff[3];
  for (int j = 0; j < st.count; ++j) {
    for (int e = 0; e < d; ++e) diff[e] = x[e] - st.position(j)[e];
    detail::gaussian_derivatives_limited(v.kernel, diff, kernel_limit, kernel_buf.data());
    for (int b = 0; b < jt.m_count; ++b) {
      const MultiIndex& mb = table.indices()[static_cast<std::size_t>(b)];
      const double sign = (mb.total() % 2 == 0) ? 1.0 : -1.0;
      const double k = sign * kernel_buf[static_cast<std::size_t>(table.id(alpha + mb))];
      for (int a = 0; a < d; ++a)
        out[a] += coeffs[static_cast<std::size_t>((j * jt.m_count + b) * d + a)] * k;
    }
  }
}

double hamiltonian(const KernelConfig& cfg, const PhasePoint& x) {
  validate(x);
  if (cfg.dim != x.state.dim) throw InvariantViolationError("kernel and state dimensions disagree");
  const PhaseLayout l = PhaseLayout::of(x.state.dim, x.state.order, x.state.count);
  const std::vector<double> y = flatten(x);
  return detail::hamiltonian_flat(cfg, l, y.data());
}

PhasePoint rhs(const KernelConfig& cfg, const PhasePoint& x) {
  validate(x);
  if (cfg.dim != x.state.dim) throw InvariantViolationError("kernel and state dimensions disagree");
  const PhaseLayout l = PhaseLayout::of(x.state.dim, x.state.order, x.state.count);
  const std::vector<double> y = flatten(x);
  std::vector<double> dy(l.size, 0.0);
  detail::phase_rhs_flat(cfg, l, y.data(), dy.data());
  return unflatten(l, dy.data());
}

namespace {

// Augmented state: phase vector followed by per-seed flow-jet blocks.
struct FlowSpec {
  PhaseLayout phase;
  int seed_count = 0;
  int flow_order = 0;  // 0..3
  int du_limit = 0;
  int kernel_limit = 0;
  std::vector<detail::JetTerms::VelTerm> seed_terms;

  std::size_t seed_block() const {
    const std::size_t d = static_cast<std::size_t>(phase.dim);
    std::size_t s = d;
    if (flow_order >= 1) s += d * d;
    if (flow_order >= 2) s += d * d * d;
    if (flow_order >= 3) s += d * d * d * d;
    return s;
  }
  std::size_t size() const { return phase.size + static_cast<std::size_t>(seed_count) * seed_block(); }
  std::size_t seed_off(int s) const { return phase.size + static_cast<std::size_t>(s) * seed_block(); }
};

void flow_rhs(const KernelConfig& cfg, const FlowSpec& spec, const double* y, double* dy) {
  const PhaseLayout& l = spec.phase;
  detail::phase_rhs_flat(cfg, l, y, dy);
  if (spec.seed_count == 0) return;

  const detail::JetTerms& jt = detail::JetTerms::get(l.dim, l.order);
  const int d = l.dim;
  std::vector<double> coeffs(static_cast<std::size_t>(l.count) * static_cast<std::size_t>(jt.m_count * d));
  for (int j = 0; j < l.count; ++j)
    detail::momentum_coefficients(jt, y + l.off_p + j * d,
                                  l.order >= 1 ? y + l.off_mu1 + j * d * d : nullptr,
                                  l.order >= 2 ? y + l.off_mu2 + j * d * d * d : nullptr,
                                  coeffs.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(jt.m_count * d));

  std::vector<double> du(static_cast<std::size_t>(spec.du_limit * d));
  std::vector<double> kernel_buf(static_cast<std::size_t>(spec.kernel_limit));
  double diff[3];

  for (int s = 0; s < spec.seed_count; ++s) {
    const double* blk = y + spec.seed_off(s);
    double* dblk = dy + spec.seed_off(s);
    detail::velocity_derivs_at(cfg, jt, l.count, y + l.off_pos, coeffs.data(), blk, spec.du_limit,
                               spec.kernel_limit, spec.seed_terms, du.data(), kernel_buf.data(), diff);
    for (int a = 0; a < d; ++a) dblk[a] = du[a];
    if (spec.flow_order >= 1) {
      const double* J = blk + d;
      double* dJ = dblk + d;
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
          double acc = 0.0;
          for (int e = 0; e < d; ++e)
            acc += du[static_cast<std::size_t>(detail::table_axis_id(d, e) * d + a)] * J[e * d + b];
          dJ[a * d + b] = acc;
        }
    }
    if (spec.flow_order >= 2) {
      const double* J = blk + d;
      const double* Q2 = blk + d + d * d;
      double* dQ2 = dblk + d + d * d;
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
          for (int c = b; c < d; ++c) {
            double acc = 0.0;
            for (int e = 0; e < d; ++e)
              acc += du[static_cast<std::size_t>(detail::table_axis_id(d, e) * d + a)] * Q2[(e * d + b) * d + c];
            for (int e = 0; e < d; ++e)
              for (int f = 0; f < d; ++f)
                acc += du[static_cast<std::size_t>(detail::table_axis_pair_id(d, e, f) * d + a)] *
                       J[e * d + b] * J[f * d + c];
            dQ2[(a * d + b) * d + c] = acc;
            if (c != b) dQ2[(a * d + c) * d + b] = acc;
          }
    }
    if (spec.flow_order >= 3) {
      const double* J = blk + d;
      const double* Q2 = blk + d + d * d;
      const double* Q3 = blk + d + d * d + d * d * d;
      double* dQ3 = dblk + d + d * d + d * d * d;
      const MultiIndexTable& table = MultiIndexTable::get(d);
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
          for (int c = b; c < d; ++c)
            for (int g = c; g < d; ++g) {
              double acc = 0.0;
              for (int e = 0; e < d; ++e)
                acc += du[static_cast<std::size_t>(detail::table_axis_id(d, e) * d + a)] *
                       Q3[((e * d + b) * d + c) * d + g];
              for (int e = 0; e < d; ++e)
                for (int f = 0; f < d; ++f) {
                  const double d2 = du[static_cast<std::size_t>(detail::table_axis_pair_id(d, e, f) * d + a)];
                  acc += d2 * (Q2[(e * d + b) * d + c] * J[f * d + g] +
                               Q2[(e * d + b) * d + g] * J[f * d + c] +
                               Q2[(e * d + c) * d + g] * J[f * d + b]);
                }
              for (int e = 0; e < d; ++e)
                for (int f = 0; f < d; ++f)
                  for (int h = 0; h < d; ++h) {
                    const MultiIndex m3 = MultiIndex::unit(d, e) + MultiIndex::unit(d, f) + MultiIndex::unit(d, h);
                    acc += du[static_cast<std::size_t>(table.id(m3) * d + a)] * J[e * d + b] *
                           J[f * d + c] * J[h * d + g];
                  }
              // symmetric in (b, c, g): mirror to every permutation
              const int perms[6][3] = {{b, c, g}, {b, g, c}, {c, b, g}, {c, g, b}, {g, b, c}, {g, c, b}};
              for (const auto& p : perms)
                dQ3[((a * d + p[0]) * d + p[1]) * d + p[2]] = acc;
            }
    }
  }
}

void check_phase_health(const PhaseLayout& l, const double* y, int step, double t) {
  const double* pos = y + l.off_pos;
  for (int i = 0; i < l.count * l.dim; ++i)
    if (!std::isfinite(pos[i]))
      throw BlowUpError("non-finite position at step " + std::to_string(step) + " (t=" +
                        std::to_string(t) + ")");
  for (int i = 0; i < l.count; ++i)
    for (int j = i + 1; j < l.count; ++j) {
      double s = 0.0;
      for (int e = 0; e < l.dim; ++e) {
        const double dd = pos[i * l.dim + e] - pos[j * l.dim + e];
        s += dd * dd;
      }
      if (s < kCoincidenceTol * kCoincidenceTol)
        throw CoincidentParticlesError("particles " + std::to_string(i) + " and " + std::to_string(j) +
                                       " collided at step " + std::to_string(step) + " (t=" +
                                       std::to_string(t) + ")");
    }
}

// Classical RK4 over [t0, t1] with `steps` uniform steps; calls `store`
// after every accepted state (including the initial one).
template <class Rhs, class Store>
void rk4_drive(const Rhs& f, std::vector<double>& y, double t0, double t1, int steps,
               const Store& store) {
  const std::size_t n = y.size();
  const double h = (t1 - t0) / steps;
  std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
  store(0, t0, y);
  for (int s = 0; s < steps; ++s) {
    f(y.data(), k1.data());
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
    f(tmp.data(), k2.data());
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
    f(tmp.data(), k3.data());
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * k3[i];
    f(tmp.data(), k4.data());
    for (std::size_t i = 0; i < n; ++i)
      y[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    store(s + 1, t0 + (s + 1) * h, y);
  }
}

}  // namespace

Trajectory integrate(const KernelConfig& cfg, const IntegratorConfig& icfg, const PhasePoint& x0) {
  validate(x0);
  if (cfg.dim != x0.state.dim) throw InvariantViolationError("kernel and state dimensions disagree");
  if (icfg.steps < 1) throw InvariantViolationError("integrator needs at least one step");
  const PhaseLayout l = PhaseLayout::of(x0.state.dim, x0.state.order, x0.state.count);
  Trajectory traj;
  traj.layout = l;
  traj.times.reserve(static_cast<std::size_t>(icfg.steps) + 1);
  traj.samples.reserve(static_cast<std::size_t>(icfg.steps) + 1);
  std::vector<double> y = flatten(x0);
  rk4_drive([&](const double* yy, double* dy) { detail::phase_rhs_flat(cfg, l, yy, dy); }, y, 0.0, 1.0,
            icfg.steps, [&](int step, double t, const std::vector<double>& state) {
              check_phase_health(l, state.data(), step, t);
              traj.times.push_back(t);
              traj.samples.push_back(state);
            });
  return traj;
}

const double* FlowMap::point(int t, int s) const {
  return points.data() + (static_cast<std::size_t>(t) * static_cast<std::size_t>(seed_count) +
                          static_cast<std::size_t>(s)) * static_cast<std::size_t>(dim);
}
const double* FlowMap::jacobian(int t, int s) const {
  return jacobians.data() + (static_cast<std::size_t>(t) * static_cast<std::size_t>(seed_count) +
                             static_cast<std::size_t>(s)) * static_cast<std::size_t>(dim * dim);
}
const double* FlowMap::second_deriv(int t, int s) const {
  return second.data() + (static_cast<std::size_t>(t) * static_cast<std::size_t>(seed_count) +
                          static_cast<std::size_t>(s)) * static_cast<std::size_t>(dim * dim * dim);
}
const double* FlowMap::third_deriv(int t, int s) const {
  return third.data() + (static_cast<std::size_t>(t) * static_cast<std::size_t>(seed_count) +
                         static_cast<std::size_t>(s)) * static_cast<std::size_t>(dim * dim * dim * dim);
}
double FlowMap::jacobian_det(int t, int s) const { return det_small(jacobian(t, s), dim); }

FlowMap flow_jets(const KernelConfig& cfg, const IntegratorConfig& icfg, const PhasePoint& x_at_t0,
                  const std::vector<double>& seeds, int jet_order, double t0, double t1,
                  Trajectory* phase_out) {
  validate(x_at_t0);
  if (cfg.dim != x_at_t0.state.dim) throw InvariantViolationError("kernel and state dimensions disagree");
  if (icfg.steps < 1) throw InvariantViolationError("integrator needs at least one step");
  if (jet_order < 0 || jet_order > 3)
    throw InvariantViolationError("flow jet order must be between 0 and 3");
  if (jet_order + x_at_t0.state.order > kMaxDerivOrder)
    throw DerivativeOrderError("flow jet order plus source jet order exceeds " +
                               std::to_string(kMaxDerivOrder));
  const int d = x_at_t0.state.dim;
  if (seeds.size() % static_cast<std::size_t>(d) != 0)
    throw InvariantViolationError("seed buffer size is not a multiple of dim");

  FlowSpec spec;
  spec.phase = PhaseLayout::of(d, x_at_t0.state.order, x_at_t0.state.count);
  spec.seed_count = static_cast<int>(seeds.size() / static_cast<std::size_t>(d));
  spec.flow_order = jet_order;
  const MultiIndexTable& table = MultiIndexTable::get(d);
  spec.du_limit = table.count_up_to(jet_order);
  spec.kernel_limit = table.count_up_to(jet_order + x_at_t0.state.order);
  spec.seed_terms = detail::JetTerms::get(d, x_at_t0.state.order).make_vel_terms(spec.du_limit);

  std::vector<double> y(spec.size(), 0.0);
  {
    const std::vector<double> phase = flatten(x_at_t0);
    std::copy(phase.begin(), phase.end(), y.begin());
    for (int s = 0; s < spec.seed_count; ++s) {
      double* blk = y.data() + spec.seed_off(s);
      for (int e = 0; e < d; ++e) blk[e] = seeds[static_cast<std::size_t>(s * d + e)];
      if (jet_order >= 1)
        for (int a = 0; a < d; ++a) blk[d + a * d + a] = 1.0;
    }
  }

  FlowMap flow;
  flow.dim = d;
  flow.jet_order = jet_order;
  flow.seed_count = spec.seed_count;
  if (phase_out) {
    phase_out->layout = spec.phase;
    phase_out->times.clear();
    phase_out->samples.clear();
  }

  const std::size_t d2 = static_cast<std::size_t>(d * d);
  const std::size_t d3 = static_cast<std::size_t>(d * d * d);
  const std::size_t d4 = static_cast<std::size_t>(d * d * d * d);
  rk4_drive([&](const double* yy, double* dy) { flow_rhs(cfg, spec, yy, dy); }, y, t0, t1, icfg.steps,
            [&](int step, double t, const std::vector<double>& state) {
              check_phase_health(spec.phase, state.data(), step, t);
              flow.times.push_back(t);
              for (int s = 0; s < spec.seed_count; ++s) {
                const double* blk = state.data() + spec.seed_off(s);
                for (int e = 0; e < d; ++e) {
                  if (!std::isfinite(blk[e]))
                    throw BlowUpError("non-finite flow point at step " + std::to_string(step));
                  flow.points.push_back(blk[e]);
                }
                if (jet_order >= 1) {
                  const double det = det_small(blk + d, d);
                  if (!(det > 0.0))
                    throw BlowUpError("flow jacobian determinant " + std::to_string(det) +
                                      " is not positive at step " + std::to_string(step) + " (t=" +
                                      std::to_string(t) + ")");
                  flow.jacobians.insert(flow.jacobians.end(), blk + d, blk + d + d2);
                }
                if (jet_order >= 2)
                  flow.second.insert(flow.second.end(), blk + d + static_cast<std::ptrdiff_t>(d2),
                                     blk + d + static_cast<std::ptrdiff_t>(d2 + d3));
                if (jet_order >= 3)
                  flow.third.insert(flow.third.end(), blk + d + static_cast<std::ptrdiff_t>(d2 + d3),
                                    blk + d + static_cast<std::ptrdiff_t>(d2 + d3 + d4));
              }
              if (phase_out) {
                phase_out->times.push_back(t);
                phase_out->samples.emplace_back(state.begin(),
                                                state.begin() + static_cast<std::ptrdiff_t>(spec.phase.size));
              }
            });
  return flow;
}

FlowMap flow_points(const KernelConfig& cfg, const IntegratorConfig& icfg, const PhasePoint& x0,
                    const std::vector<double>& seeds, bool with_jacobian) {
  return flow_jets(cfg, icfg, x0, seeds, with_jacobian ? 1 : 0, 0.0, 1.0);
}

JetMomentum pushforward_momentum(const FlowMap& flow, int sample_index, const JetMomentum& m) {
  validate(m);
  if (m.dim != flow.dim) throw InvariantViolationError("flow and momentum dimensions disagree");
  if (m.count != flow.seed_count)
    throw InvariantViolationError("momentum carries " + std::to_string(m.count) +
                                  " particles but the flow tracks " + std::to_string(flow.seed_count));
  if (sample_index < 0 || sample_index >= static_cast<int>(flow.times.size()))
    throw InvariantViolationError("flow sample index out of range");
  if (flow.jet_order < m.order + 1)
    throw MissingJacobianError("momentum of order " + std::to_string(m.order) +
                               " needs flow jets of order " + std::to_string(m.order + 1) +
                               ", flow carries " + std::to_string(flow.jet_order));

  const int d = m.dim;
  const int k = m.order;
  const detail::JetTerms& jt = detail::JetTerms::get(d, k);
  const MultiIndexTable& table = MultiIndexTable::get(d);
  const int mc = jt.m_count;

  JetMomentum out = make_jet_momentum(d, k, m.count);
  std::vector<double> c(static_cast<std::size_t>(mc * d));
  std::vector<double> cp(static_cast<std::size_t>(mc * d));

  for (int j = 0; j < m.count; ++j) {
    detail::momentum_coefficients(jt, m.point(j), k >= 1 ? m.first(j) : nullptr,
                                  k >= 2 ? m.second(j) : nullptr, c.data());

    const double* A = flow.jacobian(sample_index, j);
    const double* B = k >= 1 ? flow.second_deriv(sample_index, j) : nullptr;
    const double* C3 = k >= 2 ? flow.third_deriv(sample_index, j) : nullptr;

    // Jacobian polynomial DPsi[a][e](x) around the foot point, degree k.
    std::vector<TaylorPoly> dpsi(static_cast<std::size_t>(d * d), TaylorPoly::zero(d, k));
    for (int a = 0; a < d; ++a)
      for (int e = 0; e < d; ++e) {
        TaylorPoly& p = dpsi[static_cast<std::size_t>(a * d + e)];
        p.set_coeff(MultiIndex::zero(d), A[a * d + e]);
        if (k >= 1)
          for (int b = 0; b < d; ++b)
            p.set_coeff(MultiIndex::unit(d, b), B[(a * d + e) * d + b]);
        if (k >= 2)
          for (int b = 0; b < d; ++b)
            for (int cc = b; cc < d; ++cc) {
              const MultiIndex g = MultiIndex::unit(d, b) + MultiIndex::unit(d, cc);
              p.set_coeff(g, C3[((a * d + e) * d + b) * d + cc] / factorial(g));
            }
      }

    // V = (DPsi)^{-1} as a truncated Neumann series around A^{-1}.
    double ainv[9];
    invert_small(A, d, ainv);
    std::vector<TaylorPoly> em(static_cast<std::size_t>(d * d), TaylorPoly::zero(d, k));
    for (int a = 0; a < d; ++a)
      for (int e = 0; e < d; ++e) {
        TaylorPoly acc = TaylorPoly::zero(d, k);
        for (int f = 0; f < d; ++f) {
          TaylorPoly t = dpsi[static_cast<std::size_t>(f * d + e)] * ainv[a * d + f];
          acc += t;
        }
        acc.set_coeff(MultiIndex::zero(d), acc.coeff(MultiIndex::zero(d)) - (a == e ? 1.0 : 0.0));
        em[static_cast<std::size_t>(a * d + e)] = acc;  // E = A^{-1} DPsi - I, no constant term
      }
    std::vector<TaylorPoly> inv_ie(static_cast<std::size_t>(d * d), TaylorPoly::zero(d, k));
    for (int a = 0; a < d; ++a) inv_ie[static_cast<std::size_t>(a * d + a)].set_coeff(MultiIndex::zero(d), 1.0);
    if (k >= 1)
      for (int a = 0; a < d; ++a)
        for (int e = 0; e < d; ++e) inv_ie[static_cast<std::size_t>(a * d + e)] -= em[static_cast<std::size_t>(a * d + e)];
    if (k >= 2)
      for (int a = 0; a < d; ++a)
        for (int e = 0; e < d; ++e) {
          TaylorPoly acc = TaylorPoly::zero(d, k);
          for (int f = 0; f < d; ++f)
            acc += truncated_mul(em[static_cast<std::size_t>(a * d + f)], em[static_cast<std::size_t>(f * d + e)]);
          inv_ie[static_cast<std::size_t>(a * d + e)] += acc;
        }
    std::vector<TaylorPoly> v(static_cast<std::size_t>(d * d), TaylorPoly::zero(d, k));
    for (int a = 0; a < d; ++a)
      for (int e = 0; e < d; ++e) {
        TaylorPoly acc = TaylorPoly::zero(d, k);
        for (int f = 0; f < d; ++f)
          acc += inv_ie[static_cast<std::size_t>(a * d + f)] * ainv[f * d + e];
        v[static_cast<std::size_t>(a * d + e)] = acc;
      }

    // Displacement jets s_a = Psi_a - Psi_a(q), zero constant term, degree k.
    std::vector<TaylorPoly> disp(static_cast<std::size_t>(d), TaylorPoly::zero(d, k));
    if (k >= 1)
      for (int a = 0; a < d; ++a) {
        for (int b = 0; b < d; ++b) disp[static_cast<std::size_t>(a)].set_coeff(MultiIndex::unit(d, b), A[a * d + b]);
        if (k >= 2)
          for (int b = 0; b < d; ++b)
            for (int cc = b; cc < d; ++cc) {
              const MultiIndex g = MultiIndex::unit(d, b) + MultiIndex::unit(d, cc);
              disp[static_cast<std::size_t>(a)].set_coeff(g, B[(a * d + b) * d + cc] / factorial(g));
            }
      }

    // c'_{delta,e} = <m, V * (monomial. Psi)>, one slot at a time.
    for (int slot = 0; slot < mc; ++slot) {
      const MultiIndex& delta = table.indices()[static_cast<std::size_t>(slot)];
      TaylorPoly g = TaylorPoly::zero(d, k);
      if (delta.total() == 0) {
        g.set_coeff(delta, 1.0);
      } else {
        TaylorPoly mono = TaylorPoly::zero(d, k);
        mono.set_coeff(delta, 1.0 / factorial(delta));
        g = compose(mono, disp);
      }
      for (int e = 0; e < d; ++e) {
        double acc = 0.0;
        for (int a = 0; a < d; ++a) {
          const TaylorPoly w_a = truncated_mul(v[static_cast<std::size_t>(a * d + e)], g);
          for (int b = 0; b < mc; ++b) {
            const MultiIndex& beta = table.indices()[static_cast<std::size_t>(b)];
            acc += c[static_cast<std::size_t>(b * d + a)] * w_a.derivative(beta);
          }
        }
        cp[static_cast<std::size_t>(slot * d + e)] = acc;
      }
    }

    for (int a = 0; a < d; ++a) out.point(j)[a] = cp[static_cast<std::size_t>(a)];
    for (int slot = 1; slot < mc; ++slot) {
      const MultiIndex& mi = table.indices()[static_cast<std::size_t>(slot)];
      if (mi.total() == 1) {
        const int b = jt.slot_axis1[static_cast<std::size_t>(slot)];
        for (int a = 0; a < d; ++a) out.first(j)[a * d + b] = cp[static_cast<std::size_t>(slot * d + a)];
      } else {
        const int b = jt.slot_axes2[static_cast<std::size_t>(slot)][0];
        const int cc = jt.slot_axes2[static_cast<std::size_t>(slot)][1];
        for (int a = 0; a < d; ++a) {
          const double val = cp[static_cast<std::size_t>(slot * d + a)];
          if (b == cc) {
            out.second(j)[(a * d + b) * d + b] = val;
          } else {
            out.second(j)[(a * d + b) * d + cc] = 0.5 * val;
            out.second(j)[(a * d + cc) * d + b] = 0.5 * val;
          }
        }
      }
    }
  }
  return out;
}

double pair_with_field(const PhasePoint& x, const PolyVectorField& w) {
  validate(x);
  if (w.dim != x.state.dim) throw InvariantViolationError("field and state dimensions disagree");
  const int d = x.state.dim;
  const int k = x.state.order;
  const detail::JetTerms& jt = detail::JetTerms::get(d, k);
  const MultiIndexTable& table = MultiIndexTable::get(d);
  std::vector<double> c(static_cast<std::size_t>(jt.m_count * d));
  double acc = 0.0;
  for (int j = 0; j < x.state.count; ++j) {
    detail::momentum_coefficients(jt, x.momentum.point(j), k >= 1 ? x.momentum.first(j) : nullptr,
                                  k >= 2 ? x.momentum.second(j) : nullptr, c.data());
    const std::vector<TaylorPoly> jets = w.jets_at(x.state.position(j), k);
    for (int b = 0; b < jt.m_count; ++b) {
      const MultiIndex& beta = table.indices()[static_cast<std::size_t>(b)];
      for (int a = 0; a < d; ++a)
        acc += c[static_cast<std::size_t>(b * d + a)] * jets[static_cast<std::size_t>(a)].derivative(beta);
    }
  }
  return acc;
}

JetMomentum spatial_momentum_from_cotangent(const JetState& q, const StateCotangent& cot) {
  validate(q);
  if (q.dim != cot.dim || q.order != cot.order || q.count != cot.count)
    throw InvariantViolationError("state and cotangent shapes disagree");
  const int d = q.dim;
  JetMomentum m = make_jet_momentum(d, q.order, q.count);
  m.p = cot.d_pos;
  for (int j = 0; j < q.count; ++j) {
    if (q.order >= 1) {
      const double* p1 = cot.d_jac.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(d * d);
      const double* q1 = q.jacobian(j);
      for (int a = 0; a < d; ++a)
        for (int e = 0; e < d; ++e) {
          double acc = 0.0;
          for (int b = 0; b < d; ++b) acc += p1[a * d + b] * q1[e * d + b];
          if (q.order >= 2) {
            const double* p2 = cot.d_hess.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(d * d * d);
            const double* q2 = q.hessian(j);
            for (int b = 0; b < d; ++b)
              for (int c = 0; c < d; ++c) acc += p2[(a * d + b) * d + c] * q2[(e * d + b) * d + c];
          }
          m.first(j)[a * d + e] = acc;
        }
    }
    if (q.order >= 2) {
      const double* p2 = cot.d_hess.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(d * d * d);
      const double* q1 = q.jacobian(j);
      for (int a = 0; a < d; ++a)
        for (int e = 0; e < d; ++e)
          for (int f = e; f < d; ++f) {
            double acc = 0.0;
            for (int b = 0; b < d; ++b)
              for (int c = 0; c < d; ++c) acc += p2[(a * d + b) * d + c] * q1[e * d + b] * q1[f * d + c];
            m.second(j)[(a * d + e) * d + f] = acc;
            if (f != e) m.second(j)[(a * d + f) * d + e] = acc;
          }
    }
  }
  return m;
}

}  // namespace jetflow
