#include "jetflow/taylor.hpp"

#include <cmath>

#include "jetflow/errors.hpp"

namespace jetflow {

namespace {

const MultiIndexTable& table_for(const TaylorPoly& p) { return MultiIndexTable::get(p.dim); }

double int_pow(double base, int n) {
  double r = 1.0;
  for (int i = 0; i < n; ++i) r *= base;
  return r;
}

}  // namespace

TaylorPoly TaylorPoly::zero(int dim, int degree) {
  TaylorPoly p;
  p.dim = dim;
  p.degree = degree;
  p.c.assign(static_cast<std::size_t>(MultiIndexTable::get(dim).count_up_to(degree)), 0.0);
  return p;
}

TaylorPoly TaylorPoly::constant(int dim, int degree, double value) {
  TaylorPoly p = zero(dim, degree);
  p.c[0] = value;
  return p;
}

double TaylorPoly::coeff(const MultiIndex& m) const {
  if (m.total() > degree) return 0.0;
  return c[static_cast<std::size_t>(table_for(*this).id(m))];
}

void TaylorPoly::set_coeff(const MultiIndex& m, double v) {
  if (m.total() > degree) throw InvariantViolationError("coefficient beyond truncation degree");
  c[static_cast<std::size_t>(table_for(*this).id(m))] = v;
}

double TaylorPoly::derivative(const MultiIndex& m) const { return factorial(m) * coeff(m); }

double TaylorPoly::eval(const double* x) const {
  const MultiIndexTable& table = table_for(*this);
  double sum = 0.0;
  for (std::size_t id = 0; id < c.size(); ++id) {
    if (c[id] == 0.0) continue;
    const MultiIndex& m = table.indices()[id];
    double term = c[id];
    for (int e = 0; e < dim; ++e) term *= int_pow(x[e], m[e]);
    sum += term;
  }
  return sum;
}

TaylorPoly& TaylorPoly::operator+=(const TaylorPoly& o) {
  if (dim != o.dim || degree != o.degree) throw InvariantViolationError("taylor shape mismatch");
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += o.c[i];
  return *this;
}

TaylorPoly& TaylorPoly::operator-=(const TaylorPoly& o) {
  if (dim != o.dim || degree != o.degree) throw InvariantViolationError("taylor shape mismatch");
  for (std::size_t i = 0; i < c.size(); ++i) c[i] -= o.c[i];
  return *this;
}

TaylorPoly& TaylorPoly::operator*=(double s) {
  for (double& v : c) v *= s;
  return *this;
}

TaylorPoly operator+(TaylorPoly a, const TaylorPoly& b) { return a += b; }
TaylorPoly operator-(TaylorPoly a, const TaylorPoly& b) { return a -= b; }
TaylorPoly operator*(const TaylorPoly& a, double s) {
  TaylorPoly r = a;
  r *= s;
  return r;
}

TaylorPoly truncated_mul(const TaylorPoly& a, const TaylorPoly& b) {
  if (a.dim != b.dim || a.degree != b.degree) throw InvariantViolationError("taylor shape mismatch");
  const MultiIndexTable& table = MultiIndexTable::get(a.dim);
  TaylorPoly r = TaylorPoly::zero(a.dim, a.degree);
  for (std::size_t ia = 0; ia < a.c.size(); ++ia) {
    if (a.c[ia] == 0.0) continue;
    const MultiIndex& ma = table.indices()[ia];
    for (std::size_t ib = 0; ib < b.c.size(); ++ib) {
      if (b.c[ib] == 0.0) continue;
      const MultiIndex& mb = table.indices()[ib];
      if (ma.total() + mb.total() > a.degree) continue;
      r.c[static_cast<std::size_t>(table.id(ma + mb))] += a.c[ia] * b.c[ib];
    }
  }
  return r;
}

TaylorPoly compose(const TaylorPoly& p, const std::vector<TaylorPoly>& args) {
  if (static_cast<int>(args.size()) != p.dim)
    throw InvariantViolationError("compose needs one substituted polynomial per variable");
  for (const TaylorPoly& s : args)
    if (s.c.empty() || s.c[0] != 0.0)
      throw InvariantViolationError("compose requires zero constant terms in substituted polynomials");
  const MultiIndexTable& table = MultiIndexTable::get(p.dim);
  TaylorPoly r = TaylorPoly::zero(p.dim, p.degree);
  for (std::size_t id = 0; id < p.c.size(); ++id) {
    if (p.c[id] == 0.0) continue;
    const MultiIndex& m = table.indices()[id];
    TaylorPoly term = TaylorPoly::constant(p.dim, p.degree, p.c[id]);
    for (int e = 0; e < p.dim; ++e)
      for (int rep = 0; rep < m[e]; ++rep) term = truncated_mul(term, args[static_cast<std::size_t>(e)]);
    r += term;
  }
  return r;
}

TaylorPoly shift_base(const TaylorPoly& p, const double* point, int out_degree) {
  const MultiIndexTable& table = MultiIndexTable::get(p.dim);
  TaylorPoly r = TaylorPoly::zero(p.dim, out_degree);
  const int n_out = table.count_up_to(out_degree);
  for (int ob = 0; ob < n_out; ++ob) {
    const MultiIndex& beta = table.indices()[static_cast<std::size_t>(ob)];
    double sum = 0.0;
    for (std::size_t ig = 0; ig < p.c.size(); ++ig) {
      if (p.c[ig] == 0.0) continue;
      const MultiIndex& gamma = table.indices()[ig];
      if (!contains(gamma, beta)) continue;
      const MultiIndex rest = subtract(gamma, beta);
      double term = p.c[ig] * binomial(gamma, beta);
      for (int e = 0; e < p.dim; ++e) term *= int_pow(point[e], rest[e]);
      sum += term;
    }
    r.c[static_cast<std::size_t>(ob)] = sum;
  }
  return r;
}

PolyVectorField PolyVectorField::zero(int dim, int degree) {
  PolyVectorField f;
  f.dim = dim;
  f.comp.assign(static_cast<std::size_t>(dim), TaylorPoly::zero(dim, degree));
  return f;
}

void PolyVectorField::eval(const double* x, double* out) const {
  for (int a = 0; a < dim; ++a) out[a] = comp[static_cast<std::size_t>(a)].eval(x);
}

std::vector<TaylorPoly> PolyVectorField::jets_at(const double* point, int jet_degree) const {
  std::vector<TaylorPoly> jets;
  jets.reserve(comp.size());
  for (const TaylorPoly& p : comp) jets.push_back(shift_base(p, point, jet_degree));
  return jets;
}

}  // namespace jetflow
