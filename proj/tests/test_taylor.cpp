#include <doctest.h>

#include <cmath>

#include "jetflow/taylor.hpp"
#include "support/test_support.hpp"

using namespace jetflow;
using jetflow::testing::Rng;

TEST_CASE("shifting the base point reproduces derivatives of the polynomial") {
  // p(x, y) = 2 + x - 3 y + 0.5 x^2 + x y
  TaylorPoly p = TaylorPoly::zero(2, 2);
  p.set_coeff(MultiIndex{{0, 0, 0}, 2}, 2.0);
  p.set_coeff(MultiIndex{{1, 0, 0}, 2}, 1.0);
  p.set_coeff(MultiIndex{{0, 1, 0}, 2}, -3.0);
  p.set_coeff(MultiIndex{{2, 0, 0}, 2}, 0.5);
  p.set_coeff(MultiIndex{{1, 1, 0}, 2}, 1.0);
  const double q[2] = {0.7, -0.2};
  const TaylorPoly s = shift_base(p, q, 2);
  // value: p(q)
  CHECK(s.coeff(MultiIndex::zero(2)) == doctest::Approx(p.eval(q)).epsilon(1e-14));
  // d/dx = 1 + x + y, d/dy = -3 + x at q
  CHECK(s.derivative(MultiIndex{{1, 0, 0}, 2}) == doctest::Approx(1 + q[0] + q[1]).epsilon(1e-14));
  CHECK(s.derivative(MultiIndex{{0, 1, 0}, 2}) == doctest::Approx(-3 + q[0]).epsilon(1e-14));
  CHECK(s.derivative(MultiIndex{{2, 0, 0}, 2}) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(s.derivative(MultiIndex{{1, 1, 0}, 2}) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("truncated products agree with pointwise products for low degrees") {
  Rng rng(80);
  TaylorPoly a = TaylorPoly::zero(2, 2);
  TaylorPoly b = TaylorPoly::zero(2, 2);
  // keep the product degree within the cap: linear times linear
  a.set_coeff(MultiIndex{{0, 0, 0}, 2}, rng.uniform(-1, 1));
  a.set_coeff(MultiIndex{{1, 0, 0}, 2}, rng.uniform(-1, 1));
  a.set_coeff(MultiIndex{{0, 1, 0}, 2}, rng.uniform(-1, 1));
  b.set_coeff(MultiIndex{{0, 0, 0}, 2}, rng.uniform(-1, 1));
  b.set_coeff(MultiIndex{{1, 0, 0}, 2}, rng.uniform(-1, 1));
  b.set_coeff(MultiIndex{{0, 1, 0}, 2}, rng.uniform(-1, 1));
  const TaylorPoly ab = truncated_mul(a, b);
  for (int t = 0; t < 20; ++t) {
    const double x[2] = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    CHECK(ab.eval(x) == doctest::Approx(a.eval(x) * b.eval(x)).epsilon(1e-13));
  }
}

TEST_CASE("composition matches direct evaluation when no truncation occurs") {
  Rng rng(81);
  // p of degree 2 composed with linear maps stays degree 2: exact
  TaylorPoly p = TaylorPoly::zero(2, 2);
  for (double& c : p.c) c = rng.uniform(-1, 1);
  std::vector<TaylorPoly> args(2, TaylorPoly::zero(2, 2));
  double lin[2][2];
  for (int a = 0; a < 2; ++a)
    for (int e = 0; e < 2; ++e) {
      lin[a][e] = rng.uniform(-1, 1);
      args[static_cast<std::size_t>(a)].set_coeff(MultiIndex::unit(2, e), lin[a][e]);
    }
  const TaylorPoly comp = compose(p, args);
  for (int t = 0; t < 20; ++t) {
    const double x[2] = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const double s[2] = {lin[0][0] * x[0] + lin[0][1] * x[1], lin[1][0] * x[0] + lin[1][1] * x[1]};
    CHECK(comp.eval(x) == doctest::Approx(p.eval(s)).epsilon(1e-12));
  }
}

TEST_CASE("composition rejects substitutions with constant terms") {
  TaylorPoly p = TaylorPoly::zero(2, 2);
  std::vector<TaylorPoly> args(2, TaylorPoly::zero(2, 2));
  args[0].set_coeff(MultiIndex::zero(2), 1.0);
  CHECK_THROWS_AS(compose(p, args), InvariantViolationError);
}
