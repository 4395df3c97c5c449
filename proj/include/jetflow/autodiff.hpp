#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

namespace jetflow::ad {

// Minimal arena-based reverse-mode tape. Each node stores up to two parents
// with local partials; backprop is a single linear sweep. One tape is active
// per thread at a time, installed by TapeScope.
class Tape {
 public:
  int push_leaf(double v) {
    values_.push_back(v);
    p1_.push_back(-1);
    p2_.push_back(-1);
    d1_.push_back(0.0);
    d2_.push_back(0.0);
    return static_cast<int>(values_.size()) - 1;
  }

  int push1(double v, int parent, double d) {
    values_.push_back(v);
    p1_.push_back(parent);
    p2_.push_back(-1);
    d1_.push_back(d);
    d2_.push_back(0.0);
    return static_cast<int>(values_.size()) - 1;
  }

  int push2(double v, int pa, double da, int pb, double db) {
    values_.push_back(v);
    p1_.push_back(pa);
    p2_.push_back(pb);
    d1_.push_back(da);
    d2_.push_back(db);
    return static_cast<int>(values_.size()) - 1;
  }

  double value(int idx) const { return values_[static_cast<std::size_t>(idx)]; }
  std::size_t size() const { return values_.size(); }

  void clear() {
    values_.clear();
    p1_.clear();
    p2_.clear();
    d1_.clear();
    d2_.clear();
  }

  // Seeds must be applied through adjoint() after seed_adjoints().
  void seed_adjoints() { adjoints_.assign(values_.size(), 0.0); }
  double& adjoint(int idx) { return adjoints_[static_cast<std::size_t>(idx)]; }

  void backprop() {
    for (int i = static_cast<int>(values_.size()) - 1; i >= 0; --i) {
      const double a = adjoints_[static_cast<std::size_t>(i)];
      if (a == 0.0) continue;
      const int q1 = p1_[static_cast<std::size_t>(i)];
      if (q1 >= 0) adjoints_[static_cast<std::size_t>(q1)] += a * d1_[static_cast<std::size_t>(i)];
      const int q2 = p2_[static_cast<std::size_t>(i)];
      if (q2 >= 0) adjoints_[static_cast<std::size_t>(q2)] += a * d2_[static_cast<std::size_t>(i)];
    }
  }

 private:
  std::vector<double> values_, d1_, d2_, adjoints_;
  std::vector<int> p1_, p2_;
};

Tape*& active_tape();

struct TapeScope {
  explicit TapeScope(Tape& t) : prev(active_tape()) { active_tape() = &t; }
  ~TapeScope() { active_tape() = prev; }
  Tape* prev;
};

struct Var {
  double v = 0.0;
  int idx = -1;

  Var() = default;
  // Implicit lift of literals onto the active tape.
  Var(double value) : v(value), idx(active_tape()->push_leaf(value)) {}
  Var(double value, int index) : v(value), idx(index) {}

  static Var leaf(double value) { return Var(value, active_tape()->push_leaf(value)); }
};

inline Var operator+(const Var& a, const Var& b) {
  return Var(a.v + b.v, active_tape()->push2(a.v + b.v, a.idx, 1.0, b.idx, 1.0));
}
inline Var operator-(const Var& a, const Var& b) {
  return Var(a.v - b.v, active_tape()->push2(a.v - b.v, a.idx, 1.0, b.idx, -1.0));
}
inline Var operator*(const Var& a, const Var& b) {
  return Var(a.v * b.v, active_tape()->push2(a.v * b.v, a.idx, b.v, b.idx, a.v));
}
inline Var operator+(const Var& a, double c) {
  return Var(a.v + c, active_tape()->push1(a.v + c, a.idx, 1.0));
}
inline Var operator+(double c, const Var& a) { return a + c; }
inline Var operator-(const Var& a, double c) { return a + (-c); }
inline Var operator-(double c, const Var& a) {
  return Var(c - a.v, active_tape()->push1(c - a.v, a.idx, -1.0));
}
inline Var operator*(const Var& a, double c) {
  return Var(a.v * c, active_tape()->push1(a.v * c, a.idx, c));
}
inline Var operator*(double c, const Var& a) { return a * c; }
inline Var operator-(const Var& a) { return a * -1.0; }
inline Var exp(const Var& a) {
  const double e = std::exp(a.v);
  return Var(e, active_tape()->push1(e, a.idx, e));
}

inline double value_of(const Var& a) { return a.v; }
inline double value_of(double a) { return a; }

}  // namespace jetflow::ad
