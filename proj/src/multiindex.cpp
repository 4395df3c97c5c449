#include "jetflow/multiindex.hpp"

#include <algorithm>
#include <string>

namespace jetflow {

namespace {

int encode(const MultiIndex& m) {
  return m.orders[0] + 6 * m.orders[1] + 36 * m.orders[2];
}

int int_factorial(int n) {
  int f = 1;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

int int_binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  return int_factorial(n) / (int_factorial(k) * int_factorial(n - k));
}

}  // namespace

MultiIndex operator+(const MultiIndex& a, const MultiIndex& b) {
  MultiIndex r = a;
  for (std::size_t i = 0; i < 3; ++i) r.orders[i] += b.orders[i];
  return r;
}

bool contains(const MultiIndex& b, const MultiIndex& g) {
  for (std::size_t i = 0; i < 3; ++i)
    if (g.orders[i] > b.orders[i]) return false;
  return true;
}

MultiIndex subtract(const MultiIndex& b, const MultiIndex& g) {
  MultiIndex r = b;
  for (std::size_t i = 0; i < 3; ++i) r.orders[i] -= g.orders[i];
  return r;
}

int binomial(const MultiIndex& b, const MultiIndex& g) {
  int p = 1;
  for (std::size_t i = 0; i < 3; ++i) p *= int_binomial(b.orders[i], g.orders[i]);
  return p;
}

int multinomial(const MultiIndex& b) {
  int p = int_factorial(b.total());
  for (std::size_t i = 0; i < 3; ++i) p /= int_factorial(b.orders[i]);
  return p;
}

double factorial(const MultiIndex& b) {
  double p = 1.0;
  for (std::size_t i = 0; i < 3; ++i) p *= int_factorial(b.orders[i]);
  return p;
}

MultiIndexTable::MultiIndexTable(int dim) : dim_(dim) {
  for (int o2 = 0; o2 <= (dim == 3 ? kMaxDerivOrder : 0); ++o2)
    for (int o1 = 0; o1 <= kMaxDerivOrder; ++o1)
      for (int o0 = 0; o0 <= kMaxDerivOrder; ++o0) {
        if (o0 + o1 + o2 > kMaxDerivOrder) continue;
        indices_.push_back(MultiIndex{{o0, o1, o2}, dim});
      }
  std::sort(indices_.begin(), indices_.end(), [](const MultiIndex& a, const MultiIndex& b) {
    if (a.total() != b.total()) return a.total() < b.total();
    return a.orders < b.orders;
  });
  code_to_id_.assign(6 * 6 * 6, -1);
  for (std::size_t i = 0; i < indices_.size(); ++i)
    code_to_id_[static_cast<std::size_t>(encode(indices_[i]))] = static_cast<int>(i);
  for (int k = 0; k <= 6; ++k) {
    int n = 0;
    for (const MultiIndex& m : indices_)
      if (m.total() <= k) ++n;
    prefix_counts_[static_cast<std::size_t>(k)] = n;
  }
}

const MultiIndexTable& MultiIndexTable::get(int dim) {
  static const MultiIndexTable t2(2);
  static const MultiIndexTable t3(3);
  if (dim != 2 && dim != 3)
    throw InvariantViolationError("spatial dimension must be 2 or 3, got " + std::to_string(dim));
  return dim == 2 ? t2 : t3;
}

int MultiIndexTable::count_up_to(int order) const {
  if (order < 0) return 0;
  return prefix_counts_[static_cast<std::size_t>(std::min(order, 6))];
}

int MultiIndexTable::id(const MultiIndex& m) const {
  if (m.total() > kMaxDerivOrder)
    throw DerivativeOrderError("derivative order " + std::to_string(m.total()) +
                               " exceeds the supported maximum " + std::to_string(kMaxDerivOrder));
  for (std::size_t i = 0; i < 3; ++i)
    if (m.orders[i] < 0) throw InvariantViolationError("negative multi-index entry");
  if (m.dim == 2 && m.orders[2] != 0)
    throw InvariantViolationError("third axis used in a planar multi-index");
  return code_to_id_[static_cast<std::size_t>(encode(m))];
}

}  // namespace jetflow
