#pragma once

#include <array>
#include <vector>

#include "jetflow/errors.hpp"

namespace jetflow {

// Highest kernel derivative order used anywhere in the system; 2-jet force
// terms need third derivatives of a field that itself carries second
// derivatives of the kernel.
inline constexpr int kMaxDerivOrder = 5;

// A partial-derivative multi-index over d in {2,3} spatial axes.
struct MultiIndex {
  std::array<int, 3> orders{0, 0, 0};
  int dim = 2;

  static MultiIndex zero(int dim) { return MultiIndex{{0, 0, 0}, dim}; }
  static MultiIndex unit(int dim, int axis) {
    MultiIndex m{{0, 0, 0}, dim};
    m.orders[static_cast<std::size_t>(axis)] = 1;
    return m;
  }

  int total() const { return orders[0] + orders[1] + orders[2]; }
  int operator[](int axis) const { return orders[static_cast<std::size_t>(axis)]; }

  bool operator==(const MultiIndex& o) const {
    return dim == o.dim && orders == o.orders;
  }
};

MultiIndex operator+(const MultiIndex& a, const MultiIndex& b);

// True when g <= b componentwise.
bool contains(const MultiIndex& b, const MultiIndex& g);

// Componentwise difference b - g; requires contains(b, g).
MultiIndex subtract(const MultiIndex& b, const MultiIndex& g);

// Product of per-axis binomial coefficients C(b_i, g_i).
int binomial(const MultiIndex& b, const MultiIndex& g);

// |b|! / prod(b_i!): the number of ordered derivative tuples collapsing to b.
int multinomial(const MultiIndex& b);

double factorial(const MultiIndex& b);

// All multi-indices for one dimension with total order <= kMaxDerivOrder,
// graded-lexicographically ordered so the first count_up_to(k) entries are
// exactly the indices of order <= k.
class MultiIndexTable {
 public:
  static const MultiIndexTable& get(int dim);

  const std::vector<MultiIndex>& indices() const { return indices_; }
  int count_up_to(int order) const;
  // Index of m within indices(); throws DerivativeOrderError when the total
  // order exceeds kMaxDerivOrder.
  int id(const MultiIndex& m) const;

 private:
  explicit MultiIndexTable(int dim);

  int dim_;
  std::vector<MultiIndex> indices_;
  std::array<int, 7> prefix_counts_{};  // prefix_counts_[k] = #indices of order <= k
  std::vector<int> code_to_id_;
};

}  // namespace jetflow
