#include "jetflow/linalg.hpp"

#include <cmath>

#include "jetflow/errors.hpp"

namespace jetflow {

double det_small(const double* m, int d) {
  if (d == 2) return m[0] * m[3] - m[1] * m[2];
  return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

void invert_small(const double* m, int d, double* out) {
  const double det = det_small(m, d);
  if (det == 0.0 || !std::isfinite(det))
    throw InvariantViolationError("singular matrix in invert_small");
  const double inv = 1.0 / det;
  if (d == 2) {
    out[0] = m[3] * inv;
    out[1] = -m[1] * inv;
    out[2] = -m[2] * inv;
    out[3] = m[0] * inv;
    return;
  }
  out[0] = (m[4] * m[8] - m[5] * m[7]) * inv;
  out[1] = (m[2] * m[7] - m[1] * m[8]) * inv;
  out[2] = (m[1] * m[5] - m[2] * m[4]) * inv;
  out[3] = (m[5] * m[6] - m[3] * m[8]) * inv;
  out[4] = (m[0] * m[8] - m[2] * m[6]) * inv;
  out[5] = (m[2] * m[3] - m[0] * m[5]) * inv;
  out[6] = (m[3] * m[7] - m[4] * m[6]) * inv;
  out[7] = (m[1] * m[6] - m[0] * m[7]) * inv;
  out[8] = (m[0] * m[4] - m[1] * m[3]) * inv;
}

}  // namespace jetflow
