#include "jetflow/state.hpp"

#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <string_view>

#include "jetflow/linalg.hpp"
#include "jetflow/textio.hpp"

namespace jetflow {

namespace {

void check_shape(int dim, int order, int count) {
  if (dim != 2 && dim != 3)
    throw InvariantViolationError("spatial dimension must be 2 or 3, got " + std::to_string(dim));
  if (order < 0 || order > 2)
    throw InvariantViolationError("jet order must be 0, 1 or 2, got " + std::to_string(order));
  if (count < 0) throw InvariantViolationError("negative particle count");
}

std::size_t block(int count, int per) {
  return static_cast<std::size_t>(count) * static_cast<std::size_t>(per);
}

void check_finite(const std::vector<double>& v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw InvariantViolationError(std::string("non-finite value in ") + what);
}

double distance2(const double* a, const double* b, int dim) {
  double s = 0.0;
  for (int e = 0; e < dim; ++e) {
    const double d = a[e] - b[e];
    s += d * d;
  }
  return s;
}

}  // namespace

JetState make_jet_state(int dim, int order, int count) {
  check_shape(dim, order, count);
  JetState s;
  s.dim = dim;
  s.order = order;
  s.count = count;
  s.positions.assign(block(count, dim), 0.0);
  if (order >= 1) {
    s.jacobians.assign(block(count, dim * dim), 0.0);
    for (int i = 0; i < count; ++i)
      for (int a = 0; a < dim; ++a) s.jacobian(i)[a * dim + a] = 1.0;
  }
  if (order >= 2) s.hessians.assign(block(count, dim * dim * dim), 0.0);
  return s;
}

JetMomentum make_jet_momentum(int dim, int order, int count) {
  check_shape(dim, order, count);
  JetMomentum m;
  m.dim = dim;
  m.order = order;
  m.count = count;
  m.p.assign(block(count, dim), 0.0);
  if (order >= 1) m.mu1.assign(block(count, dim * dim), 0.0);
  if (order >= 2) m.mu2.assign(block(count, dim * dim * dim), 0.0);
  return m;
}

PhasePoint make_phase_point(int dim, int order, int count) {
  return PhasePoint{make_jet_state(dim, order, count), make_jet_momentum(dim, order, count)};
}

StateCotangent make_state_cotangent(int dim, int order, int count) {
  check_shape(dim, order, count);
  StateCotangent c;
  c.dim = dim;
  c.order = order;
  c.count = count;
  c.d_pos.assign(block(count, dim), 0.0);
  if (order >= 1) c.d_jac.assign(block(count, dim * dim), 0.0);
  if (order >= 2) c.d_hess.assign(block(count, dim * dim * dim), 0.0);
  return c;
}

void symmetrize_last_two(std::vector<double>& tensors, int dim) {
  const std::size_t per = static_cast<std::size_t>(dim * dim * dim);
  for (std::size_t base = 0; base + per <= tensors.size(); base += per) {
    double* t = tensors.data() + base;
    for (int a = 0; a < dim; ++a)
      for (int b = 0; b < dim; ++b)
        for (int c = b + 1; c < dim; ++c) {
          const double avg = 0.5 * (t[(a * dim + b) * dim + c] + t[(a * dim + c) * dim + b]);
          t[(a * dim + b) * dim + c] = avg;
          t[(a * dim + c) * dim + b] = avg;
        }
  }
}

void validate(const JetState& s) {
  check_shape(s.dim, s.order, s.count);
  if (s.positions.size() != block(s.count, s.dim))
    throw InvariantViolationError("positions block has wrong size");
  if (s.jacobians.size() != (s.order >= 1 ? block(s.count, s.dim * s.dim) : 0))
    throw InvariantViolationError("jacobians block has wrong size");
  if (s.hessians.size() != (s.order >= 2 ? block(s.count, s.dim * s.dim * s.dim) : 0))
    throw InvariantViolationError("hessians block has wrong size");
  check_finite(s.positions, "positions");
  check_finite(s.jacobians, "jacobians");
  check_finite(s.hessians, "hessians");
  for (int i = 0; i < s.count; ++i)
    for (int j = i + 1; j < s.count; ++j)
      if (distance2(s.position(i), s.position(j), s.dim) < kCoincidenceTol * kCoincidenceTol)
        throw CoincidentParticlesError("particles " + std::to_string(i) + " and " + std::to_string(j) +
                                       " coincide");
  if (s.order >= 1)
    for (int i = 0; i < s.count; ++i)
      if (std::abs(det_small(s.jacobian(i), s.dim)) < 1e-12)
        throw InvariantViolationError("jacobian slot of particle " + std::to_string(i) +
                                      " is singular");
  if (s.order >= 2)
    for (int i = 0; i < s.count; ++i) {
      const double* h = s.hessian(i);
      for (int a = 0; a < s.dim; ++a)
        for (int b = 0; b < s.dim; ++b)
          for (int c = b + 1; c < s.dim; ++c)
            if (h[(a * s.dim + b) * s.dim + c] != h[(a * s.dim + c) * s.dim + b])
              throw InvariantViolationError("hessian slot of particle " + std::to_string(i) +
                                            " is not symmetric in its last two slots");
    }
}

void validate(const JetMomentum& m) {
  check_shape(m.dim, m.order, m.count);
  if (m.p.size() != block(m.count, m.dim))
    throw InvariantViolationError("p block has wrong size");
  if (m.mu1.size() != (m.order >= 1 ? block(m.count, m.dim * m.dim) : 0))
    throw InvariantViolationError("mu1 block has wrong size");
  if (m.mu2.size() != (m.order >= 2 ? block(m.count, m.dim * m.dim * m.dim) : 0))
    throw InvariantViolationError("mu2 block has wrong size");
  check_finite(m.p, "p");
  check_finite(m.mu1, "mu1");
  check_finite(m.mu2, "mu2");
  if (m.order >= 2)
    for (int i = 0; i < m.count; ++i) {
      const double* t = m.second(i);
      for (int a = 0; a < m.dim; ++a)
        for (int b = 0; b < m.dim; ++b)
          for (int c = b + 1; c < m.dim; ++c)
            if (t[(a * m.dim + b) * m.dim + c] != t[(a * m.dim + c) * m.dim + b])
              throw InvariantViolationError("mu2 of particle " + std::to_string(i) +
                                            " is not symmetric in its last two slots");
    }
}

void validate(const PhasePoint& x) {
  validate(x.state);
  validate(x.momentum);
  if (x.state.dim != x.momentum.dim || x.state.order != x.momentum.order ||
      x.state.count != x.momentum.count)
    throw InvariantViolationError("state and momentum shapes disagree");
}

PhasePoint project_order(const PhasePoint& x, int target_order) {
  if (target_order < 0 || target_order > 2)
    throw InvariantViolationError("target jet order must be 0, 1 or 2");
  PhasePoint out = make_phase_point(x.state.dim, target_order, x.state.count);
  out.state.positions = x.state.positions;
  out.momentum.p = x.momentum.p;
  if (target_order >= 1 && x.state.order >= 1) {
    out.state.jacobians = x.state.jacobians;
    out.momentum.mu1 = x.momentum.mu1;
  }
  if (target_order >= 2 && x.state.order >= 2) {
    out.state.hessians = x.state.hessians;
    out.momentum.mu2 = x.momentum.mu2;
  }
  return out;
}

namespace {

constexpr const char* kPhaseMagic = "jetflow-phase";
constexpr const char* kPointsMagic = "jetflow-points";

struct LineReader {
  std::string_view text;
  std::size_t pos = 0;
  int line = 0;

  bool next(std::string_view* out) {
    if (pos >= text.size()) return false;
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    *out = text.substr(pos, end - pos);
    pos = end + 1;
    ++line;
    return true;
  }
};

[[noreturn]] void parse_fail(const std::string& path, int line, const std::string& what) {
  throw ParseError(path + ":" + std::to_string(line) + ": " + what);
}

double parse_field(const std::string& path, int line, const std::vector<std::string_view>& fields,
                   std::size_t idx) {
  double v;
  if (!parse_double(fields[idx], &v))
    parse_fail(path, line, "field " + std::to_string(idx + 1) + " is not a number: '" +
                               std::string(fields[idx]) + "'");
  return v;
}

}  // namespace

PhasePoint read_state(const std::string& path) {
  const std::string text = read_file(path);
  LineReader reader{text};
  std::string_view header;
  if (!reader.next(&header)) parse_fail(path, 1, "empty file");
  auto hf = split_fields(header);
  if (hf.size() != 5 || hf[0] != kPhaseMagic)
    parse_fail(path, reader.line, "expected header '" + std::string(kPhaseMagic) + " <version> <dim> <count> <order>'");
  int version, dim, count, order;
  if (!parse_int(hf[1], &version) || version != 1)
    parse_fail(path, reader.line, "unsupported version '" + std::string(hf[1]) + "'");
  if (!parse_int(hf[2], &dim) || !parse_int(hf[3], &count) || !parse_int(hf[4], &order))
    parse_fail(path, reader.line, "malformed header numbers");
  if (dim != 2 && dim != 3) parse_fail(path, reader.line, "dim must be 2 or 3");
  if (order < 0 || order > 2) parse_fail(path, reader.line, "order must be 0, 1 or 2");
  if (count < 0) parse_fail(path, reader.line, "negative count");

  PhasePoint x = make_phase_point(dim, order, count);
  const int d = dim, d2 = dim * dim, d3 = dim * dim * dim;
  const std::size_t per_row = static_cast<std::size_t>(
      order >= 2 ? 2 * (d + d2 + d3) : (order == 1 ? 2 * (d + d2) : 2 * d));
  for (int i = 0; i < count; ++i) {
    std::string_view line;
    if (!reader.next(&line)) parse_fail(path, reader.line + 1, "unexpected end of file: expected " +
                                                                   std::to_string(count) + " particle rows");
    auto fields = split_fields(line);
    if (fields.size() != per_row)
      parse_fail(path, reader.line, "expected " + std::to_string(per_row) + " fields, got " +
                                        std::to_string(fields.size()));
    std::size_t f = 0;
    for (int e = 0; e < d; ++e) x.state.position(i)[e] = parse_field(path, reader.line, fields, f++);
    if (order >= 1)
      for (int e = 0; e < d2; ++e) x.state.jacobian(i)[e] = parse_field(path, reader.line, fields, f++);
    if (order >= 2)
      for (int e = 0; e < d3; ++e) x.state.hessian(i)[e] = parse_field(path, reader.line, fields, f++);
    for (int e = 0; e < d; ++e) x.momentum.point(i)[e] = parse_field(path, reader.line, fields, f++);
    if (order >= 1)
      for (int e = 0; e < d2; ++e) x.momentum.first(i)[e] = parse_field(path, reader.line, fields, f++);
    if (order >= 2)
      for (int e = 0; e < d3; ++e) x.momentum.second(i)[e] = parse_field(path, reader.line, fields, f++);
  }
  std::string_view extra;
  while (reader.next(&extra))
    if (!split_fields(extra).empty()) parse_fail(path, reader.line, "trailing data after last particle row");
  validate(x);
  return x;
}

void write_state(const std::string& path, const PhasePoint& x) {
  validate(x);
  std::ostringstream out;
  out << kPhaseMagic << " 1 " << x.state.dim << ' ' << x.state.count << ' ' << x.state.order << '\n';
  const int d = x.state.dim, d2 = d * d, d3 = d * d * d;
  for (int i = 0; i < x.state.count; ++i) {
    std::string row;
    auto append = [&row](double v) {
      if (!row.empty()) row += ' ';
      row += format_double(v);
    };
    for (int e = 0; e < d; ++e) append(x.state.position(i)[e]);
    if (x.state.order >= 1)
      for (int e = 0; e < d2; ++e) append(x.state.jacobian(i)[e]);
    if (x.state.order >= 2)
      for (int e = 0; e < d3; ++e) append(x.state.hessian(i)[e]);
    for (int e = 0; e < d; ++e) append(x.momentum.point(i)[e]);
    if (x.state.order >= 1)
      for (int e = 0; e < d2; ++e) append(x.momentum.first(i)[e]);
    if (x.state.order >= 2)
      for (int e = 0; e < d3; ++e) append(x.momentum.second(i)[e]);
    out << row << '\n';
  }
  write_file_atomic(path, out.str());
}

std::vector<double> read_points(const std::string& path, int* dim_out) {
  const std::string text = read_file(path);
  LineReader reader{text};
  std::string_view header;
  if (!reader.next(&header)) parse_fail(path, 1, "empty file");
  auto hf = split_fields(header);
  if (hf.size() != 4 || hf[0] != kPointsMagic)
    parse_fail(path, reader.line, "expected header '" + std::string(kPointsMagic) + " <version> <dim> <count>'");
  int version, dim, count;
  if (!parse_int(hf[1], &version) || version != 1)
    parse_fail(path, reader.line, "unsupported version '" + std::string(hf[1]) + "'");
  if (!parse_int(hf[2], &dim) || !parse_int(hf[3], &count))
    parse_fail(path, reader.line, "malformed header numbers");
  if (dim != 2 && dim != 3) parse_fail(path, reader.line, "dim must be 2 or 3");
  if (count < 0) parse_fail(path, reader.line, "negative count");
  std::vector<double> pts(static_cast<std::size_t>(count) * static_cast<std::size_t>(dim));
  for (int i = 0; i < count; ++i) {
    std::string_view line;
    if (!reader.next(&line)) parse_fail(path, reader.line + 1, "unexpected end of file");
    auto fields = split_fields(line);
    if (fields.size() != static_cast<std::size_t>(dim))
      parse_fail(path, reader.line, "expected " + std::to_string(dim) + " fields, got " +
                                        std::to_string(fields.size()));
    for (int e = 0; e < dim; ++e)
      pts[static_cast<std::size_t>(i) * static_cast<std::size_t>(dim) + static_cast<std::size_t>(e)] =
          parse_field(path, reader.line, fields, static_cast<std::size_t>(e));
  }
  *dim_out = dim;
  return pts;
}

void write_points(const std::string& path, const std::vector<double>& points, int dim) {
  if (dim != 2 && dim != 3) throw InvariantViolationError("dim must be 2 or 3");
  if (points.size() % static_cast<std::size_t>(dim) != 0)
    throw InvariantViolationError("point buffer size is not a multiple of dim");
  const int count = static_cast<int>(points.size() / static_cast<std::size_t>(dim));
  std::ostringstream out;
  out << kPointsMagic << " 1 " << dim << ' ' << count << '\n';
  for (int i = 0; i < count; ++i) {
    std::string row;
    for (int e = 0; e < dim; ++e) {
      if (e) row += ' ';
      row += format_double(points[static_cast<std::size_t>(i * dim + e)]);
    }
    out << row << '\n';
  }
  write_file_atomic(path, out.str());
}

}  // namespace jetflow
