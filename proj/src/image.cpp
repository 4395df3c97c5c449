#include "jetflow/image.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "jetflow/textio.hpp"

namespace jetflow {

void validate(const RasterImage& img) {
  if (img.width < 2 || img.height < 2)
    throw InvariantViolationError("image must be at least 2x2 pixels");
  if (!(img.spacing > 0.0) || !std::isfinite(img.spacing))
    throw InvariantViolationError("image spacing must be positive");
  if (!std::isfinite(img.origin_x) || !std::isfinite(img.origin_y))
    throw InvariantViolationError("image origin must be finite");
  if (img.values.size() != static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height))
    throw InvariantViolationError("image value buffer has wrong size");
  for (double v : img.values)
    if (!std::isfinite(v) || v < 0.0 || v > 1.0)
      throw InvariantViolationError("image intensities must be finite and in [0,1]");
}

namespace {

struct CellQuery {
  int ix, iy;        // lower-left pixel of the cell
  double fx, fy;     // local coordinates in [0,1]
  bool inside_x, inside_y;
};

CellQuery locate(const RasterImage& img, const double* x) {
  CellQuery q;
  double px = (x[0] - img.origin_x) / img.spacing;
  double py = (x[1] - img.origin_y) / img.spacing;
  q.inside_x = px >= 0.0 && px <= img.width - 1;
  q.inside_y = py >= 0.0 && py <= img.height - 1;
  px = std::clamp(px, 0.0, static_cast<double>(img.width - 1));
  py = std::clamp(py, 0.0, static_cast<double>(img.height - 1));
  q.ix = std::min(static_cast<int>(px), img.width - 2);
  q.iy = std::min(static_cast<int>(py), img.height - 2);
  q.fx = px - q.ix;
  q.fy = py - q.iy;
  return q;
}

}  // namespace

double sample(const RasterImage& img, const double* x) {
  const CellQuery q = locate(img, x);
  const double v00 = img.at(q.ix, q.iy);
  const double v10 = img.at(q.ix + 1, q.iy);
  const double v01 = img.at(q.ix, q.iy + 1);
  const double v11 = img.at(q.ix + 1, q.iy + 1);
  return (1.0 - q.fx) * (1.0 - q.fy) * v00 + q.fx * (1.0 - q.fy) * v10 +
         (1.0 - q.fx) * q.fy * v01 + q.fx * q.fy * v11;
}

void gradient(const RasterImage& img, const double* x, double* out) {
  const CellQuery q = locate(img, x);
  const double v00 = img.at(q.ix, q.iy);
  const double v10 = img.at(q.ix + 1, q.iy);
  const double v01 = img.at(q.ix, q.iy + 1);
  const double v11 = img.at(q.ix + 1, q.iy + 1);
  out[0] = q.inside_x ? ((1.0 - q.fy) * (v10 - v00) + q.fy * (v11 - v01)) / img.spacing : 0.0;
  out[1] = q.inside_y ? ((1.0 - q.fx) * (v01 - v00) + q.fx * (v11 - v10)) / img.spacing : 0.0;
}

namespace {

struct PgmScanner {
  const std::string& data;
  std::size_t pos = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("pgm byte offset " + std::to_string(pos) + ": " + what);
  }

  void skip_space_and_comments() {
    while (pos < data.size()) {
      const char c = data[pos];
      if (c == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++pos;
      } else {
        return;
      }
    }
  }

  int next_int() {
    skip_space_and_comments();
    if (pos >= data.size()) fail("unexpected end of file while reading a number");
    std::size_t start = pos;
    while (pos < data.size() && data[pos] >= '0' && data[pos] <= '9') ++pos;
    if (pos == start) fail(std::string("expected a digit, found '") + data[start] + "'");
    int value;
    if (!parse_int(std::string_view(data).substr(start, pos - start), &value)) fail("number out of range");
    return value;
  }
};

}  // namespace

RasterImage read_pgm(const std::string& path) {
  const std::string data = read_file(path);
  PgmScanner sc{data};
  if (data.size() < 2 || data[0] != 'P' || (data[1] != '2' && data[1] != '5'))
    sc.fail("not a P2 or P5 PGM file");
  const bool binary = data[1] == '5';
  sc.pos = 2;
  const int width = sc.next_int();
  const int height = sc.next_int();
  const int maxval = sc.next_int();
  if (width < 2 || height < 2) sc.fail("image must be at least 2x2 pixels");
  if (maxval < 1 || maxval > 65535) sc.fail("maxval must be in [1, 65535]");

  RasterImage img;
  img.width = width;
  img.height = height;
  img.values.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height));
  const std::size_t n = img.values.size();
  if (binary) {
    if (sc.pos >= data.size()) sc.fail("missing raster data");
    ++sc.pos;  // single whitespace byte after maxval
    const int bytes = maxval > 255 ? 2 : 1;
    if (data.size() - sc.pos < n * static_cast<std::size_t>(bytes))
      sc.fail("truncated raster: expected " + std::to_string(n * static_cast<std::size_t>(bytes)) +
              " bytes, found " + std::to_string(data.size() - sc.pos));
    for (std::size_t i = 0; i < n; ++i) {
      int v;
      if (bytes == 1) {
        v = static_cast<unsigned char>(data[sc.pos++]);
      } else {
        const int hi = static_cast<unsigned char>(data[sc.pos++]);
        const int lo = static_cast<unsigned char>(data[sc.pos++]);
        v = hi * 256 + lo;
      }
      if (v > maxval) sc.fail("sample value " + std::to_string(v) + " exceeds maxval");
      img.values[i] = static_cast<double>(v) / maxval;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const int v = sc.next_int();
      if (v > maxval) sc.fail("sample value " + std::to_string(v) + " exceeds maxval");
      img.values[i] = static_cast<double>(v) / maxval;
    }
  }
  validate(img);
  return img;
}

void write_pgm(const std::string& path, const RasterImage& img, int maxval) {
  validate(img);
  if (maxval < 1 || maxval > 65535) throw InvalidParamsError("maxval must be in [1, 65535]");
  std::ostringstream out;
  out << "P2\n" << img.width << ' ' << img.height << '\n' << maxval << '\n';
  for (int iy = 0; iy < img.height; ++iy) {
    for (int ix = 0; ix < img.width; ++ix) {
      const int v = std::clamp(static_cast<int>(std::lround(img.at(ix, iy) * maxval)), 0, maxval);
      out << v << (ix + 1 == img.width ? '\n' : ' ');
    }
  }
  write_file_atomic(path, out.str());
}

RasterImage make_synthetic(const SyntheticSpec& spec) {
  if (spec.width < 2 || spec.height < 2) throw InvalidParamsError("synthetic image must be at least 2x2");
  if (!(spec.spacing > 0.0)) throw InvalidParamsError("synthetic image spacing must be positive");
  const double x_max = spec.origin_x + spec.spacing * (spec.width - 1);
  const double y_max = spec.origin_y + spec.spacing * (spec.height - 1);
  if (spec.center_x < spec.origin_x || spec.center_x > x_max || spec.center_y < spec.origin_y ||
      spec.center_y > y_max)
    throw InvalidParamsError("synthetic feature center lies outside the image domain");
  if (spec.kind == SyntheticSpec::Kind::Disc) {
    if (spec.radius < 0.0) throw InvalidParamsError("disc radius must be nonnegative");
    if (!(spec.edge_width > 0.0)) throw InvalidParamsError("disc edge width must be positive");
  } else {
    if (!(spec.sigma > 0.0)) throw InvalidParamsError("blob sigma must be positive");
  }

  RasterImage img;
  img.width = spec.width;
  img.height = spec.height;
  img.spacing = spec.spacing;
  img.origin_x = spec.origin_x;
  img.origin_y = spec.origin_y;
  img.values.assign(static_cast<std::size_t>(spec.width) * static_cast<std::size_t>(spec.height), 0.0);
  const double pi = 3.14159265358979323846;
  for (int iy = 0; iy < spec.height; ++iy)
    for (int ix = 0; ix < spec.width; ++ix) {
      const double dx = spec.origin_x + spec.spacing * ix - spec.center_x;
      const double dy = spec.origin_y + spec.spacing * iy - spec.center_y;
      const double r = std::sqrt(dx * dx + dy * dy);
      double v;
      if (spec.kind == SyntheticSpec::Kind::Disc) {
        const double inner = spec.radius - 0.5 * spec.edge_width;
        const double outer = spec.radius + 0.5 * spec.edge_width;
        double ramp;
        if (spec.radius == 0.0 || r >= outer)
          ramp = 0.0;
        else if (r <= inner)
          ramp = 1.0;
        else
          ramp = 0.5 * (1.0 + std::cos(pi * (r - inner) / spec.edge_width));
        v = spec.background + (spec.amplitude - spec.background) * ramp;
      } else {
        v = spec.background +
            (spec.amplitude - spec.background) * std::exp(-0.5 * r * r / (spec.sigma * spec.sigma));
      }
      img.at(ix, iy) = std::clamp(v, 0.0, 1.0);
    }
  validate(img);
  return img;
}

Lattice make_lattice(const RasterImage& img, int stride) {
  validate(img);
  if (stride < 1) throw InvalidParamsError("lattice stride must be at least 1");
  Lattice lat;
  lat.h = stride * img.spacing;
  const int off = stride / 2;
  for (int iy = off; iy < img.height; iy += stride) ++lat.ny;
  for (int ix = off; ix < img.width; ix += stride) ++lat.nx;
  if (lat.nx == 0 || lat.ny == 0) throw InvalidParamsError("lattice stride leaves no points");
  lat.points.reserve(static_cast<std::size_t>(lat.nx) * static_cast<std::size_t>(lat.ny) * 2);
  for (int iy = off; iy < img.height; iy += stride)
    for (int ix = off; ix < img.width; ix += stride) {
      lat.points.push_back(img.origin_x + img.spacing * ix);
      lat.points.push_back(img.origin_y + img.spacing * iy);
    }
  return lat;
}

}  // namespace jetflow
