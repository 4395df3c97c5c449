#pragma once

#include <string>
#include <vector>

#include "jetflow/errors.hpp"

namespace jetflow {

// Scalar grayscale image on a rectangular grid. Pixel (ix, iy) sits at
// physical position origin + spacing * (ix, iy); intensities live in [0,1].
struct RasterImage {
  int width = 0;
  int height = 0;
  double spacing = 1.0;
  double origin_x = 0.0;
  double origin_y = 0.0;
  std::vector<double> values;  // row-major, [iy * width + ix]

  double at(int ix, int iy) const { return values[static_cast<std::size_t>(iy) * static_cast<std::size_t>(width) + static_cast<std::size_t>(ix)]; }
  double& at(int ix, int iy) { return values[static_cast<std::size_t>(iy) * static_cast<std::size_t>(width) + static_cast<std::size_t>(ix)]; }
};

void validate(const RasterImage& img);

// Bilinear interpolation; queries outside the pixel-center hull are clamped
// to the boundary before interpolating.
double sample(const RasterImage& img, const double* x);

// Exact spatial derivative of the bilinear interpolant (piecewise constant
// per cell along each axis). Clamped queries get the boundary cell's
// derivative in the interior direction and zero outward.
void gradient(const RasterImage& img, const double* x, double* out);

// P2/P5 grayscale PGM with maxval <= 65535; intensities are normalized to
// [0,1] on read. Physical spacing and origin are supplied by the caller,
// not stored in the file.
RasterImage read_pgm(const std::string& path);
void write_pgm(const std::string& path, const RasterImage& img, int maxval = 255);

struct SyntheticSpec {
  enum class Kind { Disc, GaussianBlob };
  Kind kind = Kind::Disc;
  int width = 64;
  int height = 64;
  double spacing = 1.0;
  double origin_x = 0.0;
  double origin_y = 0.0;
  double center_x = 0.0;
  double center_y = 0.0;
  double amplitude = 1.0;
  double background = 0.0;
  // disc: filled disc with a cosine-ramp edge of the given width
  double radius = 0.0;
  double edge_width = 1.0;
  // blob: isotropic Gaussian of the given scale
  double sigma = 1.0;
};

RasterImage make_synthetic(const SyntheticSpec& spec);

// Evaluation lattice: pixel centers every `stride` pixels (offset stride/2),
// with cell weight h = stride * spacing.
struct Lattice {
  int nx = 0;
  int ny = 0;
  double h = 0.0;
  std::vector<double> points;  // nx*ny points, row-major, physical coords
};

Lattice make_lattice(const RasterImage& img, int stride);

}  // namespace jetflow
