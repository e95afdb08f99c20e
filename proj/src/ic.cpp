#include "bodil/ic.hpp"

#include <cmath>
#include <stdexcept>

namespace bodil {

std::vector<double> gaussian_ic_2d(double x0, double y0, double radius, const Grid& slice) {
  if (slice.dim() != 2) throw std::invalid_argument("gaussian_ic_2d: expected a (y, x) grid");
  if (!(radius > 0)) throw std::invalid_argument("gaussian_ic_2d: radius must be > 0");
  const int ny = slice.axis(0).nodes, nx = slice.axis(1).nodes;
  std::vector<double> out(size_t(ny) * size_t(nx));
  const double inv = 1.0 / (2.0 * radius * radius);
  size_t c = 0;
  for (int j = 0; j < ny; j++) {
    const double dy = slice.coord(0, j) - y0;
    for (int i = 0; i < nx; i++, c++) {
      const double dx = slice.coord(1, i) - x0;
      out[c] = std::exp(-(dx * dx + dy * dy) * inv);
    }
  }
  return out;
}

std::vector<double> clipped_gaussian_ic_3d(double x0, double y0, double z0, double mass,
                                           double spread2, const Grid& slice) {
  if (slice.dim() != 3)
    throw std::invalid_argument("clipped_gaussian_ic_3d: expected a (z, y, x) grid");
  if (!(mass > 0) || !(spread2 > 0))
    throw std::invalid_argument("clipped_gaussian_ic_3d: mass and spread must be > 0");
  const int nz = slice.axis(0).nodes, ny = slice.axis(1).nodes, nx = slice.axis(2).nodes;
  const double amp = mass / std::pow(4.0 * M_PI * spread2, 1.5);
  const double inv = 1.0 / (4.0 * spread2);
  std::vector<double> out(size_t(nz) * size_t(ny) * size_t(nx));
  size_t c = 0;
  for (int k = 0; k < nz; k++) {
    const double dz = slice.coord(0, k) - z0;
    for (int j = 0; j < ny; j++) {
      const double dy = slice.coord(1, j) - y0;
      for (int i = 0; i < nx; i++, c++) {
        const double dx = slice.coord(2, i) - x0;
        const double w = amp * std::exp(-(dx * dx + dy * dy + dz * dz) * inv);
        out[c] = w <= 0.1 ? 0.0 : (w >= 1.0 ? 1.0 : w);
      }
    }
  }
  return out;
}

} // namespace bodil
