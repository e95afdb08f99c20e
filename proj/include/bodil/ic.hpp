#pragma once

#include <vector>

#include "bodil/grid.hpp"

namespace bodil {

// unit-peak Gaussian bump exp(-((x-x0)^2+(y-y0)^2)/(2 R^2)) sampled at the
// nodes of a (y, x) slice grid
std::vector<double> gaussian_ic_2d(double x0, double y0, double radius, const Grid& slice);

// localized growth seed on a (z, y, x) slice grid:
//   w = mass/(4 pi spread2)^(3/2) exp(-|r - r0|^2/(4 spread2))
// clipped to 0 at or below 0.1 and to 1 at or above 1
std::vector<double> clipped_gaussian_ic_3d(double x0, double y0, double z0, double mass,
                                           double spread2, const Grid& slice);

} // namespace bodil
