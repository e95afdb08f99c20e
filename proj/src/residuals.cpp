#include "bodil/residuals.hpp"

#include <stdexcept>

#include "bodil/kernels.hpp"

namespace bodil {

namespace {

const Grid& require_grid(const Field& f, const char* what) {
  if (!f.grid) throw std::invalid_argument(std::string(what) + ": field has no grid");
  return *f.grid;
}

} // namespace

std::vector<double> oscillator_residuals(const OscillatorState& state) {
  const Grid& g = require_grid(state.x, "oscillator_residuals");
  if (g.dim() != 1) throw std::invalid_argument("oscillator_residuals: state must be 1-d in time");
  if (!state.v.grid || !g.same_layout(*state.v.grid))
    throw std::invalid_argument("oscillator_residuals: x and v must share one grid");
  const int n = g.axis(0).nodes - 1;
  std::vector<double> r(size_t(2 * n));
  kernels::oscillator_residual(n, g.axis(0).spacing, state.x.values.data(),
                               state.v.values.data(), state.omega2, r.data());
  return r;
}

std::vector<double> diffusion_residuals(const Field& u, double D) {
  const Grid& g = require_grid(u, "diffusion_residuals");
  if (g.dim() != 2) throw std::invalid_argument("diffusion_residuals: u must be (t, x)");
  const int nt = g.axis(0).nodes, nx = g.axis(1).nodes;
  if (nx < 3) throw std::invalid_argument("diffusion_residuals: need at least 3 space nodes");
  std::vector<double> r(size_t(nt - 1) * size_t(nx));
  kernels::diffusion1d_residual(nt, nx, g.axis(0).spacing, g.axis(1).spacing, D,
                                u.values.data(), r.data());
  return r;
}

std::vector<double> reaction_diffusion_residuals_2d(const Field& u, const Field& D, double rho) {
  const Grid& g = require_grid(u, "reaction_diffusion_residuals_2d");
  if (g.dim() != 3)
    throw std::invalid_argument("reaction_diffusion_residuals_2d: u must be (t, y, x)");
  const Grid& gd = require_grid(D, "reaction_diffusion_residuals_2d");
  const int nt = g.axis(0).nodes, ny = g.axis(1).nodes, nx = g.axis(2).nodes;
  if (gd.dim() != 2 || gd.axis(0).nodes != ny || gd.axis(1).nodes != nx)
    throw std::invalid_argument("reaction_diffusion_residuals_2d: D grid must match (y, x)");
  for (double d : D.values)
    if (!(d > 0.0))
      throw std::domain_error("reaction_diffusion_residuals_2d: D must be strictly positive");
  std::vector<double> r(size_t(nt - 1) * size_t(ny) * size_t(nx));
  kernels::rd2d_residual(nt, ny, nx, g.axis(0).spacing, g.axis(1).spacing, g.axis(2).spacing,
                         u.values.data(), D.values.data(), rho, r.data());
  return r;
}

std::vector<double> tumor_diffusivity(const TumorCoefficients& coeff) {
  const Grid& gg = require_grid(coeff.c_g, "tumor_diffusivity");
  if (!coeff.c_w.grid || !gg.same_layout(*coeff.c_w.grid))
    throw std::invalid_argument("tumor_diffusivity: c_g and c_w must share one grid");
  if (coeff.D_g < 0.0 || coeff.D_w < 0.0 || coeff.rho < 0.0)
    throw std::invalid_argument("tumor_diffusivity: coefficients must be non-negative");
  std::vector<double> D(coeff.c_g.values.size());
  for (size_t i = 0; i < D.size(); i++)
    D[i] = coeff.D_g * coeff.c_g.values[i] + coeff.D_w * coeff.c_w.values[i];
  return D;
}

std::vector<double> tumor_residuals_3d(const Field& u, const TumorCoefficients& coeff) {
  const Grid& g = require_grid(u, "tumor_residuals_3d");
  if (g.dim() != 4) throw std::invalid_argument("tumor_residuals_3d: u must be (t, z, y, x)");
  const Grid& gc = require_grid(coeff.c_g, "tumor_residuals_3d");
  if (gc.dim() != 3 || gc.axis(0).nodes != g.axis(1).nodes ||
      gc.axis(1).nodes != g.axis(2).nodes || gc.axis(2).nodes != g.axis(3).nodes)
    throw std::invalid_argument("tumor_residuals_3d: tissue grids must match (z, y, x)");
  std::vector<double> D = tumor_diffusivity(coeff);
  kernels::TumorDims dims{g.axis(0).nodes,   g.axis(1).nodes,   g.axis(2).nodes,
                          g.axis(3).nodes,   g.axis(0).spacing, g.axis(1).spacing,
                          g.axis(2).spacing, g.axis(3).spacing};
  std::vector<double> r(size_t(dims.nt - 1) * size_t(dims.nz) * size_t(dims.ny) *
                        size_t(dims.nx));
  kernels::tumor3d_residual(dims, u.values.data(), D.data(), coeff.rho, r.data());
  return r;
}

} // namespace bodil
