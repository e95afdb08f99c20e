#pragma once

#include <vector>

#include "bodil/grid.hpp"

namespace bodil {

// Plain (non-differentiated) residual evaluation on Fields. These wrap the
// same kernel cores the gradient tapes replay, so values here and values
// inside an optimization agree bit for bit.

// Damped-free harmonic oscillator state on a shared 1-d time grid.
struct OscillatorState {
  Field x;      // position, N+1 nodes
  Field v;      // velocity, N+1 nodes
  double omega2 = 1.0; // spring constant over mass
};

// Tumor growth coefficients. The voxel diffusivity is the tissue-weighted
// combination D = D_g * c_g + D_w * c_w.
struct TumorCoefficients {
  double D_g = 0.0; // gray-matter diffusivity
  double D_w = 0.0; // white-matter diffusivity
  double rho = 0.0; // logistic growth rate
  Field c_g;        // gray-matter fraction per voxel
  Field c_w;        // white-matter fraction per voxel
};

// Midpoint-rule residuals, length 2N: position blocks first, velocity after.
std::vector<double> oscillator_residuals(const OscillatorState& state);

// Heat equation on (t, x), periodic in x, trapezoidal midpoint field.
// Length (n_t - 1) * n_x.
std::vector<double> diffusion_residuals(const Field& u, double D);

// Fisher-KPP on (t, y, x), periodic in y and x, spatially varying D with
// arithmetic face averaging. Throws std::domain_error unless D > 0
// everywhere. Length (n_t - 1) * n_y * n_x.
std::vector<double> reaction_diffusion_residuals_2d(const Field& u, const Field& D, double rho);

// Crank-Nicolson Fisher-KPP on (t, z, y, x) with zero-flux (mirrored ghost)
// boundaries. Length (n_t - 1) * n_z * n_y * n_x.
std::vector<double> tumor_residuals_3d(const Field& u, const TumorCoefficients& coeff);

// The combined voxel diffusivity map used by tumor_residuals_3d; exposed
// because posterior assembly needs the same combination inside a tape.
std::vector<double> tumor_diffusivity(const TumorCoefficients& coeff);

} // namespace bodil
