#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "bodil/grid.hpp"
#include "bodil/optimize.hpp"
#include "bodil/posterior.hpp"
#include "bodil/samplers.hpp"

namespace bodil {

// Benchmark definitions: problem configurations with their published
// constants, synthetic data generators, reference forward solvers used for
// data synthesis, and the post-processing that turns posterior samples into
// field distributions and treatment volumes.
//
// Generators are pure functions of (config, seed): every random draw comes
// from a counter-based stream, so outputs are bit-identical across runs,
// platforms, and evaluation orders.

// harmonic oscillator x'' = -omega^2 x observed through noisy positions on
// the first half of the time window
struct OscillatorProblem {
  double horizon = 10.0; // trajectory length
  int intervals = 64;    // grid cells; the grid carries intervals+1 nodes
  double sigma = 0.1;    // observation noise scale
  int n_data = 20;       // observation count, times strictly inside (0, horizon/2)
  double x0 = 0.5, v0 = 0.2;
  double omega = 1.0; // generating frequency
  double beta = 1e4;  // residual sharpness
  bool infer_omega2 = true;
  double omega2_lo = 0.25, omega2_hi = 4.0; // prior box when inferred
};

// analytic trajectory x0 cos(omega t) + (v0/omega) sin(omega t)
double oscillator_exact(const OscillatorProblem& p, double t);

// positions at times uniform on (0, horizon/2) with N(0, sigma^2) noise on
// the analytic trajectory; no numeric solver is involved
Dataset generate_oscillator_data(const OscillatorProblem& p, uint64_t seed);
ProblemSpec make_oscillator_spec(const OscillatorProblem& p, uint64_t seed);

// heat equation on a periodic interval observed at scattered space-time
// points; the log-posterior over the field is exactly quadratic
struct DiffusionProblem {
  double length = 1.0, horizon = 1.0;
  double diffusivity = 0.1;
  int n_x = 16, n_t = 64;
  double sigma = 0.1;
  int n_data = 200;
  double beta = 1e4;
};

// single decaying cosine mode cos(2 pi x / L) exp(-D (2 pi / L)^2 t)
double diffusion_exact(const DiffusionProblem& p, double x, double t);

Dataset generate_diffusion_data(const DiffusionProblem& p, uint64_t seed);
ProblemSpec make_diffusion_spec(const DiffusionProblem& p, uint64_t seed);

// logistic reaction-diffusion on a doubly periodic square with a two-valued
// diffusivity medium; one binary detection per node of the final time slice;
// the sampled parameters are the center (x0, y0) of the Gaussian initial bump
struct ReactionDiffusionProblem {
  double length = 1.0, horizon = 0.5;
  double rho = 8.0;
  double d_low = 0.005, d_high = 0.1; // medium phase values
  int medium_case = 1;                // 1: long-wavelength medium, 2: fine-grained
  double medium_cutoff = 2.0;         // Fourier filter width, cycles per domain
  int n_space = 32;                   // nodes per periodic axis
  int n_time = 65;                    // field grid nodes over [0, horizon]
  double tau = 0.5;                   // detection threshold
  double sigma = 0.01;                // detection softness
  double lambda_pde = 100.0, lambda_ic = 1000.0;
  double ic_radius_frac = 1.0 / 16.0;                     // bump radius / length
  std::array<double, 2> theta_ref{2.0 / 3.0, 1.0 / 3.0}; // generating bump center
  double forward_dt = 6.1e-4; // reference solver step (rounded to divide horizon)

  // the published pairings: case selects the filter cutoff (2 or 6 cycles),
  // sigma selects the weights (10, 100) at 0.05 and (100, 1000) at 0.01
  static ReactionDiffusionProblem configured(int medium_case, double sigma);
  ReactionDiffusionProblem full_resolution() const; // 64^2 space, 129 time nodes
};

// two-valued diffusivity medium: white Gaussian noise on the grid, Fourier
// amplitudes damped by exp(-|k|^2 / (2 kc^2)), inverse transform, threshold
// at the median; below the median -> d_low, at or above -> d_high
Field generate_rd_medium(const ReactionDiffusionProblem& p, uint64_t seed);

// final-time field of the reference explicit solver started from the unit
// Gaussian bump at (x0, y0); micro steps are shortened so an integer number
// of them lands exactly on the horizon
Field rd_forward_field(const ReactionDiffusionProblem& p, const Field& medium,
                       double x0, double y0);

// one Bernoulli detection per node with success probability S((u - tau)/sigma)
Dataset rd_labels_from_field(const ReactionDiffusionProblem& p, const Field& u_final,
                             uint64_t seed);
// reference forward run at theta_ref followed by label synthesis
Dataset generate_rd_data(const ReactionDiffusionProblem& p, const Field& medium,
                         uint64_t seed);

struct RdSetup {
  ProblemSpec spec;
  Field medium;     // generating diffusivity field (also referenced by the spec)
  Field true_final; // reference forward field the labels were drawn from
};
RdSetup make_rd_setup(const ReactionDiffusionProblem& p, uint64_t seed);

// logistic growth with tissue-dependent diffusivity in a synthetic brain
// phantom; the data is a segmentation of the final-time field and the sampled
// parameters are the seed position (x0, y0, z0)
struct TumorProblem {
  double extent = 90.0; // cubic domain edge, mm
  int n_space = 32;
  int n_time = 64;
  double horizon = 100.0;              // growth interval, days
  double Dg = 0.01, Dw = 0.1;          // generating diffusivities, mm^2/day
  double rho = 0.08;                   // generating growth rate, 1/day
  double tau_lo = 0.25, tau_up = 0.65; // generating segmentation thresholds
  double sigma = 0.05;                 // hinge sharpness
  double lambda_pde = 1e3, lambda_ic = 200.0;
  double ic_mass = 1500.0, ic_spread2 = 15.0;        // seed bump parameters, mm^2
  std::array<double, 3> theta_ref{49.5, 40.5, 45.0}; // generating seed position, mm
  int forward_steps = 512;                           // reference solver resolution
  std::array<double, 3> margins{10.0, 15.0, 20.0};   // standard-plan margins, mm
  bool optimize_model_params = true; // Dg, Dw, rho, tau_lo, tau_up inside the MAP

  TumorProblem full_resolution() const; // 64^3 space, 128 time nodes
};

// synthetic tissue maps on a (z, y, x) slice grid: an ellipsoidal brain mask
// and a smooth gray/white partition from a band-limited noise field, with
// c_g + c_w = 1 inside the mask and both zero outside
struct PhantomBrain {
  Field c_g, c_w;
  std::vector<uint8_t> mask; // 1 inside the brain
};
PhantomBrain make_phantom_brain(uint64_t seed, std::shared_ptr<const Grid> slice);

Field tumor_forward_field(const TumorProblem& p, const PhantomBrain& brain, double x0,
                          double y0, double z0);

// deterministic segmentation of a final-time field: healthy below tau_lo,
// glioma between the thresholds, necrotic at or above tau_up
Dataset generate_tumor_labels(const TumorProblem& p, const Field& true_final);

struct TumorSetup {
  ProblemSpec spec;
  PhantomBrain brain;
  Field true_final;
};
// builds the phantom, runs the reference forward solve, segments it, and
// assembles the spec; throws if the domain is not at least 50% larger than
// the span of the simulated tumor
TumorSetup make_tumor_setup(const TumorProblem& p, uint64_t seed);

// per-node summary of the final-time field across posterior samples:
// nearest-rank 5/50/95% quantiles and, per superlevel threshold, the
// fraction of samples whose field reaches it
struct FieldDistribution {
  Field q05, q50, q95;
  std::vector<double> levels;
  std::vector<Field> exceedance; // one field per level, values in [0, 1]
  int members = 0;               // samples summarized (duplicates included)
};

inline constexpr std::array<double, 4> kDefaultContourLevels{0.1, 0.3, 0.5, 0.6};

// member_field maps one theta sample to its field on the slice grid;
// duplicate theta rows (resampled chains) are evaluated once and weighted by
// multiplicity. Fewer than 8 samples is refused: tail quantiles would be
// meaningless.
FieldDistribution reconstruct_field_distribution(
    const SampleArchive& samples,
    const std::function<std::vector<double>(std::span<const double>)>& member_field,
    std::shared_ptr<const Grid> slice, std::span<const double> levels);

// members are conditional MAP solves of the spec at each sampled theta,
// warm-started from the previous member and reduced to the final time slice
FieldDistribution reconstruct_field_distribution(const SampleArchive& samples,
                                                 const ProblemSpec& spec,
                                                 const InnerMapConfig& cfg);

// treatment volume from a concentration field: the superlevel set {u >= c}
// restricted to the brain mask whose volume matches the target within one
// voxel, found by bisection on the threshold c
struct CtvResult {
  std::vector<uint8_t> mask;
  double threshold = 0.0;
};
CtvResult ctv_from_field(const Field& u_final, const std::vector<uint8_t>& brain,
                         double target_volume);

// exact squared Euclidean distance to the nearest set voxel with anisotropic
// spacings, by the separable lower-envelope transform; empty set -> +inf
std::vector<double> exact_sq_distance_field(const std::vector<uint8_t>& set,
                                            const Grid& slice);

// conventional margin-based plan: all brain voxels within `margin` of the
// necrotic core
std::vector<uint8_t> standard_plan_ctv(const std::vector<uint8_t>& necrotic,
                                       const std::vector<uint8_t>& brain,
                                       const Grid& slice, double margin);

} // namespace bodil
