#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <bodil/optimize.hpp>
#include <bodil/posterior.hpp>

namespace bodil {

// Gaussian approximation N(mean, covariance) of a posterior around a mode,
// with covariance (-H)^-1 for H the log-posterior Hessian at the mean.
struct GaussianApprox {
  std::vector<double> mean;
  std::vector<double> covariance; // row-major dim x dim
  double logdet_precision = 0.0;  // log det(-H + jitter I) from the factorization
  double jitter = 0.0;            // diagonal shift used when -H failed to factor as-is
  std::vector<std::string> variable_labels;

  int64_t dim() const { return int64_t(mean.size()); }
  double cov(int64_t i, int64_t j) const { return covariance[size_t(i * dim() + j)]; }
  double variance(int64_t i) const { return cov(i, i); }
};

// The surface the fit needs from a log-density: value with gradient, and the
// dense Hessian (row-major dim x dim). LogPosterior satisfies it directly;
// tests and toy densities can supply closures.
struct FitTarget {
  int64_t dim = 0;
  std::function<double(std::span<const double>, std::span<double>)> value_grad;
  std::function<std::vector<double>(std::span<const double>)> hessian;
  std::vector<std::string> labels; // optional; sized dim when present
};

FitTarget fit_target(LogPosterior& post);

// one label per flat-vector entry, "name" for scalars and "name[i]" for
// field nodes, in layout order
std::vector<std::string> variable_labels(const FlatLayout& layout);

// Second-order expansion around a stationary point v*. Requires
// |grad|_inf < 1e-4 at v*. When -H is not positive definite a jitter of
// 1e-10 trace(-H)/dim is added once; if that still fails the point is a
// saddle and the error names the most negative eigenvalue.
GaussianApprox laplace_fit(const FitTarget& target, std::span<const double> v_star);
GaussianApprox laplace_fit(LogPosterior& post, std::span<const double> v_star);

// standard normal quantile, e.g. 1.6449 at p = 0.95
double normal_quantile(double p);

// Symmetric credible interval mean_i +- z sqrt(cov_ii) per selected
// variable; the level pair must satisfy lo + hi = 1, and (0.05, 0.95) gives
// z = 1.6449. Zero variance degenerates to (mean, mean).
std::vector<std::pair<double, double>> credible_band(const GaussianApprox& approx,
                                                     std::span<const int64_t> indices,
                                                     std::pair<double, double> level = {0.05,
                                                                                        0.95});

// Pearson correlations (row-major dim x dim) with exact unit diagonal.
// Zero-variance coordinates get zero off-diagonal entries and are reported
// through `degenerate` when given.
std::vector<double> correlation_matrix(const GaussianApprox& approx,
                                       std::vector<int64_t>* degenerate = nullptr);

// A family of conditional posteriors over the field u indexed by a scalar
// parameter theta, with the field maximized out. exact_marginal_theta only
// supports families whose negated-objective Hessian over u is constant in u
// (the integral over u is then a closed-form Gaussian one).
struct ThetaConditional {
  int64_t field_dim = 0;
  // maximizes the conditional log-posterior over the field at fixed theta,
  // optionally warm-started; fills ustar (ignored when field_dim is 0) and
  // returns the maximized value, or -inf when the inner solve fails
  std::function<double(double theta, std::span<const double> warm, std::vector<double>& ustar)>
      maximize;
  // negated-objective Hessian over the field at (u, theta), row-major;
  // unused when field_dim is 0
  std::function<std::vector<double>(double theta, std::span<const double> u)> hessian;
};

ThetaConditional make_theta_conditional(const ProblemSpec& spec, const InnerMapConfig& cfg = {});

struct MarginalOptions {
  // audit variant that divides by det(H) as displayed in some write-ups;
  // the Gaussian integral itself gives det(H)^-1/2, the default
  bool verbatim_det = false;
  uint64_t guard_seed = 0; // seeds the two random points of the curvature guard
  double guard_tol = 1e-6;
};

struct MarginalResult {
  std::vector<double> density;      // normalized over the grid by the trapezoidal rule
  std::vector<double> log_marginal; // unnormalized log values, for diagnostics
  std::string note;                 // records the determinant convention in use
};

// Exact parameter marginal for conditionals quadratic in the field:
// for each theta, maximize over u and integrate the Gaussian remainder,
// m(theta) = exp(l(u*, theta)) (2 pi)^{d/2} det(H_J(theta))^{-1/2} with H_J
// the negated-objective Hessian. Verifies the quadratic structure by
// comparing H_J at two random u before sweeping; theta values are swept in
// order, warm-starting each inner solve from the previous optimum.
MarginalResult exact_marginal_theta(const ThetaConditional& cond,
                                    std::span<const double> theta_grid,
                                    const MarginalOptions& opts = {});
MarginalResult exact_marginal_theta(const ProblemSpec& spec, std::span<const double> theta_grid,
                                    const InnerMapConfig& cfg = {},
                                    const MarginalOptions& opts = {});

// square matrix in the field file format, shape {n, n} with axes {"i", "j"}
void write_matrix_field(const std::string& path, std::span<const double> values, int64_t n);

// per-variable summary: label, mean, std, and the 5 and 95% quantiles
void write_gaussian_summary_csv(const std::string& path, const GaussianApprox& approx);

} // namespace bodil
