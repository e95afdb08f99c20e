#include <bodil/laplace.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <boost/math/special_functions/erf.hpp>

#include <bodil/field_io.hpp>
#include <bodil/rng.hpp>

namespace bodil {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::MatrixXd symmetrized(std::span<const double> values, int64_t n, const char* what) {
  if (int64_t(values.size()) != n * n)
    throw std::invalid_argument(std::string(what) + ": expected a " + std::to_string(n) + " x " +
                                std::to_string(n) + " matrix");
  Eigen::Map<const RowMat> m(values.data(), n, n);
  return 0.5 * (m + m.transpose());
}

} // namespace

std::vector<std::string> variable_labels(const FlatLayout& layout) {
  std::vector<std::string> labels;
  labels.reserve(size_t(layout.dim));
  for (const FlatLayout::Block& b : layout.blocks) {
    if (b.size == 1) {
      labels.push_back(b.name);
      continue;
    }
    for (int64_t i = 0; i < b.size; i++) labels.push_back(b.name + "[" + std::to_string(i) + "]");
  }
  return labels;
}

FitTarget fit_target(LogPosterior& post) {
  FitTarget t;
  t.dim = post.dim();
  t.value_grad = [&post](std::span<const double> v, std::span<double> g) {
    return post.value_grad(v, g);
  };
  t.hessian = [&post](std::span<const double> v) {
    return post.hessian(v, ad::HessianMode::ForwardOverReverse, post.dim());
  };
  t.labels = variable_labels(post.layout());
  return t;
}

GaussianApprox laplace_fit(const FitTarget& target, std::span<const double> v_star) {
  const int64_t d = target.dim;
  if (d <= 0) throw std::invalid_argument("laplace fit: target dimension must be positive");
  if (int64_t(v_star.size()) != d)
    throw std::invalid_argument("laplace fit: point has dimension " +
                                std::to_string(v_star.size()) + ", expected " + std::to_string(d));

  std::vector<double> g(size_t(d), 0.0);
  target.value_grad(v_star, g);
  double ginf = 0.0;
  for (double gi : g) ginf = std::max(ginf, std::abs(gi));
  if (!(ginf < 1e-4))
    throw std::invalid_argument("laplace fit: not a stationary point; max abs gradient is " +
                                std::to_string(ginf) + " (needs < 1e-4)");

  // -H of the log posterior must be positive definite at a mode
  const std::vector<double> h = target.hessian(v_star);
  Eigen::MatrixXd a = -symmetrized(h, d, "laplace fit");

  Eigen::LLT<Eigen::MatrixXd> llt(a);
  double jitter = 0.0;
  if (llt.info() != Eigen::Success) {
    jitter = 1e-10 * a.trace() / double(d);
    Eigen::MatrixXd aj = a;
    aj.diagonal().array() += jitter;
    llt.compute(aj);
    if (llt.info() != Eigen::Success) {
      const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
      throw std::runtime_error(
          "laplace fit: negated Hessian is not positive definite after jitter; most negative "
          "eigenvalue is " +
          std::to_string(es.eigenvalues().minCoeff()) + " (saddle point or flat direction)");
    }
  }

  GaussianApprox approx;
  approx.mean.assign(v_star.begin(), v_star.end());
  approx.jitter = jitter;
  approx.logdet_precision = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();

  Eigen::MatrixXd sigma = llt.solve(Eigen::MatrixXd::Identity(d, d));
  sigma = 0.5 * (sigma + sigma.transpose()).eval();
  approx.covariance.resize(size_t(d * d));
  Eigen::Map<RowMat>(approx.covariance.data(), d, d) = sigma;

  if (int64_t(target.labels.size()) == d) {
    approx.variable_labels = target.labels;
  } else {
    approx.variable_labels = variable_labels(FlatLayout{{{"v", 0, d}}, d});
  }
  return approx;
}

GaussianApprox laplace_fit(LogPosterior& post, std::span<const double> v_star) {
  return laplace_fit(fit_target(post), v_star);
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("normal quantile: p must be inside (0, 1)");
  return std::numbers::sqrt2 * boost::math::erf_inv(2.0 * p - 1.0);
}

std::vector<std::pair<double, double>> credible_band(const GaussianApprox& approx,
                                                     std::span<const int64_t> indices,
                                                     std::pair<double, double> level) {
  const auto [lo, hi] = level;
  if (!(lo > 0.0 && hi < 1.0 && lo < hi) || std::abs(lo + hi - 1.0) > 1e-9)
    throw std::invalid_argument("credible band: level must be a symmetric pair like (0.05, 0.95)");
  const double z = normal_quantile(hi);

  std::vector<std::pair<double, double>> band;
  band.reserve(indices.size());
  for (int64_t idx : indices) {
    if (idx < 0 || idx >= approx.dim())
      throw std::out_of_range("credible band: variable index " + std::to_string(idx) +
                              " out of range");
    const double half = z * std::sqrt(std::max(approx.variance(idx), 0.0));
    const double m = approx.mean[size_t(idx)];
    band.emplace_back(m - half, m + half);
  }
  return band;
}

std::vector<double> correlation_matrix(const GaussianApprox& approx,
                                       std::vector<int64_t>* degenerate) {
  const int64_t d = approx.dim();
  if (degenerate) degenerate->clear();
  std::vector<double> inv_std(size_t(d), 0.0);
  for (int64_t i = 0; i < d; i++) {
    const double var = approx.variance(i);
    if (var > 0.0) {
      inv_std[size_t(i)] = 1.0 / std::sqrt(var);
    } else if (degenerate) {
      degenerate->push_back(i);
    }
  }
  std::vector<double> corr(size_t(d * d), 0.0);
  for (int64_t i = 0; i < d; i++) {
    corr[size_t(i * d + i)] = 1.0;
    for (int64_t j = i + 1; j < d; j++) {
      const double c = approx.cov(i, j) * inv_std[size_t(i)] * inv_std[size_t(j)];
      corr[size_t(i * d + j)] = c;
      corr[size_t(j * d + i)] = c;
    }
  }
  return corr;
}

ThetaConditional make_theta_conditional(const ProblemSpec& spec, const InnerMapConfig& cfg) {
  if (spec.theta.dim() != 1)
    throw std::invalid_argument("exact marginal: only a scalar parameter is supported, got " +
                                std::to_string(spec.theta.dim()));
  auto shared = std::make_shared<const ProblemSpec>(spec);
  const double theta_mid = 0.5 * (spec.theta.lo[0] + spec.theta.hi[0]);
  const std::vector<double> th_mid = {theta_mid};

  ThetaConditional cond;
  cond.field_dim = LogPosterior(*shared, th_mid, cfg.threads).dim();
  cond.maximize = [shared, cfg](double theta, std::span<const double> warm,
                                std::vector<double>& ustar) {
    const std::vector<double> th = {theta};
    InnerMapResult r = solve_inner_map(*shared, th, warm, cfg);
    ustar = std::move(r.v);
    return r.failed ? -kInf : -r.objective;
  };
  cond.hessian = [shared, cfg](double theta, std::span<const double> u) {
    const std::vector<double> th = {theta};
    LogPosterior post(*shared, th, cfg.threads);
    std::vector<double> h = post.hessian(u, ad::HessianMode::ForwardOverReverse, post.dim());
    for (double& v : h) v = -v;
    return h;
  };
  return cond;
}

MarginalResult exact_marginal_theta(const ThetaConditional& cond,
                                    std::span<const double> theta_grid,
                                    const MarginalOptions& opts) {
  if (theta_grid.size() < 2)
    throw std::invalid_argument("exact marginal: need at least 2 grid points");
  for (size_t i = 1; i < theta_grid.size(); i++)
    if (!(theta_grid[i] > theta_grid[i - 1]))
      throw std::invalid_argument("exact marginal: theta grid must be strictly increasing");
  if (!cond.maximize || (cond.field_dim > 0 && !cond.hessian))
    throw std::invalid_argument("exact marginal: conditional is missing maximize or hessian");

  const int64_t d = cond.field_dim;
  if (d > 0) {
    // the closed-form Gaussian integral is only valid when the objective is
    // quadratic over the field, i.e. the Hessian does not depend on u
    RngStream rs(opts.guard_seed, StreamPurpose::Scratch);
    std::vector<double> u1(size_t(d), 0.0), u2(size_t(d), 0.0);
    for (double& v : u1) v = rs.normal();
    for (double& v : u2) v = rs.normal();
    const std::vector<double> h1 = cond.hessian(theta_grid[0], u1);
    const std::vector<double> h2 = cond.hessian(theta_grid[0], u2);
    if (h1.size() != size_t(d * d) || h2.size() != h1.size())
      throw std::invalid_argument("exact marginal: hessian returned the wrong shape");
    double scale = 1.0, diff = 0.0;
    for (size_t i = 0; i < h1.size(); i++) {
      scale = std::max(scale, std::abs(h1[i]));
      diff = std::max(diff, std::abs(h1[i] - h2[i]));
    }
    if (diff > opts.guard_tol * scale)
      throw std::runtime_error(
          "exact marginal: the conditional objective is not quadratic over the field (the "
          "Hessian changes between two random points); fall back to the sampled mode "
          "approximation");
  }

  const size_t n = theta_grid.size();
  MarginalResult res;
  res.log_marginal.assign(n, -kInf);
  res.note = opts.verbatim_det
                 ? "marginal normalization: det(H)^-1 audit variant in use; the Gaussian "
                   "integral itself gives det(H)^-1/2"
                 : "marginal normalization: det(H)^-1/2 (Gaussian integral); det(H)^-1 "
                   "variant available for audit";

  std::vector<double> warm, ustar;
  for (size_t i = 0; i < n; i++) {
    const double theta = theta_grid[i];
    const double lmax = cond.maximize(theta, warm, ustar);
    if (!std::isfinite(lmax)) continue; // failed inner solve contributes zero density
    double logm = lmax;
    if (d > 0) {
      const std::vector<double> h = cond.hessian(theta, ustar);
      const Eigen::MatrixXd hj = symmetrized(h, d, "exact marginal");
      const Eigen::LLT<Eigen::MatrixXd> llt(hj);
      if (llt.info() != Eigen::Success)
        throw std::runtime_error("exact marginal: inner Hessian is not positive definite at "
                                 "theta = " +
                                 std::to_string(theta));
      const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
      const double half_d_log2pi = 0.5 * double(d) * std::log(2.0 * std::numbers::pi);
      logm += half_d_log2pi - (opts.verbatim_det ? logdet : 0.5 * logdet);
      warm = ustar;
    }
    res.log_marginal[i] = logm;
  }

  double top = -kInf;
  for (double lm : res.log_marginal) top = std::max(top, lm);
  if (!std::isfinite(top))
    throw std::runtime_error("exact marginal: every grid point has zero density");

  std::vector<double> w(n, 0.0);
  for (size_t i = 0; i + 1 < n; i++) {
    const double half = 0.5 * (theta_grid[i + 1] - theta_grid[i]);
    w[i] += half;
    w[i + 1] += half;
  }
  double z = 0.0;
  res.density.assign(n, 0.0);
  for (size_t i = 0; i < n; i++) {
    res.density[i] = std::exp(res.log_marginal[i] - top);
    z += w[i] * res.density[i];
  }
  for (double& dv : res.density) dv /= z;
  return res;
}

MarginalResult exact_marginal_theta(const ProblemSpec& spec, std::span<const double> theta_grid,
                                    const InnerMapConfig& cfg, const MarginalOptions& opts) {
  return exact_marginal_theta(make_theta_conditional(spec, cfg), theta_grid, opts);
}

void write_matrix_field(const std::string& path, std::span<const double> values, int64_t n) {
  if (int64_t(values.size()) != n * n)
    throw std::invalid_argument("matrix field: expected " + std::to_string(n * n) + " values");
  RawField raw;
  raw.shape = {int(n), int(n)};
  raw.axes = {"i", "j"};
  raw.values.assign(values.begin(), values.end());
  write_field_file(path, raw);
}

void write_gaussian_summary_csv(const std::string& path, const GaussianApprox& approx) {
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("gaussian summary: cannot open " + path);
  const double z = normal_quantile(0.95);
  std::fprintf(fp, "label,mean,std,q05,q95\n");
  for (int64_t i = 0; i < approx.dim(); i++) {
    const double sd = std::sqrt(std::max(approx.variance(i), 0.0));
    const double m = approx.mean[size_t(i)];
    std::fprintf(fp, "%s,%.17g,%.17g,%.17g,%.17g\n", approx.variable_labels[size_t(i)].c_str(), m,
                 sd, m - z * sd, m + z * sd);
  }
  std::fclose(fp);
}

} // namespace bodil
