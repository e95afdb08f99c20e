#include <bodil/samplers.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <memory>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <json.hpp>

#include <bodil/rng.hpp>

namespace bodil {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : 1.0 - 1.0 / (1.0 + std::exp(x)); }

std::string read_whole_file(const std::string& path, const char* what) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) throw std::runtime_error(std::string(what) + ": cannot open " + path);
  std::string s;
  char buf[1 << 16];
  size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, fp)) > 0) s.append(buf, n);
  std::fclose(fp);
  return s;
}

} // namespace

void HmcConfig::validate(int64_t dim) const {
  if (n_samples < 1) throw std::invalid_argument("hmc: n_samples must be at least 1");
  if (leapfrog_steps < 1) throw std::invalid_argument("hmc: leapfrog_steps must be at least 1");
  if (!(step_size > 0.0) || !std::isfinite(step_size))
    throw std::invalid_argument("hmc: step_size must be positive");
  if (mass.size() != 1 && int64_t(mass.size()) != dim)
    throw std::invalid_argument("hmc: mass must be a scalar or have one entry per coordinate");
  for (double m : mass)
    if (!(m > 0.0) || !std::isfinite(m))
      throw std::invalid_argument("hmc: mass entries must be positive");
  if (resolved_warmup() >= n_samples)
    throw std::invalid_argument("hmc: warmup must leave at least one retained sample");
}

void BasisConfig::validate() const {
  if (n_samples < 16) throw std::invalid_argument("basis: population must be at least 16");
  if (!(beta_basis > 0.0) || beta_basis > 1.0)
    throw std::invalid_argument("basis: beta_basis must be inside (0, 1]");
  if (!(gamma_basis > 0.0) || !std::isfinite(gamma_basis))
    throw std::invalid_argument("basis: gamma_basis must be positive");
  if (l_max < 1) throw std::invalid_argument("basis: l_max must be at least 1");
  if (max_stages < 1) throw std::invalid_argument("basis: max_stages must be at least 1");
}

void write_sample_archive(const std::string& path, const SampleArchive& archive) {
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("sample archive: cannot open " + path);
  for (int64_t j = 0; j < archive.dim; j++) std::fprintf(fp, "theta_%lld,", (long long)j);
  std::fprintf(fp, "log_posterior,stage,accepted\n");
  for (int64_t i = 0; i < archive.n(); i++) {
    for (int64_t j = 0; j < archive.dim; j++) std::fprintf(fp, "%.17g,", archive.at(i, j));
    std::fprintf(fp, "%.17g,%d,%d\n", archive.log_density[size_t(i)], archive.stage[size_t(i)],
                 int(archive.accepted[size_t(i)]));
  }
  std::fclose(fp);

  nlohmann::json side;
  side["seed"] = archive.seed;
  side["dim"] = archive.dim;
  side["n"] = archive.n();
  side["exponents"] = archive.exponents;
  side["acceptance_rate"] = archive.acceptance_rate;
  side["divergences"] = archive.divergences;
  side["config"] = archive.config_json.empty() ? nlohmann::json()
                                               : nlohmann::json::parse(archive.config_json);
  std::FILE* sp = std::fopen((path + ".json").c_str(), "wb");
  if (!sp) throw std::runtime_error("sample archive: cannot open " + path + ".json");
  const std::string text = side.dump(1) + "\n";
  std::fwrite(text.data(), 1, text.size(), sp);
  std::fclose(sp);
}

SampleArchive read_sample_archive(const std::string& path) {
  const std::string text = read_whole_file(path, "sample archive");
  SampleArchive a;

  size_t pos = text.find('\n');
  if (pos == std::string::npos) throw std::runtime_error("sample archive: missing header");
  const std::string header = text.substr(0, pos);
  int64_t d = 0;
  {
    size_t at = 0;
    while (header.compare(at, 6, "theta_") == 0) {
      at = header.find(',', at);
      if (at == std::string::npos) throw std::runtime_error("sample archive: malformed header");
      at++;
      d++;
    }
    if (header.substr(at) != "log_posterior,stage,accepted")
      throw std::runtime_error("sample archive: unexpected columns in " + path);
  }
  a.dim = d;

  const char* p = text.c_str() + pos + 1;
  while (*p) {
    char* end = nullptr;
    for (int64_t j = 0; j < d; j++) {
      a.samples.push_back(std::strtod(p, &end));
      if (end == p || *end != ',') throw std::runtime_error("sample archive: malformed row");
      p = end + 1;
    }
    a.log_density.push_back(std::strtod(p, &end));
    if (end == p || *end != ',') throw std::runtime_error("sample archive: malformed row");
    p = end + 1;
    a.stage.push_back(int(std::strtol(p, &end, 10)));
    if (end == p || *end != ',') throw std::runtime_error("sample archive: malformed row");
    p = end + 1;
    a.accepted.push_back(uint8_t(std::strtol(p, &end, 10)));
    if (end == p || *end != '\n') throw std::runtime_error("sample archive: malformed row");
    p = end + 1;
  }

  const std::string side_path = path + ".json";
  if (std::FILE* sp = std::fopen(side_path.c_str(), "rb")) {
    std::fclose(sp);
    const nlohmann::json side = nlohmann::json::parse(read_whole_file(side_path, "sample archive"));
    a.seed = side.value("seed", uint64_t(0));
    a.exponents = side.value("exponents", std::vector<double>{});
    a.acceptance_rate = side.value("acceptance_rate", 0.0);
    a.divergences = side.value("divergences", int64_t(0));
    if (side.contains("config") && !side["config"].is_null())
      a.config_json = side["config"].dump();
  }
  return a;
}

std::pair<std::vector<double>, std::vector<double>> empirical_moments(
    const SampleArchive& archive) {
  const int64_t n = archive.n(), d = archive.dim;
  if (n < 2) throw std::invalid_argument("empirical moments: need at least 2 samples");
  std::vector<double> mean(size_t(d), 0.0), cov(size_t(d * d), 0.0);
  for (int64_t i = 0; i < n; i++)
    for (int64_t j = 0; j < d; j++) mean[size_t(j)] += archive.at(i, j);
  for (double& m : mean) m /= double(n);
  std::vector<double> r(size_t(d), 0.0);
  for (int64_t i = 0; i < n; i++) {
    for (int64_t j = 0; j < d; j++) r[size_t(j)] = archive.at(i, j) - mean[size_t(j)];
    for (int64_t j = 0; j < d; j++)
      for (int64_t k = j; k < d; k++) cov[size_t(j * d + k)] += r[size_t(j)] * r[size_t(k)];
  }
  for (int64_t j = 0; j < d; j++)
    for (int64_t k = j; k < d; k++) {
      cov[size_t(j * d + k)] /= double(n - 1);
      cov[size_t(k * d + j)] = cov[size_t(j * d + k)];
    }
  return {std::move(mean), std::move(cov)};
}

HmcTarget make_hmc_target(LogPosterior& post) {
  HmcTarget t;
  t.dim = post.dim();
  const std::vector<double> lo = post.joint_lo(), hi = post.joint_hi();
  const int64_t k = int64_t(lo.size());
  if (k == 0) {
    t.logpost = [&post](std::span<const double> z) { return post.value(z); };
    t.grad = [&post](std::span<const double> z, std::span<double> g) { post.value_grad(z, g); };
    return t;
  }
  const int64_t off = t.dim - k;

  auto to_model = [lo, hi, off, k](std::span<const double> z) {
    std::vector<double> v(z.begin(), z.end());
    for (int64_t j = 0; j < k; j++)
      v[size_t(off + j)] = LogPosterior::bounded_value(z[size_t(off + j)], lo[size_t(j)],
                                                       hi[size_t(j)]);
    return v;
  };
  auto log_jacobian = [lo, hi, off, k](std::span<const double> z) {
    double s = 0.0;
    for (int64_t j = 0; j < k; j++) {
      const double zj = z[size_t(off + j)];
      s += std::log(hi[size_t(j)] - lo[size_t(j)]) - softplus(zj) - softplus(-zj);
    }
    return s;
  };

  t.to_model = to_model;
  t.log_jacobian = log_jacobian;
  t.from_model = [lo, hi, off, k](std::span<const double> v) {
    std::vector<double> z(v.begin(), v.end());
    for (int64_t j = 0; j < k; j++)
      z[size_t(off + j)] = LogPosterior::bounded_raw(v[size_t(off + j)], lo[size_t(j)],
                                                     hi[size_t(j)]);
    return z;
  };
  t.logpost = [&post, to_model, log_jacobian](std::span<const double> z) {
    const std::vector<double> v = to_model(z);
    return post.value(v) + log_jacobian(z);
  };
  t.grad = [&post, to_model, lo, hi, off, k](std::span<const double> z, std::span<double> g) {
    const std::vector<double> v = to_model(z);
    std::vector<double> gv(v.size(), 0.0);
    post.value_grad(v, gv);
    std::copy(gv.begin(), gv.end(), g.begin());
    for (int64_t j = 0; j < k; j++) {
      const double s = sigmoid(z[size_t(off + j)]);
      const double width = hi[size_t(j)] - lo[size_t(j)];
      g[size_t(off + j)] = gv[size_t(off + j)] * width * s * (1.0 - s) + (1.0 - 2.0 * s);
    }
  };
  return t;
}

void leapfrog(const HmcTarget& target, std::vector<double>& z, std::vector<double>& p,
              std::span<const double> mass, double step_size, int64_t steps) {
  const size_t d = z.size();
  const bool scalar_mass = mass.size() == 1;
  std::vector<double> g(d, 0.0);
  target.grad(z, g);
  for (size_t i = 0; i < d; i++) p[i] += 0.5 * step_size * g[i];
  for (int64_t s = 0; s < steps; s++) {
    for (size_t i = 0; i < d; i++) z[i] += step_size * p[i] / mass[scalar_mass ? 0 : i];
    target.grad(z, g);
    const double kick = (s + 1 < steps) ? step_size : 0.5 * step_size;
    for (size_t i = 0; i < d; i++) p[i] += kick * g[i];
  }
}

SampleArchive hmc_sample(const HmcTarget& target, std::span<const double> v0,
                         const HmcConfig& cfg) {
  cfg.validate(target.dim);
  const int64_t d = target.dim;
  if (int64_t(v0.size()) != d)
    throw std::invalid_argument("hmc: starting point has the wrong dimension");

  std::vector<double> z = target.from_model ? target.from_model(v0)
                                            : std::vector<double>(v0.begin(), v0.end());
  for (double zi : z)
    if (!std::isfinite(zi))
      throw std::invalid_argument(
          "hmc: starting point is not finite in sampling coordinates (on the prior boundary?)");
  double cur_lp = target.logpost(z);
  if (!std::isfinite(cur_lp))
    throw std::invalid_argument("hmc: log density is not finite at the starting point");

  std::vector<double> mass = cfg.mass;
  const auto mass_at = [&mass](size_t i) { return mass[mass.size() == 1 ? 0 : i]; };

  const int64_t warmup = cfg.resolved_warmup();
  const int64_t kept = cfg.n_samples - warmup;
  SampleArchive a;
  a.dim = d;
  a.seed = cfg.seed;
  a.samples.reserve(size_t(kept * d));
  a.log_density.reserve(size_t(kept));
  {
    nlohmann::json c;
    c["sampler"] = "hmc";
    c["n_samples"] = cfg.n_samples;
    c["leapfrog_steps"] = cfg.leapfrog_steps;
    c["step_size"] = cfg.step_size;
    c["mass"] = cfg.mass;
    c["seed"] = cfg.seed;
    c["warmup"] = warmup;
    a.config_json = c.dump();
  }

  RngStream momentum(cfg.seed, StreamPurpose::HmcMomentum);
  RngStream metropolis(cfg.seed, StreamPurpose::HmcAccept);
  std::vector<double> p(size_t(d), 0.0), znew, pnew;
  int64_t accepted_total = 0;
  const auto t0 = std::chrono::steady_clock::now();

  for (int64_t it = 0; it < cfg.n_samples; it++) {
    double kin0 = 0.0;
    for (size_t i = 0; i < size_t(d); i++) {
      p[i] = std::sqrt(mass_at(i)) * momentum.normal();
      kin0 += p[i] * p[i] / (2.0 * mass_at(i));
    }
    const double h0 = -cur_lp + kin0;

    znew = z;
    pnew = p;
    leapfrog(target, znew, pnew, mass, cfg.step_size, cfg.leapfrog_steps);
    const double lp_new = target.logpost(znew);
    double kin1 = 0.0;
    for (size_t i = 0; i < size_t(d); i++) kin1 += pnew[i] * pnew[i] / (2.0 * mass_at(i));
    const double dh = (-lp_new + kin1) - h0;

    const bool divergent = !(std::abs(dh) <= 1000.0); // catches NaN as well
    if (divergent) a.divergences++;
    const double u = metropolis.uniform();
    const bool accept = !divergent && (dh <= 0.0 || u < std::exp(-dh));
    if (accept) {
      z = znew;
      cur_lp = lp_new;
      accepted_total++;
    }

    if (it >= warmup) {
      const std::vector<double> v = target.to_model ? target.to_model(z)
                                                    : std::vector<double>(z.begin(), z.end());
      a.samples.insert(a.samples.end(), v.begin(), v.end());
      const double jac = target.log_jacobian ? target.log_jacobian(z) : 0.0;
      a.log_density.push_back(cur_lp - jac);
      a.stage.push_back(0);
      a.accepted.push_back(accept ? 1 : 0);
      a.energy_error.push_back(std::abs(dh));
    }
  }

  a.acceptance_rate = double(accepted_total) / double(cfg.n_samples);
  a.seconds_per_sample =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / double(kept);
  if (2 * a.divergences > cfg.n_samples)
    throw std::runtime_error("hmc: " + std::to_string(a.divergences) + " of " +
                             std::to_string(cfg.n_samples) +
                             " trajectories diverged; reduce the step size");
  return a;
}

ModeLogPosterior::ModeLogPosterior(const ProblemSpec& spec, const InnerMapConfig& cfg,
                                   int64_t cache_capacity)
    : box_(spec.theta), capacity_(cache_capacity) {
  if (box_.dim() == 0)
    throw std::invalid_argument("mode posterior: the problem has no sampled parameters");
  box_.validate();
  auto shared = std::make_shared<const ProblemSpec>(spec);
  maximize_ = [shared, cfg](std::span<const double> theta, std::span<const double> warm,
                            std::vector<double>& ustar) {
    InnerMapResult r = solve_inner_map(*shared, theta, warm, cfg);
    ustar = std::move(r.v);
    return r.failed ? -kInf : -r.objective;
  };
  for (size_t j = 0; j < box_.dim(); j++) log_prior_ -= std::log(box_.hi[j] - box_.lo[j]);
}

ModeLogPosterior::ModeLogPosterior(
    ThetaPrior box,
    std::function<double(std::span<const double>, std::span<const double>, std::vector<double>&)>
        maximize,
    int64_t cache_capacity)
    : box_(std::move(box)), maximize_(std::move(maximize)), capacity_(cache_capacity) {
  box_.validate();
  for (size_t j = 0; j < box_.dim(); j++) log_prior_ -= std::log(box_.hi[j] - box_.lo[j]);
}

std::span<const double> ModeLogPosterior::nearest(std::span<const double> theta) const {
  int64_t best = -1;
  double best_d = kInf;
  for (size_t c = 0; c < cache_theta_.size(); c++) {
    double dist = 0.0;
    for (size_t j = 0; j < box_.dim(); j++) {
      const double r = (theta[j] - cache_theta_[c][j]) / (box_.hi[j] - box_.lo[j]);
      dist += r * r;
    }
    if (dist < best_d) {
      best_d = dist;
      best = int64_t(c);
    }
  }
  if (best < 0) return {};
  return cache_u_[size_t(best)];
}

void ModeLogPosterior::remember(std::span<const double> theta, std::vector<double> ustar) {
  if (capacity_ <= 0) return;
  std::vector<double> th(theta.begin(), theta.end());
  if (int64_t(cache_theta_.size()) < capacity_) {
    cache_theta_.push_back(std::move(th));
    cache_u_.push_back(std::move(ustar));
    return;
  }
  const size_t slot = size_t(next_slot_++ % capacity_);
  cache_theta_[slot] = std::move(th);
  cache_u_[slot] = std::move(ustar);
}

double ModeLogPosterior::operator()(std::span<const double> theta) {
  if (theta.size() != box_.dim())
    throw std::invalid_argument("mode posterior: theta has dimension " +
                                std::to_string(theta.size()) + ", expected " +
                                std::to_string(box_.dim()));
  if (!box_.contains(theta)) return -kInf;
  std::vector<double> ustar;
  const double lmax = maximize_(theta, nearest(theta), ustar);
  if (!std::isfinite(lmax)) return -kInf; // failed inner solve rejects the sample
  remember(theta, std::move(ustar));
  return lmax + log_prior_;
}

SampleArchive basis_sample(const std::function<double(std::span<const double>)>& log_target,
                           const ThetaPrior& prior, const BasisConfig& cfg) {
  cfg.validate();
  prior.validate();
  const int64_t d = int64_t(prior.dim());
  const int64_t n = cfg.n_samples;
  const auto t0 = std::chrono::steady_clock::now();

  // stage 0: the prior population
  std::vector<double> samples(size_t(n * d), 0.0);
  std::vector<double> ll(size_t(n), 0.0);
  {
    RngStream rs(cfg.seed, StreamPurpose::BasisPrior);
    for (int64_t i = 0; i < n; i++)
      for (int64_t j = 0; j < d; j++)
        samples[size_t(i * d + j)] = rs.uniform(prior.lo[size_t(j)], prior.hi[size_t(j)]);
  }
  bool any_finite = false;
  for (int64_t i = 0; i < n; i++) {
    ll[size_t(i)] = log_target(std::span<const double>(samples.data() + i * d, size_t(d)));
    any_finite = any_finite || std::isfinite(ll[size_t(i)]);
  }
  if (!any_finite) throw std::runtime_error("basis: every prior sample has zero density");

  // coefficient of variation of the stage weights exp(dp (ll - max ll))
  const auto weight_cov = [&ll, n](double dp, double shift) {
    double mean = 0.0;
    for (int64_t i = 0; i < n; i++) {
      const double w = std::isfinite(ll[size_t(i)]) ? std::exp(dp * (ll[size_t(i)] - shift)) : 0.0;
      mean += w;
    }
    mean /= double(n);
    double var = 0.0;
    for (int64_t i = 0; i < n; i++) {
      const double w = std::isfinite(ll[size_t(i)]) ? std::exp(dp * (ll[size_t(i)] - shift)) : 0.0;
      var += (w - mean) * (w - mean);
    }
    return std::sqrt(var / double(n)) / mean;
  };

  std::vector<double> exponents = {0.0};
  nlohmann::json stage_log = nlohmann::json::array();
  double p = 0.0;
  int stage = 0;
  int64_t moves_total = 0, accepts_total = 0;
  std::vector<uint8_t> moved(size_t(n), 0);

  while (p < 1.0) {
    stage++;
    if (stage > cfg.max_stages)
      throw std::runtime_error("basis: annealing did not reach exponent 1 within " +
                               std::to_string(cfg.max_stages) + " stages");
    double shift = -kInf;
    for (int64_t i = 0; i < n; i++)
      if (std::isfinite(ll[size_t(i)])) shift = std::max(shift, ll[size_t(i)]);

    // pick the exponent increment: bisection on the weight COV, capped at 1
    const double remaining = 1.0 - p;
    double dp = remaining;
    if (weight_cov(remaining, shift) > cfg.gamma_basis) {
      double lo = 0.0, hi = remaining;
      for (int it = 0; it < 100; it++) {
        const double mid = 0.5 * (lo + hi);
        (weight_cov(mid, shift) > cfg.gamma_basis ? hi : lo) = mid;
      }
      dp = std::max(0.5 * (lo + hi), 1e-12 * remaining);
    }
    const double p_new = (dp == remaining) ? 1.0 : p + dp;
    const double cov_at_dp = weight_cov(dp, shift);

    std::vector<double> w(size_t(n), 0.0);
    double wsum = 0.0;
    for (int64_t i = 0; i < n; i++) {
      w[size_t(i)] = std::isfinite(ll[size_t(i)]) ? std::exp(dp * (ll[size_t(i)] - shift)) : 0.0;
      wsum += w[size_t(i)];
    }
    for (double& wi : w) wi /= wsum;
    double ess = 0.0;
    for (double wi : w) ess += wi * wi;
    ess = 1.0 / ess;

    // weighted mean and covariance feed the proposal scale
    std::vector<double> mu(size_t(d), 0.0);
    for (int64_t i = 0; i < n; i++)
      for (int64_t j = 0; j < d; j++) mu[size_t(j)] += w[size_t(i)] * samples[size_t(i * d + j)];
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    for (int64_t i = 0; i < n; i++) {
      Eigen::VectorXd r(d);
      for (int64_t j = 0; j < d; j++) r(j) = samples[size_t(i * d + j)] - mu[size_t(j)];
      cov += w[size_t(i)] * r * r.transpose();
    }
    Eigen::MatrixXd prop = (cfg.beta_basis * cfg.beta_basis) * cov;
    Eigen::LLT<Eigen::MatrixXd> llt(prop);
    if (llt.info() != Eigen::Success) {
      // collapsed population; keep a floor scale of 1e-8 of the box width
      for (int64_t j = 0; j < d; j++) {
        const double e = 1e-8 * (prior.hi[size_t(j)] - prior.lo[size_t(j)]);
        prop(j, j) += e * e;
      }
      llt.compute(prop);
      if (llt.info() != Eigen::Success)
        throw std::runtime_error("basis: proposal covariance is not positive definite in stage " +
                                 std::to_string(stage));
    }
    const Eigen::MatrixXd chol = llt.matrixL();

    // multinomial resampling
    std::vector<double> cdf(size_t(n), 0.0);
    double acc = 0.0;
    for (int64_t i = 0; i < n; i++) {
      acc += w[size_t(i)];
      cdf[size_t(i)] = acc;
    }
    cdf[size_t(n - 1)] = 1.0;
    std::vector<int64_t> pick(size_t(n), 0);
    {
      RngStream rs(cfg.seed, StreamPurpose::BasisResample, uint64_t(stage));
      for (int64_t k = 0; k < n; k++) {
        const double u = rs.uniform();
        pick[size_t(k)] =
            std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
      }
    }

    // per-chain Metropolis moves at the new exponent
    std::vector<double> new_samples(size_t(n * d), 0.0);
    std::vector<double> new_ll(size_t(n), 0.0);
    int64_t stage_accepts = 0, stage_moves = 0;
    std::fill(moved.begin(), moved.end(), uint8_t(0));
    for (int64_t k = 0; k < n; k++) {
      std::vector<double> theta(size_t(d), 0.0);
      for (int64_t j = 0; j < d; j++) theta[size_t(j)] = samples[size_t(pick[size_t(k)] * d + j)];
      double theta_ll = ll[size_t(pick[size_t(k)])];

      RngStream rs(cfg.seed, StreamPurpose::BasisChain, (uint64_t(stage) << 32) | uint64_t(k));
      std::vector<double> cand(size_t(d), 0.0);
      for (int64_t step = 0; step < cfg.l_max; step++) {
        Eigen::VectorXd xi(d);
        for (int64_t j = 0; j < d; j++) xi(j) = rs.normal();
        const Eigen::VectorXd jump = chol * xi;
        for (int64_t j = 0; j < d; j++) cand[size_t(j)] = theta[size_t(j)] + jump(j);
        stage_moves++;
        if (!prior.contains(cand)) continue;
        const double cand_ll = log_target(cand);
        const double logr = p_new * (cand_ll - theta_ll);
        if (logr >= 0.0 || rs.uniform_open() < std::exp(logr)) {
          theta = cand;
          theta_ll = cand_ll;
          stage_accepts++;
          moved[size_t(k)] = 1;
        }
      }
      for (int64_t j = 0; j < d; j++) new_samples[size_t(k * d + j)] = theta[size_t(j)];
      new_ll[size_t(k)] = theta_ll;
    }
    if (stage_accepts == 0)
      throw std::runtime_error(
          "basis: no proposal was accepted in stage " + std::to_string(stage) + " (exponent " +
          std::to_string(p_new) + ", " + std::to_string(stage_moves) +
          " moves); the target may be far narrower than the proposal scale");

    samples = std::move(new_samples);
    ll = std::move(new_ll);
    p = p_new;
    exponents.push_back(p);
    moves_total += stage_moves;
    accepts_total += stage_accepts;
    stage_log.push_back({{"exponent", p},
                         {"ess", ess},
                         {"weight_cov", cov_at_dp},
                         {"accepts", stage_accepts},
                         {"moves", stage_moves}});
  }

  SampleArchive a;
  a.dim = d;
  a.seed = cfg.seed;
  a.samples = std::move(samples);
  a.log_density = std::move(ll);
  a.stage.assign(size_t(n), stage);
  a.accepted.assign(moved.begin(), moved.end());
  a.exponents = std::move(exponents);
  a.acceptance_rate = moves_total > 0 ? double(accepts_total) / double(moves_total) : 0.0;
  a.seconds_per_sample =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / double(n);
  {
    nlohmann::json c;
    c["sampler"] = "basis";
    c["n_samples"] = cfg.n_samples;
    c["beta_basis"] = cfg.beta_basis;
    c["gamma_basis"] = cfg.gamma_basis;
    c["l_max"] = cfg.l_max;
    c["seed"] = cfg.seed;
    c["stages"] = stage_log;
    a.config_json = c.dump();
  }
  return a;
}

} // namespace bodil
