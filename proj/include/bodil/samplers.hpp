#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <bodil/optimize.hpp>
#include <bodil/posterior.hpp>

namespace bodil {

struct HmcConfig {
  int64_t n_samples = 10000;
  int64_t leapfrog_steps = 10;
  double step_size = 0.008;
  std::vector<double> mass = {1.0}; // momentum variance; scalar broadcasts, or one per coordinate
  uint64_t seed = 0;
  int64_t warmup = -1; // draws discarded from the front; -1 means n_samples / 10

  void validate(int64_t dim) const;
  int64_t resolved_warmup() const { return warmup < 0 ? n_samples / 10 : warmup; }
};

struct BasisConfig {
  int64_t n_samples = 256; // population size per stage
  double beta_basis = 0.2; // proposal scale relative to the weighted sample covariance
  double gamma_basis = 1.0; // target coefficient of variation of the stage weights
  int64_t l_max = 1;       // Metropolis steps per chain per stage
  uint64_t seed = 0;
  int64_t max_stages = 200; // guard against stalled annealing

  void validate() const;
};

// Population of posterior samples with the history needed to audit how they
// were produced. The CSV form has columns theta_0..theta_{dim-1},
// log_posterior, stage, accepted; a JSON sidecar at <path>.json carries the
// config, the annealing exponents, and the acceptance statistics.
struct SampleArchive {
  int64_t dim = 0;
  std::vector<double> samples;      // row-major n x dim
  std::vector<double> log_density;  // model log-posterior per sample
  std::vector<int> stage;           // producing stage (always 0 for HMC)
  std::vector<uint8_t> accepted;    // whether the producing proposal was accepted
  std::vector<double> energy_error; // |delta H| per proposal; HMC only, else empty
  std::vector<double> exponents;    // annealing exponents, ends at exactly 1; empty for HMC
  double acceptance_rate = 0.0;
  int64_t divergences = 0;
  uint64_t seed = 0;
  double seconds_per_sample = 0.0; // in-memory diagnostic, not serialized
  std::string config_json;         // serialized sampler configuration

  int64_t n() const { return int64_t(log_density.size()); }
  double at(int64_t i, int64_t j) const { return samples[size_t(i * dim + j)]; }
  std::span<const double> row(int64_t i) const {
    return {samples.data() + i * dim, size_t(dim)};
  }
};

void write_sample_archive(const std::string& path, const SampleArchive& archive);
SampleArchive read_sample_archive(const std::string& path);

// mean and unbiased covariance (row-major dim x dim) of the archived samples
std::pair<std::vector<double>, std::vector<double>> empirical_moments(
    const SampleArchive& archive);

// Log-density over unconstrained sampling coordinates z. When the model
// space is constrained, `to_model` maps z to the reported coordinates,
// `from_model` inverts it, and `log_jacobian` is the reparameterization
// term already included in logpost; all three may be null for identity.
struct HmcTarget {
  int64_t dim = 0;
  std::function<double(std::span<const double>)> logpost;
  std::function<void(std::span<const double>, std::span<double>)> grad;
  std::function<std::vector<double>(std::span<const double>)> to_model;
  std::function<std::vector<double>(std::span<const double>)> from_model;
  std::function<double(std::span<const double>)> log_jacobian;
};

// samples the joint posterior; any jointly inferred parameters are mapped to
// unconstrained coordinates through a logit reparameterization so the chain
// never hits the prior box boundary
HmcTarget make_hmc_target(LogPosterior& post);

// One trajectory of `steps` leapfrog steps for H(z, p) = -logpost(z) +
// sum p_i^2 / (2 m_i), in place. Exposed so tests can check reversibility.
void leapfrog(const HmcTarget& target, std::vector<double>& z, std::vector<double>& p,
              std::span<const double> mass, double step_size, int64_t steps);

// Standard HMC with Metropolis correction and momentum resampled from
// N(0, mass) each iteration. Proposals with |delta H| > 1000 count as
// divergences and are rejected; more than half the proposals diverging is a
// tuning error. v0 is in model coordinates. The archive holds the
// n_samples - warmup draws after warmup, reported in model coordinates.
SampleArchive hmc_sample(const HmcTarget& target, std::span<const double> v0,
                         const HmcConfig& cfg);

// Mode approximation of the parameter posterior: theta maps to
// -min_u objective(u, theta) + log P(theta), with inner solves warm-started
// from the nearest previously evaluated theta (Euclidean distance in
// box-normalized coordinates, cache bounded by cache_capacity). Inner solve
// failures and points outside the prior box give -inf. Not thread-safe; the
// cache makes results depend on evaluation order, which samplers keep fixed.
class ModeLogPosterior {
public:
  explicit ModeLogPosterior(const ProblemSpec& spec, const InnerMapConfig& cfg = {},
                            int64_t cache_capacity = 64);
  // custom conditional maximizer over the same prior box, mostly for toys:
  // returns the maximized conditional log posterior, filling ustar
  ModeLogPosterior(ThetaPrior box,
                   std::function<double(std::span<const double> theta,
                                        std::span<const double> warm, std::vector<double>& ustar)>
                       maximize,
                   int64_t cache_capacity = 64);

  double operator()(std::span<const double> theta);
  const ThetaPrior& box() const { return box_; }
  int64_t cache_size() const { return int64_t(cache_theta_.size()); }

private:
  std::span<const double> nearest(std::span<const double> theta) const;
  void remember(std::span<const double> theta, std::vector<double> ustar);

  ThetaPrior box_;
  std::function<double(std::span<const double>, std::span<const double>, std::vector<double>&)>
      maximize_;
  double log_prior_ = 0.0;
  int64_t capacity_ = 64;
  int64_t next_slot_ = 0;
  std::vector<std::vector<double>> cache_theta_, cache_u_;
};

// Transitional annealing from the uniform prior over the box to
// prior * exp(p log_target) at p = 1. Each stage picks the exponent
// increment by bisection so the weight coefficient of variation meets
// gamma_basis (capped at p = 1), resamples multinomially, and moves every
// chain with l_max Metropolis steps using proposal covariance
// beta_basis^2 times the weighted sample covariance. Deterministic for a
// fixed seed: stage, chain, and purpose index every random stream.
SampleArchive basis_sample(const std::function<double(std::span<const double>)>& log_target,
                           const ThetaPrior& prior, const BasisConfig& cfg);

} // namespace bodil
