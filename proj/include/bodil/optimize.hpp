#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "bodil/posterior.hpp"

namespace bodil {

// scalar objective with gradient; minimizers drive this, so log-posteriors
// enter through negated_objective
using Objective = std::function<double(std::span<const double>, std::span<double>)>;

Objective negated_objective(LogPosterior& post);

struct OptimizerConfig {
  int max_epochs = 5000;
  double lr0 = 1e-3;
  double lr_min = 1e-4;
  int plateau_patience = 50;  // epochs without improvement before halving
  double plateau_factor = 0.5;
  double grad_tol = 0.0;      // stop when the gradient 2-norm falls below; 0 disables
  uint64_t seed = 0;          // initialization jitter only, the loop is deterministic
  void validate() const;
};

struct TraceRow {
  int epoch = 0;
  double objective = 0.0;
  double grad_norm = 0.0; // gradient 2-norm
  double lr = 0.0;
};

struct MinimizeResult {
  std::vector<double> v; // best-seen iterate
  double objective = std::numeric_limits<double>::infinity();
  std::vector<TraceRow> trace;
  bool failed = false;   // non-finite objective or gradient; v is the best finite iterate
  std::string message;
};

// Adam (beta1 0.9, beta2 0.999, eps 1e-8) with reduce-on-plateau scheduling:
// the learning rate halves, down to lr_min, whenever the best objective has
// not improved by 1e-12 relative for plateau_patience consecutive epochs
MinimizeResult minimize_adam(const Objective& f, std::span<const double> v0,
                             const OptimizerConfig& cfg);

// L-BFGS with a strong Wolfe line search (c1 1e-4, c2 0.1, kept tight so line
// minimizations stay near-exact and quadratics finish in at most dim steps);
// skips updates that lose curvature, falls back to steepest descent when the
// two-loop direction stops pointing downhill
MinimizeResult minimize_lbfgs(const Objective& f, std::span<const double> v0, int memory,
                              int max_iters, double grad_tol = 1e-10);

// columns epoch, objective, grad_norm, lr; doubles printed with %.17g
void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace);

// starting point for a MAP solve: the field block carries observations
// deposited onto their interpolation nodes (class labels enter as interval
// midpoints), zero elsewhere, plus seeded Gaussian jitter of scale 1e-3;
// bounded scalars start at their configured values and jointly inferred
// parameters at the middle of their box
std::vector<double> initial_point(const ProblemSpec& spec, const LogPosterior& post,
                                  uint64_t seed);

struct InnerMapConfig {
  OptimizerConfig adam;
  int lbfgs_memory = 10;
  int lbfgs_iters = 200;
  double lbfgs_tol = 1e-8;
  int threads = 1;
};

struct InnerMapResult {
  std::vector<double> v; // minimizer over the field (and any bounded scalars)
  double objective = std::numeric_limits<double>::infinity(); // minimized negative log-posterior
  std::vector<TraceRow> trace;
  bool failed = false;
  std::string message;
};

// MAP in u with theta frozen: Adam from the data-informed start (or the
// warm start when given), then an L-BFGS refinement pass
InnerMapResult solve_inner_map(const ProblemSpec& spec, std::span<const double> theta,
                               std::span<const double> warm_start, const InnerMapConfig& cfg);

} // namespace bodil
