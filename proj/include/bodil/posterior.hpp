#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "bodil/ad/engine.hpp"
#include "bodil/grid.hpp"
#include "bodil/likelihood.hpp"

namespace bodil {

// weighting of the PDE-residual prior against the data, in one of two
// conventions: a single sharpness beta on the mean squared residual, or
// explicit lambda weights as used by the reaction-diffusion and tumor setups
struct HyperParams {
  double beta = 0.0;
  double lambda_pde = 0.0;
  double lambda_ic = 0.0;
  double lambda_data = 1.0;

  bool use_beta() const { return beta > 0.0; }
  void validate() const;

  // identity linking the conventions for a Gaussian likelihood with n_data
  // standardized residuals: lambda = n_data / beta
  static double lambda_from_beta(double beta, int64_t n_data);
  static double beta_from_lambda(double lambda, int64_t n_data);
};

enum class LikelihoodKind { Gaussian, Binomial, Hinge, Smooth };

struct Dataset {
  LikelihoodKind kind = LikelihoodKind::Gaussian;
  // scattered records: one coordinate tuple (grid axis order) per value;
  // final-slice data instead stores one value per node of the last time slice
  std::vector<std::vector<double>> coords;
  std::vector<double> values;
  double sigma = 0.0;
  double tau = 0.5;                    // binomial detection threshold
  double tau_lo = 0.25, tau_up = 0.65; // segmentation interval parameters
  bool on_final_slice = false;

  std::vector<TissueClass> classes() const; // values as labels (Hinge/Smooth)
  void validate(const Grid& grid) const;
};

// records as CSV: named coordinate columns, a value column, and a sigma
// column; doubles printed with %.17g so a round trip is bit-exact
void write_dataset_csv(const std::string& path, const Dataset& d,
                       const std::vector<std::string>& coord_names);
Dataset read_dataset_csv(const std::string& path);

// uniform box prior over the sampled parameters
struct ThetaPrior {
  std::vector<std::string> names;
  std::vector<double> lo, hi;

  size_t dim() const { return names.size(); }
  bool contains(std::span<const double> theta) const;
  void validate() const;
};

// scalar model parameter that is either held fixed or optimized inside the
// inner MAP within [lo, hi] (via a sigmoid reparameterization)
struct AuxParam {
  double value = 0.0;
  bool optimize = false;
  double lo = 0.0, hi = 0.0;
  void validate(const char* what) const;
};

enum class ProblemKind { Oscillator, Diffusion1d, ReactionDiffusion2d, Tumor3d };

// everything assemble_logposterior needs: the grid of the unknown field, the
// data, the weights, the parameter prior, and the per-problem coefficients
struct ProblemSpec {
  ProblemKind kind = ProblemKind::Oscillator;
  std::shared_ptr<const Grid> grid; // space-time grid of u (time axis first)
  Dataset data;
  HyperParams hyper;
  ThetaPrior theta;

  // oscillator: spring constant over mass; an input of the joint tape when
  // inferred, otherwise a constant
  double omega2 = 1.0;
  bool infer_omega2 = false;

  // 1d diffusion
  double diffusivity = 0.1;

  // 2d reaction-diffusion: two-valued medium on the (y, x) slice grid and the
  // radius of the Gaussian initial bump placed at theta = (x0, y0)
  Field rd_diffusivity;
  double rd_rho = 8.0;
  double ic_radius = 1.0 / 16.0;

  // 3d tumor: tissue fractions on the (z, y, x) slice grid, growth-model
  // scalars, and the seed placed at theta = (x0, y0, z0)
  Field c_g, c_w;
  AuxParam tumor_Dg{0.01, false, 1e-4, 1.0};
  AuxParam tumor_Dw{0.1, false, 1e-4, 1.0};
  AuxParam tumor_rho{0.08, false, 1e-3, 1.0};
  AuxParam tumor_tau_lo{0.25, false, 0.05, 0.5};
  AuxParam tumor_tau_up{0.65, false, 0.5, 0.95};
  double ic_mass = 1500.0;
  double ic_spread2 = 15.0;

  void validate() const;
};

// placement of named input blocks in the flat optimization vector
struct FlatLayout {
  struct Block {
    std::string name;
    int64_t offset = 0;
    int64_t size = 0;
  };
  std::vector<Block> blocks;
  int64_t dim = 0;

  const Block* find(const std::string& name) const;
  const Block& at(const std::string& name) const;
};

// additive pieces of the last evaluated log-posterior, for audits
struct PosteriorParts {
  double loglike = 0.0;       // data term, including any Gaussian constant
  double pde = 0.0;           // weighted PDE penalty (never positive)
  double ic = 0.0;            // weighted IC penalty (never positive)
  double gauss_constant = 0.0; // sigma normalization contained in loglike
};

// differentiable log-posterior over a flat vector; larger is more probable.
// Construction bakes fixed theta values into the tape (the conditional form
// used by the mode approximation); problems whose parameters are jointly
// sampled keep them as tape inputs when theta_fixed is empty.
class LogPosterior {
public:
  explicit LogPosterior(const ProblemSpec& spec, std::span<const double> theta_fixed = {},
                        int threads = 1);

  int64_t dim() const { return layout_.dim; }
  const FlatLayout& layout() const { return layout_; }
  const ad::Tape& tape() const { return tape_; }

  // -inf when a jointly inferred parameter falls outside its prior box
  double value(std::span<const double> v);
  double value_grad(std::span<const double> v, std::span<double> grad);
  PosteriorParts parts(std::span<const double> v);

  // second-order access for the Gaussian approximation; no box handling, so
  // only call at points strictly inside the prior
  void hvp(std::span<const double> v, std::span<const double> dir, std::span<double> out);
  std::vector<double> hessian(std::span<const double> v,
                              ad::HessianMode mode = ad::HessianMode::ForwardOverReverse,
                              int64_t max_dim = 4096);

  // bounds of the jointly inferred parameter inputs, aligned with the tail
  // of the flat vector; empty for the conditional form
  const std::vector<double>& joint_lo() const { return joint_lo_; }
  const std::vector<double>& joint_hi() const { return joint_hi_; }

  // maps the raw vector of an optimized aux scalar back to its model value
  static double bounded_value(double raw, double lo, double hi);
  static double bounded_raw(double value, double lo, double hi);

private:
  bool in_box(std::span<const double> v) const;

  ad::Tape tape_;
  FlatLayout layout_;
  ad::Evaluator eval_;
  std::vector<double> joint_lo_, joint_hi_;
  int64_t joint_offset_ = 0;
  int loglike_node_ = -1, pde_node_ = -1, ic_node_ = -1;
  double gauss_constant_ = 0.0;
};

} // namespace bodil
