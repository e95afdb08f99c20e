#include "bodil/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "bodil/ic.hpp"

namespace bodil {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

int64_t slice_size(const Grid& grid) {
  int64_t s = 1;
  for (int a = 1; a < grid.dim(); a++) s *= grid.axis(a).nodes;
  return s;
}

} // namespace

void HyperParams::validate() const {
  const bool b = beta > 0.0;
  const bool l = lambda_pde > 0.0;
  if (b == l) fail("hyperparams: set exactly one of beta or lambda_pde");
  if (beta < 0.0 || lambda_pde < 0.0 || lambda_ic < 0.0)
    fail("hyperparams: weights must not be negative");
  if (b && lambda_ic > 0.0) fail("hyperparams: lambda_ic requires the lambda convention");
  if (l && !(lambda_ic > 0.0)) fail("hyperparams: lambda convention needs lambda_ic > 0");
  if (!(lambda_data > 0.0)) fail("hyperparams: lambda_data must be positive");
}

double HyperParams::lambda_from_beta(double beta, int64_t n_data) {
  if (!(beta > 0.0) || n_data <= 0) fail("lambda_from_beta: needs beta > 0 and data");
  return double(n_data) / beta;
}

double HyperParams::beta_from_lambda(double lambda, int64_t n_data) {
  if (!(lambda > 0.0) || n_data <= 0) fail("beta_from_lambda: needs lambda > 0 and data");
  return double(n_data) / lambda;
}

std::vector<TissueClass> Dataset::classes() const {
  std::vector<TissueClass> cls;
  cls.reserve(values.size());
  for (double v : values) {
    if (v == 0.0)
      cls.push_back(TissueClass::Healthy);
    else if (v == 1.0)
      cls.push_back(TissueClass::Glioma);
    else if (v == 2.0)
      cls.push_back(TissueClass::Necrotic);
    else
      fail("dataset: class labels must be 0, 1 or 2");
  }
  return cls;
}

void Dataset::validate(const Grid& grid) const {
  if (values.empty()) fail("dataset: no observations");
  if (!(sigma > 0.0)) fail("dataset: sigma must be positive");
  if (on_final_slice) {
    if (kind == LikelihoodKind::Gaussian)
      fail("dataset: scattered Gaussian data cannot sit on the final slice");
    if (int64_t(values.size()) != slice_size(grid))
      fail("dataset: final-slice data must cover every node of the last time slice");
    if (!coords.empty() && coords.size() != values.size())
      fail("dataset: coordinate rows do not match values");
  } else {
    if (kind != LikelihoodKind::Gaussian)
      fail("dataset: label data is only supported on the final slice");
    if (coords.size() != values.size()) fail("dataset: coordinate rows do not match values");
  }
  for (const auto& c : coords) {
    if (int(c.size()) != grid.dim()) fail("dataset: coordinate arity does not match the grid");
    for (int a = 0; a < grid.dim(); a++) {
      if (!std::isfinite(c[size_t(a)])) fail("dataset: non-finite coordinate");
      const Axis& ax = grid.axis(a);
      if (ax.periodic) continue;
      const double tol = 1e-9 * ax.spacing;
      if (c[size_t(a)] < -tol || c[size_t(a)] > ax.extent + tol)
        fail("dataset: coordinate outside the grid on axis " + ax.name);
    }
  }
  switch (kind) {
    case LikelihoodKind::Gaussian:
      for (double v : values)
        if (!std::isfinite(v)) fail("dataset: non-finite observation");
      break;
    case LikelihoodKind::Binomial:
      if (!(tau > 0.0 && tau < 1.0)) fail("dataset: tau must lie in (0, 1)");
      for (double v : values)
        if (v != 0.0 && v != 1.0) fail("dataset: binomial observations must be 0 or 1");
      break;
    case LikelihoodKind::Hinge:
    case LikelihoodKind::Smooth:
      if (!(0.0 < tau_lo && tau_lo < tau_up && tau_up < 1.0))
        fail("dataset: need 0 < tau_lo < tau_up < 1");
      (void)classes();
      break;
  }
}

void write_dataset_csv(const std::string& path, const Dataset& d,
                       const std::vector<std::string>& coord_names) {
  if (!d.coords.empty() && !coord_names.empty() &&
      d.coords[0].size() != coord_names.size())
    fail("dataset csv: coordinate names do not match arity");
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("dataset csv: cannot open " + path);
  for (size_t a = 0; a < coord_names.size(); a++) std::fprintf(f, "%s,", coord_names[a].c_str());
  std::fprintf(f, "value,sigma\n");
  for (size_t k = 0; k < d.values.size(); k++) {
    if (!d.coords.empty())
      for (double c : d.coords[k]) std::fprintf(f, "%.17g,", c);
    std::fprintf(f, "%.17g,%.17g\n", d.values[k], d.sigma);
  }
  std::fclose(f);
}

Dataset read_dataset_csv(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("dataset csv: cannot open " + path);
  std::string text;
  char buf[1 << 16];
  size_t got;
  while ((got = std::fread(buf, 1, sizeof buf, f)) > 0) text.append(buf, got);
  std::fclose(f);

  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("dataset csv: empty file " + path);
  size_t ncols = 1 + size_t(std::count(line.begin(), line.end(), ','));
  if (ncols < 2 || line.rfind("value,sigma") == std::string::npos)
    throw std::runtime_error("dataset csv: malformed header in " + path);
  const size_t ncoord = ncols - 2;

  Dataset d;
  d.sigma = 0.0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    row.reserve(ncols);
    size_t pos = 0;
    while (pos <= line.size()) {
      size_t comma = line.find(',', pos);
      if (comma == std::string::npos) comma = line.size();
      row.push_back(std::strtod(line.c_str() + pos, nullptr));
      pos = comma + 1;
    }
    if (row.size() != ncols) throw std::runtime_error("dataset csv: ragged row in " + path);
    if (ncoord > 0) d.coords.emplace_back(row.begin(), row.begin() + long(ncoord));
    d.values.push_back(row[ncoord]);
    d.sigma = row[ncoord + 1];
  }
  if (d.values.empty()) throw std::runtime_error("dataset csv: no records in " + path);
  return d;
}

bool ThetaPrior::contains(std::span<const double> theta) const {
  if (theta.size() != names.size()) return false;
  for (size_t i = 0; i < theta.size(); i++)
    if (!(theta[i] >= lo[i] && theta[i] <= hi[i])) return false;
  return true;
}

void ThetaPrior::validate() const {
  if (lo.size() != names.size() || hi.size() != names.size())
    fail("theta prior: bounds do not match names");
  for (size_t i = 0; i < names.size(); i++) {
    if (names[i].empty()) fail("theta prior: empty parameter name");
    if (!(lo[i] < hi[i])) fail("theta prior: need lo < hi for " + names[i]);
  }
}

void AuxParam::validate(const char* what) const {
  if (!std::isfinite(value)) fail(std::string(what) + ": non-finite value");
  if (optimize && !(lo < value && value < hi))
    fail(std::string(what) + ": optimized parameter must start strictly inside [lo, hi]");
}

void ProblemSpec::validate() const {
  if (!grid) fail("problem: missing grid");
  hyper.validate();
  theta.validate();
  data.validate(*grid);
  switch (kind) {
    case ProblemKind::Oscillator: {
      if (grid->dim() != 1) fail("oscillator: grid must be (t)");
      if (grid->axis(0).periodic) fail("oscillator: time axis cannot be periodic");
      if (!hyper.use_beta()) fail("oscillator: uses the beta convention");
      if (data.kind != LikelihoodKind::Gaussian) fail("oscillator: data must be Gaussian");
      if (infer_omega2) {
        if (theta.dim() != 1) fail("oscillator: inferring omega2 needs a 1d prior box");
      } else {
        if (theta.dim() != 0) fail("oscillator: no sampled parameters when omega2 is fixed");
        if (!(omega2 > 0.0)) fail("oscillator: omega2 must be positive");
      }
      break;
    }
    case ProblemKind::Diffusion1d: {
      if (grid->dim() != 2) fail("diffusion: grid must be (t, x)");
      if (grid->axis(0).periodic) fail("diffusion: time axis cannot be periodic");
      if (!hyper.use_beta()) fail("diffusion: uses the beta convention");
      if (data.kind != LikelihoodKind::Gaussian) fail("diffusion: data must be Gaussian");
      if (theta.dim() != 0) fail("diffusion: has no sampled parameters");
      if (!(diffusivity > 0.0)) fail("diffusion: diffusivity must be positive");
      break;
    }
    case ProblemKind::ReactionDiffusion2d: {
      if (grid->dim() != 3) fail("reaction-diffusion: grid must be (t, y, x)");
      if (hyper.use_beta()) fail("reaction-diffusion: uses the lambda convention");
      if (data.kind != LikelihoodKind::Binomial)
        fail("reaction-diffusion: data must be binomial");
      if (!data.on_final_slice) fail("reaction-diffusion: data sits on the final slice");
      if (theta.dim() != 2) fail("reaction-diffusion: theta is (x0, y0)");
      if (!rd_diffusivity.grid) fail("reaction-diffusion: missing diffusivity field");
      if (rd_diffusivity.grid->shape() !=
          std::vector<int>{grid->axis(1).nodes, grid->axis(2).nodes})
        fail("reaction-diffusion: diffusivity field does not match the (y, x) slice");
      for (double v : rd_diffusivity.values)
        if (!(v > 0.0)) fail("reaction-diffusion: diffusivity must be positive everywhere");
      if (!(rd_rho > 0.0)) fail("reaction-diffusion: rho must be positive");
      if (!(ic_radius > 0.0)) fail("reaction-diffusion: ic_radius must be positive");
      break;
    }
    case ProblemKind::Tumor3d: {
      if (grid->dim() != 4) fail("tumor: grid must be (t, z, y, x)");
      if (hyper.use_beta()) fail("tumor: uses the lambda convention");
      if (data.kind != LikelihoodKind::Hinge && data.kind != LikelihoodKind::Smooth)
        fail("tumor: data must be segmentation labels");
      if (!data.on_final_slice) fail("tumor: data sits on the final slice");
      if (theta.dim() != 3) fail("tumor: theta is (x0, y0, z0)");
      const std::vector<int> sl{grid->axis(1).nodes, grid->axis(2).nodes, grid->axis(3).nodes};
      if (!c_g.grid || !c_w.grid) fail("tumor: missing tissue fraction fields");
      if (c_g.grid->shape() != sl || c_w.grid->shape() != sl)
        fail("tumor: tissue fractions do not match the (z, y, x) slice");
      tumor_Dg.validate("tumor Dg");
      tumor_Dw.validate("tumor Dw");
      tumor_rho.validate("tumor rho");
      tumor_tau_lo.validate("tumor tau_lo");
      tumor_tau_up.validate("tumor tau_up");
      if (!(tumor_tau_lo.value < tumor_tau_up.value)) fail("tumor: need tau_lo < tau_up");
      if (!(ic_mass > 0.0) || !(ic_spread2 > 0.0))
        fail("tumor: seed mass and spread must be positive");
      break;
    }
  }
}

const FlatLayout::Block* FlatLayout::find(const std::string& name) const {
  for (const Block& b : blocks)
    if (b.name == name) return &b;
  return nullptr;
}

const FlatLayout::Block& FlatLayout::at(const std::string& name) const {
  const Block* b = find(name);
  if (!b) throw std::out_of_range("layout: no input block named " + name);
  return *b;
}

double LogPosterior::bounded_value(double raw, double lo, double hi) {
  return lo + (hi - lo) / (1.0 + std::exp(-raw));
}

double LogPosterior::bounded_raw(double value, double lo, double hi) {
  const double p = (value - lo) / (hi - lo);
  if (!(p > 0.0 && p < 1.0))
    throw std::invalid_argument("bounded_raw: value must lie strictly inside [lo, hi]");
  return std::log(p / (1.0 - p));
}

namespace {

// conditional tapes bake the sampled parameters in as constants; the joint
// oscillator tape keeps omega2 as a trailing scalar input instead
struct TapeParts {
  ad::Expr loglike, pde, ic;
  bool has_ic = false;
  double gauss_constant = 0.0;
};

TapeParts build_oscillator(ad::TapeBuilder& b, const ProblemSpec& spec,
                           std::span<const double> theta_fixed, std::vector<double>& joint_lo,
                           std::vector<double>& joint_hi) {
  const Grid& g = *spec.grid;
  const int nodes = g.axis(0).nodes;
  const double dt = g.axis(0).spacing;

  ad::Expr x = b.input("x", {nodes});
  ad::Expr v = b.input("v", {nodes});
  ad::Expr w2;
  if (!spec.infer_omega2) {
    w2 = b.constant(spec.omega2);
  } else if (!theta_fixed.empty()) {
    w2 = b.constant(theta_fixed[0]);
  } else {
    w2 = b.input("omega2", {});
    joint_lo = {spec.theta.lo[0]};
    joint_hi = {spec.theta.hi[0]};
  }

  // the PDE prior averages the two residual components per interval, which
  // is twice the mean square of the stacked residual vector
  TapeParts parts;
  parts.pde = b.scale(b.mean_sq(b.oscillator_residual(x, v, w2, dt)), -2.0 * spec.hyper.beta);

  std::vector<InterpStencil> obs;
  obs.reserve(spec.data.coords.size());
  for (const auto& c : spec.data.coords) obs.push_back(interp_stencil(g, c));
  parts.loglike = tapeops::gaussian_loglike(b, b.gather(x, obs), spec.data.values,
                                            spec.data.sigma);
  parts.gauss_constant = gaussian_loglike_constant(spec.data.values.size(),
                                                   spec.data.sigma);
  return parts;
}

TapeParts build_diffusion(ad::TapeBuilder& b, const ProblemSpec& spec) {
  const Grid& g = *spec.grid;
  const int nt = g.axis(0).nodes, nx = g.axis(1).nodes;

  ad::Expr u = b.input("u", {nt, nx});
  TapeParts parts;
  parts.pde = b.scale(
      b.mean_sq(b.diffusion1d_residual(u, spec.diffusivity, g.axis(0).spacing, g.axis(1).spacing)),
      -spec.hyper.beta);

  std::vector<InterpStencil> obs;
  obs.reserve(spec.data.coords.size());
  for (const auto& c : spec.data.coords) obs.push_back(interp_stencil(g, c));
  parts.loglike = tapeops::gaussian_loglike(b, b.gather(u, obs), spec.data.values,
                                            spec.data.sigma);
  parts.gauss_constant = gaussian_loglike_constant(spec.data.values.size(),
                                                   spec.data.sigma);
  return parts;
}

TapeParts build_rd2d(ad::TapeBuilder& b, const ProblemSpec& spec,
                     std::span<const double> theta_fixed) {
  const Grid& g = *spec.grid;
  const int nt = g.axis(0).nodes, ny = g.axis(1).nodes, nx = g.axis(2).nodes;
  const double x0 = theta_fixed[0], y0 = theta_fixed[1];

  ad::Expr u = b.input("u", {nt, ny, nx});
  ad::Expr D = b.const_array({ny, nx}, spec.rd_diffusivity.values);
  ad::Expr res = b.rd2d_residual(u, D, b.constant(spec.rd_rho), g.axis(0).spacing,
                                 g.axis(1).spacing, g.axis(2).spacing);

  TapeParts parts;
  // weights follow the n_x n_y n_t / n_x n_y node-count convention even
  // though the residual spans n_t - 1 intervals
  parts.pde = b.scale(b.mean_sq(res), -spec.hyper.lambda_pde * double(nx) * double(ny) * nt);

  ad::Expr ic_target =
      b.const_array({ny, nx}, gaussian_ic_2d(x0, y0, spec.ic_radius, *spec.rd_diffusivity.grid));
  parts.ic = b.scale(b.mean_sq(b.sub(b.slice_t(u, 0, 1), ic_target)),
                     -spec.hyper.lambda_ic * double(nx) * double(ny));
  parts.has_ic = true;

  ad::Expr ll = tapeops::binomial_loglike(b, b.slice_t(u, nt - 1, 1), spec.data.values,
                                          spec.data.tau, spec.data.sigma);
  parts.loglike = spec.hyper.lambda_data == 1.0 ? ll : b.scale(ll, spec.hyper.lambda_data);
  return parts;
}

TapeParts build_tumor(ad::TapeBuilder& b, const ProblemSpec& spec,
                      std::span<const double> theta_fixed) {
  const Grid& g = *spec.grid;
  const int nt = g.axis(0).nodes, nz = g.axis(1).nodes;
  const int ny = g.axis(2).nodes, nx = g.axis(3).nodes;
  const double x0 = theta_fixed[0], y0 = theta_fixed[1], z0 = theta_fixed[2];

  ad::Expr u = b.input("u", {nt, nz, ny, nx});
  auto aux = [&b](const AuxParam& p, const char* name) {
    return p.optimize ? b.bounded(b.input(name, {}), p.lo, p.hi) : b.constant(p.value);
  };
  ad::Expr Dg = aux(spec.tumor_Dg, "Dg_raw");
  ad::Expr Dw = aux(spec.tumor_Dw, "Dw_raw");
  ad::Expr rho = aux(spec.tumor_rho, "rho_raw");
  ad::Expr tau_lo = aux(spec.tumor_tau_lo, "tau_lo_raw");
  ad::Expr tau_up = aux(spec.tumor_tau_up, "tau_up_raw");

  ad::Expr D = b.add(b.mul(Dg, b.const_array(spec.c_g.grid->shape(), spec.c_g.values)),
                     b.mul(Dw, b.const_array(spec.c_w.grid->shape(), spec.c_w.values)));
  ad::Expr res = b.tumor3d_residual(u, D, rho, g.axis(0).spacing, g.axis(1).spacing,
                                    g.axis(2).spacing, g.axis(3).spacing);

  TapeParts parts;
  parts.pde = b.scale(b.mean_sq(res),
                      -spec.hyper.lambda_pde * double(nx) * double(ny) * double(nz) * nt);

  ad::Expr ic_target = b.const_array(
      spec.c_g.grid->shape(),
      clipped_gaussian_ic_3d(x0, y0, z0, spec.ic_mass, spec.ic_spread2, *spec.c_g.grid));
  parts.ic = b.scale(b.mean_sq(b.sub(b.slice_t(u, 0, 1), ic_target)),
                     -spec.hyper.lambda_ic * double(nx) * double(ny) * double(nz));
  parts.has_ic = true;

  ad::Expr uT = b.slice_t(u, nt - 1, 1);
  const std::vector<TissueClass> cls = spec.data.classes();
  ad::Expr ll = spec.data.kind == LikelihoodKind::Hinge
                    ? tapeops::hinge_loglike(b, uT, cls, tau_lo, tau_up, spec.data.sigma)
                    : tapeops::smooth_loglike(b, uT, cls, tau_lo, tau_up, spec.data.sigma);
  parts.loglike = spec.hyper.lambda_data == 1.0 ? ll : b.scale(ll, spec.hyper.lambda_data);
  return parts;
}

} // namespace

LogPosterior::LogPosterior(const ProblemSpec& spec, std::span<const double> theta_fixed,
                           int threads)
    : eval_(tape_, threads) {
  spec.validate();
  const size_t want = spec.theta.dim();
  if (!theta_fixed.empty() && theta_fixed.size() != want)
    fail("logposterior: theta_fixed arity does not match the prior");
  const bool joint = theta_fixed.empty() && want > 0;
  if (joint && spec.kind != ProblemKind::Oscillator)
    fail("logposterior: only the oscillator supports jointly sampled parameters; "
         "pass theta_fixed for the conditional form");

  ad::TapeBuilder b;
  TapeParts parts;
  switch (spec.kind) {
    case ProblemKind::Oscillator:
      parts = build_oscillator(b, spec, theta_fixed, joint_lo_, joint_hi_);
      break;
    case ProblemKind::Diffusion1d:
      parts = build_diffusion(b, spec);
      break;
    case ProblemKind::ReactionDiffusion2d:
      parts = build_rd2d(b, spec, theta_fixed);
      break;
    case ProblemKind::Tumor3d:
      parts = build_tumor(b, spec, theta_fixed);
      break;
  }

  ad::Expr total = b.add(parts.loglike, parts.pde);
  if (parts.has_ic) total = b.add(total, parts.ic);
  b.set_output(total);

  loglike_node_ = parts.loglike.id;
  pde_node_ = parts.pde.id;
  ic_node_ = parts.has_ic ? parts.ic.id : -1;
  gauss_constant_ = parts.gauss_constant;

  tape_ = b.take();
  layout_.blocks.clear();
  for (const ad::InputBlock& blk : tape_.inputs)
    layout_.blocks.push_back({blk.name, blk.offset, blk.size});
  layout_.dim = tape_.input_dim;
  if (!joint_lo_.empty()) joint_offset_ = layout_.at("omega2").offset;
}

bool LogPosterior::in_box(std::span<const double> v) const {
  for (size_t i = 0; i < joint_lo_.size(); i++) {
    const double t = v[size_t(joint_offset_) + i];
    if (!(t >= joint_lo_[i] && t <= joint_hi_[i])) return false;
  }
  return true;
}

double LogPosterior::value(std::span<const double> v) {
  if (!in_box(v)) return kNegInf;
  return eval_.value(v);
}

double LogPosterior::value_grad(std::span<const double> v, std::span<double> grad) {
  if (!in_box(v)) {
    std::fill(grad.begin(), grad.end(), 0.0);
    return kNegInf;
  }
  return eval_.value_grad(v, grad);
}

void LogPosterior::hvp(std::span<const double> v, std::span<const double> dir,
                       std::span<double> out) {
  eval_.hvp(v, dir, out);
}

std::vector<double> LogPosterior::hessian(std::span<const double> v, ad::HessianMode mode,
                                          int64_t max_dim) {
  return eval_.hessian(v, mode, max_dim);
}

PosteriorParts LogPosterior::parts(std::span<const double> v) {
  PosteriorParts p;
  p.gauss_constant = gauss_constant_;
  if (!in_box(v)) {
    p.loglike = kNegInf;
    return p;
  }
  eval_.value(v);
  p.loglike = eval_.node_value(loglike_node_);
  p.pde = eval_.node_value(pde_node_);
  p.ic = ic_node_ >= 0 ? eval_.node_value(ic_node_) : 0.0;
  return p;
}

} // namespace bodil
