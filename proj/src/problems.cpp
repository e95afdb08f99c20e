#include "bodil/problems.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <limits>
#include <map>
#include <stdexcept>

#include "bodil/ic.hpp"
#include "bodil/residuals.hpp"
#include "bodil/rng.hpp"

namespace bodil {

namespace {

constexpr double kPi = 3.14159265358979323846;

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

// strictly inside (0, hi): the half-open uniform already excludes hi and the
// rejection removes the measure-zero left endpoint
double uniform_interior(RngStream& rng, double hi) {
  double t = 0.0;
  do {
    t = rng.uniform(0.0, hi);
  } while (t == 0.0);
  return t;
}

// naive DFT over every line along one axis of a row-major n x n complex
// array; n stays small enough (<= 64) that O(n^3) is immaterial
void dft_lines(std::vector<std::complex<double>>& a, int n, int64_t line_stride,
               int64_t elem_stride, bool inverse) {
  std::vector<std::complex<double>> twiddle(size_t(n));
  const double sign = inverse ? 2.0 : -2.0;
  for (int j = 0; j < n; j++) twiddle[size_t(j)] = std::polar(1.0, sign * kPi * j / n);
  std::vector<std::complex<double>> line(size_t(n));
  for (int64_t l = 0; l < n; l++) {
    std::complex<double>* base = a.data() + l * line_stride;
    for (int k = 0; k < n; k++) {
      std::complex<double> acc{0.0, 0.0};
      for (int j = 0; j < n; j++)
        acc += base[int64_t(j) * elem_stride] * twiddle[size_t((int64_t(k) * j) % n)];
      line[size_t(k)] = acc;
    }
    for (int k = 0; k < n; k++) base[int64_t(k) * elem_stride] = line[size_t(k)];
  }
}

} // namespace

double oscillator_exact(const OscillatorProblem& p, double t) {
  return p.x0 * std::cos(p.omega * t) + (p.v0 / p.omega) * std::sin(p.omega * t);
}

Dataset generate_oscillator_data(const OscillatorProblem& p, uint64_t seed) {
  if (p.n_data < 1) fail("oscillator: n_data must be positive");
  if (!(p.omega > 0.0) || !(p.horizon > 0.0)) fail("oscillator: omega and horizon must be positive");
  RngStream rng(seed, StreamPurpose::DataNoise);
  std::vector<double> times(size_t(p.n_data));
  for (double& t : times) t = uniform_interior(rng, 0.5 * p.horizon);
  std::sort(times.begin(), times.end());

  Dataset d;
  d.kind = LikelihoodKind::Gaussian;
  d.sigma = p.sigma;
  for (double t : times) {
    d.coords.push_back({t});
    d.values.push_back(oscillator_exact(p, t) + p.sigma * rng.normal());
  }
  return d;
}

ProblemSpec make_oscillator_spec(const OscillatorProblem& p, uint64_t seed) {
  ProblemSpec spec;
  spec.kind = ProblemKind::Oscillator;
  spec.grid = make_grid_ptr({{"t", p.horizon, p.intervals + 1, false}});
  spec.data = generate_oscillator_data(p, seed);
  spec.hyper.beta = p.beta;
  spec.omega2 = p.omega * p.omega;
  spec.infer_omega2 = p.infer_omega2;
  if (p.infer_omega2) {
    spec.theta.names = {"omega2"};
    spec.theta.lo = {p.omega2_lo};
    spec.theta.hi = {p.omega2_hi};
  }
  spec.validate();
  return spec;
}

double diffusion_exact(const DiffusionProblem& p, double x, double t) {
  const double k = 2.0 * kPi / p.length;
  return std::cos(k * x) * std::exp(-p.diffusivity * k * k * t);
}

Dataset generate_diffusion_data(const DiffusionProblem& p, uint64_t seed) {
  if (p.n_data < 1) fail("diffusion: n_data must be positive");
  RngStream rng(seed, StreamPurpose::DataNoise);
  Dataset d;
  d.kind = LikelihoodKind::Gaussian;
  d.sigma = p.sigma;
  for (int j = 0; j < p.n_data; j++) {
    const double t = rng.uniform(0.0, p.horizon);
    const double x = rng.uniform(0.0, p.length);
    d.coords.push_back({t, x});
    d.values.push_back(diffusion_exact(p, x, t) + p.sigma * rng.normal());
  }
  return d;
}

ProblemSpec make_diffusion_spec(const DiffusionProblem& p, uint64_t seed) {
  ProblemSpec spec;
  spec.kind = ProblemKind::Diffusion1d;
  spec.grid = make_grid_ptr({{"t", p.horizon, p.n_t, false}, {"x", p.length, p.n_x, true}});
  spec.data = generate_diffusion_data(p, seed);
  spec.hyper.beta = p.beta;
  spec.diffusivity = p.diffusivity;
  spec.validate();
  return spec;
}

ReactionDiffusionProblem ReactionDiffusionProblem::configured(int medium_case, double sigma) {
  ReactionDiffusionProblem p;
  if (medium_case != 1 && medium_case != 2) fail("rd: medium case must be 1 or 2");
  p.medium_case = medium_case;
  p.medium_cutoff = medium_case == 1 ? 2.0 : 6.0;
  if (sigma == 0.05) {
    p.sigma = 0.05;
    p.lambda_pde = 10.0;
    p.lambda_ic = 100.0;
  } else if (sigma == 0.01) {
    p.sigma = 0.01;
    p.lambda_pde = 100.0;
    p.lambda_ic = 1000.0;
  } else {
    fail("rd: sigma must be 0.01 or 0.05");
  }
  return p;
}

ReactionDiffusionProblem ReactionDiffusionProblem::full_resolution() const {
  ReactionDiffusionProblem p = *this;
  p.n_space = 64;
  p.n_time = 129;
  return p;
}

Field generate_rd_medium(const ReactionDiffusionProblem& p, uint64_t seed) {
  if (!(p.medium_cutoff > 0.0)) fail("rd: medium cutoff must be positive");
  if (!(p.d_low > 0.0) || !(p.d_low < p.d_high)) fail("rd: need 0 < d_low < d_high");
  const int n = p.n_space;
  auto slice = make_grid_ptr({{"y", p.length, n, true}, {"x", p.length, n, true}});

  RngStream rng(seed, StreamPurpose::MediumSynthesis, uint64_t(p.medium_case));
  std::vector<std::complex<double>> f(size_t(n) * size_t(n));
  for (auto& z : f) z = {rng.normal(), 0.0};

  // low-pass in Fourier space: integer wavenumbers are cycles per domain
  dft_lines(f, n, n, 1, false);
  dft_lines(f, n, 1, n, false);
  const double kc2 = p.medium_cutoff * p.medium_cutoff;
  for (int ky = 0; ky < n; ky++) {
    const int sy = ky <= n / 2 ? ky : ky - n;
    for (int kx = 0; kx < n; kx++) {
      const int sx = kx <= n / 2 ? kx : kx - n;
      f[size_t(ky) * size_t(n) + size_t(kx)] *= std::exp(-(sx * sx + sy * sy) / (2.0 * kc2));
    }
  }
  dft_lines(f, n, n, 1, true);
  dft_lines(f, n, 1, n, true);

  std::vector<double> w(f.size());
  for (size_t i = 0; i < f.size(); i++) w[i] = f[i].real() / double(n) / double(n);

  std::vector<double> sorted = w;
  const size_t mid = sorted.size() / 2;
  std::nth_element(sorted.begin(), sorted.begin() + int64_t(mid), sorted.end());
  const double median = sorted[mid];

  Field out(slice);
  for (size_t i = 0; i < w.size(); i++) out.values[i] = w[i] < median ? p.d_low : p.d_high;
  return out;
}

Field rd_forward_field(const ReactionDiffusionProblem& p, const Field& medium, double x0,
                       double y0) {
  const int n = p.n_space;
  if (!medium.grid || medium.grid->shape() != std::vector<int>{n, n})
    fail("rd: medium does not live on the configured (y, x) slice");
  if (!(p.forward_dt > 0.0)) fail("rd: forward_dt must be positive");
  const double h = medium.grid->axis(1).spacing;
  const auto& D = medium.values;

  std::vector<double> u = gaussian_ic_2d(x0, y0, p.ic_radius_frac * p.length, *medium.grid);
  std::vector<double> un(u.size());
  const int steps = int(std::ceil(p.horizon / p.forward_dt - 1e-9));
  const double dt = p.horizon / steps;

  for (int s = 0; s < steps; s++) {
    for (int j = 0; j < n; j++) {
      const int jm = (j + n - 1) % n, jp = (j + 1) % n;
      for (int i = 0; i < n; i++) {
        const int im = (i + n - 1) % n, ip = (i + 1) % n;
        const size_t c = size_t(j) * size_t(n) + size_t(i);
        const double uc = u[c], dc = D[c];
        double flux = 0.0;
        flux += 0.5 * (dc + D[size_t(j) * size_t(n) + size_t(im)]) *
                (u[size_t(j) * size_t(n) + size_t(im)] - uc);
        flux += 0.5 * (dc + D[size_t(j) * size_t(n) + size_t(ip)]) *
                (u[size_t(j) * size_t(n) + size_t(ip)] - uc);
        flux += 0.5 * (dc + D[size_t(jm) * size_t(n) + size_t(i)]) *
                (u[size_t(jm) * size_t(n) + size_t(i)] - uc);
        flux += 0.5 * (dc + D[size_t(jp) * size_t(n) + size_t(i)]) *
                (u[size_t(jp) * size_t(n) + size_t(i)] - uc);
        un[c] = uc + dt * (flux / (h * h) + p.rho * uc * (1.0 - uc));
      }
    }
    u.swap(un);
  }

  Field out(medium.grid);
  out.values = std::move(u);
  return out;
}

Dataset rd_labels_from_field(const ReactionDiffusionProblem& p, const Field& u_final,
                             uint64_t seed) {
  if (!u_final.grid) fail("rd: field has no grid");
  RngStream rng(seed, StreamPurpose::DataNoise);
  Dataset d;
  d.kind = LikelihoodKind::Binomial;
  d.on_final_slice = true;
  d.sigma = p.sigma;
  d.tau = p.tau;
  d.values.reserve(u_final.values.size());
  for (double u : u_final.values) {
    const double alpha = 1.0 / (1.0 + std::exp(-(u - p.tau) / p.sigma));
    d.values.push_back(rng.uniform() < alpha ? 1.0 : 0.0);
  }
  return d;
}

Dataset generate_rd_data(const ReactionDiffusionProblem& p, const Field& medium,
                         uint64_t seed) {
  return rd_labels_from_field(p, rd_forward_field(p, medium, p.theta_ref[0], p.theta_ref[1]),
                              seed);
}

RdSetup make_rd_setup(const ReactionDiffusionProblem& p, uint64_t seed) {
  RdSetup s;
  s.medium = generate_rd_medium(p, seed);
  s.true_final = rd_forward_field(p, s.medium, p.theta_ref[0], p.theta_ref[1]);

  s.spec.kind = ProblemKind::ReactionDiffusion2d;
  s.spec.grid = make_grid_ptr({{"t", p.horizon, p.n_time, false},
                               {"y", p.length, p.n_space, true},
                               {"x", p.length, p.n_space, true}});
  s.spec.data = rd_labels_from_field(p, s.true_final, seed);
  s.spec.hyper.lambda_pde = p.lambda_pde;
  s.spec.hyper.lambda_ic = p.lambda_ic;
  s.spec.rd_diffusivity = s.medium;
  s.spec.rd_rho = p.rho;
  s.spec.ic_radius = p.ic_radius_frac * p.length;
  s.spec.theta.names = {"x0", "y0"};
  s.spec.theta.lo = {0.0, 0.0};
  s.spec.theta.hi = {p.length, p.length};
  s.spec.validate();
  return s;
}

TumorProblem TumorProblem::full_resolution() const {
  TumorProblem p = *this;
  p.n_space = 64;
  p.n_time = 128;
  return p;
}

PhantomBrain make_phantom_brain(uint64_t seed, std::shared_ptr<const Grid> slice) {
  if (!slice || slice->dim() != 3) fail("phantom: needs a (z, y, x) slice grid");
  RngStream rng(seed, StreamPurpose::MediumSynthesis, 10);

  // band-limited Gaussian field as a sum of random plane waves whose
  // wavevectors (in cycles per domain edge) follow the same Gaussian
  // spectrum used for the 2d media; cheaper than a 3d transform
  constexpr int kModes = 64;
  constexpr double kCutoff = 3.0;
  struct Wave {
    double kz, ky, kx, phase;
  };
  std::vector<Wave> waves(kModes);
  for (Wave& w : waves) {
    w.kz = kCutoff * rng.normal();
    w.ky = kCutoff * rng.normal();
    w.kx = kCutoff * rng.normal();
    w.phase = rng.uniform(0.0, 2.0 * kPi);
  }
  const double amp = std::sqrt(2.0 / kModes);

  const Axis &az = slice->axis(0), &ay = slice->axis(1), &ax = slice->axis(2);
  // ellipsoid semi-axes as fractions of each extent; the volume fraction of
  // the box is (4 pi / 3) * 0.42 * 0.44 * 0.46, about 0.36
  const double fz = 0.42, fy = 0.44, fx = 0.46;

  PhantomBrain out;
  out.c_g = Field(slice);
  out.c_w = Field(slice);
  out.mask.assign(size_t(slice->size()), 0);
  size_t idx = 0;
  for (int z = 0; z < az.nodes; z++) {
    const double pz = slice->coord(0, z);
    const double ez = (pz - 0.5 * az.extent) / (fz * az.extent);
    for (int y = 0; y < ay.nodes; y++) {
      const double py = slice->coord(1, y);
      const double ey = (py - 0.5 * ay.extent) / (fy * ay.extent);
      for (int x = 0; x < ax.nodes; x++, idx++) {
        const double px = slice->coord(2, x);
        const double ex = (px - 0.5 * ax.extent) / (fx * ax.extent);
        if (ez * ez + ey * ey + ex * ex > 1.0) continue;
        out.mask[idx] = 1;
        double w = 0.0;
        for (const Wave& wv : waves)
          w += std::cos(2.0 * kPi *
                            (wv.kz * pz / az.extent + wv.ky * py / ay.extent +
                             wv.kx * px / ax.extent) +
                        wv.phase);
        const double cw = 1.0 / (1.0 + std::exp(-amp * w));
        out.c_w.values[idx] = cw;
        out.c_g.values[idx] = 1.0 - cw;
      }
    }
  }
  return out;
}

Field tumor_forward_field(const TumorProblem& p, const PhantomBrain& brain, double x0,
                          double y0, double z0) {
  const auto slice = brain.c_g.grid;
  if (!slice || slice->dim() != 3) fail("tumor: phantom has no (z, y, x) grid");
  if (p.forward_steps < 1) fail("tumor: forward_steps must be positive");

  const std::vector<double> D =
      tumor_diffusivity({p.Dg, p.Dw, p.rho, brain.c_g, brain.c_w});
  std::vector<double> u =
      clipped_gaussian_ic_3d(x0, y0, z0, p.ic_mass, p.ic_spread2, *slice);
  std::vector<double> un(u.size());

  const int nz = slice->shape()[0], ny = slice->shape()[1], nx = slice->shape()[2];
  const double wz = 1.0 / (slice->axis(0).spacing * slice->axis(0).spacing);
  const double wy = 1.0 / (slice->axis(1).spacing * slice->axis(1).spacing);
  const double wx = 1.0 / (slice->axis(2).spacing * slice->axis(2).spacing);
  const double dt = p.horizon / p.forward_steps;

  for (int s = 0; s < p.forward_steps; s++) {
    size_t c = 0;
    for (int z = 0; z < nz; z++) {
      for (int y = 0; y < ny; y++) {
        for (int x = 0; x < nx; x++, c++) {
          const double uc = u[c], dc = D[c];
          double flux = 0.0;
          const size_t sx = 1, sy = size_t(nx), sz = size_t(nx) * size_t(ny);
          if (x > 0) flux += wx * 0.5 * (dc + D[c - sx]) * (u[c - sx] - uc);
          if (x + 1 < nx) flux += wx * 0.5 * (dc + D[c + sx]) * (u[c + sx] - uc);
          if (y > 0) flux += wy * 0.5 * (dc + D[c - sy]) * (u[c - sy] - uc);
          if (y + 1 < ny) flux += wy * 0.5 * (dc + D[c + sy]) * (u[c + sy] - uc);
          if (z > 0) flux += wz * 0.5 * (dc + D[c - sz]) * (u[c - sz] - uc);
          if (z + 1 < nz) flux += wz * 0.5 * (dc + D[c + sz]) * (u[c + sz] - uc);
          un[c] = uc + dt * (flux + p.rho * uc * (1.0 - uc));
        }
      }
    }
    u.swap(un);
  }

  Field out(slice);
  out.values = std::move(u);
  return out;
}

Dataset generate_tumor_labels(const TumorProblem& p, const Field& true_final) {
  if (!true_final.grid) fail("tumor: field has no grid");
  Dataset d;
  d.kind = LikelihoodKind::Hinge;
  d.on_final_slice = true;
  d.sigma = p.sigma;
  d.tau_lo = p.tau_lo;
  d.tau_up = p.tau_up;
  d.values.reserve(true_final.values.size());
  for (double u : true_final.values)
    d.values.push_back(u < p.tau_lo ? 0.0 : (u < p.tau_up ? 1.0 : 2.0));
  return d;
}

TumorSetup make_tumor_setup(const TumorProblem& p, uint64_t seed) {
  TumorSetup s;
  auto slice = make_grid_ptr({{"z", p.extent, p.n_space, false},
                              {"y", p.extent, p.n_space, false},
                              {"x", p.extent, p.n_space, false}});
  s.brain = make_phantom_brain(seed, slice);
  s.true_final = tumor_forward_field(p, s.brain, p.theta_ref[0], p.theta_ref[1], p.theta_ref[2]);

  // the domain must keep at least 50% headroom over the simulated tumor span
  const auto& shp = slice->shape();
  std::array<int, 3> blo{shp[0], shp[1], shp[2]}, bhi{-1, -1, -1};
  size_t idx = 0;
  for (int z = 0; z < shp[0]; z++)
    for (int y = 0; y < shp[1]; y++)
      for (int x = 0; x < shp[2]; x++, idx++) {
        if (s.true_final.values[idx] < 0.1) continue;
        const std::array<int, 3> node{z, y, x};
        for (int a = 0; a < 3; a++) {
          blo[size_t(a)] = std::min(blo[size_t(a)], node[size_t(a)]);
          bhi[size_t(a)] = std::max(bhi[size_t(a)], node[size_t(a)]);
        }
      }
  for (int a = 0; a < 3; a++) {
    if (bhi[size_t(a)] < 0) break; // no tumor above threshold anywhere
    const double span = (bhi[size_t(a)] - blo[size_t(a)]) * slice->axis(a).spacing;
    if (1.5 * span > p.extent * (1.0 + 1e-12)) {
      char msg[160];
      std::snprintf(msg, sizeof msg,
                    "tumor: domain extent %g mm is smaller than 1.5x the simulated tumor "
                    "span %g mm on axis %s; enlarge the domain",
                    p.extent, span, slice->axis(a).name.c_str());
      throw std::runtime_error(msg);
    }
  }

  s.spec.kind = ProblemKind::Tumor3d;
  s.spec.grid = make_grid_ptr({{"t", p.horizon, p.n_time, false},
                               {"z", p.extent, p.n_space, false},
                               {"y", p.extent, p.n_space, false},
                               {"x", p.extent, p.n_space, false}});
  s.spec.data = generate_tumor_labels(p, s.true_final);
  s.spec.hyper.lambda_pde = p.lambda_pde;
  s.spec.hyper.lambda_ic = p.lambda_ic;
  s.spec.c_g = s.brain.c_g;
  s.spec.c_w = s.brain.c_w;
  s.spec.tumor_Dg = {p.Dg, p.optimize_model_params, 1e-4, 1.0};
  s.spec.tumor_Dw = {p.Dw, p.optimize_model_params, 1e-4, 1.0};
  s.spec.tumor_rho = {p.rho, p.optimize_model_params, 1e-3, 1.0};
  s.spec.tumor_tau_lo = {p.tau_lo, p.optimize_model_params, 0.05, 0.5};
  s.spec.tumor_tau_up = {p.tau_up, p.optimize_model_params, 0.5, 0.95};
  s.spec.ic_mass = p.ic_mass;
  s.spec.ic_spread2 = p.ic_spread2;

  // seed-position prior: the bounding box of the brain mask, in (x, y, z)
  std::array<double, 3> mlo{p.extent, p.extent, p.extent}, mhi{0.0, 0.0, 0.0};
  idx = 0;
  for (int z = 0; z < shp[0]; z++)
    for (int y = 0; y < shp[1]; y++)
      for (int x = 0; x < shp[2]; x++, idx++) {
        if (!s.brain.mask[idx]) continue;
        const std::array<double, 3> pos{slice->coord(2, x), slice->coord(1, y),
                                        slice->coord(0, z)};
        for (int a = 0; a < 3; a++) {
          mlo[size_t(a)] = std::min(mlo[size_t(a)], pos[size_t(a)]);
          mhi[size_t(a)] = std::max(mhi[size_t(a)], pos[size_t(a)]);
        }
      }
  s.spec.theta.names = {"x0", "y0", "z0"};
  s.spec.theta.lo = {mlo[0], mlo[1], mlo[2]};
  s.spec.theta.hi = {mhi[0], mhi[1], mhi[2]};
  s.spec.validate();
  return s;
}

FieldDistribution reconstruct_field_distribution(
    const SampleArchive& samples,
    const std::function<std::vector<double>(std::span<const double>)>& member_field,
    std::shared_ptr<const Grid> slice, std::span<const double> levels) {
  if (!slice) fail("field distribution: missing slice grid");
  const int64_t n = samples.n();
  if (n < 8) fail("field distribution: needs at least 8 posterior samples");
  const size_t m = size_t(slice->size());

  // one member evaluation per distinct theta; duplicate rows from chain
  // resampling keep their multiplicity in the quantiles
  std::map<std::vector<double>, int> seen;
  std::vector<std::vector<double>> fields;
  std::vector<int> member_of(size_t(n), -1);
  for (int64_t i = 0; i < n; i++) {
    std::span<const double> row = samples.row(i);
    auto [it, fresh] = seen.try_emplace(std::vector<double>(row.begin(), row.end()),
                                        int(fields.size()));
    if (fresh) {
      fields.push_back(member_field(row));
      if (fields.back().size() != m)
        throw std::runtime_error("field distribution: member field does not match the slice grid");
    }
    member_of[size_t(i)] = it->second;
  }

  FieldDistribution out;
  out.members = int(n);
  out.levels.assign(levels.begin(), levels.end());
  out.q05 = Field(slice);
  out.q50 = Field(slice);
  out.q95 = Field(slice);
  out.exceedance.assign(levels.size(), Field(slice));

  const auto rank = [&](double q) { return size_t(std::llround(q * double(n - 1))); };
  const size_t r05 = rank(0.05), r50 = rank(0.50), r95 = rank(0.95);
  std::vector<double> buf(size_t(n));
  for (size_t j = 0; j < m; j++) {
    for (int64_t i = 0; i < n; i++)
      buf[size_t(i)] = fields[size_t(member_of[size_t(i)])][j];
    std::sort(buf.begin(), buf.end());
    out.q05.values[j] = buf[r05];
    out.q50.values[j] = buf[r50];
    out.q95.values[j] = buf[r95];
    for (size_t l = 0; l < out.levels.size(); l++) {
      const auto above = buf.end() - std::lower_bound(buf.begin(), buf.end(), out.levels[l]);
      out.exceedance[l].values[j] = double(above) / double(n);
    }
  }
  return out;
}

FieldDistribution reconstruct_field_distribution(const SampleArchive& samples,
                                                 const ProblemSpec& spec,
                                                 const InnerMapConfig& cfg) {
  if (spec.kind == ProblemKind::Oscillator)
    fail("field distribution: the oscillator state has no spatial slice");
  if (!spec.grid || spec.grid->dim() < 2) fail("field distribution: needs a (t, space) grid");
  if (samples.dim != int(spec.theta.dim()))
    fail("field distribution: sample dimension does not match the spec prior");

  std::vector<AxisSpec> ax;
  for (int a = 1; a < spec.grid->dim(); a++) {
    const Axis& g = spec.grid->axis(a);
    ax.push_back({g.name, g.extent, g.nodes, g.periodic});
  }
  auto slice = make_grid_ptr(ax);
  const int64_t m = slice->size();
  const int nt = spec.grid->axis(0).nodes;

  // the conditional layout does not depend on theta; probe it once to find
  // the field block
  std::vector<double> th0(spec.theta.dim());
  for (size_t k = 0; k < th0.size(); k++) th0[k] = 0.5 * (spec.theta.lo[k] + spec.theta.hi[k]);
  const int64_t off = [&] {
    LogPosterior probe(spec, th0, cfg.threads);
    return probe.layout().at("u").offset + int64_t(nt - 1) * m;
  }();

  std::vector<double> warm;
  const auto member = [&](std::span<const double> theta) {
    InnerMapResult res = solve_inner_map(spec, theta, warm, cfg);
    if (res.failed)
      throw std::runtime_error("field distribution: a member MAP solve failed: " + res.message);
    warm = res.v;
    return std::vector<double>(res.v.begin() + off, res.v.begin() + off + m);
  };
  return reconstruct_field_distribution(samples, member, slice, kDefaultContourLevels);
}

CtvResult ctv_from_field(const Field& u_final, const std::vector<uint8_t>& brain,
                         double target_volume) {
  if (!u_final.grid) fail("ctv: field has no grid");
  const Grid& g = *u_final.grid;
  if (brain.size() != u_final.values.size()) fail("ctv: brain mask does not match the field");
  if (!(target_volume > 0.0)) fail("ctv: target volume must be positive");

  double vox = 1.0;
  for (int a = 0; a < g.dim(); a++) vox *= g.axis(a).spacing;

  const auto volume_at = [&](double c) {
    int64_t k = 0;
    for (size_t i = 0; i < brain.size(); i++)
      if (brain[i] && u_final.values[i] >= c) k++;
    return double(k) * vox;
  };

  double achievable = 0.0;
  for (size_t i = 0; i < brain.size(); i++)
    if (brain[i] && u_final.values[i] > 0.0) achievable += vox;
  if (target_volume > achievable + 0.5 * vox) {
    char msg[128];
    std::snprintf(msg, sizeof msg,
                  "ctv: target volume %g exceeds the achievable maximum %g", target_volume,
                  achievable);
    throw std::runtime_error(msg);
  }

  const double tol = vox * (1.0 + 1e-12);
  double lo = 0.0, hi = 1.0;
  double best = 0.0, best_err = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 200 && hi - lo > 1e-15; it++) {
    const double mid = 0.5 * (lo + hi);
    const double err = volume_at(mid) - target_volume;
    if (std::abs(err) < best_err) {
      best_err = std::abs(err);
      best = mid;
    }
    if (best_err <= tol) break;
    (err >= 0.0 ? lo : hi) = mid;
  }
  if (best_err > tol) {
    char msg[128];
    std::snprintf(msg, sizeof msg,
                  "ctv: no threshold reaches the target volume within one voxel "
                  "(nearest achievable %g)",
                  volume_at(best));
    throw std::runtime_error(msg);
  }

  CtvResult out;
  out.threshold = best;
  out.mask.assign(brain.size(), 0);
  for (size_t i = 0; i < brain.size(); i++)
    out.mask[i] = brain[i] && u_final.values[i] >= best;
  return out;
}

std::vector<double> exact_sq_distance_field(const std::vector<uint8_t>& set,
                                            const Grid& slice) {
  const int64_t n = slice.size();
  if (int64_t(set.size()) != n) fail("distance field: mask does not match the grid");

  constexpr double kFar = 1e30;
  std::vector<double> d(size_t(n), kFar);
  bool any = false;
  for (int64_t i = 0; i < n; i++)
    if (set[size_t(i)]) {
      d[size_t(i)] = 0.0;
      any = true;
    }
  if (!any) {
    d.assign(size_t(n), std::numeric_limits<double>::infinity());
    return d;
  }

  const int dim = slice.dim();
  const auto& shape = slice.shape();
  std::vector<int64_t> stride(size_t(dim), 1);
  for (int a = dim - 2; a >= 0; a--)
    stride[size_t(a)] = stride[size_t(a + 1)] * shape[size_t(a + 1)];

  // separable lower-envelope transform: after processing every axis, d holds
  // min over set voxels q of sum_a spacing_a^2 (p_a - q_a)^2
  std::vector<double> f, out, zz;
  std::vector<int> vv;
  for (int a = 0; a < dim; a++) {
    const int len = shape[size_t(a)];
    const double w = slice.axis(a).spacing * slice.axis(a).spacing;
    const int64_t st = stride[size_t(a)];
    f.resize(size_t(len));
    out.resize(size_t(len));
    vv.assign(size_t(len), 0);
    zz.assign(size_t(len) + 1, 0.0);

    for (int64_t base = 0; base < n; base++) {
      if ((base / st) % len != 0) continue; // not the first node of a line
      for (int q = 0; q < len; q++) f[size_t(q)] = d[size_t(base + q * st)];

      const auto intersect = [&](int q, int v) {
        return ((f[size_t(q)] + w * q * q) - (f[size_t(v)] + w * v * v)) /
               (2.0 * w * (q - v));
      };
      int k = 0;
      vv[0] = 0;
      zz[0] = -kFar;
      zz[1] = kFar;
      for (int q = 1; q < len; q++) {
        double s = intersect(q, vv[size_t(k)]);
        while (s <= zz[size_t(k)]) {
          k--;
          s = intersect(q, vv[size_t(k)]);
        }
        k++;
        vv[size_t(k)] = q;
        zz[size_t(k)] = s;
        zz[size_t(k) + 1] = kFar;
      }
      k = 0;
      for (int q = 0; q < len; q++) {
        while (zz[size_t(k) + 1] < double(q)) k++;
        const double dq = double(q - vv[size_t(k)]);
        out[size_t(q)] = w * dq * dq + f[size_t(vv[size_t(k)])];
      }
      for (int q = 0; q < len; q++) d[size_t(base + q * st)] = out[size_t(q)];
    }
  }
  return d;
}

std::vector<uint8_t> standard_plan_ctv(const std::vector<uint8_t>& necrotic,
                                       const std::vector<uint8_t>& brain,
                                       const Grid& slice, double margin) {
  if (!(margin > 0.0)) fail("standard plan: margin must be positive");
  if (necrotic.size() != brain.size() || int64_t(necrotic.size()) != slice.size())
    fail("standard plan: mask sizes do not match the grid");
  if (std::find(necrotic.begin(), necrotic.end(), uint8_t(1)) == necrotic.end())
    fail("standard plan: empty necrotic core");

  const std::vector<double> d2 = exact_sq_distance_field(necrotic, slice);
  const double r2 = margin * margin * (1.0 + 1e-12);
  std::vector<uint8_t> out(brain.size(), 0);
  for (size_t i = 0; i < brain.size(); i++) out[i] = brain[i] && d2[i] <= r2;
  return out;
}

} // namespace bodil
