#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include <Eigen/Dense>

#include "bodil/ic.hpp"
#include "bodil/likelihood.hpp"
#include "bodil/posterior.hpp"
#include "bodil/residuals.hpp"
#include "doctest.h"

using namespace bodil;

namespace {

double mean_sq(const std::vector<double>& r) {
  double s = 0;
  for (double v : r) s += v * v;
  return s / double(r.size());
}

// central differences of value(); loose tolerance because the objective mixes
// terms of very different magnitude
void check_grad_fd(LogPosterior& post, std::vector<double> v, const std::vector<int64_t>& coords,
                   double tol = 5e-5) {
  std::vector<double> grad(v.size());
  post.value_grad(v, grad);
  const double h = 1e-6;
  for (int64_t c : coords) {
    const double keep = v[size_t(c)];
    v[size_t(c)] = keep + h;
    const double fp = post.value(v);
    v[size_t(c)] = keep - h;
    const double fm = post.value(v);
    v[size_t(c)] = keep;
    const double fd = (fp - fm) / (2 * h);
    const double scale = std::max({1.0, std::abs(fd), std::abs(grad[size_t(c)])});
    CHECK(std::abs(fd - grad[size_t(c)]) / scale < tol);
  }
}

ProblemSpec oscillator_spec(double beta, bool infer) {
  ProblemSpec spec;
  spec.kind = ProblemKind::Oscillator;
  spec.grid = make_grid_ptr({{"t", 4.0, 9, false}});
  spec.hyper.beta = beta;
  spec.hyper.lambda_ic = 0.0;
  spec.data.kind = LikelihoodKind::Gaussian;
  spec.data.coords = {{0.3}, {1.1}, {2.7}};
  spec.data.values = {0.4, -0.2, 0.1};
  spec.data.sigma = 0.1;
  spec.omega2 = 1.3;
  spec.infer_omega2 = infer;
  if (infer) spec.theta = {{"omega2"}, {0.5}, {2.0}};
  return spec;
}

std::vector<double> smooth_state(size_t n, double a, double b) {
  std::vector<double> v(n);
  for (size_t i = 0; i < n; i++) v[i] = a + b * std::sin(0.7 * double(i) + 0.3);
  return v;
}

} // namespace

TEST_CASE("hyperparameter conventions and conversions") {
  HyperParams h;
  CHECK_THROWS_AS(h.validate(), std::invalid_argument); // neither convention

  h.beta = 1e4;
  CHECK_NOTHROW(h.validate());
  CHECK(h.use_beta());

  h.lambda_pde = 10.0; // both at once
  CHECK_THROWS_AS(h.validate(), std::invalid_argument);

  h.beta = 0.0;
  CHECK_THROWS_AS(h.validate(), std::invalid_argument); // lambda needs lambda_ic
  h.lambda_ic = 100.0;
  CHECK_NOTHROW(h.validate());
  CHECK_FALSE(h.use_beta());

  h.lambda_data = 0.0;
  CHECK_THROWS_AS(h.validate(), std::invalid_argument);

  CHECK(HyperParams::lambda_from_beta(1e4, 20) == doctest::Approx(20.0 / 1e4).epsilon(1e-15));
  CHECK(HyperParams::beta_from_lambda(0.002, 20) == doctest::Approx(1e4).epsilon(1e-15));
  // the two maps are inverses
  CHECK(HyperParams::beta_from_lambda(HyperParams::lambda_from_beta(123.0, 7), 7) ==
        doctest::Approx(123.0).epsilon(1e-15));
  CHECK_THROWS_AS(HyperParams::lambda_from_beta(0.0, 20), std::invalid_argument);
  CHECK_THROWS_AS(HyperParams::beta_from_lambda(0.5, 0), std::invalid_argument);
}

TEST_CASE("dataset validation rejects malformed records") {
  Grid grid = make_grid(std::vector<AxisSpec>{{"t", 4.0, 9, false}});
  Dataset d;
  d.kind = LikelihoodKind::Gaussian;
  d.coords = {{0.5}, {1.5}};
  d.values = {1.0, 2.0};
  d.sigma = 0.1;
  CHECK_NOTHROW(d.validate(grid));

  SUBCASE("sigma must be positive") {
    d.sigma = 0.0;
    CHECK_THROWS_AS(d.validate(grid), std::invalid_argument);
  }
  SUBCASE("coordinate arity") {
    d.coords[1] = {1.5, 2.0};
    CHECK_THROWS_AS(d.validate(grid), std::invalid_argument);
  }
  SUBCASE("coordinate outside the extent") {
    d.coords[1] = {4.5};
    CHECK_THROWS_AS(d.validate(grid), std::invalid_argument);
  }
  SUBCASE("row count mismatch") {
    d.values.push_back(3.0);
    CHECK_THROWS_AS(d.validate(grid), std::invalid_argument);
  }
  SUBCASE("binomial labels") {
    Grid g3 = make_grid(std::vector<AxisSpec>{
        {"t", 1.0, 3, false}, {"y", 1.0, 2, true}, {"x", 1.0, 2, true}});
    Dataset b;
    b.kind = LikelihoodKind::Binomial;
    b.on_final_slice = true;
    b.values = {0, 1, 1, 0.5};
    b.sigma = 0.05;
    CHECK_THROWS_AS(b.validate(g3), std::invalid_argument);
    b.values = {0, 1, 1, 0};
    CHECK_NOTHROW(b.validate(g3));
    b.values = {0, 1, 1}; // must cover the slice
    CHECK_THROWS_AS(b.validate(g3), std::invalid_argument);
  }
  SUBCASE("segmentation thresholds") {
    Grid g3 = make_grid(std::vector<AxisSpec>{
        {"t", 1.0, 3, false}, {"y", 1.0, 2, true}, {"x", 1.0, 2, true}});
    Dataset s;
    s.kind = LikelihoodKind::Hinge;
    s.on_final_slice = true;
    s.values = {0, 1, 2, 1};
    s.sigma = 0.05;
    s.tau_lo = 0.25;
    s.tau_up = 0.65;
    CHECK_NOTHROW(s.validate(g3));
    CHECK(s.classes()[2] == TissueClass::Necrotic);
    s.tau_up = 0.2;
    CHECK_THROWS_AS(s.validate(g3), std::invalid_argument);
    s.tau_up = 0.65;
    s.values[0] = 3;
    CHECK_THROWS_AS(s.validate(g3), std::invalid_argument);
  }
}

TEST_CASE("dataset csv round trip is bit exact") {
  Dataset d;
  d.kind = LikelihoodKind::Gaussian;
  std::mt19937_64 gen(42);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int k = 0; k < 37; k++) {
    d.coords.push_back({uni(gen), uni(gen)});
    d.values.push_back(std::log(uni(gen) + 0.1) * 3.7);
  }
  d.sigma = 0.1;

  const std::string p1 = "posterior_ds_a.csv", p2 = "posterior_ds_b.csv";
  write_dataset_csv(p1, d, {"t", "x"});
  Dataset r = read_dataset_csv(p1);
  REQUIRE(r.values.size() == d.values.size());
  for (size_t k = 0; k < d.values.size(); k++) {
    CHECK(r.values[k] == d.values[k]);
    CHECK(r.coords[k][0] == d.coords[k][0]);
    CHECK(r.coords[k][1] == d.coords[k][1]);
  }
  CHECK(r.sigma == d.sigma);

  write_dataset_csv(p2, r, {"t", "x"});
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::stringstream s1, s2;
  s1 << f1.rdbuf();
  s2 << f2.rdbuf();
  CHECK(s1.str() == s2.str());
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("oscillator posterior composes likelihood and residual prior") {
  ProblemSpec spec = oscillator_spec(100.0, false);
  LogPosterior post(spec);
  REQUIRE(post.dim() == 18);
  CHECK(post.layout().at("x").offset == 0);
  CHECK(post.layout().at("v").offset == 9);
  CHECK(post.layout().find("omega2") == nullptr);

  std::vector<double> v(18);
  for (int i = 0; i < 9; i++) {
    v[size_t(i)] = std::sin(0.3 * i);
    v[size_t(9 + i)] = std::cos(0.4 * i);
  }

  // oracle: interpolate the position at the data times, score the misfit,
  // and add the weighted mean-square residual of both equations
  OscillatorState st;
  st.x = Field(spec.grid);
  st.v = Field(spec.grid);
  std::copy(v.begin(), v.begin() + 9, st.x.values.begin());
  std::copy(v.begin() + 9, v.end(), st.v.values.begin());
  st.omega2 = 1.3;
  std::vector<double> h(3);
  for (int k = 0; k < 3; k++) h[size_t(k)] = interpolate_linear(st.x, spec.data.coords[size_t(k)]);
  const double want_ll = gaussian_loglike(spec.data.values, h, 0.1);
  const double want_pde = -2.0 * 100.0 * mean_sq(oscillator_residuals(st));

  const double got = post.value(v);
  CHECK(got == doctest::Approx(want_ll + want_pde).epsilon(1e-12));

  PosteriorParts parts = post.parts(v);
  CHECK(parts.loglike == doctest::Approx(want_ll).epsilon(1e-12));
  CHECK(parts.pde == doctest::Approx(want_pde).epsilon(1e-12));
  CHECK(parts.ic == 0.0);
  CHECK(parts.loglike + parts.pde + parts.ic == doctest::Approx(got).epsilon(1e-12));
  CHECK(parts.gauss_constant == doctest::Approx(gaussian_loglike_constant(3, 0.1)).epsilon(1e-15));
  // the misfit part of the data term is never positive
  CHECK(parts.loglike <= parts.gauss_constant);
  CHECK(parts.pde <= 0.0);

  std::vector<int64_t> all(18);
  for (int64_t i = 0; i < 18; i++) all[size_t(i)] = i;
  check_grad_fd(post, v, all);
}

TEST_CASE("joint and conditional oscillator forms agree inside the box") {
  ProblemSpec spec = oscillator_spec(100.0, true);
  LogPosterior joint(spec);
  REQUIRE(joint.dim() == 19);
  CHECK(joint.layout().at("omega2").offset == 18);
  REQUIRE(joint.joint_lo().size() == 1);
  CHECK(joint.joint_lo()[0] == 0.5);
  CHECK(joint.joint_hi()[0] == 2.0);

  const double w2 = 0.9;
  std::vector<double> theta{w2};
  LogPosterior cond(spec, theta);
  REQUIRE(cond.dim() == 18);

  std::vector<double> u(18);
  for (int i = 0; i < 18; i++) u[size_t(i)] = 0.3 * std::sin(0.5 * i + 0.2);
  std::vector<double> uv = u;
  uv.push_back(w2);

  CHECK(joint.value(uv) == doctest::Approx(cond.value(u)).epsilon(1e-14));

  // gradients agree on the shared coordinates
  std::vector<double> gj(19), gc(18);
  joint.value_grad(uv, gj);
  cond.value_grad(u, gc);
  for (int i = 0; i < 18; i++) CHECK(gj[size_t(i)] == doctest::Approx(gc[size_t(i)]).epsilon(1e-13));
  check_grad_fd(joint, uv, {18}); // the omega2 direction

  // outside the prior box the joint density vanishes
  uv[18] = 2.5;
  CHECK(joint.value(uv) == -std::numeric_limits<double>::infinity());
  std::vector<double> g(19, 7.0);
  CHECK(joint.value_grad(uv, g) == -std::numeric_limits<double>::infinity());
  for (double x : g) CHECK(x == 0.0);
  CHECK(joint.parts(uv).loglike == -std::numeric_limits<double>::infinity());

  // conditional assembly refuses a wrong arity
  std::vector<double> bad{0.9, 1.0};
  CHECK_THROWS_AS(LogPosterior(spec, bad), std::invalid_argument);
}

TEST_CASE("diffusion posterior is exactly quadratic with a known Hessian") {
  ProblemSpec spec;
  spec.kind = ProblemKind::Diffusion1d;
  spec.grid = make_grid_ptr({{"t", 1.0, 5, false}, {"x", 1.0, 8, true}});
  spec.hyper.beta = 500.0;
  spec.diffusivity = 0.1;
  spec.data.kind = LikelihoodKind::Gaussian;
  // mix of node-exact and off-node observation points
  spec.data.coords = {{0.0, 0.125}, {0.25, 0.5}, {0.6, 0.31}, {1.0, 0.875}, {0.8, 0.99}};
  spec.data.values = {0.7, -0.3, 0.2, 0.1, -0.5};
  spec.data.sigma = 0.1;

  LogPosterior post(spec);
  const int64_t n = post.dim();
  REQUIRE(n == 40);

  std::mt19937_64 gen(2026);
  std::normal_distribution<double> nrm(0.0, 0.5);
  std::vector<double> v1(size_t(n), 0.0);
  for (double& x : v1) x = nrm(gen);

  // f(v2) - f(v1) = g(v1) . d + 0.5 d . H d exactly, H independent of v
  std::vector<double> g1(size_t(n), 0.0), hd(size_t(n), 0.0);
  const double f1 = post.value_grad(v1, g1);
  for (int rep = 0; rep < 5; rep++) {
    std::vector<double> v2(size_t(n), 0.0), d(size_t(n), 0.0);
    for (int64_t i = 0; i < n; i++) {
      v2[size_t(i)] = nrm(gen);
      d[size_t(i)] = v2[size_t(i)] - v1[size_t(i)];
    }
    post.hvp(v1, d, hd);
    double lin = 0, quad = 0;
    for (int64_t i = 0; i < n; i++) {
      lin += g1[size_t(i)] * d[size_t(i)];
      quad += d[size_t(i)] * hd[size_t(i)];
    }
    const double f2 = post.value(v2);
    CHECK(std::abs(f2 - f1 - lin - 0.5 * quad) < 1e-8);
  }

  // dense oracle: columns of the residual map from unit fields, gather rows
  // from the interpolation stencils
  const int64_t m = 4 * 8; // residual count
  Eigen::MatrixXd R(m, n), G(5, n);
  G.setZero();
  Field unit(spec.grid);
  for (int64_t j = 0; j < n; j++) {
    std::fill(unit.values.begin(), unit.values.end(), 0.0);
    unit.values[size_t(j)] = 1.0;
    std::vector<double> r = diffusion_residuals(unit, 0.1);
    for (int64_t i = 0; i < m; i++) R(i, j) = r[size_t(i)];
  }
  for (int k = 0; k < 5; k++) {
    InterpStencil st = interp_stencil(*spec.grid, spec.data.coords[size_t(k)]);
    for (size_t f = 0; f < st.idx.size(); f++) G(k, Eigen::Index(st.idx[f])) += st.w[f];
  }
  Eigen::MatrixXd H_want = -(2.0 * 500.0 / double(m)) * R.transpose() * R -
                           (1.0 / 0.01) * G.transpose() * G;

  std::vector<double> hflat = post.hessian(v1);
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> H_got(
      hflat.data(), n, n);
  CHECK((H_got - H_want).norm() / H_want.norm() < 1e-9);
}

TEST_CASE("reaction-diffusion posterior composes all three terms") {
  ProblemSpec spec;
  spec.kind = ProblemKind::ReactionDiffusion2d;
  spec.grid = make_grid_ptr(
      {{"t", 0.3, 4, false}, {"y", 1.0, 5, true}, {"x", 1.0, 6, true}});
  auto slice = make_grid_ptr({{"y", 1.0, 5, true}, {"x", 1.0, 6, true}});
  spec.rd_diffusivity = Field(slice);
  for (size_t i = 0; i < spec.rd_diffusivity.values.size(); i++)
    spec.rd_diffusivity.values[i] = 0.05 + 0.01 * std::sin(double(i));
  spec.rd_rho = 8.0;
  spec.ic_radius = 1.0 / 16.0;
  spec.hyper.lambda_pde = 10.0;
  spec.hyper.lambda_ic = 100.0;
  spec.theta = {{"x0", "y0"}, {0.0, 0.0}, {1.0, 1.0}};
  spec.data.kind = LikelihoodKind::Binomial;
  spec.data.on_final_slice = true;
  spec.data.sigma = 0.05;
  spec.data.tau = 0.5;
  std::mt19937_64 gen(9);
  for (int i = 0; i < 30; i++) spec.data.values.push_back(double(gen() & 1));

  const std::vector<double> theta{2.0 / 3.0, 1.0 / 3.0};
  LogPosterior post(spec, theta);
  REQUIRE(post.dim() == 4 * 5 * 6);

  std::vector<double> v = smooth_state(size_t(post.dim()), 0.4, 0.25);

  Field u(spec.grid);
  u.values = v;
  std::vector<double> res = reaction_diffusion_residuals_2d(u, spec.rd_diffusivity, 8.0);
  const double want_pde = -10.0 * 6.0 * 5.0 * 4.0 * mean_sq(res);

  std::vector<double> ic = gaussian_ic_2d(theta[0], theta[1], 1.0 / 16.0, *slice);
  std::vector<double> dev(30);
  for (int i = 0; i < 30; i++) dev[size_t(i)] = v[size_t(i)] - ic[size_t(i)];
  const double want_ic = -100.0 * 6.0 * 5.0 * mean_sq(dev);

  std::vector<double> uT(v.end() - 30, v.end());
  const double want_ll = binomial_loglike(spec.data.values, uT, 0.5, 0.05);

  const double got = post.value(v);
  CHECK(got == doctest::Approx(want_ll + want_pde + want_ic).epsilon(1e-11));
  PosteriorParts parts = post.parts(v);
  CHECK(parts.loglike == doctest::Approx(want_ll).epsilon(1e-12));
  CHECK(parts.pde == doctest::Approx(want_pde).epsilon(1e-12));
  CHECK(parts.ic == doctest::Approx(want_ic).epsilon(1e-12));
  CHECK(parts.loglike <= 0.0);
  CHECK(parts.pde <= 0.0);
  CHECK(parts.ic <= 0.0);

  std::vector<int64_t> coords{0, 7, 29, 30, 55, 60, 93, 101, 119};
  check_grad_fd(post, v, coords);

  // jointly sampling (x0, y0) is not supported; the mode approximation
  // conditions on them instead
  CHECK_THROWS_AS((LogPosterior(spec)), std::invalid_argument);
}

TEST_CASE("tumor posterior optimizes bounded model scalars with the field") {
  ProblemSpec spec;
  spec.kind = ProblemKind::Tumor3d;
  spec.grid = make_grid_ptr({{"t", 10.0, 3, false},
                             {"z", 60.0, 4, false},
                             {"y", 60.0, 4, false},
                             {"x", 60.0, 4, false}});
  auto slice = make_grid_ptr({{"z", 60.0, 4, false}, {"y", 60.0, 4, false}, {"x", 60.0, 4, false}});
  spec.c_g = Field(slice);
  spec.c_w = Field(slice);
  for (size_t i = 0; i < spec.c_g.values.size(); i++) {
    spec.c_g.values[i] = 0.2 + 0.1 * std::cos(double(i) * 0.9);
    spec.c_w.values[i] = 1.0 - spec.c_g.values[i];
  }
  spec.hyper.lambda_pde = 10.0;
  spec.hyper.lambda_ic = 5.0;
  spec.theta = {{"x0", "y0", "z0"}, {0.0, 0.0, 0.0}, {60.0, 60.0, 60.0}};
  spec.tumor_Dg = {0.01, true, 1e-4, 1.0};
  spec.tumor_Dw = {0.1, true, 1e-4, 1.0};
  spec.tumor_rho = {0.08, true, 1e-3, 1.0};
  spec.tumor_tau_lo = {0.25, true, 0.05, 0.5};
  spec.tumor_tau_up = {0.65, true, 0.5, 0.95};
  spec.data.kind = LikelihoodKind::Hinge;
  spec.data.on_final_slice = true;
  spec.data.sigma = 0.05;
  std::mt19937_64 gen(5);
  for (int i = 0; i < 64; i++) spec.data.values.push_back(double(gen() % 3));

  const std::vector<double> theta{30.0, 30.0, 30.0};
  LogPosterior post(spec, theta);
  const int64_t nu = 3 * 64;
  REQUIRE(post.dim() == nu + 5);
  CHECK(post.layout().at("Dg_raw").offset == nu);
  CHECK(post.layout().at("tau_up_raw").size == 1);

  std::vector<double> v = smooth_state(size_t(nu), 0.45, 0.3);
  v.resize(size_t(post.dim()));
  v[size_t(nu) + 0] = LogPosterior::bounded_raw(0.01, 1e-4, 1.0);
  v[size_t(nu) + 1] = LogPosterior::bounded_raw(0.1, 1e-4, 1.0);
  v[size_t(nu) + 2] = LogPosterior::bounded_raw(0.08, 1e-3, 1.0);
  v[size_t(nu) + 3] = LogPosterior::bounded_raw(0.25, 0.05, 0.5);
  v[size_t(nu) + 4] = LogPosterior::bounded_raw(0.65, 0.5, 0.95);
  // the reparameterization round-trips
  CHECK(LogPosterior::bounded_value(v[size_t(nu) + 1], 1e-4, 1.0) ==
        doctest::Approx(0.1).epsilon(1e-12));

  TumorCoefficients coeff;
  coeff.D_g = 0.01;
  coeff.D_w = 0.1;
  coeff.rho = 0.08;
  coeff.c_g = spec.c_g;
  coeff.c_w = spec.c_w;
  Field u(spec.grid);
  std::copy(v.begin(), v.begin() + nu, u.values.begin());
  const double want_pde = -10.0 * 4.0 * 4.0 * 4.0 * 3.0 * mean_sq(tumor_residuals_3d(u, coeff));

  std::vector<double> seed = clipped_gaussian_ic_3d(30.0, 30.0, 30.0, 1500.0, 15.0, *slice);
  std::vector<double> dev(64);
  for (int i = 0; i < 64; i++) dev[size_t(i)] = v[size_t(i)] - seed[size_t(i)];
  const double want_ic = -5.0 * 4.0 * 4.0 * 4.0 * mean_sq(dev);

  std::vector<double> uT(v.begin() + 2 * 64, v.begin() + nu);
  const double want_ll = hinge_loglike(uT, spec.data.classes(), 0.25, 0.65, 0.05);

  const double got = post.value(v);
  CHECK(got == doctest::Approx(want_ll + want_pde + want_ic).epsilon(1e-10));
  PosteriorParts parts = post.parts(v);
  CHECK(parts.loglike == doctest::Approx(want_ll).epsilon(1e-11));
  CHECK(parts.pde == doctest::Approx(want_pde).epsilon(1e-11));
  CHECK(parts.ic == doctest::Approx(want_ic).epsilon(1e-11));

  // gradient through the field, the bounded scalars, and the thresholds
  std::vector<int64_t> coords{0, 31, 64, 130, 191, nu, nu + 1, nu + 2, nu + 3, nu + 4};
  check_grad_fd(post, v, coords);

  SUBCASE("fixed scalars disappear from the layout") {
    spec.tumor_Dg.optimize = false;
    spec.tumor_Dw.optimize = false;
    spec.tumor_rho.optimize = false;
    spec.tumor_tau_lo.optimize = false;
    spec.tumor_tau_up.optimize = false;
    LogPosterior fixed(spec, theta);
    CHECK(fixed.dim() == nu);
    CHECK(fixed.layout().find("Dg_raw") == nullptr);
    std::vector<double> vu(v.begin(), v.begin() + nu);
    CHECK(fixed.value(vu) == doctest::Approx(got).epsilon(1e-12));
  }

  SUBCASE("smooth likelihood variant matches its scalar form") {
    spec.data.kind = LikelihoodKind::Smooth;
    LogPosterior sm(spec, theta);
    const double want_sm =
        smooth_loglike(uT, spec.data.classes(), 0.25, 0.65, 0.05) + want_pde + want_ic;
    CHECK(sm.value(v) == doctest::Approx(want_sm).epsilon(1e-10));
  }
}

TEST_CASE("problem validation names the offending constraint") {
  ProblemSpec spec = oscillator_spec(100.0, false);
  spec.hyper.beta = 0.0;
  spec.hyper.lambda_pde = 1.0;
  spec.hyper.lambda_ic = 1.0;
  CHECK_THROWS_WITH_AS((LogPosterior(spec)), "oscillator: uses the beta convention",
                       std::invalid_argument);

  ProblemSpec rd;
  rd.kind = ProblemKind::ReactionDiffusion2d;
  rd.grid = make_grid_ptr({{"t", 0.3, 4, false}, {"y", 1.0, 5, true}, {"x", 1.0, 6, true}});
  auto slice = make_grid_ptr({{"y", 1.0, 5, true}, {"x", 1.0, 6, true}});
  rd.rd_diffusivity = Field(slice, 0.05);
  rd.rd_diffusivity.values[3] = 0.0;
  rd.hyper.lambda_pde = 10.0;
  rd.hyper.lambda_ic = 100.0;
  rd.theta = {{"x0", "y0"}, {0.0, 0.0}, {1.0, 1.0}};
  rd.data.kind = LikelihoodKind::Binomial;
  rd.data.on_final_slice = true;
  rd.data.sigma = 0.05;
  rd.data.values.assign(30, 0.0);
  const std::vector<double> th{0.5, 0.5};
  CHECK_THROWS_WITH_AS(LogPosterior(rd, th),
                       "reaction-diffusion: diffusivity must be positive everywhere",
                       std::invalid_argument);

  rd.rd_diffusivity.values[3] = 0.05;
  CHECK_NOTHROW(LogPosterior(rd, th));
  ProblemSpec bad = rd;
  bad.theta.lo = {0.0, 2.0}; // lo >= hi
  bad.theta.hi = {1.0, 1.0};
  CHECK_THROWS_AS(LogPosterior(bad, th), std::invalid_argument);
}
