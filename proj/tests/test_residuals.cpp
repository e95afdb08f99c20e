#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "bodil/kernels.hpp"
#include "bodil/residuals.hpp"

using namespace bodil;

namespace {

constexpr double kPi = 3.14159265358979323846;

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double mean_sq(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s / double(v.size());
}

OscillatorState sampled_oscillator(int n_intervals, double T) {
  // exact solution of x'' = -x for x(0)=0.5, v(0)=0
  OscillatorState s;
  auto g = make_grid_ptr({{"t", T, n_intervals + 1, false}});
  s.x = Field(g);
  s.v = Field(g);
  for (int i = 0; i <= n_intervals; i++) {
    const double t = g->coord(0, i);
    s.x.values[size_t(i)] = 0.5 * std::cos(t);
    s.v.values[size_t(i)] = -0.5 * std::sin(t);
  }
  s.omega2 = 1.0;
  return s;
}

} // namespace

TEST_CASE("oscillator residuals: hand values and length") {
  auto g = make_grid_ptr({{"t", 1.0, 2, false}});
  OscillatorState s;
  s.x = Field(g);
  s.v = Field(g);
  s.omega2 = 1.0;

  s.x.values = {1.0, 1.0};
  s.v.values = {0.0, 0.0};
  std::vector<double> r = oscillator_residuals(s);
  REQUIRE(r.size() == 2);
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 1.0);

  auto g2 = make_grid_ptr({{"t", 0.1, 2, false}});
  s.x = Field(g2);
  s.v = Field(g2);
  s.x.values = {0.0, 0.1};
  s.v.values = {1.0, 1.0};
  r = oscillator_residuals(s);
  CHECK(r[0] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(r[1] == doctest::Approx(0.05).epsilon(1e-15));
}

TEST_CASE("oscillator residuals vanish at 2nd order on the exact solution") {
  const double T = 10.0;
  double coarse = max_abs(oscillator_residuals(sampled_oscillator(64, T)));
  double fine = max_abs(oscillator_residuals(sampled_oscillator(128, T)));
  CHECK(coarse / fine == doctest::Approx(4.0).epsilon(0.10));
}

TEST_CASE("diffusion residuals: constants, hand values, length") {
  Field u(make_grid_ptr({{"t", 1.0, 3, false}, {"x", 4.0, 4, true}}), 0.7);
  std::vector<double> r = diffusion_residuals(u, 0.3);
  REQUIRE(r.size() == 8);
  for (double x : r) CHECK(x == 0.0);

  // 3-node hand case: u held at (0,1,0) across one step of dt=1, dx=1, D=0.1
  Field u2(make_grid_ptr({{"t", 1.0, 2, false}, {"x", 3.0, 3, true}}));
  u2.values = {0, 1, 0, 0, 1, 0};
  r = diffusion_residuals(u2, 0.1);
  REQUIRE(r.size() == 3);
  CHECK(r[0] == doctest::Approx(-0.1).epsilon(1e-15));
  CHECK(r[1] == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(r[2] == doctest::Approx(-0.1).epsilon(1e-15));
}

TEST_CASE("diffusion residuals converge at 2nd order under joint refinement") {
  // u(x,t) = cos(2 pi x / L) exp(-D (2 pi / L)^2 t) solves the PDE exactly
  const double L = 1.0, T = 0.25, D = 0.1;
  auto sample = [&](int nx, int nt) {
    Field u(make_grid_ptr({{"t", T, nt, false}, {"x", L, nx, true}}));
    const double k = 2.0 * kPi / L;
    for (int n = 0; n < nt; n++)
      for (int i = 0; i < nx; i++) {
        const double x = L * i / nx, t = T * n / (nt - 1);
        u.values[size_t(n * nx + i)] = std::cos(k * x) * std::exp(-D * k * k * t);
      }
    return u;
  };
  double coarse = max_abs(diffusion_residuals(sample(16, 17), D));
  double fine = max_abs(diffusion_residuals(sample(32, 33), D));
  CHECK(coarse / fine == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("reaction-diffusion residuals: logistic fixed points and constants") {
  auto gu = make_grid_ptr({{"t", 0.5, 3, false}, {"y", 1.0, 4, true}, {"x", 1.0, 5, true}});
  auto gd = make_grid_ptr({{"y", 1.0, 4, true}, {"x", 1.0, 5, true}});
  Field D(gd, 0.1);
  const double rho = 8.0;

  Field u0(gu, 0.0);
  for (double r : reaction_diffusion_residuals_2d(u0, D, rho)) CHECK(r == 0.0);

  Field u1(gu, 1.0);
  for (double r : reaction_diffusion_residuals_2d(u1, D, rho)) CHECK(r == 0.0);

  Field uh(gu, 0.5);
  std::vector<double> r = reaction_diffusion_residuals_2d(uh, D, rho);
  REQUIRE(r.size() == size_t(2 * 4 * 5));
  for (double x : r) CHECK(x == doctest::Approx(-0.25 * rho).epsilon(1e-14));

  Field dbad(gd, 0.1);
  dbad.values[3] = 0.0;
  CHECK_THROWS_AS(reaction_diffusion_residuals_2d(uh, dbad, rho), std::domain_error);
}

TEST_CASE("tumor residuals: fixed points and tissue-weighted diffusivity") {
  auto gu = make_grid_ptr({{"t", 0.1, 3, false},
                           {"z", 1.0, 3, false},
                           {"y", 1.0, 3, false},
                           {"x", 1.0, 3, false}});
  auto gt = make_grid_ptr({{"z", 1.0, 3, false}, {"y", 1.0, 3, false}, {"x", 1.0, 3, false}});
  TumorCoefficients coeff;
  coeff.D_g = 0.01;
  coeff.D_w = 0.05;
  coeff.rho = 2.0;
  coeff.c_g = Field(gt, 0.25);
  coeff.c_w = Field(gt, 0.75);

  Field u1(gu, 1.0);
  for (double r : tumor_residuals_3d(u1, coeff)) CHECK(r == 0.0);

  TumorCoefficients nostiff = coeff;
  nostiff.D_g = 0.0;
  nostiff.D_w = 0.0;
  Field uh(gu, 0.5);
  for (double r : tumor_residuals_3d(uh, nostiff))
    CHECK(r == doctest::Approx(-0.25 * coeff.rho).epsilon(1e-14));

  std::vector<double> Dmap = tumor_diffusivity(coeff);
  for (double d : Dmap)
    CHECK(d == doctest::Approx(0.01 * 0.25 + 0.05 * 0.75).epsilon(1e-15));
}

TEST_CASE("tumor residuals shrink once a finer independent solver trajectory is sampled") {
  // evolve a radially symmetric bump with explicit Euler on its own grid
  // (4x finer in space and time than the coarse scheme grid), then restrict
  // the trajectory onto two scheme grids; the solver's first-order bias is
  // shared by both, so refining the scheme grid 2x cannot buy the clean 16x
  // mean-square gain and the coarse residual stays within 10x of the fine one
  const int nes = 29;             // solver spatial nodes, strides 4 and 2 below
  const double T = 0.2, ext = 1.0;
  const double Dg = 0.003, rho = 4.0;
  const int euler_steps = 32;
  const double dt_e = T / euler_steps;
  const double h_e = ext / (nes - 1);

  kernels::TumorDims euler_dims{0, nes, nes, nes, dt_e, h_e, h_e, h_e};
  const int64_t vol = int64_t(nes) * nes * nes;
  std::vector<double> Dfield(size_t(vol), Dg);

  std::vector<std::vector<double>> traj;
  std::vector<double> u(size_t(vol), 0.0);
  for (int k = 0; k < nes; k++)
    for (int j = 0; j < nes; j++)
      for (int i = 0; i < nes; i++) {
        const double z = k * h_e - 0.5, y = j * h_e - 0.5, x = i * h_e - 0.5;
        u[size_t((int64_t(k) * nes + j) * nes + i)] =
            0.4 * std::exp(-(x * x + y * y + z * z) / (2.0 * 0.3 * 0.3));
      }
  traj.push_back(u);
  for (int m = 0; m < euler_steps; m++) {
    std::vector<double> next(size_t(vol), 0.0);
    for (int k = 0; k < nes; k++)
      for (int j = 0; j < nes; j++) {
        int64_t c = (int64_t(k) * nes + j) * nes;
        for (int i = 0; i < nes; i++, c++) {
          const double a =
              kernels::detail::fkpp3d_diffusion_at(euler_dims, u.data(), Dfield.data(), k, j, i, c);
          const double b = rho * u[size_t(c)] * (1.0 - u[size_t(c)]);
          next[size_t(c)] = u[size_t(c)] + dt_e * (a + b);
        }
      }
    u = std::move(next);
    traj.push_back(u);
  }

  // restrict onto the coarse (8 nodes, every 4th state) and fine (15 nodes,
  // every 2nd state) scheme grids; solver nodes align with both
  auto sample = [&](int stride_s, int stride_t, int ns, int nt) {
    auto g = make_grid_ptr({{"t", T, nt, false},
                            {"z", ext, ns, false},
                            {"y", ext, ns, false},
                            {"x", ext, ns, false}});
    Field f(g);
    for (int n = 0; n < nt; n++)
      for (int k = 0; k < ns; k++)
        for (int j = 0; j < ns; j++)
          for (int i = 0; i < ns; i++) {
            const auto& st = traj[size_t(n * stride_t)];
            f.values[size_t(((int64_t(n) * ns + k) * ns + j) * ns + i)] =
                st[size_t(((int64_t(k) * stride_s) * nes + j * stride_s) * nes + i * stride_s)];
          }
    return f;
  };

  TumorCoefficients coeff;
  coeff.D_g = Dg;
  coeff.D_w = Dg;
  coeff.rho = rho;

  Field coarse = sample(4, 4, 8, 9);
  auto gt_c = make_grid_ptr({{"z", ext, 8, false}, {"y", ext, 8, false}, {"x", ext, 8, false}});
  coeff.c_g = Field(gt_c, 0.5);
  coeff.c_w = Field(gt_c, 0.5);
  const double ms_coarse = mean_sq(tumor_residuals_3d(coarse, coeff));

  Field fine = sample(2, 2, 15, 17);
  auto gt_f =
      make_grid_ptr({{"z", ext, 15, false}, {"y", ext, 15, false}, {"x", ext, 15, false}});
  coeff.c_g = Field(gt_f, 0.5);
  coeff.c_w = Field(gt_f, 0.5);
  const double ms_fine = mean_sq(tumor_residuals_3d(fine, coeff));

  CHECK(ms_fine > 0.0);
  CHECK(ms_coarse < 10.0 * ms_fine);
}
