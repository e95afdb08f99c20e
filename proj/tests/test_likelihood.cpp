#include <doctest.h>

#include <cmath>
#include <vector>

#include "bodil/ad/engine.hpp"
#include "bodil/likelihood.hpp"
#include "bodil/rng.hpp"

using namespace bodil;

namespace {

// central differences of a scalar tape against its reverse-mode gradient
void check_tape_grad(const ad::Tape& tape, const std::vector<double>& x, double tol) {
  ad::Evaluator ev(tape);
  std::vector<double> g(x.size(), 0.0);
  ev.value_grad(x, g);
  const double h = 1e-6;
  std::vector<double> xp = x;
  for (size_t i = 0; i < x.size(); i++) {
    xp[i] = x[i] + h;
    const double fp = ev.value(xp);
    xp[i] = x[i] - h;
    const double fm = ev.value(xp);
    xp[i] = x[i];
    const double fd = (fp - fm) / (2.0 * h);
    CHECK(std::abs(g[i] - fd) <= tol * std::max(1.0, std::abs(fd)));
  }
}

} // namespace

TEST_CASE("log_sigmoid is exact in both tails") {
  CHECK(log_sigmoid(0.0) == doctest::Approx(-0.6931471805599453).epsilon(1e-15));
  CHECK(log_sigmoid(-30.0) + 30.0 == doctest::Approx(-std::log1p(std::exp(-30.0))).epsilon(1e-12));
  CHECK(std::abs(log_sigmoid(30.0)) < 1e-12);
  CHECK(log_sigmoid(700.0) <= 0.0);
  CHECK(log_sigmoid(700.0) > -1e-300);
  CHECK(log_sigmoid(-700.0) == doctest::Approx(-700.0).epsilon(1e-15));
}

TEST_CASE("gaussian log-likelihood keeps its normalization constant") {
  std::vector<double> y{0.4}, h{0.4};
  CHECK(gaussian_loglike(y, h, 0.1) == doctest::Approx(1.3836465597893728).epsilon(1e-12));
  h[0] = 0.3; // one noise scale away
  CHECK(gaussian_loglike(y, h, 0.1) == doctest::Approx(0.8836465597893728).epsilon(1e-12));
  CHECK(gaussian_loglike_constant(1, 0.1) == doctest::Approx(1.3836465597893728).epsilon(1e-12));
  CHECK_THROWS_AS(gaussian_loglike(y, h, 0.0), std::invalid_argument);
}

TEST_CASE("gaussian log-likelihood concentrates at the generating solution") {
  // residuals are sigma * standard normals, so the misfit is a chi-squared
  // sum: value within 3 sd of -n/2 log(2 pi sigma^2) - n/2
  const size_t n = 20;
  const double sigma = 0.1;
  RngStream rng(7, StreamPurpose::DataNoise);
  std::vector<double> y(n), h(n, 0.25);
  for (size_t k = 0; k < n; k++) y[k] = h[k] + sigma * rng.normal();
  const double center = gaussian_loglike_constant(n, sigma) - double(n) / 2.0;
  CHECK(std::abs(gaussian_loglike(y, h, sigma) - center) < 3.0 * std::sqrt(double(n) / 2.0));
}

TEST_CASE("binomial log-likelihood matches the sigmoid model exactly") {
  const double tau = 0.5, sigma = 0.01;
  std::vector<double> y{1.0}, u{tau};
  CHECK(binomial_loglike(y, u, tau, sigma) == doctest::Approx(std::log(0.5)).epsilon(1e-14));

  u[0] = tau + sigma;
  CHECK(binomial_loglike(y, u, tau, sigma) ==
        doctest::Approx(-0.3132616875182229).epsilon(1e-12));

  y[0] = 0.0;
  u[0] = 0.8; // (u - tau)/sigma = 30: the probability itself would round away
  const double v = binomial_loglike(y, u, tau, sigma);
  CHECK(v == doctest::Approx(-30.0 - std::log1p(std::exp(-30.0))).epsilon(1e-12));
  CHECK(std::abs(v + 30.0) < 1e-6);

  y[0] = 0.5;
  CHECK_THROWS_AS(binomial_loglike(y, u, tau, sigma), std::invalid_argument);
}

TEST_CASE("hinge log-likelihood is zero inside each class interval") {
  const double tlo = 0.3, tup = 0.6, sigma = 0.05;
  auto one = [&](double u, TissueClass c) {
    std::vector<double> uv{u};
    std::vector<TissueClass> cv{c};
    return hinge_loglike(uv, cv, tlo, tup, sigma);
  };
  CHECK(one(0.45, TissueClass::Glioma) == 0.0);
  CHECK(one(0.2, TissueClass::Glioma) == doctest::Approx(-2.0).epsilon(1e-14));
  CHECK(one(0.7, TissueClass::Necrotic) == 0.0);
  CHECK(one(0.05, TissueClass::Healthy) == 0.0);
  CHECK(one(-0.1, TissueClass::Healthy) == doctest::Approx(-2.0).epsilon(1e-14));
  CHECK(one(1.2, TissueClass::Necrotic) == doctest::Approx(-4.0).epsilon(1e-14));
  CHECK(one(0.35, TissueClass::Healthy) == doctest::Approx(-1.0).epsilon(1e-14));
}

TEST_CASE("smooth log-likelihood normalizes the three-class model") {
  const double tlo = 0.3, tup = 0.6, sigma = 0.05;
  std::vector<double> u{tlo};
  std::vector<TissueClass> healthy{TissueClass::Healthy};
  // p = 1/2, Z = 1 + S(-6)/2
  const double z = 1.0 + 0.5 / (1.0 + std::exp(6.0));
  CHECK(smooth_loglike(u, healthy, tlo, tup, sigma) ==
        doctest::Approx(std::log(0.5) - std::log(z)).epsilon(1e-12));
  CHECK(smooth_loglike(u, healthy, tlo, tup, sigma) == doctest::Approx(-0.6943827).epsilon(1e-6));

  // deep inside the glioma interval with a sharp transition the probability
  // tends to one from below
  std::vector<double> umid{0.45};
  std::vector<TissueClass> glioma{TissueClass::Glioma};
  const double v = smooth_loglike(umid, glioma, tlo, tup, 0.005);
  CHECK(v < 0.0);
  CHECK(v > -1e-10);
}

TEST_CASE("hinge and smooth log-likelihoods stay close over random voxels") {
  const double tlo = 0.3, tup = 0.6, sigma = 0.05;
  RngStream rng(11, StreamPurpose::Scratch);
  double worst = 0.0;
  for (int k = 0; k < 1000; k++) {
    std::vector<double> u{rng.uniform(0.0, 1.0)};
    std::vector<TissueClass> c{TissueClass(int(rng.below(3)))};
    const double d =
        std::abs(hinge_loglike(u, c, tlo, tup, sigma) - smooth_loglike(u, c, tlo, tup, sigma));
    worst = std::max(worst, d);
  }
  CHECK(worst < 0.75);
}

TEST_CASE("tape gaussian log-likelihood agrees with the scalar form") {
  RngStream rng(3, StreamPurpose::Scratch);
  const size_t n = 12;
  std::vector<double> y(n), h(n);
  for (size_t k = 0; k < n; k++) {
    y[k] = rng.uniform(-1.0, 1.0);
    h[k] = rng.uniform(-1.0, 1.0);
  }
  const double sigma = 0.1;

  ad::TapeBuilder b;
  ad::Expr hin = b.input("h", {int(n)});
  b.set_output(tapeops::gaussian_loglike(b, hin, y, sigma));
  ad::Tape tape = b.take();

  ad::Evaluator ev(tape);
  CHECK(ev.value(h) == doctest::Approx(gaussian_loglike(y, h, sigma)).epsilon(1e-14));
  check_tape_grad(tape, h, 2e-6);
}

TEST_CASE("tape binomial log-likelihood agrees with the scalar form") {
  RngStream rng(4, StreamPurpose::Scratch);
  const size_t n = 16;
  std::vector<double> y(n), u(n);
  for (size_t k = 0; k < n; k++) {
    y[k] = double(rng.below(2));
    u[k] = rng.uniform(0.0, 1.0);
  }
  const double tau = 0.5, sigma = 0.05;

  ad::TapeBuilder b;
  ad::Expr uin = b.input("u", {int(n)});
  b.set_output(tapeops::binomial_loglike(b, uin, y, tau, sigma));
  ad::Tape tape = b.take();

  ad::Evaluator ev(tape);
  CHECK(ev.value(u) == doctest::Approx(binomial_loglike(y, u, tau, sigma)).epsilon(1e-13));
  check_tape_grad(tape, u, 2e-6);
}

TEST_CASE("tape segmentation log-likelihoods agree and differentiate in u and thresholds") {
  RngStream rng(5, StreamPurpose::Scratch);
  const size_t n = 10;
  std::vector<double> u(n);
  std::vector<TissueClass> cls(n);
  for (size_t k = 0; k < n; k++) {
    u[k] = rng.uniform(0.05, 0.95);
    cls[k] = TissueClass(int(rng.below(3)));
  }
  const double tlo = 0.3, tup = 0.6, sigma = 0.05;

  for (bool smooth : {false, true}) {
    // thresholds as inputs so their gradients are exercised too
    ad::TapeBuilder b;
    ad::Expr uin = b.input("u", {int(n)});
    ad::Expr lo = b.input("tau_lo", {});
    ad::Expr up = b.input("tau_up", {});
    b.set_output(smooth ? tapeops::smooth_loglike(b, uin, cls, lo, up, sigma)
                        : tapeops::hinge_loglike(b, uin, cls, lo, up, sigma));
    ad::Tape tape = b.take();

    std::vector<double> x = u;
    x.push_back(tlo);
    x.push_back(tup);
    ad::Evaluator ev(tape);
    const double expect = smooth ? smooth_loglike(u, cls, tlo, tup, sigma)
                                 : hinge_loglike(u, cls, tlo, tup, sigma);
    CHECK(ev.value(x) == doctest::Approx(expect).epsilon(1e-13));
    check_tape_grad(tape, x, 5e-6);
  }
}
