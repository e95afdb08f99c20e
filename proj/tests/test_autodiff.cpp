#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "bodil/ad/engine.hpp"
#include "bodil/ad/tape.hpp"
#include "bodil/rng.hpp"

using namespace bodil;
using namespace bodil::ad;

namespace {

// Central finite differences on the tape's own value(): the oracle shares
// nothing with the reverse sweep it checks.
std::vector<double> fd_gradient(const Tape& tape, std::vector<double> x, double h = 1e-6) {
  Evaluator ev(tape);
  std::vector<double> g(x.size());
  for (size_t i = 0; i < x.size(); i++) {
    const double xi = x[i];
    x[i] = xi + h;
    const double fp = ev.value(x);
    x[i] = xi - h;
    const double fm = ev.value(x);
    x[i] = xi;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

void check_grad(const Tape& tape, const std::vector<double>& x, double tol = 5e-7) {
  GradResult r = gradient(tape, x);
  std::vector<double> fd = fd_gradient(tape, x);
  REQUIRE(r.grad.size() == fd.size());
  for (size_t i = 0; i < fd.size(); i++) {
    const double scale = std::max({1.0, std::abs(r.grad[i]), std::abs(fd[i])});
    CHECK(std::abs(r.grad[i] - fd[i]) / scale < tol);
  }
}

} // namespace

TEST_CASE("scalar chains differentiate correctly through every elementary op") {
  TapeBuilder b;
  Expr x = b.input("x", {});
  Expr y = b.input("y", {});
  // exp(x)*log(y) + x/y - sqrt(x*y) + x^3 + sigmoid(x - y) + (x+2)^2/5 - |min/max mix|
  Expr t1 = b.mul(b.exp(x), b.log(y));
  Expr t2 = b.div(x, y);
  Expr t3 = b.sqrt(b.mul(x, y));
  Expr t4 = b.pow(x, 3.0);
  Expr t5 = b.sigmoid(b.sub(x, y));
  Expr t6 = b.scale(b.square(b.add_const(x, 2.0)), 0.2);
  Expr t7 = b.max(b.neg(x), b.min(y, b.constant(0.7)));
  Expr out = b.add(b.sub(b.add(t1, t2), t3), b.add(b.add(t4, t5), b.add(t6, t7)));
  b.set_output(out);
  Tape tape = b.take();

  check_grad(tape, {0.8, 1.3});
  check_grad(tape, {1.7, 0.4});

  // hand value at a simple point as a sanity anchor
  Evaluator ev(tape);
  double v = ev.value(std::vector<double>{1.0, 1.0});
  double expect = std::exp(1.0) * 0.0 + 1.0 - 1.0 + 1.0 + 0.5 + 0.2 * 9.0 + 0.7;
  CHECK(v == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("array ops broadcast against scalars in both positions") {
  TapeBuilder b;
  Expr u = b.input("u", {6});
  Expr s = b.input("s", {});
  Expr a1 = b.mul(s, u);            // scalar * array
  Expr a2 = b.div(u, s);            // array / scalar
  Expr a3 = b.sub(s, b.square(u));  // scalar - array
  Expr a4 = b.max(u, s);            // elementwise vs broadcast scalar
  Expr out = b.add(b.add(b.sum(a1), b.mean_sq(a2)), b.add(b.sum(a3), b.sum(a4)));
  b.set_output(out);
  Tape tape = b.take();

  check_grad(tape, {0.3, -1.2, 2.0, 0.9, -0.4, 1.1, 0.7});
}

TEST_CASE("slice, tile, and shift move adjoints to the right places") {
  TapeBuilder b;
  Expr u = b.input("u", {4, 3});
  Expr first = b.slice_t(u, 0, 1);          // shape {3}
  Expr mid = b.slice_t(u, 1, 2);            // shape {2,3}
  Expr tiled = b.tile_t(first, 2);          // shape {2,3}
  Expr d = b.sub(mid, tiled);
  Expr sp = b.shift(u, 1, 1, Bc::Periodic);  // x+1 with wrap
  Expr sc = b.shift(u, 0, -1, Bc::Clamp);    // t-1 with clamped end
  Expr out = b.add(b.mean_sq(d), b.add(b.sum(b.mul(sp, u)), b.mean_sq(b.sub(sc, u))));
  b.set_output(out);
  Tape tape = b.take();

  std::vector<double> x(12);
  RngStream rng(5, StreamPurpose::Scratch);
  for (double& v : x) v = rng.uniform(-1.0, 1.0);
  check_grad(tape, x);
}

TEST_CASE("shift values match a hand-rolled reference on both boundary rules") {
  TapeBuilder b;
  Expr u = b.input("u", {3, 4});
  b.set_output(b.sum(b.mul(b.shift(u, 1, -1, Bc::Periodic), b.shift(u, 0, 1, Bc::Clamp))));
  Tape tape = b.take();

  std::vector<double> x(12);
  for (int i = 0; i < 12; i++) x[size_t(i)] = i + 1;
  auto at = [&](int t, int j) { return x[size_t(t * 4 + j)]; };
  double expect = 0.0;
  for (int t = 0; t < 3; t++)
    for (int j = 0; j < 4; j++) {
      double left = at(t, (j + 3) % 4);          // x-1 periodic
      double down = at(t + 1 > 2 ? 2 : t + 1, j); // t+1 clamped
      expect += left * down;
    }
  CHECK(eval(tape, x) == doctest::Approx(expect).epsilon(1e-14));
  check_grad(tape, x);
}

TEST_CASE("gather applies interpolation stencils as a sparse linear map") {
  Grid g = make_grid({{"x", 4.0, 5, false}});
  std::vector<InterpStencil> st;
  double p1[] = {1.5};
  double p2[] = {3.25};
  st.push_back(interp_stencil(g, p1));
  st.push_back(interp_stencil(g, p2));

  TapeBuilder b;
  Expr u = b.input("u", {5});
  Expr obs = b.gather(u, st);
  b.set_output(b.mean_sq(obs));
  Tape tape = b.take();

  std::vector<double> x = {0.0, 1.0, 4.0, 9.0, 16.0};
  // interpolants: 2.5 and 0.75*9+0.25*16 = 10.75; mean of squares
  double expect = (2.5 * 2.5 + 10.75 * 10.75) / 2.0;
  CHECK(eval(tape, x) == doctest::Approx(expect).epsilon(1e-14));
  check_grad(tape, x);
}

TEST_CASE("min and max ties give the whole subgradient to the first argument") {
  TapeBuilder b;
  Expr x = b.input("x", {});
  Expr c = b.constant(0.5);
  Expr out = b.add(b.min(x, c), b.add(b.max(x, c), b.add(b.min(c, x), b.max(c, x))));
  b.set_output(out);
  Tape tape = b.take();

  // at the tie, min(x,c) and max(x,c) both route to x; min(c,x), max(c,x) to c
  GradResult r = gradient(tape, std::vector<double>{0.5});
  CHECK(r.grad[0] == 2.0);
  // off the tie the four terms split two-and-two regardless of side
  CHECK(gradient(tape, std::vector<double>{0.2}).grad[0] == 2.0);
  CHECK(gradient(tape, std::vector<double>{0.9}).grad[0] == 2.0);
}

TEST_CASE("logsigmoid is exact where naive probabilities round to 0 or 1") {
  TapeBuilder b;
  Expr x = b.input("x", {});
  b.set_output(b.logsigmoid(x));
  Tape tape = b.take();
  Evaluator ev(tape);

  CHECK(ev.value(std::vector<double>{0.0}) ==
        doctest::Approx(-0.6931471805599453).epsilon(1e-15));
  // log sigmoid(-30) = -30 - log1p(exp(-30)); the correction is ~9e-14
  CHECK(ev.value(std::vector<double>{-30.0}) == doctest::Approx(-30.0).epsilon(1e-12));
  // log sigmoid(30) = -log1p(exp(-30)) ~ -9.35e-14, far below the 1e-12 a
  // clamped probability would produce
  CHECK(std::abs(ev.value(std::vector<double>{30.0})) < 1e-12);
  CHECK(ev.value(std::vector<double>{700.0}) == 0.0); // exp(-700) underflows cleanly

  // gradient d/dx log sigmoid = 1 - sigmoid(x)
  GradResult r = gradient(tape, std::vector<double>{2.0});
  CHECK(r.grad[0] == doctest::Approx(1.0 - 1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-12));
  check_grad(tape, {-1.3});
}

TEST_CASE("bounded reparameterization maps the real line into its box") {
  TapeBuilder b;
  Expr raw = b.input("raw", {});
  b.set_output(b.bounded(raw, 2.0, 6.0));
  Tape tape = b.take();
  Evaluator ev(tape);

  CHECK(ev.value(std::vector<double>{0.0}) == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(ev.value(std::vector<double>{40.0}) <= 6.0);
  CHECK(ev.value(std::vector<double>{-40.0}) >= 2.0);
  check_grad(tape, {0.7});
}

namespace {

// Non-separable 4-dim test function with enough curvature structure to make
// Hessian mistakes visible.
Tape quartic_tape() {
  TapeBuilder b;
  Expr x = b.input("x", {4});
  Expr s = b.sum(x);
  Expr q = b.mean_sq(x);
  Expr x0 = b.slice_t(x, 0, 1); // shape {1}
  Expr x3 = b.slice_t(x, 3, 1);
  Expr cross = b.sum(b.mul(x0, b.exp(x3)));
  b.set_output(b.add(b.mul(s, q), b.add(cross, b.square(s))));
  return b.take();
}

} // namespace

TEST_CASE("hessian-vector products differentiate the gradient") {
  Tape tape = quartic_tape();
  Evaluator ev(tape);
  std::vector<double> x = {0.4, -0.2, 0.8, 0.1};
  std::vector<double> dir = {1.0, -2.0, 0.5, 0.25};
  std::vector<double> hv(4);
  ev.hvp(x, dir, hv);

  // finite difference of the AD gradient along dir
  const double h = 1e-6;
  std::vector<double> xp(4), xm(4), gp(4), gm(4);
  for (int i = 0; i < 4; i++) {
    xp[size_t(i)] = x[size_t(i)] + h * dir[size_t(i)];
    xm[size_t(i)] = x[size_t(i)] - h * dir[size_t(i)];
  }
  ev.value_grad(xp, gp);
  ev.value_grad(xm, gm);
  for (int i = 0; i < 4; i++) {
    double fd = (gp[size_t(i)] - gm[size_t(i)]) / (2.0 * h);
    CHECK(hv[size_t(i)] == doctest::Approx(fd).epsilon(5e-6));
  }
}

TEST_CASE("both hessian modes agree and produce symmetric matrices") {
  Tape tape = quartic_tape();
  Evaluator ev(tape);
  std::vector<double> x = {0.4, -0.2, 0.8, 0.1};
  std::vector<double> ha = ev.hessian(x, HessianMode::ForwardOverReverse);
  std::vector<double> hb = ev.hessian(x, HessianMode::FdGradient);
  for (int i = 0; i < 4; i++)
    for (int j = 0; j < 4; j++) {
      const double a = ha[size_t(i * 4 + j)];
      CHECK(a == doctest::Approx(hb[size_t(i * 4 + j)]).epsilon(1e-5));
      CHECK(a == ha[size_t(j * 4 + i)]); // symmetrized exactly
    }

  // dense guard refuses huge systems
  CHECK_THROWS_AS(ev.hessian(x, HessianMode::ForwardOverReverse, 3), std::length_error);
}

TEST_CASE("numeric failures name the offending node") {
  TapeBuilder b;
  Expr x = b.input("x", {});
  b.set_output(b.log(x));
  Tape tape = b.take();
  Evaluator ev(tape);

  CHECK_THROWS_AS(ev.value(std::vector<double>{-1.0}), NumericError);
  try {
    ev.value(std::vector<double>{-1.0});
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("log") != std::string::npos);
    CHECK(e.node >= 0);
  }
}

TEST_CASE("evaluation is deterministic and thread-count invariant") {
  TapeBuilder b;
  const int n = 200000; // spans multiple reduction chunks
  Expr u = b.input("u", {n});
  Expr v = b.mul(u, b.shift(u, 0, 1, Bc::Periodic));
  b.set_output(b.add(b.sum(v), b.mean_sq(u)));
  Tape tape = b.take();

  std::vector<double> x(n);
  RngStream rng(9, StreamPurpose::Scratch);
  for (double& w : x) w = rng.normal();

  Evaluator e1(tape, 1);
  Evaluator e4(tape, 4);
  std::vector<double> g1(n), g4(n);
  const double v1 = e1.value_grad(x, g1);
  const double v4 = e4.value_grad(x, g4);
  CHECK(v1 == v4); // bit-equal by construction, not approximately
  CHECK(g1 == g4);

  // and replay is stable
  std::vector<double> g1b(n);
  CHECK(e1.value_grad(x, g1b) == v1);
  CHECK(g1 == g1b);
}

TEST_CASE("tape construction rejects structural misuse") {
  TapeBuilder b;
  Expr u = b.input("u", {3, 4});
  Expr w = b.input("w", {5});
  CHECK_THROWS_AS(b.add(u, w), std::invalid_argument);
  CHECK_THROWS_AS(b.slice_t(u, 3, 1), std::invalid_argument);
  CHECK_THROWS_AS(b.slice_t(u, 0, 4), std::invalid_argument);
  CHECK_THROWS_AS(b.shift(u, 2, 1, Bc::Periodic), std::invalid_argument);
  CHECK_THROWS_AS(b.shift(u, 0, 2, Bc::Periodic), std::invalid_argument);
  CHECK_THROWS_AS(b.set_output(u), std::invalid_argument); // output must be scalar

  TapeBuilder b2;
  Expr s = b2.input("s", {});
  b2.set_output(s);
  Tape t2 = b2.take();
  CHECK(t2.input_dim == 1);
  // flat vector arity is validated
  Evaluator ev(t2);
  CHECK_THROWS_AS(ev.value(std::vector<double>{1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("inputs pack into the flat vector in declaration order") {
  TapeBuilder b;
  Expr a = b.input("a", {2});
  Expr c = b.input("c", {});
  Expr d = b.input("d", {3});
  b.set_output(b.add(b.sum(a), b.add(c, b.sum(d))));
  Tape tape = b.take();

  REQUIRE(tape.inputs.size() == 3);
  CHECK(tape.inputs[0].name == "a");
  CHECK(tape.inputs[0].offset == 0);
  CHECK(tape.inputs[1].name == "c");
  CHECK(tape.inputs[1].offset == 2);
  CHECK(tape.inputs[2].name == "d");
  CHECK(tape.inputs[2].offset == 3);
  CHECK(tape.input_dim == 6);

  GradResult r = gradient(tape, std::vector<double>{1, 2, 3, 4, 5, 6});
  for (double gi : r.grad) CHECK(gi == 1.0);
}
