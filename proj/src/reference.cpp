#include "bodil/ad/reference.hpp"

#include <stdexcept>

namespace bodil::ad {

namespace {

// ((D_c + D_nb)/2) * (w_nb - w_c) / h^2 summed over both face directions of
// one axis. With Bc::Clamp the out-of-range neighbor equals the center, so
// boundary faces contribute nothing (mirrored ghost nodes).
Expr face_flux_axis(TapeBuilder& b, Expr w, Expr D, int axis, double h, Bc bc) {
  Expr acc{-1};
  for (int delta : {+1, -1}) {
    Expr wn = b.shift(w, axis, delta, bc);
    Expr Dn = b.shift(D, axis, delta, bc);
    Expr face = b.scale(b.add(D, Dn), 0.5);
    Expr term = b.scale(b.mul(face, b.sub(wn, w)), 1.0 / (h * h));
    acc = acc.id < 0 ? term : b.add(acc, term);
  }
  return acc;
}

Expr logistic_reaction(TapeBuilder& b, Expr rho, Expr w) {
  return b.mul(rho, b.mul(w, b.add_const(b.neg(w), 1.0)));
}

} // namespace

OscillatorResidualRef oscillator_residual_reference(TapeBuilder& b, Expr x, Expr v, Expr omega2,
                                                    double dt) {
  const auto& shape = b.shape_of(x);
  if (shape.size() != 1 || shape != b.shape_of(v))
    throw std::invalid_argument("oscillator reference: x and v must share a 1-d shape");
  const int n = shape[0] - 1;
  Expr xl = b.slice_t(x, 0, n);
  Expr xr = b.slice_t(x, 1, n);
  Expr vl = b.slice_t(v, 0, n);
  Expr vr = b.slice_t(v, 1, n);
  Expr xm = b.scale(b.add(xl, xr), 0.5);
  Expr vm = b.scale(b.add(vl, vr), 0.5);
  OscillatorResidualRef r;
  r.position = b.sub(b.scale(b.sub(xr, xl), 1.0 / dt), vm);
  r.velocity = b.add(b.scale(b.sub(vr, vl), 1.0 / dt), b.mul(omega2, xm));
  return r;
}

Expr diffusion1d_residual_reference(TapeBuilder& b, Expr u, double diffusivity, double dt,
                                    double dx) {
  const auto& shape = b.shape_of(u);
  if (shape.size() != 2) throw std::invalid_argument("diffusion reference: u must be (t, x)");
  const int nt = shape[0];
  Expr un = b.slice_t(u, 0, nt - 1);
  Expr up = b.slice_t(u, 1, nt - 1);
  Expr um = b.scale(b.add(un, up), 0.5);
  Expr lap = b.sub(b.add(b.shift(um, 1, 1, Bc::Periodic), b.shift(um, 1, -1, Bc::Periodic)),
                   b.scale(um, 2.0));
  return b.sub(b.scale(b.sub(up, un), 1.0 / dt), b.scale(lap, diffusivity / (dx * dx)));
}

Expr rd2d_residual_reference(TapeBuilder& b, Expr u, Expr D, Expr rho, double dt, double dy,
                             double dx) {
  const auto& shape = b.shape_of(u);
  if (shape.size() != 3) throw std::invalid_argument("rd2d reference: u must be (t, y, x)");
  const int nt = shape[0];
  Expr un = b.slice_t(u, 0, nt - 1);
  Expr up = b.slice_t(u, 1, nt - 1);
  Expr um = b.scale(b.add(un, up), 0.5);
  Expr Dt = b.tile_t(D, nt - 1);
  Expr A = b.add(face_flux_axis(b, um, Dt, 1, dy, Bc::Periodic),
                 face_flux_axis(b, um, Dt, 2, dx, Bc::Periodic));
  Expr dudt = b.scale(b.sub(up, un), 1.0 / dt);
  return b.sub(b.sub(dudt, A), logistic_reaction(b, rho, um));
}

Expr tumor3d_residual_reference(TapeBuilder& b, Expr u, Expr D, Expr rho, double dt, double dz,
                                double dy, double dx) {
  const auto& shape = b.shape_of(u);
  if (shape.size() != 4)
    throw std::invalid_argument("tumor3d reference: u must be (t, z, y, x)");
  const int nt = shape[0];
  Expr un = b.slice_t(u, 0, nt - 1);
  Expr up = b.slice_t(u, 1, nt - 1);
  Expr Dt = b.tile_t(D, nt - 1);
  auto diffusion = [&](Expr w) {
    Expr az = face_flux_axis(b, w, Dt, 1, dz, Bc::Clamp);
    Expr ay = face_flux_axis(b, w, Dt, 2, dy, Bc::Clamp);
    Expr ax = face_flux_axis(b, w, Dt, 3, dx, Bc::Clamp);
    return b.add(az, b.add(ay, ax));
  };
  Expr A = b.scale(b.add(diffusion(un), diffusion(up)), 0.5);
  Expr B = b.scale(b.add(logistic_reaction(b, rho, un), logistic_reaction(b, rho, up)), 0.5);
  Expr dudt = b.scale(b.sub(up, un), 1.0 / dt);
  return b.sub(b.sub(dudt, A), B);
}

} // namespace bodil::ad
