#pragma once

#include <cstdint>

#include "bodil/ad/dual.hpp"

// Stencil kernel cores for the discrete PDE residual operators, plus their
// hand-derived adjoints. Forward kernels define the residual math once; the
// plain residual API, the fused tape operations, and the reference
// elementary-op compositions in the test suite are all checked against each
// other. Kernels are templated on the scalar type so the same code serves
// plain evaluation (double) and forward-over-reverse sweeps (ad::Dual).
//
// All adjoint kernels are written in gather form: every output element is
// owned by exactly one loop iteration, so the loops parallelize without
// atomics and give bit-identical results for any thread count.
//
// OpenMP pragmas activate only above a size threshold; tiny problems stay
// serial to avoid fork overhead.

namespace bodil::kernels {

using bodil::ad::val;
using std::exp;
using std::log;
using std::pow;
using std::sqrt;

constexpr int64_t kParallelThreshold = 1 << 15;

#define BODIL_PRAGMA(x) _Pragma(#x)
#define BODIL_PAR_FOR(nthreads, work)                                                       \
  BODIL_PRAGMA(omp parallel for schedule(static) num_threads(nthreads)                     \
                   if (nthreads > 1 && (work) >= bodil::kernels::kParallelThreshold))

// ---------------------------------------------------------------------------
// Damped harmonic-free oscillator, midpoint rule on N intervals.
// x, v: N+1 nodes. r: 2N entries, velocity-equation block stacked after the
// position-equation block:
//   r[i]     = (x[i+1]-x[i])/dt - (v[i+1]+v[i])/2
//   r[N+i]   = (v[i+1]-v[i])/dt + omega2*(x[i+1]+x[i])/2

template <class T>
void oscillator_residual(int n, double dt, const T* x, const T* v, T omega2, T* r) {
  const T half(0.5);
  for (int i = 0; i < n; i++) {
    r[i] = (x[i + 1] - x[i]) * T(1.0 / dt) - (v[i + 1] + v[i]) * half;
    r[n + i] = (v[i + 1] - v[i]) * T(1.0 / dt) + omega2 * (x[i + 1] + x[i]) * half;
  }
}

template <class T>
void oscillator_residual_adjoint(int n, double dt, const T* x, const T* /*v*/, T omega2,
                                 const T* ar, T* ax, T* av, T* aomega2) {
  const T half(0.5);
  const T inv_dt(1.0 / dt);
  for (int j = 0; j <= n; j++) {
    T gx(0.0), gv(0.0);
    if (j < n) { // interval i = j sees node j as its left end
      gx += -ar[j] * inv_dt + omega2 * half * ar[n + j];
      gv += -half * ar[j] - ar[n + j] * inv_dt;
    }
    if (j > 0) { // interval i = j-1 sees node j as its right end
      gx += ar[j - 1] * inv_dt + omega2 * half * ar[n + j - 1];
      gv += -half * ar[j - 1] + ar[n + j - 1] * inv_dt;
    }
    ax[j] += gx;
    av[j] += gv;
  }
  T gw(0.0);
  for (int i = 0; i < n; i++) gw += ar[n + i] * (x[i + 1] + x[i]) * half;
  *aomega2 += gw;
}

// ---------------------------------------------------------------------------
// 1D diffusion, trapezoidal midpoint field, periodic in x:
//   um = (u[n+1] + u[n]) / 2
//   r[n,i] = (u[n+1,i]-u[n,i])/dt - D*(um[i+1] - 2 um[i] + um[i-1])/dx^2

template <class T>
void diffusion1d_residual(int nt, int nx, double dt, double dx, double D, const T* u, T* r,
                          int threads = 1) {
  const double c = D / (dx * dx);
  const int64_t work = int64_t(nt - 1) * nx;
  BODIL_PAR_FOR(threads, work)
  for (int n = 0; n < nt - 1; n++) {
    const T* u0 = u + int64_t(n) * nx;
    const T* u1 = u0 + nx;
    T* rn = r + int64_t(n) * nx;
    for (int i = 0; i < nx; i++) {
      int ip = (i + 1 == nx) ? 0 : i + 1;
      int im = (i == 0) ? nx - 1 : i - 1;
      T um = (u1[i] + u0[i]) * T(0.5);
      T ump = (u1[ip] + u0[ip]) * T(0.5);
      T umm = (u1[im] + u0[im]) * T(0.5);
      rn[i] = (u1[i] - u0[i]) * T(1.0 / dt) - T(c) * (ump - T(2.0) * um + umm);
    }
  }
}

// Adjoint w.r.t. u. The Laplacian is symmetric under periodic boundaries, so
// the transpose applies the same stencil to the residual adjoint.
template <class T>
void diffusion1d_residual_adjoint(int nt, int nx, double dt, double dx, double D, const T* ar,
                                  T* au, int threads = 1) {
  const double c = D / (dx * dx);
  const int64_t work = int64_t(nt) * nx;
  BODIL_PAR_FOR(threads, work)
  for (int m = 0; m < nt; m++) {
    T* am = au + int64_t(m) * nx;
    for (int i = 0; i < nx; i++) {
      int ip = (i + 1 == nx) ? 0 : i + 1;
      int im = (i == 0) ? nx - 1 : i - 1;
      T g(0.0);
      if (m < nt - 1) { // residual interval n = m, node is the old level
        const T* rn = ar + int64_t(m) * nx;
        g += -rn[i] * T(1.0 / dt) - T(0.5 * c) * (rn[ip] - T(2.0) * rn[i] + rn[im]);
      }
      if (m > 0) { // residual interval n = m-1, node is the new level
        const T* rn = ar + int64_t(m - 1) * nx;
        g += rn[i] * T(1.0 / dt) - T(0.5 * c) * (rn[ip] - T(2.0) * rn[i] + rn[im]);
      }
      am[i] += g;
    }
  }
}

// ---------------------------------------------------------------------------
// 2D Fisher-KPP (reaction-diffusion), midpoint rule, periodic boundaries,
// spatially varying diffusivity with arithmetic-mean face values:
//   um       = (u[n+1] + u[n]) / 2
//   A(w)_ji  = sum over the 4 faces of ((D_c + D_nb)/2) (w_nb - w_c) / h^2
//   r[n,j,i] = (u[n+1]-u[n])/dt - A(um) - rho*um*(1-um)

template <class T>
void rd2d_residual(int nt, int ny, int nx, double dt, double dy, double dx, const T* u,
                   const T* D, T rho, T* r, int threads = 1) {
  const double cy = 1.0 / (dy * dy), cx = 1.0 / (dx * dx);
  const int64_t plane = int64_t(ny) * nx;
  const int64_t work = int64_t(nt - 1) * plane;
  BODIL_PAR_FOR(threads, work)
  for (int n = 0; n < nt - 1; n++) {
    const T* u0 = u + int64_t(n) * plane;
    const T* u1 = u0 + plane;
    T* rn = r + int64_t(n) * plane;
    for (int j = 0; j < ny; j++) {
      int jp = (j + 1 == ny) ? 0 : j + 1;
      int jm = (j == 0) ? ny - 1 : j - 1;
      for (int i = 0; i < nx; i++) {
        int ip = (i + 1 == nx) ? 0 : i + 1;
        int im = (i == 0) ? nx - 1 : i - 1;
        int64_t c = int64_t(j) * nx + i;
        int64_t cjp = int64_t(jp) * nx + i, cjm = int64_t(jm) * nx + i;
        int64_t cip = int64_t(j) * nx + ip, cim = int64_t(j) * nx + im;
        T um = (u1[c] + u0[c]) * T(0.5);
        T diff = (D[cjp] + D[c]) * T(0.5) * ((u1[cjp] + u0[cjp]) * T(0.5) - um) * T(cy) +
                 (D[cjm] + D[c]) * T(0.5) * ((u1[cjm] + u0[cjm]) * T(0.5) - um) * T(cy) +
                 (D[cip] + D[c]) * T(0.5) * ((u1[cip] + u0[cip]) * T(0.5) - um) * T(cx) +
                 (D[cim] + D[c]) * T(0.5) * ((u1[cim] + u0[cim]) * T(0.5) - um) * T(cx);
        rn[c] = (u1[c] - u0[c]) * T(1.0 / dt) - diff - rho * um * (T(1.0) - um);
      }
    }
  }
}

// Adjoint w.r.t. u; D and rho are held fixed in reaction-diffusion
// inference, so only the field adjoint is needed. The face-averaged
// diffusion operator is symmetric, the reaction term is diagonal with
// coefficient rho*(1 - 2 um).
template <class T>
void rd2d_residual_adjoint_u(int nt, int ny, int nx, double dt, double dy, double dx, const T* u,
                             const T* D, T rho, const T* ar, T* au, int threads = 1) {
  const double cy = 1.0 / (dy * dy), cx = 1.0 / (dx * dx);
  const int64_t plane = int64_t(ny) * nx;
  const int64_t work = int64_t(nt) * plane;
  BODIL_PAR_FOR(threads, work)
  for (int m = 0; m < nt; m++) {
    T* am = au + int64_t(m) * plane;
    for (int j = 0; j < ny; j++) {
      int jp = (j + 1 == ny) ? 0 : j + 1;
      int jm = (j == 0) ? ny - 1 : j - 1;
      for (int i = 0; i < nx; i++) {
        int ip = (i + 1 == nx) ? 0 : i + 1;
        int im = (i == 0) ? nx - 1 : i - 1;
        int64_t c = int64_t(j) * nx + i;
        int64_t cjp = int64_t(jp) * nx + i, cjm = int64_t(jm) * nx + i;
        int64_t cip = int64_t(j) * nx + ip, cim = int64_t(j) * nx + im;
        T g(0.0);
        for (int side = 0; side < 2; side++) {
          // side 0: interval n = m (node on the old level, time term -1/dt)
          // side 1: interval n = m-1 (new level, time term +1/dt)
          int n = (side == 0) ? m : m - 1;
          if (n < 0 || n >= nt - 1) continue;
          const T* rn = ar + int64_t(n) * plane;
          const T* u0 = u + int64_t(n) * plane;
          const T* u1 = u0 + plane;
          T um = (u1[c] + u0[c]) * T(0.5);
          T lap_r = (D[cjp] + D[c]) * T(0.5) * (rn[cjp] - rn[c]) * T(cy) +
                    (D[cjm] + D[c]) * T(0.5) * (rn[cjm] - rn[c]) * T(cy) +
                    (D[cip] + D[c]) * T(0.5) * (rn[cip] - rn[c]) * T(cx) +
                    (D[cim] + D[c]) * T(0.5) * (rn[cim] - rn[c]) * T(cx);
          T time_term = (side == 0) ? -rn[c] * T(1.0 / dt) : rn[c] * T(1.0 / dt);
          g += time_term - T(0.5) * lap_r - T(0.5) * rho * (T(1.0) - T(2.0) * um) * rn[c];
        }
        am[c] += g;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// 3D Fisher-KPP (tumor growth), Crank-Nicolson averaging of both the
// diffusion and reaction operators, zero-flux boundaries via mirrored ghost
// nodes (u[-1] = u[0], so boundary faces simply drop out):
//   A(w)_c   = sum over existing faces ((D_c + D_nb)/2) (w_nb - w_c) / h^2
//   B(w)_c   = rho * w_c * (1 - w_c)
//   r[n]     = (u[n+1]-u[n])/dt - (A(u[n])+A(u[n+1]))/2 - (B(u[n])+B(u[n+1]))/2
// D varies per voxel and may itself carry gradients (tissue composition
// scaled by inferred diffusivities), hence the D and rho adjoints below.

struct TumorDims {
  int nt, nz, ny, nx;
  double dt, dz, dy, dx;
};

namespace detail {

// A(w) at voxel (k,j,i) of one time level.
template <class T>
inline T fkpp3d_diffusion_at(const TumorDims& g, const T* w, const T* D, int k, int j, int i,
                             int64_t c) {
  const double cz = 1.0 / (g.dz * g.dz), cy = 1.0 / (g.dy * g.dy), cx = 1.0 / (g.dx * g.dx);
  const int64_t sy = g.nx, sz = int64_t(g.ny) * g.nx;
  T acc(0.0);
  if (k + 1 < g.nz) acc += (D[c + sz] + D[c]) * T(0.5) * (w[c + sz] - w[c]) * T(cz);
  if (k > 0) acc += (D[c - sz] + D[c]) * T(0.5) * (w[c - sz] - w[c]) * T(cz);
  if (j + 1 < g.ny) acc += (D[c + sy] + D[c]) * T(0.5) * (w[c + sy] - w[c]) * T(cy);
  if (j > 0) acc += (D[c - sy] + D[c]) * T(0.5) * (w[c - sy] - w[c]) * T(cy);
  if (i + 1 < g.nx) acc += (D[c + 1] + D[c]) * T(0.5) * (w[c + 1] - w[c]) * T(cx);
  if (i > 0) acc += (D[c - 1] + D[c]) * T(0.5) * (w[c - 1] - w[c]) * T(cx);
  return acc;
}

} // namespace detail

template <class T>
void tumor3d_residual(const TumorDims& g, const T* u, const T* D, T rho, T* r, int threads = 1) {
  const int64_t vol = int64_t(g.nz) * g.ny * g.nx;
  const int64_t work = int64_t(g.nt - 1) * vol;
  BODIL_PAR_FOR(threads, work)
  for (int n = 0; n < g.nt - 1; n++) {
    const T* u0 = u + int64_t(n) * vol;
    const T* u1 = u0 + vol;
    T* rn = r + int64_t(n) * vol;
    for (int k = 0; k < g.nz; k++)
      for (int j = 0; j < g.ny; j++) {
        int64_t c = (int64_t(k) * g.ny + j) * g.nx;
        for (int i = 0; i < g.nx; i++, c++) {
          T a0 = detail::fkpp3d_diffusion_at(g, u0, D, k, j, i, c);
          T a1 = detail::fkpp3d_diffusion_at(g, u1, D, k, j, i, c);
          T b0 = rho * u0[c] * (T(1.0) - u0[c]);
          T b1 = rho * u1[c] * (T(1.0) - u1[c]);
          rn[c] = (u1[c] - u0[c]) * T(1.0 / g.dt) - (a0 + a1) * T(0.5) - (b0 + b1) * T(0.5);
        }
      }
  }
}

template <class T>
void tumor3d_residual_adjoint_u(const TumorDims& g, const T* u, const T* D, T rho, const T* ar,
                                T* au, int threads = 1) {
  const int64_t vol = int64_t(g.nz) * g.ny * g.nx;
  const int64_t work = int64_t(g.nt) * vol;
  BODIL_PAR_FOR(threads, work)
  for (int m = 0; m < g.nt; m++) {
    const T* um = u + int64_t(m) * vol;
    T* am = au + int64_t(m) * vol;
    for (int k = 0; k < g.nz; k++)
      for (int j = 0; j < g.ny; j++) {
        int64_t c = (int64_t(k) * g.ny + j) * g.nx;
        for (int i = 0; i < g.nx; i++, c++) {
          T g_acc(0.0);
          for (int side = 0; side < 2; side++) {
            int n = (side == 0) ? m : m - 1;
            if (n < 0 || n >= g.nt - 1) continue;
            const T* rn = ar + int64_t(n) * vol;
            // The mirrored-ghost diffusion operator is symmetric, so its
            // transpose is itself, applied to the residual adjoint slab.
            T lap_r = detail::fkpp3d_diffusion_at(g, rn, D, k, j, i, c);
            T time_term = (side == 0) ? -rn[c] * T(1.0 / g.dt) : rn[c] * T(1.0 / g.dt);
            g_acc += time_term - T(0.5) * lap_r -
                     T(0.5) * rho * (T(1.0) - T(2.0) * um[c]) * rn[c];
          }
          am[c] += g_acc;
        }
      }
  }
}

// Adjoint w.r.t. the voxel diffusivity map. Each face value D_f = (D_c+D_nb)/2
// contributes to the residuals of both endpoints with opposite differences;
// gathering over the (up to) 6 faces incident to each voxel keeps the loop
// race-free.
template <class T>
void tumor3d_residual_adjoint_D(const TumorDims& g, const T* u, const T* ar, T* aD,
                                int threads = 1) {
  const int64_t vol = int64_t(g.nz) * g.ny * g.nx;
  const int64_t sy = g.nx, sz = int64_t(g.ny) * g.nx;
  const double cz = 1.0 / (g.dz * g.dz), cy = 1.0 / (g.dy * g.dy), cx = 1.0 / (g.dx * g.dx);
  BODIL_PAR_FOR(threads, vol)
  for (int k = 0; k < g.nz; k++)
    for (int j = 0; j < g.ny; j++) {
      int64_t c = (int64_t(k) * g.ny + j) * g.nx;
      for (int i = 0; i < g.nx; i++, c++) {
        const int64_t offs[6] = {sz, -sz, sy, -sy, 1, -1};
        const bool ok[6] = {k + 1 < g.nz, k > 0, j + 1 < g.ny, j > 0, i + 1 < g.nx, i > 0};
        const double coef[6] = {cz, cz, cy, cy, cx, cx};
        T acc(0.0);
        for (int f = 0; f < 6; f++) {
          if (!ok[f]) continue;
          int64_t nb = c + offs[f];
          for (int n = 0; n < g.nt - 1; n++) {
            const T* u0 = u + int64_t(n) * vol;
            const T* u1 = u0 + vol;
            const T* rn = ar + int64_t(n) * vol;
            T du = (u0[nb] - u0[c]) + (u1[nb] - u1[c]);
            // d r[n]_c / dD_f = -du/(2 h^2); d r[n]_nb / dD_f = +du/(2 h^2);
            // dD_f / dD_c = 1/2.
            acc += T(-0.25 * coef[f]) * du * (rn[c] - rn[nb]);
          }
        }
        aD[c] += acc;
      }
    }
}

// Adjoint w.r.t. the scalar growth rate. Pure reduction; chunked serially in
// deterministic order by the caller when parallel determinism matters, but a
// whole-volume reduction in fixed slab order is already reproducible.
template <class T>
void tumor3d_residual_adjoint_rho(const TumorDims& g, const T* u, const T* ar, T* arho) {
  const int64_t vol = int64_t(g.nz) * g.ny * g.nx;
  T acc(0.0);
  for (int n = 0; n < g.nt - 1; n++) {
    const T* u0 = u + int64_t(n) * vol;
    const T* u1 = u0 + vol;
    const T* rn = ar + int64_t(n) * vol;
    T slab(0.0);
    for (int64_t c = 0; c < vol; c++) {
      T b = u0[c] * (T(1.0) - u0[c]) + u1[c] * (T(1.0) - u1[c]);
      slab += rn[c] * b;
    }
    acc += T(-0.5) * slab;
  }
  *arho += acc;
}

// Numerically stable logistic function, usable with double and Dual.
template <class T>
inline T sigmoid(T x) {
  if (val(x) >= 0.0) {
    T e = exp(-x);
    return T(1.0) / (T(1.0) + e);
  }
  T e = exp(x);
  return e / (T(1.0) + e);
}

} // namespace bodil::kernels
