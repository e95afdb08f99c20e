#pragma once

#include "bodil/ad/tape.hpp"

namespace bodil::ad {

// Reference builds of the fused residual stencils out of elementary tape
// ops (slice/shift/arithmetic). They produce the same residual arrays as
// the fused kernels but replay as many small array passes, so they serve as
// the slow, obviously-correct baseline: tests pin the fused kernels and
// their hand-derived adjoints against these, and the kernel benchmark
// reports the speedup of fusion.
//
// Shapes and conventions match the fused ops exactly:
//   oscillator: x, v on n+1 nodes -> residual {2n}, velocity block last
//   diffusion:  u on (nt, nx), periodic x       -> residual {nt-1, nx}
//   rd2d:       u on (nt, ny, nx), periodic     -> residual {nt-1, ny, nx}
//   tumor3d:    u on (nt, nz, ny, nx), no-flux  -> residual {nt-1, nz, ny, nx}

// Elementary ops cannot concatenate arrays, so the two equation blocks stay
// separate; the fused op stacks them as [position; velocity].
struct OscillatorResidualRef {
  Expr position;
  Expr velocity;
};

OscillatorResidualRef oscillator_residual_reference(TapeBuilder& b, Expr x, Expr v, Expr omega2,
                                                    double dt);

Expr diffusion1d_residual_reference(TapeBuilder& b, Expr u, double diffusivity, double dt,
                                    double dx);

Expr rd2d_residual_reference(TapeBuilder& b, Expr u, Expr D, Expr rho, double dt, double dy,
                             double dx);

Expr tumor3d_residual_reference(TapeBuilder& b, Expr u, Expr D, Expr rho, double dt, double dz,
                                double dy, double dx);

} // namespace bodil::ad
