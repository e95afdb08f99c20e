#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bodil/grid.hpp"

namespace bodil::ad {

// A tape is a topologically ordered program of array-valued operations with
// a single scalar output. It is recorded once per problem structure and then
// replayed with different inputs; replay never allocates or records.
//
// Elementary operations follow broadcasting between equal shapes and
// scalars. The four *Res operations are fused stencil kernels for the heavy
// PDE residuals; tests pin them against compositions of elementary ops.

enum class Op : uint8_t {
  Input,
  ConstArray,
  ConstScalar,
  // elementwise, scalar-broadcast binary
  Add,
  Sub,
  Mul,
  Div,
  Min, // tie gives the derivative to the first argument
  Max, // tie gives the derivative to the first argument
  // elementwise unary
  Neg,
  Exp,
  Log,
  Sigmoid,
  Sqrt,
  Square,
  Pow,      // attr = exponent
  Scale,    // attr * a
  AddConst, // a + attr
  // structure
  SliceT, // leading-axis slice [start, start+count)
  TileT,  // repeat along a new leading axis, count times
  Shift,  // +-1 along an axis; periodic wrap or clamped (mirror ghost)
  Gather, // sparse weighted gather (interpolation stencils)
  // reductions to scalar
  Sum,
  MeanSq, // sum of squares / element count
  // fused residual stencils
  OscRes,
  Diff1dRes,
  Rd2dRes,
  Tumor3dRes,
};

const char* op_name(Op op);

enum class Bc : uint8_t { Periodic, Clamp };

struct Node {
  Op op = Op::ConstScalar;
  int a = -1, b = -1, c = -1; // operand node ids
  std::vector<int> shape;     // empty = scalar
  int64_t size = 1;
  double attr = 0.0;
  int iattr0 = 0, iattr1 = 0; // slice start/count, shift axis/delta, tile count
  Bc bc = Bc::Periodic;
  std::vector<double> cdata;   // ConstArray payload
  std::vector<int64_t> gidx;   // Gather: row-major [rows x fan] indices
  std::vector<double> gweight; // Gather: matching weights
  int grows = 0, gfan = 0;
  double geom[4] = {0, 0, 0, 0}; // fused kernels: dt, dz, dy, dx (tail-aligned)
  bool needs_grad = false;
  std::string label;  // inputs only
  int in_offset = -1; // inputs only: offset into the flat vector
};

struct InputBlock {
  std::string name;
  int node = -1;
  int offset = 0;
  int64_t size = 0;
};

struct Tape {
  std::vector<Node> nodes;
  std::vector<InputBlock> inputs;
  std::vector<int> grad_nodes; // ids with needs_grad, ascending
  int output = -1;
  int64_t input_dim = 0;

  const Node& out_node() const { return nodes[size_t(output)]; }
};

struct Expr {
  int id = -1;
};

class TapeBuilder {
public:
  Expr input(const std::string& name, std::vector<int> shape);
  Expr const_array(std::vector<int> shape, std::vector<double> data);
  Expr constant(double v);

  Expr add(Expr a, Expr b);
  Expr sub(Expr a, Expr b);
  Expr mul(Expr a, Expr b);
  Expr div(Expr a, Expr b);
  Expr min(Expr a, Expr b);
  Expr max(Expr a, Expr b);

  Expr neg(Expr a);
  Expr exp(Expr a);
  Expr log(Expr a);
  Expr sigmoid(Expr a);
  Expr sqrt(Expr a);
  Expr square(Expr a);
  Expr pow(Expr a, double p);
  Expr scale(Expr a, double c);
  Expr add_const(Expr a, double c);

  Expr slice_t(Expr a, int start, int count);
  Expr tile_t(Expr a, int count);
  Expr shift(Expr a, int axis, int delta, Bc bc);
  Expr gather(Expr a, const std::vector<InterpStencil>& stencils);

  Expr sum(Expr a);
  Expr mean_sq(Expr a);

  Expr oscillator_residual(Expr x, Expr v, Expr omega2, double dt);
  Expr diffusion1d_residual(Expr u, double diffusivity, double dt, double dx);
  Expr rd2d_residual(Expr u, Expr D, Expr rho, double dt, double dy, double dx);
  Expr tumor3d_residual(Expr u, Expr D, Expr rho, double dt, double dz, double dy, double dx);

  // log(sigmoid(x)) composed from elementary ops; exact for large |x| where
  // materializing the probability first would round to 0 or 1.
  Expr logsigmoid(Expr a);
  // lo + (hi-lo)*sigmoid(raw): box-constrained reparameterization.
  Expr bounded(Expr raw, double lo, double hi);

  const std::vector<int>& shape_of(Expr e) const;
  int64_t size_of(Expr e) const;

  void set_output(Expr e);

  // Validates, computes needs_grad reachability, and returns the finished
  // tape. The builder is left empty.
  Tape take();

private:
  int push(Node n);
  const Node& node(Expr e) const;
  Expr binary(Op op, Expr a, Expr b);
  Expr unary(Op op, Expr a, double attr = 0.0);

  std::vector<Node> nodes_;
  std::vector<InputBlock> inputs_;
  int output_ = -1;
  int64_t input_dim_ = 0;
};

} // namespace bodil::ad
