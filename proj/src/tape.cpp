#include "bodil/ad/tape.hpp"

#include <stdexcept>

namespace bodil::ad {

const char* op_name(Op op) {
  switch (op) {
    case Op::Input: return "input";
    case Op::ConstArray: return "const_array";
    case Op::ConstScalar: return "const_scalar";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Min: return "min";
    case Op::Max: return "max";
    case Op::Neg: return "neg";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sigmoid: return "sigmoid";
    case Op::Sqrt: return "sqrt";
    case Op::Square: return "square";
    case Op::Pow: return "pow";
    case Op::Scale: return "scale";
    case Op::AddConst: return "add_const";
    case Op::SliceT: return "slice_t";
    case Op::TileT: return "tile_t";
    case Op::Shift: return "shift";
    case Op::Gather: return "gather";
    case Op::Sum: return "sum";
    case Op::MeanSq: return "mean_sq";
    case Op::OscRes: return "oscillator_residual";
    case Op::Diff1dRes: return "diffusion1d_residual";
    case Op::Rd2dRes: return "rd2d_residual";
    case Op::Tumor3dRes: return "tumor3d_residual";
  }
  return "?";
}

namespace {

int64_t shape_size(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int s : shape) {
    if (s <= 0) throw std::invalid_argument("tape: non-positive shape entry");
    n *= s;
  }
  return n;
}

} // namespace

int TapeBuilder::push(Node n) {
  n.size = shape_size(n.shape);
  nodes_.push_back(std::move(n));
  return int(nodes_.size()) - 1;
}

const Node& TapeBuilder::node(Expr e) const {
  if (e.id < 0 || e.id >= int(nodes_.size()))
    throw std::invalid_argument("tape: expression does not belong to this builder");
  return nodes_[size_t(e.id)];
}

Expr TapeBuilder::input(const std::string& name, std::vector<int> shape) {
  Node n;
  n.op = Op::Input;
  n.shape = std::move(shape);
  n.label = name;
  n.in_offset = int(input_dim_);
  int id = push(std::move(n));
  InputBlock blk{name, id, int(input_dim_), nodes_[size_t(id)].size};
  input_dim_ += blk.size;
  inputs_.push_back(std::move(blk));
  return {id};
}

Expr TapeBuilder::const_array(std::vector<int> shape, std::vector<double> data) {
  Node n;
  n.op = Op::ConstArray;
  n.shape = std::move(shape);
  if (shape_size(n.shape) != int64_t(data.size()))
    throw std::invalid_argument("tape: const_array data does not match shape");
  n.cdata = std::move(data);
  return {push(std::move(n))};
}

Expr TapeBuilder::constant(double v) {
  Node n;
  n.op = Op::ConstScalar;
  n.attr = v;
  return {push(std::move(n))};
}

Expr TapeBuilder::binary(Op op, Expr a, Expr b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  const bool a_scalar = na.shape.empty();
  const bool b_scalar = nb.shape.empty();
  if (!a_scalar && !b_scalar && na.shape != nb.shape)
    throw std::invalid_argument(std::string("tape: shape mismatch in ") + op_name(op));
  Node n;
  n.op = op;
  n.a = a.id;
  n.b = b.id;
  n.shape = a_scalar ? nb.shape : na.shape;
  return {push(std::move(n))};
}

Expr TapeBuilder::unary(Op op, Expr a, double attr) {
  Node n;
  n.op = op;
  n.a = a.id;
  n.attr = attr;
  n.shape = node(a).shape;
  return {push(std::move(n))};
}

Expr TapeBuilder::add(Expr a, Expr b) { return binary(Op::Add, a, b); }
Expr TapeBuilder::sub(Expr a, Expr b) { return binary(Op::Sub, a, b); }
Expr TapeBuilder::mul(Expr a, Expr b) { return binary(Op::Mul, a, b); }
Expr TapeBuilder::div(Expr a, Expr b) { return binary(Op::Div, a, b); }
Expr TapeBuilder::min(Expr a, Expr b) { return binary(Op::Min, a, b); }
Expr TapeBuilder::max(Expr a, Expr b) { return binary(Op::Max, a, b); }

Expr TapeBuilder::neg(Expr a) { return unary(Op::Neg, a); }
Expr TapeBuilder::exp(Expr a) { return unary(Op::Exp, a); }
Expr TapeBuilder::log(Expr a) { return unary(Op::Log, a); }
Expr TapeBuilder::sigmoid(Expr a) { return unary(Op::Sigmoid, a); }
Expr TapeBuilder::sqrt(Expr a) { return unary(Op::Sqrt, a); }
Expr TapeBuilder::square(Expr a) { return unary(Op::Square, a); }
Expr TapeBuilder::pow(Expr a, double p) { return unary(Op::Pow, a, p); }
Expr TapeBuilder::scale(Expr a, double c) { return unary(Op::Scale, a, c); }
Expr TapeBuilder::add_const(Expr a, double c) { return unary(Op::AddConst, a, c); }

Expr TapeBuilder::slice_t(Expr a, int start, int count) {
  const Node& na = node(a);
  if (na.shape.empty()) throw std::invalid_argument("tape: slice_t needs an array operand");
  int lead = na.shape[0];
  if (start < 0 || count < 1 || start + count > lead)
    throw std::invalid_argument("tape: slice_t range outside leading axis");
  Node n;
  n.op = Op::SliceT;
  n.a = a.id;
  n.iattr0 = start;
  n.iattr1 = count;
  n.shape = na.shape;
  if (count == 1 && na.shape.size() > 1)
    n.shape.erase(n.shape.begin());
  else
    n.shape[0] = count;
  return {push(std::move(n))};
}

Expr TapeBuilder::tile_t(Expr a, int count) {
  const Node& na = node(a);
  if (count < 1) throw std::invalid_argument("tape: tile_t needs a positive count");
  Node n;
  n.op = Op::TileT;
  n.a = a.id;
  n.iattr0 = count;
  n.shape.push_back(count);
  for (int s : na.shape) n.shape.push_back(s);
  return {push(std::move(n))};
}

Expr TapeBuilder::shift(Expr a, int axis, int delta, Bc bc) {
  const Node& na = node(a);
  if (axis < 0 || axis >= int(na.shape.size()))
    throw std::invalid_argument("tape: shift axis out of range");
  if (delta != 1 && delta != -1) throw std::invalid_argument("tape: shift delta must be +-1");
  Node n;
  n.op = Op::Shift;
  n.a = a.id;
  n.iattr0 = axis;
  n.iattr1 = delta;
  n.bc = bc;
  n.shape = na.shape;
  return {push(std::move(n))};
}

Expr TapeBuilder::gather(Expr a, const std::vector<InterpStencil>& stencils) {
  const Node& na = node(a);
  if (stencils.empty()) throw std::invalid_argument("tape: gather needs at least one stencil");
  Node n;
  n.op = Op::Gather;
  n.a = a.id;
  n.grows = int(stencils.size());
  n.gfan = int(stencils[0].idx.size());
  n.gidx.reserve(size_t(n.grows) * n.gfan);
  n.gweight.reserve(size_t(n.grows) * n.gfan);
  for (const InterpStencil& st : stencils) {
    if (int(st.idx.size()) != n.gfan || st.w.size() != st.idx.size())
      throw std::invalid_argument("tape: gather stencils must share fan-in");
    for (size_t f = 0; f < st.idx.size(); f++) {
      if (st.idx[f] < 0 || st.idx[f] >= na.size)
        throw std::invalid_argument("tape: gather index outside operand");
      n.gidx.push_back(st.idx[f]);
      n.gweight.push_back(st.w[f]);
    }
  }
  n.shape = {n.grows};
  return {push(std::move(n))};
}

Expr TapeBuilder::sum(Expr a) {
  Node n;
  n.op = Op::Sum;
  n.a = a.id;
  node(a);
  return {push(std::move(n))};
}

Expr TapeBuilder::mean_sq(Expr a) {
  Node n;
  n.op = Op::MeanSq;
  n.a = a.id;
  node(a);
  return {push(std::move(n))};
}

Expr TapeBuilder::oscillator_residual(Expr x, Expr v, Expr omega2, double dt) {
  const Node& nx = node(x);
  const Node& nv = node(v);
  const Node& nw = node(omega2);
  if (nx.shape.size() != 1 || nx.shape != nv.shape)
    throw std::invalid_argument("tape: oscillator_residual needs matching 1D x and v");
  if (!nw.shape.empty()) throw std::invalid_argument("tape: omega2 must be scalar");
  if (nx.shape[0] < 2) throw std::invalid_argument("tape: oscillator_residual needs >= 2 nodes");
  if (!(dt > 0)) throw std::invalid_argument("tape: oscillator_residual needs dt > 0");
  Node n;
  n.op = Op::OscRes;
  n.a = x.id;
  n.b = v.id;
  n.c = omega2.id;
  n.geom[0] = dt;
  n.shape = {2 * (nx.shape[0] - 1)};
  return {push(std::move(n))};
}

Expr TapeBuilder::diffusion1d_residual(Expr u, double diffusivity, double dt, double dx) {
  const Node& nu = node(u);
  if (nu.shape.size() != 2) throw std::invalid_argument("tape: diffusion1d_residual needs (t,x)");
  if (nu.shape[0] < 2) throw std::invalid_argument("tape: diffusion1d_residual needs >= 2 times");
  if (!(dt > 0) || !(dx > 0)) throw std::invalid_argument("tape: diffusion1d spacings must be positive");
  Node n;
  n.op = Op::Diff1dRes;
  n.a = u.id;
  n.attr = diffusivity;
  n.geom[0] = dt;
  n.geom[3] = dx;
  n.shape = {nu.shape[0] - 1, nu.shape[1]};
  return {push(std::move(n))};
}

Expr TapeBuilder::rd2d_residual(Expr u, Expr D, Expr rho, double dt, double dy, double dx) {
  const Node& nu = node(u);
  const Node& nd = node(D);
  const Node& nr = node(rho);
  if (nu.shape.size() != 3) throw std::invalid_argument("tape: rd2d_residual needs (t,y,x)");
  if (nu.shape[0] < 2) throw std::invalid_argument("tape: rd2d_residual needs >= 2 times");
  if (nd.shape != std::vector<int>{nu.shape[1], nu.shape[2]})
    throw std::invalid_argument("tape: rd2d_residual D must be (y,x)");
  if (!nr.shape.empty()) throw std::invalid_argument("tape: rho must be scalar");
  if (!(dt > 0) || !(dy > 0) || !(dx > 0))
    throw std::invalid_argument("tape: rd2d spacings must be positive");
  Node n;
  n.op = Op::Rd2dRes;
  n.a = u.id;
  n.b = D.id;
  n.c = rho.id;
  n.geom[0] = dt;
  n.geom[2] = dy;
  n.geom[3] = dx;
  n.shape = {nu.shape[0] - 1, nu.shape[1], nu.shape[2]};
  return {push(std::move(n))};
}

Expr TapeBuilder::tumor3d_residual(Expr u, Expr D, Expr rho, double dt, double dz, double dy,
                                   double dx) {
  const Node& nu = node(u);
  const Node& nd = node(D);
  const Node& nr = node(rho);
  if (nu.shape.size() != 4) throw std::invalid_argument("tape: tumor3d_residual needs (t,z,y,x)");
  if (nu.shape[0] < 2) throw std::invalid_argument("tape: tumor3d_residual needs >= 2 times");
  if (nd.shape != std::vector<int>{nu.shape[1], nu.shape[2], nu.shape[3]})
    throw std::invalid_argument("tape: tumor3d_residual D must be (z,y,x)");
  if (!nr.shape.empty()) throw std::invalid_argument("tape: rho must be scalar");
  if (!(dt > 0) || !(dz > 0) || !(dy > 0) || !(dx > 0))
    throw std::invalid_argument("tape: tumor3d spacings must be positive");
  Node n;
  n.op = Op::Tumor3dRes;
  n.a = u.id;
  n.b = D.id;
  n.c = rho.id;
  n.geom[0] = dt;
  n.geom[1] = dz;
  n.geom[2] = dy;
  n.geom[3] = dx;
  n.shape = {nu.shape[0] - 1, nu.shape[1], nu.shape[2], nu.shape[3]};
  return {push(std::move(n))};
}

Expr TapeBuilder::logsigmoid(Expr a) {
  // min(x,0) - log(1 + exp(-|x|)); exact down to the underflow limit and
  // free of overflow for large |x|.
  Expr zero = constant(0.0);
  Expr absx = max(a, neg(a));
  Expr tail = log(add_const(exp(neg(absx)), 1.0));
  return sub(min(a, zero), tail);
}

Expr TapeBuilder::bounded(Expr raw, double lo, double hi) {
  if (!(lo < hi)) throw std::invalid_argument("tape: bounded needs lo < hi");
  return add_const(scale(sigmoid(raw), hi - lo), lo);
}

const std::vector<int>& TapeBuilder::shape_of(Expr e) const { return node(e).shape; }

int64_t TapeBuilder::size_of(Expr e) const { return node(e).size; }

void TapeBuilder::set_output(Expr e) {
  if (node(e).size != 1 || !node(e).shape.empty())
    throw std::invalid_argument("tape: output must be a scalar");
  output_ = e.id;
}

Tape TapeBuilder::take() {
  if (output_ < 0) throw std::logic_error("tape: no output set");
  Tape t;
  t.nodes = std::move(nodes_);
  t.inputs = std::move(inputs_);
  t.output = output_;
  t.input_dim = input_dim_;
  for (size_t i = 0; i < t.nodes.size(); i++) {
    Node& n = t.nodes[i];
    if (n.op == Op::Input) {
      n.needs_grad = true;
    } else {
      auto dep = [&](int id) { return id >= 0 && t.nodes[size_t(id)].needs_grad; };
      n.needs_grad = dep(n.a) || dep(n.b) || dep(n.c);
    }
    if (n.needs_grad) t.grad_nodes.push_back(int(i));
  }
  nodes_.clear();
  inputs_.clear();
  output_ = -1;
  input_dim_ = 0;
  return t;
}

} // namespace bodil::ad
