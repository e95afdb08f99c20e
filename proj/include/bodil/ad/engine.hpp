#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bodil/ad/dual.hpp"
#include "bodil/ad/tape.hpp"
#include "bodil/kernels.hpp"

namespace bodil::ad {

// Raised when a forward or reverse sweep produces a NaN or infinity; carries
// the id of the first offending node for diagnostics.
class NumericError : public std::runtime_error {
public:
  NumericError(int node_id, const std::string& msg) : std::runtime_error(msg), node(node_id) {}
  int node;
};

enum class HessianMode { ForwardOverReverse, FdGradient };

template <class T>
struct Workspace {
  std::vector<std::vector<T>> val;
  std::vector<std::vector<T>> adj;
  std::vector<T> spill_a, spill_b, spill_c; // sinks for unused fused-op adjoints
  bool ready = false;
};

namespace detail {

// Deterministic reduction: fixed-size chunks summed serially, chunk partials
// combined in order. The result is independent of the thread count.
template <class T, class F>
T chunked_sum(int64_t n, int threads, F&& term) {
  constexpr int64_t kChunk = 65536;
  const int64_t chunks = (n + kChunk - 1) / kChunk;
  if (chunks <= 1) {
    T acc(0.0);
    for (int64_t i = 0; i < n; i++) acc += term(i);
    return acc;
  }
  std::vector<T> partial(size_t(chunks), T(0.0));
  BODIL_PAR_FOR(threads, n)
  for (int64_t c = 0; c < chunks; c++) {
    const int64_t begin = c * kChunk;
    const int64_t end = std::min(begin + kChunk, n);
    T acc(0.0);
    for (int64_t i = begin; i < end; i++) acc += term(i);
    partial[size_t(c)] = acc;
  }
  T acc(0.0);
  for (int64_t c = 0; c < chunks; c++) acc += partial[size_t(c)];
  return acc;
}

struct AxisView {
  int64_t stride; // elements per step along the axis
  int64_t n;      // axis length
};

inline AxisView axis_view(const std::vector<int>& shape, int axis) {
  AxisView v{1, shape[size_t(axis)]};
  for (size_t a = size_t(axis) + 1; a < shape.size(); a++) v.stride *= shape[a];
  return v;
}

} // namespace detail

class Evaluator {
public:
  explicit Evaluator(const Tape& tape, int threads = 1)
      : tape_(&tape), threads_(std::max(1, threads)) {}

  int64_t input_dim() const { return tape_->input_dim; }
  int threads() const { return threads_; }
  const Tape& tape() const { return *tape_; }

  double value(std::span<const double> x) {
    forward<double>(x, wsd_);
    return wsd_.val[size_t(tape_->output)][0];
  }

  // Returns the objective value and fills the gradient w.r.t. the flat input.
  double value_grad(std::span<const double> x, std::span<double> grad) {
    forward<double>(x, wsd_);
    reverse<double>(wsd_, grad);
    for (size_t i = 0; i < grad.size(); i++)
      if (!std::isfinite(grad[i])) locate_bad_adjoint(wsd_);
    return wsd_.val[size_t(tape_->output)][0];
  }

  // Hessian-vector product by forward-over-reverse: a Dual forward sweep
  // propagates the direction, the Dual reverse sweep differentiates the
  // gradient along it.
  void hvp(std::span<const double> x, std::span<const double> dir, std::span<double> out) {
    check_dim(x);
    if (dir.size() != x.size() || out.size() != x.size())
      throw std::invalid_argument("hvp: direction/output arity mismatch");
    xdual_.resize(x.size());
    gdual_.assign(x.size(), Dual(0.0));
    for (size_t i = 0; i < x.size(); i++) xdual_[i] = Dual(x[i], dir[i]);
    forward<Dual>(std::span<const Dual>(xdual_), wsq_);
    reverse<Dual>(wsq_, std::span<Dual>(gdual_));
    for (size_t i = 0; i < out.size(); i++) out[i] = gdual_[i].d;
  }

  // Dense row-major Hessian. ForwardOverReverse runs one dual sweep per
  // column; FdGradient central-differences the AD gradient with h = 1e-6.
  // Both symmetrize the result. Guarded by max_dim against accidental use on
  // huge field vectors.
  std::vector<double> hessian(std::span<const double> x, HessianMode mode,
                              int64_t max_dim = 4096) {
    check_dim(x);
    const int64_t d = int64_t(x.size());
    if (d > max_dim)
      throw std::length_error("hessian: dimension " + std::to_string(d) +
                              " exceeds the dense-Hessian guard of " + std::to_string(max_dim));
    std::vector<double> h(size_t(d) * size_t(d), 0.0);
    if (mode == HessianMode::ForwardOverReverse) {
      std::vector<double> dir(size_t(d), 0.0), col(size_t(d), 0.0);
      for (int64_t j = 0; j < d; j++) {
        dir[size_t(j)] = 1.0;
        hvp(x, dir, col);
        dir[size_t(j)] = 0.0;
        for (int64_t i = 0; i < d; i++) h[size_t(i) * size_t(d) + size_t(j)] = col[size_t(i)];
      }
    } else {
      const double step = 1e-6;
      std::vector<double> xp(x.begin(), x.end());
      std::vector<double> gp(size_t(d), 0.0);
      std::vector<double> gm(size_t(d), 0.0);
      for (int64_t j = 0; j < d; j++) {
        xp[size_t(j)] = x[size_t(j)] + step;
        value_grad(xp, gp);
        xp[size_t(j)] = x[size_t(j)] - step;
        value_grad(xp, gm);
        xp[size_t(j)] = x[size_t(j)];
        for (int64_t i = 0; i < d; i++)
          h[size_t(i) * size_t(d) + size_t(j)] = (gp[size_t(i)] - gm[size_t(i)]) / (2.0 * step);
      }
    }
    for (int64_t i = 0; i < d; i++)
      for (int64_t j = i + 1; j < d; j++) {
        double s = 0.5 * (h[size_t(i) * size_t(d) + size_t(j)] + h[size_t(j) * size_t(d) + size_t(i)]);
        h[size_t(i) * size_t(d) + size_t(j)] = s;
        h[size_t(j) * size_t(d) + size_t(i)] = s;
      }
    return h;
  }

  // Value of a scalar node after the latest double-precision forward sweep;
  // lets callers audit individual log-posterior components.
  double node_value(int node) const {
    if (!wsd_.ready || node < 0 || node >= int(wsd_.val.size()))
      throw std::logic_error("node_value: no forward sweep available");
    if (tape_->nodes[size_t(node)].size != 1)
      throw std::invalid_argument("node_value: node is not scalar");
    return wsd_.val[size_t(node)][0];
  }

private:
  void check_dim(std::span<const double> x) const {
    if (int64_t(x.size()) != tape_->input_dim)
      throw std::invalid_argument("evaluator: flat vector has arity " + std::to_string(x.size()) +
                                  ", tape expects " + std::to_string(tape_->input_dim));
  }

  template <class T>
  void ensure(Workspace<T>& ws) {
    if (ws.ready) return;
    const auto& nodes = tape_->nodes;
    ws.val.resize(nodes.size());
    ws.adj.resize(nodes.size());
    for (size_t i = 0; i < nodes.size(); i++) {
      const Node& n = nodes[i];
      ws.val[i].assign(size_t(n.size), T(0.0));
      if (n.needs_grad) ws.adj[i].assign(size_t(n.size), T(0.0));
      if (n.op == Op::ConstScalar) ws.val[i][0] = T(n.attr);
      if (n.op == Op::ConstArray)
        for (size_t k = 0; k < n.cdata.size(); k++) ws.val[i][k] = T(n.cdata[k]);
    }
    ws.ready = true;
  }

  template <class T, class F>
  void map1(const std::vector<T>& a, std::vector<T>& out, F&& f) {
    const int64_t n = int64_t(out.size());
    const int threads = threads_;
    BODIL_PAR_FOR(threads, n)
    for (int64_t i = 0; i < n; i++) out[size_t(i)] = f(a[size_t(i)]);
  }

  template <class T, class F>
  void map2(const std::vector<T>& a, const std::vector<T>& b, std::vector<T>& out, F&& f) {
    const int64_t n = int64_t(out.size());
    const int threads = threads_;
    const bool sa = a.size() == 1 && n > 1, sb = b.size() == 1 && n > 1;
    if (sa) {
      const T av = a[0];
      BODIL_PAR_FOR(threads, n)
      for (int64_t i = 0; i < n; i++) out[size_t(i)] = f(av, b[size_t(i)]);
    } else if (sb) {
      const T bv = b[0];
      BODIL_PAR_FOR(threads, n)
      for (int64_t i = 0; i < n; i++) out[size_t(i)] = f(a[size_t(i)], bv);
    } else {
      BODIL_PAR_FOR(threads, n)
      for (int64_t i = 0; i < n; i++) out[size_t(i)] = f(a[size_t(i)], b[size_t(i)]);
    }
  }

  // Adds contrib(i) over the output extent into an operand adjoint,
  // reducing when the operand is a broadcast scalar.
  template <class T, class F>
  void accum(std::vector<T>& target, int64_t n_out, F&& contrib) {
    if (target.size() == 1 && n_out > 1) {
      target[0] += detail::chunked_sum<T>(n_out, threads_, contrib);
      return;
    }
    const int threads = threads_;
    BODIL_PAR_FOR(threads, n_out)
    for (int64_t i = 0; i < n_out; i++) target[size_t(i)] += contrib(i);
  }

  template <class T>
  void forward(std::span<const T> x, Workspace<T>& ws) {
    if (int64_t(x.size()) != tape_->input_dim)
      throw std::invalid_argument("evaluator: flat vector arity mismatch");
    ensure(ws);
    const auto& nodes = tape_->nodes;
    for (size_t id = 0; id < nodes.size(); id++) {
      const Node& n = nodes[id];
      std::vector<T>& out = ws.val[id];
      const int threads = threads_;
      switch (n.op) {
        case Op::ConstArray:
        case Op::ConstScalar:
          break; // preloaded
        case Op::Input: {
          const int64_t m = n.size;
          BODIL_PAR_FOR(threads, m)
          for (int64_t i = 0; i < m; i++) out[size_t(i)] = x[size_t(n.in_offset + i)];
          break;
        }
        case Op::Add:
          map2(ws.val[size_t(n.a)], ws.val[size_t(n.b)], out, [](T a, T b) { return a + b; });
          break;
        case Op::Sub:
          map2(ws.val[size_t(n.a)], ws.val[size_t(n.b)], out, [](T a, T b) { return a - b; });
          break;
        case Op::Mul:
          map2(ws.val[size_t(n.a)], ws.val[size_t(n.b)], out, [](T a, T b) { return a * b; });
          break;
        case Op::Div:
          map2(ws.val[size_t(n.a)], ws.val[size_t(n.b)], out, [](T a, T b) { return a / b; });
          break;
        case Op::Min:
          map2(ws.val[size_t(n.a)], ws.val[size_t(n.b)], out,
               [](T a, T b) { return val(a) <= val(b) ? a : b; });
          break;
        case Op::Max:
          map2(ws.val[size_t(n.a)], ws.val[size_t(n.b)], out,
               [](T a, T b) { return val(a) >= val(b) ? a : b; });
          break;
        case Op::Neg:
          map1(ws.val[size_t(n.a)], out, [](T a) { return -a; });
          break;
        case Op::Exp:
          map1(ws.val[size_t(n.a)], out, [](T a) { return exp(a); });
          break;
        case Op::Log:
          map1(ws.val[size_t(n.a)], out, [](T a) { return log(a); });
          break;
        case Op::Sigmoid:
          map1(ws.val[size_t(n.a)], out, [](T a) { return kernels::sigmoid(a); });
          break;
        case Op::Sqrt:
          map1(ws.val[size_t(n.a)], out, [](T a) { return sqrt(a); });
          break;
        case Op::Square:
          map1(ws.val[size_t(n.a)], out, [](T a) { return a * a; });
          break;
        case Op::Pow: {
          const double p = n.attr;
          map1(ws.val[size_t(n.a)], out, [p](T a) { return pow(a, p); });
          break;
        }
        case Op::Scale: {
          const T c(n.attr);
          map1(ws.val[size_t(n.a)], out, [c](T a) { return c * a; });
          break;
        }
        case Op::AddConst: {
          const T c(n.attr);
          map1(ws.val[size_t(n.a)], out, [c](T a) { return a + c; });
          break;
        }
        case Op::SliceT: {
          const std::vector<T>& in = ws.val[size_t(n.a)];
          const int64_t row = tape_->nodes[size_t(n.a)].size / tape_->nodes[size_t(n.a)].shape[0];
          const int64_t off = int64_t(n.iattr0) * row;
          const int64_t m = n.size;
          BODIL_PAR_FOR(threads, m)
          for (int64_t i = 0; i < m; i++) out[size_t(i)] = in[size_t(off + i)];
          break;
        }
        case Op::TileT: {
          const std::vector<T>& in = ws.val[size_t(n.a)];
          const int64_t m = int64_t(in.size());
          const int64_t reps = n.iattr0;
          const int64_t total = n.size;
          BODIL_PAR_FOR(threads, total)
          for (int64_t r = 0; r < reps; r++)
            for (int64_t i = 0; i < m; i++) out[size_t(r * m + i)] = in[size_t(i)];
          break;
        }
        case Op::Shift: {
          const std::vector<T>& in = ws.val[size_t(n.a)];
          const auto view = detail::axis_view(n.shape, n.iattr0);
          const int64_t m = n.size, stride = view.stride, len = view.n;
          const int delta = n.iattr1;
          const bool periodic = n.bc == Bc::Periodic;
          BODIL_PAR_FOR(threads, m)
          for (int64_t i = 0; i < m; i++) {
            const int64_t mid = (i / stride) % len;
            int64_t src = mid + delta;
            if (periodic) {
              if (src < 0) src += len;
              if (src >= len) src -= len;
            } else {
              if (src < 0) src = 0;
              if (src >= len) src = len - 1;
            }
            out[size_t(i)] = in[size_t(i + (src - mid) * stride)];
          }
          break;
        }
        case Op::Gather: {
          const std::vector<T>& in = ws.val[size_t(n.a)];
          const int64_t rows = n.grows, fan = n.gfan;
          BODIL_PAR_FOR(threads, rows * fan)
          for (int64_t r = 0; r < rows; r++) {
            T acc(0.0);
            for (int64_t f = 0; f < fan; f++)
              acc += T(n.gweight[size_t(r * fan + f)]) * in[size_t(n.gidx[size_t(r * fan + f)])];
            out[size_t(r)] = acc;
          }
          break;
        }
        case Op::Sum: {
          const std::vector<T>& in = ws.val[size_t(n.a)];
          out[0] = detail::chunked_sum<T>(int64_t(in.size()), threads_,
                                          [&](int64_t i) { return in[size_t(i)]; });
          break;
        }
        case Op::MeanSq: {
          const std::vector<T>& in = ws.val[size_t(n.a)];
          const int64_t m = int64_t(in.size());
          out[0] = detail::chunked_sum<T>(m, threads_, [&](int64_t i) {
            return in[size_t(i)] * in[size_t(i)];
          }) * T(1.0 / double(m));
          break;
        }
        case Op::OscRes: {
          const int nn = (n.shape[0]) / 2;
          kernels::oscillator_residual(nn, n.geom[0], ws.val[size_t(n.a)].data(),
                                       ws.val[size_t(n.b)].data(), ws.val[size_t(n.c)][0],
                                       out.data());
          break;
        }
        case Op::Diff1dRes: {
          kernels::diffusion1d_residual(n.shape[0] + 1, n.shape[1], n.geom[0], n.geom[3], n.attr,
                                        ws.val[size_t(n.a)].data(), out.data(), threads_);
          break;
        }
        case Op::Rd2dRes: {
          kernels::rd2d_residual(n.shape[0] + 1, n.shape[1], n.shape[2], n.geom[0], n.geom[2],
                                 n.geom[3], ws.val[size_t(n.a)].data(), ws.val[size_t(n.b)].data(),
                                 ws.val[size_t(n.c)][0], out.data(), threads_);
          break;
        }
        case Op::Tumor3dRes: {
          kernels::TumorDims g{n.shape[0] + 1, n.shape[1],  n.shape[2], n.shape[3],
                               n.geom[0],      n.geom[1],   n.geom[2],  n.geom[3]};
          kernels::tumor3d_residual(g, ws.val[size_t(n.a)].data(), ws.val[size_t(n.b)].data(),
                                    ws.val[size_t(n.c)][0], out.data(), threads_);
          break;
        }
      }
    }
    if (!std::isfinite(val(ws.val[size_t(tape_->output)][0]))) locate_bad_value(ws);
  }

  template <class T>
  void reverse(Workspace<T>& ws, std::span<T> grad) {
    const auto& nodes = tape_->nodes;
    if (int64_t(grad.size()) != tape_->input_dim)
      throw std::invalid_argument("evaluator: gradient arity mismatch");
    for (int id : tape_->grad_nodes) {
      std::vector<T>& a = ws.adj[size_t(id)];
      std::fill(a.begin(), a.end(), T(0.0));
    }
    if (!nodes[size_t(tape_->output)].needs_grad) {
      std::fill(grad.begin(), grad.end(), T(0.0));
      return;
    }
    ws.adj[size_t(tape_->output)][0] = T(1.0);

    for (auto it = tape_->grad_nodes.rbegin(); it != tape_->grad_nodes.rend(); ++it) {
      const int id = *it;
      const Node& n = nodes[size_t(id)];
      const std::vector<T>& g = ws.adj[size_t(id)];
      const int64_t m = n.size;
      auto wants = [&](int opnd) { return opnd >= 0 && nodes[size_t(opnd)].needs_grad; };
      switch (n.op) {
        case Op::Input:
        case Op::ConstArray:
        case Op::ConstScalar:
          break;
        case Op::Add: {
          if (wants(n.a)) accum(ws.adj[size_t(n.a)], m, [&](int64_t i) { return g[size_t(i)]; });
          if (wants(n.b)) accum(ws.adj[size_t(n.b)], m, [&](int64_t i) { return g[size_t(i)]; });
          break;
        }
        case Op::Sub: {
          if (wants(n.a)) accum(ws.adj[size_t(n.a)], m, [&](int64_t i) { return g[size_t(i)]; });
          if (wants(n.b)) accum(ws.adj[size_t(n.b)], m, [&](int64_t i) { return -g[size_t(i)]; });
          break;
        }
        case Op::Mul: {
          const auto& av = ws.val[size_t(n.a)];
          const auto& bv = ws.val[size_t(n.b)];
          const bool sa = av.size() == 1 && m > 1, sb = bv.size() == 1 && m > 1;
          if (wants(n.a))
            accum(ws.adj[size_t(n.a)], m,
                  [&](int64_t i) { return g[size_t(i)] * bv[size_t(sb ? 0 : i)]; });
          if (wants(n.b))
            accum(ws.adj[size_t(n.b)], m,
                  [&](int64_t i) { return g[size_t(i)] * av[size_t(sa ? 0 : i)]; });
          break;
        }
        case Op::Div: {
          const auto& bv = ws.val[size_t(n.b)];
          const auto& ov = ws.val[size_t(id)];
          const bool sb = bv.size() == 1 && m > 1;
          if (wants(n.a))
            accum(ws.adj[size_t(n.a)], m,
                  [&](int64_t i) { return g[size_t(i)] / bv[size_t(sb ? 0 : i)]; });
          if (wants(n.b))
            accum(ws.adj[size_t(n.b)], m, [&](int64_t i) {
              return -g[size_t(i)] * ov[size_t(i)] / bv[size_t(sb ? 0 : i)];
            });
          break;
        }
        case Op::Min:
        case Op::Max: {
          const auto& av = ws.val[size_t(n.a)];
          const auto& bv = ws.val[size_t(n.b)];
          const bool sa = av.size() == 1 && m > 1, sb = bv.size() == 1 && m > 1;
          const bool is_min = n.op == Op::Min;
          auto first_wins = [&](int64_t i) {
            const double x = val(av[size_t(sa ? 0 : i)]);
            const double y = val(bv[size_t(sb ? 0 : i)]);
            return is_min ? x <= y : x >= y; // ties route to the first argument
          };
          if (wants(n.a))
            accum(ws.adj[size_t(n.a)], m,
                  [&](int64_t i) { return first_wins(i) ? g[size_t(i)] : T(0.0); });
          if (wants(n.b))
            accum(ws.adj[size_t(n.b)], m,
                  [&](int64_t i) { return first_wins(i) ? T(0.0) : g[size_t(i)]; });
          break;
        }
        case Op::Neg:
          accum(ws.adj[size_t(n.a)], m, [&](int64_t i) { return -g[size_t(i)]; });
          break;
        case Op::Exp: {
          const auto& ov = ws.val[size_t(id)];
          accum(ws.adj[size_t(n.a)], m,
                [&](int64_t i) { return g[size_t(i)] * ov[size_t(i)]; });
          break;
        }
        case Op::Log: {
          const auto& av = ws.val[size_t(n.a)];
          accum(ws.adj[size_t(n.a)], m,
                [&](int64_t i) { return g[size_t(i)] / av[size_t(i)]; });
          break;
        }
        case Op::Sigmoid: {
          const auto& ov = ws.val[size_t(id)];
          accum(ws.adj[size_t(n.a)], m, [&](int64_t i) {
            return g[size_t(i)] * ov[size_t(i)] * (T(1.0) - ov[size_t(i)]);
          });
          break;
        }
        case Op::Sqrt: {
          const auto& ov = ws.val[size_t(id)];
          accum(ws.adj[size_t(n.a)], m,
                [&](int64_t i) { return g[size_t(i)] / (T(2.0) * ov[size_t(i)]); });
          break;
        }
        case Op::Square: {
          const auto& av = ws.val[size_t(n.a)];
          accum(ws.adj[size_t(n.a)], m,
                [&](int64_t i) { return T(2.0) * av[size_t(i)] * g[size_t(i)]; });
          break;
        }
        case Op::Pow: {
          const auto& av = ws.val[size_t(n.a)];
          const double p = n.attr;
          accum(ws.adj[size_t(n.a)], m, [&](int64_t i) {
            return T(p) * pow(av[size_t(i)], p - 1.0) * g[size_t(i)];
          });
          break;
        }
        case Op::Scale: {
          const T c(n.attr);
          accum(ws.adj[size_t(n.a)], m, [&](int64_t i) { return c * g[size_t(i)]; });
          break;
        }
        case Op::AddConst:
          accum(ws.adj[size_t(n.a)], m, [&](int64_t i) { return g[size_t(i)]; });
          break;
        case Op::SliceT: {
          std::vector<T>& ain = ws.adj[size_t(n.a)];
          const int64_t row = nodes[size_t(n.a)].size / nodes[size_t(n.a)].shape[0];
          const int64_t off = int64_t(n.iattr0) * row;
          const int threads = threads_;
          BODIL_PAR_FOR(threads, m)
          for (int64_t i = 0; i < m; i++) ain[size_t(off + i)] += g[size_t(i)];
          break;
        }
        case Op::TileT: {
          std::vector<T>& ain = ws.adj[size_t(n.a)];
          const int64_t inner = nodes[size_t(n.a)].size;
          const int64_t reps = n.iattr0;
          const int threads = threads_;
          BODIL_PAR_FOR(threads, inner)
          for (int64_t i = 0; i < inner; i++) {
            T acc(0.0);
            for (int64_t r = 0; r < reps; r++) acc += g[size_t(r * inner + i)];
            ain[size_t(i)] += acc;
          }
          break;
        }
        case Op::Shift: {
          std::vector<T>& ain = ws.adj[size_t(n.a)];
          const auto view = detail::axis_view(n.shape, n.iattr0);
          const int64_t stride = view.stride, len = view.n;
          const int delta = n.iattr1;
          const bool periodic = n.bc == Bc::Periodic;
          const int threads = threads_;
          // Gather form of the scatter transpose: each input element collects
          // the adjoints of every output that read it.
          BODIL_PAR_FOR(threads, m)
          for (int64_t i = 0; i < m; i++) {
            const int64_t mid = (i / stride) % len;
            T acc(0.0);
            if (periodic) {
              int64_t src = mid - delta;
              if (src < 0) src += len;
              if (src >= len) src -= len;
              acc = g[size_t(i + (src - mid) * stride)];
            } else {
              const int64_t lo = mid - delta;
              if (lo >= 0 && lo < len) acc += g[size_t(i + (lo - mid) * stride)];
              if (delta == 1 && mid == len - 1) acc += g[size_t(i)];
              if (delta == -1 && mid == 0) acc += g[size_t(i)];
            }
            ain[size_t(i)] += acc;
          }
          break;
        }
        case Op::Gather: {
          std::vector<T>& ain = ws.adj[size_t(n.a)];
          // Rows may share grid nodes, so the scatter stays serial; stencil
          // row counts are observation counts and stay small.
          for (int64_t r = 0; r < n.grows; r++)
            for (int64_t f = 0; f < n.gfan; f++)
              ain[size_t(n.gidx[size_t(r * n.gfan + f)])] +=
                  T(n.gweight[size_t(r * n.gfan + f)]) * g[size_t(r)];
          break;
        }
        case Op::Sum: {
          const T g0 = g[0];
          accum(ws.adj[size_t(n.a)], nodes[size_t(n.a)].size, [&](int64_t) { return g0; });
          break;
        }
        case Op::MeanSq: {
          const auto& av = ws.val[size_t(n.a)];
          const int64_t in_n = nodes[size_t(n.a)].size;
          const T c = g[0] * T(2.0 / double(in_n));
          accum(ws.adj[size_t(n.a)], in_n,
                [&](int64_t i) { return c * av[size_t(i)]; });
          break;
        }
        case Op::OscRes: {
          const int nn = n.shape[0] / 2;
          auto sink = [&](std::vector<T>& spill, int opnd) -> T* {
            if (wants(opnd)) return ws.adj[size_t(opnd)].data();
            spill.assign(size_t(nodes[size_t(opnd)].size), T(0.0));
            return spill.data();
          };
          kernels::oscillator_residual_adjoint(
              nn, n.geom[0], ws.val[size_t(n.a)].data(), ws.val[size_t(n.b)].data(),
              ws.val[size_t(n.c)][0], g.data(), sink(ws.spill_a, n.a), sink(ws.spill_b, n.b),
              sink(ws.spill_c, n.c));
          break;
        }
        case Op::Diff1dRes: {
          if (wants(n.a))
            kernels::diffusion1d_residual_adjoint(n.shape[0] + 1, n.shape[1], n.geom[0], n.geom[3],
                                                  n.attr, g.data(), ws.adj[size_t(n.a)].data(),
                                                  threads_);
          break;
        }
        case Op::Rd2dRes: {
          if (wants(n.b) || wants(n.c))
            throw std::logic_error(
                "reaction-diffusion stencil: gradients w.r.t. D/rho are not implemented");
          if (wants(n.a))
            kernels::rd2d_residual_adjoint_u(n.shape[0] + 1, n.shape[1], n.shape[2], n.geom[0],
                                             n.geom[2], n.geom[3], ws.val[size_t(n.a)].data(),
                                             ws.val[size_t(n.b)].data(), ws.val[size_t(n.c)][0],
                                             g.data(), ws.adj[size_t(n.a)].data(), threads_);
          break;
        }
        case Op::Tumor3dRes: {
          kernels::TumorDims gd{n.shape[0] + 1, n.shape[1], n.shape[2], n.shape[3],
                                n.geom[0],      n.geom[1],  n.geom[2],  n.geom[3]};
          if (wants(n.a))
            kernels::tumor3d_residual_adjoint_u(gd, ws.val[size_t(n.a)].data(),
                                                ws.val[size_t(n.b)].data(), ws.val[size_t(n.c)][0],
                                                g.data(), ws.adj[size_t(n.a)].data(), threads_);
          if (wants(n.b))
            kernels::tumor3d_residual_adjoint_D(gd, ws.val[size_t(n.a)].data(), g.data(),
                                                ws.adj[size_t(n.b)].data(), threads_);
          if (wants(n.c))
            kernels::tumor3d_residual_adjoint_rho(gd, ws.val[size_t(n.a)].data(), g.data(),
                                                  &ws.adj[size_t(n.c)][0]);
          break;
        }
      }
    }

    for (const InputBlock& blk : tape_->inputs) {
      const std::vector<T>& a = ws.adj[size_t(blk.node)];
      for (int64_t i = 0; i < blk.size; i++) grad[size_t(blk.offset + i)] = a[size_t(i)];
    }
  }

  template <class T>
  [[noreturn]] void locate_bad_value(Workspace<T>& ws) const {
    for (size_t id = 0; id < tape_->nodes.size(); id++)
      for (const T& v : ws.val[id])
        if (!std::isfinite(val(v)))
          throw NumericError(int(id), std::string("non-finite value in forward pass at node ") +
                                          std::to_string(id) + " (" +
                                          op_name(tape_->nodes[id].op) + ")");
    throw NumericError(tape_->output, "non-finite objective value");
  }

  template <class T>
  [[noreturn]] void locate_bad_adjoint(Workspace<T>& ws) const {
    for (auto it = tape_->grad_nodes.rbegin(); it != tape_->grad_nodes.rend(); ++it)
      for (const T& v : ws.adj[size_t(*it)])
        if (!std::isfinite(val(v)))
          throw NumericError(*it, std::string("non-finite adjoint in reverse pass at node ") +
                                      std::to_string(*it) + " (" +
                                      op_name(tape_->nodes[size_t(*it)].op) + ")");
    throw NumericError(tape_->output, "non-finite gradient");
  }

  const Tape* tape_;
  int threads_;
  Workspace<double> wsd_;
  Workspace<Dual> wsq_;
  std::vector<Dual> xdual_, gdual_;
};

// One-shot conveniences for tests and small call sites.
inline double eval(const Tape& tape, std::span<const double> x, int threads = 1) {
  Evaluator ev(tape, threads);
  return ev.value(x);
}

struct GradResult {
  double value = 0.0;
  std::vector<double> grad;
};

inline GradResult gradient(const Tape& tape, std::span<const double> x, int threads = 1) {
  Evaluator ev(tape, threads);
  GradResult r;
  r.grad.assign(x.size(), 0.0);
  r.value = ev.value_grad(x, r.grad);
  return r;
}

inline std::vector<double> hessian(const Tape& tape, std::span<const double> x,
                                   HessianMode mode = HessianMode::ForwardOverReverse,
                                   int threads = 1, int64_t max_dim = 4096) {
  Evaluator ev(tape, threads);
  return ev.hessian(x, mode, max_dim);
}

} // namespace bodil::ad
