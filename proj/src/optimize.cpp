#include "bodil/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <stdexcept>

#include "bodil/likelihood.hpp"
#include "bodil/rng.hpp"

namespace bodil {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double norm2(std::span<const double> g) {
  double s = 0;
  for (double x : g) s += x * x;
  return std::sqrt(s);
}

bool all_finite(std::span<const double> g) {
  for (double x : g)
    if (!std::isfinite(x)) return false;
  return true;
}

} // namespace

Objective negated_objective(LogPosterior& post) {
  return [&post](std::span<const double> v, std::span<double> g) {
    const double f = post.value_grad(v, g);
    for (double& x : g) x = -x;
    return -f;
  };
}

void OptimizerConfig::validate() const {
  if (max_epochs < 1) throw std::invalid_argument("optimizer: max_epochs must be >= 1");
  if (!(lr_min > 0.0) || !(lr_min <= lr0))
    throw std::invalid_argument("optimizer: need 0 < lr_min <= lr0");
  if (plateau_patience < 1) throw std::invalid_argument("optimizer: patience must be >= 1");
  if (!(plateau_factor > 0.0 && plateau_factor < 1.0))
    throw std::invalid_argument("optimizer: plateau factor must lie in (0, 1)");
  if (grad_tol < 0.0) throw std::invalid_argument("optimizer: grad_tol must not be negative");
}

MinimizeResult minimize_adam(const Objective& f, std::span<const double> v0,
                             const OptimizerConfig& cfg) {
  cfg.validate();
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  const size_t n = v0.size();

  MinimizeResult res;
  res.v.assign(v0.begin(), v0.end());
  std::vector<double> v(v0.begin(), v0.end());
  std::vector<double> g(n, 0.0), m(n, 0.0), w(n, 0.0);
  res.trace.reserve(size_t(cfg.max_epochs) + 1);

  double lr = cfg.lr0;
  int stale = 0;
  double b1t = 1.0, b2t = 1.0; // running beta powers

  for (int epoch = 1; epoch <= cfg.max_epochs + 1; epoch++) {
    const double fv = f(v, g);
    if (!std::isfinite(fv) || !all_finite(g)) {
      res.failed = true;
      res.message = "non-finite objective or gradient at epoch " + std::to_string(epoch) +
                    "; returning the best finite iterate";
      return res;
    }
    const double gn = norm2(g);
    res.trace.push_back({epoch, fv, gn, lr});

    if (fv < res.objective) {
      // plateau detection counts epochs without a meaningful relative gain
      if (res.objective - fv >= 1e-12 * std::max(1.0, std::abs(res.objective)))
        stale = -1; // incremented back to 0 below
      res.objective = fv;
      res.v = v;
    }
    if (++stale >= cfg.plateau_patience) {
      lr = std::max(cfg.lr_min, lr * cfg.plateau_factor);
      stale = 0;
    }
    if (cfg.grad_tol > 0.0 && gn <= cfg.grad_tol) break;
    if (epoch > cfg.max_epochs) break; // final extra evaluation only

    b1t *= beta1;
    b2t *= beta2;
    for (size_t i = 0; i < n; i++) {
      m[i] = beta1 * m[i] + (1 - beta1) * g[i];
      w[i] = beta2 * w[i] + (1 - beta2) * g[i] * g[i];
      const double mhat = m[i] / (1 - b1t);
      const double what = w[i] / (1 - b2t);
      v[i] -= lr * mhat / (std::sqrt(what) + eps);
    }
  }
  return res;
}

namespace {

// strong Wolfe line search (c1 1e-4, c2 0.1) following the usual
// bracket-then-zoom scheme with secant steps on the directional derivative.
// Infinite phi values behave like any too-large value and shrink the
// bracket; NaN aborts. On success x, fx, gx hold the accepted point.
struct LineSearch {
  const Objective& f;
  std::vector<double>& x;
  std::vector<double>& gx;
  double fx;
  bool failed = false;

  const std::vector<double> x0;
  const double f0;
  std::vector<double> dir;
  double dphi0 = 0.0;
  int evals = 0;

  LineSearch(const Objective& fn, std::vector<double>& xv, std::vector<double>& gv, double fv,
             std::span<const double> p)
      : f(fn), x(xv), gx(gv), fx(fv), x0(xv), f0(fv), dir(p.begin(), p.end()) {
    for (size_t i = 0; i < dir.size(); i++) dphi0 += gv[i] * dir[i];
  }

  double phi(double a, double& dphi) {
    for (size_t i = 0; i < x.size(); i++) x[i] = x0[i] + a * dir[i];
    const double v = f(x, gx);
    evals++;
    if (std::isnan(v) || (std::isfinite(v) && !all_finite(gx))) {
      failed = true;
      return v;
    }
    dphi = 0.0;
    if (std::isfinite(v))
      for (size_t i = 0; i < x.size(); i++) dphi += gx[i] * dir[i];
    return v;
  }

  // sufficient-decrease bound with a tolerance for function values whose
  // differences sit below double precision; near the optimum the curvature
  // condition alone certifies the point, and best-seen tracking outside the
  // search bounds any micro-increase this lets through
  double armijo_bound(double a) const {
    return f0 + 1e-4 * a * dphi0 + 1e-12 * std::max(1.0, std::abs(f0));
  }

  // a Wolfe-acceptable point need not be the line minimizer; one secant step
  // on the derivative through 0 and a lands exactly on the minimizer when
  // phi is quadratic, which is what lets full-memory runs finish a quadratic
  // in dim iterations. Kept only when it improves, otherwise the accepted
  // point is restored.
  double polish(double a, double fa, double dphi) {
    fx = fa;
    if (std::abs(dphi) <= 1e-3 * std::abs(dphi0) || dphi == dphi0) return a;
    const double a2 = -dphi0 * a / (dphi - dphi0);
    if (!std::isfinite(a2) || a2 <= 0.0 || a2 > 10.0 * a) return a;
    double dphi2 = 0.0;
    const double fa2 = phi(a2, dphi2);
    if (failed) {
      // the candidate blew up; fall back to the point we already accepted
      failed = false;
      double dtmp;
      phi(a, dtmp);
      return a;
    }
    if (std::isfinite(fa2) && std::abs(dphi2) < std::abs(dphi) && fa2 <= armijo_bound(a2) &&
        fa2 <= fa + 1e-12 * std::max(1.0, std::abs(fa))) {
      fx = fa2;
      return a2;
    }
    double dtmp;
    phi(a, dtmp);
    return a;
  }

  // returns the accepted step length, or 0 when no acceptable point exists
  double run() {
    constexpr double c2 = 0.1;
    double a_prev = 0.0, f_prev = f0, dphi_prev = dphi0;
    double a = 1.0;
    for (int it = 0; it < 20 && !failed; it++) {
      double dphi;
      const double fa = phi(a, dphi);
      if (failed) return 0.0;
      if (fa > armijo_bound(a) || (it > 0 && fa >= f_prev))
        return zoom(a_prev, f_prev, dphi_prev, a, fa, dphi);
      if (std::abs(dphi) <= -c2 * dphi0) return polish(a, fa, dphi);
      if (dphi >= 0.0) return zoom(a, fa, dphi, a_prev, f_prev, dphi_prev);
      a_prev = a;
      f_prev = fa;
      dphi_prev = dphi;
      a *= 2.0;
    }
    restore();
    return 0.0;
  }

  double zoom(double lo, double flo, double dlo, double hi, double fhi, double dhi) {
    constexpr double c2 = 0.1;
    for (int it = 0; it < 40 && !failed; it++) {
      // secant on the derivative, which lands exactly on the minimizer of a
      // quadratic; bisect when an endpoint is non-finite or the step leaves
      // the bracket
      double a = 0.5 * (lo + hi);
      if (std::isfinite(flo) && std::isfinite(fhi) && dhi != dlo) {
        const double sec = lo - dlo * (hi - lo) / (dhi - dlo);
        if (std::isfinite(sec) && sec > std::min(lo, hi) && sec < std::max(lo, hi) && sec != lo &&
            sec != hi)
          a = sec;
      }
      double dphi;
      const double fa = phi(a, dphi);
      if (failed) return 0.0;
      if (fa > armijo_bound(a) || fa >= flo) {
        hi = a;
        fhi = fa;
        dhi = dphi;
      } else {
        if (std::abs(dphi) <= -c2 * dphi0) return polish(a, fa, dphi);
        if (dphi * (hi - lo) >= 0.0) {
          hi = lo;
          fhi = flo;
          dhi = dlo;
        }
        lo = a;
        flo = fa;
        dlo = dphi;
      }
      if (std::abs(hi - lo) < 1e-16 * std::max(1.0, std::abs(lo))) break;
    }
    // no Wolfe point found; keep the lower end if it at least decreases
    if (std::isfinite(flo) && flo < f0 && lo > 0.0) {
      double dphi;
      const double fa = phi(lo, dphi);
      if (!failed && fa <= flo + 1e-12 * std::abs(flo)) {
        fx = fa;
        return lo;
      }
    }
    restore();
    return 0.0;
  }

  void restore() {
    double dphi;
    fx = phi(0.0, dphi);
  }
};

} // namespace

MinimizeResult minimize_lbfgs(const Objective& f, std::span<const double> v0, int memory,
                              int max_iters, double grad_tol) {
  if (memory < 1) throw std::invalid_argument("lbfgs: memory must be >= 1");
  if (max_iters < 1) throw std::invalid_argument("lbfgs: max_iters must be >= 1");
  const size_t n = v0.size();

  MinimizeResult res;
  std::vector<double> v(v0.begin(), v0.end()), g(n, 0.0);
  double fv = f(v, g);
  if (!std::isfinite(fv) || !all_finite(g)) {
    res.failed = true;
    res.message = "non-finite objective at the starting point";
    res.v.assign(v0.begin(), v0.end());
    return res;
  }
  res.v = v;
  res.objective = fv;
  res.trace.push_back({0, fv, norm2(g), 0.0});

  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;
  // per-pair curvature scale; the two-loop seeds with the scale of the
  // oldest retained pair so the implicit initial matrix stays fixed while
  // that pair is in memory, which is what makes full-memory runs land on a
  // quadratic's minimizer within dim iterations
  std::deque<double> gamma_hist;
  std::vector<double> p(n, 0.0), alpha(size_t(memory), 0.0);

  for (int iter = 1; iter <= max_iters; iter++) {
    if (norm2(g) <= grad_tol) break;

    // two-loop recursion
    for (size_t i = 0; i < n; i++) p[i] = -g[i];
    const int k = int(s_hist.size());
    for (int i = k - 1; i >= 0; i--) {
      double a = 0;
      for (size_t j = 0; j < n; j++) a += s_hist[size_t(i)][j] * p[j];
      a *= rho_hist[size_t(i)];
      alpha[size_t(i)] = a;
      for (size_t j = 0; j < n; j++) p[j] -= a * y_hist[size_t(i)][j];
    }
    const double gamma = gamma_hist.empty() ? 1.0 : gamma_hist.front();
    for (size_t j = 0; j < n; j++) p[j] *= gamma;
    for (int i = 0; i < k; i++) {
      double b = 0;
      for (size_t j = 0; j < n; j++) b += y_hist[size_t(i)][j] * p[j];
      b *= rho_hist[size_t(i)];
      for (size_t j = 0; j < n; j++) p[j] += (alpha[size_t(i)] - b) * s_hist[size_t(i)][j];
    }

    double descent = 0;
    for (size_t j = 0; j < n; j++) descent += p[j] * g[j];
    if (!(descent < 0)) {
      // curvature information went bad; restart from steepest descent
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      gamma_hist.clear();
      for (size_t j = 0; j < n; j++) p[j] = -g[j];
    }

    std::vector<double> v_prev = v, g_prev = g;
    const double f_prev = fv;
    LineSearch ls(f, v, g, fv, p);
    const double step = ls.run();
    if (ls.failed) {
      res.failed = true;
      res.message = "non-finite objective in line search at iteration " + std::to_string(iter);
      return res;
    }
    if (step == 0.0) break; // no progress possible along any direction we can build
    fv = ls.fx;

    res.trace.push_back({iter, fv, norm2(g), step});
    if (fv < res.objective) {
      res.objective = fv;
      res.v = v;
    }

    std::vector<double> s(n), y(n);
    double sy = 0, yy = 0;
    for (size_t j = 0; j < n; j++) {
      s[j] = v[j] - v_prev[j];
      y[j] = g[j] - g_prev[j];
      sy += s[j] * y[j];
      yy += y[j] * y[j];
    }
    (void)f_prev;
    if (sy > 1e-10 * std::sqrt(yy) * norm2(s)) {
      if (int(s_hist.size()) == memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
        gamma_hist.pop_front();
      }
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      gamma_hist.push_back(sy / yy);
    }
  }
  return res;
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("trace csv: cannot open " + path);
  std::fprintf(fp, "epoch,objective,grad_norm,lr\n");
  for (const TraceRow& r : trace)
    std::fprintf(fp, "%d,%.17g,%.17g,%.17g\n", r.epoch, r.objective, r.grad_norm, r.lr);
  std::fclose(fp);
}

namespace {

// scatter each observation onto the corners of its grid cell; nodes touched
// by at least one record take the weight-averaged value
void deposit_scattered(const Grid& grid, const Dataset& data, std::span<double> u) {
  std::vector<double> wsum(u.size(), 0.0);
  std::vector<double> vsum(u.size(), 0.0);
  for (size_t k = 0; k < data.values.size(); k++) {
    InterpStencil st = interp_stencil(grid, data.coords[k]);
    for (size_t f = 0; f < st.idx.size(); f++) {
      wsum[size_t(st.idx[f])] += st.w[f];
      vsum[size_t(st.idx[f])] += st.w[f] * data.values[k];
    }
  }
  for (size_t i = 0; i < u.size(); i++)
    if (wsum[i] > 0.0) u[i] = vsum[i] / wsum[i];
}

// label data informs the final time slice: binomial detections enter as
// their 0/1 value, tissue classes as the midpoint of their concentration
// interval
void deposit_final_slice(const ProblemSpec& spec, std::span<double> u) {
  const size_t ns = spec.data.values.size();
  const size_t off = u.size() - ns;
  if (spec.data.kind == LikelihoodKind::Binomial) {
    for (size_t i = 0; i < ns; i++) u[off + i] = spec.data.values[i];
    return;
  }
  const std::vector<TissueClass> cls = spec.data.classes();
  const double lo = spec.tumor_tau_lo.value, hi = spec.tumor_tau_up.value;
  for (size_t i = 0; i < ns; i++) {
    const ClassInterval iv = class_interval(cls[i], lo, hi);
    u[off + i] = 0.5 * (iv.lo + iv.hi);
  }
}

} // namespace

std::vector<double> initial_point(const ProblemSpec& spec, const LogPosterior& post,
                                  uint64_t seed) {
  std::vector<double> v(size_t(post.dim()), 0.0);
  const FlatLayout& layout = post.layout();

  switch (spec.kind) {
    case ProblemKind::Oscillator: {
      const FlatLayout::Block& xb = layout.at("x");
      deposit_scattered(*spec.grid, spec.data,
                        std::span<double>(v).subspan(size_t(xb.offset), size_t(xb.size)));
      break;
    }
    case ProblemKind::Diffusion1d: {
      const FlatLayout::Block& ub = layout.at("u");
      deposit_scattered(*spec.grid, spec.data,
                        std::span<double>(v).subspan(size_t(ub.offset), size_t(ub.size)));
      break;
    }
    case ProblemKind::ReactionDiffusion2d:
    case ProblemKind::Tumor3d: {
      const FlatLayout::Block& ub = layout.at("u");
      deposit_final_slice(spec, std::span<double>(v).subspan(size_t(ub.offset), size_t(ub.size)));
      break;
    }
  }

  // jitter the field blocks; model scalars start exactly where configured
  RngStream rng(seed, StreamPurpose::InitNoise);
  const int64_t field_dim = layout.at(spec.kind == ProblemKind::Oscillator ? "v" : "u").offset +
                            layout.at(spec.kind == ProblemKind::Oscillator ? "v" : "u").size;
  for (int64_t i = 0; i < field_dim; i++) v[size_t(i)] += 1e-3 * rng.normal();

  auto set_raw = [&](const char* name, const AuxParam& p) {
    if (const FlatLayout::Block* b = layout.find(name))
      v[size_t(b->offset)] = LogPosterior::bounded_raw(p.value, p.lo, p.hi);
  };
  set_raw("Dg_raw", spec.tumor_Dg);
  set_raw("Dw_raw", spec.tumor_Dw);
  set_raw("rho_raw", spec.tumor_rho);
  set_raw("tau_lo_raw", spec.tumor_tau_lo);
  set_raw("tau_up_raw", spec.tumor_tau_up);

  if (const FlatLayout::Block* b = layout.find("omega2"))
    v[size_t(b->offset)] = 0.5 * (spec.theta.lo[0] + spec.theta.hi[0]);
  return v;
}

InnerMapResult solve_inner_map(const ProblemSpec& spec, std::span<const double> theta,
                               std::span<const double> warm_start, const InnerMapConfig& cfg) {
  if (!theta.empty() && !spec.theta.contains(theta))
    throw std::invalid_argument("inner map: theta outside the prior box");

  LogPosterior post(spec, theta, cfg.threads);
  Objective obj = negated_objective(post);

  std::vector<double> v0;
  if (!warm_start.empty()) {
    if (int64_t(warm_start.size()) != post.dim())
      throw std::invalid_argument("inner map: warm start arity does not match");
    v0.assign(warm_start.begin(), warm_start.end());
  } else {
    v0 = initial_point(spec, post, cfg.adam.seed);
  }

  InnerMapResult out;
  MinimizeResult coarse = minimize_adam(obj, v0, cfg.adam);
  out.trace = std::move(coarse.trace);
  if (coarse.failed) {
    out.failed = true;
    out.message = coarse.message;
    out.v = std::move(coarse.v);
    out.objective = coarse.objective;
    return out;
  }

  MinimizeResult fine =
      minimize_lbfgs(obj, coarse.v, cfg.lbfgs_memory, cfg.lbfgs_iters, cfg.lbfgs_tol);
  if (fine.failed || fine.objective > coarse.objective) {
    // refinement blew up or went uphill; the Adam result stands
    out.v = std::move(coarse.v);
    out.objective = coarse.objective;
    return out;
  }
  for (const TraceRow& r : fine.trace)
    out.trace.push_back({int(out.trace.size()) + 1, r.objective, r.grad_norm, r.lr});
  out.v = std::move(fine.v);
  out.objective = fine.objective;
  return out;
}

} // namespace bodil
