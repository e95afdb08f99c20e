#pragma once

#include <cmath>

namespace bodil::ad {

// First-order dual number. Evaluating a tape with Dual values propagates a
// directional derivative alongside each value; running the reverse sweep in
// Dual arithmetic then yields Hessian-vector products (forward-over-reverse).
struct Dual {
  double v = 0.0;
  double d = 0.0;

  Dual() = default;
  Dual(double value) : v(value) {} // NOLINT: implicit by design
  Dual(double value, double tangent) : v(value), d(tangent) {}

  Dual& operator+=(const Dual& o) {
    v += o.v;
    d += o.d;
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    d -= o.d;
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    d = d * o.v + v * o.d;
    v *= o.v;
    return *this;
  }
};

inline Dual operator+(Dual a, const Dual& b) { return {a.v + b.v, a.d + b.d}; }
inline Dual operator-(Dual a, const Dual& b) { return {a.v - b.v, a.d - b.d}; }
inline Dual operator-(Dual a) { return {-a.v, -a.d}; }
inline Dual operator*(const Dual& a, const Dual& b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
inline Dual operator/(const Dual& a, const Dual& b) {
  double q = a.v / b.v;
  return {q, (a.d - q * b.d) / b.v};
}

inline Dual exp(const Dual& a) {
  double e = std::exp(a.v);
  return {e, e * a.d};
}
inline Dual log(const Dual& a) { return {std::log(a.v), a.d / a.v}; }
inline Dual sqrt(const Dual& a) {
  double s = std::sqrt(a.v);
  return {s, a.d / (2.0 * s)};
}
inline Dual pow(const Dual& a, double p) {
  return {std::pow(a.v, p), p * std::pow(a.v, p - 1.0) * a.d};
}

// Value accessors usable in code templated over double / Dual.
inline double val(double x) { return x; }
inline double val(const Dual& x) { return x.v; }

// Makes unqualified math calls in templates over double / Dual resolve to
// the std overloads for double instead of converting through Dual.
using std::exp;
using std::log;
using std::pow;
using std::sqrt;

} // namespace bodil::ad
