#include "bodil/likelihood.hpp"

#include <cmath>
#include <stdexcept>

namespace bodil {

namespace {

constexpr double kTwoPi = 6.283185307179586476925287;

void check_sigma(double sigma) {
  if (!(sigma > 0)) throw std::invalid_argument("likelihood: sigma must be > 0");
}

std::vector<double> class_masks(const std::vector<TissueClass>& cls, TissueClass which) {
  std::vector<double> m(cls.size(), 0.0);
  for (size_t i = 0; i < cls.size(); i++)
    if (cls[i] == which) m[i] = 1.0;
  return m;
}

} // namespace

ClassInterval class_interval(TissueClass c, double tau_lo, double tau_up) {
  switch (c) {
    case TissueClass::Healthy: return {0.0, tau_lo};
    case TissueClass::Glioma: return {tau_lo, tau_up};
    case TissueClass::Necrotic: return {tau_up, 1.0};
  }
  throw std::invalid_argument("class_interval: unknown class");
}

double log_sigmoid(double a) {
  return a < 0 ? a - std::log1p(std::exp(a)) : -std::log1p(std::exp(-a));
}

double gaussian_loglike(std::span<const double> y, std::span<const double> h, double sigma) {
  check_sigma(sigma);
  if (y.size() != h.size())
    throw std::invalid_argument("gaussian_loglike: observation/prediction size mismatch");
  double s = 0.0;
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (size_t k = 0; k < y.size(); k++) {
    const double r = y[k] - h[k];
    s -= r * r * inv;
  }
  return s + gaussian_loglike_constant(y.size(), sigma);
}

double gaussian_loglike_constant(size_t n, double sigma) {
  check_sigma(sigma);
  return -0.5 * double(n) * std::log(kTwoPi * sigma * sigma);
}

double binomial_loglike(std::span<const double> y, std::span<const double> u, double tau,
                        double sigma) {
  check_sigma(sigma);
  if (y.size() != u.size())
    throw std::invalid_argument("binomial_loglike: label/field size mismatch");
  double s = 0.0;
  for (size_t k = 0; k < y.size(); k++) {
    if (y[k] != 0.0 && y[k] != 1.0)
      throw std::invalid_argument("binomial_loglike: labels must be 0 or 1");
    const double x = (u[k] - tau) / sigma;
    s += log_sigmoid(y[k] == 1.0 ? x : -x);
  }
  return s;
}

double hinge_loglike(std::span<const double> u, std::span<const TissueClass> cls, double tau_lo,
                     double tau_up, double sigma) {
  check_sigma(sigma);
  if (u.size() != cls.size())
    throw std::invalid_argument("hinge_loglike: label/field size mismatch");
  double s = 0.0;
  for (size_t k = 0; k < u.size(); k++) {
    const ClassInterval iv = class_interval(cls[k], tau_lo, tau_up);
    s += std::min(u[k] - iv.lo, 0.0) + std::min(0.0, iv.hi - u[k]);
  }
  return s / sigma;
}

double smooth_loglike(std::span<const double> u, std::span<const TissueClass> cls, double tau_lo,
                      double tau_up, double sigma) {
  check_sigma(sigma);
  if (u.size() != cls.size())
    throw std::invalid_argument("smooth_loglike: label/field size mismatch");
  double s = 0.0;
  for (size_t k = 0; k < u.size(); k++) {
    const double a = (u[k] - tau_lo) / sigma;
    const double b = (u[k] - tau_up) / sigma;
    double logp;
    switch (cls[k]) {
      case TissueClass::Healthy: logp = log_sigmoid(-a); break;
      case TissueClass::Glioma: logp = log_sigmoid(a) + log_sigmoid(-b); break;
      case TissueClass::Necrotic: logp = log_sigmoid(b); break;
      default: throw std::invalid_argument("smooth_loglike: unknown class");
    }
    const double sb = 1.0 / (1.0 + std::exp(-b));
    const double sna = 1.0 / (1.0 + std::exp(a));
    s += logp - std::log1p(sb * sna);
  }
  return s;
}

namespace tapeops {

ad::Expr gaussian_loglike(ad::TapeBuilder& b, ad::Expr h, const std::vector<double>& y,
                          double sigma) {
  check_sigma(sigma);
  if (size_t(b.size_of(h)) != y.size())
    throw std::invalid_argument("gaussian_loglike: observation/prediction size mismatch");
  std::vector<int> shape = b.shape_of(h);
  ad::Expr r = b.sub(b.const_array(shape, y), h);
  ad::Expr misfit = b.scale(b.sum(b.square(r)), -1.0 / (2.0 * sigma * sigma));
  return b.add_const(misfit, gaussian_loglike_constant(y.size(), sigma));
}

ad::Expr binomial_loglike(ad::TapeBuilder& b, ad::Expr u_final, const std::vector<double>& y,
                          double tau, double sigma) {
  check_sigma(sigma);
  if (size_t(b.size_of(u_final)) != y.size())
    throw std::invalid_argument("binomial_loglike: label/field size mismatch");
  // y log S(x) + (1-y) log S(-x) = log S((2y-1) x)
  std::vector<double> sign(y.size());
  for (size_t k = 0; k < y.size(); k++) {
    if (y[k] != 0.0 && y[k] != 1.0)
      throw std::invalid_argument("binomial_loglike: labels must be 0 or 1");
    sign[k] = 2.0 * y[k] - 1.0;
  }
  ad::Expr x = b.scale(b.add_const(u_final, -tau), 1.0 / sigma);
  return b.sum(b.logsigmoid(b.mul(x, b.const_array(b.shape_of(u_final), std::move(sign)))));
}

ad::Expr hinge_loglike(ad::TapeBuilder& b, ad::Expr u_final, const std::vector<TissueClass>& cls,
                       ad::Expr tau_lo, ad::Expr tau_up, double sigma) {
  check_sigma(sigma);
  if (size_t(b.size_of(u_final)) != cls.size())
    throw std::invalid_argument("hinge_loglike: label/field size mismatch");
  std::vector<int> shape = b.shape_of(u_final);
  ad::Expr m_h = b.const_array(shape, class_masks(cls, TissueClass::Healthy));
  ad::Expr m_g = b.const_array(shape, class_masks(cls, TissueClass::Glioma));
  ad::Expr m_n = b.const_array(shape, class_masks(cls, TissueClass::Necrotic));
  // per-voxel interval bounds assembled from the class masks (healthy lo is 0,
  // necrotic hi is 1)
  ad::Expr lo = b.add(b.mul(m_g, tau_lo), b.mul(m_n, tau_up));
  ad::Expr hi = b.add(b.add(b.mul(m_h, tau_lo), b.mul(m_g, tau_up)), m_n);
  ad::Expr zero = b.constant(0.0);
  ad::Expr pen = b.add(b.min(b.sub(u_final, lo), zero), b.min(zero, b.sub(hi, u_final)));
  return b.scale(b.sum(pen), 1.0 / sigma);
}

ad::Expr smooth_loglike(ad::TapeBuilder& b, ad::Expr u_final, const std::vector<TissueClass>& cls,
                        ad::Expr tau_lo, ad::Expr tau_up, double sigma) {
  check_sigma(sigma);
  if (size_t(b.size_of(u_final)) != cls.size())
    throw std::invalid_argument("smooth_loglike: label/field size mismatch");
  std::vector<int> shape = b.shape_of(u_final);
  ad::Expr a = b.scale(b.sub(u_final, tau_lo), 1.0 / sigma);
  ad::Expr bb = b.scale(b.sub(u_final, tau_up), 1.0 / sigma);
  ad::Expr logp_h = b.logsigmoid(b.neg(a));
  ad::Expr logp_g = b.add(b.logsigmoid(a), b.logsigmoid(b.neg(bb)));
  ad::Expr logp_n = b.logsigmoid(bb);
  // Z in [1, 1.25], so a plain log is safe
  ad::Expr logz = b.log(b.add_const(b.mul(b.sigmoid(bb), b.sigmoid(b.neg(a))), 1.0));
  ad::Expr m_h = b.const_array(shape, class_masks(cls, TissueClass::Healthy));
  ad::Expr m_g = b.const_array(shape, class_masks(cls, TissueClass::Glioma));
  ad::Expr m_n = b.const_array(shape, class_masks(cls, TissueClass::Necrotic));
  ad::Expr logp =
      b.add(b.add(b.mul(m_h, logp_h), b.mul(m_g, logp_g)), b.mul(m_n, logp_n));
  return b.sum(b.sub(logp, logz));
}

} // namespace tapeops

} // namespace bodil
