#pragma once

#include <span>
#include <vector>

#include "bodil/ad/tape.hpp"

namespace bodil {

// voxel labels for segmentation data; each class pins the concentration to an
// interval: healthy (0, tau_lo), glioma (tau_lo, tau_up), necrotic (tau_up, 1)
enum class TissueClass : int { Healthy = 0, Glioma = 1, Necrotic = 2 };

struct ClassInterval {
  double lo, hi;
};
ClassInterval class_interval(TissueClass c, double tau_lo, double tau_up);

// log(sigmoid(a)) without materializing the probability, exact in the tails
double log_sigmoid(double a);

// sum over records of -(y-h)^2/(2 sigma^2) - 1/2 log(2 pi sigma^2); the
// normalization constant is kept so values are comparable across sigma
double gaussian_loglike(std::span<const double> y, std::span<const double> h, double sigma);
// the sigma-dependent constant alone, reported separately in audits
double gaussian_loglike_constant(size_t n, double sigma);

// binary observations y of whether u crossed tau, with error scale sigma:
// sum of y log alpha + (1-y) log(1-alpha), alpha = sigmoid((u-tau)/sigma)
double binomial_loglike(std::span<const double> y, std::span<const double> u, double tau,
                        double sigma);

// piecewise-linear penalty, zero inside each voxel's class interval:
// (1/sigma) sum [min(u-lo,0) + min(0,hi-u)]
double hinge_loglike(std::span<const double> u, std::span<const TissueClass> cls, double tau_lo,
                     double tau_up, double sigma);

// three-class sigmoid product model: per voxel log p_class - log Z with
// Z = 1 + S((u-tau_up)/sigma) S((tau_lo-u)/sigma)
double smooth_loglike(std::span<const double> u, std::span<const TissueClass> cls, double tau_lo,
                      double tau_up, double sigma);

// tape-side counterparts, each returning a scalar expression
namespace tapeops {

ad::Expr gaussian_loglike(ad::TapeBuilder& b, ad::Expr h, const std::vector<double>& y,
                          double sigma);
ad::Expr binomial_loglike(ad::TapeBuilder& b, ad::Expr u_final, const std::vector<double>& y,
                          double tau, double sigma);
// tau_lo/tau_up enter as expressions so they can be optimized jointly with u
ad::Expr hinge_loglike(ad::TapeBuilder& b, ad::Expr u_final, const std::vector<TissueClass>& cls,
                       ad::Expr tau_lo, ad::Expr tau_up, double sigma);
ad::Expr smooth_loglike(ad::TapeBuilder& b, ad::Expr u_final, const std::vector<TissueClass>& cls,
                        ad::Expr tau_lo, ad::Expr tau_up, double sigma);

} // namespace tapeops

} // namespace bodil
