#include "freeform/legendre.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include "freeform/error.hpp"

namespace freeform {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr int kSamples = 401;

double r_of(double xi, double alpha, double k1, double k2) {
  const double q = std::sqrt(k1 * k1 + (k1 * k1 - 1.0) * xi * xi);
  return (1.0 - k1 * k2) * xi * xi -
         alpha / (k1 * k1 - 1.0) * ((k1 * k1 - k1 * k2) * q + k1 * k1 * (1.0 - k1 * k2));
}

std::string range_text(double lo, double hi) {
  std::ostringstream s;
  s.precision(17);
  s << "[" << lo << ", " << hi << "]";
  return s.str();
}

}  // namespace

double legendre_xi1(double alpha, double kappa1, double kappa2) {
  if (!(alpha > 0.0)) return kNaN;
  // r(0) < 0 and r grows like xi^2, with a single sign change on xi > 0.
  double lo = 0.0, hi = 1.0;
  while (r_of(hi, alpha, kappa1, kappa2) <= 0.0) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e150) throw Error(ErrorCode::InvalidInput, "no positive root of r");
  }
  while (hi - lo > 1e-14 * std::max(1.0, hi)) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (r_of(mid, alpha, kappa1, kappa2) <= 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double legendre_constant(double delta0, double C, double kappa1, double kappa2) {
  return -delta0 - C / (1.0 - kappa1 * kappa2);
}

LegendreSolution::LegendreSolution(double alpha, double C, double kappa1, double kappa2,
                                   double A, double xi_lo, double xi_hi)
    : alpha_(alpha), C_(C), k1_(kappa1), k2_(kappa2), A_(A), lo_(xi_lo), hi_(xi_hi) {
  if (!(kappa1 > 1.0)) throw Error(ErrorCode::InvalidInput, "kappa1 must exceed 1");
  if (!(kappa1 * kappa2 < 1.0)) {
    throw Error(ErrorCode::InvalidInput, "Legendre method needs kappa1 kappa2 < 1");
  }
  if (!(std::abs(alpha) >= 1e-12)) {
    throw Error(ErrorCode::DegenerateMagnification, "|alpha| below 1e-12");
  }
  if (!(xi_lo < xi_hi)) throw Error(ErrorCode::InvalidInput, "empty xi range");

  xi1_ = legendre_xi1(alpha, kappa1, kappa2);
  if (alpha < 0.0) {
    branch_ = Branch::Whole;
    anchor_ = 0.0;
  } else {
    const auto inside = [&](double p) { return xi_lo <= p && p <= xi_hi; };
    if (inside(xi1_) || inside(-xi1_)) {
      throw Error(ErrorCode::BranchCrossing,
                  "xi range " + range_text(xi_lo, xi_hi) + " reaches a root of r at +-" +
                      std::to_string(xi1_));
    }
    if (xi_hi < -xi1_) {
      branch_ = Branch::Left;
      anchor_ = -2.0 * xi1_;
    } else if (xi_lo > xi1_) {
      branch_ = Branch::Right;
      anchor_ = 2.0 * xi1_;
    } else {
      branch_ = Branch::Middle;
      anchor_ = 0.0;
    }
  }

  // Sampled checks: the Q identity and the sign of w''.
  const int want = predicted_sign();
  sign_law_ = want != 0;
  double dw_lo = 0.0, dw_hi = 0.0;
  for (int k = 0; k < kSamples; ++k) {
    const double xi = lo_ + (hi_ - lo_) * k / (kSamples - 1);
    q_identity_ = std::max(q_identity_, std::abs(Q(xi) - C_ * P(xi) / (1.0 - k1_ * k2_)));
    const double s = d2w(xi);
    if (!(s != 0.0) || (s > 0.0 ? 1 : -1) != want) sign_law_ = false;
    if (k == 0) dw_lo = dw(xi);
    if (k == kSamples - 1) dw_hi = dw(xi);
  }
  x_lo_ = std::min(dw_lo, dw_hi);
  x_hi_ = std::max(dw_lo, dw_hi);
}

int LegendreSolution::predicted_sign() const {
  const double s = A_ * alpha_ * (k1_ * k2_ - 1.0);
  return s > 0.0 ? 1 : (s < 0.0 ? -1 : 0);
}

double LegendreSolution::r(double xi) const { return r_of(xi, alpha_, k1_, k2_); }

double LegendreSolution::dr(double xi) const {
  const double q = std::sqrt(k1_ * k1_ + (k1_ * k1_ - 1.0) * xi * xi);
  return 2.0 * (1.0 - k1_ * k2_) * xi - alpha_ * (k1_ * k1_ - k1_ * k2_) * xi / q;
}

double LegendreSolution::P(double xi) const { return -(1.0 - k1_ * k2_) * xi / r(xi); }

double LegendreSolution::dP(double xi) const {
  const double rr = r(xi);
  return -(1.0 - k1_ * k2_) * (rr - xi * dr(xi)) / (rr * rr);
}

double LegendreSolution::Q(double xi) const { return -C_ * xi / r(xi); }

double LegendreSolution::integral_P(double xi) const {
  if (xi == anchor_) return 0.0;
  using boost::math::quadrature::gauss_kronrod;
  return gauss_kronrod<double, 31>::integrate([this](double t) { return P(t); }, anchor_, xi,
                                              10, 1e-12);
}

double LegendreSolution::w(double xi) const {
  return C_ / (1.0 - k1_ * k2_) + A_ * std::exp(-integral_P(xi));
}

double LegendreSolution::dw(double xi) const {
  return -P(xi) * A_ * std::exp(-integral_P(xi));
}

double LegendreSolution::d2w(double xi) const {
  const double p = P(xi);
  return A_ * std::exp(-integral_P(xi)) * (p * p - dP(xi));
}

double LegendreSolution::xi_of(double x) const {
  const double slack = 1e-12 * std::max(1.0, std::abs(x_hi_ - x_lo_));
  if (!(x >= x_lo_ - slack && x <= x_hi_ + slack)) {
    throw Error(ErrorCode::DomainError,
                "x outside the image of w' " + range_text(x_lo_, x_hi_));
  }
  // w' is strictly monotone, so a safeguarded Newton on [lo, hi] converges.
  auto f = [&](double xi) { return std::make_pair(dw(xi) - x, d2w(xi)); };
  double guess = std::clamp(anchor_, lo_, hi_);
  std::uintmax_t iters = 200;
  return boost::math::tools::newton_raphson_iterate(f, guess, lo_, hi_, 50, iters);
}

double LegendreSolution::u(double x) const {
  const double xi = xi_of(x);
  return x * xi - w(xi);
}

double LegendreSolution::pde_residual(double x) const {
  const double xi = xi_of(x);
  const double u = x * xi - w(xi);
  const double q = std::sqrt(k1_ * k1_ + (k1_ * k1_ - 1.0) * xi * xi);
  const double lhs = ((1.0 - k1_ * k2_) * u + C_) /
                     ((k1_ * k1_ - k1_ * k2_) * q + k1_ * k1_ * (1.0 - k1_ * k2_)) * xi;
  return std::abs(lhs - alpha_ * x / (k1_ * k1_ - 1.0));
}

LegendreSolution legendre_2d(double alpha, double C, double kappa1, double kappa2, double A,
                             double xi_lo, double xi_hi) {
  LegendreSolution s(alpha, C, kappa1, kappa2, A, xi_lo, xi_hi);
  if (!s.sign_law_holds()) {
    throw Error(ErrorCode::NonMonotone,
                "w'' vanishes or changes sign on " + range_text(xi_lo, xi_hi));
  }
  return s;
}

}  // namespace freeform
