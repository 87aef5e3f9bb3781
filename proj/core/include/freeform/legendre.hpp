#pragma once

#include "freeform/farfield.hpp"

namespace freeform {

/// Profile of the magnification lens in the plane (one transverse variable) through
/// the Legendre transform w(xi) = x xi - u(x), xi = u'(x), x = w'(xi). w solves
/// w' + P w = Q with r(xi) = (1 - k1 k2) xi^2 - alpha/(k1^2 - 1) [(k1^2 - k1 k2)
/// sqrt(k1^2 + (k1^2 - 1) xi^2) + k1^2 (1 - k1 k2)], P = -(1 - k1 k2) xi / r,
/// Q = -C xi / r, so w = C/(1 - k1 k2) + A exp(-int P).
class LegendreSolution {
 public:
  enum class Branch { Left, Middle, Right, Whole };

  LegendreSolution(double alpha, double C, double kappa1, double kappa2, double A,
                   double xi_lo, double xi_hi);

  double alpha() const { return alpha_; }
  double C() const { return C_; }
  double A() const { return A_; }
  /// Positive root of r; NaN when alpha < 0.
  double xi1() const { return xi1_; }
  Branch branch() const { return branch_; }
  /// Point of the branch where int P starts (w = C/(1 - k1 k2) + A there).
  double anchor() const { return anchor_; }
  double xi_lo() const { return lo_; }
  double xi_hi() const { return hi_; }

  double r(double xi) const;
  double dr(double xi) const;
  double P(double xi) const;
  double dP(double xi) const;
  double Q(double xi) const;
  /// Integral of P from the anchor (adaptive Gauss-Kronrod).
  double integral_P(double xi) const;
  double w(double xi) const;
  double dw(double xi) const;
  double d2w(double xi) const;

  /// Range of x = w'(xi) over [xi_lo, xi_hi].
  double x_lo() const { return x_lo_; }
  double x_hi() const { return x_hi_; }
  /// (w')^{-1}(x); throws DomainError outside [x_lo, x_hi].
  double xi_of(double x) const;
  double u(double x) const;
  /// u'(x) = xi.
  double du(double x) const { return xi_of(x); }
  /// Residual of the one-variable imaging equation at x.
  double pde_residual(double x) const;

  /// Max |Q - C P / (1 - k1 k2)| over the sampled range.
  double q_identity_residual() const { return q_identity_; }
  /// Every sampled w'' had the predicted sign sign(A alpha (k1 k2 - 1)).
  bool sign_law_holds() const { return sign_law_; }
  int predicted_sign() const;

 private:
  double alpha_, C_, k1_, k2_, A_;
  double lo_, hi_;
  double xi1_;
  Branch branch_;
  double anchor_;
  double x_lo_ = 0.0, x_hi_ = 0.0;
  double q_identity_ = 0.0;
  bool sign_law_ = false;
};

/// Builds and validates the solution on [xi_lo, xi_hi]. Throws DegenerateMagnification
/// (|alpha| < 1e-12), BranchCrossing (range touches +-xi1) or NonMonotone (w'' vanishes
/// or has the wrong sign).
LegendreSolution legendre_2d(double alpha, double C, double kappa1, double kappa2, double A,
                             double xi_lo, double xi_hi);

/// A giving u(0) = delta0 on the middle branch: A = -delta0 - C/(1 - k1 k2).
double legendre_constant(double delta0, double C, double kappa1, double kappa2);

/// Positive root of r by bisection (alpha > 0).
double legendre_xi1(double alpha, double kappa1, double kappa2);

}  // namespace freeform
