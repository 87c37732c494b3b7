#ifndef QRFVIMP_PINBALL_HPP
#define QRFVIMP_PINBALL_HPP

#include <cmath>
#include <functional>

#include "qrfvimp/errors.hpp"

namespace qrfvimp {

/// Quantile level tau, restricted to the open interval (0, 1).
class QuantileLevel {
 public:
  explicit QuantileLevel(double tau) : tau_(tau) {
    if (!(std::isfinite(tau) && tau > 0.0 && tau < 1.0)) {
      throw ValueError("QuantileLevel: tau must lie strictly inside (0, 1)");
    }
  }
  double value() const { return tau_; }

 private:
  double tau_;
};

/// Pinball loss u * (tau - 1{u < 0}). Nonnegative, convex, Lipschitz with
/// constant max(tau, 1 - tau).
double pinball_loss(double u, QuantileLevel tau);

/// Score psi_tau(u) = tau - 1{u <= 0}. The non-strict inequality makes this
/// the left derivative of the pinball loss, so psi(0) = tau - 1.
double score(double u, QuantileLevel tau);

// Split of rho(u - v) - rho(u) into a linear score term and a nonnegative
// integral remainder. The remainder integrand is piecewise constant with one
// breakpoint at s = u, so the integral is evaluated in closed form.
struct KnightDecomposition {
  double linear = 0.0;    // -v * score(u, tau)
  double integral = 0.0;  // oriented integral of 1{u<=s} - 1{u<=0} over [0, v]
  double total = 0.0;     // rho(u - v) - rho(u)
};

KnightDecomposition knight_decompose(double u, double v, QuantileLevel tau);

/// Expected integral remainder E[int_0^v (1{U<=s} - 1{U<=0}) ds] for
/// U = Y - q, where Y has the given density. Evaluated by adaptive
/// quadrature of f(q + t)(v - t); serves as the independent oracle for the
/// (1/2) f(q) v^2 quadratic approximation.
double knight_remainder_oracle(const std::function<double(double)>& density, double q,
                               double v);

}  // namespace qrfvimp

#endif  // QRFVIMP_PINBALL_HPP
