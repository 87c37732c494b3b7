#include "qrfvimp/pinball.hpp"

#include <algorithm>
#include <cmath>

#include "qrfvimp/math.hpp"

namespace qrfvimp {

namespace {

void require_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw ValueError(std::string(what) + ": argument must be finite");
}

}  // namespace

double pinball_loss(double u, QuantileLevel tau) {
  require_finite(u, "pinball_loss");
  const double t = tau.value();
  return u >= 0.0 ? t * u : (t - 1.0) * u;
}

double score(double u, QuantileLevel tau) {
  require_finite(u, "score");
  const double t = tau.value();
  return u > 0.0 ? t : t - 1.0;
}

KnightDecomposition knight_decompose(double u, double v, QuantileLevel tau) {
  require_finite(u, "knight_decompose");
  require_finite(v, "knight_decompose");
  KnightDecomposition out;
  out.total = pinball_loss(u - v, tau) - pinball_loss(u, tau);
  out.linear = -v * score(u, tau);
  if (v >= 0.0) {
    // Integrand is 1{s >= u} on [0, v]; vanishes unless 0 < u.
    out.integral = u > 0.0 ? std::max(0.0, v - u) : 0.0;
  } else {
    // Oriented integral over [v, 0]; vanishes unless u <= 0.
    out.integral = u <= 0.0 ? std::max(0.0, u - v) : 0.0;
  }
  return out;
}

double knight_remainder_oracle(const std::function<double(double)>& density, double q,
                               double v) {
  if (!std::isfinite(q) || !std::isfinite(v)) {
    throw ValueError("knight_remainder_oracle: arguments must be finite");
  }
  if (v == 0.0) return 0.0;
  const double av = std::abs(v);
  const double sign = v > 0.0 ? 1.0 : -1.0;
  // Fubini collapses the double integral of the CDF increment into a single
  // weighted density integral.
  auto integrand = [&](double t) { return density(q + sign * t) * (av - t); };
  return integrate(integrand, 0.0, av, 1e-13);
}

}  // namespace qrfvimp
