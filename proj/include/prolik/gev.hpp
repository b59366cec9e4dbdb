#pragma once

#include "prolik/numerics.hpp"

namespace prolik {
namespace gev {

// Location/scale/shape of a generalised extreme-value distribution.
// Context: sigma > 0 always; fitting additionally imposes xi >= -1.
struct GevParams {
    double mu = 0.0;
    double sigma = 1.0;
    double xi = 0.0;
};

bool is_valid(const GevParams& p);

// |xi| below this threshold switches the log-likelihood machinery to
// second-order Taylor expansions in xi about 0; the exact closed forms
// lose too many digits to cancellation in that band.
inline constexpr double xi_switch = 1e-4;

// Per-observation log-likelihood value with its gradient and Hessian in
// (mu, sigma, xi) order.  When the observation falls outside the support
// the value is -inf, in_support is false, and the derivative slots are
// zero-filled (they have no meaning there).
struct LoglikTerms {
    double value = 0.0;
    Vector grad = Vector(3, 0.0);
    Matrix hess = Matrix(3, 3);
    bool in_support = true;
};

// Return level eta(T) = mu + sigma*(T^xi - 1)/xi and every derivative the
// path-following systems need.  The time variable is s = log T.
struct RlDerivs {
    double eta = 0.0;
    Vector grad = Vector(3, 0.0);   // d(eta)/d(mu, sigma, xi)
    Matrix hess = Matrix(3, 3);     // second derivatives in theta
    Vector cross = Vector(3, 0.0);  // d2(eta)/ds d(mu, sigma, xi)
};

// log f(y; p); -inf when 1 + xi*(y-mu)/sigma <= 0.
double gev_logpdf(double y, const GevParams& p);

// F(y; p) in [0,1]; saturates to 0/1 outside the support.
double gev_cdf(double y, const GevParams& p);

// eta = mu + sigma*(e^{s*xi} - 1)/xi, with the Gumbel limit mu + sigma*s.
// s = log T; uniformly accurate in xi including xi = 0.
double return_level(double s, const GevParams& p);

// Value, gradient and Hessian of one observation's log-likelihood.
LoglikTerms loglik_terms(double y, const GevParams& p);

// Return level with all first/second derivatives in theta and the
// mixed s-theta derivatives.
RlDerivs rl_derivs(double s, const GevParams& p);

// mu - sigma/xi for xi < 0, +infinity otherwise.
double upper_endpoint(const GevParams& p);

}  // namespace gev
}  // namespace prolik
