#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "prolik/models.hpp"
#include "prolik/optimizer.hpp"
#include "prolik/target.hpp"

namespace prolik {

// One evaluation of the profile log-likelihood by nested optimisation:
// the maximum of loglik over the slice eta(theta, t) = value, reached by
// eliminating one coordinate and maximising over the remaining ones.
struct NaiveProfilePoint {
    double loglik = 0.0;  // profile value; -infinity when the slice is empty
    Vector theta;         // full parameter vector attaining it
    Vector lambda;        // nuisance coordinates of the slice optimum
    bool converged = false;
};

// Profile log-likelihood at one target value.  The slice is realised by a
// target-specific re-parameterisation:
//   - coordinate targets: the coordinate is fixed, the rest are free;
//   - linear targets a' theta = value: the coordinate with the largest |a|
//     is solved out;
//   - return-level targets on three-parameter location/scale/shape models:
//     the location is solved out of eta = mu + sigma * eta0(t, xi).
// The inner maximisation reuses the unconstrained fitter on the reduced
// model, started from lambda_init when given (the previous slice solution
// makes a good warm start).  Inner failures are flagged, not thrown.
//
// Throws DomainError for targets with no slice re-parameterisation (custom
// targets, return-level targets on models that are not three-parameter).
NaiveProfilePoint naive_profile_value(const LikelihoodModel& model,
                                      const TargetFunction& target, double t,
                                      double value,
                                      const std::optional<Vector>& lambda_init =
                                          std::nullopt);

// Profile curve over a grid of target values, each inner solve warm-started
// from its neighbour, sweeping outward from the value closest to eta_hat.
struct ProfileCurve {
    Vector psi;                   // target values, as given
    Vector loglik;                // profile log-likelihood per value
    std::vector<bool> converged;  // inner convergence flag per value
};

ProfileCurve naive_profile_curve(const LikelihoodModel& model,
                                 const TargetFunction& target, double t,
                                 const Vector& psi_values,
                                 const std::optional<Vector>& lambda_init =
                                     std::nullopt);

// Reference bound solver: the zero of  lprof(psi) - (loglik_max - delta)
// on the chosen side of eta(theta_hat), bracketed by doubling steps from
// the fitted value (at most ten doublings of a curvature-based initial
// step) and solved by Brent's method to |residual| <= 1e-8.
//
// Throws UnboundedError when no bracket is found within the expansion
// range (the profile never reaches the level: practical
// non-identifiability) and ConvergenceError when the root refinement
// stalls.
double naive_bound(const LikelihoodModel& model, const TargetFunction& target,
                   double t, const MleFit& fit, double delta, BoundSide side);

// Closed-form profile-likelihood interval for the regression mean
// x_new' theta of a Gaussian linear model:
//   eta_hat +- s_mu(x_new) * sqrt(2 delta),   delta = q_{chi2(1)}(1-alpha)/2,
// with s_mu^2 = sigma^2 * x_new' (X'X)^{-1} x_new and sigma^2 the stated
// variance (known-variance mode) or its maximum-likelihood estimate.
//
// Throws RankError on rank-deficient designs, InputError on size
// mismatches, DomainError for alpha outside (0, 1).
struct LinregInterval {
    double lower = 0.0;
    double upper = 0.0;
    double s_mu = 0.0;
    double eta_hat = 0.0;
};

LinregInterval linreg_interval(const LinearGaussianSpec& spec, const Vector& x_new,
                               double alpha);

}  // namespace prolik
