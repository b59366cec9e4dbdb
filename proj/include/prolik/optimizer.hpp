#pragma once

#include <cstddef>
#include <optional>

#include "prolik/models.hpp"
#include "prolik/target.hpp"

namespace prolik {

// A converged unconstrained maximum of the log-likelihood.
struct MleFit {
    Vector theta_hat;
    double loglik_max = 0.0;
    Matrix hessian_at_max;  // Hessian of the log-likelihood (negative definite)
    std::size_t iterations = 0;
    bool converged = false;
};

enum class BoundSide { lower, upper };

// One end of a profile-likelihood confidence interval: the extremum of the
// target eta over the level set loglik = loglik_max - delta.
//
// nu is the stationarity multiplier in the convention
//     grad eta = nu * grad loglik,
// so nu is negative at an upper bound and positive at a lower bound.
// kkt_residual stores the norm of grad eta - nu * grad loglik and
// constraint_residual the absolute log-likelihood constraint violation.
struct ProfileBound {
    BoundSide side = BoundSide::upper;
    double value = 0.0;
    Vector theta;
    double nu = 0.0;
    double kkt_residual = 0.0;
    double constraint_residual = 0.0;
    bool converged = false;
};

struct FitOptions {
    std::size_t max_iterations = 300;
    double grad_tol = 1e-8;  // scaled internally by 1 + |loglik|
};

// Maximise the model log-likelihood by damped Newton steps, falling back
// to BFGS whenever the Hessian is not negative definite.  Models carrying
// a BoundaryBarrier get a small logarithmic barrier added during the
// first iterations only, keeping shape parameters away from their floor;
// the barrier is dropped once the iterate is safely interior and never
// affects the convergence test.
//
// Throws DomainError when the start is outside the model domain and
// ConvergenceError (with an iteration trace) when the budget is spent.
MleFit fit_mle(const LikelihoodModel& model,
               const std::optional<Vector>& init = std::nullopt,
               const FitOptions& options = {});

struct BoundOptions {
    std::size_t max_outer = 200;
    double tol_kkt = 1e-6;  // scaled by 1 + |grad eta|
    // constraint tolerance is 1e-8 * (1 + |loglik_max|)
};

// Solve  max/min eta(theta, t)  subject to  loglik(theta) = loglik_max - delta
// by an augmented-Lagrangian outer loop (multiplier step nu <- nu - rho * c,
// penalty rho * 10 when |c| fails to shrink by 0.25) around a damped-Newton
// inner minimiser, then polish the full stationarity system with Newton
// steps.  The start point is the closed-form boundary point of the locally
// quadratic likelihood at level delta/4.
//
// Throws UnboundedError when iterates diverge (practical
// non-identifiability) and ConvergenceError when no bound is located.
ProfileBound profile_bound(const LikelihoodModel& model, const TargetFunction& target,
                           double t, const MleFit& fit, double delta, BoundSide side,
                           const BoundOptions& options = {});

}  // namespace prolik
