#include "prolik/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "prolik/errors.hpp"
#include "prolik/tracers.hpp"

namespace prolik {

using numerics::axpy;
using numerics::cholesky_solve;
using numerics::dot;
using numerics::matvec;
using numerics::norm2;
using numerics::scale;
using numerics::solve_square;
using numerics::try_cholesky;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Backtracking line search on a scalar objective phi to MAXIMISE along
// direction d with directional derivative slope = grad phi . d > 0.
// Returns the accepted step length, or 0 when no step sufficiently
// improves phi (Armijo condition with constant 1e-4).
double armijo_ascent(const std::function<double(const Vector&)>& phi, const Vector& theta,
                     double phi0, const Vector& d, double slope) {
    double alpha = 1.0;
    for (int k = 0; k < 60; ++k) {
        Vector trial = theta;
        for (std::size_t i = 0; i < d.size(); ++i) trial[i] += alpha * d[i];
        const double val = phi(trial);
        if (std::isfinite(val) && val >= phi0 + 1e-4 * alpha * slope) return alpha;
        alpha *= 0.5;
    }
    return 0.0;
}

// BFGS update of an inverse-Hessian approximation M for the *minimisation*
// of -loglik; M stays positive definite and M*grad(loglik) is an ascent
// direction for loglik.
void bfgs_update(Matrix& m, const Vector& s, const Vector& y_min) {
    const double sy = dot(s, y_min);
    if (!(sy > 1e-12 * norm2(s) * norm2(y_min))) return;  // curvature too weak
    const std::size_t n = s.size();
    const double rho = 1.0 / sy;
    const Vector my = matvec(m, y_min);
    const double ymy = dot(y_min, my);
    // M <- (I - rho s y') M (I - rho y s') + rho s s'
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            m(i, j) += rho * rho * ymy * s[i] * s[j] + rho * s[i] * s[j] -
                       rho * (s[i] * my[j] + my[i] * s[j]);
}

std::string trace_message(const char* what, std::size_t iters, double loglik,
                          double grad_norm) {
    std::ostringstream os;
    os << what << " after " << iters << " iterations (loglik " << loglik
       << ", gradient norm " << grad_norm << ")";
    return os.str();
}

}  // namespace

MleFit fit_mle(const LikelihoodModel& model, const std::optional<Vector>& init,
               const FitOptions& options) {
    Vector theta = init.value_or(model.init);
    if (theta.size() != model.p) throw InputError("fit_mle: start has wrong length");
    if (!model.in_domain(theta))
        throw DomainError("fit_mle: start point is outside the model domain");

    const std::size_t p = model.p;
    double l = model.loglik(theta);
    Vector g = model.grad(theta);

    // Inverse-Hessian approximation (of -loglik) for the BFGS fallback.
    Matrix bfgs_m = Matrix::identity(p);
    {
        const double s0 = 1.0 / (1.0 + norm2(g));
        for (std::size_t i = 0; i < p; ++i) bfgs_m(i, i) = s0;
    }

    std::size_t it = 0;
    for (; it < options.max_iterations; ++it) {
        const double gnorm = norm2(g);
        const auto accept = [&]() {
            MleFit fit;
            fit.theta_hat = theta;
            fit.loglik_max = l;
            fit.hessian_at_max = model.hess(theta);
            fit.iterations = it;
            fit.converged = true;
            return fit;
        };
        if (gnorm <= options.grad_tol * (1.0 + std::abs(l))) return accept();

        // Early iterations of bounded-shape models add a small log barrier,
        // dropped once the iterate is clear of the boundary.
        double w = 0.0;
        if (model.barrier && it < 12 && model.barrier->min_margin(theta) < 0.25)
            w = 0.1 * std::pow(0.5, static_cast<double>(it));

        Vector g_eff = g;
        Matrix h_eff = model.hess(theta);
        if (w > 0.0) {
            const Vector bg = model.barrier->grad(theta);
            const Matrix bh = model.barrier->hess(theta);
            for (std::size_t i = 0; i < p; ++i) {
                g_eff[i] += w * bg[i];
                for (std::size_t j = 0; j < p; ++j) h_eff(i, j) += w * bh(i, j);
            }
        }

        auto objective = [&](const Vector& th) {
            const double base = model.loglik(th);
            if (w == 0.0 || base == -kInf) return base;
            return base + w * model.barrier->value(th);
        };

        // Newton direction when -H is positive definite; BFGS otherwise.
        Vector direction;
        bool have_direction = false;
        Matrix neg_h(p, p), lower;
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < p; ++j) neg_h(i, j) = -h_eff(i, j);
        if (try_cholesky(neg_h, lower)) {
            direction = cholesky_solve(lower, g_eff);
            have_direction = dot(direction, g_eff) > 0.0;
        }
        if (!have_direction) direction = matvec(bfgs_m, g_eff);

        double slope = dot(direction, g_eff);
        if (!(slope > 0.0)) {  // numerically degenerate; fall back to steepest ascent
            direction = scale(1.0 / (1.0 + norm2(g_eff)), g_eff);
            slope = dot(direction, g_eff);
        }

        // Half the Newton decrement bounds the improvement still attainable
        // from here; when that bound sits at the rounding noise of the
        // log-likelihood, value comparisons can no longer certify progress
        // even though the gradient test has a little room left.
        const double noise = 64.0 * std::numeric_limits<double>::epsilon() *
                             (1.0 + std::abs(l));
        const bool at_noise_floor =
            have_direction && w == 0.0 && 0.5 * slope <= 1e-10 * (1.0 + std::abs(l));

        const double alpha = armijo_ascent(objective, theta, objective(theta), direction, slope);
        if (alpha == 0.0) {
            if (at_noise_floor) return accept();
            throw ConvergenceError(
                trace_message("fit_mle: line search stalled", it, l, gnorm));
        }

        Vector theta_next = theta;
        for (std::size_t i = 0; i < p; ++i) theta_next[i] += alpha * direction[i];
        if (at_noise_floor && model.loglik(theta_next) - l <= noise) return accept();
        const Vector g_next = model.grad(theta_next);

        Vector step(p), y_min(p);
        for (std::size_t i = 0; i < p; ++i) {
            step[i] = theta_next[i] - theta[i];
            y_min[i] = -(g_next[i] - g[i]);
        }
        bfgs_update(bfgs_m, step, y_min);

        theta = std::move(theta_next);
        g = g_next;
        l = model.loglik(theta);
    }
    throw ConvergenceError(
        trace_message("fit_mle: iteration budget exhausted", it, l, norm2(g)));
}

namespace {

// Damped Newton minimisation of the augmented-Lagrangian merit
//   phi(theta) = obj_sign * eta(theta) - lambda * c(theta) + (rho/2) c(theta)^2
// with c = loglik - loglik_target and obj_sign = -1 (upper) / +1 (lower).
// Indefinite Hessians are shifted towards positive definiteness.
struct InnerResult {
    Vector theta;
    double constraint = 0.0;
    bool converged = false;
};

InnerResult al_inner(const LikelihoodModel& model, const TargetFunction& target, double t,
                     double obj_sign, double lambda, double rho, double loglik_target,
                     Vector theta, double tol, double diverge_radius,
                     const Vector& theta_hat) {
    const std::size_t p = model.p;

    auto merit = [&](const Vector& th) {
        const double l = model.loglik(th);
        if (l == -kInf) return kInf;
        const double c = l - loglik_target;
        return obj_sign * target.value(th, t) - lambda * c + 0.5 * rho * c * c;
    };

    InnerResult out;
    for (std::size_t it = 0; it < 60; ++it) {
        const double l = model.loglik(theta);
        const double c = l - loglik_target;
        const Vector gl = model.grad(theta);
        const Vector ge = target.grad(theta, t);

        Vector grad(p);
        const double mult = lambda - rho * c;  // effective multiplier in the merit gradient
        for (std::size_t i = 0; i < p; ++i) grad[i] = obj_sign * ge[i] - mult * gl[i];

        if (norm2(grad) <= tol) {
            out.theta = theta;
            out.constraint = c;
            out.converged = true;
            return out;
        }

        const Matrix hl = model.hess(theta);
        const Matrix he = target.hess(theta, t);
        Matrix hess(p, p);
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < p; ++j)
                hess(i, j) = obj_sign * he(i, j) - mult * hl(i, j) + rho * gl[i] * gl[j];

        // Newton direction on the merit, shifting the diagonal until the
        // factorisation succeeds.  The first candidate shift already clears the
        // most negative diagonal entry so the escalation never produces a
        // near-singular cancellation.
        double diag_scale = 1.0;
        double min_diag = hess(0, 0);
        for (std::size_t i = 0; i < p; ++i) {
            diag_scale = std::max(diag_scale, std::abs(hess(i, i)));
            min_diag = std::min(min_diag, hess(i, i));
        }
        const double shift_unit = 1e-6 * diag_scale;
        double shift = (min_diag > 0.0) ? 0.0 : (-min_diag + shift_unit);
        Vector direction;
        for (int k = 0; k < 40; ++k) {
            Matrix shifted = hess;
            for (std::size_t i = 0; i < p; ++i) shifted(i, i) += shift;
            Matrix lower;
            if (try_cholesky(shifted, lower)) {
                direction = cholesky_solve(lower, scale(-1.0, grad));
                break;
            }
            shift = (shift == 0.0) ? shift_unit : shift * 10.0;
        }
        if (direction.empty()) {
            out.theta = theta;
            out.constraint = c;
            return out;  // hopelessly indefinite; let the outer loop raise rho
        }

        // Keep steps local: a regularised direction can be very long when the
        // merit has flat or negative curvature, and an overlong step could hop
        // out of the basin around the constrained solution.
        const double max_step = 50.0 * (1.0 + norm2(theta));
        const double dir_len = norm2(direction);
        if (dir_len > max_step) direction = scale(max_step / dir_len, direction);

        const double phi0 = merit(theta);
        const double slope = dot(grad, direction);  // negative
        double alpha = 1.0;
        bool stepped = false;
        for (int k = 0; k < 60; ++k) {
            Vector trial = theta;
            for (std::size_t i = 0; i < p; ++i) trial[i] += alpha * direction[i];
            const double val = merit(trial);
            if (std::isfinite(val) && val <= phi0 + 1e-4 * alpha * slope) {
                theta = std::move(trial);
                stepped = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!stepped) {
            out.theta = theta;
            out.constraint = c;
            return out;
        }
        Vector from_hat(p);
        for (std::size_t i = 0; i < p; ++i) from_hat[i] = theta[i] - theta_hat[i];
        if (norm2(from_hat) > diverge_radius)
            throw UnboundedError(
                "profile_bound: iterates diverged; objective appears unbounded "
                "over the likelihood region");
    }
    out.theta = theta;
    out.constraint = model.loglik(theta) - loglik_target;
    return out;
}

}  // namespace

ProfileBound profile_bound(const LikelihoodModel& model, const TargetFunction& target,
                           double t, const MleFit& fit, double delta, BoundSide side,
                           const BoundOptions& options) {
    if (!(delta > 0.0)) throw DomainError("profile_bound: delta must be positive");
    if (!fit.converged) throw InputError("profile_bound: fit has not converged");
    const std::size_t p = model.p;
    const double loglik_target = fit.loglik_max - delta;
    const double obj_sign = (side == BoundSide::upper) ? -1.0 : 1.0;
    const double tol_constraint = 1e-8 * (1.0 + std::abs(fit.loglik_max));
    const double diverge_radius = 1e6 * (1.0 + norm2(fit.theta_hat));

    // Practical non-identifiability check: march geometrically along the
    // direction that improves the target.  If the log-likelihood never drops
    // to the required level while the target keeps improving, the bound does
    // not exist and no amount of constrained optimisation will find one.
    {
        Vector ray = target.grad(fit.theta_hat, t);
        const double ray_norm = norm2(ray);
        if (ray_norm > 0.0) {
            const double want = (side == BoundSide::upper) ? 1.0 : -1.0;
            for (std::size_t i = 0; i < p; ++i) ray[i] *= want / ray_norm;
            const double eta_hat = target.value(fit.theta_hat, t);
            double eta_far = eta_hat;
            double h = 1.0 + norm2(fit.theta_hat);
            bool level_never_reached = true;
            for (int k = 0; k < 25; ++k) {
                Vector probe(p);
                for (std::size_t i = 0; i < p; ++i) probe[i] = fit.theta_hat[i] + h * ray[i];
                if (!model.in_domain(probe)) {
                    level_never_reached = false;
                    break;
                }
                const double l = model.loglik(probe);
                if (!std::isfinite(l) || l < loglik_target) {
                    level_never_reached = false;
                    break;
                }
                eta_far = target.value(probe, t);
                h *= 2.0;
            }
            if (level_never_reached &&
                want * (eta_far - eta_hat) > 1e3 * (1.0 + std::abs(eta_hat)))
                throw UnboundedError(
                    "profile_bound: the target improves without bound while the "
                    "log-likelihood stays above the requested level; the "
                    "interval end-point does not exist (practical "
                    "non-identifiability)");
        }
    }

    // Start from the closed-form boundary point of the locally quadratic
    // likelihood at a quarter of the requested level, falling back to a
    // shrinking nudge along the same direction when that point leaves the
    // domain.
    Vector theta = fit.theta_hat;
    double lambda = 1.0;
    try {
        const Vector h0 = target.grad(fit.theta_hat, t);
        const AugmentedState start =
            bubble_init(fit, h0, delta / 4.0, side == BoundSide::upper ? +1 : -1);
        lambda = std::abs(start.nu) * 0.5;  // first-order multiplier at level delta
        Vector candidate = start.theta;
        Vector offset(p);
        for (std::size_t i = 0; i < p; ++i) offset[i] = candidate[i] - fit.theta_hat[i];
        for (int k = 0; k < 50 && !model.in_domain(candidate); ++k) {
            for (std::size_t i = 0; i < p; ++i)
                offset[i] *= 0.5, candidate[i] = fit.theta_hat[i] + offset[i];
        }
        if (model.in_domain(candidate)) theta = candidate;
    } catch (const Error&) {
        // keep theta_hat; the augmented-Lagrangian loop still moves off it
    }

    double rho = 1.0;
    double prev_abs_c = kInf;
    double inner_tol = 1e-3 * (1.0 + norm2(target.grad(fit.theta_hat, t)));

    auto kkt_report = [&](const Vector& th, double nu_stationarity, ProfileBound& pb) {
        const Vector ge = target.grad(th, t);
        const Vector gl = model.grad(th);
        Vector resid(p);
        for (std::size_t i = 0; i < p; ++i) resid[i] = ge[i] - nu_stationarity * gl[i];
        pb.kkt_residual = norm2(resid);
        pb.constraint_residual = std::abs(model.loglik(th) - loglik_target);
    };

    ProfileBound best;
    best.side = side;
    bool solved = false;

    for (std::size_t outer = 0; outer < options.max_outer && !solved; ++outer) {
        const InnerResult inner =
            al_inner(model, target, t, obj_sign, lambda, rho, loglik_target, theta,
                     inner_tol, diverge_radius, fit.theta_hat);
        theta = inner.theta;
        const double c = inner.constraint;

        lambda -= rho * c;
        if (std::abs(c) > 0.25 * prev_abs_c) rho = std::min(rho * 10.0, 1e12);
        prev_abs_c = std::abs(c);
        inner_tol = std::max(inner_tol * 0.2, 1e-10);

        // Stationarity multiplier nu solving grad eta = nu grad loglik:
        // minimising obj_sign*eta - lambda*loglik gives obj_sign*grad eta =
        // lambda*grad loglik, hence nu = obj_sign * lambda.
        const double nu = obj_sign * lambda;
        ProfileBound candidate;
        candidate.side = side;
        kkt_report(theta, nu, candidate);
        const double eta_grad_norm = norm2(target.grad(theta, t));
        if (candidate.constraint_residual <= tol_constraint &&
            candidate.kkt_residual <= options.tol_kkt * (1.0 + eta_grad_norm)) {
            best = candidate;
            best.theta = theta;
            best.nu = nu;
            solved = true;
        }
    }

    // Newton polish of the full stationarity system
    //   F(theta, nu) = (grad eta - nu grad loglik, loglik - loglik_target)
    // from the augmented-Lagrangian result; accepted only while it reduces
    // the residual and stays in the domain.
    {
        Vector th = theta;
        double nu = obj_sign * lambda;
        auto residual = [&](const Vector& v, double n_) {
            const Vector ge = target.grad(v, t);
            const Vector gl = model.grad(v);
            Vector f(p + 1);
            for (std::size_t i = 0; i < p; ++i) f[i] = ge[i] - n_ * gl[i];
            f[p] = model.loglik(v) - loglik_target;
            return f;
        };
        Vector f = residual(th, nu);
        double fnorm = norm2(f);
        for (int it = 0; it < 20 && fnorm > 1e-14 * (1.0 + std::abs(loglik_target)); ++it) {
            const Matrix he = target.hess(th, t);
            const Matrix hl = model.hess(th);
            const Vector gl = model.grad(th);
            Matrix jac(p + 1, p + 1);
            for (std::size_t i = 0; i < p; ++i) {
                for (std::size_t j = 0; j < p; ++j) jac(i, j) = he(i, j) - nu * hl(i, j);
                jac(i, p) = -gl[i];
                jac(p, i) = gl[i];
            }
            jac(p, p) = 0.0;
            Vector step;
            try {
                step = solve_square(jac, scale(-1.0, f));
            } catch (const SingularSystemError&) {
                break;
            }
            double alpha = 1.0;
            bool accepted = false;
            for (int k = 0; k < 30; ++k) {
                Vector th_try = th;
                for (std::size_t i = 0; i < p; ++i) th_try[i] += alpha * step[i];
                const double nu_try = nu + alpha * step[p];
                if (model.in_domain(th_try)) {
                    const Vector f_try = residual(th_try, nu_try);
                    const double fn_try = norm2(f_try);
                    if (fn_try < fnorm) {
                        th = std::move(th_try);
                        nu = nu_try;
                        f = f_try;
                        fnorm = fn_try;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if (!accepted) break;
        }

        ProfileBound polished;
        polished.side = side;
        kkt_report(th, nu, polished);
        const double eta_grad_norm = norm2(target.grad(th, t));
        const bool polished_ok =
            polished.constraint_residual <= tol_constraint &&
            polished.kkt_residual <= options.tol_kkt * (1.0 + eta_grad_norm);
        if (polished_ok &&
            (!solved || polished.kkt_residual + polished.constraint_residual <
                            best.kkt_residual + best.constraint_residual)) {
            best = polished;
            best.theta = th;
            best.nu = nu;
            solved = true;
        }
    }

    if (!solved)
        throw ConvergenceError("profile_bound: no point satisfied the stationarity "
                               "and constraint tolerances within the outer budget");

    best.value = target.value(best.theta, t);
    best.converged = true;
    return best;
}

}  // namespace prolik
