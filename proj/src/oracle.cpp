#include "prolik/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <utility>

#include "prolik/errors.hpp"

namespace prolik {

using numerics::chisq_quantile;
using numerics::cholesky_solve;
using numerics::dot;
using numerics::solve_least_squares;
using numerics::solve_square;
using numerics::try_cholesky;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// How one theta coordinate is eliminated to realise the slice
// eta(theta, t) = value.
struct SlicePlan {
    enum class Kind { coordinate, linear, return_level };
    Kind kind = Kind::coordinate;
    std::size_t p = 0;
    std::size_t drop = 0;  // eliminated coordinate
    Vector coeffs;         // linear targets only
};

SlicePlan make_slice_plan(const LikelihoodModel& model, const TargetFunction& target) {
    SlicePlan plan;
    plan.p = model.p;
    if (target.dim != model.p)
        throw InputError("naive profile: target dimension does not match the model");
    switch (target.kind) {
        case TargetFunction::Kind::coordinate:
            if (target.coordinate_index >= model.p)
                throw InputError("naive profile: coordinate index out of range");
            plan.kind = SlicePlan::Kind::coordinate;
            plan.drop = target.coordinate_index;
            break;
        case TargetFunction::Kind::linear: {
            if (target.linear_coeffs.size() != model.p)
                throw InputError("naive profile: coefficient length mismatch");
            plan.kind = SlicePlan::Kind::linear;
            plan.coeffs = target.linear_coeffs;
            std::size_t best = 0;
            for (std::size_t i = 1; i < plan.coeffs.size(); ++i)
                if (std::abs(plan.coeffs[i]) > std::abs(plan.coeffs[best])) best = i;
            if (!(std::abs(plan.coeffs[best]) > 0.0))
                throw DomainError("naive profile: all target coefficients are zero");
            plan.drop = best;
            break;
        }
        case TargetFunction::Kind::gev_return_level:
            if (model.p != 3)
                throw DomainError(
                    "naive profile: return-level slices need a three-parameter "
                    "location/scale/shape model");
            plan.kind = SlicePlan::Kind::return_level;
            plan.drop = 0;  // the location is solved out
            break;
        case TargetFunction::Kind::custom:
            throw DomainError(
                "naive profile: custom targets have no slice re-parameterisation; "
                "use the constrained bound solver");
    }
    return plan;
}

// Nuisance coordinates of a full parameter vector under the plan.
Vector slice_extract(const SlicePlan& plan, const Vector& theta) {
    Vector lambda;
    lambda.reserve(plan.p - 1);
    for (std::size_t i = 0; i < plan.p; ++i)
        if (i != plan.drop) lambda.push_back(theta[i]);
    return lambda;
}

// For return-level plans the nuisance vector is (sigma, xi); the slice is
// only defined for positive scale.
bool slice_admissible(const SlicePlan& plan, const Vector& lambda) {
    return plan.kind != SlicePlan::Kind::return_level || lambda[0] > 0.0;
}

// Full parameter vector with the eliminated coordinate reconstructed from
// eta(theta, t) = value.
Vector slice_embed(const SlicePlan& plan, const TargetFunction& target, double t,
                   double value, const Vector& lambda) {
    Vector theta(plan.p);
    std::size_t m = 0;
    for (std::size_t i = 0; i < plan.p; ++i)
        if (i != plan.drop) theta[i] = lambda[m++];
    switch (plan.kind) {
        case SlicePlan::Kind::coordinate:
            theta[plan.drop] = value;
            break;
        case SlicePlan::Kind::linear: {
            double rest = 0.0;
            for (std::size_t i = 0; i < plan.p; ++i)
                if (i != plan.drop) rest += plan.coeffs[i] * theta[i];
            theta[plan.drop] = (value - rest) / plan.coeffs[plan.drop];
            break;
        }
        case SlicePlan::Kind::return_level: {
            // eta = mu + sigma * eta0(t, xi): the target's scale gradient at
            // any location is eta0 itself
            const Vector probe = {0.0, lambda[0], lambda[1]};
            const double eta0 = target.grad(probe, t)[1];
            theta[0] = value - lambda[0] * eta0;
            break;
        }
    }
    return theta;
}

// First and second derivatives of the eliminated coordinate with respect to
// the nuisance vector.
void slice_sensitivities(const SlicePlan& plan, const TargetFunction& target,
                         double t, const Vector& lambda, Vector& dphi,
                         Matrix& d2phi) {
    const std::size_t q = plan.p - 1;
    dphi.assign(q, 0.0);
    d2phi = Matrix(q, q);
    switch (plan.kind) {
        case SlicePlan::Kind::coordinate:
            break;
        case SlicePlan::Kind::linear: {
            std::size_t m = 0;
            for (std::size_t i = 0; i < plan.p; ++i)
                if (i != plan.drop)
                    dphi[m++] = -plan.coeffs[i] / plan.coeffs[plan.drop];
            break;
        }
        case SlicePlan::Kind::return_level: {
            const Vector probe = {0.0, lambda[0], lambda[1]};
            const Vector g = target.grad(probe, t);
            const Matrix h = target.hess(probe, t);
            dphi[0] = -g[1];          // -eta0
            dphi[1] = -g[2];          // -sigma * d eta0 / d xi
            d2phi(0, 1) = -h(1, 2);   // -d eta0 / d xi
            d2phi(1, 0) = -h(1, 2);
            d2phi(1, 1) = -h(2, 2);   // -sigma * d2 eta0 / d xi2
            break;
        }
    }
}

// The (p-1)-parameter likelihood of the slice, chaining derivatives through
// the elimination.
LikelihoodModel make_slice_model(const LikelihoodModel& model,
                                 const TargetFunction& target, double t,
                                 double value, const SlicePlan& plan,
                                 const Vector& lambda0) {
    LikelihoodModel slice;
    slice.p = plan.p - 1;
    for (std::size_t i = 0; i < plan.p; ++i)
        if (i != plan.drop) slice.names.push_back(
            i < model.names.size() ? model.names[i] : "theta" + std::to_string(i));
    slice.init = lambda0;
    const LikelihoodModel* base = &model;

    slice.in_domain = [base, target, t, value, plan](const Vector& lambda) {
        if (!slice_admissible(plan, lambda)) return false;
        return base->in_domain(slice_embed(plan, target, t, value, lambda));
    };
    slice.loglik = [base, target, t, value, plan](const Vector& lambda) {
        if (!slice_admissible(plan, lambda)) return kNegInf;
        return base->loglik(slice_embed(plan, target, t, value, lambda));
    };
    slice.grad = [base, target, t, value, plan](const Vector& lambda) {
        const Vector theta = slice_embed(plan, target, t, value, lambda);
        const Vector g = base->grad(theta);
        Vector dphi;
        Matrix d2phi;
        slice_sensitivities(plan, target, t, lambda, dphi, d2phi);
        Vector out(plan.p - 1);
        std::size_t m = 0;
        for (std::size_t i = 0; i < plan.p; ++i)
            if (i != plan.drop) {
                out[m] = g[i] + dphi[m] * g[plan.drop];
                ++m;
            }
        return out;
    };
    slice.hess = [base, target, t, value, plan](const Vector& lambda) {
        const Vector theta = slice_embed(plan, target, t, value, lambda);
        const Vector g = base->grad(theta);
        const Matrix h = base->hess(theta);
        Vector dphi;
        Matrix d2phi;
        slice_sensitivities(plan, target, t, lambda, dphi, d2phi);
        const std::size_t q = plan.p - 1;
        std::vector<std::size_t> idx;
        idx.reserve(q);
        for (std::size_t i = 0; i < plan.p; ++i)
            if (i != plan.drop) idx.push_back(i);
        Matrix out(q, q);
        for (std::size_t m = 0; m < q; ++m)
            for (std::size_t n = 0; n < q; ++n)
                out(m, n) = h(idx[m], idx[n]) + dphi[n] * h(idx[m], plan.drop) +
                            dphi[m] * h(plan.drop, idx[n]) +
                            dphi[m] * dphi[n] * h(plan.drop, plan.drop) +
                            g[plan.drop] * d2phi(m, n);
        return out;
    };
    return slice;
}

NaiveProfilePoint evaluate_slice(const LikelihoodModel& model,
                                 const TargetFunction& target, double t,
                                 double value, const SlicePlan& plan,
                                 const Vector& lambda0) {
    NaiveProfilePoint out;
    out.lambda = lambda0;

    if (plan.p == 1) {
        // nothing to optimise: the slice is a single point
        out.theta = slice_embed(plan, target, t, value, {});
        out.loglik = model.in_domain(out.theta) ? model.loglik(out.theta) : kNegInf;
        out.converged = std::isfinite(out.loglik);
        return out;
    }

    const LikelihoodModel slice =
        make_slice_model(model, target, t, value, plan, lambda0);
    try {
        const MleFit inner = fit_mle(slice, lambda0);
        out.lambda = inner.theta_hat;
        out.theta = slice_embed(plan, target, t, value, inner.theta_hat);
        out.loglik = inner.loglik_max;
        out.converged = inner.converged;
    } catch (const Error&) {
        // flagged, not thrown: report the best value reachable at the start
        out.theta = slice_embed(plan, target, t, value, lambda0);
        out.loglik = slice.in_domain(lambda0) ? slice.loglik(lambda0) : kNegInf;
        out.converged = false;
    }
    return out;
}

// Brent root refinement on [a, b] with f(a), f(b) of opposite sign.  Stops
// when |f| <= ftol; ok reports whether that was achieved before the
// interval collapsed.  Non-finite function values force bisection steps.
double brent_root(const std::function<double(double)>& f, double a, double b,
                  double fa, double fb, double ftol, int max_iter, bool& ok) {
    double c = a, fc = fa;
    double d = b - a, e = b - a;
    ok = false;
    for (int iter = 0; iter < max_iter; ++iter) {
        if ((fb > 0.0) == (fc > 0.0)) {
            c = a;
            fc = fa;
            d = e = b - a;
        }
        if (std::abs(fc) < std::abs(fb)) {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        if (std::isfinite(fb) && std::abs(fb) <= ftol) {
            ok = true;
            return b;
        }
        const double tol1 =
            2.0 * std::numeric_limits<double>::epsilon() * std::abs(b) + 1e-15;
        const double xm = 0.5 * (c - b);
        if (std::abs(xm) <= tol1) return b;  // interval exhausted

        const bool can_interpolate = std::isfinite(fa) && std::isfinite(fb) &&
                                     std::isfinite(fc) &&
                                     std::abs(e) >= tol1 &&
                                     std::abs(fa) > std::abs(fb);
        double step = xm;
        if (can_interpolate) {
            double pp, qq;
            const double s = fb / fa;
            if (a == c) {  // secant
                pp = 2.0 * xm * s;
                qq = 1.0 - s;
            } else {  // inverse quadratic
                const double q1 = fa / fc;
                const double r1 = fb / fc;
                pp = s * (2.0 * xm * q1 * (q1 - r1) - (b - a) * (r1 - 1.0));
                qq = (q1 - 1.0) * (r1 - 1.0) * (s - 1.0);
            }
            if (pp > 0.0) qq = -qq;
            pp = std::abs(pp);
            if (2.0 * pp < std::min(3.0 * xm * qq - std::abs(tol1 * qq),
                                    std::abs(e * qq))) {
                e = d;
                d = pp / qq;
                step = d;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += (std::abs(step) > tol1) ? step : (xm > 0.0 ? tol1 : -tol1);
        fb = f(b);
    }
    return b;
}

}  // namespace

NaiveProfilePoint naive_profile_value(const LikelihoodModel& model,
                                      const TargetFunction& target, double t,
                                      double value,
                                      const std::optional<Vector>& lambda_init) {
    const SlicePlan plan = make_slice_plan(model, target);
    Vector lambda0 = lambda_init ? *lambda_init : slice_extract(plan, model.init);
    if (lambda0.size() != plan.p - 1)
        throw InputError("naive_profile_value: nuisance start length mismatch");
    return evaluate_slice(model, target, t, value, plan, lambda0);
}

ProfileCurve naive_profile_curve(const LikelihoodModel& model,
                                 const TargetFunction& target, double t,
                                 const Vector& psi_values,
                                 const std::optional<Vector>& lambda_init) {
    if (psi_values.empty()) throw InputError("naive_profile_curve: empty grid");
    const SlicePlan plan = make_slice_plan(model, target);

    const MleFit fit = fit_mle(model);
    const double psi_hat = target.value(fit.theta_hat, t);
    const Vector lambda_hat =
        lambda_init ? *lambda_init : slice_extract(plan, fit.theta_hat);

    std::size_t k0 = 0;
    for (std::size_t k = 1; k < psi_values.size(); ++k)
        if (std::abs(psi_values[k] - psi_hat) < std::abs(psi_values[k0] - psi_hat))
            k0 = k;

    ProfileCurve curve;
    curve.psi = psi_values;
    curve.loglik.assign(psi_values.size(), kNegInf);
    curve.converged.assign(psi_values.size(), false);

    // sweep outward from the value closest to the fitted one, warm-starting
    // each inner solve from its neighbour
    const auto solve_run = [&](std::size_t begin, bool ascending) {
        Vector warm = lambda_hat;
        std::size_t k = begin;
        while (true) {
            const NaiveProfilePoint point =
                evaluate_slice(model, target, t, psi_values[k], plan, warm);
            curve.loglik[k] = point.loglik;
            curve.converged[k] = point.converged;
            if (point.converged) warm = point.lambda;
            if (ascending) {
                if (++k == psi_values.size()) break;
            } else {
                if (k-- == 0) break;
            }
        }
    };
    solve_run(k0, true);
    if (k0 > 0) solve_run(k0 - 1, false);
    return curve;
}

double naive_bound(const LikelihoodModel& model, const TargetFunction& target,
                   double t, const MleFit& fit, double delta, BoundSide side) {
    if (!(delta > 0.0)) throw DomainError("naive_bound: delta must be positive");
    const SlicePlan plan = make_slice_plan(model, target);
    const double level = fit.loglik_max - delta;
    const double psi_hat = target.value(fit.theta_hat, t);
    const double dir = side == BoundSide::upper ? 1.0 : -1.0;

    // curvature-based first step: half the local quadratic half-width
    double step = 0.0;
    {
        const std::size_t p = model.p;
        Matrix neg(p, p);
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < p; ++j) neg(i, j) = -fit.hessian_at_max(i, j);
        Matrix lower;
        if (try_cholesky(neg, lower)) {
            const Vector h = target.grad(fit.theta_hat, t);
            const double q = dot(h, cholesky_solve(lower, h));
            if (q > 0.0) step = 0.5 * std::sqrt(2.0 * delta * q);
        }
    }
    if (!(step > 0.0)) step = 0.25 * (1.0 + std::abs(psi_hat));

    Vector warm = slice_extract(plan, fit.theta_hat);
    const auto profile_gap = [&](double psi) {
        const NaiveProfilePoint point =
            evaluate_slice(model, target, t, psi, plan, warm);
        if (point.converged) warm = point.lambda;
        return point.loglik - level;
    };

    double lo_psi = psi_hat, lo_gap = delta;  // the profile peaks at psi_hat
    double hi_psi = 0.0, hi_gap = 0.0;
    bool bracketed = false;
    for (int doubling = 0; doubling <= 10; ++doubling) {
        const double psi = psi_hat + dir * step;
        const double gap = profile_gap(psi);
        if (!(gap > 0.0)) {
            hi_psi = psi;
            hi_gap = gap;
            bracketed = true;
            break;
        }
        lo_psi = psi;
        lo_gap = gap;
        step *= 2.0;
    }
    if (!bracketed)
        throw UnboundedError(
            "naive_bound: the profile log-likelihood stays above the requested "
            "level over the whole expansion range; the interval end-point does "
            "not exist (practical non-identifiability)");

    bool ok = false;
    const double root =
        brent_root(profile_gap, lo_psi, hi_psi, lo_gap, hi_gap, 1e-8, 200, ok);
    if (!ok)
        throw ConvergenceError(
            "naive_bound: root refinement stalled before the deviance residual "
            "reached 1e-8");
    return root;
}

LinregInterval linreg_interval(const LinearGaussianSpec& spec, const Vector& x_new,
                               double alpha) {
    const std::size_t n = spec.responses.size();
    const std::size_t q = spec.design.cols();
    if (spec.design.rows() != n)
        throw InputError("linreg_interval: design and response sizes differ");
    if (x_new.size() != q)
        throw InputError("linreg_interval: x_new length does not match the design");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw DomainError("linreg_interval: alpha must lie in (0, 1)");
    if (spec.variance_known && !(spec.sigma2 > 0.0))
        throw DomainError("linreg_interval: known variance must be positive");

    const Vector theta_hat = solve_least_squares(spec.design, spec.responses);

    Matrix xtx(q, q);
    for (std::size_t i = 0; i < q; ++i)
        for (std::size_t j = 0; j < q; ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < n; ++r)
                s += spec.design(r, i) * spec.design(r, j);
            xtx(i, j) = s;
        }
    Vector unit;
    try {
        unit = solve_square(xtx, x_new);
    } catch (const SingularSystemError&) {
        throw RankError("linreg_interval: design is rank deficient");
    }
    const double leverage = dot(x_new, unit);

    double sigma2 = spec.sigma2;
    if (!spec.variance_known) {
        double ssr = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            double fitcol = 0.0;
            for (std::size_t j = 0; j < q; ++j)
                fitcol += spec.design(r, j) * theta_hat[j];
            const double resid = spec.responses[r] - fitcol;
            ssr += resid * resid;
        }
        sigma2 = ssr / static_cast<double>(n);  // maximum-likelihood estimate
    }

    LinregInterval out;
    out.eta_hat = dot(x_new, theta_hat);
    out.s_mu = std::sqrt(sigma2 * leverage);
    const double delta = 0.5 * chisq_quantile(1.0 - alpha, 1);
    const double half = out.s_mu * std::sqrt(2.0 * delta);
    out.lower = out.eta_hat - half;
    out.upper = out.eta_hat + half;
    return out;
}

}  // namespace prolik
