#include "prolik/tracers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>

#include "prolik/errors.hpp"

namespace prolik {

using numerics::chisq_quantile;
using numerics::cholesky_solve;
using numerics::dot;
using numerics::matvec;
using numerics::norm2;
using numerics::solve_least_squares;
using numerics::solve_square;
using numerics::try_cholesky;

AugmentedState bubble_init(const MleFit& fit, const Vector& h0, double delta1, int sign) {
    if (!(delta1 > 0.0)) throw DomainError("bubble_init: delta1 must be positive");
    const std::size_t p = fit.theta_hat.size();
    if (h0.size() != p) throw InputError("bubble_init: gradient length mismatch");

    // H0 = negative Hessian of the log-likelihood at the maximum.
    Matrix h0mat(p, p);
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < p; ++j) h0mat(i, j) = -fit.hessian_at_max(i, j);
    Matrix lower;
    if (!try_cholesky(h0mat, lower))
        throw CurvatureError(
            "bubble_init: negative Hessian at the maximum is not positive definite");

    const Vector step = cholesky_solve(lower, h0);  // H0^{-1} h0
    const double q = dot(h0, step);
    if (!(q > 0.0))
        throw CurvatureError("bubble_init: target gradient has no curvature component");

    AugmentedState out;
    out.nu = (sign >= 0 ? 1.0 : -1.0) * std::sqrt(q) / std::sqrt(2.0 * delta1);
    out.theta = fit.theta_hat;
    for (std::size_t i = 0; i < p; ++i) out.theta[i] += step[i] / out.nu;
    return out;
}

Vector project_onto_level(const LikelihoodModel& model, Vector theta,
                          double loglik_target, int iterations) {
    for (int it = 0; it < iterations; ++it) {
        const double l = model.loglik(theta);
        if (!std::isfinite(l)) return theta;
        const Vector g = model.grad(theta);
        const double gg = dot(g, g);
        if (!(gg > 1e-300)) return theta;
        double step = (loglik_target - l) / gg;
        // stay inside the model domain, halving the correction if needed
        for (int k = 0; k < 20; ++k) {
            Vector candidate = theta;
            for (std::size_t i = 0; i < candidate.size(); ++i)
                candidate[i] += step * g[i];
            if (model.in_domain(candidate)) {
                theta = std::move(candidate);
                break;
            }
            step *= 0.5;
        }
    }
    return theta;
}

// ---------------------------------------------------------------------------
// Band field and trace.

namespace {

// Bordered stationarity matrix shared by the band and bubble fields:
//   [ -hess_eta + nu * hess_loglik   grad_loglik ]
//   [ grad_loglik'                   0           ]
Matrix bordered_matrix(const Matrix& hess_eta, const Matrix& hess_l, const Vector& grad_l,
                       double nu) {
    const std::size_t p = grad_l.size();
    Matrix m(p + 1, p + 1);
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j < p; ++j)
            m(i, j) = -hess_eta(i, j) + nu * hess_l(i, j);
        m(i, p) = grad_l[i];
        m(p, i) = grad_l[i];
    }
    m(p, p) = 0.0;
    return m;
}

// Newton corrections on the full stationarity system
//   grad eta(theta, t) - nu * grad loglik(theta) = 0,
//   loglik(theta) = loglik_target,
// used to move a nearby approximation (e.g. the locally quadratic boundary
// point) exactly onto the constrained-extremum path before integrating.
// Returns the best state reached; a singular Jacobian or a domain wall just
// stops the correction early.
AugmentedState polish_stationary_point(const LikelihoodModel& model,
                                       const TargetFunction& target, double t,
                                       AugmentedState state, double loglik_target,
                                       int iterations) {
    const std::size_t p = model.p;
    for (int it = 0; it < iterations; ++it) {
        const Vector gl = model.grad(state.theta);
        const Vector ge = target.grad(state.theta, t);
        const double c = model.loglik(state.theta) - loglik_target;
        Vector rhs(p + 1);
        double residual = std::abs(c) / (1.0 + std::abs(loglik_target));
        for (std::size_t i = 0; i < p; ++i) {
            rhs[i] = -(ge[i] - state.nu * gl[i]);
            residual = std::max(residual, std::abs(rhs[i]) / (1.0 + norm2(ge)));
        }
        rhs[p] = -c;
        if (residual <= 1e-14) break;

        const Matrix hl = model.hess(state.theta);
        const Matrix he = target.hess(state.theta, t);
        Matrix jac(p + 1, p + 1);
        for (std::size_t i = 0; i < p; ++i) {
            for (std::size_t j = 0; j < p; ++j)
                jac(i, j) = he(i, j) - state.nu * hl(i, j);
            jac(i, p) = -gl[i];
            jac(p, i) = gl[i];
        }
        jac(p, p) = 0.0;

        Vector step;
        try {
            step = solve_square(jac, rhs);
        } catch (const Error&) {
            break;
        }
        double alpha = 1.0;
        bool moved = false;
        for (int k = 0; k < 20; ++k) {
            Vector candidate = state.theta;
            for (std::size_t i = 0; i < p; ++i) candidate[i] += alpha * step[i];
            if (model.in_domain(candidate) &&
                std::isfinite(model.loglik(candidate))) {
                state.theta = std::move(candidate);
                state.nu += alpha * step[p];
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!moved) break;
    }
    return state;
}

}  // namespace

AugmentedState band_field(const LikelihoodModel& model, const TargetFunction& target,
                          const AugmentedState& state, double s) {
    const std::size_t p = model.p;
    const Matrix m = bordered_matrix(target.hess(state.theta, s), model.hess(state.theta),
                                     model.grad(state.theta), state.nu);
    const Vector cross = target.cross(state.theta, s);
    Vector rhs(p + 1, 0.0);
    for (std::size_t i = 0; i < p; ++i) rhs[i] = cross[i];
    const Vector sol = solve_square(m, rhs);

    AugmentedState out;
    out.theta.assign(sol.begin(), sol.begin() + static_cast<std::ptrdiff_t>(p));
    out.nu = sol[p];
    return out;
}

Vector band_field_gev_eliminated(const LikelihoodModel& model,
                                 const TargetFunction& target, const Vector& theta,
                                 double s) {
    if (model.p != 3)
        throw InputError("band_field_gev_eliminated: needs a 3-parameter model");
    const Vector g = model.grad(theta);
    const Matrix h = model.hess(theta);
    if (std::abs(g[0]) < 1e-12)
        throw DomainError(
            "band_field_gev_eliminated: location score vanishes; the reduction "
            "is undefined here");

    // Score ratios r_k = g[k]/g[0] and their parameter derivatives
    // (quotient rule d r_k / d theta_j = (H(j,k) g0 - g_k H(j,0)) / g0^2).
    const double g0sq = g[0] * g[0];
    auto r_deriv = [&](std::size_t k, std::size_t j) {
        return (h(j, k) * g[0] - g[k] * h(j, 0)) / g0sq;
    };

    const Matrix he = target.hess(theta, s);
    const Vector cross = target.cross(theta, s);

    Matrix m(3, 3);
    Vector rhs(3);
    // reduced stationarity rows for the scale and shape components
    for (std::size_t row = 0; row < 2; ++row) {
        const std::size_t k = row + 1;  // 1 = scale, 2 = shape
        for (std::size_t j = 0; j < 3; ++j) m(row, j) = he(j, k) - r_deriv(k, j);
        rhs[row] = -cross[k];
    }
    // tangency row: stay on the likelihood level set
    for (std::size_t j = 0; j < 3; ++j) m(2, j) = g[j];
    rhs[2] = 0.0;
    return solve_square(m, rhs);
}

BandTrace trace_band(const LikelihoodModel& model, const TargetFunction& target,
                     const MleFit& fit, double delta, BoundSide side,
                     const std::vector<double>& s_grid, const TraceOptions& options) {
    if (s_grid.empty()) throw InputError("trace_band: empty grid");
    for (std::size_t i = 1; i < s_grid.size(); ++i)
        if (!(s_grid[i] > s_grid[i - 1]))
            throw InputError("trace_band: grid must be strictly increasing");

    const double loglik_target = fit.loglik_max - delta;
    const std::size_t p = model.p;

    const ProfileBound start = profile_bound(model, target, s_grid.front(), fit, delta, side);

    BandTrace out;
    auto push_point = [&](double s, const Vector& theta, double nu) {
        BandPoint pt;
        pt.s = s;
        pt.theta = theta;
        pt.nu = nu;
        pt.eta = target.value(theta, s);
        out.points.push_back(std::move(pt));
    };

    if (s_grid.size() == 1) {
        push_point(s_grid.front(), start.theta, start.nu);
        out.completed = true;
        return out;
    }

    VectorField field;
    field.dimension = p + 1;
    field.eval = [&](double s, const Vector& y) -> std::optional<Vector> {
        AugmentedState st;
        st.theta.assign(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(p));
        st.nu = y[p];
        try {
            const AugmentedState d = band_field(model, target, st, s);
            Vector dy(p + 1);
            for (std::size_t i = 0; i < p; ++i) dy[i] = d.theta[i];
            dy[p] = d.nu;
            return dy;
        } catch (const Error&) {
            return std::nullopt;
        }
    };
    field.project = [&](double s, const Vector& y) -> Vector {
        Vector theta(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(p));
        theta = project_onto_level(model, std::move(theta), loglik_target);
        // multiplier drift control: blend the integrated value with the
        // least-squares stationarity fit at the projected point
        const Vector gl = model.grad(theta);
        const Vector ge = target.grad(theta, s);
        const double gg = dot(gl, gl);
        double nu = y[p];
        if (gg > 1e-300) nu = 0.5 * nu + 0.5 * (dot(gl, ge) / gg);
        Vector projected(p + 1);
        for (std::size_t i = 0; i < p; ++i) projected[i] = theta[i];
        projected[p] = nu;
        return projected;
    };

    Vector y0(p + 1);
    for (std::size_t i = 0; i < p; ++i) y0[i] = start.theta[i];
    y0[p] = start.nu;
    OdeOptions ode;
    ode.max_step = options.max_step;
    out.path = integrate(field, s_grid.front(), s_grid.back(), y0, options.rtol,
                         options.atol, ode);

    const double reached = out.path.times.back();
    for (double s : s_grid) {
        if (s > reached + 1e-12 * (1.0 + std::abs(reached))) break;
        Vector y = path_state_at(out.path, std::min(s, reached));
        Vector theta(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(p));
        theta = project_onto_level(model, std::move(theta), loglik_target);
        push_point(s, theta, y[p]);
    }
    out.completed = out.path.completed() && out.points.size() == s_grid.size();
    if (!out.path.completed()) out.halt_message = out.path.halt_message;
    return out;
}

// ---------------------------------------------------------------------------
// Contour field and trace.

DirectionFamily circle_directions() {
    DirectionFamily f;
    f.d = 2;
    f.a = [](double t) -> Vector { return {std::cos(t), std::sin(t)}; };
    f.a_dot = [](double t) -> Vector { return {-std::sin(t), std::cos(t)}; };
    return f;
}

Vector contour_field(const LikelihoodModel& model, const DirectionFamily& family,
                     const std::vector<std::size_t>& interest, ContourBranch branch,
                     const Vector& theta, double t, double* residual_out) {
    const std::size_t p = model.p;
    if (interest.size() != 2 || interest[0] >= p || interest[1] >= p ||
        interest[0] == interest[1])
        throw InputError("contour_field: need two distinct interest indices");

    const Vector z = model.grad(theta);
    const double u = dot(z, z);
    if (!(u > 1e-300))
        throw DomainError("contour_field: score vanishes (at the maximum?)");
    const double nu = (branch == ContourBranch::plus ? 1.0 : -1.0) / std::sqrt(u);

    const Matrix hl = model.hess(theta);
    // B = -nu (I - z z'/u) (-hess_loglik), stacked over the tangency row z'.
    Matrix stacked(p + 1, p);
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j < p; ++j) {
            double hij = -hl(i, j);  // negative log-likelihood Hessian
            double proj = 0.0;
            for (std::size_t k = 0; k < p; ++k) proj += z[i] * z[k] * (-hl(k, j));
            stacked(i, j) = -nu * (hij - proj / u);
        }
        stacked(p, i) = z[i];
    }

    const Vector adot = family.a_dot(t);
    Vector rhs(p + 1, 0.0);
    rhs[interest[0]] = adot[0];
    rhs[interest[1]] = adot[1];

    const Vector sol = solve_least_squares(stacked, rhs);

    // the system is exact on the stationarity manifold, so the least-squares
    // residual measures how far the state has drifted off it; integration
    // drift stays orders of magnitude below this gate
    Vector resid(p + 1);
    for (std::size_t i = 0; i < p + 1; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < p; ++j) acc += stacked(i, j) * sol[j];
        resid[i] = acc - rhs[i];
    }
    const double residual = norm2(resid);
    if (residual_out) *residual_out = residual;
    if (residual > 1e-6 * (1.0 + norm2(rhs)))
        throw RankError("contour_field: stacked system inconsistent at this state");
    return sol;
}

namespace {

constexpr double kPi = 3.14159265358979323846;

// First-order-condition residual of a contour state: how far the embedded
// direction is from being parallel to the score.
double contour_residual(const Vector& z, const Vector& a_embedded) {
    const double u = dot(z, z);
    if (!(u > 1e-300)) return std::numeric_limits<double>::infinity();
    const double nu_ls = dot(a_embedded, z) / u;
    Vector r(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) r[i] = a_embedded[i] - nu_ls * z[i];
    return norm2(r);
}

}  // namespace

ContourTrace trace_contour(const LikelihoodModel& model, const MleFit& fit,
                           std::size_t index_a, std::size_t index_b, double alpha,
                           const ContourOptions& options) {
    const std::size_t p = model.p;
    if (p < 2) throw InputError("trace_contour: need at least two parameters");
    if (index_a >= p || index_b >= p || index_a == index_b)
        throw InputError("trace_contour: interest indices invalid");
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("trace_contour: alpha in (0,1)");
    if (options.bins < 8 || options.bins % 2 != 0)
        throw InputError("trace_contour: bins must be even and at least 8");

    const double delta = 0.5 * chisq_quantile(1.0 - alpha, 2);
    const double loglik_target = fit.loglik_max - delta;
    const std::vector<std::size_t> interest = {index_a, index_b};
    const DirectionFamily family = circle_directions();
    const TargetFunction psi1 = target_coordinate(index_a, p);

    // at t = 0 the direction is (1, 0): the maximiser of psi_1 carries a
    // negative stationarity multiplier (score points inward), the minimiser
    // a positive one
    const ProfileBound upper =
        profile_bound(model, psi1, 0.0, fit, delta, BoundSide::upper);
    const ProfileBound lower =
        profile_bound(model, psi1, 0.0, fit, delta, BoundSide::lower);

    ContourTrace out;

    auto make_field = [&](ContourBranch branch) {
        VectorField f;
        f.dimension = p;
        f.eval = [&model, &family, interest, branch](
                     double t, const Vector& y) -> std::optional<Vector> {
            try {
                return contour_field(model, family, interest, branch, y, t);
            } catch (const Error&) {
                return std::nullopt;
            }
        };
        f.project = [&model, loglik_target](double, const Vector& y) -> Vector {
            return project_onto_level(model, y, loglik_target);
        };
        return f;
    };

    OdeOptions ode;
    ode.max_step = options.ode.max_step;
    out.path_minus = integrate(make_field(ContourBranch::minus), 0.0, 2.0 * kPi,
                               upper.theta, options.ode.rtol, options.ode.atol, ode);
    out.path_plus = integrate(make_field(ContourBranch::plus), 0.0, 2.0 * kPi,
                              lower.theta, options.ode.rtol, options.ode.atol, ode);
    out.completed = out.path_minus.completed() && out.path_plus.completed();
    if (!out.path_minus.completed())
        out.halt_message = "multiplier-negative branch: " + out.path_minus.halt_message;
    else if (!out.path_plus.completed())
        out.halt_message = "multiplier-positive branch: " + out.path_plus.halt_message;

    // Sample both branches on the common angle grid.  A branch point traced
    // at parameter t maximises a(t)'psi when its multiplier is negative and
    // minimises it otherwise, so the canonical (maximising) angle of a
    // plus-branch point is t + pi.
    struct Candidate {
        bool present = false;
        ContourPoint point;
    };
    std::vector<Candidate> best(options.bins);
    std::vector<Candidate> other(options.bins);

    auto sample_branch = [&](const OdePath& path, ContourBranch branch) {
        const double step = 2.0 * kPi / static_cast<double>(options.bins);
        const double reached = path.times.back();
        for (std::size_t k = 0; k < options.bins; ++k) {
            const double t = static_cast<double>(k) * step;
            if (t > reached + 1e-12) break;
            Vector theta = path_state_at(path, t);
            theta = project_onto_level(model, std::move(theta), loglik_target);
            const double t_canon =
                (branch == ContourBranch::minus) ? t : std::fmod(t + kPi, 2.0 * kPi);
            const std::size_t bin =
                static_cast<std::size_t>(std::llround(t_canon / step)) % options.bins;

            ContourPoint pt;
            pt.t = t_canon;
            pt.theta = theta;
            pt.psi = {theta[index_a], theta[index_b]};
            pt.branch = branch;
            Vector a_embedded(p, 0.0);
            const Vector a = family.a(t_canon);
            a_embedded[index_a] = a[0];
            a_embedded[index_b] = a[1];
            pt.residual = contour_residual(model.grad(theta), a_embedded);

            Candidate& slot = best[bin];
            if (!slot.present) {
                slot.present = true;
                slot.point = std::move(pt);
            } else {
                Candidate& spare = other[bin];
                spare.present = true;
                if (pt.residual < slot.point.residual) {
                    spare.point = std::move(slot.point);
                    slot.point = std::move(pt);
                } else {
                    spare.point = std::move(pt);
                }
            }
        }
    };
    sample_branch(out.path_minus, ContourBranch::minus);
    sample_branch(out.path_plus, ContourBranch::plus);

    for (std::size_t k = 0; k < options.bins; ++k) {
        if (!best[k].present) continue;
        if (other[k].present) {
            const Vector& a = best[k].point.psi;
            const Vector& b = other[k].point.psi;
            const double gap = std::hypot(a[0] - b[0], a[1] - b[1]);
            out.max_overlap_gap = std::max(out.max_overlap_gap, gap);
        }
        out.points.push_back(best[k].point);
    }
    std::sort(out.points.begin(), out.points.end(),
              [](const ContourPoint& a, const ContourPoint& b) { return a.t < b.t; });
    out.merge_gap_warning = out.max_overlap_gap > options.merge_tol;
    return out;
}

// ---------------------------------------------------------------------------
// Bubble trace.

AugmentedState bubble_field(const LikelihoodModel& model, const TargetFunction& target,
                            double t, const AugmentedState& state) {
    const std::size_t p = model.p;
    const Matrix m = bordered_matrix(target.hess(state.theta, t), model.hess(state.theta),
                                     model.grad(state.theta), state.nu);
    Vector rhs(p + 1, 0.0);
    rhs[p] = -1.0;  // the log-likelihood drops one-for-one with the level
    const Vector sol = solve_square(m, rhs);
    AugmentedState out;
    out.theta.assign(sol.begin(), sol.begin() + static_cast<std::ptrdiff_t>(p));
    out.nu = sol[p];
    return out;
}

BubbleTrace trace_bubble(const LikelihoodModel& model, const TargetFunction& target,
                         double t, const MleFit& fit, double delta_target, int sign,
                         double delta1, const TraceOptions& options) {
    if (!(delta_target > 0.0)) throw DomainError("trace_bubble: delta_target must be positive");
    if (delta1 <= 0.0) delta1 = delta_target / 100.0;
    if (!(delta1 < delta_target))
        throw DomainError("trace_bubble: delta1 must be below delta_target");
    const std::size_t p = model.p;

    const Vector h0 = target.grad(fit.theta_hat, t);
    const AugmentedState init = bubble_init(fit, h0, delta1, sign);
    // the integrated multiplier follows the stationarity convention
    // grad eta = nu grad loglik, the opposite sign of the inflation form
    AugmentedState start;
    start.theta = init.theta;
    start.nu = -init.nu;
    // the locally quadratic boundary point misses the true constrained
    // extremum by O(delta1); land exactly on the path before integrating so
    // the end point carries integration error only
    start = polish_stationary_point(model, target, t, std::move(start),
                                    fit.loglik_max - delta1, 8);
    Vector y0(p + 1);
    for (std::size_t i = 0; i < p; ++i) y0[i] = start.theta[i];
    y0[p] = start.nu;

    VectorField field;
    field.dimension = p + 1;
    field.eval = [&](double, const Vector& y) -> std::optional<Vector> {
        AugmentedState st;
        st.theta.assign(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(p));
        st.nu = y[p];
        try {
            const AugmentedState d = bubble_field(model, target, t, st);
            Vector dy(p + 1);
            for (std::size_t i = 0; i < p; ++i) dy[i] = d.theta[i];
            dy[p] = d.nu;
            return dy;
        } catch (const Error&) {
            return std::nullopt;
        }
    };
    field.project = [&](double level, const Vector& y) -> Vector {
        Vector theta(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(p));
        theta = project_onto_level(model, std::move(theta), fit.loglik_max - level);
        Vector projected(p + 1);
        for (std::size_t i = 0; i < p; ++i) projected[i] = theta[i];
        projected[p] = y[p];
        return projected;
    };

    BubbleTrace out;
    OdeOptions ode;
    ode.max_step = options.max_step;
    out.path = integrate(field, delta1, delta_target, y0, options.rtol, options.atol, ode);
    out.level_reached = out.path.completed();
    out.status = out.level_reached
                     ? "ok"
                     : "level not reached: " + out.path.halt_message +
                           " (the confidence region may not extend this far or may "
                           "be disconnected)";

    const Vector& y_end = out.path.states.back();
    Vector theta_end(y_end.begin(), y_end.begin() + static_cast<std::ptrdiff_t>(p));
    const double level_end = out.path.times.back();
    theta_end = project_onto_level(model, std::move(theta_end), fit.loglik_max - level_end);

    ProfileBound bound;
    bound.side = sign >= 0 ? BoundSide::upper : BoundSide::lower;
    bound.theta = theta_end;
    bound.value = target.value(theta_end, t);
    const Vector gl = model.grad(theta_end);
    const Vector ge = target.grad(theta_end, t);
    const double gg = dot(gl, gl);
    bound.nu = (gg > 1e-300) ? dot(gl, ge) / gg : y_end[p];
    Vector kkt(p);
    for (std::size_t i = 0; i < p; ++i) kkt[i] = ge[i] - bound.nu * gl[i];
    bound.kkt_residual = norm2(kkt);
    bound.constraint_residual =
        std::abs(model.loglik(theta_end) - (fit.loglik_max - level_end));
    bound.converged = out.level_reached &&
                      bound.kkt_residual <= 1e-6 * (1.0 + norm2(ge)) &&
                      bound.constraint_residual <= 1e-8 * (1.0 + std::abs(fit.loglik_max));
    out.bound = bound;
    return out;
}

}  // namespace prolik
