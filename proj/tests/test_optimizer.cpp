#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "prolik/errors.hpp"
#include "prolik/models.hpp"
#include "prolik/optimizer.hpp"
#include "prolik/target.hpp"
#include "test_helpers.hpp"

using namespace prolik;

namespace {

// Half of the 0.95 chi-square quantile with one degree of freedom.
constexpr double kDelta95 = 1.9207294103470627;

LikelihoodModel three_point_line_known_variance() {
    Matrix x(3, 2);
    x(0, 0) = 1.0;
    x(1, 0) = 1.0;
    x(2, 0) = 1.0;
    x(0, 1) = 0.0;
    x(1, 1) = 1.0;
    x(2, 1) = 2.0;
    LinearGaussianSpec spec;
    spec.design = x;
    spec.responses = {0.0, 1.0, 2.0};
    spec.variance_known = true;
    spec.sigma2 = 1.0;
    return build_linear_gaussian(spec);
}

// 100 observations with sample mean exactly 0 and ML variance exactly 1.
LikelihoodModel balanced_gaussian_mean() {
    Vector y;
    for (int i = 0; i < 50; ++i) {
        y.push_back(1.0);
        y.push_back(-1.0);
    }
    LinearGaussianSpec spec;
    spec.design = Matrix(100, 1, 1.0);
    spec.responses = y;
    spec.variance_known = false;
    return build_linear_gaussian(spec);
}

// Two maxima at x = -1 and x = +1 separated by a local minimum at 0 where
// the Hessian is positive, forcing the quasi-Newton fallback.
LikelihoodModel double_well() {
    LikelihoodModel m;
    m.p = 1;
    m.names = {"x"};
    m.loglik = [](const Vector& t) {
        const double q = t[0] * t[0] - 1.0;
        return -q * q;
    };
    m.grad = [](const Vector& t) {
        return Vector{-4.0 * t[0] * (t[0] * t[0] - 1.0)};
    };
    m.hess = [](const Vector& t) {
        Matrix h(1, 1);
        h(0, 0) = -12.0 * t[0] * t[0] + 4.0;
        return h;
    };
    m.in_domain = [](const Vector&) { return true; };
    m.init = {0.05};
    return m;
}

// Log-likelihood flat in the second coordinate: the likelihood region is an
// unbounded strip, so maximising theta_2 over it cannot terminate.
LikelihoodModel flat_ridge() {
    LikelihoodModel m;
    m.p = 2;
    m.names = {"x", "free"};
    m.loglik = [](const Vector& t) { return -0.5 * t[0] * t[0]; };
    m.grad = [](const Vector& t) { return Vector{-t[0], 0.0}; };
    m.hess = [](const Vector&) {
        Matrix h(2, 2);
        h(0, 0) = -1.0;
        return h;
    };
    m.in_domain = [](const Vector&) { return true; };
    m.init = {0.0, 0.0};
    return m;
}

}  // namespace

TEST_CASE("linear-Gaussian fit from a cold start equals least squares") {
    const LikelihoodModel m = three_point_line_known_variance();
    const MleFit fit = fit_mle(m, Vector{5.0, -3.0});
    CHECK(fit.converged);
    CHECK(std::abs(fit.theta_hat[0] - 0.0) < 1e-9);
    CHECK(std::abs(fit.theta_hat[1] - 1.0) < 1e-9);
    // Hessian of the quadratic log-likelihood is -X'X here.
    CHECK(fit.hessian_at_max(0, 0) == doctest::Approx(-3.0));
    CHECK(fit.hessian_at_max(0, 1) == doctest::Approx(-3.0));
    CHECK(fit.hessian_at_max(1, 1) == doctest::Approx(-5.0));
}

TEST_CASE("intercept-only fit with profiled variance recovers the sample mean") {
    LinearGaussianSpec spec;
    spec.design = Matrix(3, 1, 1.0);
    spec.responses = {1.0, 2.0, 3.0};
    const LikelihoodModel m = build_linear_gaussian(spec);
    const MleFit fit = fit_mle(m);
    CHECK(fit.converged);
    CHECK(std::abs(fit.theta_hat[0] - 2.0) < 1e-9);
    const double s2 = 2.0 / 3.0;  // ML variance, denominator n
    const double expected = -1.5 * (std::log(2.0 * M_PI * s2) + 1.0);
    CHECK(fit.loglik_max == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("annual-maxima GEV fit matches an independently computed optimum") {
    const LikelihoodModel m = build_iid_gev(test_helpers::venice_sea_levels());
    const MleFit fit = fit_mle(m);
    CHECK(fit.converged);
    CHECK(std::abs(fit.theta_hat[0] - 1.11097923) < 5e-6);
    CHECK(std::abs(fit.theta_hat[1] - 0.17175993) < 5e-6);
    CHECK(std::abs(fit.theta_hat[2] - (-0.07672273)) < 5e-6);
    CHECK(std::abs(fit.loglik_max - 12.149149820280789) < 1e-8);

    const Vector g = m.grad(fit.theta_hat);
    CHECK(prolik::numerics::norm2(g) <= 1e-6 * (1.0 + std::abs(fit.loglik_max)));

    // Negative Hessian at the maximum must be positive definite.
    Matrix neg(3, 3), lower;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) neg(i, j) = -fit.hessian_at_max(i, j);
    CHECK(prolik::numerics::try_cholesky(neg, lower));
}

TEST_CASE("fitting rejects out-of-domain starts and exhausted budgets") {
    const LikelihoodModel m = build_iid_gev(test_helpers::venice_sea_levels());
    CHECK_THROWS_AS(fit_mle(m, Vector{1.0, -1.0, 0.1}), DomainError);
    CHECK_THROWS_AS(fit_mle(m, Vector{1.0, 1.0}), InputError);
    FitOptions tight;
    tight.max_iterations = 1;
    CHECK_THROWS_AS(fit_mle(m, std::nullopt, tight), ConvergenceError);
}

TEST_CASE("quasi-Newton fallback escapes a convex start between two maxima") {
    const LikelihoodModel m = double_well();
    const MleFit right = fit_mle(m, Vector{0.05});
    CHECK(right.converged);
    CHECK(std::abs(right.theta_hat[0] - 1.0) < 1e-7);
    const MleFit left = fit_mle(m, Vector{-0.05});
    CHECK(std::abs(left.theta_hat[0] + 1.0) < 1e-7);
}

TEST_CASE("GEV fit is robust to a start close to the shape floor") {
    const LikelihoodModel m = build_iid_gev(test_helpers::venice_sea_levels());
    // sigma must be large enough that every observation stays inside the
    // support when the shape is this negative
    const MleFit fit = fit_mle(m, Vector{1.1, 0.9, -0.9});
    CHECK(fit.converged);
    CHECK(std::abs(fit.theta_hat[2] - (-0.07672273)) < 5e-6);
}

TEST_CASE("profiled-variance mean interval matches the concentration closed form") {
    const LikelihoodModel m = balanced_gaussian_mean();
    const MleFit fit = fit_mle(m);
    REQUIRE(fit.converged);
    CHECK(std::abs(fit.theta_hat[0]) < 1e-10);

    const TargetFunction eta = target_coordinate(0, 1);
    const ProfileBound up = profile_bound(m, eta, 0.0, fit, kDelta95, BoundSide::upper);
    const ProfileBound lo = profile_bound(m, eta, 0.0, fit, kDelta95, BoundSide::lower);

    // mu_hat +- sigma_hat * sqrt(exp(2 delta / n) - 1) with n = 100.
    const double half_width = 0.1978938298191409;
    CHECK(std::abs(up.value - half_width) < 1e-6);
    CHECK(std::abs(lo.value + half_width) < 1e-6);
    CHECK(up.nu < 0.0);
    CHECK(lo.nu > 0.0);
    CHECK(up.constraint_residual <= 1e-8 * (1.0 + std::abs(fit.loglik_max)));
    CHECK(lo.constraint_residual <= 1e-8 * (1.0 + std::abs(fit.loglik_max)));
}

TEST_CASE("known-variance regression prediction bounds are exact") {
    const LikelihoodModel m = three_point_line_known_variance();
    const MleFit fit = fit_mle(m);
    REQUIRE(fit.converged);

    const TargetFunction eta = target_linear({1.0, 3.0});
    const ProfileBound up = profile_bound(m, eta, 0.0, fit, kDelta95, BoundSide::upper);
    const ProfileBound lo = profile_bound(m, eta, 0.0, fit, kDelta95, BoundSide::lower);

    // eta_hat +- sqrt(2 delta) * s with s^2 = x' (X'X)^{-1} x = 7/3.
    CHECK(std::abs(up.value - 5.993894439514019) < 1e-8);
    CHECK(std::abs(lo.value - 0.006105560485981432) < 1e-8);
    CHECK(up.value >= 3.0);
    CHECK(lo.value <= 3.0);
    CHECK(up.kkt_residual <= 1e-8);
    CHECK(lo.kkt_residual <= 1e-8);
}

TEST_CASE("annual-maxima shape interval brackets the estimate with tight residuals") {
    const LikelihoodModel m = build_iid_gev(test_helpers::venice_sea_levels());
    const MleFit fit = fit_mle(m);
    REQUIRE(fit.converged);

    const TargetFunction eta = target_coordinate(2, 3);
    const ProfileBound up = profile_bound(m, eta, 0.0, fit, kDelta95, BoundSide::upper);
    const ProfileBound lo = profile_bound(m, eta, 0.0, fit, kDelta95, BoundSide::lower);

    CHECK(std::abs(up.value - 0.0975) < 1e-3);
    CHECK(std::abs(lo.value - (-0.1969)) < 1e-3);
    CHECK(up.value > fit.theta_hat[2]);
    CHECK(lo.value < fit.theta_hat[2]);

    for (const ProfileBound* b : {&up, &lo}) {
        CHECK(b->converged);
        CHECK(b->constraint_residual <= 1e-8 * (1.0 + std::abs(fit.loglik_max)));
        const Vector ge = eta.grad(b->theta, 0.0);
        CHECK(b->kkt_residual <= 1e-6 * (1.0 + prolik::numerics::norm2(ge)));
        CHECK(std::abs(m.loglik(b->theta) - (fit.loglik_max - kDelta95)) <
              1e-8 * (1.0 + std::abs(fit.loglik_max)));
    }
}

TEST_CASE("interval bounds widen as the level threshold grows") {
    const LikelihoodModel m = build_iid_gev(test_helpers::venice_sea_levels());
    const MleFit fit = fit_mle(m);
    const TargetFunction eta = target_coordinate(2, 3);

    double prev_up = fit.theta_hat[2];
    double prev_lo = fit.theta_hat[2];
    for (double delta : {0.5, kDelta95, 3.3174}) {  // ~80%, 95%, 99%
        const double u = profile_bound(m, eta, 0.0, fit, delta, BoundSide::upper).value;
        const double l = profile_bound(m, eta, 0.0, fit, delta, BoundSide::lower).value;
        CHECK(u > prev_up);
        CHECK(l < prev_lo);
        prev_up = u;
        prev_lo = l;
    }
}

TEST_CASE("bound solver rejects invalid requests") {
    const LikelihoodModel m = balanced_gaussian_mean();
    const MleFit fit = fit_mle(m);
    const TargetFunction eta = target_coordinate(0, 1);
    CHECK_THROWS_AS(profile_bound(m, eta, 0.0, fit, -1.0, BoundSide::upper), DomainError);
    MleFit broken = fit;
    broken.converged = false;
    CHECK_THROWS_AS(profile_bound(m, eta, 0.0, broken, 1.0, BoundSide::upper), InputError);
}

TEST_CASE("a direction the likelihood cannot pin down is reported as unbounded") {
    const LikelihoodModel m = flat_ridge();
    const MleFit fit = fit_mle(m);
    REQUIRE(fit.converged);
    const TargetFunction eta = target_coordinate(1, 2);
    CHECK_THROWS_AS(profile_bound(m, eta, 0.0, fit, 2.0, BoundSide::upper), UnboundedError);
}
