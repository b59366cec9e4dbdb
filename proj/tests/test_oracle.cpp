#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "prolik/errors.hpp"
#include "prolik/mcmc.hpp"
#include "prolik/models.hpp"
#include "prolik/optimizer.hpp"
#include "prolik/oracle.hpp"
#include "prolik/target.hpp"
#include "test_helpers.hpp"

using namespace prolik;
using test_helpers::quadratic_fit;
using test_helpers::quadratic_model;

namespace {

// Half of the 0.95 chi-square quantile with one and two degrees of freedom.
constexpr double kDelta95 = 1.9207294103470627;
constexpr double kDelta99 = 3.3174;

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

LinearGaussianSpec three_point_spec() {
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
    return spec;
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

// Log-likelihood flat in the second coordinate: profiling that coordinate
// gives a constant curve that never drops below any level.
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

TEST_CASE("profile value at the fitted target equals the overall maximum") {
    const LikelihoodModel m = build_iid_gev(test_helpers::venice_sea_levels());
    const MleFit fit = fit_mle(m);
    REQUIRE(fit.converged);

    const TargetFunction shape = target_coordinate(2, 3);
    const NaiveProfilePoint at_hat =
        naive_profile_value(m, shape, 0.0, fit.theta_hat[2],
                            Vector{fit.theta_hat[0], fit.theta_hat[1]});
    CHECK(at_hat.converged);
    CHECK(std::abs(at_hat.loglik - fit.loglik_max) < 1e-9);
    CHECK(std::abs(at_hat.theta[0] - fit.theta_hat[0]) < 1e-5);
    CHECK(std::abs(at_hat.theta[1] - fit.theta_hat[1]) < 1e-5);

    const TargetFunction level = target_gev_return_level();
    const double s = std::log(100.0);
    const double eta_hat = level.value(fit.theta_hat, s);
    const NaiveProfilePoint at_level = naive_profile_value(
        m, level, s, eta_hat, Vector{fit.theta_hat[1], fit.theta_hat[2]});
    CHECK(at_level.converged);
    CHECK(std::abs(at_level.loglik - fit.loglik_max) < 1e-9);
    CHECK(std::abs(level.value(at_level.theta, s) - eta_hat) < 1e-9);
}

TEST_CASE("single-parameter slice reproduces the concentrated likelihood") {
    const LikelihoodModel m = balanced_gaussian_mean();
    // For this sample mean((y - mu)^2) = 1 + mu^2, so the concentrated
    // log-likelihood is -(n/2) log(1 + mu^2) - (n/2)(1 + log 2 pi).
    const TargetFunction eta = target_coordinate(0, 1);
    const double offset = 50.0 * (1.0 + std::log(2.0 * 3.14159265358979323846));
    for (double mu : {0.0, 0.1, 0.3, -0.7}) {
        const NaiveProfilePoint point = naive_profile_value(m, eta, 0.0, mu);
        CHECK(point.converged);
        const double expected = -50.0 * std::log(1.0 + mu * mu) - offset;
        CHECK(std::abs(point.loglik - expected) < 1e-10);
        CHECK(point.theta.size() == 1);
        CHECK(point.theta[0] == mu);
    }
}

TEST_CASE("profile of a quadratic likelihood is the marginal quadratic") {
    const LikelihoodModel m = three_point_line_known_variance();
    const MleFit fit = fit_mle(m);
    REQUIRE(fit.converged);

    // Slope variance is 1/2 here, so the profile drops by d^2 at slope
    // offsets of +-d.
    const TargetFunction eta = target_coordinate(1, 2);
    for (double d : {0.35, 1.2}) {
        for (double sign : {1.0, -1.0}) {
            const NaiveProfilePoint point =
                naive_profile_value(m, eta, 0.0, fit.theta_hat[1] + sign * d);
            CHECK(point.converged);
            CHECK(std::abs(point.loglik - (fit.loglik_max - d * d)) < 1e-8);
        }
    }
}

TEST_CASE("nested bound matches the closed form for the Gaussian mean") {
    const LikelihoodModel m = balanced_gaussian_mean();
    const MleFit fit = fit_mle(m);
    REQUIRE(fit.converged);
    const TargetFunction eta = target_coordinate(0, 1);

    const double half_width = 0.1978938298191409;
    const double up = naive_bound(m, eta, 0.0, fit, kDelta95, BoundSide::upper);
    const double lo = naive_bound(m, eta, 0.0, fit, kDelta95, BoundSide::lower);
    CHECK(std::abs(up - half_width) < 1e-6);
    CHECK(std::abs(lo + half_width) < 1e-6);
}

TEST_CASE("nested bound equals the exact regression prediction interval") {
    const LikelihoodModel m = three_point_line_known_variance();
    const MleFit fit = fit_mle(m);
    REQUIRE(fit.converged);

    const TargetFunction eta = target_linear({1.0, 3.0});
    const double up = naive_bound(m, eta, 0.0, fit, kDelta95, BoundSide::upper);
    const double lo = naive_bound(m, eta, 0.0, fit, kDelta95, BoundSide::lower);

    const LinregInterval exact = linreg_interval(three_point_spec(), {1.0, 3.0}, 0.05);
    CHECK(std::abs(up - exact.upper) < 1e-7);
    CHECK(std::abs(lo - exact.lower) < 1e-7);
}

TEST_CASE("nested and constrained solvers agree across model families") {
    struct Case {
        LikelihoodModel model;
        MleFit fit;
        TargetFunction target;
        double t = 0.0;
        Vector warm;  // nuisance coordinates of theta_hat for the slice
    };
    std::vector<Case> cases;

    {
        Matrix h(2, 2);
        h(0, 0) = 2.0;
        h(0, 1) = 0.5;
        h(1, 0) = 0.5;
        h(1, 1) = 1.0;
        const Vector hat = {0.4, -0.3};
        Case c;
        c.model = quadratic_model(h, hat);
        c.fit = quadratic_fit(h, hat);
        c.target = target_coordinate(0, 2);
        c.warm = {hat[1]};
        cases.push_back(std::move(c));
    }
    {
        Case c;
        c.model = balanced_gaussian_mean();
        c.fit = fit_mle(c.model);
        c.target = target_coordinate(0, 1);
        c.warm = {};
        cases.push_back(std::move(c));
    }
    {
        Case c;
        c.model = three_point_line_known_variance();
        c.fit = fit_mle(c.model);
        c.target = target_linear({1.0, 3.0});
        c.warm = {c.fit.theta_hat[0]};
        cases.push_back(std::move(c));
    }
    {
        Case c;
        c.model = build_iid_gev(test_helpers::venice_sea_levels());
        c.fit = fit_mle(c.model);
        c.target = target_coordinate(2, 3);
        c.warm = {c.fit.theta_hat[0], c.fit.theta_hat[1]};
        cases.push_back(std::move(c));
    }
    {
        Case c;
        c.model = build_iid_gev(test_helpers::venice_sea_levels());
        c.fit = fit_mle(c.model);
        c.target = target_gev_return_level();
        c.t = std::log(100.0);
        c.warm = {c.fit.theta_hat[1], c.fit.theta_hat[2]};
        cases.push_back(std::move(c));
    }

    for (const Case& c : cases) {
        REQUIRE(c.fit.converged);
        for (BoundSide side : {BoundSide::upper, BoundSide::lower}) {
            const ProfileBound constrained =
                profile_bound(c.model, c.target, c.t, c.fit, kDelta95, side);
            const double nested =
                naive_bound(c.model, c.target, c.t, c.fit, kDelta95, side);
            CHECK(std::abs(nested - constrained.value) <
                  1e-4 * (1.0 + std::abs(constrained.value)));

            // the nested bound itself sits on the level set
            const NaiveProfilePoint at_bound =
                naive_profile_value(c.model, c.target, c.t, nested, c.warm);
            CHECK(at_bound.converged);
            CHECK(std::abs(at_bound.loglik - (c.fit.loglik_max - kDelta95)) < 1e-6);
        }
    }
}

TEST_CASE("wider coverage strictly contains the narrower interval") {
    const LikelihoodModel m = build_iid_gev(test_helpers::venice_sea_levels());
    const MleFit fit = fit_mle(m);
    const TargetFunction eta = target_coordinate(2, 3);

    const double lo95 = naive_bound(m, eta, 0.0, fit, kDelta95, BoundSide::lower);
    const double up95 = naive_bound(m, eta, 0.0, fit, kDelta95, BoundSide::upper);
    const double lo99 = naive_bound(m, eta, 0.0, fit, kDelta99, BoundSide::lower);
    const double up99 = naive_bound(m, eta, 0.0, fit, kDelta99, BoundSide::upper);

    CHECK(lo99 < lo95);
    CHECK(lo95 < fit.theta_hat[2]);
    CHECK(fit.theta_hat[2] < up95);
    CHECK(up95 < up99);

    // frozen 95% end points for the shape of the sea-level data
    CHECK(std::abs(lo95 - (-0.1969)) < 5e-4);
    CHECK(std::abs(up95 - 0.0975) < 5e-4);
}

TEST_CASE("regression prediction intervals are exact in closed form") {
    const LinregInterval got = linreg_interval(three_point_spec(), {1.0, 3.0}, 0.05);
    CHECK(std::abs(got.eta_hat - 3.0) < 1e-12);
    CHECK(std::abs(got.s_mu - 1.5275252316519468) < 1e-12);
    CHECK(std::abs(got.lower - 0.006105560485981432) < 1e-12);
    CHECK(std::abs(got.upper - 5.993894439514019) < 1e-12);

    // orthonormal design: the prediction spread is the noise scale itself
    LinearGaussianSpec ortho;
    ortho.design = Matrix(2, 2);
    ortho.design(0, 0) = 1.0;
    ortho.design(1, 1) = 1.0;
    ortho.responses = {0.5, -0.25};
    ortho.variance_known = true;
    ortho.sigma2 = 4.0;
    const LinregInterval unit = linreg_interval(ortho, {1.0, 0.0}, 0.05);
    CHECK(std::abs(unit.s_mu - 2.0) < 1e-12);
    CHECK(std::abs(unit.eta_hat - 0.5) < 1e-12);
    CHECK(std::abs((unit.upper - unit.lower) -
                   2.0 * 2.0 * 1.9599639845400545) < 1e-10);

    // lower confidence gives a narrower interval
    const LinregInterval wide = linreg_interval(ortho, {1.0, 0.0}, 0.05);
    const LinregInterval narrow = linreg_interval(ortho, {1.0, 0.0}, 0.5);
    CHECK(narrow.upper - narrow.lower < wide.upper - wide.lower);

    // unknown variance uses the maximum-likelihood estimate (denominator n)
    LinearGaussianSpec ml;
    ml.design = Matrix(4, 1, 1.0);
    ml.responses = {0.0, 1.0, 2.0, 3.0};
    ml.variance_known = false;
    const LinregInterval est = linreg_interval(ml, {1.0}, 0.05);
    CHECK(std::abs(est.eta_hat - 1.5) < 1e-12);
    CHECK(std::abs(est.s_mu - std::sqrt(1.25 / 4.0)) < 1e-12);
}

TEST_CASE("regression interval input validation") {
    const LinearGaussianSpec spec = three_point_spec();
    CHECK_THROWS_AS(linreg_interval(spec, {1.0}, 0.05), InputError);
    CHECK_THROWS_AS(linreg_interval(spec, {1.0, 3.0}, 0.0), DomainError);
    CHECK_THROWS_AS(linreg_interval(spec, {1.0, 3.0}, 1.2), DomainError);

    LinearGaussianSpec bad_sigma = spec;
    bad_sigma.sigma2 = -1.0;
    CHECK_THROWS_AS(linreg_interval(bad_sigma, {1.0, 3.0}, 0.05), DomainError);

    LinearGaussianSpec dup;
    dup.design = Matrix(3, 2);
    for (std::size_t r = 0; r < 3; ++r) {
        dup.design(r, 0) = 1.0;
        dup.design(r, 1) = 1.0;
    }
    dup.responses = {0.0, 1.0, 2.0};
    dup.variance_known = true;
    CHECK_THROWS_AS(linreg_interval(dup, {1.0, 1.0}, 0.05), RankError);
}

TEST_CASE("curve sweep is warm-started and peaks at the fitted value") {
    const LikelihoodModel m = build_iid_gev(test_helpers::venice_sea_levels());
    const MleFit fit = fit_mle(m);
    const TargetFunction eta = target_coordinate(2, 3);

    Vector grid;
    const std::size_t n = 21;
    for (std::size_t k = 0; k < n; ++k)
        grid.push_back(-0.25 + 0.45 * static_cast<double>(k) /
                                   static_cast<double>(n - 1));
    const ProfileCurve curve = naive_profile_curve(m, eta, 0.0, grid);

    REQUIRE(curve.psi.size() == n);
    REQUIRE(curve.loglik.size() == n);
    std::size_t best = 0;
    for (std::size_t k = 0; k < n; ++k) {
        CHECK(curve.converged[k]);
        CHECK(curve.psi[k] == grid[k]);
        CHECK(curve.loglik[k] <= fit.loglik_max + 1e-9);
        if (curve.loglik[k] > curve.loglik[best]) best = k;
    }
    std::size_t nearest = 0;
    for (std::size_t k = 1; k < n; ++k)
        if (std::abs(grid[k] - fit.theta_hat[2]) <
            std::abs(grid[nearest] - fit.theta_hat[2]))
            nearest = k;
    CHECK(best == nearest);

    // single-peaked curve: non-increasing on both sides of the maximum
    for (std::size_t k = best; k + 1 < n; ++k)
        CHECK(curve.loglik[k + 1] <= curve.loglik[k] + 1e-12);
    for (std::size_t k = best; k > 0; --k)
        CHECK(curve.loglik[k - 1] <= curve.loglik[k] + 1e-12);
}

TEST_CASE("return-level slice agrees with the constrained solver on the level set") {
    const LikelihoodModel m = build_iid_gev(test_helpers::venice_sea_levels());
    const MleFit fit = fit_mle(m);
    const TargetFunction eta = target_gev_return_level();
    const double s = std::log(100.0);

    const ProfileBound up = profile_bound(m, eta, s, fit, kDelta95, BoundSide::upper);
    const NaiveProfilePoint at_bound = naive_profile_value(m, eta, s, up.value);
    CHECK(at_bound.converged);
    CHECK(std::abs(at_bound.loglik - (fit.loglik_max - kDelta95)) < 1e-6);
    CHECK(std::abs(eta.value(at_bound.theta, s) - up.value) < 1e-9);
}

TEST_CASE("unsupported targets and malformed requests are rejected") {
    const LikelihoodModel m = build_iid_gev(test_helpers::venice_sea_levels());
    const MleFit fit = fit_mle(m);

    TargetFunction custom;
    custom.kind = TargetFunction::Kind::custom;
    custom.dim = 3;
    custom.value = [](const Vector& th, double) { return th[0] * th[2]; };
    custom.grad = [](const Vector& th, double) {
        return Vector{th[2], 0.0, th[0]};
    };
    CHECK_THROWS_AS(naive_profile_value(m, custom, 0.0, 1.0), DomainError);

    // a return-level-shaped target on a model without location/scale/shape
    const LikelihoodModel line = three_point_line_known_variance();
    const MleFit line_fit = fit_mle(line);
    CHECK_THROWS_AS(
        naive_profile_value(line, target_gev_return_level(), 0.0, 1.0),
        InputError);  // dimension mismatch is caught first
    TargetFunction fake_level;
    fake_level.kind = TargetFunction::Kind::gev_return_level;
    fake_level.dim = 2;
    CHECK_THROWS_AS(naive_profile_value(line, fake_level, 0.0, 1.0), DomainError);

    CHECK_THROWS_AS(
        naive_profile_curve(m, target_coordinate(2, 3), 0.0, Vector{}),
        InputError);
    CHECK_THROWS_AS(naive_profile_value(m, target_linear({0.0, 0.0, 0.0}), 0.0, 1.0),
                    DomainError);
    CHECK_THROWS_AS(naive_profile_value(m, target_coordinate(2, 3), 0.0, 0.0,
                                        Vector{1.0}),
                    InputError);
    CHECK_THROWS_AS(
        naive_bound(m, target_coordinate(2, 3), 0.0, fit, -1.0, BoundSide::upper),
        DomainError);
}

TEST_CASE("flat likelihood directions raise the unbounded error") {
    const LikelihoodModel m = flat_ridge();
    const MleFit fit = fit_mle(m);
    const TargetFunction eta = target_coordinate(1, 2);
    CHECK_THROWS_AS(naive_bound(m, eta, 0.0, fit, kDelta95, BoundSide::upper),
                    UnboundedError);
    CHECK_THROWS_AS(naive_bound(m, eta, 0.0, fit, kDelta95, BoundSide::lower),
                    UnboundedError);
}

TEST_CASE("sampler bin maxima never exceed the nested profile") {
    const LikelihoodModel m = build_iid_gev(test_helpers::venice_sea_levels());
    const MleFit fit = fit_mle(m);
    const TargetFunction eta = target_coordinate(2, 3);

    const McmcTrace trace = rw_metropolis(m, fit.theta_hat, 4000, 7);
    const auto shape_of = [](const Vector& th) { return th[2]; };
    const std::size_t n_bins = 20;
    const std::vector<ProfileCurveBin> bins =
        mcmc_profile_curve(trace, shape_of, n_bins);

    double lo = trace.iterates.front()[2];
    double hi = lo;
    for (const Vector& th : trace.iterates) {
        lo = std::min(lo, th[2]);
        hi = std::max(hi, th[2]);
    }
    const double width = (hi - lo) / static_cast<double>(n_bins);

    // The nuisance values of the best iterate in each bin give feasible
    // warm starts for the edge solves even where the support constraint
    // makes a cold start infeasible (very negative shapes need a larger
    // scale before all observations lie inside the support).
    std::vector<Vector> warm(n_bins);
    for (std::size_t i = 0; i < trace.iterates.size(); ++i) {
        const double v = shape_of(trace.iterates[i]);
        auto b = static_cast<std::size_t>((v - lo) / width);
        if (b >= n_bins) b = n_bins - 1;
        if (trace.logliks[i] == bins[b].loglik_max)
            warm[b] = {trace.iterates[i][0], trace.iterates[i][1]};
    }

    // Each bin maximum is a likelihood value at some point inside the bin,
    // so it cannot beat the profile anywhere in the bin; for a single-peaked
    // profile that envelope is attained at a bin edge (or at the fitted
    // value when the bin straddles it).
    for (std::size_t b = 0; b < bins.size(); ++b) {
        if (bins[b].empty) continue;
        const double left = lo + static_cast<double>(b) * width;
        const double right = left + width;
        const NaiveProfilePoint pl = naive_profile_value(m, eta, 0.0, left, warm[b]);
        const NaiveProfilePoint pr = naive_profile_value(m, eta, 0.0, right, warm[b]);
        REQUIRE(pl.converged);
        REQUIRE(pr.converged);
        double envelope = std::max(pl.loglik, pr.loglik);
        if (left <= fit.theta_hat[2] && fit.theta_hat[2] <= right)
            envelope = std::max(envelope, fit.loglik_max);
        CHECK(bins[b].loglik_max <= envelope + 1e-9);
    }
}
