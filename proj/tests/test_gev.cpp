#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "prolik/gev.hpp"

using namespace prolik;
using namespace prolik::gev;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Central finite difference of a scalar function of one coordinate.
template <typename F>
double central_diff(F f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Draw an observation from GEV(p) via the inverse CDF, staying inside the
// [0.05, 0.95] quantile band so z remains moderate and in-support.
double sample_moderate(std::mt19937_64& rng, const GevParams& p) {
    std::uniform_real_distribution<double> unif(0.05, 0.95);
    const double u = unif(rng);
    const double w = -std::log(-std::log(u));  // Gumbel quantile
    if (std::abs(p.xi) < 1e-12) return p.mu + p.sigma * w;
    return p.mu + p.sigma * (std::exp(p.xi * w) - 1.0) / p.xi;
}

}  // namespace

TEST_CASE("gev_logpdf reference points") {
    CHECK(gev_logpdf(0.0, {0.0, 1.0, 0.0}) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(gev_logpdf(-10.0, {0.0, 1.0, 0.5}) == -kInf);
    // (1; 0, 1, 0.5): log f = -(1 + 1/xi) log(1.5) - 1.5^{-2}
    CHECK(gev_logpdf(1.0, {0.0, 1.0, 0.5}) ==
          doctest::Approx(-1.6608397687689376).epsilon(1e-12));
}

TEST_CASE("gev_cdf reference points and saturation") {
    CHECK(gev_cdf(0.0, {0.0, 1.0, 0.0}) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK(gev_cdf(1.0, {0.0, 1.0, 0.5}) ==
          doctest::Approx(0.6411803884299546).epsilon(1e-12));
    CHECK(gev_cdf(10.0, {0.0, 1.0, -0.5}) == 1.0);  // above end-point 2
    CHECK(gev_cdf(-5.0, {0.0, 1.0, 0.5}) == 0.0);   // below end-point -2
}

TEST_CASE("return_level reference points") {
    CHECK(return_level(0.0, {3.0, 2.0, 0.4}) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(return_level(1.0, {0.0, 1.0, 0.0}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(return_level(std::log(4.0), {0.0, 1.0, 0.5}) ==
          doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("upper_endpoint") {
    CHECK(upper_endpoint({0.0, 1.0, -0.5}) == doctest::Approx(2.0));
    CHECK(upper_endpoint({0.0, 1.0, 0.0}) == kInf);
    CHECK(upper_endpoint({3.0, 2.0, -1.0}) == doctest::Approx(5.0));
    CHECK(upper_endpoint({0.0, 1.0, 0.3}) == kInf);
}

TEST_CASE("loglik_terms gradient at the Gumbel point matches finite differences") {
    const double y = 0.0;
    const GevParams p{0.0, 1.0, 0.0};
    const LoglikTerms lt = loglik_terms(y, p);
    CHECK(lt.in_support);
    CHECK(lt.value == doctest::Approx(-1.0).epsilon(1e-12));

    const double h = 1e-6;
    const double d_mu =
        central_diff([&](double m) { return loglik_terms(y, {m, p.sigma, p.xi}).value; },
                     p.mu, h);
    const double d_sigma =
        central_diff([&](double s) { return loglik_terms(y, {p.mu, s, p.xi}).value; },
                     p.sigma, h);
    const double d_xi =
        central_diff([&](double x) { return loglik_terms(y, {p.mu, p.sigma, x}).value; },
                     p.xi, h);
    CHECK(std::abs(lt.grad[0] - d_mu) < 1e-7);
    CHECK(std::abs(lt.grad[1] - d_sigma) < 1e-7);
    CHECK(std::abs(lt.grad[2] - d_xi) < 1e-7);
}

TEST_CASE("loglik_terms derivatives vs finite differences at a fixed point") {
    const double y = 1.0;
    const GevParams p{0.5, 2.0, 0.3};
    const LoglikTerms lt = loglik_terms(y, p);

    auto value_at = [&](const Vector& th) {
        return loglik_terms(y, {th[0], th[1], th[2]}).value;
    };
    auto grad_at = [&](const Vector& th) {
        return loglik_terms(y, {th[0], th[1], th[2]}).grad;
    };

    const Vector th0{p.mu, p.sigma, p.xi};
    for (int i = 0; i < 3; ++i) {
        const double h = 1e-6 * std::max(1.0, std::abs(th0[i]));
        Vector plus = th0, minus = th0;
        plus[i] += h;
        minus[i] -= h;
        const double fd = (value_at(plus) - value_at(minus)) / (2.0 * h);
        CHECK(std::abs(lt.grad[i] - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
        const Vector gp = grad_at(plus), gm = grad_at(minus);
        for (int j = 0; j < 3; ++j) {
            const double fd2 = (gp[j] - gm[j]) / (2.0 * h);
            CHECK(std::abs(lt.hess(i, j) - fd2) <= 1e-6 * std::max(1.0, std::abs(fd2)));
        }
    }
}

TEST_CASE("loglik_terms derivatives vs finite differences at random points") {
    std::mt19937_64 rng(321);
    std::uniform_real_distribution<double> u_mu(-5.0, 5.0);
    std::uniform_real_distribution<double> u_sigma(0.1, 10.0);
    std::uniform_real_distribution<double> u_xi(-0.45, 1.0);

    int checked = 0;
    for (int trial = 0; trial < 100; ++trial) {
        GevParams p{u_mu(rng), u_sigma(rng), u_xi(rng)};
        const double y = sample_moderate(rng, p);
        const LoglikTerms lt = loglik_terms(y, p);
        REQUIRE(lt.in_support);

        const Vector th0{p.mu, p.sigma, p.xi};
        auto value_at = [&](const Vector& th) {
            return loglik_terms(y, {th[0], th[1], th[2]}).value;
        };
        auto grad_at = [&](const Vector& th) {
            return loglik_terms(y, {th[0], th[1], th[2]}).grad;
        };
        for (int i = 0; i < 3; ++i) {
            // Scale-aware step, kept small relative to sigma so the
            // perturbed observation stays across the support.
            const double h = 1e-6 * std::max(1.0, std::abs(th0[i]));
            Vector plus = th0, minus = th0;
            plus[i] += h;
            minus[i] -= h;
            const double fd = (value_at(plus) - value_at(minus)) / (2.0 * h);
            CHECK(std::abs(lt.grad[i] - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
            const Vector gp = grad_at(plus), gm = grad_at(minus);
            for (int j = 0; j < 3; ++j) {
                const double fd2 = (gp[j] - gm[j]) / (2.0 * h);
                CHECK(std::abs(lt.hess(i, j) - fd2) <=
                      1e-5 * std::max(1.0, std::abs(fd2)));
            }
        }
        ++checked;
    }
    CHECK(checked == 100);
}

TEST_CASE("loglik_terms is continuous across the xi regime switch") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u_z(-1.5, 3.0);

    for (int trial = 0; trial < 50; ++trial) {
        const double y = u_z(rng);
        for (double side : {1.0, -1.0}) {
            // Straddle the switch with a relative offset small enough that
            // the genuine smooth change in xi is far below the tolerance;
            // any residual difference would be a regime mismatch.
            const double xi_hi = side * xi_switch * (1.0 + 1e-6);
            const double xi_lo = side * xi_switch * (1.0 - 1e-6);
            const LoglikTerms hi = loglik_terms(y, {0.0, 1.0, xi_hi});
            const LoglikTerms lo = loglik_terms(y, {0.0, 1.0, xi_lo});
            CHECK(std::abs(hi.value - lo.value) < 1e-8);
            for (int i = 0; i < 3; ++i)
                CHECK(std::abs(hi.grad[i] - lo.grad[i]) < 1e-7);
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j)
                    CHECK(std::abs(hi.hess(i, j) - lo.hess(i, j)) < 1e-7);
        }
    }
}

TEST_CASE("loglik_terms wider straddle agrees after removing the smooth change") {
    // At offsets +-0.1% of the switch the value genuinely moves by
    // d(value)/dxi * delta; subtract that with the trapezoid rule and the
    // remainder isolates any disagreement between the two regimes.
    for (double y : {-0.5, 0.3, 1.2, 2.5}) {
        for (double side : {1.0, -1.0}) {
            const double xi_hi = side * xi_switch * (1.0 + 1e-3);
            const double xi_lo = side * xi_switch * (1.0 - 1e-3);
            const LoglikTerms hi = loglik_terms(y, {0.0, 1.0, xi_hi});
            const LoglikTerms lo = loglik_terms(y, {0.0, 1.0, xi_lo});
            const double smooth = 0.5 * (hi.grad[2] + lo.grad[2]) * (xi_hi - xi_lo);
            CHECK(std::abs(hi.value - lo.value - smooth) < 1e-8);
        }
    }
}

TEST_CASE("out-of-support observations are flagged, not thrown") {
    const LoglikTerms lt = loglik_terms(-10.0, {0.0, 1.0, 0.5});
    CHECK_FALSE(lt.in_support);
    CHECK(lt.value == -kInf);
}

TEST_CASE("rl_derivs basics and the Gumbel cross term") {
    const RlDerivs d = rl_derivs(std::log(100.0), {0.0, 1.0, 0.1});
    CHECK(d.grad[0] == doctest::Approx(1.0).epsilon(1e-14));

    const RlDerivs g = rl_derivs(std::log(50.0), {1.0, 2.0, 0.0});
    CHECK(g.cross[0] == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(g.cross[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("rl_derivs full derivative set vs finite differences") {
    const double s = std::log(50.0);
    const GevParams p{1.0, 2.0, -0.1};
    const RlDerivs d = rl_derivs(s, p);

    auto eta_at = [&](const Vector& th, double ss) {
        return return_level(ss, {th[0], th[1], th[2]});
    };
    auto grad_at = [&](const Vector& th, double ss) {
        return rl_derivs(ss, {th[0], th[1], th[2]}).grad;
    };
    const Vector th0{p.mu, p.sigma, p.xi};
    for (int i = 0; i < 3; ++i) {
        const double h = 1e-6 * std::max(1.0, std::abs(th0[i]));
        Vector plus = th0, minus = th0;
        plus[i] += h;
        minus[i] -= h;
        const double fd = (eta_at(plus, s) - eta_at(minus, s)) / (2.0 * h);
        CHECK(std::abs(d.grad[i] - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
        const Vector gp = grad_at(plus, s), gm = grad_at(minus, s);
        for (int j = 0; j < 3; ++j) {
            const double fd2 = (gp[j] - gm[j]) / (2.0 * h);
            CHECK(std::abs(d.hess(i, j) - fd2) <= 1e-6 * std::max(1.0, std::abs(fd2)));
        }
        // Mixed s-theta derivatives against differences of the gradient in s.
        const double hs = 1e-6;
        const Vector gsp = grad_at(th0, s + hs), gsm = grad_at(th0, s - hs);
        const double fd_cross = (gsp[i] - gsm[i]) / (2.0 * hs);
        CHECK(std::abs(d.cross[i] - fd_cross) <= 1e-6 * std::max(1.0, std::abs(fd_cross)));
    }
}

TEST_CASE("rl_derivs is continuous across the xi regime switch") {
    const double s = std::log(100.0);
    for (double side : {1.0, -1.0}) {
        const RlDerivs hi = rl_derivs(s, {0.0, 1.0, side * xi_switch * (1.0 + 1e-6)});
        const RlDerivs lo = rl_derivs(s, {0.0, 1.0, side * xi_switch * (1.0 - 1e-6)});
        CHECK(std::abs(hi.eta - lo.eta) < 1e-7);
        for (int i = 0; i < 3; ++i) {
            CHECK(std::abs(hi.grad[i] - lo.grad[i]) < 1e-7);
            CHECK(std::abs(hi.cross[i] - lo.cross[i]) < 1e-7);
            for (int j = 0; j < 3; ++j)
                CHECK(std::abs(hi.hess(i, j) - lo.hess(i, j)) < 1e-7);
        }
    }
}

TEST_CASE("monotone time derivative of the return level") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u_mu(-5.0, 5.0);
    std::uniform_real_distribution<double> u_sigma(0.1, 10.0);
    std::uniform_real_distribution<double> u_xi(-1.0, 1.0);
    std::uniform_real_distribution<double> u_s(0.05, std::log(1e4));
    for (int trial = 0; trial < 200; ++trial) {
        const GevParams p{u_mu(rng), u_sigma(rng), u_xi(rng)};
        const double s = u_s(rng);
        const double h = 1e-6;
        const double deta_ds =
            (return_level(s + h, p) - return_level(s - h, p)) / (2.0 * h);
        CHECK(deta_ds >= -1e-10);
    }
}

TEST_CASE("support consistency between logpdf and cdf") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u_mu(-3.0, 3.0);
    std::uniform_real_distribution<double> u_sigma(0.2, 5.0);
    std::uniform_real_distribution<double> u_xi(-0.9, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const GevParams p{u_mu(rng), u_sigma(rng), u_xi(rng)};
        const double y = sample_moderate(rng, p);
        // Interior draws: finite density, cdf strictly inside (0,1).
        CHECK(std::isfinite(gev_logpdf(y, p)));
        CHECK(gev_cdf(y, p) > 0.0);
        CHECK(gev_cdf(y, p) < 1.0);
    }
    // Explicit out-of-support probes on both finite-end-point sides.
    CHECK(gev_logpdf(-3.0, {0.0, 1.0, 0.5}) == -kInf);
    CHECK(gev_cdf(-3.0, {0.0, 1.0, 0.5}) == 0.0);
    CHECK(gev_logpdf(3.0, {0.0, 1.0, -0.5}) == -kInf);
    CHECK(gev_cdf(3.0, {0.0, 1.0, -0.5}) == 1.0);
}

TEST_CASE("cdf decreases in mu at fixed y") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u_mu(-3.0, 3.0);
    std::uniform_real_distribution<double> u_sigma(0.2, 5.0);
    std::uniform_real_distribution<double> u_xi(-0.9, 1.0);
    std::uniform_real_distribution<double> u_y(-6.0, 6.0);
    for (int trial = 0; trial < 200; ++trial) {
        const double mu1 = u_mu(rng);
        const double mu2 = mu1 + 0.5;
        const double sigma = u_sigma(rng);
        const double xi = u_xi(rng);
        const double y = u_y(rng);
        CHECK(gev_cdf(y, {mu1, sigma, xi}) >= gev_cdf(y, {mu2, sigma, xi}));
    }
}

TEST_CASE("parameter validity helper") {
    CHECK(is_valid({0.0, 1.0, 0.0}));
    CHECK(is_valid({0.0, 1.0, -1.0}));
    CHECK_FALSE(is_valid({0.0, 0.0, 0.0}));
    CHECK_FALSE(is_valid({0.0, -1.0, 0.0}));
    CHECK_FALSE(is_valid({0.0, 1.0, -1.5}));
}
