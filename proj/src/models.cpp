#include "prolik/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "prolik/gev.hpp"

namespace prolik {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEulerGamma = 0.57721566490153286;

double mean_of(const Vector& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const Vector& v) {
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// Moment-matching Gumbel start (sigma from the sd, mu from the mean), with
// the shape backed off to 0 if the heavier start leaves data out of support.
Vector gumbel_start(const Vector& y) {
    double sigma0 = sd_of(y) * std::sqrt(6.0) / M_PI;
    if (!(sigma0 > 0.0)) sigma0 = 1.0;
    const double mu0 = mean_of(y) - kEulerGamma * sigma0;
    return Vector{mu0, sigma0, 0.1};
}

Vector column_of(const Matrix& m, std::size_t j) {
    Vector c(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) c[i] = m(i, j);
    return c;
}

// One design block after optional standardisation, with the linear map
// taking working-basis coefficients back to raw-basis ones.
struct WorkingBlock {
    Matrix design;        // what the likelihood actually multiplies
    Matrix raw_from_work; // p_b x p_b
};

WorkingBlock make_working_block(const Matrix& d, bool standardize,
                                const char* label) {
    const std::size_t n = d.rows(), pb = d.cols();
    WorkingBlock out;
    out.design = d;
    out.raw_from_work = Matrix::identity(pb);
    if (!standardize || pb == 0) return out;

    std::vector<bool> is_const(pb, false);
    std::ptrdiff_t intercept = -1;
    for (std::size_t j = 0; j < pb; ++j) {
        const Vector c = column_of(d, j);
        const auto [lo, hi] = std::minmax_element(c.begin(), c.end());
        if (*lo == *hi) {
            is_const[j] = true;
            if (intercept < 0 && *lo != 0.0) intercept = static_cast<std::ptrdiff_t>(j);
        }
    }
    const double v0 = (intercept >= 0) ? d(0, static_cast<std::size_t>(intercept)) : 0.0;

    for (std::size_t j = 0; j < pb; ++j) {
        if (is_const[j]) continue;
        const Vector c = column_of(d, j);
        const double s = sd_of(c);
        if (!(s > 0.0)) {
            std::ostringstream msg;
            msg << "build_gev_regression: " << label << " column " << j
                << " is degenerate";
            throw RankError(msg.str());
        }
        // Center only when an intercept column can absorb the shift.
        const double m = (intercept >= 0) ? mean_of(c) : 0.0;
        for (std::size_t i = 0; i < n; ++i) out.design(i, j) = (c[i] - m) / s;
        out.raw_from_work(j, j) = 1.0 / s;
        if (intercept >= 0)
            out.raw_from_work(static_cast<std::size_t>(intercept), j) = -m / (s * v0);
    }
    return out;
}

void check_design(const Matrix& d, std::size_t n, const char* label) {
    if (d.cols() == 0) {
        std::ostringstream msg;
        msg << "build_gev_regression: " << label << " design has no columns";
        throw InputError(msg.str());
    }
    if (d.rows() != n) {
        std::ostringstream msg;
        msg << "build_gev_regression: " << label << " design has " << d.rows()
            << " rows for " << n << " responses";
        throw InputError(msg.str());
    }
    if (!numerics::has_full_column_rank(d)) {
        std::ostringstream msg;
        msg << "build_gev_regression: " << label << " design is rank deficient";
        throw RankError(msg.str());
    }
}

}  // namespace

LikelihoodModel build_iid_gev(const Vector& sample) {
    if (sample.size() < 5)
        throw InputError("build_iid_gev: need at least 5 observations, got " +
                         std::to_string(sample.size()));
    const Vector y = sample;

    LikelihoodModel m;
    m.p = 3;
    m.names = {"mu", "sigma", "xi"};
    m.in_domain = [y](const Vector& th) {
        const gev::GevParams p{th[0], th[1], th[2]};
        if (!(p.sigma > 0.0) || !(p.xi > -1.0)) return false;
        for (double yi : y)
            if (1.0 + p.xi * (yi - p.mu) / p.sigma <= 0.0) return false;
        return true;
    };
    m.loglik = [y](const Vector& th) {
        const gev::GevParams p{th[0], th[1], th[2]};
        if (!(p.sigma > 0.0) || !(p.xi > -1.0)) return -kInf;
        double s = 0.0;
        for (double yi : y) {
            const double l = gev::gev_logpdf(yi, p);
            if (l == -kInf) return -kInf;
            s += l;
        }
        return s;
    };
    m.grad = [y, in = m.in_domain](const Vector& th) {
        if (!in(th)) throw DomainError("iid GEV gradient requested outside the domain");
        const gev::GevParams p{th[0], th[1], th[2]};
        Vector g(3, 0.0);
        for (double yi : y) {
            const gev::LoglikTerms lt = gev::loglik_terms(yi, p);
            for (int k = 0; k < 3; ++k) g[k] += lt.grad[k];
        }
        return g;
    };
    m.hess = [y, in = m.in_domain](const Vector& th) {
        if (!in(th)) throw DomainError("iid GEV Hessian requested outside the domain");
        const gev::GevParams p{th[0], th[1], th[2]};
        Matrix h(3, 3);
        for (double yi : y) {
            const gev::LoglikTerms lt = gev::loglik_terms(yi, p);
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b) h(a, b) += lt.hess(a, b);
        }
        return h;
    };

    Vector init = gumbel_start(y);
    for (int tries = 0; tries < 20 && !m.in_domain(init); ++tries) init[1] *= 2.0;
    if (!m.in_domain(init)) init[2] = 0.0;  // Gumbel: unbounded support
    m.init = init;

    constexpr double floor = -1.0 + 1e-6;
    BoundaryBarrier b;
    b.value = [](const Vector& th) { return std::log(th[2] - floor); };
    b.grad = [](const Vector& th) {
        Vector g(3, 0.0);
        g[2] = 1.0 / (th[2] - floor);
        return g;
    };
    b.hess = [](const Vector& th) {
        Matrix h(3, 3);
        const double m2 = th[2] - floor;
        h(2, 2) = -1.0 / (m2 * m2);
        return h;
    };
    b.min_margin = [](const Vector& th) { return th[2] - floor; };
    m.barrier = std::move(b);
    return m;
}

RegressionModel build_gev_regression(const GevRegressionSpec& spec) {
    const std::size_t n = spec.responses.size();
    check_design(spec.design_mu, n, "location");
    check_design(spec.design_sigma, n, "scale");
    check_design(spec.design_xi, n, "shape");
    const std::size_t pm = spec.design_mu.cols();
    const std::size_t ps = spec.design_sigma.cols();
    const std::size_t px = spec.design_xi.cols();
    const std::size_t p = pm + ps + px;
    if (n < p + 2)
        throw InputError("build_gev_regression: too few observations (" +
                         std::to_string(n) + ") for " + std::to_string(p) +
                         " parameters");

    const WorkingBlock bm = make_working_block(spec.design_mu, spec.standardize, "location");
    const WorkingBlock bs = make_working_block(spec.design_sigma, spec.standardize, "scale");
    const WorkingBlock bx = make_working_block(spec.design_xi, spec.standardize, "shape");

    Matrix raw_from_working(p, p);
    for (std::size_t i = 0; i < pm; ++i)
        for (std::size_t j = 0; j < pm; ++j)
            raw_from_working(i, j) = bm.raw_from_work(i, j);
    for (std::size_t i = 0; i < ps; ++i)
        for (std::size_t j = 0; j < ps; ++j)
            raw_from_working(pm + i, pm + j) = bs.raw_from_work(i, j);
    for (std::size_t i = 0; i < px; ++i)
        for (std::size_t j = 0; j < px; ++j)
            raw_from_working(pm + ps + i, pm + ps + j) = bx.raw_from_work(i, j);

    const Vector y = spec.responses;
    const Matrix dm = bm.design, ds = bs.design, dx = bx.design;
    const bool log_link = (spec.link == ScaleLink::log_scale);

    // Per-observation (mu, sigma, xi, dsigma/du, d2sigma/du2); false when
    // any observation leaves the admissible open set.
    auto obs_params = [=](const Vector& th, std::size_t i, gev::GevParams& g,
                          double& s1, double& s2) {
        double um = 0.0, us = 0.0, ux = 0.0;
        for (std::size_t j = 0; j < pm; ++j) um += dm(i, j) * th[j];
        for (std::size_t j = 0; j < ps; ++j) us += ds(i, j) * th[pm + j];
        for (std::size_t j = 0; j < px; ++j) ux += dx(i, j) * th[pm + ps + j];
        double sigma;
        if (log_link) {
            if (us > 300.0) return false;  // overflow guard
            sigma = std::exp(us);
            s1 = sigma;
            s2 = sigma;
        } else {
            sigma = us;
            s1 = 1.0;
            s2 = 0.0;
        }
        if (!(sigma > 0.0) || !(ux > -1.0)) return false;
        g = gev::GevParams{um, sigma, ux};
        return 1.0 + ux * (y[i] - um) / sigma > 0.0;
    };

    LikelihoodModel m;
    m.p = p;
    m.names.reserve(p);
    for (std::size_t j = 0; j < pm; ++j) m.names.push_back("mu[" + std::to_string(j) + "]");
    for (std::size_t j = 0; j < ps; ++j) m.names.push_back("sigma[" + std::to_string(j) + "]");
    for (std::size_t j = 0; j < px; ++j) m.names.push_back("xi[" + std::to_string(j) + "]");

    m.in_domain = [obs_params, n](const Vector& th) {
        gev::GevParams g;
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (!obs_params(th, i, g, s1, s2)) return false;
        return true;
    };
    m.loglik = [obs_params, n, yv = y](const Vector& th) {
        double total = 0.0;
        gev::GevParams g;
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!obs_params(th, i, g, s1, s2)) return -kInf;
            total += gev::gev_logpdf(yv[i], g);
        }
        return total;
    };
    m.grad = [obs_params, n, yv = y, dm, ds, dx, pm, ps, px, p,
              in = m.in_domain](const Vector& th) {
        if (!in(th))
            throw DomainError("GEV regression gradient requested outside the domain");
        Vector gr(p, 0.0);
        gev::GevParams g;
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            obs_params(th, i, g, s1, s2);
            const gev::LoglikTerms lt = gev::loglik_terms(yv[i], g);
            for (std::size_t j = 0; j < pm; ++j) gr[j] += lt.grad[0] * dm(i, j);
            for (std::size_t j = 0; j < ps; ++j) gr[pm + j] += lt.grad[1] * s1 * ds(i, j);
            for (std::size_t j = 0; j < px; ++j) gr[pm + ps + j] += lt.grad[2] * dx(i, j);
        }
        return gr;
    };
    m.hess = [obs_params, n, yv = y, dm, ds, dx, pm, ps, px, p,
              in = m.in_domain](const Vector& th) {
        if (!in(th))
            throw DomainError("GEV regression Hessian requested outside the domain");
        Matrix h(p, p);
        gev::GevParams g;
        double s1 = 0.0, s2 = 0.0;
        const std::size_t om = 0, os = pm, ox = pm + ps;
        for (std::size_t i = 0; i < n; ++i) {
            obs_params(th, i, g, s1, s2);
            const gev::LoglikTerms lt = gev::loglik_terms(yv[i], g);
            // mu-mu
            for (std::size_t a = 0; a < pm; ++a)
                for (std::size_t b = 0; b < pm; ++b)
                    h(om + a, om + b) += lt.hess(0, 0) * dm(i, a) * dm(i, b);
            // sigma-sigma: second derivative through the link adds the
            // gradient term times d2sigma/du2.
            for (std::size_t a = 0; a < ps; ++a)
                for (std::size_t b = 0; b < ps; ++b)
                    h(os + a, os + b) += (lt.hess(1, 1) * s1 * s1 + lt.grad[1] * s2) *
                                         ds(i, a) * ds(i, b);
            // xi-xi
            for (std::size_t a = 0; a < px; ++a)
                for (std::size_t b = 0; b < px; ++b)
                    h(ox + a, ox + b) += lt.hess(2, 2) * dx(i, a) * dx(i, b);
            // mu-sigma
            for (std::size_t a = 0; a < pm; ++a)
                for (std::size_t b = 0; b < ps; ++b) {
                    const double v = lt.hess(0, 1) * s1 * dm(i, a) * ds(i, b);
                    h(om + a, os + b) += v;
                    h(os + b, om + a) += v;
                }
            // mu-xi
            for (std::size_t a = 0; a < pm; ++a)
                for (std::size_t b = 0; b < px; ++b) {
                    const double v = lt.hess(0, 2) * dm(i, a) * dx(i, b);
                    h(om + a, ox + b) += v;
                    h(ox + b, om + a) += v;
                }
            // sigma-xi
            for (std::size_t a = 0; a < ps; ++a)
                for (std::size_t b = 0; b < px; ++b) {
                    const double v = lt.hess(1, 2) * s1 * ds(i, a) * dx(i, b);
                    h(os + a, ox + b) += v;
                    h(ox + b, os + a) += v;
                }
        }
        return h;
    };

    // Start from the Gumbel moment fit with all slopes at zero.  Intercept
    // positions take the baseline values (through the link for sigma).
    const Vector base = gumbel_start(y);
    Vector init(p, 0.0);
    auto set_intercept = [](const Matrix& d, Vector& dst, std::size_t offset,
                            double value) {
        for (std::size_t j = 0; j < d.cols(); ++j) {
            const Vector c = column_of(d, j);
            const auto [lo, hi] = std::minmax_element(c.begin(), c.end());
            if (*lo == *hi && *lo != 0.0) {
                dst[offset + j] = value / *lo;
                return;
            }
        }
    };
    set_intercept(dm, init, 0, base[0]);
    set_intercept(ds, init, pm, log_link ? std::log(base[1]) : base[1]);
    set_intercept(dx, init, pm + ps, base[2]);
    for (int tries = 0; tries < 20 && !m.in_domain(init); ++tries) {
        // widen the scale at the intercept
        set_intercept(ds, init, pm,
                      log_link ? init[pm] + std::log(2.0) : init[pm] * 2.0);
    }
    if (!m.in_domain(init)) set_intercept(dx, init, pm + ps, 0.0);
    m.init = init;

    // Per-observation shape margins xi_i + 1 - 1e-6 for the fitter's
    // early-iteration barrier.
    constexpr double floor = -1.0 + 1e-6;
    auto xi_at = [dx, pm, ps, px](const Vector& th, std::size_t i) {
        double ux = 0.0;
        for (std::size_t j = 0; j < px; ++j) ux += dx(i, j) * th[pm + ps + j];
        return ux;
    };
    BoundaryBarrier b;
    b.value = [xi_at, n](const Vector& th) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += std::log(xi_at(th, i) - floor);
        return s;
    };
    b.grad = [xi_at, dx, n, pm, ps, px, p](const Vector& th) {
        Vector g(p, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double inv = 1.0 / (xi_at(th, i) - floor);
            for (std::size_t j = 0; j < px; ++j) g[pm + ps + j] += inv * dx(i, j);
        }
        return g;
    };
    b.hess = [xi_at, dx, n, pm, ps, px, p](const Vector& th) {
        Matrix h(p, p);
        for (std::size_t i = 0; i < n; ++i) {
            const double mrg = xi_at(th, i) - floor;
            const double w = -1.0 / (mrg * mrg);
            for (std::size_t a = 0; a < px; ++a)
                for (std::size_t bb = 0; bb < px; ++bb)
                    h(pm + ps + a, pm + ps + bb) += w * dx(i, a) * dx(i, bb);
        }
        return h;
    };
    b.min_margin = [xi_at, n](const Vector& th) {
        double worst = kInf;
        for (std::size_t i = 0; i < n; ++i) worst = std::min(worst, xi_at(th, i) - floor);
        return worst;
    };
    m.barrier = std::move(b);

    return RegressionModel{std::move(m), raw_from_working};
}

LikelihoodModel build_linear_gaussian(const LinearGaussianSpec& spec) {
    const std::size_t n = spec.responses.size();
    const std::size_t q = spec.design.cols();
    if (spec.design.rows() != n)
        throw InputError("build_linear_gaussian: design/response size mismatch");
    if (n < q) throw InputError("build_linear_gaussian: more parameters than rows");
    if (!numerics::has_full_column_rank(spec.design))
        throw RankError("build_linear_gaussian: design is rank deficient");
    if (spec.variance_known && !(spec.sigma2 > 0.0))
        throw DomainError("build_linear_gaussian: known variance must be positive");

    const Matrix x = spec.design;
    const Vector y = spec.responses;
    const bool known = spec.variance_known;
    const double s2 = spec.sigma2;
    const double nn = static_cast<double>(n);

    Matrix xtx(q, q);
    for (std::size_t a = 0; a < q; ++a)
        for (std::size_t b = 0; b < q; ++b) {
            double v = 0.0;
            for (std::size_t i = 0; i < n; ++i) v += x(i, a) * x(i, b);
            xtx(a, b) = v;
        }

    auto residual = [x, y, n, q](const Vector& th) {
        Vector r(n);
        for (std::size_t i = 0; i < n; ++i) {
            double fit = 0.0;
            for (std::size_t j = 0; j < q; ++j) fit += x(i, j) * th[j];
            r[i] = y[i] - fit;
        }
        return r;
    };
    auto xt_times = [x, n, q](const Vector& r) {
        Vector v(q, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < q; ++j) v[j] += x(i, j) * r[i];
        return v;
    };

    LikelihoodModel m;
    m.p = q;
    for (std::size_t j = 0; j < q; ++j) m.names.push_back("b[" + std::to_string(j) + "]");
    m.in_domain = [residual, known, nn](const Vector& th) {
        if (known) return true;
        const Vector r = residual(th);
        return numerics::dot(r, r) / nn > 0.0;
    };
    m.loglik = [residual, known, s2, nn](const Vector& th) {
        const Vector r = residual(th);
        const double ssr = numerics::dot(r, r);
        if (known) return -0.5 * nn * std::log(2.0 * M_PI * s2) - 0.5 * ssr / s2;
        const double sig2 = ssr / nn;
        if (!(sig2 > 0.0)) return -kInf;
        return -0.5 * nn * (std::log(2.0 * M_PI * sig2) + 1.0);
    };
    m.grad = [residual, xt_times, known, s2, nn, in = m.in_domain](const Vector& th) {
        if (!in(th))
            throw DomainError("linear-Gaussian gradient requested outside the domain");
        const Vector r = residual(th);
        const double denom = known ? s2 : numerics::dot(r, r) / nn;
        return numerics::scale(1.0 / denom, xt_times(r));
    };
    m.hess = [residual, xt_times, xtx, known, s2, nn, q,
              in = m.in_domain](const Vector& th) {
        if (!in(th))
            throw DomainError("linear-Gaussian Hessian requested outside the domain");
        const Vector r = residual(th);
        const double denom = known ? s2 : numerics::dot(r, r) / nn;
        Matrix h(q, q);
        for (std::size_t a = 0; a < q; ++a)
            for (std::size_t b = 0; b < q; ++b) h(a, b) = -xtx(a, b) / denom;
        if (!known) {
            const Vector xr = xt_times(r);
            for (std::size_t a = 0; a < q; ++a)
                for (std::size_t b = 0; b < q; ++b)
                    h(a, b) += 2.0 / (nn * denom * denom) * xr[a] * xr[b];
        }
        return h;
    };
    m.init = numerics::solve_least_squares(x, y);
    return m;
}

}  // namespace prolik
