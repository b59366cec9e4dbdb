#include "prolik/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <utility>

#include "prolik/errors.hpp"

namespace prolik {

using numerics::norm_quantile;
using numerics::try_cholesky;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Uniform draw strictly inside (0, 1) from one 64-bit word, so inverse
// transforms can never hit the endpoints.
double next_uniform(std::mt19937_64& gen) {
    return (static_cast<double>(gen() >> 11) + 0.5) * 0x1.0p-53;
}

double next_normal(std::mt19937_64& gen) { return norm_quantile(next_uniform(gen)); }

// Lower-triangular factor C with C C' = covariance of the initial proposal:
// the inverse negative Hessian at theta0 when it is positive definite, a
// diagonal spread otherwise.
Matrix initial_proposal_factor(const LikelihoodModel& model, const Vector& theta0) {
    const std::size_t p = model.p;
    Matrix diag(p, p);
    for (std::size_t i = 0; i < p; ++i)
        diag(i, i) = 0.1 * (1.0 + std::abs(theta0[i]));
    try {
        const Matrix h = model.hess(theta0);
        Matrix neg(p, p);
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < p; ++j) neg(i, j) = -h(i, j);
        Matrix lower;
        if (!try_cholesky(neg, lower)) return diag;
        // columns of the inverse via triangular solves, then factor it
        Matrix inv(p, p);
        for (std::size_t col = 0; col < p; ++col) {
            Vector e(p, 0.0);
            e[col] = 1.0;
            const Vector x = numerics::cholesky_solve(lower, e);
            for (std::size_t i = 0; i < p; ++i) inv(i, col) = x[i];
        }
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = i + 1; j < p; ++j)
                inv(i, j) = inv(j, i) = 0.5 * (inv(i, j) + inv(j, i));
        Matrix factor;
        if (!try_cholesky(inv, factor)) return diag;
        return factor;
    } catch (const Error&) {
        return diag;
    }
}

}  // namespace

McmcTrace rw_metropolis(const LikelihoodModel& model, const Vector& theta0,
                        std::size_t k, std::uint64_t seed,
                        const McmcOptions& options) {
    const std::size_t p = model.p;
    if (k < 1000) throw InputError("rw_metropolis: need at least 1000 iterates");
    if (theta0.size() != p) throw InputError("rw_metropolis: start length mismatch");
    if (!model.in_domain(theta0))
        throw DomainError("rw_metropolis: start outside the model domain");
    const double l0 = model.loglik(theta0);
    if (!std::isfinite(l0))
        throw DomainError("rw_metropolis: start has non-finite log-likelihood");
    if (!(options.burn_in_fraction > 0.0 && options.burn_in_fraction < 0.9))
        throw DomainError("rw_metropolis: burn_in_fraction in (0, 0.9)");
    if (!(options.target_acceptance > 0.0 && options.target_acceptance < 1.0))
        throw DomainError("rw_metropolis: target_acceptance in (0, 1)");

    // burn_in_fraction of the total run is adaptation, so from K kept
    // iterates the burn-in length is K * f / (1 - f).
    const auto burn = static_cast<std::size_t>(
        std::ceil(static_cast<double>(k) * options.burn_in_fraction /
                  (1.0 - options.burn_in_fraction)));

    std::mt19937_64 gen(seed);
    Matrix factor = initial_proposal_factor(model, theta0);
    double log_scale = std::log(2.38 / std::sqrt(static_cast<double>(p)));

    Vector theta = theta0;
    double loglik = l0;

    // running mean / scatter of the burn-in samples for the shape update
    Vector mean(p, 0.0);
    Matrix scatter(p, p);
    std::size_t n_seen = 0;

    McmcTrace trace;
    trace.iterates.reserve(k);
    trace.logliks.reserve(k);
    std::size_t accepted_frozen = 0;

    Vector z(p), step(p), proposal(p), delta(p);
    for (std::size_t it = 0; it < burn + k; ++it) {
        for (std::size_t i = 0; i < p; ++i) z[i] = next_normal(gen);
        const double scale = std::exp(log_scale);
        for (std::size_t i = 0; i < p; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j <= i; ++j) s += factor(i, j) * z[j];
            step[i] = scale * s;
            proposal[i] = theta[i] + step[i];
        }
        double cand = kNegInf;
        if (model.in_domain(proposal)) {
            cand = model.loglik(proposal);
            if (!std::isfinite(cand)) cand = kNegInf;
        }
        const bool accept = std::log(next_uniform(gen)) < cand - loglik;
        if (accept) {
            theta = proposal;
            loglik = cand;
        }

        if (it < burn) {
            // steer the scalar step towards the target acceptance rate
            const double gamma =
                1.0 / std::pow(static_cast<double>(it) + 1.0, 0.6);
            log_scale += gamma * ((accept ? 1.0 : 0.0) - options.target_acceptance);
            log_scale = std::clamp(log_scale, -15.0, 15.0);

            ++n_seen;
            const double w = 1.0 / static_cast<double>(n_seen);
            for (std::size_t i = 0; i < p; ++i) delta[i] = theta[i] - mean[i];
            for (std::size_t i = 0; i < p; ++i) mean[i] += w * delta[i];
            for (std::size_t i = 0; i < p; ++i)
                for (std::size_t j = 0; j < p; ++j)
                    scatter(i, j) +=
                        delta[i] * (theta[j] - mean[j]);  // Welford cross term

            // periodically swap in the empirical shape once it is stable
            if (n_seen >= std::max<std::size_t>(200, 20 * p) && n_seen % 200 == 0) {
                Matrix cov(p, p);
                double trace_cov = 0.0;
                for (std::size_t i = 0; i < p; ++i) {
                    for (std::size_t j = 0; j < p; ++j)
                        cov(i, j) = scatter(i, j) / static_cast<double>(n_seen - 1);
                    trace_cov += cov(i, i);
                }
                if (trace_cov > 0.0) {
                    const double ridge = 1e-10 * trace_cov / static_cast<double>(p);
                    for (std::size_t i = 0; i < p; ++i) cov(i, i) += ridge;
                    Matrix refreshed;
                    if (try_cholesky(cov, refreshed)) factor = std::move(refreshed);
                }
            }
        } else {
            trace.iterates.push_back(theta);
            trace.logliks.push_back(loglik);
            if (accept) ++accepted_frozen;
        }
    }

    trace.acceptance_rate =
        static_cast<double>(accepted_frozen) / static_cast<double>(k);
    trace.source = McmcTrace::Source::internal;
    return trace;
}

McmcInterval mcmc_interval(const McmcTrace& trace,
                           const std::function<double(const Vector&)>& eta,
                           double delta) {
    if (trace.iterates.empty()) throw InputError("mcmc_interval: empty trace");
    if (!(delta >= 0.0)) throw DomainError("mcmc_interval: delta must be >= 0");

    double lmax = kNegInf;
    for (double l : trace.logliks) lmax = std::max(lmax, l);
    const double threshold = lmax - delta;

    McmcInterval out;
    out.lower = std::numeric_limits<double>::infinity();
    out.upper = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < trace.iterates.size(); ++i) {
        if (trace.logliks[i] < threshold) continue;
        const double value = eta(trace.iterates[i]);
        out.lower = std::min(out.lower, value);
        out.upper = std::max(out.upper, value);
        ++out.n_feasible;
    }
    return out;
}

std::vector<ProfileCurveBin> mcmc_profile_curve(
    const McmcTrace& trace, const std::function<double(const Vector&)>& eta,
    std::size_t n_bins) {
    if (trace.iterates.empty()) throw InputError("mcmc_profile_curve: empty trace");
    if (n_bins < 5) throw InputError("mcmc_profile_curve: need at least 5 bins");

    Vector values(trace.iterates.size());
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < trace.iterates.size(); ++i) {
        values[i] = eta(trace.iterates[i]);
        lo = std::min(lo, values[i]);
        hi = std::max(hi, values[i]);
    }
    if (!(hi > lo))
        throw DomainError("mcmc_profile_curve: eta range is degenerate (constant)");

    const double width = (hi - lo) / static_cast<double>(n_bins);
    std::vector<ProfileCurveBin> bins(n_bins);
    for (std::size_t b = 0; b < n_bins; ++b) {
        bins[b].eta_mid = lo + (static_cast<double>(b) + 0.5) * width;
        bins[b].loglik_max = kNegInf;
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        auto b = static_cast<std::size_t>((values[i] - lo) / width);
        if (b >= n_bins) b = n_bins - 1;  // right edge belongs to the last bin
        bins[b].loglik_max = std::max(bins[b].loglik_max, trace.logliks[i]);
        ++bins[b].count;
        bins[b].empty = false;
    }
    return bins;
}

McmcTrace read_iterates_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("read_iterates_csv: cannot open " + path);

    std::string line;
    if (!std::getline(in, line))
        throw InputError("read_iterates_csv: empty file " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    if (header.size() < 2 || header.back() != "loglik")
        throw InputError(
            "read_iterates_csv: header must be theta_1,...,theta_p,loglik");
    const std::size_t p = header.size() - 1;
    for (std::size_t i = 0; i < p; ++i) {
        char expected[32];
        std::snprintf(expected, sizeof expected, "theta_%zu", i + 1);
        if (header[i] != expected)
            throw InputError(
                "read_iterates_csv: header must be theta_1,...,theta_p,loglik");
    }

    McmcTrace trace;
    trace.source = McmcTrace::Source::file;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        Vector row;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                const double v = std::stod(cell, &used);
                if (used != cell.size()) throw std::invalid_argument(cell);
                row.push_back(v);
            } catch (const std::exception&) {
                throw InputError("read_iterates_csv: bad number '" + cell +
                                 "' on line " + std::to_string(line_no));
            }
        }
        if (row.size() != p + 1)
            throw InputError("read_iterates_csv: wrong field count on line " +
                             std::to_string(line_no));
        trace.logliks.push_back(row.back());
        row.pop_back();
        trace.iterates.push_back(std::move(row));
    }
    if (trace.iterates.empty())
        throw InputError("read_iterates_csv: no iterates in " + path);
    return trace;
}

void recompute_logliks(McmcTrace& trace, const LikelihoodModel& model) {
    for (std::size_t i = 0; i < trace.iterates.size(); ++i) {
        if (trace.iterates[i].size() != model.p)
            throw InputError("recompute_logliks: iterate length mismatch");
        trace.logliks[i] = model.in_domain(trace.iterates[i])
                               ? model.loglik(trace.iterates[i])
                               : kNegInf;
    }
}

}  // namespace prolik
