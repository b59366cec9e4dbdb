#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "prolik/models.hpp"

namespace prolik {

// A sequence of posterior iterates theta[k] with their log-likelihoods,
// either produced by the built-in sampler or read from a file.
struct McmcTrace {
    enum class Source { internal, file };

    std::vector<Vector> iterates;  // K vectors of length p
    Vector logliks;                // K values, finite or -infinity
    double acceptance_rate = 0.0;  // post-adaptation rate (internal source)
    Source source = Source::internal;
};

struct McmcOptions {
    // Fraction of the *total* run spent adapting; those iterations are
    // discarded, so the requested K iterates are all post-adaptation.
    double burn_in_fraction = 0.2;
    double target_acceptance = 0.23;
};

// Gaussian random-walk Metropolis targeting exp(loglik), i.e. the flat-prior
// posterior.  The proposal covariance starts from the inverse negative
// Hessian at theta0 when that is positive definite (a diagonal fallback
// otherwise) and is adapted during burn-in: the empirical covariance of the
// burn-in samples replaces the shape matrix periodically while a
// stochastic-approximation update steers the scalar step scale towards the
// target acceptance rate.  Both are frozen when burn-in ends, and only the
// K frozen-phase iterates are returned.  The run is deterministic given the
// seed (all randomness is drawn from one 64-bit generator through inverse
// transforms).
//
// Note the flat prior is a choice: the prior induced on a derived quantity
// eta(theta) may be informative, so downstream extraction works with
// likelihood thresholds rather than posterior quantiles.
//
// Throws DomainError when theta0 is outside the model domain and
// InputError for K < 1000.
McmcTrace rw_metropolis(const LikelihoodModel& model, const Vector& theta0,
                        std::size_t k, std::uint64_t seed,
                        const McmcOptions& options = {});

struct McmcInterval {
    double lower = 0.0;
    double upper = 0.0;
    std::size_t n_feasible = 0;
};

// Interval extraction from iterates: with lmax the best log-likelihood in
// the trace, the feasible set is every iterate with loglik >= lmax - delta,
// and the interval is the range of eta over it.  The best iterate is always
// feasible, so the result is never empty.  Throws InputError on an empty
// trace and DomainError for delta < 0.
McmcInterval mcmc_interval(const McmcTrace& trace,
                           const std::function<double(const Vector&)>& eta,
                           double delta);

struct ProfileCurveBin {
    double eta_mid = 0.0;
    double loglik_max = 0.0;  // -infinity when empty
    std::size_t count = 0;
    bool empty = true;
};

// Binned profile-curve estimate: equal-width bins spanning the eta range of
// the trace; each bin keeps the maximum log-likelihood among the iterates
// falling in it.  Being a maximum over a restricted set, the curve never
// exceeds the true profile curve.  Throws InputError for an empty trace or
// n_bins < 5 and DomainError when the eta range is degenerate (constant).
std::vector<ProfileCurveBin> mcmc_profile_curve(
    const McmcTrace& trace, const std::function<double(const Vector&)>& eta,
    std::size_t n_bins);

// Reads iterates from a CSV file with header "theta_1,...,theta_p,loglik";
// one iterate per line, '.' decimal separator.  Strict: a malformed header,
// wrong field count, or unparseable number raises InputError with the line
// number.  The result has source = file and acceptance_rate = 0.
McmcTrace read_iterates_csv(const std::string& path);

// Replaces every stored log-likelihood with the model's own value at the
// iterate, guarding against iterate files produced under a different
// likelihood definition.  Throws InputError on parameter-length mismatch.
void recompute_logliks(McmcTrace& trace, const LikelihoodModel& model);

}  // namespace prolik
