#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "prolik/numerics.hpp"

namespace prolik {

// Soft log-barrier describing how far a parameter vector sits from a hard
// domain boundary (the shape floor xi > -1 for extreme-value models).
// value is a sum of log margins, with matching analytic derivatives;
// min_margin is the smallest raw margin, used to decide when an iterate
// is safely interior so the barrier can be dropped.
struct BoundaryBarrier {
    std::function<double(const Vector&)> value;
    std::function<Vector(const Vector&)> grad;
    std::function<Matrix(const Vector&)> hess;
    std::function<double(const Vector&)> min_margin;
};

// Contract every likelihood-based method in this library works against:
// log-likelihood value, gradient, Hessian, and an open domain predicate,
// all for one immutable dataset captured at build time.
//
// loglik returns -infinity outside the domain.  grad and hess are only
// defined on the interior and throw DomainError elsewhere.
struct LikelihoodModel {
    std::size_t p = 0;
    std::vector<std::string> names;
    std::function<double(const Vector&)> loglik;
    std::function<Vector(const Vector&)> grad;
    std::function<Matrix(const Vector&)> hess;
    std::function<bool(const Vector&)> in_domain;
    Vector init;  // a reasonable interior starting point for fitting
    // Present only for models with a hard boundary the fitter should keep
    // its early iterates away from.
    std::optional<BoundaryBarrier> barrier;
};

enum class ScaleLink { identity, log_scale };

// GEV with per-observation parameters from linear predictors:
//   mu_i = x_mu,i' b_mu,  sigma_i = link(x_sigma,i' b_sigma),  xi_i = x_xi,i' b_xi.
struct GevRegressionSpec {
    Matrix design_mu;
    Matrix design_sigma;
    Matrix design_xi;
    Vector responses;
    ScaleLink link = ScaleLink::log_scale;
    // Center/scale non-intercept design columns internally; estimates map
    // back to raw units through raw_from_working.  Raw-unit fitting is kept
    // for demonstrating how badly scaled covariates mislead the solver.
    bool standardize = true;
};

// A regression model together with the linear map sending working-basis
// coefficients (possibly standardized) back to raw-basis coefficients.
// With standardize = false the map is the identity.
struct RegressionModel {
    LikelihoodModel model;
    Matrix raw_from_working;
};

struct LinearGaussianSpec {
    Matrix design;
    Vector responses;
    bool variance_known = false;
    double sigma2 = 1.0;  // used only when variance_known
};

// iid GEV likelihood for a plain sample; parameters (mu, sigma, xi).
// Throws InputError when fewer than 5 observations are supplied.
LikelihoodModel build_iid_gev(const Vector& sample);

// GEV regression per the spec above.  Throws RankError on rank-deficient
// designs and InputError on size mismatches or too-small samples.
RegressionModel build_gev_regression(const GevRegressionSpec& spec);

// Gaussian linear regression; with variance_known the exact quadratic
// log-likelihood, otherwise the concentrated log-likelihood with the ML
// variance estimate (denominator n).
LikelihoodModel build_linear_gaussian(const LinearGaussianSpec& spec);

}  // namespace prolik
