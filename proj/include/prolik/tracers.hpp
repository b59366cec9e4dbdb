#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "prolik/models.hpp"
#include "prolik/odesolve.hpp"
#include "prolik/optimizer.hpp"
#include "prolik/target.hpp"

namespace prolik {

// Parameter vector bundled with the stationarity multiplier; the state the
// path-following fields evolve.
struct AugmentedState {
    Vector theta;
    double nu = 0.0;
};

// Closed-form boundary point of the locally quadratic likelihood: with
// H0 the negative Hessian at the maximum and h0 the target gradient there,
//   nu_tilde  = sign * sqrt(h0' H0^{-1} h0) / sqrt(2 delta1),
//   theta_tilde = theta_hat + H0^{-1} h0 / nu_tilde.
// sign = +1 steps towards larger eta (the upper side), -1 towards smaller.
//
// Note the returned nu is the multiplier of the *inflation* parameterisation
// (positive on the upper side); the stationarity convention used by
// ProfileBound carries the opposite sign.
//
// Throws CurvatureError when H0 is not positive definite and DomainError
// for delta1 <= 0.
AugmentedState bubble_init(const MleFit& fit, const Vector& h0, double delta1, int sign);

// Newton corrections along the score direction that restore
// loglik(theta) = loglik_target after a discrete step drifted off the level
// set.  Idempotent to second order: re-projecting an already projected
// point moves it by O(residual^2).
Vector project_onto_level(const LikelihoodModel& model, Vector theta,
                          double loglik_target, int iterations = 2);

struct TraceOptions {
    double rtol = 1e-8;
    double atol = 1e-10;
    double max_step = std::numeric_limits<double>::infinity();
};

// ---------------------------------------------------------------------------
// Confidence-band path: the constrained extremum of a time-dependent target
// followed in the time variable s.

// d/ds of (theta, nu) along the path of constrained extrema of
// eta(theta, s) over the fixed level set of the log-likelihood: solves
//   [ -hess_eta + nu * hess_loglik   grad_loglik ] [theta_dot]   [cross_eta]
//   [ grad_loglik'                   0           ] [nu_dot   ] = [    0    ]
// (the s-derivative of the stationarity system; the zero row keeps the
// path on the level set).  Throws SingularSystemError when the bordered
// matrix is singular.
AugmentedState band_field(const LikelihoodModel& model, const TargetFunction& target,
                          const AugmentedState& state, double s);

// Multiplier-free version of the same field for three-parameter location/
// scale/shape models whose target has unit location gradient: the
// stationarity system is reduced by the score ratios
//   r_sigma = d_sigma loglik / d_mu loglik,
//   r_xi    = d_xi    loglik / d_mu loglik,
// giving a 3x3 linear system for theta_dot alone (two reduced rows plus
// the tangency row grad_loglik' theta_dot = 0).
//
// Throws DomainError when the location score vanishes (the reduction is
// undefined there; use band_field instead).
Vector band_field_gev_eliminated(const LikelihoodModel& model,
                                 const TargetFunction& target, const Vector& theta,
                                 double s);

struct BandPoint {
    double s = 0.0;      // time variable (log return period for level targets)
    double eta = 0.0;    // traced bound value at s
    Vector theta;        // parameter vector on the level set
    double nu = 0.0;     // stationarity multiplier (diagnostic)
};

struct BandTrace {
    std::vector<BandPoint> points;  // one per covered grid value, in order
    OdePath path;                   // raw augmented-state integration record
    bool completed = false;         // whole grid covered
    std::string halt_message;       // why coverage stopped, when it did
};

// Follow one side of the confidence band across an increasing grid of time
// values: the first grid point is solved by profile_bound, the rest by
// integrating band_field with per-step projection back onto the level set.
// delta is the one-parameter level offset.  A halt mid-grid yields the
// points covered so far with completed = false.
BandTrace trace_band(const LikelihoodModel& model, const TargetFunction& target,
                     const MleFit& fit, double delta, BoundSide side,
                     const std::vector<double>& s_grid, const TraceOptions& options = {});

// ---------------------------------------------------------------------------
// Two-parameter confidence contour.

// Unit direction a(t) in the plane of the two interest coordinates together
// with its derivative; the default family is a(t) = (cos t, sin t).
struct DirectionFamily {
    std::size_t d = 2;
    std::function<Vector(double)> a;
    std::function<Vector(double)> a_dot;
};

DirectionFamily circle_directions();

enum class ContourBranch { plus, minus };

struct ContourPoint {
    double t = 0.0;       // canonical angle: this point maximises a(t)' psi
    Vector psi;           // values of the two interest coordinates
    Vector theta;         // full parameter vector
    ContourBranch branch = ContourBranch::minus;
    double residual = 0.0;  // first-order-condition residual (merge criterion)
};

// Tangent direction of the contour point path: with z the score, u = z'z,
// H the negative log-likelihood Hessian and nu = +-1/sqrt(u) per branch,
// solves the stacked system
//   [ -nu (I - z z'/u) H ]            [ a_dot embedded in theta space ]
//   [ z'                 ] theta_dot = [ 0                            ]
// by least squares.  On the stationarity manifold the system is consistent
// and the solve residual is at the rounding level (<= 1e-8 * (1 + |rhs|));
// the residual is written to *residual_out when given so callers can check
// that contract.
//
// Throws RankError when the stacked matrix is rank deficient or the
// residual shows the state has left the manifold, DomainError when the
// score vanishes.
Vector contour_field(const LikelihoodModel& model, const DirectionFamily& family,
                     const std::vector<std::size_t>& interest, ContourBranch branch,
                     const Vector& theta, double t, double* residual_out = nullptr);

struct ContourTrace {
    std::vector<ContourPoint> points;  // closed polyline ordered by canonical t
    double max_overlap_gap = 0.0;      // largest psi gap where branches overlap
    bool merge_gap_warning = false;    // gap above merge_tol: contour may be
                                       // non-smooth or disconnected
    OdePath path_plus;
    OdePath path_minus;
    bool completed = false;
    std::string halt_message;
};

struct ContourOptions {
    std::size_t bins = 256;   // even; canonical-angle bins for merging
    double merge_tol = 1e-3;  // overlap gap triggering the warning flag
    TraceOptions ode;
};

// Trace the closed two-parameter confidence region boundary for the pair of
// coordinates (index_a, index_b) at confidence 1 - alpha (two degrees of
// freedom).  Both multiplier-sign branches are integrated over a full turn
// starting from the upper and lower profile bounds of coordinate index_a
// and merged by canonical angle, preferring the branch with the smaller
// first-order residual in each bin.
ContourTrace trace_contour(const LikelihoodModel& model, const MleFit& fit,
                           std::size_t index_a, std::size_t index_b, double alpha,
                           const ContourOptions& options = {});

// ---------------------------------------------------------------------------
// Level-inflation ("bubble") path: the constrained extremum followed in the
// level offset itself, from a small offset delta1 out to delta_target.

// d/d(level) of (theta, nu) along the constrained extremum of a fixed
// target as the likelihood level offset grows: the same bordered system as
// band_field with right-hand side (0, ..., 0, -1) — the log-likelihood
// decreases one-for-one with the level offset.  Throws SingularSystemError
// when the bordered matrix is singular.
AugmentedState bubble_field(const LikelihoodModel& model, const TargetFunction& target,
                            double t, const AugmentedState& state);

struct BubbleTrace {
    OdePath path;          // (theta, nu) over the level offset
    ProfileBound bound;    // end point packaged with KKT/constraint residuals
    bool level_reached = false;
    std::string status;    // "ok" or an explanation of the early stop
};

// Integrate the stationarity system in the level variable (right-hand side
// (0, -1): the log-likelihood decreases one-for-one with the level offset),
// starting from the closed-form init at delta1 (default delta_target/100).
// sign = +1 follows the upper side, -1 the lower.  If the path halts before
// delta_target the returned bound carries the last state and
// level_reached = false ("level not reached"): the confidence region may
// not extend that far or may be disconnected.
BubbleTrace trace_bubble(const LikelihoodModel& model, const TargetFunction& target,
                         double t, const MleFit& fit, double delta_target, int sign,
                         double delta1 = 0.0, const TraceOptions& options = {});

}  // namespace prolik
