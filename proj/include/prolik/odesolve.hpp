#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "prolik/numerics.hpp"

namespace prolik {

// Right-hand side of an autonomous-in-form ODE  dy/dt = f(t, y).
//
// eval returns std::nullopt when the field cannot be computed at (t, y)
// (for example a singular linear system inside the field); the integrator
// first retries with smaller steps and halts with a partial path when the
// failure persists.  project, when set, is applied to every accepted state
// to restore an invariant the discrete steps drift away from; it must be
// idempotent.  It receives the time of the accepted state because some
// constraints (for example a likelihood level that is itself the time
// variable) depend on it.
struct VectorField {
    std::size_t dimension = 0;
    std::function<std::optional<Vector>(double t, const Vector& y)> eval;
    std::function<Vector(double t, const Vector& y)> project;  // optional
};

enum class HaltReason {
    completed,       // reached t1
    field_failure,   // eval kept failing even with tiny steps
    step_underflow,  // error control forced steps below 1e-14 * |t1 - t0|
    step_limit,      // accepted-step budget exhausted
};

// The accepted integration points, in order of travel from t0 towards t1
// (times decrease when t1 < t0).  derivatives holds the field value at each
// recorded state so intermediate values can be interpolated (see
// path_state_at).  projection_shifts records how far the projection hook
// moved each accepted state (zero at the initial point and when no hook is
// set); it serves as a per-step constraint residual for constrained paths.
struct OdePath {
    std::vector<double> times;
    std::vector<Vector> states;
    std::vector<Vector> derivatives;
    std::vector<double> projection_shifts;
    std::size_t rejected_steps = 0;
    HaltReason halt = HaltReason::completed;
    std::string halt_message;

    bool completed() const { return halt == HaltReason::completed; }
};

struct OdeOptions {
    std::size_t max_steps = 100000;  // accepted-step budget
    double max_step = std::numeric_limits<double>::infinity();  // |h| cap
};

// Integrate the field from (t0, y0) to t1 with the Dormand-Prince embedded
// Runge-Kutta 4(5) pair.  Steps are chosen by a PI controller so the local
// error estimate stays below atol + rtol * |y| componentwise; decreasing
// time (t1 < t0) is supported.  Halts are reported in the returned path,
// never thrown; the path always contains at least the initial point.
//
// Throws InputError when t0 == t1, y0 has the wrong length or non-finite
// entries, or a tolerance is not positive.
OdePath integrate(const VectorField& field, double t0, double t1, const Vector& y0,
                  double rtol, double atol, const OdeOptions& options = {});

// State at time t interpolated from the recorded points by cubic Hermite
// polynomials (matching values and derivatives at the bracketing points).
// Throws InputError when t lies outside the recorded range or the path has
// no recorded derivatives.
Vector path_state_at(const OdePath& path, double t);

}  // namespace prolik
