#pragma once

#include <cstddef>
#include <functional>

#include "prolik/gev.hpp"
#include "prolik/numerics.hpp"

namespace prolik {

// Scalar quantity of interest eta(theta, t) with the derivatives the bound
// solver and the path-following fields consume.  The extra variable t is
// the log return period for return-level targets and is ignored by
// time-independent targets.
struct TargetFunction {
    // What the target is structurally; the nested-optimisation reference
    // method keys its slice re-parameterisation off this.
    enum class Kind { coordinate, linear, gev_return_level, custom };

    Kind kind = Kind::custom;
    std::size_t dim = 0;  // length of theta this target expects

    std::function<double(const Vector&, double)> value;
    std::function<Vector(const Vector&, double)> grad;   // d eta / d theta
    std::function<Matrix(const Vector&, double)> hess;   // d2 eta / d theta2
    std::function<Vector(const Vector&, double)> cross;  // d2 eta / dt dtheta

    // Metadata used by the slice re-parameterisations.
    std::size_t coordinate_index = 0;  // Kind::coordinate
    Vector linear_coeffs;              // Kind::linear
};

// eta(theta) = theta[index].
TargetFunction target_coordinate(std::size_t index, std::size_t p);

// eta(theta) = a' theta.
TargetFunction target_linear(const Vector& a);

// eta(theta, s) = GEV return level at log period s for an iid GEV model
// with theta = (mu, sigma, xi).
TargetFunction target_gev_return_level();

}  // namespace prolik
