#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstddef>

#include "doctest.h"
#include "prolik/errors.hpp"
#include "prolik/odesolve.hpp"

using namespace prolik;

namespace {

VectorField decay_field() {
    VectorField f;
    f.dimension = 1;
    f.eval = [](double, const Vector& y) -> std::optional<Vector> {
        return Vector{-y[0]};
    };
    return f;
}

}  // namespace

TEST_CASE("a zero field carries the state unchanged") {
    VectorField f;
    f.dimension = 2;
    f.eval = [](double, const Vector&) -> std::optional<Vector> {
        return Vector{0.0, 0.0};
    };
    const OdePath path = integrate(f, 0.0, 1.0, Vector{1.0, 2.0}, 1e-8, 1e-10);
    REQUIRE(path.completed());
    CHECK(path.states.back()[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(path.states.back()[1] == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(path.times.front() == 0.0);
    CHECK(path.times.back() == 1.0);
    for (std::size_t i = 1; i < path.times.size(); ++i)
        CHECK(path.times[i] > path.times[i - 1]);
}

TEST_CASE("exponential decay reaches exp(-1) at the requested tolerance") {
    const OdePath path = integrate(decay_field(), 0.0, 1.0, Vector{1.0}, 1e-8, 1e-10);
    REQUIRE(path.completed());
    CHECK(std::abs(path.states.back()[0] - 0.36787944117144233) < 1e-7);
}

TEST_CASE("interpolated states match the exact solution between steps") {
    const OdePath path = integrate(decay_field(), 0.0, 1.0, Vector{1.0}, 1e-8, 1e-10);
    REQUIRE(path.completed());
    for (double t : {0.1, 0.25, 0.5, 0.77, 0.99}) {
        const Vector y = path_state_at(path, t);
        CHECK(std::abs(y[0] - std::exp(-t)) < 1e-6);
    }
    CHECK_THROWS_AS(path_state_at(path, 1.5), InputError);
    CHECK_THROWS_AS(path_state_at(path, -0.1), InputError);
}

TEST_CASE("finite-time blow-up halts near the singular time") {
    VectorField f;
    f.dimension = 1;
    f.eval = [](double, const Vector& y) -> std::optional<Vector> {
        return Vector{y[0] * y[0]};
    };
    const OdePath path = integrate(f, 0.0, 2.0, Vector{1.0}, 1e-8, 1e-10);
    CHECK_FALSE(path.completed());
    CHECK((path.halt == HaltReason::step_underflow || path.halt == HaltReason::field_failure));
    CHECK(path.halt_message.size() > 0);
    // the exact solution 1/(1 - t) explodes at t = 1
    CHECK(path.times.back() > 0.9);
    CHECK(path.times.back() < 1.05);
    for (const Vector& y : path.states) CHECK(std::isfinite(y[0]));
}

TEST_CASE("halving the step cap reduces the end-state error at fourth order or better") {
    // loose tolerances so the cap, not the error control, sets every step
    OdeOptions coarse;
    coarse.max_step = 0.1;
    OdeOptions fine;
    fine.max_step = 0.05;
    const double exact = std::exp(-1.0);
    const OdePath a = integrate(decay_field(), 0.0, 1.0, Vector{1.0}, 0.9, 0.9, coarse);
    const OdePath b = integrate(decay_field(), 0.0, 1.0, Vector{1.0}, 0.9, 0.9, fine);
    REQUIRE(a.completed());
    REQUIRE(b.completed());
    const double err_a = std::abs(a.states.back()[0] - exact);
    const double err_b = std::abs(b.states.back()[0] - exact);
    CHECK(err_b * 8.0 <= err_a);
}

TEST_CASE("integrating back in time returns to the start") {
    const double rtol = 1e-8, atol = 1e-10;
    const OdePath fwd = integrate(decay_field(), 0.0, 1.0, Vector{1.0}, rtol, atol);
    REQUIRE(fwd.completed());
    const OdePath back =
        integrate(decay_field(), 1.0, 0.0, fwd.states.back(), rtol, atol);
    REQUIRE(back.completed());
    for (std::size_t i = 1; i < back.times.size(); ++i)
        CHECK(back.times[i] < back.times[i - 1]);
    CHECK(std::abs(back.states.back()[0] - 1.0) < 10.0 * (rtol * 1.0 + atol));
}

TEST_CASE("the projection hook keeps the state on its constraint set") {
    // rotation field with renormalisation onto the unit circle
    VectorField f;
    f.dimension = 2;
    f.eval = [](double, const Vector& y) -> std::optional<Vector> {
        return Vector{-y[1], y[0]};
    };
    f.project = [](double, const Vector& y) -> Vector {
        const double r = std::sqrt(y[0] * y[0] + y[1] * y[1]);
        return Vector{y[0] / r, y[1] / r};
    };
    const double two_pi = 2.0 * 3.14159265358979323846;
    const OdePath path = integrate(f, 0.0, two_pi, Vector{1.0, 0.0}, 1e-8, 1e-10);
    REQUIRE(path.completed());
    for (const Vector& y : path.states) {
        const double r = std::sqrt(y[0] * y[0] + y[1] * y[1]);
        CHECK(std::abs(r - 1.0) < 1e-12);
    }
    // idempotence: projecting an already-projected state changes nothing
    const Vector p1 = f.project(two_pi, path.states.back());
    const Vector p2 = f.project(two_pi, p1);
    CHECK(std::abs(p1[0] - p2[0]) < 1e-12);
    CHECK(std::abs(p1[1] - p2[1]) < 1e-12);
    // a full revolution returns to the start
    CHECK(std::abs(path.states.back()[0] - 1.0) < 1e-6);
    CHECK(std::abs(path.states.back()[1]) < 1e-6);
}

TEST_CASE("a field failure mid-range yields a partial path with the reason") {
    VectorField f;
    f.dimension = 1;
    f.eval = [](double t, const Vector& y) -> std::optional<Vector> {
        if (t >= 0.5) return std::nullopt;
        return Vector{-y[0]};
    };
    const OdePath path = integrate(f, 0.0, 1.0, Vector{1.0}, 1e-8, 1e-10);
    CHECK(path.halt == HaltReason::field_failure);
    CHECK(path.times.back() <= 0.5);
    CHECK(path.times.back() > 0.4);  // got close to the wall before giving up
    CHECK(path.states.size() == path.times.size());
    CHECK(path.halt_message.size() > 0);
}

TEST_CASE("invalid integration requests are rejected") {
    CHECK_THROWS_AS(integrate(decay_field(), 0.0, 0.0, Vector{1.0}, 1e-8, 1e-10),
                    InputError);
    CHECK_THROWS_AS(integrate(decay_field(), 0.0, 1.0, Vector{1.0, 2.0}, 1e-8, 1e-10),
                    InputError);
    CHECK_THROWS_AS(integrate(decay_field(), 0.0, 1.0, Vector{1.0}, 0.0, 1e-10),
                    InputError);
    OdeOptions tiny;
    tiny.max_steps = 3;
    const OdePath path = integrate(decay_field(), 0.0, 1.0, Vector{1.0}, 1e-10, 1e-12, tiny);
    CHECK(path.halt == HaltReason::step_limit);
}
