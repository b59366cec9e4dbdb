#include "prolik/odesolve.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>

#include "prolik/errors.hpp"

namespace prolik {

namespace {

using numerics::norm2;

// Dormand-Prince 4(5) tableau.  The last stage row doubles as the 5th-order
// solution weights; kE holds the difference between the 5th- and 4th-order
// weights, giving the local error estimate directly.
constexpr double kC[7] = {0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0};
constexpr double kA[7][6] = {
    {},
    {1.0 / 5},
    {3.0 / 40, 9.0 / 40},
    {44.0 / 45, -56.0 / 15, 32.0 / 9},
    {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
    {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
    {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
};
constexpr double kB5[7] = {35.0 / 384,     0.0,        500.0 / 1113, 125.0 / 192,
                           -2187.0 / 6784, 11.0 / 84,  0.0};
constexpr double kB4[7] = {5179.0 / 57600,    0.0,          7571.0 / 16695, 393.0 / 640,
                           -92097.0 / 339200, 187.0 / 2100, 1.0 / 40};

bool all_finite(const Vector& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

// Weighted root-mean-square of the error estimate against the tolerance
// scale atol + rtol * |y|; values <= 1 mean the step passes.
double error_norm(const Vector& err, const Vector& y_old, const Vector& y_new,
                  double rtol, double atol) {
    double sum = 0.0;
    for (std::size_t i = 0; i < err.size(); ++i) {
        const double sc = atol + rtol * std::max(std::abs(y_old[i]), std::abs(y_new[i]));
        const double r = err[i] / sc;
        sum += r * r;
    }
    return std::sqrt(sum / static_cast<double>(err.size()));
}

// Standard starting-step heuristic: balance the state and field magnitudes,
// then refine with one explicit Euler probe of the field's local variation.
double initial_step(const VectorField& field, double t0, double dir, const Vector& y0,
                    const Vector& f0, double rtol, double atol, double span) {
    const std::size_t n = y0.size();
    double d0 = 0.0, d1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double sc = atol + rtol * std::abs(y0[i]);
        d0 += (y0[i] / sc) * (y0[i] / sc);
        d1 += (f0[i] / sc) * (f0[i] / sc);
    }
    d0 = std::sqrt(d0 / static_cast<double>(n));
    d1 = std::sqrt(d1 / static_cast<double>(n));
    double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * (d0 / d1);
    h0 = std::min(h0, span);

    Vector y1(n);
    for (std::size_t i = 0; i < n; ++i) y1[i] = y0[i] + dir * h0 * f0[i];
    const auto f1 = field.eval(t0 + dir * h0, y1);
    double h1 = h0;
    if (f1 && all_finite(*f1)) {
        double d2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double sc = atol + rtol * std::abs(y0[i]);
            const double r = ((*f1)[i] - f0[i]) / sc;
            d2 += r * r;
        }
        d2 = std::sqrt(d2 / static_cast<double>(n)) / h0;
        const double dmax = std::max(d1, d2);
        h1 = (dmax <= 1e-15) ? std::max(1e-6, h0 * 1e-3)
                             : std::pow(0.01 / dmax, 1.0 / 5.0);
    }
    return std::min({100.0 * h0, h1, span});
}

}  // namespace

OdePath integrate(const VectorField& field, double t0, double t1, const Vector& y0,
                  double rtol, double atol, const OdeOptions& options) {
    if (t0 == t1) throw InputError("integrate: t0 and t1 must differ");
    if (!(rtol > 0.0) || !(atol > 0.0))
        throw InputError("integrate: tolerances must be positive");
    if (y0.size() != field.dimension)
        throw InputError("integrate: initial state has the wrong dimension");
    if (!all_finite(y0)) throw InputError("integrate: initial state is not finite");

    const std::size_t n = field.dimension;
    const double dir = (t1 > t0) ? 1.0 : -1.0;
    const double span = std::abs(t1 - t0);
    const double h_floor = 1e-14 * span;

    OdePath path;
    auto record = [&](double t, Vector y, Vector f, double shift) {
        path.times.push_back(t);
        path.states.push_back(std::move(y));
        path.derivatives.push_back(std::move(f));
        path.projection_shifts.push_back(shift);
    };

    double t = t0;
    Vector y = y0;
    auto f_start = field.eval(t, y);
    if (!f_start || !all_finite(*f_start)) {
        path.halt = HaltReason::field_failure;
        path.halt_message = "field could not be evaluated at the initial point";
        record(t, y, Vector(n, 0.0), 0.0);
        return path;
    }
    Vector f = *f_start;
    record(t, y, f, 0.0);

    double h = std::min(initial_step(field, t0, dir, y, f, rtol, atol, span),
                        options.max_step);
    double err_prev = 1e-4;
    bool last_failure_was_eval = false;

    std::array<Vector, 7> k;
    for (auto& stage : k) stage.assign(n, 0.0);

    std::size_t accepted = 0;
    while (true) {
        const double remaining = std::abs(t1 - t);
        if (remaining <= h_floor) {
            path.halt = HaltReason::completed;
            return path;
        }
        if (accepted >= options.max_steps) {
            path.halt = HaltReason::step_limit;
            path.halt_message = "accepted-step budget exhausted before reaching t1";
            return path;
        }
        h = std::min({h, options.max_step, remaining});
        if (h < h_floor) {
            path.halt = last_failure_was_eval ? HaltReason::field_failure
                                              : HaltReason::step_underflow;
            path.halt_message =
                last_failure_was_eval
                    ? "field evaluation kept failing as the step size shrank"
                    : "step size underflow: the error control suggests the path "
                      "is too stiff or blows up here";
            return path;
        }
        const bool final_step = (h >= remaining);
        const double hs = dir * h;

        // Stage evaluations; the first stage reuses the derivative stored at
        // the current point.
        k[0] = f;
        bool stage_failed = false;
        Vector y_stage(n);
        for (int s = 1; s < 7 && !stage_failed; ++s) {
            for (std::size_t i = 0; i < n; ++i) {
                double acc = 0.0;
                for (int j = 0; j < s; ++j) acc += kA[s][j] * k[j][i];
                y_stage[i] = y[i] + hs * acc;
            }
            const auto ks = field.eval(t + kC[s] * hs, y_stage);
            if (!ks || !all_finite(*ks)) {
                stage_failed = true;
                break;
            }
            k[s] = *ks;
        }
        if (stage_failed) {
            ++path.rejected_steps;
            last_failure_was_eval = true;
            h *= 0.25;
            continue;
        }

        Vector y_new(n), err_vec(n);
        for (std::size_t i = 0; i < n; ++i) {
            double acc5 = 0.0, acc_err = 0.0;
            for (int s = 0; s < 7; ++s) {
                acc5 += kB5[s] * k[s][i];
                acc_err += (kB5[s] - kB4[s]) * k[s][i];
            }
            y_new[i] = y[i] + hs * acc5;
            err_vec[i] = hs * acc_err;
        }
        if (!all_finite(y_new)) {
            ++path.rejected_steps;
            last_failure_was_eval = true;
            h *= 0.25;
            continue;
        }

        const double err = error_norm(err_vec, y, y_new, rtol, atol);
        if (err > 1.0) {
            ++path.rejected_steps;
            last_failure_was_eval = false;
            h *= std::max(0.1, 0.9 * std::pow(err, -0.2));
            continue;
        }

        // Accepted: advance, restore any constraint, store the state with
        // its derivative for dense output.
        t = final_step ? t1 : t + hs;
        double shift = 0.0;
        if (field.project) {
            Vector y_proj = field.project(t, y_new);
            Vector diff(n);
            for (std::size_t i = 0; i < n; ++i) diff[i] = y_proj[i] - y_new[i];
            shift = norm2(diff);
            y_new = std::move(y_proj);
        }
        y = std::move(y_new);
        if (field.project) {
            const auto f_next = field.eval(t, y);
            f = (f_next && all_finite(*f_next)) ? *f_next : k[6];
        } else {
            f = k[6];  // last stage sits exactly at (t + h, y_new)
        }
        record(t, y, f, shift);
        ++accepted;
        last_failure_was_eval = false;

        const double fac =
            (err <= 0.0) ? 5.0
                         : std::clamp(0.9 * std::pow(err, -0.17) * std::pow(err_prev, 0.04),
                                      0.2, 5.0);
        err_prev = std::max(err, 1e-4);
        h *= fac;
    }
}

Vector path_state_at(const OdePath& path, double t) {
    if (path.times.size() != path.states.size() ||
        path.times.size() != path.derivatives.size() || path.times.empty())
        throw InputError("path_state_at: path has no complete records");
    const double dir = (path.times.back() >= path.times.front()) ? 1.0 : -1.0;
    const double lo = dir * path.times.front(), hi = dir * path.times.back();
    const double key = dir * t;
    const double slack = 1e-12 * (1.0 + hi - lo);
    if (key < lo - slack || key > hi + slack)
        throw InputError("path_state_at: time outside the recorded range");
    if (path.times.size() == 1) return path.states.front();

    // Find the segment [i, i+1] bracketing t in travel order.
    std::size_t left = 0, right = path.times.size() - 1;
    while (right - left > 1) {
        const std::size_t mid = (left + right) / 2;
        if (dir * path.times[mid] <= key)
            left = mid;
        else
            right = mid;
    }
    const double ta = path.times[left], tb = path.times[right];
    const double hseg = tb - ta;
    double s = (t - ta) / hseg;
    s = std::clamp(s, 0.0, 1.0);

    const double h00 = (2 * s - 3) * s * s + 1;
    const double h10 = ((s - 2) * s + 1) * s;
    const double h01 = (3 - 2 * s) * s * s;
    const double h11 = (s - 1) * s * s;
    const Vector& ya = path.states[left];
    const Vector& yb = path.states[right];
    const Vector& fa = path.derivatives[left];
    const Vector& fb = path.derivatives[right];
    Vector out(ya.size());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = h00 * ya[i] + h10 * hseg * fa[i] + h01 * yb[i] + h11 * hseg * fb[i];
    return out;
}

}  // namespace prolik
