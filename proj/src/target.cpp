#include "prolik/target.hpp"

#include "prolik/errors.hpp"

namespace prolik {

TargetFunction target_coordinate(std::size_t index, std::size_t p) {
    if (index >= p) throw DomainError("target_coordinate: index out of range");
    TargetFunction t;
    t.kind = TargetFunction::Kind::coordinate;
    t.dim = p;
    t.coordinate_index = index;
    t.value = [index](const Vector& th, double) { return th[index]; };
    t.grad = [index, p](const Vector&, double) {
        Vector g(p, 0.0);
        g[index] = 1.0;
        return g;
    };
    t.hess = [p](const Vector&, double) { return Matrix(p, p); };
    t.cross = [p](const Vector&, double) { return Vector(p, 0.0); };
    return t;
}

TargetFunction target_linear(const Vector& a) {
    const std::size_t p = a.size();
    if (p == 0) throw DomainError("target_linear: empty coefficient vector");
    TargetFunction t;
    t.kind = TargetFunction::Kind::linear;
    t.dim = p;
    t.linear_coeffs = a;
    t.value = [a](const Vector& th, double) { return numerics::dot(a, th); };
    t.grad = [a](const Vector&, double) { return a; };
    t.hess = [p](const Vector&, double) { return Matrix(p, p); };
    t.cross = [p](const Vector&, double) { return Vector(p, 0.0); };
    return t;
}

TargetFunction target_gev_return_level() {
    TargetFunction t;
    t.kind = TargetFunction::Kind::gev_return_level;
    t.dim = 3;
    auto params = [](const Vector& th) {
        return gev::GevParams{th[0], th[1], th[2]};
    };
    t.value = [params](const Vector& th, double s) {
        return gev::return_level(s, params(th));
    };
    t.grad = [params](const Vector& th, double s) {
        return gev::rl_derivs(s, params(th)).grad;
    };
    t.hess = [params](const Vector& th, double s) {
        return gev::rl_derivs(s, params(th)).hess;
    };
    t.cross = [params](const Vector& th, double s) {
        return gev::rl_derivs(s, params(th)).cross;
    };
    return t;
}

}  // namespace prolik
