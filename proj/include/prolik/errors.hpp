#pragma once

#include <stdexcept>
#include <string>

namespace prolik {

// Base class for every error raised by this library.  Catching
// prolik::Error separates library failures from genuine std::runtime_error
// conditions raised elsewhere in a host application.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// An argument outside its documented domain (probability outside (0,1),
// unsupported degrees of freedom, non-positive scale, ...).
class DomainError : public Error {
public:
    explicit DomainError(const std::string& msg) : Error(msg) {}
};

// A square linear system whose pivoted factorisation broke down.  The
// offending pivot magnitude is kept so callers can report how close to
// singular the matrix was.
class SingularSystemError : public Error {
public:
    SingularSystemError(const std::string& msg, double pivot_magnitude)
        : Error(msg), pivot(pivot_magnitude) {}
    double pivot;
};

// A least-squares matrix without full column rank.
class RankError : public Error {
public:
    explicit RankError(const std::string& msg) : Error(msg) {}
};

// An iterative routine that exhausted its iteration budget or could not
// make progress (optimiser, root finder, step-size underflow, ...).
class ConvergenceError : public Error {
public:
    explicit ConvergenceError(const std::string& msg) : Error(msg) {}
};

// Malformed external input: CSV files, iterate files, CLI configuration.
class InputError : public Error {
public:
    explicit InputError(const std::string& msg) : Error(msg) {}
};

// A curvature matrix that was required to be definite is not (for example
// a likelihood Hessian at a reported maximum that is merely semidefinite).
class CurvatureError : public Error {
public:
    explicit CurvatureError(const std::string& msg) : Error(msg) {}
};

// An objective that keeps improving without bound over the feasible set,
// usually a sign of practical non-identifiability.
class UnboundedError : public Error {
public:
    explicit UnboundedError(const std::string& msg) : Error(msg) {}
};

}  // namespace prolik
