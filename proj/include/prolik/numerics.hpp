#pragma once

#include <cstddef>
#include <vector>

#include "prolik/errors.hpp"

namespace prolik {

using Vector = std::vector<double>;

// Dense row-major matrix.  Systems in this library are tiny (p ≤ ~10), so
// the implementation favours clarity over blocking or vectorisation.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

namespace numerics {

// --- small vector/matrix helpers -------------------------------------------

double dot(const Vector& a, const Vector& b);
double norm2(const Vector& a);                    // Euclidean norm
Vector matvec(const Matrix& a, const Vector& x);
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
Vector axpy(double alpha, const Vector& x, const Vector& y);  // alpha*x + y
Vector scale(double alpha, const Vector& x);
double max_abs(const Matrix& a);

// --- special functions ------------------------------------------------------

// Standard normal CDF, evaluated through erfc for accuracy in both tails.
double norm_cdf(double x);

// Inverse standard normal CDF.  Rational initial guess polished by one
// Halley step against norm_cdf; absolute error ≤ 1e-9 on (0,1).
// Throws DomainError unless 0 < p < 1.
double norm_quantile(double p);

// Chi-square quantile for d ∈ {1,2} only: d=1 via the squared normal
// quantile, d=2 via the closed form −2 ln(1−p).  Requires 0 ≤ p < 1.
// Throws DomainError for other d or p outside [0,1).
double chisq_quantile(double p, int d);

// --- dense solvers -----------------------------------------------------------

// Solve A x = b for square A by LU with partial pivoting.
// Throws SingularSystemError (carrying the pivot magnitude) when a pivot
// falls below 1e-13 · max|A|.
Vector solve_square(const Matrix& a, const Vector& b);

// Minimise ‖A x − b‖ for A (m×n, m ≥ n) by Householder QR.
// Throws RankError when a diagonal entry of R indicates rank deficiency.
Vector solve_least_squares(const Matrix& a, const Vector& b);

// Whether the m×n matrix (m ≥ n) has full column rank, by the same
// orthogonal factorisation solve_least_squares uses.
bool has_full_column_rank(const Matrix& a);

// Attempt the Cholesky factorisation A = L Lᵀ of a symmetric matrix.
// Returns true and fills `lower` when A is positive definite; returns
// false (leaving `lower` unspecified) when a pivot is not safely positive.
bool try_cholesky(const Matrix& a, Matrix& lower);

// Solve A x = b given the Cholesky factor L from try_cholesky.
Vector cholesky_solve(const Matrix& lower, const Vector& b);

}  // namespace numerics
}  // namespace prolik
