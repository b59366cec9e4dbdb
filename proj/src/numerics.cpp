#include "prolik/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace prolik {
namespace numerics {

double dot(const Vector& a, const Vector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(const Vector& a) { return std::sqrt(dot(a, a)); }

Vector matvec(const Matrix& a, const Vector& x) {
    Vector y(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * x[j];
        y[i] = s;
    }
    return y;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

Vector axpy(double alpha, const Vector& x, const Vector& y) {
    Vector z(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) z[i] = alpha * x[i] + y[i];
    return z;
}

Vector scale(double alpha, const Vector& x) {
    Vector z(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) z[i] = alpha * x[i];
    return z;
}

double max_abs(const Matrix& a) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) m = std::max(m, std::abs(a(i, j)));
    return m;
}

double norm_cdf(double x) {
    return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

namespace {

// Rational approximation to the normal quantile (absolute error ~1e-9
// before refinement).  Three pieces: central region and the two tails.
double norm_quantile_initial(double p) {
    static const double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                -2.759285104469687e+02, 1.383577518672690e+02,
                                -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                -1.556989798598866e+02, 6.680131188771972e+01,
                                -1.328068155288572e+01};
    static const double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                -2.400758277161838e+00, -2.549732539343734e+00,
                                4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                2.445134137142996e+00, 3.754408661907416e+00};
    const double p_low = 0.02425;

    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > 1.0 - p_low) {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace

double norm_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        std::ostringstream msg;
        msg << "norm_quantile: p must lie in (0,1), got " << p;
        throw DomainError(msg.str());
    }
    double x = norm_quantile_initial(p);
    // One Halley step on f(x) = Phi(x) - p:
    //   f' = phi(x), f'' = -x phi(x)  =>  x+ = x - u / (1 + x u / 2), u = f/phi.
    const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    if (phi > 0.0) {
        const double u = (norm_cdf(x) - p) / phi;
        x -= u / (1.0 + 0.5 * x * u);
    }
    return x;
}

double chisq_quantile(double p, int d) {
    if (!(p >= 0.0 && p < 1.0)) {
        std::ostringstream msg;
        msg << "chisq_quantile: p must lie in [0,1), got " << p;
        throw DomainError(msg.str());
    }
    if (d == 1) {
        if (p == 0.0) return 0.0;
        const double z = norm_quantile(0.5 * (1.0 + p));
        return z * z;
    }
    if (d == 2) {
        return -2.0 * std::log1p(-p);
    }
    std::ostringstream msg;
    msg << "chisq_quantile: only 1 or 2 degrees of freedom are supported, got " << d;
    throw DomainError(msg.str());
}

Vector solve_square(const Matrix& a, const Vector& b) {
    if (a.rows() != a.cols())
        throw DomainError("solve_square: matrix is not square");
    if (b.size() != a.rows())
        throw DomainError("solve_square: right-hand side length mismatch");

    const std::size_t n = a.rows();
    const double pivot_floor = 1e-13 * max_abs(a);

    Matrix lu = a;
    Vector x = b;
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;

    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        double piv_val = std::abs(lu(k, k));
        for (std::size_t i = k + 1; i < n; ++i) {
            if (std::abs(lu(i, k)) > piv_val) {
                piv_val = std::abs(lu(i, k));
                piv = i;
            }
        }
        if (piv_val <= pivot_floor) {
            std::ostringstream msg;
            msg << "solve_square: numerically singular system (pivot " << piv_val
                << " below threshold " << pivot_floor << " at column " << k << ")";
            throw SingularSystemError(msg.str(), piv_val);
        }
        if (piv != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(lu(k, j), lu(piv, j));
            std::swap(x[k], x[piv]);
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            const double m = lu(i, k) / lu(k, k);
            lu(i, k) = m;
            for (std::size_t j = k + 1; j < n; ++j) lu(i, j) -= m * lu(k, j);
            x[i] -= m * x[k];
        }
    }
    for (std::size_t ii = n; ii-- > 0;) {
        double s = x[ii];
        for (std::size_t j = ii + 1; j < n; ++j) s -= lu(ii, j) * x[j];
        x[ii] = s / lu(ii, ii);
    }
    return x;
}

Vector solve_least_squares(const Matrix& a, const Vector& b) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    if (m < n)
        throw DomainError("solve_least_squares: need at least as many rows as columns");
    if (b.size() != m)
        throw DomainError("solve_least_squares: right-hand side length mismatch");

    Matrix r = a;
    Vector qtb = b;
    const double rank_floor = 1e-13 * static_cast<double>(m) * std::max(max_abs(a), 1e-300);

    // Householder triangularisation, applying each reflector to b as we go.
    for (std::size_t k = 0; k < n; ++k) {
        double col_norm = 0.0;
        for (std::size_t i = k; i < m; ++i) col_norm += r(i, k) * r(i, k);
        col_norm = std::sqrt(col_norm);
        if (col_norm <= rank_floor) {
            std::ostringstream msg;
            msg << "solve_least_squares: rank-deficient matrix (column " << k
                << " has no independent component, norm " << col_norm << ")";
            throw RankError(msg.str());
        }
        const double alpha = (r(k, k) >= 0.0) ? -col_norm : col_norm;
        Vector v(m - k, 0.0);
        v[0] = r(k, k) - alpha;
        for (std::size_t i = k + 1; i < m; ++i) v[i - k] = r(i, k);
        const double vtv = dot(v, v);
        r(k, k) = alpha;
        for (std::size_t i = k + 1; i < m; ++i) r(i, k) = 0.0;
        if (vtv > 0.0) {
            for (std::size_t j = k + 1; j < n; ++j) {
                double s = 0.0;
                for (std::size_t i = k; i < m; ++i) s += v[i - k] * r(i, j);
                const double f = 2.0 * s / vtv;
                for (std::size_t i = k; i < m; ++i) r(i, j) -= f * v[i - k];
            }
            double s = 0.0;
            for (std::size_t i = k; i < m; ++i) s += v[i - k] * qtb[i];
            const double f = 2.0 * s / vtv;
            for (std::size_t i = k; i < m; ++i) qtb[i] -= f * v[i - k];
        }
    }

    Vector x(n, 0.0);
    for (std::size_t ii = n; ii-- > 0;) {
        double s = qtb[ii];
        for (std::size_t j = ii + 1; j < n; ++j) s -= r(ii, j) * x[j];
        x[ii] = s / r(ii, ii);
    }
    return x;
}

bool has_full_column_rank(const Matrix& a) {
    if (a.rows() < a.cols()) return false;
    try {
        solve_least_squares(a, Vector(a.rows(), 0.0));
    } catch (const RankError&) {
        return false;
    }
    return true;
}

bool try_cholesky(const Matrix& a, Matrix& lower) {
    const std::size_t n = a.rows();
    if (a.cols() != n) throw InputError("try_cholesky: matrix must be square");
    lower = Matrix(n, n);
    const double floor = 1e-13 * std::max(max_abs(a), 1e-300);
    for (std::size_t j = 0; j < n; ++j) {
        double d = a(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= lower(j, k) * lower(j, k);
        if (!(d > floor)) return false;
        lower(j, j) = std::sqrt(d);
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= lower(i, k) * lower(j, k);
            lower(i, j) = s / lower(j, j);
        }
    }
    return true;
}

Vector cholesky_solve(const Matrix& lower, const Vector& b) {
    const std::size_t n = lower.rows();
    if (b.size() != n) throw InputError("cholesky_solve: size mismatch");
    Vector y(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= lower(i, k) * y[k];
        y[i] = s / lower(i, i);
    }
    Vector x(n, 0.0);
    for (std::size_t ii = n; ii-- > 0;) {
        double s = y[ii];
        for (std::size_t j = ii + 1; j < n; ++j) s -= lower(j, ii) * x[j];
        x[ii] = s / lower(ii, ii);
    }
    return x;
}

}  // namespace numerics
}  // namespace prolik
