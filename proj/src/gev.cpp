#include "prolik/gev.hpp"

#include <cmath>
#include <limits>

namespace prolik {
namespace gev {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Writes g = log-density core g(z, xi) (log f = -log sigma + g) and its
// partials gz, gzz (in z), gx, gxx (in xi), gzx (mixed).
struct GCore {
    double g, gz, gzz, gx, gzx, gxx;
};

// k1(w) = log1p(w)/w with first and second derivatives, uniformly
// accurate: direct formulas away from zero, power series for |w| < 0.5
// where the formulas cancel.  These carry all the delicate small-argument
// behaviour of the exact GEV derivative forms.
void log1p_kernels(double w, double& k1, double& k1p, double& k1pp) {
    if (std::abs(w) >= 0.5) {
        const double L = std::log1p(w);
        k1 = L / w;
        k1p = (w / (1.0 + w) - L) / (w * w);
        k1pp = -(1.0 / ((1.0 + w) * (1.0 + w)) + 2.0 * k1p) / w;
        return;
    }
    // log1p(w)/w = sum_{k>=0} (-w)^k/(k+1); differentiate termwise and
    // shift indices so every sum starts at the constant term.
    k1 = 0.0;
    k1p = 0.0;
    k1pp = 0.0;
    double p = 1.0;   // w^j
    double s = 1.0;   // (-1)^j
    for (int j = 0; j <= 64; ++j) {
        k1 += s * p / (j + 1);
        k1p += -s * (j + 1) * p / (j + 2);
        k1pp += s * (j + 1) * (j + 2) * p / (j + 3);
        if (j >= 2 && std::abs(p) * (j + 2) * (j + 3) < 1e-18) break;
        p *= w;
        s = -s;
    }
}

// Exact closed forms, used for |xi| >= xi_switch.  Everything is built
// from kernels of w = xi*z so no small-xi cancellation is left:
//   t = 1 + xi z,  u = log(t)/xi = z*k1(w)  (-> z as xi -> 0),
//   A = t^{-1/xi} = e^{-u},
//   v = du/dxi = z^2*k1'(w)      (-> -z^2/2),
//   m = d2u/dxi2 = z^3*k1''(w)   (-> 2 z^3/3).
GCore g_core_exact(double z, double xi) {
    const double t = 1.0 + xi * z;
    double k1, k1p, k1pp;
    log1p_kernels(xi * z, k1, k1p, k1pp);
    const double u = z * k1;
    const double A = std::exp(-u);
    const double v = z * z * k1p;
    const double m = z * z * z * k1pp;

    GCore out{};
    out.g = -(1.0 + xi) * u - A;
    out.gz = (A - 1.0 - xi) / t;
    out.gzz = -(1.0 + xi) * (A - xi) / (t * t);
    out.gx = -u - (1.0 + xi) * v + A * v;
    out.gzx = -(A * v + 1.0) / t - (A - 1.0 - xi) * z / (t * t);
    out.gxx = -2.0 * v - (1.0 + xi) * m - A * v * v + A * m;
    return out;
}

// Second-order Taylor expansions about xi = 0, used for |xi| < xi_switch.
GCore g_core_taylor(double z, double xi) {
    const double E = std::exp(-z);
    const double z2 = z * z, z3 = z2 * z, z4 = z3 * z;
    const double z5 = z4 * z, z6 = z5 * z, z7 = z6 * z, z8 = z7 * z;

    GCore out{};
    out.g = (-z - E) + xi * (z2 / 2 - z2 * E / 2 - z) +
            xi * xi * (-z4 * E / 8 - z3 / 3 + z3 * E / 3 + z2 / 2);
    out.gz = (-1.0 + E) + xi * (z2 * E / 2 + z - z * E - 1.0) +
             xi * xi * (z4 * E / 8 - 5 * z3 * E / 6 - z2 + z2 * E + z);
    out.gzz = -E + xi * (-z2 * E / 2 + 2 * z * E + 1.0 - E) +
              xi * xi * (-z4 * E / 8 + 4 * z3 * E / 3 - 7 * z2 * E / 2 - 2 * z +
                         2 * z * E + 1.0);
    out.gx = (z2 / 2 - z2 * E / 2 - z) +
             xi * (-z4 * E / 4 - 2 * z3 / 3 + 2 * z3 * E / 3 + z2) +
             xi * xi * (-z6 * E / 16 + z5 * E / 2 + 3 * z4 / 4 - 3 * z4 * E / 4 - z3);
    out.gzx = (z2 * E / 2 + z - z * E - 1.0) +
              xi * (z4 * E / 4 - 5 * z3 * E / 3 - 2 * z2 + 2 * z2 * E + 2 * z) +
              xi * xi * (z6 * E / 16 - 7 * z5 * E / 8 + 13 * z4 * E / 4 + 3 * z3 -
                         3 * z3 * E - 3 * z2);
    out.gxx = (-z4 * E / 4 - 2 * z3 / 3 + 2 * z3 * E / 3 + z2) +
              xi * (-z6 * E / 8 + z5 * E + 3 * z4 / 2 - 3 * z4 * E / 2 - 2 * z3) +
              xi * xi * (-z8 * E / 32 + z7 * E / 2 - 13 * z6 * E / 6 -
                         12 * z5 / 5 + 12 * z5 * E / 5 + 3 * z4);
    return out;
}

// (e^w - 1)/w and the two higher kernels behind the return-level
// derivatives, each uniformly accurate: direct formula away from zero,
// truncated power series for |w| < 0.5 where the formulas cancel badly.
//   phi1(w) = (e^w - 1)/w
//   psi(w)  = ((w - 1)e^w + 1)/w^2        (= d/dw of w*phi1 ... / scaling)
//   chi(w)  = ((w^2 - 2w + 2)e^w - 2)/w^3
void rl_kernels(double w, double& phi1, double& psi, double& chi) {
    if (std::abs(w) >= 0.5) {
        const double ew = std::exp(w);
        phi1 = std::expm1(w) / w;
        psi = ((w - 1.0) * ew + 1.0) / (w * w);
        chi = ((w * w - 2.0 * w + 2.0) * ew - 2.0) / (w * w * w);
        return;
    }
    phi1 = 0.0;
    psi = 0.0;
    chi = 0.0;
    double wk = 1.0;       // w^k
    double fact = 1.0;     // k!
    for (int k = 0; k < 24; ++k) {
        // phi1: w^k/(k+1)!, psi: (k+1) w^k/(k+2)!, chi: see below.
        const double fk1 = fact * (k + 1);              // (k+1)!
        const double fk2 = fk1 * (k + 2);               // (k+2)!
        const double fk3 = fk2 * (k + 3);               // (k+3)!
        phi1 += wk / fk1;
        psi += (k + 1) * wk / fk2;
        chi += wk * (1.0 / fk1 - 2.0 / fk2 + 2.0 / fk3);
        wk *= w;
        fact *= (k + 1);
    }
}

}  // namespace

bool is_valid(const GevParams& p) { return p.sigma > 0.0 && p.xi >= -1.0; }

double gev_logpdf(double y, const GevParams& p) {
    const double z = (y - p.mu) / p.sigma;
    const double t = 1.0 + p.xi * z;
    if (t <= 0.0) return -kInf;
    const GCore c = (std::abs(p.xi) >= xi_switch) ? g_core_exact(z, p.xi)
                                                  : g_core_taylor(z, p.xi);
    return -std::log(p.sigma) + c.g;
}

double gev_cdf(double y, const GevParams& p) {
    const double z = (y - p.mu) / p.sigma;
    const double t = 1.0 + p.xi * z;
    if (t <= 0.0) return (p.xi > 0.0) ? 0.0 : 1.0;
    double k1, k1p, k1pp;
    log1p_kernels(p.xi * z, k1, k1p, k1pp);
    // A = t^{-1/xi} = exp(-z * log1p(xi z)/(xi z)), Gumbel limit exp(-z).
    return std::exp(-std::exp(-z * k1));
}

double return_level(double s, const GevParams& p) {
    double phi1, psi, chi;
    rl_kernels(s * p.xi, phi1, psi, chi);
    return p.mu + p.sigma * s * phi1;
}

LoglikTerms loglik_terms(double y, const GevParams& p) {
    LoglikTerms out;
    const double z = (y - p.mu) / p.sigma;
    const double t = 1.0 + p.xi * z;
    if (t <= 0.0) {
        out.value = -kInf;
        out.in_support = false;
        return out;
    }
    const GCore c = (std::abs(p.xi) >= xi_switch) ? g_core_exact(z, p.xi)
                                                  : g_core_taylor(z, p.xi);
    const double s = p.sigma;
    out.value = -std::log(s) + c.g;
    out.grad[0] = -c.gz / s;
    out.grad[1] = -(1.0 + z * c.gz) / s;
    out.grad[2] = c.gx;
    out.hess(0, 0) = c.gzz / (s * s);
    out.hess(0, 1) = out.hess(1, 0) = (c.gz + z * c.gzz) / (s * s);
    out.hess(0, 2) = out.hess(2, 0) = -c.gzx / s;
    out.hess(1, 1) = (1.0 + 2.0 * z * c.gz + z * z * c.gzz) / (s * s);
    out.hess(1, 2) = out.hess(2, 1) = -z * c.gzx / s;
    out.hess(2, 2) = c.gxx;
    return out;
}

RlDerivs rl_derivs(double s, const GevParams& p) {
    RlDerivs out;
    const double w = s * p.xi;
    double phi1, psi, chi;
    rl_kernels(w, phi1, psi, chi);
    const double eta0 = s * phi1;           // (T^xi - 1)/xi
    const double eta0_x = s * s * psi;      // d(eta0)/dxi
    const double eta0_xx = s * s * s * chi; // d2(eta0)/dxi2
    const double ew = std::exp(w);          // T^xi

    out.eta = p.mu + p.sigma * eta0;
    out.grad[0] = 1.0;
    out.grad[1] = eta0;
    out.grad[2] = p.sigma * eta0_x;
    out.hess(1, 2) = out.hess(2, 1) = eta0_x;
    out.hess(2, 2) = p.sigma * eta0_xx;
    out.cross[0] = 0.0;
    out.cross[1] = ew;
    out.cross[2] = p.sigma * s * ew;
    return out;
}

double upper_endpoint(const GevParams& p) {
    if (p.xi < 0.0) return p.mu - p.sigma / p.xi;
    return kInf;
}

}  // namespace gev
}  // namespace prolik
