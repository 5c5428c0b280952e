#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>

#include "qobs/config.hpp"
#include "qobs/quadrature.hpp"

// Exact integration of piecewise-linear grid functions against e^{i kappa t}
// (Filon-type product rules), including the iterated triangle integral.

namespace qobs {

// int_0^1 s^m e^{i theta s} ds for m in {0, 1}
inline cplx unit_moment(int m, double theta) {
    const cplx it(0, theta);
    if (std::abs(theta) < 1.0) {
        cplx term = 1, sum = 0;
        for (int n = 0; n < 30; ++n) {
            sum += term / double(n + m + 1);
            term *= it / double(n + 1);
        }
        return sum;
    }
    const cplx e = std::exp(it);
    const cplx e0 = (e - 1.0) / it;
    return m == 0 ? e0 : (e - e0) / it;
}

// E_m(kappa, h) = int_0^h s^m e^{i kappa s} ds
inline cplx cell_moment(int m, double kappa, double h) {
    return std::pow(h, m + 1) * unit_moment(m, kappa * h);
}

struct TriangleMoments {
    cplx d[2][2];  // d[m][n] = int_0^h s^m e^{i nu s} E_n(omega, s) ds
};

inline TriangleMoments triangle_moments(double nu, double omega, double h) {
    const int q = 24 + 2 * static_cast<int>(std::ceil((std::abs(nu) + std::abs(omega)) * h));
    thread_local int cached_q = -1;
    thread_local GaussRule rule;
    if (q != cached_q) {
        rule = gauss_legendre(q);
        cached_q = q;
    }
    TriangleMoments t{};
    for (int i = 0; i < q; ++i) {
        const double s = 0.5 * h * (rule.x[i] + 1.0);
        const double w = 0.5 * h * rule.w[i];
        const cplx en = std::polar(w, nu * s);
        const cplx E0 = cell_moment(0, omega, s), E1 = cell_moment(1, omega, s);
        t.d[0][0] += en * E0;
        t.d[0][1] += en * E1;
        t.d[1][0] += en * s * E0;
        t.d[1][1] += en * s * E1;
    }
    return t;
}

// int_0^T g(t) e^{i kappa t} dt, g linear between uniform samples.
inline cplx filon_integral(const Eigen::VectorXd& g, double h, double kappa) {
    const cplx E0 = cell_moment(0, kappa, h), E1 = cell_moment(1, kappa, h);
    cplx s = 0;
    for (int n = 0; n + 1 < g.size(); ++n) {
        const double a1 = (g(n + 1) - g(n)) / h;
        s += std::polar(1.0, kappa * h * n) * (g(n) * E0 + a1 * E1);
    }
    return s;
}

// int_0^T f(t) e^{i nu t} int_0^t g(s) e^{i omega s} ds dt, f and g linear between samples.
inline cplx filon_triangle(const Eigen::VectorXd& f, const Eigen::VectorXd& g, double h, double nu,
                           double omega) {
    const TriangleMoments D = triangle_moments(nu, omega, h);
    const cplx Ew0 = cell_moment(0, omega, h), Ew1 = cell_moment(1, omega, h);
    const cplx En0 = cell_moment(0, nu, h), En1 = cell_moment(1, nu, h);
    cplx G = 0, sum = 0;
    for (int n = 0; n + 1 < f.size(); ++n) {
        const double t = h * n;
        const double a0 = g(n), a1 = (g(n + 1) - g(n)) / h;
        const double b0 = f(n), b1 = (f(n + 1) - f(n)) / h;
        const cplx pn = std::polar(1.0, nu * t), pw = std::polar(1.0, omega * t);
        sum += pn * (G * (b0 * En0 + b1 * En1) +
                     pw * (b0 * (a0 * D.d[0][0] + a1 * D.d[0][1]) + b1 * (a0 * D.d[1][0] + a1 * D.d[1][1])));
        G += pw * (a0 * Ew0 + a1 * Ew1);
    }
    return sum;
}

}  // namespace qobs
