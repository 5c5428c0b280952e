#pragma once

#include <array>
#include <cmath>
#include <utility>
#include <vector>

namespace qobs {

struct GaussRule {
    std::vector<double> x;  // nodes on [-1, 1]
    std::vector<double> w;
};

// Newton iteration on P_n from the Chebyshev guess; n >= 2.
inline GaussRule gauss_legendre(int n) {
    GaussRule g;
    g.x.resize(n);
    g.w.resize(n);
    auto legendre = [n](double z, double& dp) {
        double p0 = 1, p1 = z;
        for (int m = 2; m <= n; ++m) {
            double p2 = ((2 * m - 1) * z * p1 - (m - 1) * p0) / m;
            p0 = p1;
            p1 = p2;
        }
        dp = n * (z * p1 - p0) / (z * z - 1);
        return p1;
    };
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double dp = 0;
        for (int it = 0; it < 100; ++it) {
            double dz = legendre(z, dp) / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        legendre(z, dp);
        g.x[i] = -z;
        g.x[n - 1 - i] = z;
        g.w[i] = g.w[n - 1 - i] = 2.0 / ((1 - z * z) * dp * dp);
    }
    return g;
}

inline const GaussRule& gl20() {
    static const GaussRule g = gauss_legendre(20);
    return g;
}

template <class F>
double gl_panel(const F& f, double a, double b, const GaussRule& g = gl20()) {
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    double s = 0;
    for (std::size_t i = 0; i < g.x.size(); ++i) s += g.w[i] * f(c + h * g.x[i]);
    return s * h;
}

struct QuadResult {
    double value = 0;
    double error = 0;
    bool converged = true;
};

// Adaptive Gauss-Legendre with bisection. Panels are processed in a fixed
// order so the result is deterministic. The tolerance is shared out in
// proportion to panel length.
template <class F>
QuadResult adaptive_gl(const F& f, double a, double b, double tol, int initial_panels = 1,
                       int max_depth = 30) {
    QuadResult res;
    if (b <= a) return res;
    struct Panel {
        double a, b, whole;
        int depth;
    };
    std::vector<Panel> stack;
    const double len = b - a;
    for (int i = initial_panels - 1; i >= 0; --i) {
        double pa = a + len * i / initial_panels, pb = a + len * (i + 1) / initial_panels;
        stack.push_back({pa, pb, gl_panel(f, pa, pb), 0});
    }
    while (!stack.empty()) {
        Panel p = stack.back();
        stack.pop_back();
        const double m = 0.5 * (p.a + p.b);
        const double left = gl_panel(f, p.a, m), right = gl_panel(f, m, p.b);
        const double err = std::abs(left + right - p.whole);
        const double allowed = std::max(tol * (p.b - p.a) / len, 1e-15 * std::abs(left + right));
        if (err <= allowed || p.depth >= max_depth) {
            if (err > allowed) res.converged = false;
            res.value += left + right;
            res.error += err;
            continue;
        }
        stack.push_back({m, p.b, right, p.depth + 1});
        stack.push_back({p.a, m, left, p.depth + 1});
    }
    return res;
}

}  // namespace qobs
