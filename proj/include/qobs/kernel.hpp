#pragma once

#include <Eigen/Dense>
#include <complex>

#include "qobs/brackets.hpp"
#include "qobs/oscillatory.hpp"
#include "qobs/spectral_basis.hpp"

namespace qobs {

struct KernelValue {
    cplx value;
    double tail = 0;
};

// H_{l,L}(t, s) = -e^{-i omega_K T} sum_j c_j^{l,L} e^{i(nu_j t + omega_j s)}, 0 <= s <= t <= T
inline KernelValue kernel_eval(int l, int L, double t, double s, const CSequence& cs, const EigenData& e,
                               double T) {
    if (!(0 <= s && s <= t && t <= T)) throw DomainError("kernel_eval: need 0 <= s <= t <= T");
    const auto& c = cs.at(l, L);
    cplx sum = 0;
    std::vector<double> mags(cs.J);
    for (int i = 0; i < cs.J; ++i) {
        sum += c(i) * std::polar(1.0, e.nu(i) * t + e.omega(i) * s);
        mags[i] = std::abs(c(i));
    }
    return {-std::polar(1.0, -e.omega_K() * T) * sum, tail_estimate(mags)};
}

// F_T^{l,L}(f, g) = int_0^T f(t) int_0^t H_{l,L}(t, s) g(s) ds dt, exact for f, g linear
// between grid samples.
inline cplx quadratic_functional(int l, int L, const Eigen::VectorXd& f, const Eigen::VectorXd& g,
                                 const CSequence& cs, const EigenData& e, double T) {
    if (f.size() != g.size() || f.size() < 2) throw DomainError("quadratic_functional: grid mismatch");
    const double h = T / (f.size() - 1);
    const auto& c = cs.at(l, L);
    cplx sum = 0;
    for (int i = 0; i < cs.J; ++i) {
        if (c(i) == 0.0) continue;
        sum += c(i) * filon_triangle(f, g, h, e.nu(i), e.omega(i));
    }
    return -std::polar(1.0, -e.omega_K() * T) * sum;
}

}  // namespace qobs
