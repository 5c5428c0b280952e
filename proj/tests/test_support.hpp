#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>

#include "qobs/qobs.hpp"

namespace qobs::testing {

inline std::string data_path(const std::string& rel) { return std::string(QOBS_DATA_DIR) + "/" + rel; }

// Trapezoid rule on [0, 1]; spectrally accurate for integrands whose odd periodic
// extension is smooth (products of sines times smooth compactly supported functions).
inline double trapezoid01(const std::function<double(double)>& f, int n = 8192) {
    double s = 0.5 * (f(0.0) + f(1.0));
    for (int i = 1; i < n; ++i) s += f(double(i) / n);
    return s / n;
}

inline double brute_moment(const DipoleFunction& mu, int j, int p) {
    return trapezoid01([&](double x) { return 2 * mu(x) * std::sin(j * M_PI * x) * std::sin(p * M_PI * x); });
}

// r dipoles with `bumps` random bumps each, supports inside (0.05, 0.95).
inline DipoleSet random_bump_set(std::uint64_t seed, int r = 2, int bumps = 3) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> pos(0.05, 0.75), width(0.05, 0.2), amp(-1.0, 1.0);
    DipoleSet s;
    for (int l = 0; l < r; ++l) {
        BumpSum b;
        for (int i = 0; i < bumps; ++i) {
            const double a = pos(rng), w = width(rng);
            b.bumps.push_back({amp(rng) * 50, a, a + w});
        }
        s.mus.emplace_back(std::move(b));
    }
    return s;
}

inline ControlGrid smooth_control(std::uint64_t seed, int r, double T, int N, double amplitude, int modes = 4) {
    std::mt19937_64 rng(seed);
    Eigen::MatrixXd v(r, N + 1);
    for (int l = 0; l < r; ++l) v.row(l) = random_fourier(T, N, modes, amplitude, rng()).transpose();
    return ControlGrid(T, v);
}

inline double rel_diff(double a, double b, double floor = 0.0) {
    const double d = std::max({std::abs(a), std::abs(b), floor});
    return d > 0 ? std::abs(a - b) / d : 0.0;
}

}  // namespace qobs::testing
