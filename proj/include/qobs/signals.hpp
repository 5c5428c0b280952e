#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "qobs/config.hpp"

namespace qobs {

using json = nlohmann::json;

struct ControlGrid {
    double T = 1;
    int N = 2;
    Eigen::MatrixXd values;  // r x (N+1), values(l, i) = u^l(i T / N)

    ControlGrid() = default;
    ControlGrid(double T_, int N_, int r) : T(T_), N(N_), values(Eigen::MatrixXd::Zero(r, N_ + 1)) {
        validate_shape();
    }
    ControlGrid(double T_, Eigen::MatrixXd v) : T(T_), N(static_cast<int>(v.cols()) - 1), values(std::move(v)) {
        validate_shape();
        if (!values.allFinite()) throw DomainError("ControlGrid: non-finite samples");
    }

    int r() const { return static_cast<int>(values.rows()); }
    double dt() const { return T / N; }
    double t(int i) const { return T * i / N; }
    Eigen::VectorXd channel(int ell) const { return values.row(ell).transpose(); }

    ControlGrid scaled(double s) const { return ControlGrid(T, values * s); }

    // u(t) by linear interpolation between samples
    Eigen::VectorXd at(double t) const {
        double x = std::clamp(t / dt(), 0.0, static_cast<double>(N));
        int i = std::min(static_cast<int>(x), N - 1);
        double w = x - i;
        return (1 - w) * values.col(i) + w * values.col(i + 1);
    }

private:
    void validate_shape() const {
        if (N < 2) throw DomainError("ControlGrid: N must be >= 2");
        if (!(T > 0)) throw DomainError("ControlGrid: T must be positive");
    }
};

enum class Scheme { simpson, trapezoid };

inline const char* scheme_name(Scheme s) { return s == Scheme::simpson ? "simpson" : "trapezoid"; }

// Cumulative integral vanishing at t = 0. Simpson needs an even number of steps;
// odd nodes use the third-order partial-panel rule.
inline Eigen::VectorXd cumulative_integral(const Eigen::VectorXd& f, double h, Scheme s) {
    const int n = static_cast<int>(f.size()) - 1;
    Eigen::VectorXd F = Eigen::VectorXd::Zero(n + 1);
    if (s == Scheme::trapezoid) {
        for (int i = 0; i < n; ++i) F(i + 1) = F(i) + 0.5 * h * (f(i) + f(i + 1));
        return F;
    }
    for (int i = 0; i + 2 <= n; i += 2) {
        F(i + 1) = F(i) + h / 12.0 * (5 * f(i) + 8 * f(i + 1) - f(i + 2));
        F(i + 2) = F(i) + h / 3.0 * (f(i) + 4 * f(i + 1) + f(i + 2));
    }
    return F;
}

inline double integrate(const Eigen::VectorXd& f, double h) {
    const int n = static_cast<int>(f.size()) - 1;
    if (n % 2 == 0) {
        double s = f(0) + f(n);
        for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(i);
        return s * h / 3.0;
    }
    return h * (f.sum() - 0.5 * (f(0) + f(n)));
}

struct PrimitiveStack {
    Scheme scheme = Scheme::simpson;
    std::vector<Eigen::MatrixXd> levels;  // levels[n] is r x (N+1), levels[0] = u

    int depth() const { return static_cast<int>(levels.size()) - 1; }
    Eigen::VectorXd get(int n, int ell) const { return levels.at(n).row(ell).transpose(); }
};

inline PrimitiveStack iterated_primitives(const ControlGrid& u, int depth) {
    if (depth < 1) throw DomainError("iterated_primitives: depth must be >= 1");
    PrimitiveStack st;
    st.scheme = (u.N % 2 == 0) ? Scheme::simpson : Scheme::trapezoid;
    st.levels.push_back(u.values);
    for (int n = 1; n <= depth; ++n) {
        Eigen::MatrixXd next(u.r(), u.N + 1);
        for (int l = 0; l < u.r(); ++l)
            next.row(l) = cumulative_integral(st.levels.back().row(l).transpose(), u.dt(), st.scheme).transpose();
        st.levels.push_back(std::move(next));
    }
    return st;
}

inline double l2_norm(const Eigen::VectorXd& f, double h) {
    return std::sqrt(std::max(0.0, integrate(f.array().square().matrix(), h)));
}

inline double sup_norm(const Eigen::VectorXd& f) { return f.size() ? f.cwiseAbs().maxCoeff() : 0.0; }

// Fourth-order first derivative; one-sided five-point stencils at the two end nodes.
inline Eigen::VectorXd derivative(const Eigen::VectorXd& f, double h) {
    const int n = static_cast<int>(f.size());
    if (n < 5) throw DomainError("derivative: need at least 5 samples");
    Eigen::VectorXd d(n);
    for (int i = 2; i < n - 2; ++i) d(i) = (f(i - 2) - 8 * f(i - 1) + 8 * f(i + 1) - f(i + 2)) / (12 * h);
    d(0) = (-25 * f(0) + 48 * f(1) - 36 * f(2) + 16 * f(3) - 3 * f(4)) / (12 * h);
    d(1) = (-3 * f(0) - 10 * f(1) + 18 * f(2) - 6 * f(3) + f(4)) / (12 * h);
    d(n - 1) = (25 * f(n - 1) - 48 * f(n - 2) + 36 * f(n - 3) - 16 * f(n - 4) + 3 * f(n - 5)) / (12 * h);
    d(n - 2) = (3 * f(n - 1) + 10 * f(n - 2) - 18 * f(n - 3) + 6 * f(n - 4) - f(n - 5)) / (12 * h);
    return d;
}

inline double sobolev_norm(const ControlGrid& u, int m) {
    if (m < 0) throw DomainError("sobolev_norm: m must be >= 0");
    if (4 * m >= u.N) throw DomainError("sobolev_norm: stencil exceeds grid");
    double s = 0;
    for (int l = 0; l < u.r(); ++l) {
        Eigen::VectorXd d = u.channel(l);
        for (int i = 0; i <= m; ++i) {
            if (i > 0) d = derivative(d, u.dt());
            s += std::pow(l2_norm(d, u.dt()), 2);
        }
    }
    return std::sqrt(s);
}

// Stand-in for the W^{-1,inf} size: sup of the first primitive, max over channels.
inline double wminus1inf_proxy(const ControlGrid& u) {
    auto st = iterated_primitives(u, 1);
    return st.levels[1].cwiseAbs().maxCoeff();
}

// bv(p-1, l) = u_p^l(T)
inline Eigen::MatrixXd boundary_values(const PrimitiveStack& st, int k) {
    if (st.depth() < k) throw DomainError("boundary_values: stack too shallow");
    const int r = static_cast<int>(st.levels[0].rows());
    Eigen::MatrixXd bv(k, r);
    for (int p = 1; p <= k; ++p)
        for (int l = 0; l < r; ++l) bv(p - 1, l) = st.levels[p](l, st.levels[p].cols() - 1);
    return bv;
}

// ---- generators ----

inline Eigen::VectorXd random_fourier(double T, int N, int modes, double amplitude, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    const double a0 = nd(rng);
    std::vector<double> a(modes), b(modes);
    for (int m = 0; m < modes; ++m) {
        a[m] = nd(rng) / (m + 1);
        b[m] = nd(rng) / (m + 1);
    }
    Eigen::VectorXd v(N + 1);
    for (int i = 0; i <= N; ++i) {
        const double t = T * i / N;
        double s = a0;
        for (int m = 0; m < modes; ++m) {
            const double w = 2 * M_PI * (m + 1) * t / T;
            s += a[m] * std::cos(w) + b[m] * std::sin(w);
        }
        v(i) = amplitude * s;
    }
    return v;
}

inline Eigen::VectorXd generate_channel(const json& g, double T, int N) {
    const std::string type = g.at("type").get<std::string>();
    Eigen::VectorXd v = Eigen::VectorXd::Zero(N + 1);
    if (type == "zero") {
    } else if (type == "constant") {
        v.setConstant(g.at("value").get<double>());
    } else if (type == "sinusoid") {
        const double A = g.value("amplitude", 1.0), w = g.at("omega").get<double>(), ph = g.value("phase", 0.0);
        for (int i = 0; i <= N; ++i) v(i) = A * std::cos(w * T * i / N + ph);
    } else if (type == "polynomial") {
        const auto c = g.at("coeffs").get<std::vector<double>>();
        for (int i = 0; i <= N; ++i) {
            const double t = T * i / N;
            double s = 0;
            for (auto it = c.rbegin(); it != c.rend(); ++it) s = s * t + *it;
            v(i) = s;
        }
    } else if (type == "random_fourier") {
        v = random_fourier(T, N, g.value("modes", 8), g.value("amplitude", 1.0), g.at("seed").get<std::uint64_t>());
    } else if (type == "sum") {
        for (const auto& term : g.at("terms")) v += generate_channel(term, T, N);
    } else {
        throw DomainError("unknown generator type: " + type);
    }
    if (g.contains("scale")) v *= g["scale"].get<double>();
    return v;
}

// {"T": .., "N": .., "channels": [generator, ...], "scale": s}; T and N may be overridden.
inline ControlGrid control_from_json(const json& spec, double T = 0, int N = 0) {
    if (T <= 0) T = spec.at("T").get<double>();
    if (N <= 0) N = spec.at("N").get<int>();
    const auto& ch = spec.at("channels");
    Eigen::MatrixXd v(ch.size(), N + 1);
    for (std::size_t l = 0; l < ch.size(); ++l) v.row(l) = generate_channel(ch[l], T, N).transpose();
    if (spec.contains("scale")) v *= spec["scale"].get<double>();
    return ControlGrid(T, std::move(v));
}

// Columns t, u1..ur on a uniform grid starting at 0.
inline ControlGrid control_from_csv(std::istream& in) {
    std::string line;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!std::isdigit(static_cast<unsigned char>(line[0])) && line[0] != '-' && line[0] != '.') continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        if (!rows.empty() && row.size() != rows[0].size()) throw DomainError("control CSV: ragged rows");
        rows.push_back(std::move(row));
    }
    if (rows.size() < 3 || rows[0].size() < 2) throw DomainError("control CSV: need >= 3 rows of t,u1..ur");
    const int N = static_cast<int>(rows.size()) - 1;
    const double T = rows.back()[0];
    if (std::abs(rows[0][0]) > 1e-12 * T) throw DomainError("control CSV: grid must start at t = 0");
    for (int i = 0; i <= N; ++i)
        if (std::abs(rows[i][0] - T * i / N) > 1e-9 * T) throw DomainError("control CSV: grid is not uniform");
    Eigen::MatrixXd v(rows[0].size() - 1, N + 1);
    for (int i = 0; i <= N; ++i)
        for (int l = 0; l + 1 < static_cast<int>(rows[0].size()); ++l) v(l, i) = rows[i][l + 1];
    return ControlGrid(T, std::move(v));
}

inline void control_to_csv(const ControlGrid& u, std::ostream& out) {
    out << "t";
    for (int l = 0; l < u.r(); ++l) out << ",u" << l + 1;
    out << "\n";
    out.precision(17);
    for (int i = 0; i <= u.N; ++i) {
        out << u.t(i);
        for (int l = 0; l < u.r(); ++l) out << "," << u.values(l, i);
        out << "\n";
    }
}

inline ControlGrid load_control(const std::string& path, double T = 0, int N = 0) {
    std::ifstream in(path);
    if (!in) throw DomainError("cannot open " + path);
    if (path.size() > 4 && path.substr(path.size() - 4) == ".csv") return control_from_csv(in);
    return control_from_json(json::parse(in), T, N);
}

}  // namespace qobs
