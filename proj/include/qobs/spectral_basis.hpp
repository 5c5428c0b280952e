#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <string>
#include <variant>
#include <vector>

#include "qobs/config.hpp"
#include "qobs/quadrature.hpp"

namespace qobs {

using json = nlohmann::json;

// Arrays are stored 0-based: lambda[j-1] = (j pi)^2.
struct EigenData {
    int K = 1;
    Eigen::VectorXd lambda;
    Eigen::VectorXd omega;
    Eigen::VectorXd nu;

    int size() const { return static_cast<int>(lambda.size()); }
    double lam(int j) const { return lambda(j - 1); }
    double om(int j) const { return omega(j - 1); }
    double n(int j) const { return nu(j - 1); }
    double omega_K() const { return omega(K - 1); }
};

inline EigenData eigendata(int J, int K) {
    if (J < K || K < 1) throw DomainError("eigendata: need 1 <= K <= J");
    EigenData e;
    e.K = K;
    e.lambda.resize(J);
    for (int j = 1; j <= J; ++j) e.lambda(j - 1) = (j * M_PI) * (j * M_PI);
    e.omega = e.lambda.array() - e.lambda(0);
    e.nu = e.lambda(K - 1) - e.lambda.array();
    return e;
}

inline EigenData eigendata(const ProblemConfig& c) { return eigendata(c.J, c.K); }

inline double eval_mode(int j, double x) {
    if (j < 1) throw DomainError("eval_mode: mode index must be >= 1");
    if (!(x >= 0.0 && x <= 1.0)) throw DomainError("eval_mode: x outside [0,1]");
    if (x == 0.0 || x == 1.0) return 0.0;
    return M_SQRT2 * std::sin(j * M_PI * x);
}

struct SineSeries {
    std::vector<double> coeffs;  // mu(x) = sum_n coeffs[n-1] sin(n pi x)
    bool operator==(const SineSeries&) const = default;
};

struct Bump {
    double amplitude = 0;
    double left = 0;
    double right = 1;
    bool operator==(const Bump&) const = default;
};

struct BumpSum {
    std::vector<Bump> bumps;
    bool operator==(const BumpSum&) const = default;
};

inline double bump_profile(double s) {
    if (s <= 0.0 || s >= 1.0) return 0.0;
    return std::exp(-1.0 / (s * (1.0 - s)));
}

class DipoleFunction {
public:
    DipoleFunction() : rep_(SineSeries{}) {}
    explicit DipoleFunction(SineSeries s) : rep_(std::move(s)) {}
    explicit DipoleFunction(BumpSum b) : rep_(std::move(b)) {
        for (const auto& bp : std::get<BumpSum>(rep_).bumps)
            if (!(bp.left > 0.0 && bp.left < bp.right && bp.right < 1.0))
                throw DomainError("bump support must lie strictly inside (0,1)");
    }

    static DipoleFunction zero() { return DipoleFunction(SineSeries{}); }

    bool is_sine() const { return std::holds_alternative<SineSeries>(rep_); }
    const SineSeries& sine() const { return std::get<SineSeries>(rep_); }
    const BumpSum& bumps() const { return std::get<BumpSum>(rep_); }
    std::string kind() const { return is_sine() ? "sine" : "bumps"; }

    double operator()(double x) const {
        if (is_sine()) {
            double s = 0;
            const auto& a = sine().coeffs;
            for (std::size_t n = 0; n < a.size(); ++n) s += a[n] * std::sin((n + 1) * M_PI * x);
            return s;
        }
        double s = 0;
        for (const auto& b : bumps().bumps)
            s += b.amplitude * bump_profile((x - b.left) / (b.right - b.left));
        return s;
    }

    // Pieces (a, b, g) with mu = sum of g over its pieces, each g smooth on [a, b].
    // `extra` is the highest intrinsic frequency (in units of pi) of g.
    struct Piece {
        double a, b;
        int extra;
        std::function<double(double)> g;
    };

    std::vector<Piece> pieces() const {
        std::vector<Piece> out;
        if (is_sine()) {
            if (!sine().coeffs.empty())
                out.push_back({0.0, 1.0, static_cast<int>(sine().coeffs.size()),
                               [this](double x) { return (*this)(x); }});
            return out;
        }
        for (const auto& b : bumps().bumps) {
            if (b.amplitude == 0.0) continue;
            out.push_back({b.left, b.right, 0, [b](double x) {
                               return b.amplitude * bump_profile((x - b.left) / (b.right - b.left));
                           }});
        }
        return out;
    }

    bool operator==(const DipoleFunction& o) const { return rep_ == o.rep_; }

private:
    std::variant<SineSeries, BumpSum> rep_;
};

struct DipoleSet {
    std::vector<DipoleFunction> mus;
    json provenance;  // optional, carried through serialization untouched

    int r() const { return static_cast<int>(mus.size()); }
};

inline QuadResult moment_quad(const DipoleFunction& mu, int j, int p, double tol = 1e-10) {
    if (j < 1 || p < 1) throw DomainError("moment: mode indices must be >= 1");
    QuadResult total;
    auto pcs = mu.pieces();
    for (const auto& pc : pcs) {
        auto f = [&](double x) {
            return pc.g(x) * 2.0 * std::sin(j * M_PI * x) * std::sin(p * M_PI * x);
        };
        int panels = std::max(1, static_cast<int>(std::ceil((pc.b - pc.a) * (j + p + pc.extra) / 2.0)));
        auto q = adaptive_gl(f, pc.a, pc.b, tol / std::max<std::size_t>(1, pcs.size()), panels);
        total.value += q.value;
        total.error += q.error;
        total.converged = total.converged && q.converged;
    }
    return total;
}

inline double moment(const DipoleFunction& mu, int j, int p, double tol = 1e-10) {
    // the integrand is symmetric in (j, p); evaluate in canonical order
    if (j > p) std::swap(j, p);
    auto q = moment_quad(mu, j, p, tol);
    if (!q.converged)
        throw NumericError("moment quadrature did not converge for (" + std::to_string(j) + "," +
                               std::to_string(p) + ")",
                           q.value, q.error);
    return q.value;
}

// C[n] = int_0^1 mu(x) cos(n pi x) dx for 0 <= n <= n_max, by composite 20-point
// Gauss-Legendre with at most one period per panel. The error estimate compares
// against the half-resolution grid at the extreme frequencies.
struct CosineTransform {
    std::vector<double> C;
    double error = 0;
};

inline CosineTransform cosine_moments(const DipoleFunction& mu, int n_max) {
    CosineTransform ct;
    ct.C.assign(n_max + 1, 0.0);
    const auto& g = gl20();
    std::vector<int> probe = {0, 1, std::max(0, n_max - 1), n_max};
    for (const auto& pc : mu.pieces()) {
        auto grid = [&](int panels, std::vector<double>& xs, std::vector<double>& fw) {
            xs.clear();
            fw.clear();
            const double h = (pc.b - pc.a) / panels;
            for (int q = 0; q < panels; ++q) {
                const double c = pc.a + (q + 0.5) * h;
                for (std::size_t i = 0; i < g.x.size(); ++i) {
                    const double x = c + 0.5 * h * g.x[i];
                    xs.push_back(x);
                    fw.push_back(0.5 * h * g.w[i] * pc.g(x));
                }
            }
        };
        int panels = std::max(16, static_cast<int>(std::ceil((pc.b - pc.a) * (n_max + pc.extra) / 2.0)));
        panels += panels % 2;
        std::vector<double> xs, fw, xc, fc;
        grid(panels, xs, fw);
        grid(panels / 2, xc, fc);
        for (std::size_t i = 0; i < xs.size(); ++i) {
            if (fw[i] == 0.0) continue;
            const double th = M_PI * xs[i];
            for (int n = 0; n <= n_max; ++n) ct.C[n] += fw[i] * std::cos(n * th);
        }
        for (int n : probe) {
            double fine = 0, coarse = 0;
            for (std::size_t i = 0; i < xs.size(); ++i) fine += fw[i] * std::cos(n * M_PI * xs[i]);
            for (std::size_t i = 0; i < xc.size(); ++i) coarse += fc[i] * std::cos(n * M_PI * xc[i]);
            ct.error = std::max(ct.error, std::abs(fine - coarse));
        }
    }
    return ct;
}

// <mu phi_j, phi_p> = C(|j-p|) - C(j+p). Matrices are materialized on demand.
struct MomentTable {
    int J = 0;
    std::vector<std::vector<double>> cosine;  // per channel, length 2J+1
    double quad_error = 0;

    int r() const { return static_cast<int>(cosine.size()); }

    double operator()(int ell, int j, int p) const {
        const auto& C = cosine[ell];
        return C[std::abs(j - p)] - C[j + p];
    }

    Eigen::MatrixXd matrix(int ell) const {
        Eigen::MatrixXd M(J, J);
        for (int j = 1; j <= J; ++j)
            for (int p = 1; p <= J; ++p) M(j - 1, p - 1) = (*this)(ell, j, p);
        return M;
    }

    // vector over j = 1..J of <mu_ell phi_row, phi_j>
    Eigen::VectorXd row(int ell, int rowmode) const {
        Eigen::VectorXd v(J);
        for (int j = 1; j <= J; ++j) v(j - 1) = (*this)(ell, rowmode, j);
        return v;
    }
};

inline MomentTable moment_table(const DipoleSet& mus, int J) {
    MomentTable t;
    t.J = J;
    for (const auto& mu : mus.mus) {
        auto ct = cosine_moments(mu, 2 * J);
        t.cosine.push_back(std::move(ct.C));
        t.quad_error = std::max(t.quad_error, 2 * ct.error);
    }
    return t;
}

inline MomentTable moment_table(const DipoleSet& mus, const ProblemConfig& c) {
    return moment_table(mus, c.J);
}

// ---- serialization ----

inline json to_json(const DipoleFunction& mu) {
    json j;
    j["kind"] = mu.kind();
    if (mu.is_sine()) {
        j["params"] = mu.sine().coeffs;
    } else {
        json arr = json::array();
        for (const auto& b : mu.bumps().bumps) arr.push_back({b.amplitude, b.left, b.right});
        j["params"] = arr;
    }
    return j;
}

inline DipoleFunction dipole_from_json(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "sine") return DipoleFunction(SineSeries{j.at("params").get<std::vector<double>>()});
    if (kind == "bumps") {
        BumpSum bs;
        for (const auto& b : j.at("params")) {
            if (!b.is_array() || b.size() != 3) throw DomainError("bump params must be [amplitude, left, right]");
            bs.bumps.push_back({b[0].get<double>(), b[1].get<double>(), b[2].get<double>()});
        }
        return DipoleFunction(std::move(bs));
    }
    throw DomainError("unknown dipole kind: " + kind);
}

inline json to_json(const DipoleSet& s) {
    json j;
    j["r"] = s.r();
    j["mus"] = json::array();
    for (const auto& mu : s.mus) j["mus"].push_back(to_json(mu));
    if (!s.provenance.is_null()) j["provenance"] = s.provenance;
    return j;
}

inline DipoleSet dipole_set_from_json(const json& j) {
    DipoleSet s;
    for (const auto& m : j.at("mus")) s.mus.push_back(dipole_from_json(m));
    if (j.at("r").get<int>() != s.r()) throw DomainError("DipoleSet: r does not match number of mus");
    if (j.contains("provenance")) s.provenance = j["provenance"];
    return s;
}

inline DipoleSet load_dipole_set(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DomainError("cannot open " + path);
    return dipole_set_from_json(json::parse(in));
}

}  // namespace qobs
