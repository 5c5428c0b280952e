#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <json.hpp>
#include <random>
#include <string>
#include <vector>

#include "qobs/brackets.hpp"
#include "qobs/config.hpp"
#include "qobs/spectral_basis.hpp"

namespace qobs {

struct DesignFailure : std::runtime_error {
    Eigen::VectorXd best;
    Eigen::VectorXd residuals;
    DesignFailure(const std::string& what, Eigen::VectorXd b, Eigen::VectorXd r)
        : std::runtime_error(what), best(std::move(b)), residuals(std::move(r)) {}
};

// Bumps are parameterized by their peak value; exp(-1/(s(1-s))) peaks at e^{-4}.
inline constexpr double kBumpPeak = 0.01831563888873418;  // e^{-4}

struct DesignLayout {
    int m = 8;  // bumps per dipole
    // slabs of [0.02, 0.98]; dipole 1 uses slabs 0 and 2, dipole 2 uses slabs 1 and 3
    std::vector<std::vector<std::pair<double, double>>> supports;  // per dipole, per bump

    static DesignLayout interleaved(int m, double lo = 0.02, double hi = 0.98, double gap = 0.005,
                                    double width_frac = 0.7) {
        DesignLayout d;
        d.m = m;
        const double slab = (hi - lo) / 4;
        d.supports.resize(2);
        for (int l = 0; l < 2; ++l) {
            for (int half = 0; half < 2; ++half) {
                const int s = l + 2 * half;
                const double a = lo + s * slab + gap, b = lo + (s + 1) * slab - gap;
                const int cnt = half == 0 ? (m + 1) / 2 : m / 2;
                const double w = width_frac * (b - a);
                for (int i = 0; i < cnt; ++i) {
                    const double left = cnt == 1 ? a + 0.5 * (b - a - w) : a + i * (b - a - w) / (cnt - 1);
                    d.supports[l].push_back({left, left + w});
                }
            }
        }
        return d;
    }

    bool disjoint() const {
        for (auto [a1, b1] : supports[0])
            for (auto [a2, b2] : supports[1])
                if (a1 < b2 && a2 < b1) return false;
        return true;
    }

    DipoleSet realize(const Eigen::VectorXd& amps) const {
        DipoleSet s;
        for (int l = 0; l < 2; ++l) {
            BumpSum bs;
            for (int i = 0; i < m; ++i)
                bs.bumps.push_back({amps(l * m + i) / kBumpPeak, supports[l][i].first, supports[l][i].second});
            s.mus.emplace_back(std::move(bs));
        }
        return s;
    }
};

struct ConstraintSpec {
    enum Kind { lin, gamma, sign } kind;
    int p = 0, l = 0, L = 0;
    std::string label() const {
        if (kind == lin) return "lin_" + std::to_string(l + 1);
        std::string s = (kind == sign ? "sign_gamma_" : "gamma_") + std::to_string(p) + "^" + std::to_string(l + 1);
        if (kind == gamma && l != L) s += "," + std::to_string(L + 1);
        return s;
    }
};

// All constraints are linear or bilinear in the amplitude vector a = (a_1, a_2).
class DesignProblem {
public:
    DesignProblem(const DesignLayout& layout, int k, int K, int J) : layout_(layout), k_(k), K_(K), J_(J) {
        e_ = eigendata(J, K);
        const int m = layout.m;
        for (int l = 0; l < 2; ++l) {
            Eigen::MatrixXd MK(J, m), M1(J, m);
            for (int i = 0; i < m; ++i) {
                BumpSum bs;
                bs.bumps.push_back({1.0 / kBumpPeak, layout.supports[l][i].first, layout.supports[l][i].second});
                const auto ct = cosine_moments(DipoleFunction(bs), J + K);
                for (int j = 1; j <= J; ++j) {
                    MK(j - 1, i) = ct.C[std::abs(K - j)] - ct.C[K + j];
                    M1(j - 1, i) = ct.C[j - 1] - ct.C[j + 1];
                }
            }
            MK_.push_back(MK);
            M1_.push_back(M1);
        }
        // forms[p][pair]: gamma_p^{l,L} = a_l^T X a_L
        forms_.resize(2 * k);
        scale_.assign(2 * k, 0.0);
        for (int p = 0; p < 2 * k; ++p) {
            const int A = (p + 1) / 2, B = p / 2;
            Eigen::VectorXd wA(J), wB(J);
            for (int j = 0; j < J; ++j) {
                wA(j) = std::pow(e_.nu(j), A) * std::pow(e_.omega(j), B);
                wB(j) = std::pow(e_.nu(j), B) * std::pow(e_.omega(j), A);
            }
            for (int l = 0; l < 2; ++l)
                for (int L = l; L < 2; ++L) {
                    Eigen::MatrixXd X = MK_[l].transpose() * wA.asDiagonal() * M1_[L] -
                                        (MK_[L].transpose() * wB.asDiagonal() * M1_[l]).transpose();
                    if (l == L) X = (0.5 * (X + X.transpose())).eval();
                    forms_[p].push_back(X);
                    scale_[p] = std::max(scale_[p], X.jacobiSvd().singularValues()(0));
                }
            if (scale_[p] == 0) scale_[p] = 1;
        }
        for (int l = 0; l < 2; ++l) {
            lin_row_.push_back(M1_[l].row(K - 1).transpose());
            lin_scale_.push_back(std::max(1e-300, lin_row_[l].norm()));
        }
        for (int l = 0; l < 2; ++l) specs_.push_back({ConstraintSpec::lin, 0, l, l});
        for (int p = 0; p <= 2 * k - 2; ++p)
            for (int l = 0; l < 2; ++l)
                for (int L = l; L < 2; ++L)
                    if (!(l == L && p % 2 == 0)) specs_.push_back({ConstraintSpec::gamma, p, l, L});
        specs_.push_back({ConstraintSpec::gamma, 2 * k - 1, 0, 1});
        for (int l = 0; l < 2; ++l) specs_.push_back({ConstraintSpec::sign, 2 * k - 1, l, l});
    }

    int unknowns() const { return 2 * layout_.m; }
    int equality_count() const { return static_cast<int>(specs_.size()) - 2; }
    const std::vector<ConstraintSpec>& specs() const { return specs_; }
    const DesignLayout& layout() const { return layout_; }
    double scale(int p) const { return scale_[p]; }

    double gamma(const Eigen::VectorXd& a, int p, int l, int L) const {
        const int m = layout_.m;
        const int idx = l == L ? (l == 0 ? 0 : 2) : 1;
        return a.segment(l * m, m).dot(forms_[p][idx] * a.segment(L * m, m));
    }

    // Stacked scaled constraints: equalities, then sign penalties w max(0, tau - s gamma / scale).
    Eigen::VectorXd constraint_residuals(const Eigen::VectorXd& a, double sign = 1.0, double weight = 1.0,
                                         double tau = 0.05) const {
        Eigen::VectorXd r(specs_.size());
        const int m = layout_.m;
        for (std::size_t i = 0; i < specs_.size(); ++i) {
            const auto& c = specs_[i];
            if (c.kind == ConstraintSpec::lin)
                r(i) = lin_row_[c.l].dot(a.segment(c.l * m, m)) / lin_scale_[c.l];
            else if (c.kind == ConstraintSpec::gamma)
                r(i) = gamma(a, c.p, c.l, c.L) / scale_[c.p];
            else
                r(i) = weight * std::max(0.0, tau - sign * gamma(a, c.p, c.l, c.l) / scale_[c.p]);
        }
        return r;
    }

private:
    DesignLayout layout_;
    int k_, K_, J_;
    EigenData e_;
    std::vector<Eigen::MatrixXd> MK_, M1_;
    std::vector<std::vector<Eigen::MatrixXd>> forms_;
    std::vector<double> scale_;
    std::vector<Eigen::VectorXd> lin_row_;
    std::vector<double> lin_scale_;
    std::vector<ConstraintSpec> specs_;
};

struct DesignOptions {
    std::uint64_t seed = 1;
    int m = 8;
    int max_iterations = 400;
    int restarts = 6;
    double target = 1e-13;     // on scaled equality residuals (inf-norm)
    double stagnation = 1e-10;
    double tau = 0.05;
    Eigen::VectorXd initial;   // optional starting amplitudes (length 2m)
};

struct DesignResult {
    DipoleSet mus;
    HypothesisReport report;
    Eigen::VectorXd amplitudes;
    Eigen::VectorXd residuals;  // scaled equalities followed by sign penalties
    std::vector<std::string> labels;
    int iterations = 0;
    int attempts = 0;
    double sign = 1;
    double residual_inf = 0;
};

namespace detail {

struct SolveOutcome {
    Eigen::VectorXd a;
    int iterations = 0;
    bool converged = false;
    double eq_inf = 0;
};

// Residual of the full least-squares system: constraints plus the two normalizations.
inline Eigen::VectorXd full_residual(const DesignProblem& P, const Eigen::VectorXd& a, double sign, double w,
                                     double tau) {
    const Eigen::VectorXd c = P.constraint_residuals(a, sign, w, tau);
    const int m = P.layout().m;
    Eigen::VectorXd r(c.size() + 2);
    r << c, a.segment(0, m).squaredNorm() - 1.0, a.segment(m, m).squaredNorm() - 1.0;
    return r;
}

inline double equality_inf(const DesignProblem& P, const Eigen::VectorXd& r) {
    const int ne = P.equality_count();
    double v = r.head(ne).cwiseAbs().maxCoeff();
    return std::max(v, r.tail(2).cwiseAbs().maxCoeff());
}

inline bool sign_ok(const DesignProblem& P, const Eigen::VectorXd& r) {
    const int ne = P.equality_count();
    return r.segment(ne, 2).isZero(0);
}

// Damped Gauss-Newton (Levenberg-Marquardt) with forward-difference Jacobian.
inline SolveOutcome solve(const DesignProblem& P, Eigen::VectorXd a, double sign, const DesignOptions& opt) {
    SolveOutcome out;
    double w = 1.0, mu = 1e-3;
    Eigen::VectorXd r = full_residual(P, a, sign, w, opt.tau);
    for (int it = 0; it < opt.max_iterations; ++it) {
        if (equality_inf(P, r) <= opt.target && sign_ok(P, r)) {
            out.converged = true;
            break;
        }
        const int n = static_cast<int>(a.size());
        Eigen::MatrixXd Jm(r.size(), n);
        const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
        for (int i = 0; i < n; ++i) {
            Eigen::VectorXd ap = a;
            const double h = 1e-6 * scale;
            ap(i) += h;
            Jm.col(i) = (full_residual(P, ap, sign, w, opt.tau) - r) / h;
        }
        const Eigen::MatrixXd JtJ = Jm.transpose() * Jm;
        const Eigen::VectorXd g = Jm.transpose() * r;
        bool accepted = false;
        for (int tries = 0; tries < 30 && !accepted; ++tries) {
            Eigen::MatrixXd H = JtJ;
            H.diagonal() += mu * (JtJ.diagonal().array() + 1e-12).matrix();
            const Eigen::VectorXd step = H.ldlt().solve(-g);
            const Eigen::VectorXd an = a + step;
            const Eigen::VectorXd rn = full_residual(P, an, sign, w, opt.tau);
            if (rn.squaredNorm() < r.squaredNorm()) {
                a = an;
                r = rn;
                mu = std::max(mu / 3, 1e-15);
                accepted = true;
            } else {
                mu *= 4;
            }
        }
        out.iterations = it + 1;
        if (!sign_ok(P, r) && w < 1e6) {
            w *= 2;
            r = full_residual(P, a, sign, w, opt.tau);
        }
        if (!accepted) break;
    }
    out.a = a;
    out.eq_inf = equality_inf(P, r);
    out.converged = out.eq_inf <= opt.target && sign_ok(P, r);
    return out;
}

}  // namespace detail

inline DesignResult design_mu(const ProblemConfig& cfg, const DesignOptions& opt) {
    if (cfg.r != 2) throw DomainError("design_mu: only r = 2 is supported");
    const DesignLayout layout = DesignLayout::interleaved(opt.m);
    if (!layout.disjoint()) throw DomainError("design_mu: layout supports overlap");
    const DesignProblem P(layout, cfg.k, cfg.K, cfg.J_series);
    if (P.unknowns() < P.equality_count() + 2 + 2)
        throw DomainError("design_mu: " + std::to_string(P.unknowns()) + " amplitudes cannot satisfy " +
                          std::to_string(P.equality_count()) + " constraints plus normalization");
    DesignResult best;
    best.residual_inf = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_a;
    int attempts = 0;
    for (int restart = 0; restart < std::max(1, opt.restarts); ++restart) {
        for (double sign : {1.0, -1.0}) {
            ++attempts;
            Eigen::VectorXd a0;
            if (opt.initial.size() == P.unknowns() && restart == 0) {
                a0 = opt.initial;
            } else {
                std::mt19937_64 rng(opt.seed + 7919ULL * restart);
                std::normal_distribution<double> nd;
                a0.resize(P.unknowns());
                for (int i = 0; i < a0.size(); ++i) a0(i) = nd(rng);
                a0.segment(0, opt.m).normalize();
                a0.segment(opt.m, opt.m).normalize();
            }
            const auto sol = detail::solve(P, a0, sign, opt);
            if (sol.eq_inf < best.residual_inf) best_a = sol.a, best.residual_inf = sol.eq_inf;
            if (!sol.converged) continue;
            DesignResult res;
            res.amplitudes = sol.a;
            res.iterations = sol.iterations;
            res.attempts = attempts;
            res.sign = sign;
            res.residuals = P.constraint_residuals(sol.a, sign, 1.0, opt.tau);
            res.residual_inf = sol.eq_inf;
            for (const auto& s : P.specs()) res.labels.push_back(s.label());
            res.mus = layout.realize(sol.a);
            res.report = check_hypotheses(res.mus, cfg);
            if (!res.report.all_pass()) continue;
            json prov;
            prov["seed"] = opt.seed;
            prov["restart"] = restart;
            prov["attempts"] = attempts;
            prov["iterations"] = res.iterations;
            prov["sign"] = sign;
            prov["k"] = cfg.k;
            prov["K"] = cfg.K;
            prov["m"] = opt.m;
            prov["J_series"] = cfg.J_series;
            prov["residual_inf"] = res.residual_inf;
            json rs = json::object();
            for (std::size_t i = 0; i < res.labels.size(); ++i) rs[res.labels[i]] = res.residuals(i);
            prov["residuals"] = rs;
            res.mus.provenance = prov;
            return res;
        }
    }
    const Eigen::VectorXd br = best_a.size() ? P.constraint_residuals(best_a, 1.0, 1.0, opt.tau) : Eigen::VectorXd();
    throw DesignFailure("design_mu: no admissible design after " + std::to_string(attempts) +
                            " attempts (best scaled residual " + std::to_string(best.residual_inf) +
                            "); try another seed or a larger family size",
                        best_a, br);
}

}  // namespace qobs
