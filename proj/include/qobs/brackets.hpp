#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "qobs/config.hpp"
#include "qobs/spectral_basis.hpp"

namespace qobs {

// ---- truncated series with tail estimates ----

struct SeriesValue {
    double value = 0;
    double tail = 0;   // estimated |sum_{j>J} term_j|, floored at the summation round-off
    double scale = 0;  // sum of |term_j|
    bool ill_conditioned = false;
};

// Geometric extrapolation of the envelope of the last quartile of terms.
inline double tail_estimate(const std::vector<double>& terms) {
    const int n = static_cast<int>(terms.size());
    if (n == 0) return 0.0;
    const int i0 = std::max(0, n - std::max(4, n / 4));
    std::vector<double> env(n - i0);
    double run = 0;
    for (int i = n - 1; i >= i0; --i) {
        run = std::max(run, std::abs(terms[i]));
        env[i - i0] = run;
    }
    if (run == 0.0) return 0.0;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int m = 0;
    for (int i = i0; i < n; ++i) {
        const double e = env[i - i0];
        if (e <= 0) continue;
        const double y = std::log(e);
        sx += i;
        sy += y;
        sxx += double(i) * i;
        sxy += i * y;
        ++m;
    }
    const double last = env.back();
    if (m < 2) return last * (n - i0);
    const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    const double rho = std::exp(slope);
    if (rho < 1.0 - 1e-12) return last * rho / (1.0 - rho);
    return run * (n - i0);
}

inline SeriesValue sum_series(const std::vector<double>& terms) {
    SeriesValue s;
    for (double t : terms) {
        s.value += t;
        s.scale += std::abs(t);
    }
    const double roundoff = std::numeric_limits<double>::epsilon() * s.scale * std::sqrt(double(terms.size()) + 1);
    s.tail = std::max(tail_estimate(terms), roundoff);
    return s;
}

// ---- c-sequences ----

struct CSequence {
    int r = 0, K = 1, J = 0;
    std::vector<Eigen::VectorXd> rowK;  // rowK[l](j-1) = <mu_l phi_K, phi_j>
    std::vector<Eigen::VectorXd> row1;  // row1[l](j-1) = <mu_l phi_1, phi_j>
    std::vector<Eigen::VectorXd> c;     // c[l*r+L](j-1) = c_j^{l,L}
    double tail_bound = 0;              // tail of sum |c_j| j^{4k}, worst pair
    double decay_exponent = std::numeric_limits<double>::infinity();  // worst pair

    const Eigen::VectorXd& at(int l, int L) const { return c[l * r + L]; }
};

// Least-squares slope of log(envelope) against log j over the last three quartiles.
inline double decay_exponent(const Eigen::VectorXd& c) {
    const int n = static_cast<int>(c.size());
    const int i0 = n / 4;
    double run = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    int m = 0;
    std::vector<double> env(n, 0.0);
    for (int i = n - 1; i >= 0; --i) env[i] = run = std::max(run, std::abs(c(i)));
    if (run == 0.0) return std::numeric_limits<double>::infinity();
    for (int i = i0; i < n; ++i) {
        if (env[i] <= 0) continue;
        const double x = std::log(i + 1.0), y = std::log(env[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++m;
    }
    if (m < 2) return std::numeric_limits<double>::infinity();
    return -(m * sxy - sx * sy) / (m * sxx - sx * sx);
}

inline CSequence c_sequence(const MomentTable& table, int K, int k, int J = 0) {
    if (J <= 0) J = table.J;
    if (J < K || J > table.J) throw DomainError("c_sequence: need K <= J <= table.J");
    CSequence cs;
    cs.r = table.r();
    cs.K = K;
    cs.J = J;
    for (int l = 0; l < cs.r; ++l) {
        cs.rowK.push_back(table.row(l, K).head(J));
        cs.row1.push_back(table.row(l, 1).head(J));
    }
    for (int l = 0; l < cs.r; ++l)
        for (int L = 0; L < cs.r; ++L) {
            Eigen::VectorXd v = cs.rowK[l].cwiseProduct(cs.row1[L]);
            std::vector<double> w(J);
            for (int j = 1; j <= J; ++j) w[j - 1] = std::abs(v(j - 1)) * std::pow(double(j), 4 * k);
            cs.tail_bound = std::max(cs.tail_bound, tail_estimate(w));
            cs.decay_exponent = std::min(cs.decay_exponent, decay_exponent(v));
            cs.c.push_back(std::move(v));
        }
    return cs;
}

// gamma_p(a, b) = sum_j (nu^{A} omega^{B} a_j - nu^{B} omega^{A} b_j), A = floor((p+1)/2), B = floor(p/2)
inline std::vector<double> gamma_terms(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const EigenData& e,
                                       int p) {
    const int A = (p + 1) / 2, B = p / 2;
    const int n = static_cast<int>(a.size());
    std::vector<double> t(n);
    for (int i = 0; i < n; ++i) {
        const double nu = e.nu(i), om = e.omega(i);
        const double wa = std::pow(nu, A) * std::pow(om, B), wb = std::pow(nu, B) * std::pow(om, A);
        t[i] = wa * a(i) - wb * b(i);
    }
    return t;
}

inline double gamma_of(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const EigenData& e, int p) {
    double s = 0;
    for (double t : gamma_terms(a, b, e, p)) s += t;
    return s;
}

// ---- gamma table ----

struct GammaTable {
    int k = 1, r = 1, K = 1, J = 0;
    // entries[p][pair], pair enumerates l <= L row-major
    std::vector<std::vector<SeriesValue>> entries;

    static int pair_index(int r, int l, int L) {
        if (l > L) std::swap(l, L);
        return l * r - l * (l - 1) / 2 + (L - l);
    }
    const SeriesValue& at(int p, int l, int L) const { return entries.at(p).at(pair_index(r, l, L)); }
    SeriesValue& at(int p, int l, int L) { return entries.at(p).at(pair_index(r, l, L)); }
    double operator()(int p, int l, int L) const { return at(p, l, L).value; }
};

// Zero test for a series value.
inline double null_threshold(const SeriesValue& s, double tol = 1e-8) {
    return std::max(tol * std::max(1.0, s.scale), 3.0 * s.tail);
}

inline GammaTable gamma_table(const CSequence& cs, const EigenData& e, int k, double tol = 1e-8) {
    if (e.size() < cs.J) throw DomainError("gamma_table: eigendata shorter than c-sequence");
    GammaTable g;
    g.k = k;
    g.r = cs.r;
    g.K = cs.K;
    g.J = cs.J;
    g.entries.resize(2 * k);
    for (int p = 0; p < 2 * k; ++p) {
        g.entries[p].resize(cs.r * (cs.r + 1) / 2);
        for (int l = 0; l < cs.r; ++l)
            for (int L = l; L < cs.r; ++L) {
                SeriesValue s = sum_series(gamma_terms(cs.at(l, L), cs.at(L, l), e, p));
                if (std::abs(s.value) > null_threshold(s, tol) && s.tail > 1e-3 * std::abs(s.value))
                    s.ill_conditioned = true;
                g.at(p, l, L) = s;
            }
    }
    return g;
}

// (-1)^p [ad_A^{a}(B_l), ad_A^{b}(B_L)]_{K,1} with a = floor((p+1)/2), b = floor(p/2).
inline double commutator_gamma(const MomentTable& table, const EigenData& e, int p, int l, int L) {
    const int J = table.J;
    if (e.size() < J) throw DomainError("commutator_gamma: eigendata shorter than table");
    const auto A = e.lambda.head(J).asDiagonal();
    auto ad = [&](Eigen::MatrixXd X, int m) {
        for (int i = 0; i < m; ++i) X = (X * A - A * X).eval();
        return X;
    };
    const Eigen::MatrixXd X = ad(table.matrix(l), (p + 1) / 2);
    const Eigen::MatrixXd Y = ad(table.matrix(L), p / 2);
    const int K = e.K - 1;
    const double br = X.row(K).dot(Y.col(0)) - Y.row(K).dot(X.col(0));
    return (p % 2 ? -1.0 : 1.0) * br;
}

// ---- beta / delta coefficients ----

using BetaTable = std::vector<std::vector<long long>>;

inline BetaTable beta_table(int nu_max) {
    if (nu_max < 0) throw DomainError("beta_table: nu_max must be >= 0");
    BetaTable b;
    b.push_back({1});
    if (nu_max >= 1) b.push_back({1, 1});
    for (int v = 2; v <= nu_max; ++v) {
        std::vector<long long> row(v + 1, 0);
        for (int l = 0; l <= v; ++l) {
            const long long a = l <= v - 1 ? b[v - 1][l] : 0;
            const long long c = (l >= 2 && l - 2 <= v - 2) ? b[v - 2][l - 2] : 0;
            row[l] = a - c;
        }
        b.push_back(std::move(row));
    }
    return b;
}

struct IdentityCheck {
    double lhs = 0, rhs = 0, residual = 0, scale = 0;
};

// Both sides of  sum(a w^{p+v} n^p - b w^p n^{p+v}) = sum_l coef_l (-1)^l gamma_{2p+l}(a,b) w_K^{v-l}.
// `swap` selects the companion identity with a and b exchanged on the left.
inline IdentityCheck weighted_sum_check(const Eigen::VectorXd& a, const Eigen::VectorXd& b, int p, int v,
                                        const EigenData& e, const std::vector<long long>& coef, bool swap) {
    IdentityCheck out;
    const Eigen::VectorXd& x = swap ? b : a;
    const Eigen::VectorXd& y = swap ? a : b;
    for (int i = 0; i < a.size(); ++i) {
        const double w = e.omega(i), n = e.nu(i);
        const double t1 = x(i) * std::pow(w, p + v) * std::pow(n, p), t2 = y(i) * std::pow(w, p) * std::pow(n, p + v);
        out.lhs += t1 - t2;
        out.scale += std::abs(t1) + std::abs(t2);
    }
    const double wK = e.omega_K();
    for (int l = 0; l <= v; ++l) {
        if (coef[l] == 0) continue;
        const double f = coef[l] * ((l % 2) ? -1.0 : 1.0) * std::pow(wK, v - l);
        for (double t : gamma_terms(a, b, e, 2 * p + l)) {
            out.rhs += f * t;
            out.scale += std::abs(f * t);
        }
    }
    out.residual = std::abs(out.lhs - out.rhs);
    return out;
}

inline IdentityCheck weighted_sum_identity(const Eigen::VectorXd& a, const Eigen::VectorXd& b, int p, int v,
                                           const EigenData& e, const BetaTable& beta) {
    return weighted_sum_check(a, b, p, v, e, beta.at(v), false);
}

// Coefficients of the companion identity, fitted by least squares on random
// sequences and rounded to integers; the fit residual is reported.
struct DeltaFit {
    BetaTable delta;
    double max_residual = 0;
};

inline DeltaFit fit_delta_table(int nu_max, const EigenData& e, std::uint64_t seed = 7) {
    DeltaFit out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    const int n = std::min(e.size(), 8);
    for (int v = 0; v <= nu_max; ++v) {
        const int rows = 4 * (v + 1) + 4;
        Eigen::MatrixXd M(rows, v + 1);
        Eigen::VectorXd rhs(rows);
        std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> samples;
        for (int s = 0; s < rows; ++s) {
            Eigen::VectorXd a(n), b(n);
            for (int i = 0; i < n; ++i) a(i) = nd(rng), b(i) = nd(rng);
            const int p = s % 2;
            double lhs = 0, sc = 0;
            for (int i = 0; i < n; ++i) {
                const double w = e.omega(i), nn = e.nu(i);
                const double t = b(i) * std::pow(w, p + v) * std::pow(nn, p) - a(i) * std::pow(w, p) * std::pow(nn, p + v);
                lhs += t;
                sc += std::abs(t);
            }
            for (int l = 0; l <= v; ++l)
                M(s, l) = ((l % 2) ? -1.0 : 1.0) * gamma_of(a, b, e, 2 * p + l) * std::pow(e.omega_K(), v - l) / sc;
            rhs(s) = lhs / sc;
        }
        Eigen::VectorXd d = M.colPivHouseholderQr().solve(rhs);
        std::vector<long long> row(v + 1);
        for (int l = 0; l <= v; ++l) row[l] = std::llround(d(l));
        Eigen::VectorXd di(v + 1);
        for (int l = 0; l <= v; ++l) di(l) = double(row[l]);
        out.max_residual = std::max(out.max_residual, (M * di - rhs).cwiseAbs().maxCoeff());
        out.delta.push_back(std::move(row));
    }
    return out;
}

// ---- quadratic form and hypotheses ----

struct QuadraticForm {
    Eigen::MatrixXd Q;
    Eigen::VectorXd eigenvalues;  // ascending

    double operator()(const Eigen::VectorXd& a) const { return a.dot(Q * a); }

    bool definite(double thr) const {
        return eigenvalues.size() > 0 &&
               ((eigenvalues.minCoeff() > thr) || (eigenvalues.maxCoeff() < -thr));
    }
    double min_abs_eigenvalue() const { return eigenvalues.cwiseAbs().minCoeff(); }
};

inline QuadraticForm quadratic_form(const GammaTable& g) {
    const int p = 2 * g.k - 1;
    QuadraticForm q;
    q.Q.resize(g.r, g.r);
    for (int l = 0; l < g.r; ++l)
        for (int L = 0; L < g.r; ++L) q.Q(l, L) = g(p, std::min(l, L), std::max(l, L)) / 2;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(q.Q);
    q.eigenvalues = es.eigenvalues();
    return q;
}

enum class Verdict { pass, fail, inconclusive };

inline const char* verdict_name(Verdict v) {
    return v == Verdict::pass ? "pass" : v == Verdict::fail ? "fail" : "inconclusive";
}

struct HypothesisEntry {
    Verdict verdict = Verdict::inconclusive;
    double value = 0;      // headline evidence
    double threshold = 0;  // what it was judged against
    json evidence;
};

struct HypothesisReport {
    int k = 1, K = 2, r = 1, J_series = 0;
    HypothesisEntry reg, lin, conv, null, pos;
    double linear_test_min = 0;  // min_j j^3 sum_l |<mu_l phi_1, phi_j>|
    GammaTable gamma;
    std::vector<std::string> warnings;

    bool all_pass() const {
        for (const auto* h : {&reg, &lin, &conv, &null, &pos})
            if (h->verdict != Verdict::pass) return false;
        return true;
    }
};

inline HypothesisEntry judge_pos(const GammaTable& g, double tol = 1e-8) {
    HypothesisEntry h;
    const int p = 2 * g.k - 1;
    QuadraticForm q = quadratic_form(g);
    double tail = 0, scale = 0;
    for (int l = 0; l < g.r; ++l)
        for (int L = l; L < g.r; ++L) {
            tail = std::max(tail, g.at(p, l, L).tail);
            scale = std::max(scale, std::abs(g(p, l, L)));
        }
    h.threshold = std::max(3 * tail, tol * scale);
    h.value = q.min_abs_eigenvalue();
    h.verdict = q.definite(h.threshold) ? Verdict::pass : Verdict::fail;
    h.evidence["eigenvalues"] = std::vector<double>(q.eigenvalues.data(), q.eigenvalues.data() + g.r);
    if (g.r == 2) {
        const double g1 = g(p, 0, 0), g2 = g(p, 1, 1), g12 = g(p, 0, 1);
        h.evidence["r2_shortcut"] = {{"lhs", g12 * g12}, {"rhs", g1 * g2}, {"holds", g12 * g12 < g1 * g2}};
    }
    return h;
}

inline HypothesisReport judge_hypotheses(const MomentTable& table, const GammaTable& g, const CSequence& cs,
                                         double quad_error, double tol = 1e-8) {
    HypothesisReport rep;
    rep.k = g.k;
    rep.K = g.K;
    rep.r = g.r;
    rep.J_series = g.J;
    rep.gamma = g;

    rep.reg.verdict = Verdict::pass;
    rep.reg.evidence["reason"] = "closed-form smooth family (sine series or compactly supported bumps)";

    double worst = 0, thr_lin = 0;
    Verdict lin = Verdict::pass;
    for (int l = 0; l < g.r; ++l) {
        const double b = table(l, 1, g.K);
        const double thr = std::max(tol * std::max(1.0, cs.row1[l].cwiseAbs().maxCoeff()), 10 * quad_error);
        rep.lin.evidence["moments"].push_back(b);
        if (std::abs(b) > thr) lin = Verdict::fail;
        if (std::abs(b) >= worst) worst = std::abs(b), thr_lin = thr;
    }
    rep.lin.verdict = lin;
    rep.lin.value = worst;
    rep.lin.threshold = thr_lin;

    rep.conv.value = cs.decay_exponent;
    rep.conv.threshold = 4 * g.k + 1;
    rep.conv.verdict = (cs.decay_exponent > rep.conv.threshold) ? Verdict::pass : Verdict::fail;
    rep.conv.evidence["weighted_tail"] = cs.tail_bound;

    Verdict nv = Verdict::pass;
    double worst_ratio = 0;
    for (int p = 0; p <= 2 * g.k - 2; ++p)
        for (int l = 0; l < g.r; ++l)
            for (int L = l; L < g.r; ++L) {
                const auto& s = g.at(p, l, L);
                const double thr = null_threshold(s, tol);
                rep.null.evidence["entries"].push_back(
                    {{"p", p}, {"l", l + 1}, {"L", L + 1}, {"value", s.value}, {"threshold", thr}});
                if (std::abs(s.value) > thr) nv = Verdict::fail;
                if (std::abs(s.value) / thr >= worst_ratio) {
                    worst_ratio = std::abs(s.value) / thr;
                    rep.null.value = std::abs(s.value);
                    rep.null.threshold = thr;
                }
            }
    rep.null.verdict = nv;

    rep.pos = judge_pos(g, tol);

    for (int p = 0; p < 2 * g.k; ++p)
        for (int l = 0; l < g.r; ++l)
            for (int L = l; L < g.r; ++L)
                if (g.at(p, l, L).ill_conditioned) {
                    rep.warnings.push_back("ill-conditioned series gamma_" + std::to_string(p) + "^{" +
                                           std::to_string(l + 1) + "," + std::to_string(L + 1) + "}");
                    if (rep.pos.verdict == Verdict::pass && p == 2 * g.k - 1) rep.pos.verdict = Verdict::inconclusive;
                    if (rep.null.verdict == Verdict::pass && p < 2 * g.k - 1) rep.null.verdict = Verdict::inconclusive;
                }

    double mn = std::numeric_limits<double>::infinity();
    for (int j = 1; j <= cs.J; ++j) {
        double s = 0;
        for (int l = 0; l < g.r; ++l) s += std::abs(cs.row1[l](j - 1));
        mn = std::min(mn, std::pow(double(j), 3) * s);
    }
    rep.linear_test_min = mn;
    return rep;
}

inline HypothesisReport check_hypotheses(const DipoleSet& mus, const ProblemConfig& cfg, double tol = 1e-8) {
    MomentTable table = moment_table(mus, cfg.J_series);
    EigenData e = eigendata(cfg.J_series, cfg.K);
    CSequence cs = c_sequence(table, cfg.K, cfg.k);
    GammaTable g = gamma_table(cs, e, cfg.k, tol);
    return judge_hypotheses(table, g, cs, table.quad_error, tol);
}

// ---- independence rank diagnostic ----

struct RankDiagnostic {
    int rank = 0, expected = 0;
    double condition = std::numeric_limits<double>::infinity();
    std::vector<double> singular_values;
    std::vector<int> columns;  // chosen modes j (1-based) of a well-conditioned minor
    std::string deficiency;
};

inline RankDiagnostic independence_rank(const MomentTable& table, const EigenData& e, int k, int J = 0) {
    if (J <= 0) J = table.J;
    const int r = table.r();
    if (J < 2 * k * r) throw DomainError("independence_rank: need J >= 2kr");
    RankDiagnostic d;
    d.expected = k * r;
    // row (p, l): j -> <mu_l phi_1, phi_j> (-i omega_j)^p, stored as real and imaginary blocks
    Eigen::MatrixXd M(k * r, 2 * J);
    Eigen::MatrixXcd Mc(k * r, J);
    for (int p = 0; p < k; ++p)
        for (int l = 0; l < r; ++l)
            for (int j = 1; j <= J; ++j) {
                // rows of order p are scaled by omega_K^{-p} to keep them comparable
                const cplx v = table(l, 1, j) * std::pow(cplx(0, -e.om(j) / std::max(1.0, e.omega_K())), p);
                Mc(p * r + l, j - 1) = v;
                M(p * r + l, j - 1) = v.real();
                M(p * r + l, J + j - 1) = v.imag();
            }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeFullU);
    const auto sv = svd.singularValues();
    d.singular_values.assign(sv.data(), sv.data() + sv.size());
    const double cut = 1e-10 * (sv.size() ? sv(0) : 0.0);
    for (int i = 0; i < sv.size(); ++i)
        if (sv(i) > cut && sv(i) > 0) ++d.rank;
    if (d.rank > 0) d.condition = sv(0) / sv(d.rank - 1);
    if (d.rank < d.expected) {
        const Eigen::VectorXd v = svd.matrixU().col(d.expected - 1);
        std::string s = "left null combination:";
        for (int p = 0; p < k; ++p)
            for (int l = 0; l < r; ++l)
                s += " (p=" + std::to_string(p) + ",l=" + std::to_string(l + 1) + "):" + std::to_string(v(p * r + l));
        d.deficiency = s;
        return d;
    }
    // greedy column selection for a well-conditioned complex minor
    std::vector<int> chosen;
    for (int step = 0; step < d.expected; ++step) {
        int best = -1;
        double bestsv = -1;
        for (int j = 0; j < J; ++j) {
            if (std::find(chosen.begin(), chosen.end(), j) != chosen.end()) continue;
            Eigen::MatrixXcd sub(d.expected, step + 1);
            for (int c = 0; c < step; ++c) sub.col(c) = Mc.col(chosen[c]);
            sub.col(step) = Mc.col(j);
            Eigen::JacobiSVD<Eigen::MatrixXcd> s2(sub);
            const double smin = s2.singularValues()(step);
            if (smin > bestsv) bestsv = smin, best = j;
        }
        chosen.push_back(best);
    }
    for (int j : chosen) d.columns.push_back(j + 1);
    return d;
}

// ---- serialization ----

inline json to_json(const SeriesValue& s) {
    return {{"value", s.value}, {"tail", s.tail}, {"scale", s.scale}, {"ill_conditioned", s.ill_conditioned}};
}

inline json to_json(const GammaTable& g) {
    json j;
    j["k"] = g.k;
    j["K"] = g.K;
    j["r"] = g.r;
    j["J"] = g.J;
    j["entries"] = json::array();
    for (int p = 0; p < 2 * g.k; ++p)
        for (int l = 0; l < g.r; ++l)
            for (int L = l; L < g.r; ++L) {
                json e = to_json(g.at(p, l, L));
                e["p"] = p;
                e["l"] = l + 1;
                e["L"] = L + 1;
                j["entries"].push_back(e);
            }
    return j;
}

inline json to_json(const HypothesisEntry& h) {
    json j = {{"verdict", verdict_name(h.verdict)}, {"value", h.value}, {"threshold", h.threshold}};
    if (!h.evidence.is_null()) j["evidence"] = h.evidence;
    return j;
}

inline json to_json(const HypothesisReport& r) {
    json j;
    j["k"] = r.k;
    j["K"] = r.K;
    j["r"] = r.r;
    j["J_series"] = r.J_series;
    j["H_reg"] = to_json(r.reg);
    j["H_lin"] = to_json(r.lin);
    j["H_conv"] = to_json(r.conv);
    j["H_null"] = to_json(r.null);
    j["H_pos"] = to_json(r.pos);
    j["linear_test_min"] = r.linear_test_min;
    j["all_pass"] = r.all_pass();
    j["warnings"] = r.warnings;
    j["gamma"] = to_json(r.gamma);
    return j;
}

}  // namespace qobs
