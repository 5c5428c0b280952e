#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <json.hpp>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "qobs/brackets.hpp"
#include "qobs/config.hpp"
#include "qobs/kernel.hpp"
#include "qobs/parallel.hpp"
#include "qobs/propagator.hpp"
#include "qobs/signals.hpp"
#include "qobs/spectral_basis.hpp"

namespace qobs {

inline double sgn(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

// ---- reduction of the kernel functional to its leading bracket ----

struct Reduction {
    double lhs = 0;
    double main_term = 0;
    double budget = 0;
    bool unreduced = false;
};

inline Reduction devgt_reduction(int l, int L, const Eigen::VectorXd& f, const Eigen::VectorXd& g,
                                 const GammaTable& gamma, const CSequence& cs, const EigenData& e, double T, int k,
                                 bool null_certified) {
    Reduction red;
    red.unreduced = !null_certified;
    red.lhs = (quadratic_functional(l, L, f, g, cs, e, T) + quadratic_functional(L, l, g, f, cs, e, T)).imag();
    Eigen::MatrixXd v(2, f.size());
    v.row(0) = f.transpose();
    v.row(1) = g.transpose();
    const ControlGrid fg(T, v);
    const PrimitiveStack st = iterated_primitives(fg, k);
    const Eigen::VectorXd fk = st.get(k, 0), gk = st.get(k, 1);
    Eigen::VectorXd w(fk.size());
    for (int i = 0; i < w.size(); ++i) w(i) = fk(i) * gk(i) * std::cos(e.omega_K() * (fg.t(i) - T));
    const double sign = (k % 2) ? 1.0 : -1.0;  // (-1)^{k+1}
    red.main_term = sign * gamma(2 * k - 1, l, L) * integrate(w, fg.dt());
    const Eigen::MatrixXd bv = boundary_values(st, k);
    red.budget = bv.squaredNorm() + T * (std::pow(l2_norm(fk, fg.dt()), 2) + std::pow(l2_norm(gk, fg.dt()), 2));
    return red;
}

// ---- heuristic leading terms ----

struct LeadingPrediction {
    cplx full;       // all brackets up to order 2k-1
    cplx collapsed;  // only the top-order brackets
};

inline LeadingPrediction predict_quadratic_leading(const ControlGrid& u, const GammaTable& gamma, int k) {
    const PrimitiveStack st = iterated_primitives(u, k);
    const double h = u.dt();
    const cplx I(0, 1);
    auto ipow = [&](int p) { return std::pow(I, p); };
    auto inner = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
        return integrate(a.cwiseProduct(b), h);
    };
    LeadingPrediction out;
    for (int l = 0; l < u.r(); ++l) {
        for (int p = 1; p <= k; ++p) {
            const Eigen::VectorXd up = st.get(p, l);
            const cplx term = ipow(2 * p - 1) * gamma(2 * p - 1, l, l) * inner(up, up) / 2.0;
            out.full += term;
            if (p == k) out.collapsed += term;
        }
        for (int L = l + 1; L < u.r(); ++L)
            for (int p = 0; p <= 2 * k - 1; ++p) {
                const cplx term = ipow(p) * gamma(p, l, L) * inner(st.get(p / 2 + 1, l), st.get((p + 1) / 2, L));
                out.full += term;
                if (p == 2 * k - 1) out.collapsed += term;
            }
    }
    return out;
}

// ---- coercivity of the top-order form ----

struct CoercivityResult {
    double C2 = 0;             // lambda_min(sgn Q) / 4
    double min_ratio = 0;      // min over samples of lhs / ||u_k||^2
    double bound_ratio = 0;    // 2 C2
    double sharp_ratio = 0;    // lambda_min(sgn Q) cos(omega_K T)
    int samples = 0;
    int violations = 0;
};

inline double coercive_integral(const QuadraticForm& q, double s, const Eigen::MatrixXd& uk, double T,
                                double omegaK) {
    const int N = static_cast<int>(uk.cols()) - 1;
    Eigen::VectorXd w(N + 1);
    for (int i = 0; i <= N; ++i) {
        const double t = T * i / N;
        w(i) = s * q(uk.col(i)) * std::cos(omegaK * (t - T));
    }
    return integrate(w, T / N);
}

inline CoercivityResult coercivity_check(const GammaTable& gamma, double omegaK, double T, int samples,
                                         std::uint64_t seed, int N = 400) {
    if (omegaK > 0 && T >= M_PI / (3 * omegaK)) throw DomainError("coercivity_check: need T < pi/(3 omega_K)");
    const QuadraticForm q = quadratic_form(gamma);
    const double s = sgn(gamma(2 * gamma.k - 1, 0, 0));
    const double lmin = (s * q.eigenvalues).minCoeff();
    CoercivityResult res;
    res.C2 = lmin / 4;
    res.bound_ratio = 2 * res.C2;
    res.sharp_ratio = lmin * std::cos(omegaK * T);
    res.min_ratio = std::numeric_limits<double>::infinity();
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> modes(1, 12);
    for (int n = 0; n < samples; ++n) {
        Eigen::MatrixXd uk(gamma.r, N + 1);
        for (int l = 0; l < gamma.r; ++l)
            uk.row(l) = random_fourier(T, N, modes(rng), 1.0, rng()).transpose();
        // some samples concentrate on a single eigen-direction of Q
        if (n % 5 == 0) {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s * q.Q);
            const Eigen::VectorXd dir = es.eigenvectors().col(0);
            const Eigen::VectorXd prof = uk.row(0).transpose();
            uk = dir * prof.transpose();
        }
        double nrm2 = 0;
        for (int l = 0; l < gamma.r; ++l) nrm2 += std::pow(l2_norm(uk.row(l).transpose(), T / N), 2);
        if (nrm2 == 0) continue;
        const double ratio = coercive_integral(q, s, uk, T, omegaK) / nrm2;
        res.min_ratio = std::min(res.min_ratio, ratio);
        ++res.samples;
        if (ratio < res.bound_ratio * (1 - 1e-12)) ++res.violations;
    }
    return res;
}

// ---- drift scan ----

struct DriftSample {
    std::uint64_t seed = 0;
    double D = 0;          // signed drift
    double uk2 = 0;        // ||u_k||^2_{L^2}
    double slack = 0;      // ||psi(T) - psi_1(T)||^2
    double u1_sup = 0;     // ||u_1||_{L^inf}
    double norm_defect = 0;
    std::string kind;
};

struct DriftScanResult {
    std::vector<DriftSample> samples;
    int dropped = 0;
    double C = 0;      // largest admissible constant
    double C_lo = 0;   // smallest admissible constant
    bool feasible = false;
    int violations = 0;
    std::vector<int> tightest;  // indices of the 3 samples closest to the bound
    double sign_gamma = 1;
    double T = 0;
    // two-constant form D >= a ||u_k||^2 - b slack: smallest b admitting some a > 0 on
    // the ensemble, and the largest a at twice that b
    double slack_coeff_min = 0;
    double coercive_at_2x = 0;
};

struct EnsembleSpec {
    int samples = 200;
    std::uint64_t seed = 1;
    double eta = 1e-2;  // cap on ||u_1||_{L^inf}
    double T = 0;       // 0: 0.9 pi / (3 omega_K)
    int N = 2000;
    int max_modes = 8;
    int threads = 1;
};

inline double default_drift_horizon(const EigenData& e) {
    return e.omega_K() > 0 ? 0.9 * M_PI / (3 * e.omega_K()) : 0.1;
}

// Random controls: smooth Fourier series, near-resonant carriers at omega_K, and
// controls whose primitive vanishes at T (small linear response). Each is scaled so
// that max_l ||u_1^l||_inf = eta * U(0.1, 1).
inline ControlGrid ensemble_control(const EnsembleSpec& spec, int r, double T, double omegaK, std::uint64_t seed,
                                    std::string& kind) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::uniform_int_distribution<int> modes(1, spec.max_modes);
    const int N = spec.N;
    Eigen::MatrixXd v(r, N + 1);
    const int family = static_cast<int>(seed % 3);
    for (int l = 0; l < r; ++l) {
        if (family == 0) {
            v.row(l) = random_fourier(T, N, modes(rng), 1.0, rng()).transpose();
        } else if (family == 1) {
            const double ph = 2 * M_PI * unif(rng), a = unif(rng);
            const Eigen::VectorXd base = random_fourier(T, N, modes(rng), 0.3, rng());
            for (int i = 0; i <= N; ++i) v(l, i) = a * std::cos(omegaK * T * i / N + ph) + base(i);
        } else {
            // u = d/dt sum a_m sin(m pi t / T): u_1(0) = u_1(T) = 0
            const int M = modes(rng);
            std::normal_distribution<double> nd;
            std::vector<double> a(M);
            for (auto& x : a) x = nd(rng);
            for (int i = 0; i <= N; ++i) {
                const double t = T * i / N;
                double s = 0;
                for (int m = 0; m < M; ++m) s += a[m] * (m + 1) * M_PI / T * std::cos((m + 1) * M_PI * t / T);
                v(l, i) = s;
            }
        }
    }
    kind = family == 0 ? "fourier" : family == 1 ? "resonant" : "closed";
    ControlGrid u(T, v);
    const double sup = wminus1inf_proxy(u);
    const double target = spec.eta * (0.1 + 0.9 * unif(rng));
    return sup > 0 ? u.scaled(target / sup) : u;
}

inline DriftScanResult drift_scan(const MomentTable& table, const GammaTable& gamma, const ProblemConfig& cfg,
                                  const EnsembleSpec& spec) {
    const EigenData e = eigendata(cfg.J, cfg.K);
    const double T = spec.T > 0 ? spec.T : default_drift_horizon(e);
    DriftScanResult res;
    res.T = T;
    res.sign_gamma = sgn(gamma(2 * cfg.k - 1, 0, 0));
    const double sign = ((cfg.k % 2) ? 1.0 : -1.0) * res.sign_gamma;
    const GalerkinModel model(table, cfg.J, T / spec.N);
    SpectralState free = SpectralState::Zero(cfg.J);
    free(0) = std::polar(1.0, -e.lam(1) * T);
    std::vector<DriftSample> all(spec.samples);
    std::vector<char> done(spec.samples, 0);
    parallel_for(spec.samples, spec.threads, [&](int n) {
        DriftSample& s = all[n];
        s.seed = spec.seed * 1000003ULL + n;
        const ControlGrid u = ensemble_control(spec, table.r(), T, e.omega_K(), s.seed, s.kind);
        try {
            const Trajectory tr = solve_nonlinear(model, u, ground_state(cfg.J), 0);
            const SpectralState& c = tr.final();
            s.D = sign * (c(cfg.K - 1) * std::polar(1.0, e.lam(1) * T)).imag();
            s.slack = (c - free).squaredNorm();
            s.norm_defect = tr.max_norm_defect;
        } catch (const IntegrationFailure&) {
            return;
        }
        const PrimitiveStack st = iterated_primitives(u, cfg.k);
        for (int l = 0; l < u.r(); ++l) s.uk2 += std::pow(l2_norm(st.get(cfg.k, l), u.dt()), 2);
        s.u1_sup = wminus1inf_proxy(u);
        done[n] = 1;
    });
    for (int n = 0; n < spec.samples; ++n) {
        if (done[n]) res.samples.push_back(all[n]);
        else ++res.dropped;
    }
    // admissible C: D >= C (uk2 - slack) for all samples
    double hi = std::numeric_limits<double>::infinity(), lo = 0;
    bool ok = true;
    for (const auto& s : res.samples) {
        const double a = s.uk2 - s.slack;
        if (a > 0) hi = std::min(hi, s.D / a);
        else if (a < 0) lo = std::max(lo, s.D / a);
        else if (s.D < 0) ok = false;
    }
    res.C = hi;
    res.C_lo = lo;
    res.feasible = ok && hi > 0 && lo <= hi;
    double b0 = 0;
    for (const auto& s : res.samples)
        if (s.D < 0 && s.slack > 0) b0 = std::max(b0, (-s.D + 1e-12 * s.uk2) / s.slack);
    double a = std::numeric_limits<double>::infinity();
    for (const auto& s : res.samples)
        if (s.uk2 > 0) a = std::min(a, (s.D + 2 * b0 * s.slack) / s.uk2);
    res.slack_coeff_min = b0;
    res.coercive_at_2x = a;
    // violations are counted at the fitted constant (at C_lo when nothing bounds C above)
    const double Ce = std::isfinite(hi) ? hi : lo;
    std::vector<std::pair<double, int>> gap;
    for (std::size_t i = 0; i < res.samples.size(); ++i) {
        const auto& s = res.samples[i];
        const double margin = s.D - Ce * (s.uk2 - s.slack);
        if (margin < -1e-12 * (std::abs(s.D) + std::abs(Ce) * (s.uk2 + s.slack))) ++res.violations;
        gap.push_back({margin / std::max(1e-300, std::abs(Ce) * s.uk2), static_cast<int>(i)});
    }
    std::sort(gap.begin(), gap.end());
    for (std::size_t i = 0; i < std::min<std::size_t>(3, gap.size()); ++i) res.tightest.push_back(gap[i].second);
    return res;
}

// Refuses unless the hypotheses hold for the supplied dipoles.
inline DriftScanResult drift_scan(const DipoleSet& mus, const ProblemConfig& cfg, const EnsembleSpec& spec,
                                  HypothesisReport* report = nullptr) {
    const HypothesisReport rep = check_hypotheses(mus, cfg);
    if (report) *report = rep;
    if (!rep.all_pass()) {
        std::string why = "drift_scan refused: hypotheses fail:";
        const std::pair<const char*, const HypothesisEntry*> hs[] = {
            {"H_reg", &rep.reg}, {"H_lin", &rep.lin}, {"H_conv", &rep.conv}, {"H_null", &rep.null}, {"H_pos", &rep.pos}};
        for (auto [name, h] : hs)
            if (h->verdict != Verdict::pass) why += std::string(" ") + name + "=" + verdict_name(h->verdict);
        throw Refusal(why);
    }
    return drift_scan(moment_table(mus, cfg.J), rep.gamma, cfg, spec);
}

// Targets (sqrt(1-d^2) phi_1 + i(-1)^k sgn d phi_K) e^{-i lambda_1 T}: signed drift -d,
// slack 2 - 2 sqrt(1-d^2). Unreachable when -d < -C * slack, i.e. the target sits
// strictly below the fitted lower envelope.
struct TargetCheck {
    double delta = 0, drift = 0, slack = 0, bound = 0;
    bool unreachable = false;
};

inline std::vector<TargetCheck> unreachable_targets(double C, const std::vector<double>& deltas) {
    std::vector<TargetCheck> out;
    for (double d : deltas) {
        TargetCheck t;
        t.delta = d;
        t.drift = -d;
        t.slack = 2 - 2 * std::sqrt(1 - d * d);
        t.bound = -C * t.slack;
        t.unreachable = t.drift < t.bound;
        out.push_back(t);
    }
    return out;
}

inline void drift_scan_to_csv(const DriftScanResult& r, std::ostream& out) {
    out << "sample,seed,kind,D,uk2,slack,u1_sup,norm_defect\n";
    out.precision(17);
    for (std::size_t i = 0; i < r.samples.size(); ++i) {
        const auto& s = r.samples[i];
        out << i << "," << s.seed << "," << s.kind << "," << s.D << "," << s.uk2 << "," << s.slack << ","
            << s.u1_sup << "," << s.norm_defect << "\n";
    }
}

inline json to_json(const DriftScanResult& r) {
    json j;
    j["T"] = r.T;
    j["samples"] = r.samples.size();
    j["dropped"] = r.dropped;
    j["C"] = r.C;
    j["C_lo"] = r.C_lo;
    j["feasible"] = r.feasible;
    j["violations"] = r.violations;
    j["sign_gamma"] = r.sign_gamma;
    j["two_constant"] = {{"slack_coeff_min", r.slack_coeff_min}, {"coercive_at_2x", r.coercive_at_2x}};
    json t = json::array();
    for (int i : r.tightest) {
        const auto& s = r.samples[i];
        t.push_back({{"sample", i}, {"seed", s.seed}, {"kind", s.kind}, {"D", s.D}, {"uk2", s.uk2}, {"slack", s.slack}});
    }
    j["tightest"] = t;
    return j;
}

// ---- interpolation inequality ----

struct InterpolationResult {
    double max_ratio = 0;
    std::vector<double> ratios;
    int skipped = 0;
};

inline double interpolation_ratio(const Eigen::VectorXd& f, double T, int k) {
    if (k < 2) throw DomainError("interpolation_check: k must be >= 2");
    Eigen::MatrixXd v(1, f.size());
    v.row(0) = f.transpose();
    const ControlGrid u(T, v);
    const PrimitiveStack st = iterated_primitives(u, k);
    const double f1 = l2_norm(st.get(1, 0), u.dt()), fk = l2_norm(st.get(k, 0), u.dt());
    if (f1 == 0.0) return std::nan("");
    const double den = (1 + std::pow(T, -2 * k + 3)) * sobolev_norm(u, 2 * k - 3) * fk * fk;
    if (den == 0.0) return std::numeric_limits<double>::infinity();
    return f1 * f1 * f1 / den;
}

inline InterpolationResult interpolation_check(int k, const std::vector<double>& Ts, const std::vector<int>& ns,
                                               int N = 4000) {
    InterpolationResult res;
    for (double T : Ts)
        for (int n : ns) {
            Eigen::VectorXd f(N + 1);
            for (int i = 0; i <= N; ++i) f(i) = std::sin(2 * M_PI * n * i / N);
            const double r = interpolation_ratio(f, T, k);
            if (std::isnan(r)) {
                ++res.skipped;
                continue;
            }
            if (std::isinf(r)) throw NumericError("interpolation_check: vanishing k-th primitive", r, 0);
            res.ratios.push_back(r);
            res.max_ratio = std::max(res.max_ratio, r);
        }
    return res;
}

}  // namespace qobs
