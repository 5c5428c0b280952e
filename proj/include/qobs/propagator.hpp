#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <json.hpp>
#include <ostream>
#include <string>
#include <vector>

#include "qobs/brackets.hpp"
#include "qobs/config.hpp"
#include "qobs/kernel.hpp"
#include "qobs/oscillatory.hpp"
#include "qobs/signals.hpp"
#include "qobs/spectral_basis.hpp"

namespace qobs {

using SpectralState = Eigen::VectorXcd;

inline SpectralState ground_state(int J) {
    SpectralState s = SpectralState::Zero(J);
    s(0) = 1.0;
    return s;
}

struct Trajectory {
    std::vector<double> times;
    std::vector<SpectralState> states;
    double max_norm_defect = 0;  // max over steps of | |c| - 1 |
    long steps = 0;

    const SpectralState& final() const { return states.back(); }
};

// Coupling matrices B_l restricted to the Galerkin block, and the half-step phases.
class GalerkinModel {
public:
    GalerkinModel(const MomentTable& table, int J, double dt) : J_(J), dt_(dt) {
        if (J > table.J) throw DomainError("Galerkin size exceeds moment table");
        for (int l = 0; l < table.r(); ++l) B_.push_back(table.matrix(l).topLeftCorner(J, J));
        e_ = eigendata(J, 1);
        half_.resize(J);
        for (int j = 0; j < J; ++j) half_(j) = std::polar(1.0, -e_.lambda(j) * dt / 2);
        for (const auto& B : B_) single_.emplace_back(B);
    }

    int J() const { return J_; }
    int r() const { return static_cast<int>(B_.size()); }
    double dt() const { return dt_; }
    const Eigen::MatrixXd& B(int l) const { return B_[l]; }
    const Eigen::VectorXcd& half_phase() const { return half_; }

    Eigen::MatrixXd coupling(const Eigen::VectorXd& u) const {
        Eigen::MatrixXd G = Eigen::MatrixXd::Zero(J_, J_);
        for (int l = 0; l < r(); ++l)
            if (u(l) != 0.0) G += u(l) * B_[l];
        return G;
    }

    SpectralState apply_coupling(const Eigen::VectorXd& u, const SpectralState& y) const {
        return coupling(u) * y;
    }

    // y <- exp(i dt G) y with G = u.B symmetric real
    void exp_coupling(const Eigen::VectorXd& u, SpectralState& y) const {
        int active = -1, count = 0;
        for (int l = 0; l < r(); ++l)
            if (u(l) != 0.0) active = l, ++count;
        if (count == 0) return;
        if (count == 1) {
            apply_eig(single_[active].eigenvectors(), single_[active].eigenvalues() * u(active), y);
            return;
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(coupling(u));
        apply_eig(es.eigenvectors(), es.eigenvalues(), y);
    }

private:
    void apply_eig(const Eigen::MatrixXd& V, const Eigen::VectorXd& d, SpectralState& y) const {
        Eigen::VectorXcd w = V.transpose() * y;
        for (int i = 0; i < J_; ++i) w(i) *= std::polar(1.0, dt_ * d(i));
        y = V * w;
    }

    int J_;
    double dt_;
    std::vector<Eigen::MatrixXd> B_;
    std::vector<Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>> single_;
    EigenData e_;
    Eigen::VectorXcd half_;
};

inline Eigen::VectorXd midpoint_control(const ControlGrid& u, int i) {
    return 0.5 * (u.values.col(i) + u.values.col(i + 1));
}

// Strang splitting: half free phase, exact coupling exponential at the midpoint
// control, half free phase. store_stride = 0 keeps only the initial and final states.
inline Trajectory solve_nonlinear(const GalerkinModel& model, const ControlGrid& u, const SpectralState& psi0,
                                  int store_stride = 1) {
    if (u.r() != model.r()) throw DomainError("control channel count does not match dipole set");
    if (psi0.size() != model.J()) throw DomainError("initial state has wrong dimension");
    if (std::abs(psi0.norm() - 1.0) > 1e-12) throw DomainError("initial state must have unit norm");
    if (std::abs(u.dt() - model.dt()) > 1e-12 * model.dt()) throw DomainError("control grid step differs from model dt");
    Trajectory tr;
    tr.times.push_back(0.0);
    tr.states.push_back(psi0);
    SpectralState c = psi0;
    const auto& P = model.half_phase();
    for (int i = 0; i < u.N; ++i) {
        c = c.cwiseProduct(P);
        model.exp_coupling(midpoint_control(u, i), c);
        c = c.cwiseProduct(P);
        const double nrm = c.norm();
        if (!std::isfinite(nrm)) throw IntegrationFailure("non-finite state at step " + std::to_string(i), i);
        tr.max_norm_defect = std::max(tr.max_norm_defect, std::abs(nrm - 1.0));
        const bool last = (i + 1 == u.N);
        if (last || (store_stride > 0 && (i + 1) % store_stride == 0)) {
            tr.times.push_back(u.t(i + 1));
            tr.states.push_back(c);
        }
    }
    tr.steps = u.N;
    return tr;
}

inline Trajectory solve_nonlinear(const MomentTable& table, const ControlGrid& u, const ProblemConfig& cfg,
                                  const SpectralState& psi0, int store_stride = 1) {
    GalerkinModel model(table, cfg.J, u.dt());
    return solve_nonlinear(model, u, psi0, store_stride);
}

// First and second order terms of the discrete (Strang) flow from phi_1, obtained by
// expanding exp(i dt G) to second order inside every step. x1 is the linearized state,
// x2 the quadratic state, both with the previous orders as sources.
struct DiscreteExpansion {
    SpectralState x0, x1, x2;
};

inline DiscreteExpansion expand_discrete(const GalerkinModel& model, const ControlGrid& u) {
    if (u.r() != model.r()) throw DomainError("control channel count does not match dipole set");
    DiscreteExpansion ex;
    ex.x0 = ground_state(model.J());
    ex.x1 = SpectralState::Zero(model.J());
    ex.x2 = SpectralState::Zero(model.J());
    const auto& P = model.half_phase();
    const double dt = model.dt();
    const cplx I(0, 1);
    for (int i = 0; i < u.N; ++i) {
        const Eigen::VectorXd um = midpoint_control(u, i);
        SpectralState y0 = ex.x0.cwiseProduct(P), y1 = ex.x1.cwiseProduct(P), y2 = ex.x2.cwiseProduct(P);
        const SpectralState g0 = model.apply_coupling(um, y0);
        const SpectralState g1 = model.apply_coupling(um, y1);
        const SpectralState gg0 = model.apply_coupling(um, g0);
        y2 += I * dt * g1 - 0.5 * dt * dt * gg0;
        y1 += I * dt * g0;
        ex.x0 = y0.cwiseProduct(P);
        ex.x1 = y1.cwiseProduct(P);
        ex.x2 = y2.cwiseProduct(P);
    }
    return ex;
}

// Psi_j(T) = i e^{-i lambda_j T} sum_l <mu_l phi_1, phi_j> int_0^T u^l e^{i omega_j t} dt
inline SpectralState solve_linearized(const MomentTable& table, const ControlGrid& u, const ProblemConfig& cfg) {
    if (u.r() != table.r()) throw DomainError("control channel count does not match dipole set");
    const EigenData e = eigendata(cfg.J, 1);
    SpectralState psi = SpectralState::Zero(cfg.J);
    const double T = u.T;
    for (int j = 1; j <= cfg.J; ++j) {
        cplx s = 0;
        for (int l = 0; l < u.r(); ++l) {
            const double b = table(l, 1, j);
            if (b != 0.0) s += b * filon_integral(u.channel(l), u.dt(), e.om(j));
        }
        psi(j - 1) = cplx(0, 1) * std::polar(1.0, -e.lam(j) * T) * s;
    }
    return psi;
}

struct QuadraticCoefficient {
    cplx kernel;   // sum of the kernel functionals
    cplx stepped;  // xi_K(T) e^{i lambda_1 T} from the discrete expansion
    double difference = 0;
    double tolerance = 0;
};

inline QuadraticCoefficient solve_quadratic_coeff(const MomentTable& table, const ControlGrid& u,
                                                  const ProblemConfig& cfg, bool enforce = true) {
    const EigenData e = eigendata(cfg.J, cfg.K);
    const CSequence cs = c_sequence(table, cfg.K, cfg.k, cfg.J);
    QuadraticCoefficient q;
    for (int l = 0; l < u.r(); ++l)
        for (int L = 0; L < u.r(); ++L) {
            const Eigen::VectorXd f = u.channel(l), g = u.channel(L);
            if (f.isZero(0) || g.isZero(0)) continue;
            q.kernel += quadratic_functional(l, L, f, g, cs, e, u.T);
        }
    GalerkinModel model(table, cfg.J, u.dt());
    const DiscreteExpansion ex = expand_discrete(model, u);
    q.stepped = ex.x2(cfg.K - 1) * std::polar(1.0, e.lam(1) * u.T);
    q.difference = std::abs(q.kernel - q.stepped);
    q.tolerance = std::max(1e-7, 10 * u.dt() * u.dt());
    if (enforce && q.difference > q.tolerance)
        throw ConsistencyError("quadratic coefficient paths disagree: |diff| = " + std::to_string(q.difference),
                               std::abs(q.kernel), std::abs(q.stepped));
    return q;
}

struct ScanPoint {
    double eps = 0;
    double r2 = 0;  // |psi - psi_1 - eps Psi|
    double r3 = 0;  // |psi - psi_1 - eps Psi - eps^2 xi|
    bool r2_used = true, r3_used = true;
    double norm_defect = 0;
};

struct ExpansionScan {
    std::vector<ScanPoint> points;
    double slope2 = 0, slope3 = 0;
    bool degenerate = false;
    std::vector<std::string> warnings;
};

inline double fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const int n = static_cast<int>(x.size());
    if (n < 2) return std::nan("");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i = 0; i < n; ++i) {
        const double a = std::log(x[i]), b = std::log(y[i]);
        sx += a;
        sy += b;
        sxx += a * a;
        sxy += a * b;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline ExpansionScan expansion_order_scan(const MomentTable& table, const ControlGrid& u0, const ProblemConfig& cfg,
                                          const std::vector<double>& eps_list) {
    if (eps_list.size() < 4) throw DomainError("expansion_order_scan: need at least 4 eps values");
    ExpansionScan scan;
    GalerkinModel model(table, cfg.J, u0.dt());
    const DiscreteExpansion ex = expand_discrete(model, u0);
    if (u0.values.isZero(0)) scan.degenerate = true;
    const double floor = 100 * std::numeric_limits<double>::epsilon();
    std::vector<double> e2, v2, e3, v3;
    for (double eps : eps_list) {
        ScanPoint pt;
        pt.eps = eps;
        const Trajectory tr = solve_nonlinear(model, u0.scaled(eps), ground_state(cfg.J), 0);
        const SpectralState d1 = tr.final() - ex.x0 - eps * ex.x1;
        pt.r2 = d1.norm();
        pt.r3 = (d1 - eps * eps * ex.x2).norm();
        pt.norm_defect = tr.max_norm_defect;
        pt.r2_used = pt.r2 > floor;
        pt.r3_used = pt.r3 > floor;
        if (!pt.r2_used || !pt.r3_used)
            scan.warnings.push_back("precision floor reached at eps = " + std::to_string(eps));
        if (pt.r2_used) e2.push_back(eps), v2.push_back(pt.r2);
        if (pt.r3_used) e3.push_back(eps), v3.push_back(pt.r3);
        scan.points.push_back(pt);
    }
    scan.slope2 = fit_loglog_slope(e2, v2);
    scan.slope3 = fit_loglog_slope(e3, v3);
    return scan;
}

// ---- export ----

inline void trajectory_to_csv(const Trajectory& tr, int j_export, std::ostream& out) {
    out << "t";
    for (int j = 1; j <= j_export; ++j) out << ",re_c" << j << ",im_c" << j;
    out << "\n";
    out.precision(17);
    for (std::size_t i = 0; i < tr.times.size(); ++i) {
        out << tr.times[i];
        for (int j = 0; j < j_export; ++j) out << "," << tr.states[i](j).real() << "," << tr.states[i](j).imag();
        out << "\n";
    }
}

inline json trajectory_summary(const Trajectory& tr, double dt) {
    json j;
    const auto& c = tr.final();
    j["T"] = tr.times.back();
    j["steps"] = tr.steps;
    j["dt"] = dt;
    j["J"] = c.size();
    j["scheme"] = "strang(half phase, midpoint coupling exponential, half phase)";
    j["final_norm"] = c.norm();
    j["max_norm_defect"] = tr.max_norm_defect;
    json re = json::array(), im = json::array();
    for (int i = 0; i < c.size(); ++i) re.push_back(c(i).real()), im.push_back(c(i).imag());
    j["final_coeffs"] = {{"re", re}, {"im", im}};
    return j;
}

}  // namespace qobs
