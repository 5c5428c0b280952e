#include <CLI11.hpp>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "qobs/qobs.hpp"

namespace fs = std::filesystem;
using namespace qobs;

namespace {

constexpr int kExitOk = 0, kExitRuntime = 1, kExitScientific = 2;

// Effective settings: defaults, then the config file, then explicit flags.
struct Settings {
    json eff = {{"schema", 1},   {"k", 1},         {"K", 2},       {"r", 2},        {"J", 64},
                {"J_series", 0}, {"T", 0.1},       {"dt", 1e-4},   {"tol", 1e-10},  {"seed", 1},
                {"samples", 200}, {"eta", 1e-2},   {"N", 2000},    {"bumps", 8},    {"drift_T", 0.0},
                {"toy_T", 0.05}, {"toy_samples", 500}};
    std::string out_dir = ".";
    int threads = 1;
    std::vector<std::function<void()>> overrides;

    void load_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw CLI::ValidationError("--config", "cannot open " + path);
        json f = json::parse(in);
        if (f.value("schema", 0) != 1) throw CLI::ValidationError("--config", "unsupported schema (expected 1)");
        if (f.contains("output_dir")) out_dir = f["output_dir"].get<std::string>();
        f.erase("output_dir");
        for (auto& [k, v] : f.items()) eff[k] = v;
    }

    ProblemConfig problem() const {
        ProblemConfig c;
        c.k = eff["k"];
        c.K = eff["K"];
        c.r = eff["r"];
        c.J = eff["J"];
        const int js = eff["J_series"];
        c.J_series = js > 0 ? js : std::max(c.J, c.k == 1 ? 400 : 1000);
        c.T = eff["T"];
        c.dt = eff["dt"];
        c.tol = eff["tol"];
        c.validate();
        return c;
    }

    std::uint64_t seed() const { return eff["seed"].get<std::uint64_t>(); }

    // FNV-1a over the canonical dump of the effective settings.
    std::string hash() const {
        const std::string s = eff.dump();
        std::uint64_t h = 1469598103934665603ULL;
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }
};

template <class T>
void flag(CLI::App* app, Settings& s, const std::string& name, const std::string& key, const std::string& help) {
    auto holder = std::make_shared<T>();
    CLI::Option* opt = app->add_option(name, *holder, help);
    s.overrides.push_back([opt, holder, key, &s] {
        if (opt->count() > 0) s.eff[key] = *holder;
    });
}

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> v;
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ','))
        if (!cell.empty()) v.push_back(std::stod(cell));
    return v;
}

ControlGrid read_control(const std::string& arg, double T, int N) {
    if (!arg.empty() && arg.front() == '{') return control_from_json(json::parse(arg), T, N);
    return load_control(arg, T, N);
}

fs::path output_path(const Settings& s, const std::string& name) {
    fs::create_directories(s.out_dir);
    return fs::path(s.out_dir) / name;
}

int emit(const Settings& s, const std::string& command, json body, const std::string& json_out, int code) {
    json doc;
    doc["command"] = command;
    doc["config_hash"] = s.hash();
    doc["seed"] = s.seed();
    doc["settings"] = s.eff;
    doc["result"] = std::move(body);
    doc["exit_code"] = code;
    const std::string text = doc.dump(2);
    std::cout << text << "\n";
    if (!json_out.empty()) std::ofstream(output_path(s, json_out)) << text << "\n";
    return code;
}

DipoleSet require_mu(const Settings& s) {
    if (!s.eff.contains("mu")) throw CLI::RequiredError("--mu");
    return load_dipole_set(s.eff["mu"].get<std::string>());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"quadratic-obstruction laboratory for the bilinear Schroedinger equation"};
    app.require_subcommand(1);
    app.fallthrough();
    Settings S;
    std::string config_path, out_flag, json_out;
    app.add_option("--config", config_path, "JSON config (schema 1); flags override it");
    app.add_option("--out", out_flag, "output directory (default: $QOBS_OUTPUT_DIR or .)");
    app.add_option("--threads", S.threads, "worker cap for sample-parallel commands")->check(CLI::NonNegativeNumber);
    app.add_option("--json", json_out, "also write the JSON result to this file inside the output directory");

    auto* check = app.add_subcommand("check", "judge the hypotheses for a dipole set");
    auto* simulate = app.add_subcommand("simulate", "integrate the Galerkin system");
    auto* escan = app.add_subcommand("expansion-scan", "fit remainder orders of the power-series expansion");
    auto* drift = app.add_subcommand("drift-scan", "adversarial ensemble against the drift inequality");
    auto* design = app.add_subcommand("design-mu", "construct dipoles satisfying the hypotheses");
    auto* gamma = app.add_subcommand("gamma", "gamma table, optionally cross-checked by commutators");
    auto* toy = app.add_subcommand("toy", "finite-dimensional toy system");
    auto* interp = app.add_subcommand("interp-check", "interpolation inequality ratios");

    for (auto* sub : {check, simulate, escan, drift, gamma}) flag<std::string>(sub, S, "--mu", "mu", "dipole set JSON");
    for (auto* sub : {check, simulate, escan, drift, design, gamma, interp}) flag<int>(sub, S, "--k", "k", "order k");
    for (auto* sub : {check, simulate, escan, drift, design, gamma}) {
        flag<int>(sub, S, "--K", "K", "lost direction K");
        flag<int>(sub, S, "--J-series", "J_series", "series truncation");
        flag<double>(sub, S, "--tol", "tol", "tolerance");
    }
    for (auto* sub : {simulate, escan, drift}) flag<int>(sub, S, "--J", "J", "Galerkin size");
    for (auto* sub : {simulate, escan}) {
        flag<double>(sub, S, "--T", "T", "final time");
        flag<double>(sub, S, "--dt", "dt", "time step");
    }
    for (auto* sub : {drift, design, toy}) flag<std::uint64_t>(sub, S, "--seed", "seed", "RNG seed");

    flag<std::string>(simulate, S, "--control", "control", "control file (.json/.csv) or inline JSON spec");
    int stride = 0, j_export = 4;
    simulate->add_option("--stride", stride, "store every n-th state in the CSV (0: endpoints only)");
    simulate->add_option("--export-modes", j_export, "modes written to the CSV");

    flag<std::string>(escan, S, "--control-profile", "control", "control profile u0 (file or inline JSON)");
    std::string eps_list = "1e-2,5e-3,2.5e-3,1.25e-3";
    escan->add_option("--eps-list", eps_list, "comma separated amplitudes");

    flag<double>(drift, S, "--T", "drift_T", "horizon (0: 0.9 pi / (3 omega_K))");
    flag<int>(drift, S, "--samples", "samples", "ensemble size");
    flag<double>(drift, S, "--eta", "eta", "cap on ||u_1||_inf");
    flag<int>(drift, S, "--N", "N", "time steps per sample");
    std::string deltas = "1e-2,1e-3";
    drift->add_option("--deltas", deltas, "target distances for the unreachable-target check");

    flag<int>(design, S, "--bumps", "bumps", "bumps per dipole");
    std::string mu_out;
    design->add_option("--mu-out", mu_out, "write the designed dipole set here (inside the output directory)");

    bool xcheck = false;
    gamma->add_flag("--xcheck-commutator", xcheck, "compare with the matrix-commutator evaluation");

    std::string what;
    toy->add_option("--what", what, "simulate | brackets | drift | form | obstruction")
        ->required()
        ->check(CLI::IsMember({"simulate", "brackets", "drift", "form", "obstruction"}));
    flag<std::string>(toy, S, "--control", "control", "control for --what simulate");
    flag<double>(toy, S, "--T", "toy_T", "final time");
    flag<int>(toy, S, "--samples", "toy_samples", "ensemble size for --what drift");
    std::vector<std::string> words;
    toy->add_option("--word", words, "bracket word for --what brackets (repeatable)")->allow_extra_args(false);
    double toy_umax = 0.05, toy_C = 0.5;
    toy->add_option("--umax", toy_umax, "sup bound on the controls for --what drift");
    toy->add_option("--C", toy_C, "drift constant for --what drift");

    std::string T_list = "0.1,1";
    int n_max = 20;
    interp->add_option("--T-list", T_list, "comma separated horizons");
    interp->add_option("--n-max", n_max, "largest frequency index");

    try {
        app.parse(argc, argv);
        if (!config_path.empty()) S.load_file(config_path);
        if (const char* env = std::getenv("QOBS_OUTPUT_DIR")) S.out_dir = env;
        if (!out_flag.empty()) S.out_dir = out_flag;
        for (auto& f : S.overrides) f();
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e) == 0 ? kExitOk : kExitRuntime;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }

    try {
        if (*check) {
            const ProblemConfig cfg = S.problem();
            const HypothesisReport rep = check_hypotheses(require_mu(S), cfg);
            return emit(S, "check", to_json(rep), json_out, rep.all_pass() ? kExitOk : kExitScientific);
        }
        if (*simulate) {
            const ProblemConfig cfg = S.problem();
            const DipoleSet mus = require_mu(S);
            if (!S.eff.contains("control")) throw CLI::RequiredError("--control");
            const ControlGrid u = read_control(S.eff["control"], cfg.T, cfg.steps());
            const MomentTable table = moment_table(mus, cfg.J);
            const Trajectory tr = solve_nonlinear(table, u, cfg, ground_state(cfg.J), stride);
            std::ofstream csv(output_path(S, "trajectory.csv"));
            trajectory_to_csv(tr, std::min(j_export, cfg.J), csv);
            json body = trajectory_summary(tr, u.dt());
            body["csv"] = "trajectory.csv";
            return emit(S, "simulate", body, json_out, tr.max_norm_defect <= 1e-9 ? kExitOk : kExitScientific);
        }
        if (*escan) {
            const ProblemConfig cfg = S.problem();
            const DipoleSet mus = require_mu(S);
            if (!S.eff.contains("control")) throw CLI::RequiredError("--control-profile");
            const ControlGrid u0 = read_control(S.eff["control"], cfg.T, cfg.steps());
            const ExpansionScan scan = expansion_order_scan(moment_table(mus, cfg.J), u0, cfg, parse_list(eps_list));
            json pts = json::array();
            for (const auto& p : scan.points)
                pts.push_back({{"eps", p.eps}, {"r2", p.r2}, {"r3", p.r3}, {"r2_used", p.r2_used},
                               {"r3_used", p.r3_used}, {"norm_defect", p.norm_defect}});
            const bool ok = std::abs(scan.slope2 - 2) <= 0.1 && std::abs(scan.slope3 - 3) <= 0.15;
            json body = {{"points", pts},          {"slope2", scan.slope2},   {"slope3", scan.slope3},
                         {"degenerate", scan.degenerate}, {"warnings", scan.warnings}, {"orders_reproduced", ok}};
            return emit(S, "expansion-scan", body, json_out, ok ? kExitOk : kExitScientific);
        }
        if (*drift) {
            const ProblemConfig cfg = S.problem();
            EnsembleSpec spec;
            spec.samples = S.eff["samples"];
            spec.seed = S.seed();
            spec.eta = S.eff["eta"];
            spec.T = S.eff["drift_T"];
            spec.N = S.eff["N"];
            spec.threads = S.threads;
            HypothesisReport rep;
            DriftScanResult res;
            try {
                res = drift_scan(require_mu(S), cfg, spec, &rep);
            } catch (const Refusal& r) {
                return emit(S, "drift-scan", {{"refused", r.what()}, {"hypotheses", to_json(rep)}}, json_out,
                            kExitScientific);
            }
            std::ofstream csv(output_path(S, "drift_samples.csv"));
            drift_scan_to_csv(res, csv);
            json body = to_json(res);
            json targets = json::array();
            for (const auto& t : unreachable_targets(std::isfinite(res.C) ? res.C : res.C_lo, parse_list(deltas)))
                targets.push_back({{"delta", t.delta}, {"drift", t.drift}, {"slack", t.slack}, {"bound", t.bound},
                                   {"unreachable", t.unreachable}});
            body["targets"] = targets;
            body["csv"] = "drift_samples.csv";
            const bool ok = res.feasible && res.violations == 0;
            return emit(S, "drift-scan", body, json_out, ok ? kExitOk : kExitScientific);
        }
        if (*design) {
            ProblemConfig cfg = S.problem();
            DesignOptions opt;
            opt.seed = S.seed();
            opt.m = S.eff["bumps"];
            try {
                const DesignResult res = design_mu(cfg, opt);
                json body;
                body["mus"] = to_json(res.mus);
                body["report"] = to_json(res.report);
                body["iterations"] = res.iterations;
                body["attempts"] = res.attempts;
                body["residual_inf"] = res.residual_inf;
                if (!mu_out.empty()) std::ofstream(output_path(S, mu_out)) << to_json(res.mus).dump(2) << "\n";
                return emit(S, "design-mu", body, json_out, kExitOk);
            } catch (const DesignFailure& f) {
                json r = json::array();
                for (int i = 0; i < f.residuals.size(); ++i) r.push_back(f.residuals(i));
                return emit(S, "design-mu", {{"failed", f.what()}, {"best_residuals", r}}, json_out,
                            kExitScientific);
            }
        }
        if (*gamma) {
            const ProblemConfig cfg = S.problem();
            const MomentTable table = moment_table(require_mu(S), cfg.J_series);
            const EigenData e = eigendata(cfg.J_series, cfg.K);
            const GammaTable g = gamma_table(c_sequence(table, cfg.K, cfg.k), e, cfg.k, cfg.tol);
            json body = to_json(g);
            int code = kExitOk;
            if (xcheck) {
                json xc = json::array();
                for (int p = 0; p < 2 * cfg.k; ++p)
                    for (int l = 0; l < g.r; ++l)
                        for (int L = l; L < g.r; ++L) {
                            const SeriesValue& sv = g.at(p, l, L);
                            const double cv = commutator_gamma(table, e, p, l, L);
                            const double rel = std::abs(sv.value - cv) /
                                               std::max({std::abs(sv.value), std::abs(cv), 1e-8 * sv.scale, 1e-300});
                            const bool ok = rel <= 1e-6;
                            if (!ok) code = kExitScientific;
                            xc.push_back({{"p", p}, {"l", l + 1}, {"L", L + 1}, {"series", sv.value},
                                          {"commutator", cv}, {"relative", rel}, {"agree", ok}});
                        }
                body["xcheck"] = xc;
            }
            return emit(S, "gamma", body, json_out, code);
        }
        if (*toy) {
            if (what == "simulate") {
                if (!S.eff.contains("control")) throw CLI::RequiredError("--control");
                const double T = S.eff["toy_T"];
                const ControlGrid u = read_control(S.eff["control"], T, 2000);
                const Eigen::VectorXd x = simulate_toy(u);
                return emit(S, "toy", {{"what", what}, {"T", u.T}, {"x", std::vector<double>(x.data(), x.data() + 4)}},
                            json_out, kExitOk);
            }
            if (what == "brackets") {
                if (words.empty()) words = {"W(1,0,1)", "W(1,0,2)", "C(1,0,1,2)", "C(0,0,1,2)"};
                BracketEvaluator ev(toy_fields());
                json out = json::array();
                for (const auto& w : words) {
                    std::vector<std::string> v;
                    for (const auto& q : ev.at_zero(w)) v.push_back(to_string(q));
                    out.push_back({{"word", w}, {"at_zero", v}});
                }
                return emit(S, "toy", {{"what", what}, {"brackets", out}}, json_out, kExitOk);
            }
            if (what == "form") {
                const ToyFormCheck c = toy_quadratic_form_check();
                auto eig = [](const Eigen2& e) {
                    json j = {{"approx", {e.approx.first, e.approx.second}}};
                    if (e.exact) j["exact"] = {to_string(e.exact->first), to_string(e.exact->second)};
                    return j;
                };
                json body = {{"what", what},
                             {"Q_eigenvalues", eig(c.q_eigs)},
                             {"difference_eigenvalues", eig(c.difference_eigs)},
                             {"Q_positive_definite", c.q_positive_definite},
                             {"difference_psd", c.difference_psd}};
                return emit(S, "toy", body, json_out, c.pass() ? kExitOk : kExitScientific);
            }
            if (what == "obstruction") {
                const ObstructionCertificate c = check_obstruction(toy_fields(), S.eff["k"]);
                std::vector<std::string> P;
                for (const auto& q : c.P) P.push_back(to_string(q));
                json body = {{"what", what}, {"l_max", c.l_max}, {"span_rank", c.span_rank},
                             {"annihilator_dim", c.annihilator.size()}, {"P", P}, {"definite", c.definite}};
                return emit(S, "toy", body, json_out, c.definite ? kExitOk : kExitScientific);
            }
            const double T = S.eff["toy_T"];
            const int samples = S.eff["toy_samples"];
            const ToyDriftResult r = toy_drift_ensemble(samples, T, toy_umax, toy_C, S.seed());
            json body = {{"what", what},          {"T", T},
                         {"samples", samples},    {"C", r.C},
                         {"umax", toy_umax},      {"violations", r.violations},
                         {"invariant_violations", r.invariant_violations}, {"min_margin_ratio", r.min_margin}};
            return emit(S, "toy", body, json_out,
                        r.violations == 0 && r.invariant_violations == 0 ? kExitOk : kExitScientific);
        }
        if (*interp) {
            const int k = S.eff["k"];
            std::vector<int> ns;
            for (int n = 1; n <= n_max; ++n) ns.push_back(n);
            const auto Ts = parse_list(T_list);
            const InterpolationResult r = interpolation_check(k, Ts, ns);
            return emit(S, "interp-check", {{"k", k}, {"T_list", Ts}, {"max_ratio", r.max_ratio},
                                            {"ratios", r.ratios}, {"skipped", r.skipped}},
                        json_out, kExitOk);
        }
    } catch (const CLI::Error& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const Refusal& e) {
        std::cerr << "refused: " << e.what() << "\n";
        return kExitScientific;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitRuntime;
}
