#include <gtest/gtest.h>

#include <fstream>

#include "test_support.hpp"

using namespace qobs;
using namespace qobs::testing;

namespace {

Eigen::VectorXd random_sequence(std::mt19937_64& rng, int n, int support) {
    std::normal_distribution<double> nd;
    Eigen::VectorXd a = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < support; ++i) a(i) = nd(rng);
    return a;
}

GammaTable injected_gamma(int k, double g1, double g2, double g12) {
    GammaTable g;
    g.k = k;
    g.r = 2;
    g.K = 2;
    g.entries.assign(2 * k, std::vector<SeriesValue>(3));
    g.at(2 * k - 1, 0, 0).value = g1;
    g.at(2 * k - 1, 1, 1).value = g2;
    g.at(2 * k - 1, 0, 1).value = g12;
    return g;
}

}  // namespace

TEST(Brackets, BetaRows) {
    const BetaTable b = beta_table(6);
    EXPECT_EQ(b[0], (std::vector<long long>{1}));
    EXPECT_EQ(b[1], (std::vector<long long>{1, 1}));
    EXPECT_EQ(b[2], (std::vector<long long>{1, 1, -1}));
    for (int v = 0; v <= 6; ++v) EXPECT_EQ(b[v].size(), std::size_t(v + 1));
    for (int v = 2; v <= 6; ++v)
        for (int l = 0; l <= v; ++l) {
            const long long a = l <= v - 1 ? b[v - 1][l] : 0;
            const long long c = (l >= 2) ? b[v - 2][l - 2] : 0;
            EXPECT_EQ(b[v][l], a - c);
        }
    EXPECT_THROW(beta_table(-1), DomainError);
}

TEST(Brackets, WeightedSumIdentityCertifiesBeta) {
    const EigenData e = eigendata(8, 2);
    const BetaTable beta = beta_table(7);
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 200; ++trial) {
        const Eigen::VectorXd a = random_sequence(rng, 8, 5), b = random_sequence(rng, 8, 5);
        for (int p = 0; 2 * p <= 7; ++p)
            for (int v = 0; 2 * p + v <= 7; ++v) {
                const IdentityCheck c = weighted_sum_identity(a, b, p, v, e, beta);
                EXPECT_LE(c.residual, 1e-9 * c.scale) << "p=" << p << " v=" << v;
            }
    }
}

TEST(Brackets, WeightedSumSpecialCases) {
    const EigenData e = eigendata(8, 3);
    const BetaTable beta = beta_table(2);
    std::mt19937_64 rng(22);
    const Eigen::VectorXd a = random_sequence(rng, 8, 6);
    for (int p = 0; p <= 2; ++p) {
        const IdentityCheck c0 = weighted_sum_identity(a, a, p, 0, e, beta);
        EXPECT_NEAR(c0.lhs, gamma_of(a, a, e, 2 * p), 1e-9 * c0.scale);
        const IdentityCheck c1 = weighted_sum_identity(a, a, p, 1, e, beta);
        EXPECT_NEAR(c1.lhs, e.omega_K() * gamma_of(a, a, e, 2 * p) - gamma_of(a, a, e, 2 * p + 1), 1e-9 * c1.scale);
    }
}

TEST(Brackets, WrongBetaIsRejected) {
    const EigenData e = eigendata(8, 2);
    std::mt19937_64 rng(23);
    const Eigen::VectorXd a = random_sequence(rng, 8, 5), b = random_sequence(rng, 8, 5);
    const IdentityCheck c = weighted_sum_check(a, b, 1, 2, e, {1, 1, 1}, false);
    EXPECT_GT(c.residual, 1e-6 * c.scale);
}

TEST(Brackets, DeltaTableFitsExactly) {
    const DeltaFit d = fit_delta_table(5, eigendata(8, 2));
    EXPECT_LT(d.max_residual, 1e-9);
    ASSERT_EQ(d.delta.size(), 6u);
    std::mt19937_64 rng(24);
    const EigenData e = eigendata(8, 2);
    for (int trial = 0; trial < 50; ++trial) {
        const Eigen::VectorXd a = random_sequence(rng, 8, 5), b = random_sequence(rng, 8, 5);
        for (int v = 0; v <= 5; ++v) {
            const IdentityCheck c = weighted_sum_check(a, b, trial % 2, v, e, d.delta[v], true);
            EXPECT_LE(c.residual, 1e-9 * c.scale);
        }
    }
}

TEST(Brackets, GammaAntisymmetryAtSequenceLevel) {
    const EigenData e = eigendata(10, 2);
    std::mt19937_64 rng(25);
    const Eigen::VectorXd a = random_sequence(rng, 10, 10), b = random_sequence(rng, 10, 10);
    for (int p = 0; p <= 6; p += 2) {
        EXPECT_NEAR(gamma_of(a, b, e, p), -gamma_of(b, a, e, p), 1e-12 * std::abs(gamma_of(a, b, e, p)) + 1e-300);
        for (double t : gamma_terms(a, a, e, p)) EXPECT_EQ(t, 0.0);
    }
}

TEST(Brackets, ZeroSequences) {
    const MomentTable tab = moment_table(DipoleSet{{DipoleFunction::zero(), DipoleFunction::zero()}, {}}, 40);
    const CSequence cs = c_sequence(tab, 2, 1);
    for (const auto& v : cs.c) EXPECT_EQ(v.cwiseAbs().maxCoeff(), 0.0);
    const GammaTable g = gamma_table(cs, eigendata(40, 2), 2);
    for (const auto& row : g.entries)
        for (const auto& s : row) EXPECT_EQ(s.value, 0.0);
}

TEST(Brackets, CSequenceIsProductOfMomentColumns) {
    const MomentTable tab = moment_table(random_bump_set(31), 50);
    const CSequence cs = c_sequence(tab, 2, 1);
    for (int l = 0; l < 2; ++l)
        for (int L = 0; L < 2; ++L)
            for (int j = 1; j <= 50; ++j) EXPECT_DOUBLE_EQ(cs.at(l, L)(j - 1), tab(l, 2, j) * tab(L, 1, j));
}

TEST(Brackets, DiagonalEvenGammaVanishes) {
    const DipoleSet s = random_bump_set(32);
    ProblemConfig cfg;
    cfg.k = 2;
    cfg.J_series = 400;
    const MomentTable tab = moment_table(s, cfg.J_series);
    const CSequence cs = c_sequence(tab, cfg.K, cfg.k);
    const GammaTable g = gamma_table(cs, eigendata(cfg.J_series, cfg.K), cfg.k);
    for (int p = 0; p < 2 * cfg.k; p += 2)
        for (int l = 0; l < 2; ++l) EXPECT_LE(std::abs(g(p, l, l)), null_threshold(g.at(p, l, l)));
}

TEST(Brackets, SeriesMatchesCommutator) {
    const DipoleSet s = random_bump_set(33);
    const int J = 400, k = 2;
    const MomentTable tab = moment_table(s, J);
    const EigenData e = eigendata(J, 2);
    const GammaTable g = gamma_table(c_sequence(tab, 2, k), e, k);
    for (int p = 0; p < 2 * k; ++p)
        for (int l = 0; l < 2; ++l)
            for (int L = l; L < 2; ++L) {
                const double series = g(p, l, L), comm = commutator_gamma(tab, e, p, l, L);
                EXPECT_LE(rel_diff(series, comm, 1e-8 * g.at(p, l, L).scale), 1e-6) << "p=" << p;
            }
}

TEST(Brackets, CommutatorTrivialCases) {
    const MomentTable tab = moment_table(random_bump_set(34), 30);
    const EigenData e = eigendata(30, 2);
    EXPECT_EQ(commutator_gamma(tab, e, 0, 0, 0), 0.0);
    // a diagonal coupling commutes with A
    MomentTable diag;
    diag.J = 30;
    diag.cosine.assign(1, std::vector<double>(61, 0.0));
    diag.cosine[0][0] = 1.0;
    for (int p = 0; p < 4; ++p) EXPECT_EQ(commutator_gamma(diag, e, p, 0, 0), 0.0);
}

TEST(Brackets, QuadraticFormMatchesDefinition) {
    const GammaTable g = injected_gamma(1, 1.3, 0.4, -0.2);
    const QuadraticForm q = quadratic_form(g);
    std::mt19937_64 rng(35);
    std::normal_distribution<double> nd;
    for (int i = 0; i < 100; ++i) {
        Eigen::VectorXd a(2);
        a << nd(rng), nd(rng);
        const double direct = 0.5 * (g(1, 0, 0) * a(0) * a(0) + g(1, 1, 1) * a(1) * a(1)) + g(1, 0, 1) * a(0) * a(1);
        EXPECT_NEAR(q(a), direct, 1e-14 * (1 + std::abs(direct)));
    }
}

TEST(Brackets, PositivityVerdicts) {
    EXPECT_EQ(judge_pos(injected_gamma(1, 1, 1, 0)).verdict, Verdict::pass);
    EXPECT_EQ(judge_pos(injected_gamma(1, -1, -2, 0.5)).verdict, Verdict::pass);
    EXPECT_EQ(judge_pos(injected_gamma(1, 1, 1, 2)).verdict, Verdict::fail);
    EXPECT_EQ(judge_pos(injected_gamma(2, 1, -1, 0)).verdict, Verdict::fail);
}

TEST(Brackets, ZeroDipolesFailPositivity) {
    ProblemConfig cfg;
    cfg.J_series = 64;
    const HypothesisReport r = check_hypotheses(DipoleSet{{DipoleFunction::zero(), DipoleFunction::zero()}, {}}, cfg);
    EXPECT_EQ(r.lin.verdict, Verdict::pass);
    EXPECT_EQ(r.pos.verdict, Verdict::fail);
    EXPECT_FALSE(r.all_pass());
}

TEST(Brackets, ShippedDesignsPassAndMatchGolden) {
    for (int k : {1, 2}) {
        const std::string base = data_path("mu/designed_k" + std::to_string(k) + "_K2");
        ProblemConfig cfg;
        cfg.k = k;
        cfg.J_series = k == 1 ? 400 : 1000;
        const HypothesisReport r = check_hypotheses(load_dipole_set(base + ".json"), cfg);
        EXPECT_TRUE(r.all_pass()) << to_json(r).dump(2);
        std::ifstream in(base + ".report.json");
        ASSERT_TRUE(in.good());
        const json golden = json::parse(in)["result"]["report"];
        const json now = to_json(r);
        ASSERT_TRUE(golden.contains("gamma"));
        const auto& ge = golden["gamma"]["entries"];
        const auto& ne = now["gamma"]["entries"];
        ASSERT_EQ(ge.size(), ne.size());
        for (std::size_t i = 0; i < ge.size(); ++i) {
            const double a = ge[i]["value"], b = ne[i]["value"], sc = ge[i]["scale"];
            EXPECT_NEAR(a, b, 1e-10 * std::max(1.0, sc));
        }
    }
}

TEST(Brackets, IndependenceRank) {
    const EigenData e = eigendata(64, 2);
    const MomentTable zero = moment_table(DipoleSet{{DipoleFunction::zero()}, {}}, 64);
    const RankDiagnostic d0 = independence_rank(zero, e, 1);
    EXPECT_EQ(d0.rank, 0);
    EXPECT_FALSE(d0.deficiency.empty());
    const MomentTable one = moment_table(random_bump_set(36, 1), 64);
    EXPECT_EQ(independence_rank(one, e, 1).rank, 1);
    const MomentTable designed = moment_table(load_dipole_set(data_path("mu/designed_k2_K2.json")), 64);
    const RankDiagnostic d = independence_rank(designed, e, 2);
    EXPECT_EQ(d.rank, 4);
    EXPECT_EQ(d.columns.size(), 4u);
    EXPECT_TRUE(std::isfinite(d.condition));
}

TEST(Brackets, DesignedDecayIsFast) {
    const MomentTable tab = moment_table(load_dipole_set(data_path("mu/designed_k1_K2.json")), 400);
    const CSequence cs = c_sequence(tab, 2, 1);
    EXPECT_GT(cs.decay_exponent, 4.0);
    EXPECT_TRUE(std::isfinite(cs.tail_bound));
}
