#include <gtest/gtest.h>

#include "test_support.hpp"

using namespace qobs;
using namespace qobs::testing;

namespace {

ProblemConfig design_config(int k) {
    ProblemConfig c;
    c.k = k;
    c.K = 2;
    c.r = 2;
    c.J_series = k == 1 ? 400 : 1000;
    return c;
}

Eigen::VectorXd amplitudes_of(const DipoleSet& s) {
    const int m = static_cast<int>(s.mus[0].bumps().bumps.size());
    Eigen::VectorXd a(2 * m);
    for (int l = 0; l < 2; ++l)
        for (int i = 0; i < m; ++i) a(l * m + i) = s.mus[l].bumps().bumps[i].amplitude * kBumpPeak;
    return a;
}

}  // namespace

TEST(MuDesign, LayoutIsDisjointAndInterior) {
    for (int m : {1, 2, 5, 8, 12}) {
        const DesignLayout d = DesignLayout::interleaved(m);
        EXPECT_TRUE(d.disjoint());
        for (int l = 0; l < 2; ++l) {
            ASSERT_EQ(d.supports[l].size(), std::size_t(m));
            for (auto [a, b] : d.supports[l]) {
                EXPECT_GT(a, 0.0);
                EXPECT_LT(b, 1.0);
                EXPECT_LT(a, b);
            }
        }
    }
    EXPECT_FALSE(DesignLayout::interleaved(4, 0.02, 0.98, 0.005, 0.7).supports[0].empty());
}

TEST(MuDesign, ZeroAmplitudesLeaveOnlySignResiduals) {
    const DesignProblem P(DesignLayout::interleaved(8), 1, 2, 200);
    const Eigen::VectorXd r = P.constraint_residuals(Eigen::VectorXd::Zero(16), 1.0, 3.0, 0.05);
    const int ne = P.equality_count();
    EXPECT_EQ(r.head(ne).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_DOUBLE_EQ(r(ne), 0.15);
    EXPECT_DOUBLE_EQ(r(ne + 1), 0.15);
}

TEST(MuDesign, SingleBumpKillsCrossConstraints) {
    const DesignProblem P(DesignLayout::interleaved(8), 2, 2, 200);
    Eigen::VectorXd a = Eigen::VectorXd::Zero(16);
    a(3) = 0.8;
    for (int p = 0; p < 4; ++p) {
        EXPECT_EQ(P.gamma(a, p, 0, 1), 0.0);
        EXPECT_EQ(P.gamma(a, p, 1, 1), 0.0);
    }
    const Eigen::VectorXd r = P.constraint_residuals(a);
    for (std::size_t i = 0; i < P.specs().size(); ++i)
        if (P.specs()[i].kind == ConstraintSpec::gamma && P.specs()[i].l != P.specs()[i].L) {
            EXPECT_EQ(r(i), 0.0) << P.specs()[i].label();
        }
}

TEST(MuDesign, BilinearFormsMatchSeriesPath) {
    const DesignLayout layout = DesignLayout::interleaved(6);
    const int J = 300;
    const DesignProblem P(layout, 2, 2, J);
    std::mt19937_64 rng(51);
    std::normal_distribution<double> nd;
    Eigen::VectorXd a(12);
    for (int i = 0; i < 12; ++i) a(i) = nd(rng);
    const DipoleSet s = layout.realize(a);
    const MomentTable tab = moment_table(s, J);
    const GammaTable g = gamma_table(c_sequence(tab, 2, 2), eigendata(J, 2), 2);
    for (int p = 0; p < 4; ++p)
        for (int l = 0; l < 2; ++l)
            for (int L = l; L < 2; ++L)
                EXPECT_LE(std::abs(P.gamma(a, p, l, L) - g(p, l, L)), 1e-10 * g.at(p, l, L).scale)
                    << "p=" << p << " l=" << l << " L=" << L;
}

TEST(MuDesign, ConstraintCountsAndLabels) {
    const DesignProblem P1(DesignLayout::interleaved(8), 1, 2, 100);
    EXPECT_EQ(P1.equality_count(), 4);
    const DesignProblem P2(DesignLayout::interleaved(8), 2, 2, 100);
    EXPECT_EQ(P2.equality_count(), 8);
    std::vector<std::string> labels;
    for (const auto& c : P1.specs()) labels.push_back(c.label());
    EXPECT_EQ(labels, (std::vector<std::string>{"lin_1", "lin_2", "gamma_0^1,2", "gamma_1^1,2", "sign_gamma_1^1",
                                                "sign_gamma_1^2"}));
}

TEST(MuDesign, RefusesInfeasibleFamilies) {
    DesignOptions opt;
    opt.m = 3;
    EXPECT_THROW(design_mu(design_config(1), opt), DomainError);
    opt.m = 5;
    EXPECT_THROW(design_mu(design_config(2), opt), DomainError);
    ProblemConfig c = design_config(1);
    c.r = 3;
    EXPECT_THROW(design_mu(c, DesignOptions{}), DomainError);
}

TEST(MuDesign, ConvergesAndPassesIndependentCheck) {
    const DesignResult r = design_mu(design_config(1), DesignOptions{});
    EXPECT_LE(r.residual_inf, 1e-8);
    EXPECT_LE(r.residuals.cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_TRUE(check_hypotheses(r.mus, design_config(1)).all_pass());
    EXPECT_TRUE(DesignLayout::interleaved(8).disjoint());
    EXPECT_EQ(r.mus.provenance["seed"], 1);
}

TEST(MuDesign, DeterministicAndMatchesShippedFixture) {
    const DesignResult a = design_mu(design_config(1), DesignOptions{});
    const DesignResult b = design_mu(design_config(1), DesignOptions{});
    EXPECT_EQ(to_json(a.mus).dump(), to_json(b.mus).dump());
    const DipoleSet shipped = load_dipole_set(data_path("mu/designed_k1_K2.json"));
    EXPECT_EQ(to_json(a.mus)["mus"].dump(), to_json(shipped)["mus"].dump());
}

TEST(MuDesign, ExactSeedIsFixedPoint) {
    const DipoleSet shipped = load_dipole_set(data_path("mu/designed_k1_K2.json"));
    DesignOptions opt;
    opt.initial = amplitudes_of(shipped);
    const DesignResult r = design_mu(design_config(1), opt);
    EXPECT_EQ(r.iterations, 0);
    const DesignProblem P(DesignLayout::interleaved(8), 1, 2, 400);
    const Eigen::VectorXd r0 = P.constraint_residuals(opt.initial, r.sign);
    EXPECT_EQ((r.residuals - r0).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(r.amplitudes, opt.initial);
}

TEST(MuDesign, ResidualIsLocallyLipschitz) {
    const DipoleSet shipped = load_dipole_set(data_path("mu/designed_k2_K2.json"));
    const Eigen::VectorXd a = amplitudes_of(shipped);
    const DesignProblem P(DesignLayout::interleaved(8), 2, 2, 1000);
    std::mt19937_64 rng(52);
    std::normal_distribution<double> nd;
    Eigen::VectorXd d(a.size());
    for (int i = 0; i < d.size(); ++i) d(i) = nd(rng);
    d.normalize();
    const int ne = P.equality_count();
    double prev = 0;
    for (double eps : {1e-7, 1e-6, 1e-5, 1e-4}) {
        const double n = P.constraint_residuals(a + eps * d).head(ne).norm();
        if (prev > 0) {
            EXPECT_NEAR(n / prev, 10.0, 0.5);
        }
        prev = n;
    }
}

TEST(MuDesign, ShippedK2DesignResiduals) {
    const DipoleSet shipped = load_dipole_set(data_path("mu/designed_k2_K2.json"));
    const auto& prov = shipped.provenance;
    EXPECT_LE(prov["residual_inf"].get<double>(), 1e-8);
    for (const auto& [label, v] : prov["residuals"].items()) EXPECT_LE(std::abs(v.get<double>()), 1e-8) << label;
    EXPECT_TRUE(check_hypotheses(shipped, design_config(2)).all_pass());
}
