#include <gtest/gtest.h>

#include <sstream>

#include "test_support.hpp"

using namespace qobs;
using namespace qobs::testing;

namespace {

ControlGrid single(double T, int N, const std::function<double(double)>& f) {
    Eigen::MatrixXd v(1, N + 1);
    for (int i = 0; i <= N; ++i) v(0, i) = f(T * i / N);
    return ControlGrid(T, v);
}

double factorial(int n) { return n <= 1 ? 1.0 : n * factorial(n - 1); }

}  // namespace

TEST(Signals, PrimitivesOfConstant) {
    const double T = 0.7;
    const ControlGrid u = single(T, 200, [](double) { return 1.0; });
    const PrimitiveStack st = iterated_primitives(u, 4);
    EXPECT_EQ(st.scheme, Scheme::simpson);
    // the rule is exact for quadratics; the fourth primitive integrates a cubic
    for (int n = 1; n <= 4; ++n)
        for (int i = 0; i <= u.N; i += 7)
            EXPECT_NEAR(st.get(n, 0)(i), std::pow(u.t(i), n) / factorial(n), n < 4 ? 1e-13 : 1e-10);
}

TEST(Signals, PrimitiveOfCosine) {
    const double T = 1.0, w = 3.0;
    const ControlGrid u = single(T, 2000, [&](double t) { return std::cos(w * t); });
    const PrimitiveStack st = iterated_primitives(u, 2);
    for (int i = 0; i <= u.N; i += 50) {
        EXPECT_NEAR(st.get(1, 0)(i), std::sin(w * u.t(i)) / w, 1e-10);
        EXPECT_NEAR(st.get(2, 0)(i), (1 - std::cos(w * u.t(i))) / (w * w), 1e-10);
    }
}

TEST(Signals, OddGridFallsBackToTrapezoid) {
    const ControlGrid u = single(1.0, 101, [](double t) { return t; });
    const PrimitiveStack st = iterated_primitives(u, 1);
    EXPECT_EQ(st.scheme, Scheme::trapezoid);
    EXPECT_NEAR(st.get(1, 0)(101), 0.5, 1e-12);
}

TEST(Signals, BoundaryValues) {
    const ControlGrid u = single(2.0, 400, [](double) { return 1.0; });
    const Eigen::MatrixXd bv = boundary_values(iterated_primitives(u, 3), 3);
    EXPECT_NEAR(bv(0, 0), 2.0, 1e-13);
    EXPECT_NEAR(bv(1, 0), 2.0, 1e-13);
    EXPECT_NEAR(bv(2, 0), 8.0 / 6.0, 1e-13);
    EXPECT_THROW(boundary_values(iterated_primitives(u, 1), 2), DomainError);
}

TEST(Signals, H1NormOfSine) {
    const double T = 0.3;
    const ControlGrid u = single(T, 2000, [&](double t) { return std::sin(2 * M_PI * t / T); });
    const double expect = T / 2 + std::pow(2 * M_PI / T, 2) * T / 2;
    EXPECT_NEAR(std::pow(sobolev_norm(u, 1), 2), expect, 1e-6 * expect);
    EXPECT_NEAR(std::pow(sobolev_norm(u, 0), 2), T / 2, 1e-12);
}

TEST(Signals, H2NormOfSine) {
    const double T = 1.0, w = 2 * M_PI;
    const ControlGrid u = single(T, 2000, [&](double t) { return std::sin(w * t); });
    const double expect = 0.5 * (1 + w * w + std::pow(w, 4));
    EXPECT_NEAR(std::pow(sobolev_norm(u, 2), 2), expect, 1e-6 * expect);
}

TEST(Signals, WMinusOneProxy) {
    const ControlGrid u = single(1.0, 1000, [](double t) { return std::cos(2 * M_PI * t); });
    EXPECT_NEAR(wminus1inf_proxy(u), 1.0 / (2 * M_PI), 1e-9);
}

TEST(Signals, PrimitiveDifferentiatesBack) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const ControlGrid u = smooth_control(rng(), 2, 0.5, 2000, 1.0, 6);
        const PrimitiveStack st = iterated_primitives(u, 3);
        for (int n = 1; n <= 3; ++n)
            for (int l = 0; l < 2; ++l) {
                const Eigen::VectorXd d = derivative(st.get(n, l), u.dt());
                EXPECT_LT((d - st.get(n - 1, l)).cwiseAbs().maxCoeff(), 1e-6 * std::max(1.0, sup_norm(st.get(n - 1, l))));
                EXPECT_EQ(st.get(n, l)(0), 0.0);
            }
    }
}

TEST(Signals, CauchySchwarzOnPrimitive) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        const ControlGrid u = smooth_control(rng(), 1, 0.2, 1000, 3.0, 8);
        const PrimitiveStack st = iterated_primitives(u, 1);
        const double l2sq = std::pow(l2_norm(u.channel(0), u.dt()), 2);
        for (int i = 0; i <= u.N; i += 10)
            EXPECT_LE(std::pow(st.get(1, 0)(i), 2), u.t(i) * l2sq * (1 + 1e-9) + 1e-15);
    }
}

TEST(Signals, GeneratorsAndScale) {
    const json spec = {{"T", 1.0},
                       {"N", 100},
                       {"scale", 2.0},
                       {"channels",
                        {{{"type", "constant"}, {"value", 1.5}},
                         {{"type", "sum"},
                          {"terms",
                           {{{"type", "polynomial"}, {"coeffs", {1.0, 0.0, 3.0}}},
                            {{"type", "sinusoid"}, {"omega", M_PI}, {"phase", 0.0}, {"scale", 0.5}}}}}}}};
    const ControlGrid u = control_from_json(spec);
    EXPECT_EQ(u.r(), 2);
    EXPECT_EQ(u.N, 100);
    EXPECT_DOUBLE_EQ(u.values(0, 37), 3.0);
    EXPECT_NEAR(u.values(1, 100), 2.0 * (1 + 3 - 0.5), 1e-13);
    EXPECT_NEAR(u.values(1, 0), 2.0 * (1 + 0.5), 1e-13);
    const ControlGrid v = control_from_json(spec, 0.5, 50);
    EXPECT_EQ(v.N, 50);
    EXPECT_DOUBLE_EQ(v.T, 0.5);
    EXPECT_THROW(control_from_json(json{{"T", 1.0}, {"N", 10}, {"channels", {{{"type", "noise"}}}}}), DomainError);
}

TEST(Signals, RandomFourierDeterministic) {
    const Eigen::VectorXd a = random_fourier(0.1, 100, 5, 1.0, 42), b = random_fourier(0.1, 100, 5, 1.0, 42);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, random_fourier(0.1, 100, 5, 1.0, 43));
    EXPECT_NEAR(a(0), a(100), 1e-12);
}

TEST(Signals, CsvRoundTrip) {
    const ControlGrid u = smooth_control(3, 2, 0.1, 64, 1.0);
    std::stringstream ss;
    control_to_csv(u, ss);
    const ControlGrid v = control_from_csv(ss);
    EXPECT_EQ(v.N, u.N);
    EXPECT_NEAR(v.T, u.T, 1e-15);
    EXPECT_LT((v.values - u.values).cwiseAbs().maxCoeff(), 1e-15);
    std::stringstream bad("t,u1\n0,1\n0.1,1\n0.3,1\n");
    EXPECT_THROW(control_from_csv(bad), DomainError);
}

TEST(Signals, GridValidation) {
    EXPECT_THROW(ControlGrid(1.0, 1, 1), DomainError);
    EXPECT_THROW(ControlGrid(0.0, 10, 1), DomainError);
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(1, 5);
    v(0, 2) = std::nan("");
    EXPECT_THROW(ControlGrid(1.0, v), DomainError);
    EXPECT_THROW(sobolev_norm(ControlGrid(1.0, 8, 1), 2), DomainError);
}

TEST(Signals, InterpolationAt) {
    const ControlGrid u = single(1.0, 10, [](double t) { return 3 * t; });
    EXPECT_NEAR(u.at(0.55)(0), 1.65, 1e-14);
    EXPECT_NEAR(u.at(2.0)(0), 3.0, 1e-14);
}
