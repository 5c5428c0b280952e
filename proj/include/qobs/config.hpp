#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qobs {

using cplx = std::complex<double>;

struct DomainError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NumericError : std::runtime_error {
    double estimate;
    double error_bound;
    NumericError(const std::string& what, double est, double err)
        : std::runtime_error(what), estimate(est), error_bound(err) {}
};

struct IntegrationFailure : std::runtime_error {
    long step;
    IntegrationFailure(const std::string& what, long s) : std::runtime_error(what), step(s) {}
};

struct ConsistencyError : std::runtime_error {
    double a;
    double b;
    ConsistencyError(const std::string& what, double x, double y)
        : std::runtime_error(what), a(x), b(y) {}
};

// A guarded precondition (hypotheses not certified) stopped the computation.
struct Refusal : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ProblemConfig {
    int k = 1;
    int K = 2;
    int r = 2;
    int J = 64;
    // truncation used for the γ-series and c-sequences, independent of the Galerkin size
    int J_series = 400;
    double T = 0.1;
    double dt = 1e-4;
    double tol = 1e-10;

    static int default_J(int K) { return std::max(8 * K, 64); }

    int steps() const { return static_cast<int>(std::llround(T / dt)); }

    void validate() const {
        if (k < 1 || K < 1 || r < 1 || J < 1)
            throw DomainError("k, K, r, J must be positive integers");
        if (J < std::max(K, 2))
            throw DomainError("J must be at least max(K, 2)");
        if (J_series < J)
            throw DomainError("J_series must be at least J");
        if (!(T > 0) || !std::isfinite(T))
            throw DomainError("T must be positive");
        if (!(dt > 0) || !(dt < T))
            throw DomainError("dt must satisfy 0 < dt < T");
        if (!(tol > 0))
            throw DomainError("tol must be positive");
    }
};

// Smallest step count with dt <= min(1e-3 T, 0.1 / lambda_J).
inline int default_steps(double T, int J) {
    const double lamJ = std::pow(J * M_PI, 2);
    const double dt = std::min(1e-3 * T, 0.1 / lamJ);
    int n = static_cast<int>(std::ceil(T / dt));
    return n + (n % 2);
}

}  // namespace qobs
