#pragma once

#include <Eigen/Dense>
#include <boost/multiprecision/cpp_int.hpp>
#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "qobs/config.hpp"
#include "qobs/signals.hpp"

namespace qobs {

using Rational = boost::multiprecision::cpp_rational;

// Sparse multivariate polynomial: exponent vector -> coefficient.
class Polynomial {
public:
    using Exponents = std::vector<int>;

    explicit Polynomial(int nvars = 0) : n_(nvars) {}

    static Polynomial constant(int nvars, const Rational& c) {
        Polynomial p(nvars);
        p.add_term(Exponents(nvars, 0), c);
        return p;
    }
    static Polynomial variable(int nvars, int i, const Rational& c = 1) {
        Polynomial p(nvars);
        Exponents e(nvars, 0);
        e.at(i) = 1;
        p.add_term(e, c);
        return p;
    }

    int nvars() const { return n_; }
    const std::map<Exponents, Rational>& terms() const { return terms_; }
    bool is_zero() const { return terms_.empty(); }

    void add_term(const Exponents& e, const Rational& c) {
        if (static_cast<int>(e.size()) != n_) throw DomainError("polynomial: exponent length mismatch");
        if (c == 0) return;
        auto [it, inserted] = terms_.try_emplace(e, c);
        if (!inserted) {
            it->second += c;
            if (it->second == 0) terms_.erase(it);
        }
    }

    Polynomial& operator+=(const Polynomial& o) {
        check(o);
        for (const auto& [e, c] : o.terms_) add_term(e, c);
        return *this;
    }
    Polynomial& operator-=(const Polynomial& o) {
        check(o);
        for (const auto& [e, c] : o.terms_) add_term(e, -c);
        return *this;
    }
    friend Polynomial operator+(Polynomial a, const Polynomial& b) { return a += b; }
    friend Polynomial operator-(Polynomial a, const Polynomial& b) { return a -= b; }
    friend Polynomial operator*(const Polynomial& a, const Polynomial& b) {
        a.check(b);
        Polynomial r(a.n_);
        for (const auto& [ea, ca] : a.terms_)
            for (const auto& [eb, cb] : b.terms_) {
                Exponents e(a.n_);
                for (int i = 0; i < a.n_; ++i) e[i] = ea[i] + eb[i];
                r.add_term(e, ca * cb);
            }
        return r;
    }
    friend Polynomial operator*(const Rational& s, const Polynomial& p) {
        Polynomial r(p.n_);
        for (const auto& [e, c] : p.terms_) r.add_term(e, s * c);
        return r;
    }
    bool operator==(const Polynomial& o) const { return n_ == o.n_ && terms_ == o.terms_; }

    Polynomial derivative(int i) const {
        Polynomial r(n_);
        for (const auto& [e, c] : terms_) {
            if (e.at(i) == 0) continue;
            Exponents d = e;
            --d[i];
            r.add_term(d, c * e[i]);
        }
        return r;
    }

    Rational at_zero() const {
        auto it = terms_.find(Exponents(n_, 0));
        return it == terms_.end() ? Rational(0) : it->second;
    }

    double operator()(const Eigen::VectorXd& x) const {
        double s = 0;
        for (const auto& [e, c] : terms_) {
            double m = static_cast<double>(c);
            for (int i = 0; i < n_; ++i)
                if (e[i]) m *= std::pow(x(i), e[i]);
            s += m;
        }
        return s;
    }

private:
    void check(const Polynomial& o) const {
        if (o.n_ != n_) throw DomainError("polynomial: variable count mismatch");
    }
    int n_;
    std::map<Exponents, Rational> terms_;
};

struct PolyVectorField {
    std::vector<Polynomial> comp;

    PolyVectorField() = default;
    explicit PolyVectorField(std::vector<Polynomial> c) : comp(std::move(c)) {
        for (const auto& p : comp)
            if (p.nvars() != dim()) throw DomainError("vector field: component arity must equal dimension");
    }
    static PolyVectorField zero(int d) { return PolyVectorField(std::vector<Polynomial>(d, Polynomial(d))); }

    int dim() const { return static_cast<int>(comp.size()); }
    bool operator==(const PolyVectorField& o) const { return comp == o.comp; }
    bool is_zero() const {
        for (const auto& p : comp)
            if (!p.is_zero()) return false;
        return true;
    }

    std::vector<Rational> at_zero() const {
        std::vector<Rational> v;
        for (const auto& p : comp) v.push_back(p.at_zero());
        return v;
    }
    Eigen::VectorXd operator()(const Eigen::VectorXd& x) const {
        Eigen::VectorXd v(dim());
        for (int i = 0; i < dim(); ++i) v(i) = comp[i](x);
        return v;
    }
    // (Df . g)_i = sum_j d_j f_i g_j
    PolyVectorField jacobian_times(const PolyVectorField& g) const {
        PolyVectorField r = zero(dim());
        for (int i = 0; i < dim(); ++i)
            for (int j = 0; j < dim(); ++j) r.comp[i] += comp[i].derivative(j) * g.comp[j];
        return r;
    }
};

// [f, g] = Dg . f - Df . g
inline PolyVectorField lie_bracket(const PolyVectorField& f, const PolyVectorField& g) {
    if (f.dim() != g.dim()) throw DomainError("lie_bracket: dimension mismatch");
    PolyVectorField r = g.jacobian_times(f);
    const PolyVectorField s = f.jacobian_times(g);
    for (int i = 0; i < f.dim(); ++i) r.comp[i] -= s.comp[i];
    return r;
}

// ---- bracket words ----
//
//   word := "M(" l "," ell ")" | "W(" p "," l "," ell ")" | "C(" p "," l "," ell "," L ")"
//         | "X(" i ")" | "[" word "," word "]"
//
// ell, L are 1-based control indices, X(0) is the drift.

struct BracketWord {
    enum Kind { X, M, W, C, Br } kind = X;
    std::vector<int> idx;
    std::shared_ptr<BracketWord> a, b;
};

inline BracketWord parse_bracket_word(const std::string& s) {
    std::size_t pos = 0;
    auto skip = [&] {
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    };
    auto expect = [&](char c) {
        skip();
        if (pos >= s.size() || s[pos] != c)
            throw DomainError("bracket word: expected '" + std::string(1, c) + "' at position " + std::to_string(pos) +
                              " in \"" + s + "\"");
        ++pos;
    };
    auto number = [&] {
        skip();
        const std::size_t start = pos;
        while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
        if (start == pos) throw DomainError("bracket word: expected integer at position " + std::to_string(pos));
        return std::stoi(s.substr(start, pos - start));
    };
    std::function<BracketWord()> word = [&]() -> BracketWord {
        skip();
        if (pos >= s.size()) throw DomainError("bracket word: unexpected end of \"" + s + "\"");
        BracketWord w;
        const char c = s[pos];
        if (c == '[') {
            ++pos;
            w.kind = BracketWord::Br;
            w.a = std::make_shared<BracketWord>(word());
            expect(',');
            w.b = std::make_shared<BracketWord>(word());
            expect(']');
            return w;
        }
        int arity = 0;
        switch (c) {
            case 'X': w.kind = BracketWord::X, arity = 1; break;
            case 'M': w.kind = BracketWord::M, arity = 2; break;
            case 'W': w.kind = BracketWord::W, arity = 3; break;
            case 'C': w.kind = BracketWord::C, arity = 4; break;
            default: throw DomainError("bracket word: unknown symbol '" + std::string(1, c) + "'");
        }
        ++pos;
        expect('(');
        for (int i = 0; i < arity; ++i) {
            if (i) expect(',');
            w.idx.push_back(number());
        }
        expect(')');
        return w;
    };
    BracketWord w = word();
    skip();
    if (pos != s.size()) throw DomainError("bracket word: trailing characters in \"" + s + "\"");
    return w;
}

class BracketEvaluator {
public:
    // fields[0] is the drift f_0, fields[ell] the control fields.
    explicit BracketEvaluator(std::vector<PolyVectorField> fields) : f_(std::move(fields)) {
        if (f_.size() < 2) throw DomainError("BracketEvaluator: need a drift and at least one control field");
        for (const auto& g : f_)
            if (g.dim() != f_[0].dim()) throw DomainError("BracketEvaluator: fields of different dimensions");
    }

    int r() const { return static_cast<int>(f_.size()) - 1; }
    int dim() const { return f_[0].dim(); }

    // b 0^nu
    PolyVectorField pad(PolyVectorField b, int nu) const {
        for (int i = 0; i < nu; ++i) b = lie_bracket(b, f_[0]);
        return b;
    }
    const PolyVectorField& M(int l, int ell) {
        check_control(ell);
        auto key = std::make_pair(l, ell);
        auto it = m_cache_.find(key);
        if (it != m_cache_.end()) return it->second;
        PolyVectorField v = l == 0 ? f_[ell] : lie_bracket(M(l - 1, ell), f_[0]);
        return m_cache_.emplace(key, std::move(v)).first->second;
    }
    PolyVectorField W(int p, int l, int ell) {
        if (p < 1) throw DomainError("W word needs p >= 1");
        return pad(lie_bracket(M(p - 1, ell), M(p, ell)), l);
    }
    PolyVectorField C(int p, int l, int ell, int L) {
        if (!(ell < L)) throw DomainError("C word needs ell < L");
        PolyVectorField v = pad(lie_bracket(M((p + 1) / 2, ell), M(p / 2, L)), l);
        if (p % 2)
            for (auto& c : v.comp) c = Rational(-1) * c;
        return v;
    }

    PolyVectorField field(const BracketWord& w) {
        switch (w.kind) {
            case BracketWord::X:
                if (w.idx[0] < 0 || w.idx[0] > r()) throw DomainError("X index out of range");
                return f_[w.idx[0]];
            case BracketWord::M: return M(w.idx[0], w.idx[1]);
            case BracketWord::W: return W(w.idx[0], w.idx[1], w.idx[2]);
            case BracketWord::C: return C(w.idx[0], w.idx[1], w.idx[2], w.idx[3]);
            case BracketWord::Br: return lie_bracket(field(*w.a), field(*w.b));
        }
        throw DomainError("malformed bracket word");
    }
    std::vector<Rational> at_zero(const std::string& word) { return field(parse_bracket_word(word)).at_zero(); }

private:
    void check_control(int ell) const {
        if (ell < 1 || ell > r()) throw DomainError("control index out of range: " + std::to_string(ell));
    }
    std::vector<PolyVectorField> f_;
    std::map<std::pair<int, int>, PolyVectorField> m_cache_;
};

// ---- the toy system ----
// x1' = u1, x2' = x1, x3' = u2, x4' = x1^2 + x1 x3 / 2 + 2 x3^2 - 2 u2 x3 - x2^2 - u2 x1^2

inline std::vector<PolyVectorField> toy_fields() {
    const int d = 4;
    auto x = [&](int i) { return Polynomial::variable(d, i); };
    auto zero = Polynomial(d);
    auto one = Polynomial::constant(d, 1);
    PolyVectorField f0({zero, x(0), zero,
                        x(0) * x(0) + Rational(1, 2) * (x(0) * x(2)) + Rational(2) * (x(2) * x(2)) - x(1) * x(1)});
    PolyVectorField f1({one, zero, zero, zero});
    PolyVectorField f2({zero, zero, one, Rational(-2) * x(2) - x(0) * x(0)});
    return {f0, f1, f2};
}

inline Eigen::VectorXd toy_rhs(const Eigen::VectorXd& x, double u1, double u2) {
    Eigen::VectorXd f(4);
    f << u1, x(0), u2,
        x(0) * x(0) + 0.5 * x(0) * x(2) + 2 * x(2) * x(2) - 2 * u2 * x(2) - x(1) * x(1) - u2 * x(0) * x(0);
    return f;
}

// Classical RK4 on the control grid; stage controls are interpolated linearly.
inline Eigen::VectorXd simulate_toy(const ControlGrid& u, double blowup = 1e6) {
    if (u.r() != 2) throw DomainError("simulate_toy: need two control channels");
    Eigen::VectorXd x = Eigen::VectorXd::Zero(4);
    const double h = u.dt();
    for (int i = 0; i < u.N; ++i) {
        const double a1 = u.values(0, i), a2 = u.values(1, i);
        const double b1 = u.values(0, i + 1), b2 = u.values(1, i + 1);
        const double m1 = 0.5 * (a1 + b1), m2 = 0.5 * (a2 + b2);
        const Eigen::VectorXd k1 = toy_rhs(x, a1, a2);
        const Eigen::VectorXd k2 = toy_rhs(x + 0.5 * h * k1, m1, m2);
        const Eigen::VectorXd k3 = toy_rhs(x + 0.5 * h * k2, m1, m2);
        const Eigen::VectorXd k4 = toy_rhs(x + h * k3, b1, b2);
        x += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
        if (!x.allFinite() || x.cwiseAbs().maxCoeff() > blowup) throw IntegrationFailure("simulate_toy: blow-up", i + 1);
    }
    return x;
}

// ---- exact checks on symmetric rational 2x2 / nxn forms ----

struct RationalMatrix {
    int n = 0;
    std::vector<Rational> a;
    explicit RationalMatrix(int n_ = 0) : n(n_), a(static_cast<std::size_t>(n_) * n_, Rational(0)) {}
    Rational& operator()(int i, int j) { return a[i * n + j]; }
    const Rational& operator()(int i, int j) const { return a[i * n + j]; }
};

inline Rational determinant(RationalMatrix m) {
    Rational det = 1;
    for (int c = 0; c < m.n; ++c) {
        int piv = -1;
        for (int r = c; r < m.n; ++r)
            if (m(r, c) != 0) {
                piv = r;
                break;
            }
        if (piv < 0) return 0;
        if (piv != c) {
            for (int j = 0; j < m.n; ++j) std::swap(m(c, j), m(piv, j));
            det = -det;
        }
        det *= m(c, c);
        for (int r = c + 1; r < m.n; ++r) {
            const Rational f = m(r, c) / m(c, c);
            for (int j = c; j < m.n; ++j) m(r, j) -= f * m(c, j);
        }
    }
    return det;
}

// Positive definite iff all leading principal minors are > 0.
inline bool positive_definite(const RationalMatrix& m) {
    for (int k = 1; k <= m.n; ++k) {
        RationalMatrix s(k);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) s(i, j) = m(i, j);
        if (determinant(s) <= 0) return false;
    }
    return true;
}

// Positive semidefinite iff every principal minor is >= 0.
inline bool positive_semidefinite(const RationalMatrix& m) {
    for (unsigned mask = 1; mask < (1u << m.n); ++mask) {
        std::vector<int> idx;
        for (int i = 0; i < m.n; ++i)
            if (mask & (1u << i)) idx.push_back(i);
        RationalMatrix s(static_cast<int>(idx.size()));
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t j = 0; j < idx.size(); ++j) s(i, j) = m(idx[i], idx[j]);
        if (determinant(s) < 0) return false;
    }
    return true;
}

inline std::optional<Rational> rational_sqrt(const Rational& q) {
    if (q < 0) return std::nullopt;
    using boost::multiprecision::cpp_int;
    const cpp_int num = boost::multiprecision::numerator(q), den = boost::multiprecision::denominator(q);
    const cpp_int sn = boost::multiprecision::sqrt(num), sd = boost::multiprecision::sqrt(den);
    if (sn * sn != num || sd * sd != den) return std::nullopt;
    return Rational(sn, sd);
}

// Eigenvalues of a symmetric 2x2 rational matrix, exact when the discriminant is a square.
struct Eigen2 {
    std::optional<std::pair<Rational, Rational>> exact;
    std::pair<double, double> approx;
};

inline Eigen2 eigenvalues2(const RationalMatrix& m) {
    if (m.n != 2) throw DomainError("eigenvalues2: need a 2x2 matrix");
    const Rational tr = m(0, 0) + m(1, 1);
    const Rational disc = (m(0, 0) - m(1, 1)) * (m(0, 0) - m(1, 1)) + 4 * m(0, 1) * m(1, 0);
    Eigen2 e;
    const double t = static_cast<double>(tr), s = std::sqrt(std::max(0.0, static_cast<double>(disc)));
    e.approx = {(t - s) / 2, (t + s) / 2};
    if (auto r = rational_sqrt(disc)) e.exact = std::make_pair((tr - *r) / 2, (tr + *r) / 2);
    return e;
}

inline std::string to_string(const Rational& q) { return q.str(); }

struct ToyFormCheck {
    RationalMatrix Q{2};
    RationalMatrix difference{2};
    Eigen2 q_eigs, difference_eigs;
    bool q_positive_definite = false;
    bool difference_psd = false;
    bool pass() const { return q_positive_definite && difference_psd; }
};

// Q from the bracket values: P(f_W^l)/2 on the diagonal, P(f_C^{12})/2 off it.
inline ToyFormCheck toy_quadratic_form_check() {
    BracketEvaluator ev(toy_fields());
    const Rational w1 = ev.W(1, 0, 1).at_zero()[3], w2 = ev.W(1, 0, 2).at_zero()[3];
    const Rational c12 = ev.C(1, 0, 1, 2).at_zero()[3];
    ToyFormCheck r;
    r.Q(0, 0) = w1 / 2;
    r.Q(1, 1) = w2 / 2;
    r.Q(0, 1) = r.Q(1, 0) = c12 / 2;
    r.difference = r.Q;
    r.difference(0, 0) -= Rational(3, 4);
    r.difference(1, 1) -= Rational(7, 4);
    r.q_eigs = eigenvalues2(r.Q);
    r.difference_eigs = eigenvalues2(r.difference);
    r.q_positive_definite = positive_definite(r.Q);
    r.difference_psd = positive_semidefinite(r.difference);
    return r;
}

// ---- general obstruction checker for polynomial systems ----

struct ObstructionCertificate {
    int k = 1;
    int l_max = 0;
    int span_rank = 0;
    std::vector<std::vector<Rational>> annihilator;  // basis of linear forms vanishing on N_k
    std::vector<Rational> P;                          // chosen form, empty if none works
    RationalMatrix Q{0};
    bool definite = false;
};

// Row-reduce a rational matrix in place; returns pivot columns.
inline std::vector<int> rref(std::vector<std::vector<Rational>>& rows, int ncols) {
    std::vector<int> pivots;
    std::size_t r = 0;
    for (int c = 0; c < ncols && r < rows.size(); ++c) {
        std::size_t piv = r;
        while (piv < rows.size() && rows[piv][c] == 0) ++piv;
        if (piv == rows.size()) continue;
        std::swap(rows[r], rows[piv]);
        const Rational inv = 1 / rows[r][c];
        for (auto& x : rows[r]) x *= inv;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (i == r || rows[i][c] == 0) continue;
            const Rational f = rows[i][c];
            for (int j = 0; j < ncols; ++j) rows[i][j] -= f * rows[r][j];
        }
        pivots.push_back(c);
        ++r;
    }
    rows.resize(r);
    return pivots;
}

// N_k is truncated at padding depth l <= l_max.
inline ObstructionCertificate check_obstruction(const std::vector<PolyVectorField>& fields, int k, int l_max = -1,
                                                int search = 64, std::uint64_t seed = 3) {
    if (k < 1) throw DomainError("check_obstruction: k must be >= 1");
    BracketEvaluator ev(fields);
    const int d = ev.dim(), r = ev.r();
    ObstructionCertificate cert;
    cert.k = k;
    cert.l_max = l_max < 0 ? 2 * k + 2 : l_max;
    std::vector<std::vector<Rational>> span;
    for (int l = 0; l <= cert.l_max; ++l)
        for (int ell = 1; ell <= r; ++ell) {
            span.push_back(ev.M(l, ell).at_zero());
            for (int p = 1; p <= k - 1; ++p) span.push_back(ev.W(p, l, ell).at_zero());
            for (int L = ell + 1; L <= r; ++L)
                for (int p = 0; p <= 2 * k - 2; ++p) span.push_back(ev.C(p, l, ell, L).at_zero());
        }
    // forms P with P(N_k) = 0 form the null space of the span matrix
    const std::vector<int> piv = rref(span, d);
    cert.span_rank = static_cast<int>(span.size());
    for (int f = 0; f < d; ++f) {
        if (std::find(piv.begin(), piv.end(), f) != piv.end()) continue;
        std::vector<Rational> v(d, Rational(0));
        v[f] = 1;
        for (std::size_t i = 0; i < span.size(); ++i) v[piv[i]] = -span[i][f];
        cert.annihilator.push_back(v);
    }
    const auto& ann = cert.annihilator;
    if (ann.empty()) return cert;

    std::vector<std::vector<Rational>> wv, cv;
    for (int ell = 1; ell <= r; ++ell) wv.push_back(ev.W(k, 0, ell).at_zero());
    std::vector<std::pair<int, int>> pairs;
    for (int ell = 1; ell <= r; ++ell)
        for (int L = ell + 1; L <= r; ++L) {
            pairs.push_back({ell, L});
            cv.push_back(ev.C(2 * k - 1, 0, ell, L).at_zero());
        }
    auto form_for = [&](const std::vector<Rational>& P) {
        auto dot = [&](const std::vector<Rational>& v) {
            Rational s = 0;
            for (int i = 0; i < d; ++i) s += P[i] * v[i];
            return s;
        };
        RationalMatrix Q(r);
        for (int ell = 0; ell < r; ++ell) Q(ell, ell) = dot(wv[ell]) / 2;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            const Rational h = dot(cv[i]) / 2;
            Q(pairs[i].first - 1, pairs[i].second - 1) = h;
            Q(pairs[i].second - 1, pairs[i].first - 1) = h;
        }
        return Q;
    };
    auto definite = [&](const RationalMatrix& Q) {
        RationalMatrix neg = Q;
        for (auto& x : neg.a) x = -x;
        return positive_definite(Q) || positive_definite(neg);
    };
    // basis vectors first, then small integer combinations
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> coef(-3, 3);
    for (int trial = 0; trial < static_cast<int>(ann.size()) + search; ++trial) {
        std::vector<Rational> P(d, Rational(0));
        if (trial < static_cast<int>(ann.size())) {
            P = ann[trial];
        } else {
            for (const auto& a : ann) {
                const int c = coef(rng);
                for (int i = 0; i < d; ++i) P[i] += c * a[i];
            }
        }
        const RationalMatrix Q = form_for(P);
        if (definite(Q)) {
            cert.P = P;
            cert.Q = Q;
            cert.definite = true;
            return cert;
        }
    }
    return cert;
}

// ---- drift ensemble for the toy system ----

struct ToyDriftSample {
    double x4 = 0, x3 = 0, u1_l2sq = 0, margin = 0;
};

struct ToyDriftResult {
    std::vector<ToyDriftSample> samples;
    double C = 0.5;
    int violations = 0;          // x4 < C ||u_1||^2 - x3^2
    int invariant_violations = 0;  // x4 + x3^2 < 0
    double min_margin = 0;
};

inline ToyDriftResult toy_drift_ensemble(int samples, double T, double umax, double C, std::uint64_t seed,
                                         int N = 2000, double tol = 1e-14) {
    ToyDriftResult res;
    res.C = C;
    res.min_margin = std::numeric_limits<double>::infinity();
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> modes(1, 8);
    std::uniform_real_distribution<double> unif(0.1, 1.0);
    for (int n = 0; n < samples; ++n) {
        Eigen::MatrixXd v(2, N + 1);
        for (int l = 0; l < 2; ++l) {
            Eigen::VectorXd c = random_fourier(T, N, modes(rng), 1.0, rng());
            const double s = sup_norm(c);
            v.row(l) = (s > 0 ? c * (umax * unif(rng) / s) : c).transpose();
        }
        const ControlGrid u(T, v);
        const Eigen::VectorXd x = simulate_toy(u);
        const PrimitiveStack st = iterated_primitives(u, 1);
        ToyDriftSample s;
        s.x4 = x(3);
        s.x3 = x(2);
        for (int l = 0; l < 2; ++l) s.u1_l2sq += std::pow(l2_norm(st.get(1, l), u.dt()), 2);
        s.margin = s.x4 - (C * s.u1_l2sq - s.x3 * s.x3);
        const double scale = tol * std::max(1.0, std::abs(s.x4) + s.x3 * s.x3 + s.u1_l2sq);
        if (s.margin < -scale) ++res.violations;
        if (s.x4 + s.x3 * s.x3 < -scale) ++res.invariant_violations;
        res.min_margin = std::min(res.min_margin, s.margin / std::max(1e-300, s.u1_l2sq));
        res.samples.push_back(s);
    }
    return res;
}

}  // namespace qobs
