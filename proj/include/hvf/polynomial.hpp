#ifndef HVF_POLYNOMIAL_HPP
#define HVF_POLYNOMIAL_HPP

#include "hvf/rational.hpp"

#include <algorithm>
#include <cstddef>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hvf {

using Exponent = std::vector<unsigned>;

inline unsigned total_degree(const Exponent& e)
{
    return std::accumulate(e.begin(), e.end(), 0u);
}

// Descending graded-lex order: higher total degree first, ties broken
// lexicographically with x1 > x2 > ... This is the canonical print order.
struct GrlexGreater {
    bool operator()(const Exponent& a, const Exponent& b) const
    {
        const unsigned da = total_degree(a), db = total_degree(b);
        if (da != db) return da > db;
        return std::lexicographical_compare(b.begin(), b.end(), a.begin(), a.end());
    }
};

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Multivariate polynomial with exact rational coefficients in a fixed number
/// of variables. Zero coefficients are never stored, so structural equality is
/// polynomial equality.
class Polynomial {
public:
    using TermMap = std::map<Exponent, Rational, GrlexGreater>;

    explicit Polynomial(std::size_t dim = 0) : dim_(dim) {}

    static Polynomial constant(std::size_t dim, const Rational& c)
    {
        Polynomial p(dim);
        if (c != 0) p.terms_.emplace(Exponent(dim, 0u), c);
        return p;
    }

    /// The coordinate function x_{axis+1}.
    static Polynomial variable(std::size_t dim, std::size_t axis)
    {
        if (axis >= dim) throw DimensionError("variable index out of range");
        Exponent e(dim, 0u);
        e[axis] = 1;
        Polynomial p(dim);
        p.terms_.emplace(std::move(e), Rational(1));
        return p;
    }

    static Polynomial monomial(Exponent e, const Rational& c)
    {
        Polynomial p(e.size());
        if (c != 0) p.terms_.emplace(std::move(e), c);
        return p;
    }

    std::size_t dim() const { return dim_; }
    const TermMap& terms() const { return terms_; }
    std::size_t term_count() const { return terms_.size(); }
    bool is_zero() const { return terms_.empty(); }

    bool is_constant() const
    {
        return terms_.empty() || (terms_.size() == 1 && hvf::total_degree(terms_.begin()->first) == 0);
    }

    Rational constant_term() const { return coefficient(Exponent(dim_, 0u)); }

    Rational coefficient(const Exponent& e) const
    {
        auto it = terms_.find(e);
        return it == terms_.end() ? Rational(0) : it->second;
    }

    /// Adds c * x^e in place, dropping the term if it cancels.
    void add_term(const Exponent& e, const Rational& c)
    {
        if (e.size() != dim_) throw DimensionError("monomial dimension mismatch");
        if (c == 0) return;
        auto [it, inserted] = terms_.try_emplace(e, c);
        if (!inserted) {
            it->second += c;
            if (it->second == 0) terms_.erase(it);
        }
    }

    unsigned total_degree() const
    {
        unsigned d = 0;
        for (const auto& [e, c] : terms_) d = std::max(d, hvf::total_degree(e));
        return d;
    }

    unsigned degree_in(std::size_t axis) const
    {
        if (axis >= dim_) throw DimensionError("axis out of range");
        unsigned d = 0;
        for (const auto& [e, c] : terms_) d = std::max(d, e[axis]);
        return d;
    }

    Polynomial& operator+=(const Polynomial& q)
    {
        check_dim(q);
        for (const auto& [e, c] : q.terms_) add_term(e, c);
        return *this;
    }

    Polynomial& operator-=(const Polynomial& q)
    {
        check_dim(q);
        for (const auto& [e, c] : q.terms_) add_term(e, -c);
        return *this;
    }

    Polynomial& operator*=(const Rational& s)
    {
        if (s == 0) {
            terms_.clear();
        } else {
            for (auto& [e, c] : terms_) c *= s;
        }
        return *this;
    }

    friend Polynomial operator+(Polynomial p, const Polynomial& q) { return p += q; }
    friend Polynomial operator-(Polynomial p, const Polynomial& q) { return p -= q; }
    friend Polynomial operator*(Polynomial p, const Rational& s) { return p *= s; }
    friend Polynomial operator*(const Rational& s, Polynomial p) { return p *= s; }

    friend Polynomial operator-(Polynomial p)
    {
        for (auto& [e, c] : p.terms_) c = -c;
        return p;
    }

    friend Polynomial operator*(const Polynomial& p, const Polynomial& q)
    {
        p.check_dim(q);
        Polynomial out(p.dim_);
        if (p.is_zero() || q.is_zero()) return out;
        Exponent e(p.dim_);
        for (const auto& [ep, cp] : p.terms_) {
            for (const auto& [eq, cq] : q.terms_) {
                for (std::size_t i = 0; i < p.dim_; ++i) e[i] = ep[i] + eq[i];
                out.add_term(e, cp * cq);
            }
        }
        return out;
    }

    Polynomial& operator*=(const Polynomial& q) { return *this = *this * q; }

    friend bool operator==(const Polynomial& p, const Polynomial& q)
    {
        return p.dim_ == q.dim_ && p.terms_ == q.terms_;
    }

private:
    void check_dim(const Polynomial& q) const
    {
        if (q.dim_ != dim_) throw DimensionError("polynomial dimension mismatch");
    }

    std::size_t dim_;
    TermMap terms_;
};

inline Polynomial add(const Polynomial& p, const Polynomial& q) { return p + q; }
inline Polynomial mul(const Polynomial& p, const Polynomial& q) { return p * q; }

inline Polynomial pow(const Polynomial& p, unsigned k)
{
    Polynomial out = Polynomial::constant(p.dim(), 1);
    Polynomial base = p;
    while (k) {
        if (k & 1u) out *= base;
        k >>= 1u;
        if (k) base *= base;
    }
    return out;
}

/// Exact partial derivative along a 0-based axis.
inline Polynomial partial(const Polynomial& p, std::size_t axis)
{
    if (axis >= p.dim()) throw DimensionError("partial: axis out of range");
    Polynomial out(p.dim());
    for (const auto& [e, c] : p.terms()) {
        if (e[axis] == 0) continue;
        Exponent d = e;
        d[axis] -= 1;
        out.add_term(d, c * e[axis]);
    }
    return out;
}

inline Rational eval(const Polynomial& p, std::span<const Rational> point)
{
    if (point.size() != p.dim()) throw DimensionError("eval: point length mismatch");
    Rational sum(0);
    // Horner is awkward for sparse multivariate terms; cache powers instead.
    std::vector<std::vector<Rational>> powers(p.dim());
    for (const auto& [e, c] : p.terms()) {
        Rational term = c;
        for (std::size_t i = 0; i < e.size() && term != 0; ++i) {
            if (e[i] == 0) continue;
            auto& cache = powers[i];
            if (cache.empty()) cache.push_back(Rational(1));
            while (cache.size() <= e[i]) cache.push_back(cache.back() * point[i]);
            term *= cache[e[i]];
        }
        sum += term;
    }
    return sum;
}

/// Returns p(delta_t(x)) as a polynomial in (x_1..x_n, t), with t the last variable.
inline Polynomial dilate(const Polynomial& p, std::span<const unsigned> weights)
{
    if (weights.size() != p.dim()) throw DimensionError("dilate: weight count mismatch");
    for (unsigned w : weights)
        if (w == 0) throw std::invalid_argument("dilate: weights must be positive");
    Polynomial out(p.dim() + 1);
    for (const auto& [e, c] : p.terms()) {
        Exponent d = e;
        unsigned tdeg = 0;
        for (std::size_t i = 0; i < e.size(); ++i) tdeg += weights[i] * e[i];
        d.push_back(tdeg);
        out.add_term(d, c);
    }
    return out;
}

inline unsigned weighted_degree(const Exponent& e, std::span<const unsigned> weights)
{
    unsigned s = 0;
    for (std::size_t i = 0; i < e.size(); ++i) s += weights[i] * e[i];
    return s;
}

/// True iff every monomial has weighted degree sigma. The zero polynomial is
/// vacuously homogeneous of every degree; callers that care test is_zero().
inline bool is_dt_homogeneous(const Polynomial& p, std::span<const unsigned> weights, long sigma)
{
    if (weights.size() != p.dim()) throw DimensionError("homogeneity: weight count mismatch");
    for (const auto& [e, c] : p.terms())
        if (static_cast<long>(weighted_degree(e, weights)) != sigma) return false;
    return true;
}

/// Substitutes subs[i] for x_{i+1}. All substitutes share one dimension,
/// which becomes the dimension of the result.
inline Polynomial compose(const Polynomial& p, std::span<const Polynomial> subs)
{
    if (subs.size() != p.dim()) throw DimensionError("compose: substitution count mismatch");
    const std::size_t out_dim = subs.empty() ? 0 : subs.front().dim();
    for (const auto& s : subs)
        if (s.dim() != out_dim) throw DimensionError("compose: substitutes differ in dimension");
    Polynomial out(out_dim);
    std::vector<std::vector<Polynomial>> powers(p.dim());
    for (const auto& [e, c] : p.terms()) {
        Polynomial term = Polynomial::constant(out_dim, c);
        for (std::size_t i = 0; i < e.size(); ++i) {
            if (e[i] == 0) continue;
            auto& cache = powers[i];
            if (cache.empty()) cache.push_back(Polynomial::constant(out_dim, 1));
            while (cache.size() <= e[i]) cache.push_back(cache.back() * subs[i]);
            term *= cache[e[i]];
        }
        out += term;
    }
    return out;
}

/// Re-indexes variables into a space of dimension new_dim: x_i becomes
/// variable target[i]. Used to lift polynomials into product spaces.
inline Polynomial embed(const Polynomial& p, std::size_t new_dim, std::span<const std::size_t> target)
{
    if (target.size() != p.dim()) throw DimensionError("embed: target map length mismatch");
    Polynomial out(new_dim);
    for (const auto& [e, c] : p.terms()) {
        Exponent d(new_dim, 0u);
        for (std::size_t i = 0; i < e.size(); ++i) {
            if (target[i] >= new_dim) throw DimensionError("embed: target out of range");
            d[target[i]] += e[i];
        }
        out.add_term(d, c);
    }
    return out;
}

/// Lifts p into new_dim variables keeping x_i at index offset + i.
inline Polynomial embed_shift(const Polynomial& p, std::size_t new_dim, std::size_t offset = 0)
{
    std::vector<std::size_t> target(p.dim());
    std::iota(target.begin(), target.end(), offset);
    return embed(p, new_dim, target);
}

inline std::vector<std::string> default_variable_names(std::size_t dim, const std::string& stem = "x")
{
    std::vector<std::string> names;
    names.reserve(dim);
    for (std::size_t i = 0; i < dim; ++i) names.push_back(stem + std::to_string(i + 1));
    return names;
}

namespace detail {

inline std::string monomial_text(const Exponent& e, std::span<const std::string> names)
{
    std::string out;
    for (std::size_t i = 0; i < e.size(); ++i) {
        if (e[i] == 0) continue;
        if (!out.empty()) out += '*';
        out += names[i];
        if (e[i] > 1) out += '^' + std::to_string(e[i]);
    }
    return out;
}

// Magnitude of one term: `c*m`, `m` when |c| = 1, `c` for constants.
inline std::string term_text(const Exponent& e, const Rational& magnitude, std::span<const std::string> names)
{
    const std::string mono = monomial_text(e, names);
    if (mono.empty()) return to_string(magnitude);
    if (magnitude == 1) return mono;
    return to_string(magnitude) + '*' + mono;
}

} // namespace detail

/// Canonical text form: terms in descending grlex order joined by ` + ` or
/// ` - `, e.g. `x1^2 - 2*x1*x2 + 3/4`. The zero polynomial prints as `0`.
inline std::string to_string(const Polynomial& p, std::span<const std::string> names)
{
    if (names.size() != p.dim()) throw DimensionError("to_string: variable name count mismatch");
    if (p.is_zero()) return "0";
    std::string out;
    bool first = true;
    for (const auto& [e, c] : p.terms()) {
        const bool neg = c < 0;
        const std::string body = detail::term_text(e, abs(c), names);
        if (first) {
            out += neg ? "-" + body : body;
            first = false;
        } else {
            out += neg ? " - " : " + ";
            out += body;
        }
    }
    return out;
}

inline std::string to_string(const Polynomial& p)
{
    const auto names = default_variable_names(p.dim());
    return to_string(p, names);
}

/// Floating-point evaluator for hot loops (lattice sweeps, flows). The exact
/// Polynomial stays the source of truth.
class CompiledPolynomial {
public:
    CompiledPolynomial() = default;

    explicit CompiledPolynomial(const Polynomial& p) : dim_(p.dim())
    {
        for (const auto& [e, c] : p.terms()) {
            Term t;
            t.coef = to_double(c);
            for (std::size_t i = 0; i < e.size(); ++i)
                if (e[i] != 0) t.factors.emplace_back(static_cast<unsigned>(i), e[i]);
            terms_.push_back(std::move(t));
        }
    }

    bool is_zero() const { return terms_.empty(); }

    double operator()(std::span<const double> x) const
    {
        double sum = 0.0;
        for (const auto& t : terms_) {
            double v = t.coef;
            for (const auto& [axis, power] : t.factors) {
                const double b = x[axis];
                switch (power) {
                case 1: v *= b; break;
                case 2: v *= b * b; break;
                case 3: v *= b * b * b; break;
                default: {
                    double acc = 1.0;
                    for (unsigned k = 0; k < power; ++k) acc *= b;
                    v *= acc;
                }
                }
            }
            sum += v;
        }
        return sum;
    }

    std::size_t dim() const { return dim_; }

private:
    struct Term {
        double coef = 0.0;
        std::vector<std::pair<unsigned, unsigned>> factors;
    };
    std::size_t dim_ = 0;
    std::vector<Term> terms_;
};

} // namespace hvf

#endif
