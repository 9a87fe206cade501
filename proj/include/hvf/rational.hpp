#ifndef HVF_RATIONAL_HPP
#define HVF_RATIONAL_HPP

#include <gmpxx.h>

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>

namespace hvf {

// Exact rational in lowest terms with positive denominator. GMP keeps the
// canonical form after every arithmetic operation; only construction from
// raw parts needs an explicit canonicalize().
using Rational = mpq_class;
using BigInt = mpz_class;

inline Rational make_rational(long num, long den = 1)
{
    if (den == 0) throw std::domain_error("rational with zero denominator");
    Rational r(num, den);
    r.canonicalize();
    return r;
}

/// Parses `p`, `-p` or `p/q` with decimal integers of any length.
inline Rational parse_rational(std::string_view text)
{
    std::string s(text);
    if (s.empty()) throw std::invalid_argument("empty rational literal");
    Rational r;
    if (r.set_str(s, 10) != 0) throw std::invalid_argument("bad rational literal: " + s);
    if (r.get_den() == 0) throw std::domain_error("rational with zero denominator: " + s);
    r.canonicalize();
    return r;
}

inline std::string to_string(const Rational& r) { return r.get_str(10); }

inline double to_double(const Rational& r) { return r.get_d(); }

inline Rational abs(const Rational& r) { return r < 0 ? Rational(-r) : r; }

inline Rational pow(const Rational& base, unsigned exponent)
{
    Rational out(1);
    mpz_pow_ui(out.get_num_mpz_t(), base.get_num_mpz_t(), exponent);
    mpz_pow_ui(out.get_den_mpz_t(), base.get_den_mpz_t(), exponent);
    out.canonicalize();
    return out;
}

/// Last continued-fraction convergent of `value` whose denominator is <= max_den.
inline Rational snap_to_rational(double value, std::uint64_t max_den = 1ULL << 16)
{
    if (!std::isfinite(value)) throw std::domain_error("cannot snap a non-finite value");
    const bool neg = value < 0;
    double x = std::fabs(value);
    BigInt p0 = 0, q0 = 1, p1 = 1, q1 = 0;
    double frac = x;
    for (int iter = 0; iter < 64; ++iter) {
        double a = std::floor(frac);
        BigInt ai(a);
        BigInt p2 = ai * p1 + p0;
        BigInt q2 = ai * q1 + q0;
        if (q2 > BigInt(static_cast<double>(max_den))) break;
        p0 = p1; q0 = q1; p1 = p2; q1 = q2;
        double rem = frac - a;
        if (rem < 1e-15) break;
        frac = 1.0 / rem;
        if (frac > 1e15) break;
    }
    if (q1 == 0) return Rational(0);
    Rational r(p1, q1);
    r.canonicalize();
    return neg ? Rational(-r) : r;
}

} // namespace hvf

#endif
