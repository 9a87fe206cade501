#ifndef HVF_TEST_UTIL_HPP
#define HVF_TEST_UTIL_HPP

#include "hvf/hvf.hpp"

#include <random>
#include <string>
#include <vector>

namespace hvf::test {

inline std::string fixture(const std::string& name) { return std::string(HVF_FIXTURE_DIR) + "/" + name; }

inline VectorFieldSystem system(const std::string& name) { return load_system(fixture(name + ".vf")); }

inline Polynomial poly(const std::string& text, std::size_t dim) { return parse_polynomial(text, dim); }

// Small random rationals and polynomials for property tests.
struct Random {
    std::mt19937_64 rng;
    explicit Random(std::uint64_t seed) : rng(seed) {}

    long integer(long lo, long hi) { return std::uniform_int_distribution<long>(lo, hi)(rng); }

    Rational rational(long range = 6, long max_den = 5) { return make_rational(integer(-range, range), integer(1, max_den)); }

    std::vector<Rational> point(std::size_t n)
    {
        std::vector<Rational> x;
        for (std::size_t i = 0; i < n; ++i) x.push_back(rational());
        return x;
    }

    Polynomial polynomial(std::size_t n, unsigned max_degree = 3, std::size_t terms = 4)
    {
        Polynomial p(n);
        for (std::size_t t = 0; t < terms; ++t) {
            Exponent e(n, 0u);
            unsigned left = static_cast<unsigned>(integer(0, max_degree));
            for (std::size_t i = 0; i < n && left; ++i) {
                const auto k = static_cast<unsigned>(integer(0, left));
                e[i] = k;
                left -= k;
            }
            p += Polynomial::monomial(e, rational());
        }
        return p;
    }

    VectorField field(std::size_t n, unsigned max_degree = 2)
    {
        std::vector<Polynomial> c;
        for (std::size_t k = 0; k < n; ++k) c.push_back(polynomial(n, max_degree, 2));
        return VectorField(std::move(c));
    }
};

} // namespace hvf::test

#endif
