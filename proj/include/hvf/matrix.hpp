#ifndef HVF_MATRIX_HPP
#define HVF_MATRIX_HPP

#include "hvf/polynomial.hpp"

#include <cstdint>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace hvf {

template <class T>
using Matrix = std::vector<std::vector<T>>;

/// Exact quotient p / d; throws if d does not divide p.
inline Polynomial exact_divide(const Polynomial& p, const Polynomial& d)
{
    if (d.is_zero()) throw std::domain_error("exact_divide: division by zero polynomial");
    if (p.dim() != d.dim()) throw DimensionError("exact_divide: dimension mismatch");
    const auto& [lead_e, lead_c] = *d.terms().begin();
    Polynomial quotient(p.dim());
    Polynomial rem = p;
    while (!rem.is_zero()) {
        const auto& [re, rc] = *rem.terms().begin();
        Exponent qe(re.size());
        for (std::size_t i = 0; i < re.size(); ++i) {
            if (re[i] < lead_e[i]) throw std::domain_error("exact_divide: divisor does not divide");
            qe[i] = re[i] - lead_e[i];
        }
        const Polynomial qt = Polynomial::monomial(qe, rc / lead_c);
        quotient += qt;
        rem -= qt * d;
    }
    return quotient;
}

namespace detail {

inline Polynomial cofactor_det(const Matrix<Polynomial>& m, std::size_t row, std::uint32_t used_cols,
                               std::unordered_map<std::uint32_t, Polynomial>& memo)
{
    const std::size_t n = m.size();
    if (row == n) return Polynomial::constant(m[0][0].dim(), 1);
    if (auto it = memo.find(used_cols); it != memo.end()) return it->second;
    Polynomial acc(m[0][0].dim());
    int sign = 1;
    for (std::size_t c = 0; c < n; ++c) {
        if (used_cols & (1u << c)) continue;
        if (!m[row][c].is_zero()) {
            Polynomial minor = cofactor_det(m, row + 1, used_cols | (1u << c), memo);
            if (!minor.is_zero()) {
                Polynomial t = m[row][c] * minor;
                if (sign > 0) acc += t;
                else acc -= t;
            }
        }
        sign = -sign;
    }
    memo.emplace(used_cols, acc);
    return acc;
}

inline Polynomial bareiss_det(Matrix<Polynomial> a)
{
    const std::size_t n = a.size();
    const std::size_t dim = a[0][0].dim();
    Polynomial prev = Polynomial::constant(dim, 1);
    int sign = 1;
    for (std::size_t k = 0; k + 1 < n; ++k) {
        if (a[k][k].is_zero()) {
            std::size_t swap_row = k + 1;
            while (swap_row < n && a[swap_row][k].is_zero()) ++swap_row;
            if (swap_row == n) return Polynomial(dim);
            std::swap(a[k], a[swap_row]);
            sign = -sign;
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            for (std::size_t j = k + 1; j < n; ++j) {
                Polynomial num = a[k][k] * a[i][j] - a[i][k] * a[k][j];
                a[i][j] = exact_divide(num, prev);
            }
        }
        prev = a[k][k];
    }
    Polynomial out = a[n - 1][n - 1];
    return sign > 0 ? out : -out;
}

} // namespace detail

/// Exact determinant of a square polynomial matrix: memoized cofactor
/// expansion up to 5x5, fraction-free Bareiss elimination above.
inline Polynomial poly_det(const Matrix<Polynomial>& m)
{
    const std::size_t n = m.size();
    if (n == 0) throw std::invalid_argument("poly_det: empty matrix");
    for (const auto& row : m)
        if (row.size() != n) throw std::invalid_argument("poly_det: matrix is not square");
    const std::size_t dim = m[0][0].dim();
    for (const auto& row : m)
        for (const auto& e : row)
            if (e.dim() != dim) throw DimensionError("poly_det: entries differ in dimension");
    if (n <= 5) {
        std::unordered_map<std::uint32_t, Polynomial> memo;
        return detail::cofactor_det(m, 0, 0u, memo);
    }
    return detail::bareiss_det(m);
}

/// Rank of a rational matrix by exact Gaussian elimination.
inline std::size_t rational_rank(Matrix<Rational> a)
{
    if (a.empty()) return 0;
    const std::size_t rows = a.size(), cols = a[0].size();
    std::size_t rank = 0;
    for (std::size_t c = 0; c < cols && rank < rows; ++c) {
        std::size_t piv = rank;
        while (piv < rows && a[piv][c] == 0) ++piv;
        if (piv == rows) continue;
        std::swap(a[piv], a[rank]);
        for (std::size_t r = rank + 1; r < rows; ++r) {
            if (a[r][c] == 0) continue;
            const Rational f = a[r][c] / a[rank][c];
            for (std::size_t k = c; k < cols; ++k) a[r][k] -= f * a[rank][k];
        }
        ++rank;
    }
    return rank;
}

/// Incremental row-echelon basis: tracks the span of inserted rational
/// vectors and reports whether each new vector enlarges it.
class RationalSpan {
public:
    explicit RationalSpan(std::size_t dim) : dim_(dim) {}

    bool insert(std::vector<Rational> v)
    {
        if (v.size() != dim_) throw DimensionError("RationalSpan: vector length mismatch");
        for (std::size_t r = 0; r < rows_.size(); ++r) {
            const std::size_t c = pivots_[r];
            if (v[c] == 0) continue;
            const Rational f = v[c] / rows_[r][c];
            for (std::size_t k = 0; k < dim_; ++k) v[k] -= f * rows_[r][k];
        }
        for (std::size_t c = 0; c < dim_; ++c) {
            if (v[c] != 0) {
                rows_.push_back(std::move(v));
                pivots_.push_back(c);
                return true;
            }
        }
        return false;
    }

    std::size_t rank() const { return rows_.size(); }
    bool full() const { return rows_.size() == dim_; }

private:
    std::size_t dim_;
    std::vector<std::vector<Rational>> rows_;
    std::vector<std::size_t> pivots_;
};

} // namespace hvf

#endif
