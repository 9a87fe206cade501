#ifndef HVF_VECTOR_FIELD_HPP
#define HVF_VECTOR_FIELD_HPP

#include "hvf/matrix.hpp"
#include "hvf/parse.hpp"
#include "hvf/polynomial.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace hvf {

/// Y = sum_k b_k(x) d/dx_k with polynomial coefficients.
class VectorField {
public:
    explicit VectorField(std::size_t dim = 0) : coeffs_(dim, Polynomial(dim)), zero_(true) {}

    explicit VectorField(std::vector<Polynomial> coeffs) : coeffs_(std::move(coeffs))
    {
        const std::size_t n = coeffs_.size();
        for (const auto& c : coeffs_)
            if (c.dim() != n) throw DimensionError("vector field coefficient dimension mismatch");
        zero_ = std::all_of(coeffs_.begin(), coeffs_.end(), [](const Polynomial& p) { return p.is_zero(); });
    }

    /// The coordinate field d/dx_{axis+1}.
    static VectorField coordinate(std::size_t dim, std::size_t axis)
    {
        std::vector<Polynomial> c(dim, Polynomial(dim));
        c.at(axis) = Polynomial::constant(dim, 1);
        return VectorField(std::move(c));
    }

    std::size_t dim() const { return coeffs_.size(); }
    const Polynomial& coeff(std::size_t k) const { return coeffs_.at(k); }
    const std::vector<Polynomial>& coeffs() const { return coeffs_; }
    bool is_zero() const { return zero_; }

    /// Yf = sum_k b_k * df/dx_k.
    Polynomial apply(const Polynomial& f) const
    {
        if (f.dim() != dim()) throw DimensionError("vector field applied to polynomial of other dimension");
        Polynomial out(dim());
        for (std::size_t k = 0; k < dim(); ++k) {
            if (coeffs_[k].is_zero()) continue;
            out += coeffs_[k] * partial(f, k);
        }
        return out;
    }

    /// The coefficient vector YI(x) at a rational point.
    std::vector<Rational> at(std::span<const Rational> x) const
    {
        std::vector<Rational> v;
        v.reserve(dim());
        for (const auto& c : coeffs_) v.push_back(eval(c, x));
        return v;
    }

    friend VectorField operator-(const VectorField& y)
    {
        std::vector<Polynomial> c;
        c.reserve(y.dim());
        for (const auto& p : y.coeffs_) c.push_back(-p);
        return VectorField(std::move(c));
    }

    friend VectorField operator+(const VectorField& a, const VectorField& b)
    {
        if (a.dim() != b.dim()) throw DimensionError("vector field dimension mismatch");
        std::vector<Polynomial> c;
        c.reserve(a.dim());
        for (std::size_t k = 0; k < a.dim(); ++k) c.push_back(a.coeffs_[k] + b.coeffs_[k]);
        return VectorField(std::move(c));
    }

    friend bool operator==(const VectorField& a, const VectorField& b) { return a.coeffs_ == b.coeffs_; }

private:
    std::vector<Polynomial> coeffs_;
    bool zero_ = true;
};

/// [Y, Z]_k = sum_i (b_i d_i c_k - c_i d_i b_k).
inline VectorField lie_bracket(const VectorField& y, const VectorField& z)
{
    if (y.dim() != z.dim()) throw DimensionError("lie_bracket: dimension mismatch");
    const std::size_t n = y.dim();
    if (y.is_zero() || z.is_zero()) return VectorField(n);
    std::vector<Polynomial> out;
    out.reserve(n);
    for (std::size_t k = 0; k < n; ++k) out.push_back(y.apply(z.coeff(k)) - z.apply(y.coeff(k)));
    return VectorField(std::move(out));
}

/// A nonzero field is homogeneous of degree sigma iff each nonzero
/// coefficient b_k is a homogeneous polynomial of degree alpha_k - sigma.
inline bool is_dt_homogeneous(const VectorField& y, std::span<const unsigned> weights, long sigma)
{
    if (y.is_zero()) return false;
    for (std::size_t k = 0; k < y.dim(); ++k) {
        const auto& c = y.coeff(k);
        if (c.is_zero()) continue;
        if (!is_dt_homogeneous(c, weights, static_cast<long>(weights[k]) - sigma)) return false;
    }
    return true;
}

/// m polynomial fields on R^n together with the dilation exponents.
struct VectorFieldSystem {
    std::string name;
    std::vector<unsigned> weights;
    std::vector<VectorField> fields;

    VectorFieldSystem() = default;

    VectorFieldSystem(std::string name_, std::vector<unsigned> weights_, std::vector<VectorField> fields_)
        : name(std::move(name_)), weights(std::move(weights_)), fields(std::move(fields_))
    {
        if (fields.empty()) throw std::invalid_argument("system needs at least one field");
        if (weights.empty()) throw std::invalid_argument("system needs dilation exponents");
        for (const auto& f : fields)
            if (f.dim() != weights.size()) throw DimensionError("field dimension differs from weight count");
        for (unsigned w : weights)
            if (w == 0) throw std::invalid_argument("dilation exponents must be positive");
    }

    std::size_t dim() const { return weights.size(); }
    std::size_t field_count() const { return fields.size(); }
    unsigned max_weight() const { return *std::max_element(weights.begin(), weights.end()); }
};

/// Q = sum of the dilation exponents.
inline unsigned homogeneous_dimension(const VectorFieldSystem& sys)
{
    unsigned q = 0;
    for (unsigned w : sys.weights) q += w;
    return q;
}

// ---------------------------------------------------------------------------
// Homogeneity gate: every X_j homogeneous of degree 1 under the dilations.

struct H1Violation {
    std::size_t field = 0; // 0-based
    std::size_t slot = 0;  // 0-based coefficient axis
    std::string monomial;
    unsigned weighted_degree = 0;
    long expected_degree = 0;
};

struct H1Report {
    bool pass = false;
    bool shape_ok = false;         // 1 = alpha_1 <= ... <= alpha_n, n >= 2
    std::vector<bool> field_pass;  // per field
    std::vector<H1Violation> violations;
    std::vector<std::string> notes;
};

inline H1Report check_h1(const VectorFieldSystem& sys)
{
    H1Report rep;
    const auto& w = sys.weights;
    rep.shape_ok = sys.dim() >= 2 && w.front() == 1 && std::is_sorted(w.begin(), w.end());
    if (sys.dim() < 2) rep.notes.push_back("dimension must be at least 2");
    if (w.front() != 1) rep.notes.push_back("alpha_1 must equal 1");
    if (!std::is_sorted(w.begin(), w.end())) rep.notes.push_back("dilation exponents must be non-decreasing");
    const auto names = default_variable_names(sys.dim());
    bool all = true;
    for (std::size_t j = 0; j < sys.field_count(); ++j) {
        bool ok = !sys.fields[j].is_zero();
        if (!ok) rep.notes.push_back("field X" + std::to_string(j + 1) + " is identically zero");
        for (std::size_t k = 0; k < sys.dim(); ++k) {
            const auto& c = sys.fields[j].coeff(k);
            const long expected = static_cast<long>(w[k]) - 1;
            for (const auto& [e, coef] : c.terms()) {
                const unsigned wd = weighted_degree(e, w);
                if (static_cast<long>(wd) != expected) {
                    ok = false;
                    rep.violations.push_back(
                        {j, k, to_string(Polynomial::monomial(e, coef), names), wd, expected});
                }
            }
        }
        rep.field_pass.push_back(ok);
        all = all && ok;
    }
    rep.pass = all && rep.shape_ok;
    return rep;
}

// ---------------------------------------------------------------------------
// Commutators X_J = [X_{j1}, [X_{j2}, ... [X_{j(k-1)}, X_{jk}] ...]].

struct CommutatorEntry {
    std::vector<unsigned> word; // 0-based field indices
    VectorField field;
    unsigned degree = 0;
};

struct CommutatorBasis {
    std::vector<CommutatorEntry> entries;
    std::vector<unsigned> weights;
    std::size_t dim = 0;
    unsigned max_length = 0;
    std::string source_name;
    std::string order = "lexicographic on bracket words";

    std::size_t size() const { return entries.size(); }

    std::map<unsigned, std::size_t> word_counts() const
    {
        std::map<unsigned, std::size_t> out;
        for (const auto& e : entries) ++out[e.degree];
        return out;
    }

    /// Entries per degree after identifying fields equal up to sign.
    std::map<unsigned, std::size_t> canonical_counts() const
    {
        std::map<unsigned, std::vector<const VectorField*>> seen;
        for (const auto& e : entries) {
            auto& bucket = seen[e.degree];
            const VectorField neg = -e.field;
            const bool dup = std::any_of(bucket.begin(), bucket.end(), [&](const VectorField* f) {
                return *f == e.field || *f == neg;
            });
            if (!dup) bucket.push_back(&e.field);
        }
        std::map<unsigned, std::size_t> out;
        for (const auto& [d, b] : seen) out[d] = b.size();
        return out;
    }
};

inline std::string word_to_string(const std::vector<unsigned>& word)
{
    std::string s = "(";
    for (std::size_t i = 0; i < word.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(word[i] + 1);
    }
    return s + ")";
}

class HomogeneityError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// All nonzero right-nested brackets with word length <= max_length
/// (default alpha_n), in lexicographic word order. Identically zero brackets
/// are dropped; +-Y duplicates are kept.
inline CommutatorBasis enumerate_commutators(const VectorFieldSystem& sys, std::optional<unsigned> max_length = {})
{
    CommutatorBasis basis;
    basis.weights = sys.weights;
    basis.dim = sys.dim();
    basis.max_length = max_length.value_or(sys.max_weight());
    basis.source_name = sys.name;
    std::vector<CommutatorEntry> level;
    for (unsigned j = 0; j < sys.field_count(); ++j)
        if (!sys.fields[j].is_zero()) level.push_back({{j}, sys.fields[j], 1});
    for (unsigned len = 1; len <= basis.max_length && !level.empty(); ++len) {
        for (const auto& e : level) {
            if (!is_dt_homogeneous(e.field, sys.weights, len))
                throw HomogeneityError("bracket " + word_to_string(e.word) + " is not homogeneous of degree "
                                       + std::to_string(len));
            basis.entries.push_back(e);
        }
        if (len == basis.max_length) break;
        std::vector<CommutatorEntry> next;
        for (unsigned j = 0; j < sys.field_count(); ++j) {
            for (const auto& e : level) {
                VectorField b = lie_bracket(sys.fields[j], e.field);
                if (b.is_zero()) continue;
                std::vector<unsigned> w{j};
                w.insert(w.end(), e.word.begin(), e.word.end());
                next.push_back({std::move(w), std::move(b), len + 1});
            }
        }
        level = std::move(next);
    }
    return basis;
}

// ---------------------------------------------------------------------------
// Spanning gate: Hoermander condition at 0 and linear independence of X_1..X_m.

struct H2Report {
    bool pass = false;
    std::size_t rank_at_origin = 0;
    bool fields_independent = false;
    std::size_t operator_rank = 0;
    std::vector<std::size_t> spanning_entries; // basis indices forming the certificate
    std::vector<std::vector<Rational>> spanning_vectors;
};

/// Rank of X_1..X_m as linear differential operators: flatten each field
/// into its (slot, monomial) coefficient vector.
inline std::size_t operator_rank(const std::vector<VectorField>& fields)
{
    std::map<std::pair<std::size_t, Exponent>, std::size_t> columns;
    for (const auto& f : fields)
        for (std::size_t k = 0; k < f.dim(); ++k)
            for (const auto& [e, c] : f.coeff(k).terms()) columns.try_emplace({k, e}, columns.size());
    Matrix<Rational> m(fields.size(), std::vector<Rational>(columns.size()));
    for (std::size_t i = 0; i < fields.size(); ++i)
        for (std::size_t k = 0; k < fields[i].dim(); ++k)
            for (const auto& [e, c] : fields[i].coeff(k).terms()) m[i][columns.at({k, e})] = c;
    return columns.empty() ? 0 : rational_rank(std::move(m));
}

inline H2Report check_h2(const VectorFieldSystem& sys, const CommutatorBasis& basis)
{
    H2Report rep;
    const std::size_t n = sys.dim();
    const std::vector<Rational> origin(n, Rational(0));
    RationalSpan span(n);
    for (std::size_t i = 0; i < basis.size() && !span.full(); ++i) {
        auto v = basis.entries[i].field.at(origin);
        if (span.insert(v)) {
            rep.spanning_entries.push_back(i);
            rep.spanning_vectors.push_back(std::move(v));
        }
    }
    rep.rank_at_origin = span.rank();
    rep.operator_rank = operator_rank(sys.fields);
    rep.fields_independent = rep.operator_rank == sys.field_count();
    rep.pass = rep.rank_at_origin == n && rep.fields_independent;
    return rep;
}

inline H2Report check_h2(const VectorFieldSystem& sys) { return check_h2(sys, enumerate_commutators(sys)); }

// ---------------------------------------------------------------------------
// Flags V_1(x) c V_2(x) c ... and the pointwise homogeneous dimension.

struct FlagData {
    std::vector<Rational> point;
    std::vector<std::size_t> nu_j;  // nu_1 .. nu_{max degree}
    std::vector<unsigned> weights;  // w_1(x) .. w_n(x); empty when the flag never spans
    unsigned nu = 0;
    unsigned nonholonomy_degree = 0; // r(x); 0 when the flag never spans
    bool spans = false;
};

inline FlagData flag_at(const CommutatorBasis& basis, std::span<const Rational> point)
{
    if (point.size() != basis.dim) throw DimensionError("flag_at: point dimension mismatch");
    FlagData fd;
    fd.point.assign(point.begin(), point.end());
    RationalSpan span(basis.dim);
    std::size_t idx = 0;
    for (unsigned j = 1; j <= basis.max_length; ++j) {
        for (; idx < basis.size() && basis.entries[idx].degree == j; ++idx) {
            if (span.full()) continue;
            span.insert(basis.entries[idx].field.at(point));
        }
        fd.nu_j.push_back(span.rank());
    }
    std::size_t prev = 0;
    for (std::size_t j = 0; j < fd.nu_j.size(); ++j) {
        const unsigned degree = static_cast<unsigned>(j + 1);
        fd.nu += degree * static_cast<unsigned>(fd.nu_j[j] - prev);
        for (std::size_t i = prev; i < fd.nu_j[j]; ++i) fd.weights.push_back(degree);
        prev = fd.nu_j[j];
        if (fd.nu_j[j] == basis.dim) {
            fd.spans = true;
            fd.nonholonomy_degree = degree;
            break;
        }
    }
    if (!fd.spans) fd.weights.clear();
    return fd;
}

// ---------------------------------------------------------------------------
// System specification file.
//
//   name = martinet
//   dim = 3
//   weights = 1,1,3
//   X1 = d1
//   X2 = d2 + x1^2*d3

inline VectorField parse_vector_field(std::string_view text, std::size_t dim)
{
    auto names = default_variable_names(dim);
    const auto dnames = default_variable_names(dim, "d");
    names.insert(names.end(), dnames.begin(), dnames.end());
    const Polynomial p = parse_polynomial(text, names);
    std::vector<Polynomial> coeffs(dim, Polynomial(dim));
    for (const auto& [e, c] : p.terms()) {
        std::size_t slot = dim;
        for (std::size_t k = 0; k < dim; ++k) {
            if (e[dim + k] == 0) continue;
            if (e[dim + k] != 1 || slot != dim)
                throw ParseError("vector field term is not linear in d1..d" + std::to_string(dim) + ": '"
                                 + std::string(text) + "'");
            slot = k;
        }
        if (slot == dim) throw ParseError("vector field term without a derivation symbol: '" + std::string(text) + "'");
        coeffs[slot].add_term(Exponent(e.begin(), e.begin() + static_cast<long>(dim)), c);
    }
    return VectorField(std::move(coeffs));
}

inline std::string to_string(const VectorField& y)
{
    const auto names = default_variable_names(y.dim());
    std::string out;
    for (std::size_t k = 0; k < y.dim(); ++k) {
        const auto& c = y.coeff(k);
        if (c.is_zero()) continue;
        const std::string d = "d" + std::to_string(k + 1);
        bool neg = false;
        std::string body;
        if (c.term_count() == 1) {
            const auto& [e, coef] = *c.terms().begin();
            neg = coef < 0;
            const Polynomial mag = Polynomial::monomial(e, abs(coef));
            body = (mag == Polynomial::constant(y.dim(), 1)) ? d : to_string(mag, names) + "*" + d;
        } else {
            body = "(" + to_string(c, names) + ")*" + d;
        }
        if (out.empty()) out = neg ? "-" + body : body;
        else out += (neg ? " - " : " + ") + body;
    }
    return out.empty() ? "0" : out;
}

inline std::vector<unsigned> parse_unsigned_list(std::string_view text)
{
    std::vector<unsigned> out;
    for (const auto& tok : split(text, ',')) {
        if (tok.empty()) throw ParseError("empty entry in integer list '" + std::string(text) + "'");
        std::size_t used = 0;
        const unsigned long v = std::stoul(tok, &used);
        if (used != tok.size()) throw ParseError("bad integer '" + tok + "'");
        out.push_back(static_cast<unsigned>(v));
    }
    return out;
}

inline VectorFieldSystem parse_system(std::string_view text)
{
    std::string name;
    std::optional<std::size_t> dim;
    std::vector<unsigned> weights;
    std::map<unsigned, std::string> field_text;
    for (const auto& kv : read_key_value_lines(text)) {
        if (kv.key == "name") {
            name = kv.value;
        } else if (kv.key == "dim") {
            dim = std::stoul(kv.value);
        } else if (kv.key == "weights") {
            weights = parse_unsigned_list(kv.value);
        } else if (kv.key.size() > 1 && kv.key[0] == 'X') {
            const unsigned idx = static_cast<unsigned>(std::stoul(kv.key.substr(1)));
            if (idx == 0 || !field_text.emplace(idx, kv.value).second)
                throw ParseError("line " + std::to_string(kv.line_number) + ": bad or duplicate field " + kv.key);
        } else {
            throw ParseError("line " + std::to_string(kv.line_number) + ": unknown key '" + kv.key + "'");
        }
    }
    if (!dim) throw ParseError("system file lacks 'dim'");
    if (weights.size() != *dim) throw ParseError("'weights' must list exactly dim entries");
    std::vector<VectorField> fields;
    unsigned expect = 1;
    for (const auto& [idx, txt] : field_text) {
        if (idx != expect++) throw ParseError("fields must be numbered X1..Xm without gaps");
        fields.push_back(parse_vector_field(txt, *dim));
    }
    return VectorFieldSystem(name, weights, std::move(fields));
}

inline std::string to_string(const VectorFieldSystem& sys)
{
    std::ostringstream os;
    os << "name = " << sys.name << "\n";
    os << "dim = " << sys.dim() << "\n";
    os << "weights = ";
    for (std::size_t i = 0; i < sys.weights.size(); ++i) os << (i ? "," : "") << sys.weights[i];
    os << "\n";
    for (std::size_t j = 0; j < sys.field_count(); ++j) os << "X" << j + 1 << " = " << to_string(sys.fields[j]) << "\n";
    return os.str();
}

inline std::string read_text_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline VectorFieldSystem load_system(const std::string& path) { return parse_system(read_text_file(path)); }

} // namespace hvf

#endif
