#ifndef HVF_AUTOMORPH_HPP
#define HVF_AUTOMORPH_HPP

#include "hvf/matrix.hpp"
#include "hvf/nsw.hpp"
#include "hvf/parse.hpp"
#include "hvf/vector_field.hpp"

#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace hvf {

/// x -> (A_1(x), ..., A_n(x)) with polynomial components.
struct PolynomialMap {
    std::vector<Polynomial> components;
    std::optional<std::vector<Polynomial>> inverse;

    PolynomialMap() = default;
    explicit PolynomialMap(std::vector<Polynomial> comps, std::optional<std::vector<Polynomial>> inv = {})
        : components(std::move(comps)), inverse(std::move(inv))
    {
        const std::size_t n = components.size();
        for (const auto& c : components)
            if (c.dim() != n) throw DimensionError("map components must be polynomials in n variables");
        if (inverse) {
            if (inverse->size() != n) throw DimensionError("inverse map has the wrong number of components");
            for (const auto& c : *inverse)
                if (c.dim() != n) throw DimensionError("inverse map components have the wrong dimension");
        }
    }

    static PolynomialMap identity(std::size_t n)
    {
        std::vector<Polynomial> c;
        for (std::size_t i = 0; i < n; ++i) c.push_back(Polynomial::variable(n, i));
        return PolynomialMap(c, c);
    }

    std::size_t dim() const { return components.size(); }

    std::vector<Rational> operator()(std::span<const Rational> x) const
    {
        std::vector<Rational> out;
        out.reserve(components.size());
        for (const auto& c : components) out.push_back(eval(c, x));
        return out;
    }
};

/// (a o b)(x) = a(b(x)).
inline PolynomialMap compose_maps(const PolynomialMap& a, const PolynomialMap& b)
{
    if (a.dim() != b.dim()) throw DimensionError("compose_maps: dimension mismatch");
    std::vector<Polynomial> out;
    for (const auto& c : a.components) out.push_back(compose(c, b.components));
    return PolynomialMap(std::move(out));
}

/// True when the declared inverse composes to the identity on both sides.
inline bool inverse_is_valid(const PolynomialMap& a)
{
    if (!a.inverse) return false;
    const PolynomialMap inv(*a.inverse);
    const PolynomialMap id = PolynomialMap::identity(a.dim());
    return compose_maps(a, inv).components == id.components && compose_maps(inv, a).components == id.components;
}

struct AutomorphismCertificate {
    // residual[i][k]: k-th component of J_A * X_i - X_i o A
    std::vector<std::vector<Polynomial>> residuals;
    std::vector<bool> field_pass;
    Polynomial jacobian_det;
    bool unimodular = false;
    bool pass = false;
    std::optional<bool> inverse_ok;
};

/// Certifies a map whose components live in params + n variables, the last n
/// being x. The params act as formal constants, so a family T(w, .) is
/// certified for all w at once. With params = 0 this is the plain check.
inline AutomorphismCertificate certify_parametric(const VectorFieldSystem& sys, const std::vector<Polynomial>& comps,
                                                  std::size_t params)
{
    const std::size_t n = sys.dim();
    const std::size_t total = params + n;
    if (comps.size() != n) throw DimensionError("certify: map must have n components");
    for (const auto& c : comps)
        if (c.dim() != total) throw DimensionError("certify: map component dimension mismatch");

    Matrix<Polynomial> jac(n, std::vector<Polynomial>(n, Polynomial(total)));
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t j = 0; j < n; ++j) jac[k][j] = partial(comps[k], params + j);

    AutomorphismCertificate cert;
    cert.jacobian_det = poly_det(jac);
    cert.unimodular = cert.jacobian_det.is_constant() && abs(cert.jacobian_det.constant_term()) == 1;
    bool all = true;
    for (const auto& field : sys.fields) {
        std::vector<Polynomial> res;
        bool ok = true;
        for (std::size_t k = 0; k < n; ++k) {
            Polynomial r(total);
            for (std::size_t j = 0; j < n; ++j) {
                if (field.coeff(j).is_zero() || jac[k][j].is_zero()) continue;
                r += jac[k][j] * embed_shift(field.coeff(j), total, params);
            }
            r -= compose(field.coeff(k), comps);
            ok = ok && r.is_zero();
            res.push_back(std::move(r));
        }
        cert.residuals.push_back(std::move(res));
        cert.field_pass.push_back(ok);
        all = all && ok;
    }
    cert.pass = all && cert.unimodular;
    return cert;
}

inline AutomorphismCertificate certify(const VectorFieldSystem& sys, const PolynomialMap& map)
{
    auto cert = certify_parametric(sys, map.components, 0);
    if (map.inverse) cert.inverse_ok = inverse_is_valid(map);
    return cert;
}

struct TranslationReport {
    std::vector<std::size_t> directions; // 0-based axes
    std::vector<std::size_t> top_weight_axes;
    bool inclusion_holds = true;         // {j : alpha_j = alpha_n} is contained in directions
};

inline TranslationReport translation_directions(const VectorFieldSystem& sys)
{
    TranslationReport rep;
    const unsigned top = sys.max_weight();
    for (std::size_t j = 0; j < sys.dim(); ++j) {
        bool free = true;
        for (const auto& f : sys.fields)
            for (std::size_t k = 0; k < sys.dim() && free; ++k) free = f.coeff(k).degree_in(j) == 0;
        if (free) rep.directions.push_back(j);
        if (sys.weights[j] == top) {
            rep.top_weight_axes.push_back(j);
            if (!free) rep.inclusion_holds = false;
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Transitive families T(w, x) on a candidate level set H.
//
// Family file:
//   name = example6
//   dim = 3
//   hparams = 2                  H is parametrized by s1..s_hparams
//   H = 0, s1, s2                the parametrization of H, one entry per axis
//   h_equation = x1              H as a common zero set (repeatable, optional)
//   T1 = x1                      components in w1..wn, x1..xn
//   T2 = x2 + w2
//   W2 = q2 - p2                 witness w(p, q) in p1..pn, q1..qn (missing = 0)

struct TransitiveFamily {
    std::string name;
    std::size_t n = 0;
    std::size_t hparams = 0;
    std::vector<Polynomial> h_param;     // n entries in hparams variables
    std::vector<Polynomial> h_equations; // in n variables
    std::vector<Polynomial> map;         // n entries in 2n variables (w, x)
    std::vector<Polynomial> witness;     // n entries in 2n variables (p, q)

    bool in_h(std::span<const Rational> x) const
    {
        for (const auto& e : h_equations)
            if (eval(e, x) != 0) return false;
        return true;
    }

    std::vector<Rational> h_point(std::span<const Rational> s) const
    {
        std::vector<Rational> out;
        for (const auto& c : h_param) out.push_back(eval(c, s));
        return out;
    }

    std::vector<Rational> apply(std::span<const Rational> w, std::span<const Rational> x) const
    {
        std::vector<Rational> wx(w.begin(), w.end());
        wx.insert(wx.end(), x.begin(), x.end());
        std::vector<Rational> out;
        for (const auto& c : map) out.push_back(eval(c, wx));
        return out;
    }

    std::vector<Rational> solve(std::span<const Rational> p, std::span<const Rational> q) const
    {
        std::vector<Rational> pq(p.begin(), p.end());
        pq.insert(pq.end(), q.begin(), q.end());
        std::vector<Rational> out;
        for (const auto& c : witness) out.push_back(eval(c, pq));
        return out;
    }

    /// T(w, .) for a fixed w as an ordinary polynomial map.
    PolynomialMap at(std::span<const Rational> w) const
    {
        std::vector<Polynomial> subs;
        for (std::size_t i = 0; i < n; ++i) subs.push_back(Polynomial::constant(n, w[i]));
        for (std::size_t i = 0; i < n; ++i) subs.push_back(Polynomial::variable(n, i));
        std::vector<Polynomial> comps;
        for (const auto& c : map) comps.push_back(compose(c, subs));
        return PolynomialMap(std::move(comps));
    }

    /// Lifts the T components into (s, x) variables by w = H(s).
    std::vector<Polynomial> restricted_to_h() const
    {
        const std::size_t total = hparams + n;
        std::vector<Polynomial> subs;
        for (const auto& c : h_param) subs.push_back(embed_shift(c, total, 0));
        for (std::size_t i = 0; i < n; ++i) subs.push_back(Polynomial::variable(total, hparams + i));
        std::vector<Polynomial> out;
        for (const auto& c : map) out.push_back(compose(c, subs));
        return out;
    }
};

inline TransitiveFamily parse_family(std::string_view text)
{
    TransitiveFamily fam;
    std::optional<std::size_t> dim;
    std::string h_text;
    std::vector<std::string> eq_text;
    std::map<unsigned, std::string> t_text, w_text;
    for (const auto& kv : read_key_value_lines(text)) {
        const std::string where = "family line " + std::to_string(kv.line_number);
        if (kv.key == "name") fam.name = kv.value;
        else if (kv.key == "dim") dim = std::stoul(kv.value);
        else if (kv.key == "hparams") fam.hparams = std::stoul(kv.value);
        else if (kv.key == "H") h_text = kv.value;
        else if (kv.key == "h_equation") eq_text.push_back(kv.value);
        else if (kv.key.size() > 1 && (kv.key[0] == 'T' || kv.key[0] == 'W')) {
            const unsigned idx = static_cast<unsigned>(std::stoul(kv.key.substr(1)));
            auto& target = kv.key[0] == 'T' ? t_text : w_text;
            if (idx == 0 || !target.emplace(idx, kv.value).second) throw ParseError(where + ": bad or duplicate " + kv.key);
        } else {
            throw ParseError(where + ": unknown key '" + kv.key + "'");
        }
    }
    if (!dim) throw ParseError("family file lacks 'dim'");
    const std::size_t n = fam.n = *dim;
    const auto s_names = default_variable_names(fam.hparams, "s");
    if (h_text.empty()) {
        // H = R^n, parametrized by itself
        fam.hparams = n;
        for (std::size_t i = 0; i < n; ++i) fam.h_param.push_back(Polynomial::variable(n, i));
    } else {
        for (const auto& tok : split(h_text, ',')) fam.h_param.push_back(parse_polynomial(tok, s_names));
        if (fam.h_param.size() != n) throw ParseError("'H' must list one entry per axis");
    }
    const auto x_names = default_variable_names(n);
    for (const auto& e : eq_text) fam.h_equations.push_back(parse_polynomial(e, x_names));

    auto wx = default_variable_names(n, "w");
    for (const auto& s : x_names) wx.push_back(s);
    auto pq = default_variable_names(n, "p");
    for (const auto& s : default_variable_names(n, "q")) pq.push_back(s);
    for (unsigned i = 1; i <= n; ++i) {
        auto it = t_text.find(i);
        if (it == t_text.end()) throw ParseError("family lacks component T" + std::to_string(i));
        fam.map.push_back(parse_polynomial(it->second, wx));
        auto jt = w_text.find(i);
        fam.witness.push_back(jt == w_text.end() ? Polynomial(2 * n) : parse_polynomial(jt->second, pq));
    }
    if (t_text.size() != n || (!w_text.empty() && w_text.rbegin()->first > n))
        throw ParseError("family component index out of range");
    return fam;
}

inline TransitiveFamily load_family(const std::string& path) { return parse_family(read_text_file(path)); }

/// Random points of H through its parametrization, small rational entries.
inline std::vector<std::vector<Rational>> sample_h(const TransitiveFamily& fam, std::size_t count, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<long> num(-12, 12);
    std::uniform_int_distribution<long> den(1, 5);
    std::vector<std::vector<Rational>> out;
    for (std::size_t c = 0; c < count; ++c) {
        std::vector<Rational> s;
        for (std::size_t i = 0; i < fam.hparams; ++i) s.push_back(make_rational(num(rng), den(rng)));
        out.push_back(fam.h_point(s));
    }
    return out;
}

struct FamilyPairResult {
    std::vector<Rational> p, q, w;
    bool p_in_h = false, q_in_h = false, w_in_h = false;
    bool maps_p_to_q = false;
};

struct FamilyReport {
    bool identity_at_zero = false;   // T(w, 0) = w for w in H
    AutomorphismCertificate certificate; // T(H(s), x) in (s, x) variables
    std::vector<FamilyPairResult> pairs;
    bool pairs_pass = true;
    bool pass = false;
    std::vector<std::string> failures;
};

/// Checks a family on its parametrized H: T(H(s),0) = H(s) identically, T(H(s), .)
/// certified as a polynomial identity in (s, x), and T(w(p,q), p) = q exactly
/// at each sample pair. Sample membership in H is decided by nu(x) = Q.
inline FamilyReport verify_transitive_family(const VectorFieldSystem& sys, const NSWPolynomial& nsw,
                                             const TransitiveFamily& fam,
                                             const std::vector<std::pair<std::vector<Rational>, std::vector<Rational>>>& pairs)
{
    if (fam.n != sys.dim()) throw DimensionError("family dimension differs from the system");
    FamilyReport rep;
    const std::size_t n = fam.n;

    // T(w, 0) = w for w in H: T(H(s), 0) = H(s) as polynomials in s
    const auto lifted = fam.restricted_to_h();
    std::vector<Polynomial> at_zero_subs;
    for (std::size_t i = 0; i < fam.hparams; ++i) at_zero_subs.push_back(Polynomial::variable(fam.hparams, i));
    for (std::size_t i = 0; i < n; ++i) at_zero_subs.push_back(Polynomial(fam.hparams));
    rep.identity_at_zero = true;
    for (std::size_t i = 0; i < n; ++i)
        if (!(compose(lifted[i], at_zero_subs) == fam.h_param[i])) rep.identity_at_zero = false;
    if (!rep.identity_at_zero) rep.failures.push_back("T(w,0) != w on H");

    rep.certificate = certify_parametric(sys, fam.restricted_to_h(), fam.hparams);
    if (!rep.certificate.pass) rep.failures.push_back("T(w,.) is not a volume-preserving automorphism on H");

    for (const auto& [p, q] : pairs) {
        FamilyPairResult r;
        r.p = p;
        r.q = q;
        r.p_in_h = pointwise_nu(nsw, p) == nsw.Q;
        r.q_in_h = pointwise_nu(nsw, q) == nsw.Q;
        r.w = fam.solve(p, q);
        r.w_in_h = pointwise_nu(nsw, r.w) == nsw.Q;
        r.maps_p_to_q = fam.apply(r.w, p) == q;
        if (!(r.p_in_h && r.q_in_h)) rep.failures.push_back("sample pair not in H");
        if (!r.w_in_h) rep.failures.push_back("witness w(p,q) leaves H");
        if (!r.maps_p_to_q) rep.failures.push_back("T(w(p,q), p) != q");
        const bool ok = r.p_in_h && r.q_in_h && r.w_in_h && r.maps_p_to_q;
        rep.pairs_pass = rep.pairs_pass && ok;
        rep.pairs.push_back(std::move(r));
    }
    rep.pass = rep.identity_at_zero && rep.certificate.pass && rep.pairs_pass;
    return rep;
}

} // namespace hvf

#endif
