#ifndef HVF_NSW_HPP
#define HVF_NSW_HPP

#include "hvf/domain.hpp"
#include "hvf/matrix.hpp"
#include "hvf/vector_field.hpp"

#include "json.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hvf {

class BudgetExceeded : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One distinct determinant lambda_I standing for `weight` worth of ordered
/// n-tuples: the ordered-sum sum_I |lambda_I(x)| over those tuples equals
/// weight * |lambda(x)| exactly.
struct LambdaEntry {
    Polynomial lambda;
    Rational weight;
    unsigned degree = 0;                  // d(I)
    std::vector<std::size_t> tuple;       // basis indices of one representative tuple
    std::uint64_t ordered_tuples = 0;     // ordered n-tuples folded into this entry
};

/// Lambda(x, r) = sum_{k=n}^{Q} f_k(x) r^k with f_k(x) = sum_{d(I)=k} |lambda_I(x)|.
struct NSWPolynomial {
    std::size_t n = 0;
    unsigned Q = 0;
    std::vector<unsigned> weights;
    std::map<unsigned, std::vector<LambdaEntry>> slots;
    std::uint64_t ordered_tuples_total = 0; // q^n
    std::uint64_t nonzero_ordered_tuples = 0;
    std::uint64_t determinants_evaluated = 0;
    std::size_t field_classes = 0;

    std::size_t entry_count() const
    {
        std::size_t c = 0;
        for (const auto& [k, v] : slots) c += v.size();
        return c;
    }
};

struct NSWOptions {
    std::uint64_t max_combinations = 2'000'000;
    bool allow_over_budget = false;
};

namespace detail {

// Basis entries grouped into classes of fields that are rational multiples
// of one normalized representative.
struct FieldClass {
    VectorField rep;
    unsigned degree = 0;
    Rational abs_scale_sum; // sum over members of |s| with member = s * rep
    std::size_t members = 0;
    std::size_t first_index = 0;
};

inline std::pair<VectorField, Rational> normalize_field(const VectorField& f)
{
    for (std::size_t k = 0; k < f.dim(); ++k) {
        const auto& c = f.coeff(k);
        if (c.is_zero()) continue;
        const Rational lead = c.terms().begin()->second;
        std::vector<Polynomial> out;
        out.reserve(f.dim());
        for (const auto& p : f.coeffs()) out.push_back(p * (Rational(1) / lead));
        return {VectorField(std::move(out)), lead};
    }
    throw std::logic_error("normalize_field: zero field");
}

inline std::vector<FieldClass> classify(const CommutatorBasis& basis)
{
    std::vector<FieldClass> classes;
    for (std::size_t i = 0; i < basis.size(); ++i) {
        const auto& e = basis.entries[i];
        auto [rep, scale] = normalize_field(e.field);
        auto it = std::find_if(classes.begin(), classes.end(),
                               [&](const FieldClass& c) { return c.degree == e.degree && c.rep == rep; });
        if (it == classes.end()) {
            classes.push_back({std::move(rep), e.degree, abs(scale), 1, i});
        } else {
            it->abs_scale_sum += abs(scale);
            ++it->members;
        }
    }
    std::stable_sort(classes.begin(), classes.end(),
                     [](const FieldClass& a, const FieldClass& b) { return a.degree < b.degree; });
    return classes;
}

inline std::uint64_t saturating_mul(std::uint64_t a, std::uint64_t b)
{
    if (a != 0 && b > UINT64_MAX / a) return UINT64_MAX;
    return a * b;
}

inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k)
{
    if (k > n) return 0;
    std::uint64_t r = 1;
    for (std::uint64_t i = 1; i <= k; ++i) {
        const std::uint64_t num = n - k + i;
        if (r > UINT64_MAX / num) return UINT64_MAX;
        r = r * num / i;
    }
    return r;
}

} // namespace detail

/// Builds every f_k of the Nagel-Stein-Wainger polynomial from a commutator
/// basis. Ordered tuples are folded exactly: permutations of one index set
/// share |det|, repeated or proportional fields give zero, and fields that
/// are rational multiples of each other share a determinant up to the
/// product of their scales.
inline NSWPolynomial build_nsw(const CommutatorBasis& basis, const NSWOptions& opt = {})
{
    NSWPolynomial nsw;
    nsw.n = basis.dim;
    nsw.weights = basis.weights;
    for (unsigned w : basis.weights) nsw.Q += w;
    const std::size_t n = basis.dim;
    std::uint64_t total = 1;
    for (std::size_t i = 0; i < n; ++i) total = detail::saturating_mul(total, basis.size());
    nsw.ordered_tuples_total = total;

    const auto classes = detail::classify(basis);
    nsw.field_classes = classes.size();
    const std::uint64_t combos = detail::binomial(classes.size(), n);
    if (combos > opt.max_combinations && !opt.allow_over_budget)
        throw BudgetExceeded("NSW build needs " + std::to_string(combos) + " determinants (cap "
                             + std::to_string(opt.max_combinations) + "); pass an explicit override");

    std::uint64_t n_factorial = 1;
    for (std::size_t i = 2; i <= n; ++i) n_factorial *= i;

    std::vector<std::size_t> chosen;
    std::function<void(std::size_t, unsigned)> dfs = [&](std::size_t start, unsigned degree_sum) {
        if (chosen.size() == n) {
            Matrix<Polynomial> m;
            m.reserve(n);
            for (std::size_t idx : chosen) m.push_back(classes[idx].rep.coeffs());
            ++nsw.determinants_evaluated;
            Polynomial det = poly_det(m);
            if (det.is_zero()) return;
            Rational weight(static_cast<unsigned long>(n_factorial));
            std::uint64_t ordered = n_factorial;
            std::vector<std::size_t> tuple;
            for (std::size_t idx : chosen) {
                weight *= classes[idx].abs_scale_sum;
                ordered = detail::saturating_mul(ordered, classes[idx].members);
                tuple.push_back(classes[idx].first_index);
            }
            nsw.nonzero_ordered_tuples += ordered;
            nsw.slots[degree_sum].push_back({std::move(det), weight, degree_sum, std::move(tuple), ordered});
            return;
        }
        const std::size_t need = n - chosen.size();
        for (std::size_t i = start; i + need <= classes.size(); ++i) {
            unsigned lower = degree_sum;
            for (std::size_t k = 0; k < need; ++k) lower += classes[i + k].degree;
            if (lower > nsw.Q) break; // nonzero lambda_I forces d(I) <= Q
            chosen.push_back(i);
            dfs(i + 1, degree_sum + classes[i].degree);
            chosen.pop_back();
        }
    };
    dfs(0, 0);
    return nsw;
}

inline Rational eval_f(const NSWPolynomial& nsw, unsigned k, std::span<const Rational> x)
{
    Rational s(0);
    auto it = nsw.slots.find(k);
    if (it == nsw.slots.end()) return s;
    for (const auto& e : it->second) s += e.weight * abs(eval(e.lambda, x));
    return s;
}

/// Exact Lambda(x, r) for rational x and r > 0.
inline Rational eval_lambda(const NSWPolynomial& nsw, std::span<const Rational> x, const Rational& r)
{
    if (!(r > 0)) throw std::domain_error("eval_lambda: r must be positive");
    if (x.size() != nsw.n) throw DimensionError("eval_lambda: point dimension mismatch");
    Rational sum(0);
    for (const auto& [k, entries] : nsw.slots) {
        const Rational f = eval_f(nsw, k, x);
        if (f != 0) sum += f * pow(r, k);
    }
    return sum;
}

/// nu(x) = min { d(I) : lambda_I(x) != 0 }, decided exactly.
inline unsigned pointwise_nu(const NSWPolynomial& nsw, std::span<const Rational> x)
{
    if (x.size() != nsw.n) throw DimensionError("pointwise_nu: point dimension mismatch");
    for (const auto& [k, entries] : nsw.slots)
        for (const auto& e : entries)
            if (eval(e.lambda, x) != 0) return k;
    throw std::logic_error("pointwise_nu: every lambda_I vanishes (Hoermander condition fails)");
}

/// Double-precision Lambda for sweeps over many (x, r); entries are compiled once.
class LambdaEvaluator {
public:
    explicit LambdaEvaluator(const NSWPolynomial& nsw)
    {
        for (const auto& [k, entries] : nsw.slots) {
            Slot s;
            s.degree = k;
            for (const auto& e : entries) s.terms.emplace_back(to_double(e.weight), CompiledPolynomial(e.lambda));
            slots_.push_back(std::move(s));
        }
    }

    std::vector<std::pair<unsigned, double>> coefficients(std::span<const double> x) const
    {
        std::vector<std::pair<unsigned, double>> out;
        for (const auto& s : slots_) {
            double f = 0;
            for (const auto& [w, p] : s.terms) f += w * std::fabs(p(x));
            out.emplace_back(s.degree, f);
        }
        return out;
    }

    double operator()(std::span<const double> x, double r) const
    {
        double sum = 0;
        for (const auto& [k, f] : coefficients(x)) sum += f * std::pow(r, static_cast<double>(k));
        return sum;
    }

private:
    struct Slot {
        unsigned degree = 0;
        std::vector<std::pair<double, CompiledPolynomial>> terms;
    };
    std::vector<Slot> slots_;
};

struct NuTildeCertificate {
    unsigned value = 0;            // max of nu over the closure samples (lower bound for nu~)
    std::vector<Rational> argmax;
    std::size_t samples_checked = 0;
    bool is_lower_bound = true;
};

inline NuTildeCertificate nu_tilde(const NSWPolynomial& nsw, const DomainSpec& domain)
{
    if (domain.samples.empty()) throw std::invalid_argument("nu_tilde: empty sample set");
    NuTildeCertificate cert;
    for (const auto& s : domain.samples) {
        const unsigned v = pointwise_nu(nsw, s.point);
        if (cert.samples_checked == 0 || v > cert.value) {
            cert.value = v;
            cert.argmax = s.point;
        }
        ++cert.samples_checked;
    }
    return cert;
}

struct LevelSetCounterexample {
    std::vector<Rational> point;
    unsigned nu = 0;
    bool candidate = false;
};

struct LevelSetReport {
    bool pass = true;
    std::size_t samples = 0;
    std::size_t in_level_set = 0;
    std::vector<LevelSetCounterexample> counterexamples;
};

/// Checks nu(x) = Q  <=>  candidate(x) on every sample.
inline LevelSetReport level_set_probe(const NSWPolynomial& nsw,
                                      const std::function<bool(std::span<const Rational>)>& candidate,
                                      const std::vector<std::vector<Rational>>& samples)
{
    LevelSetReport rep;
    for (const auto& x : samples) {
        const unsigned v = pointwise_nu(nsw, x);
        const bool in_h = v == nsw.Q;
        const bool cand = candidate(x);
        ++rep.samples;
        if (in_h) ++rep.in_level_set;
        if (in_h != cand) {
            rep.pass = false;
            rep.counterexamples.push_back({x, v, cand});
        }
    }
    return rep;
}

struct MetivierReport {
    bool candidate = true; // nu == Q at every sample: evidence for H = R^n
    std::optional<std::vector<Rational>> witness;
    unsigned witness_nu = 0;
};

inline MetivierReport metivier_report(const NSWPolynomial& nsw, const std::vector<std::vector<Rational>>& samples)
{
    MetivierReport rep;
    for (const auto& x : samples) {
        const unsigned v = pointwise_nu(nsw, x);
        if (v != nsw.Q) {
            rep.candidate = false;
            rep.witness = x;
            rep.witness_nu = v;
            break;
        }
    }
    return rep;
}

inline nlohmann::json nsw_to_json(const NSWPolynomial& nsw)
{
    const auto names = default_variable_names(nsw.n);
    nlohmann::json slots = nlohmann::json::array();
    for (const auto& [k, entries] : nsw.slots) {
        nlohmann::json list = nlohmann::json::array();
        for (const auto& e : entries) {
            nlohmann::json tuple = nlohmann::json::array();
            for (auto i : e.tuple) tuple.push_back(i + 1);
            list.push_back({{"lambda", to_string(e.lambda, names)},
                            {"weight", to_string(e.weight)},
                            {"ordered_tuples", e.ordered_tuples},
                            {"representative_tuple", tuple}});
        }
        slots.push_back({{"degree", k}, {"entries", list}});
    }
    return {{"n", nsw.n},
            {"Q", nsw.Q},
            {"ordered_tuples_total", nsw.ordered_tuples_total},
            {"nonzero_ordered_tuples", nsw.nonzero_ordered_tuples},
            {"field_classes", nsw.field_classes},
            {"determinants_evaluated", nsw.determinants_evaluated},
            {"slots", slots}};
}

} // namespace hvf

#endif
