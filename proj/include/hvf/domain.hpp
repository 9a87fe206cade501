#ifndef HVF_DOMAIN_HPP
#define HVF_DOMAIN_HPP

#include "hvf/parse.hpp"
#include "hvf/polynomial.hpp"
#include "hvf/vector_field.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace hvf {

struct DomainSample {
    std::vector<Rational> point;
    bool closure_only = false; // boundary point of the closure (curve samples may sit one snap step inside)
};

/// An open set Omega given by a membership predicate, its bounding box and an
/// explicit sample set of rational points in its closure.
struct DomainSpec {
    std::string name;
    std::function<bool(std::span<const double>)> contains;
    std::vector<std::pair<double, double>> bbox;
    std::vector<DomainSample> samples;

    std::size_t dim() const { return bbox.size(); }

    bool contains_rational(std::span<const Rational> x) const
    {
        std::vector<double> d;
        d.reserve(x.size());
        for (const auto& v : x) d.push_back(to_double(v));
        return contains(d);
    }
};

/// Log-corrected cusp profile: f(s) = s^-beta / (|log s| + 1) on (0,1), s^-beta beyond.
inline double log_cusp_profile(double s, double beta)
{
    if (s <= 0) return std::numeric_limits<double>::infinity();
    const double base = std::pow(s, -beta);
    return s < 1.0 ? base / (std::fabs(std::log(s)) + 1.0) : base;
}

namespace detail {

struct PolyConstraint {
    Polynomial poly;
    CompiledPolynomial compiled;
    bool strict = true; // p > 0 vs p >= 0
};

} // namespace detail

/// Domain file format:
///   name = ex31
///   dim = 3
///   box = 1/256:1/2, 0:64, -1:1       bounding box (also the sampling region)
///   constraint = x1 - x2 > 0           polynomial inequalities (> or >=)
///   cusp = 1/10                        x1 > 0 and x2 > f(x1) with exponent beta
///   samples = 200                      random interior samples
///   seed = 7
///   curve_samples = 8                  closure samples on x2 = f(x1) at x1 = 2^-1..2^-8 (needs cusp)
///   closure_point = 0, 0, 0            explicit closure samples (repeatable)
///   point = 1/2, 3, 0                  explicit interior samples (repeatable)
inline DomainSpec parse_domain(std::string_view text)
{
    DomainSpec dom;
    std::size_t dim = 0;
    std::vector<std::pair<Rational, Rational>> box;
    std::vector<std::string> constraint_text, closure_text, point_text;
    std::optional<double> cusp_beta;
    std::size_t sample_count = 0, curve_count = 0;
    unsigned long seed = 1;
    for (const auto& kv : read_key_value_lines(text)) {
        if (kv.key == "name") dom.name = kv.value;
        else if (kv.key == "dim") dim = std::stoul(kv.value);
        else if (kv.key == "box") {
            for (const auto& range : split(kv.value, ',')) {
                const auto lohi = split(range, ':');
                if (lohi.size() != 2) throw ParseError("box entries must be lo:hi");
                box.emplace_back(parse_rational(lohi[0]), parse_rational(lohi[1]));
            }
        } else if (kv.key == "constraint") constraint_text.push_back(kv.value);
        else if (kv.key == "cusp") cusp_beta = to_double(parse_rational(kv.value));
        else if (kv.key == "samples") sample_count = std::stoul(kv.value);
        else if (kv.key == "curve_samples") curve_count = std::stoul(kv.value);
        else if (kv.key == "seed") seed = std::stoul(kv.value);
        else if (kv.key == "closure_point") closure_text.push_back(kv.value);
        else if (kv.key == "point") point_text.push_back(kv.value);
        else throw ParseError("domain line " + std::to_string(kv.line_number) + ": unknown key '" + kv.key + "'");
    }
    if (dim == 0) throw ParseError("domain file lacks 'dim'");
    if (box.size() != dim) throw ParseError("domain box must have dim ranges");
    for (const auto& [lo, hi] : box) {
        if (!(lo < hi)) throw ParseError("domain box range is empty");
        dom.bbox.emplace_back(to_double(lo), to_double(hi));
    }
    std::vector<detail::PolyConstraint> constraints;
    for (const auto& c : constraint_text) {
        bool strict = true;
        std::size_t op = c.find(">=");
        std::size_t oplen = 2;
        if (op == std::string::npos) {
            op = c.find('>');
            oplen = 1;
            if (op == std::string::npos) throw ParseError("constraint must be '<poly> > <poly>' or '>='");
        } else {
            strict = false;
        }
        Polynomial lhs = parse_polynomial(c.substr(0, op), dim);
        Polynomial rhs = parse_polynomial(c.substr(op + oplen), dim);
        Polynomial diff = lhs - rhs;
        constraints.push_back({diff, CompiledPolynomial(diff), strict});
    }
    const auto bbox = dom.bbox;
    dom.contains = [constraints, cusp_beta, bbox](std::span<const double> x) {
        for (std::size_t i = 0; i < bbox.size(); ++i)
            if (x[i] < bbox[i].first || x[i] > bbox[i].second) return false;
        for (const auto& c : constraints) {
            const double v = c.compiled(x);
            if (c.strict ? !(v > 0) : !(v >= 0)) return false;
        }
        if (cusp_beta) {
            if (!(x[0] > 0)) return false;
            if (!(x[1] > log_cusp_profile(x[0], *cusp_beta))) return false;
        }
        return true;
    };
    auto parse_point = [dim](const std::string& s) {
        std::vector<Rational> p;
        for (const auto& tok : split(s, ',')) p.push_back(parse_polynomial(tok, 0).constant_term());
        if (p.size() != dim) throw ParseError("domain sample point has wrong dimension");
        return p;
    };
    for (const auto& s : closure_text) dom.samples.push_back({parse_point(s), true});
    if (curve_count > 0) {
        if (!cusp_beta) throw ParseError("curve_samples requires 'cusp'");
        if (dim < 2) throw ParseError("curve_samples requires dim >= 2");
        // x2 rounded up onto the 2^-16 lattice so that the point is never outside
        for (std::size_t k = 1; k <= curve_count; ++k) {
            std::vector<Rational> p(dim, Rational(0));
            p[0] = Rational(1, 1UL << std::min<std::size_t>(k, 62));
            const double f = log_cusp_profile(to_double(p[0]), *cusp_beta);
            p[1] = Rational(static_cast<long>(std::ceil(f * 65536.0)), 65536);
            p[1].canonicalize();
            dom.samples.push_back({std::move(p), true});
        }
    }
    for (const auto& s : point_text) dom.samples.push_back({parse_point(s), false});
    std::mt19937_64 rng(seed);
    std::size_t attempts = 0;
    std::size_t accepted = 0;
    while (accepted < sample_count && attempts < 1000 * (sample_count + 1)) {
        ++attempts;
        std::vector<double> x(dim);
        for (std::size_t i = 0; i < dim; ++i) x[i] = std::uniform_real_distribution<double>(bbox[i].first, bbox[i].second)(rng);
        std::vector<Rational> q;
        std::vector<double> qd;
        for (double v : x) {
            q.push_back(snap_to_rational(v));
            qd.push_back(to_double(q.back()));
        }
        if (!dom.contains(qd)) continue;
        dom.samples.push_back({std::move(q), false});
        ++accepted;
    }
    return dom;
}

inline DomainSpec load_domain(const std::string& path) { return parse_domain(read_text_file(path)); }

} // namespace hvf

#endif
