#ifndef HVF_SOBOLEV_HPP
#define HVF_SOBOLEV_HPP

#include "hvf/automorph.hpp"
#include "hvf/domain.hpp"
#include "hvf/metric.hpp"
#include "hvf/parallel.hpp"
#include "hvf/vector_field.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hvf {

using ScalarFunction = std::function<double(std::span<const double>)>;
using MembershipPredicate = std::function<bool(std::span<const double>)>;

struct SupportEscape : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Truncated rectangular lattice with a Dirichlet mask. Row-major, axis 0 slowest.
struct GridDomain {
    std::vector<double> lo, hi;
    std::vector<std::size_t> nodes;
    std::vector<char> mask; // 1: clamped to zero
    std::size_t layer = 1;

    /// Box centre +- half_widths with spacings h (rounded so the box is
    /// covered exactly). Nodes within `layer` of the box boundary, and nodes
    /// failing `inside`, are masked.
    static GridDomain box(std::span<const double> center, std::span<const double> half_widths, std::span<const double> h,
                          const MembershipPredicate& inside = {}, std::size_t layer = 1)
    {
        const std::size_t n = center.size();
        if (n == 0 || half_widths.size() != n || h.size() != n) throw DimensionError("grid domain: dimension mismatch");
        GridDomain g;
        g.layer = layer;
        for (std::size_t i = 0; i < n; ++i) {
            if (!(half_widths[i] > 0 && h[i] > 0)) throw std::invalid_argument("grid domain: box and spacing must be positive");
            const auto cells = static_cast<std::size_t>(std::llround(2 * half_widths[i] / h[i]));
            if (cells < 2 * layer + 1) throw std::invalid_argument("grid domain: box too small for the boundary layer");
            g.lo.push_back(center[i] - half_widths[i]);
            g.hi.push_back(center[i] + half_widths[i]);
            g.nodes.push_back(cells + 1);
        }
        g.mask.assign(g.size(), 0);
        std::vector<double> x(n);
        std::vector<std::size_t> k(n);
        for (std::size_t idx = 0; idx < g.size(); ++idx) {
            g.multi_index(idx, k);
            bool clamp = false;
            for (std::size_t i = 0; i < n; ++i)
                if (k[i] < layer || k[i] + layer >= g.nodes[i]) clamp = true;
            if (!clamp && inside) {
                g.coords(idx, x);
                clamp = !inside(x);
            }
            g.mask[idx] = clamp ? 1 : 0;
        }
        return g;
    }

    static GridDomain box(std::span<const double> center, std::span<const double> half_widths, double h,
                          const MembershipPredicate& inside = {}, std::size_t layer = 1)
    {
        const std::vector<double> hv(center.size(), h);
        return box(center, half_widths, hv, inside, layer);
    }

    std::size_t dim() const { return lo.size(); }
    double spacing(std::size_t i) const { return (hi[i] - lo[i]) / static_cast<double>(nodes[i] - 1); }

    std::size_t size() const
    {
        std::size_t s = 1;
        for (auto c : nodes) s *= c;
        return s;
    }

    double cell_volume() const
    {
        double v = 1;
        for (std::size_t i = 0; i < dim(); ++i) v *= spacing(i);
        return v;
    }

    std::size_t stride(std::size_t axis) const
    {
        std::size_t s = 1;
        for (std::size_t i = axis + 1; i < dim(); ++i) s *= nodes[i];
        return s;
    }

    void multi_index(std::size_t idx, std::span<std::size_t> out) const
    {
        for (std::size_t i = dim(); i-- > 0;) {
            out[i] = idx % nodes[i];
            idx /= nodes[i];
        }
    }

    void coords(std::size_t idx, std::span<double> out) const
    {
        for (std::size_t i = dim(); i-- > 0;) {
            out[i] = lo[i] + spacing(i) * static_cast<double>(idx % nodes[i]);
            idx /= nodes[i];
        }
    }

    std::vector<double> point(std::size_t idx) const
    {
        std::vector<double> x(dim());
        coords(idx, x);
        return x;
    }

    std::vector<double> center() const
    {
        std::vector<double> c(dim());
        for (std::size_t i = 0; i < dim(); ++i) c[i] = 0.5 * (lo[i] + hi[i]);
        return c;
    }

    std::size_t free_count() const { return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 0)); }

    std::optional<std::size_t> nearest(std::span<const double> x) const
    {
        std::size_t idx = 0;
        for (std::size_t i = 0; i < dim(); ++i) {
            const double k = std::nearbyint((x[i] - lo[i]) / spacing(i));
            if (!(k >= 0 && k <= static_cast<double>(nodes[i] - 1))) return std::nullopt;
            idx = idx * nodes[i] + static_cast<std::size_t>(k);
        }
        return idx;
    }

    /// The same box as a metric lattice with at most `per_axis` nodes per axis
    /// (0 keeps the grid's own counts).
    LatticeSpec lattice(std::size_t per_axis = 0) const
    {
        LatticeSpec lat;
        lat.lo = lo;
        lat.hi = hi;
        for (auto c : nodes) lat.nodes.push_back(per_axis ? std::min(c, per_axis) : c);
        return lat;
    }
};

struct GridFunction {
    std::shared_ptr<const GridDomain> domain;
    std::vector<double> values;

    GridFunction() = default;
    explicit GridFunction(std::shared_ptr<const GridDomain> d) : domain(std::move(d)), values(domain->size(), 0.0) {}

    static GridFunction sample(std::shared_ptr<const GridDomain> d, const ScalarFunction& f)
    {
        GridFunction u(std::move(d));
        std::vector<double> x(u.domain->dim());
        for (std::size_t i = 0; i < u.values.size(); ++i) {
            if (u.domain->mask[i]) continue;
            u.domain->coords(i, x);
            u.values[i] = f(x);
        }
        return u;
    }

    void enforce_mask()
    {
        for (std::size_t i = 0; i < values.size(); ++i)
            if (domain->mask[i]) values[i] = 0.0;
    }

    /// Multilinear interpolation; zero outside the box.
    double interpolate(std::span<const double> x) const
    {
        const auto& g = *domain;
        const std::size_t n = g.dim();
        std::size_t base = 0;
        std::vector<double> frac(n);
        std::vector<std::size_t> cell(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double u = (x[i] - g.lo[i]) / g.spacing(i);
            const double last = static_cast<double>(g.nodes[i] - 1);
            if (!(u >= 0 && u <= last)) return 0.0;
            double c = std::floor(u);
            if (c >= last) c = last - 1;
            cell[i] = static_cast<std::size_t>(c);
            frac[i] = u - c;
            base += cell[i] * g.stride(i);
        }
        double acc = 0;
        for (std::size_t corner = 0; corner < (std::size_t{1} << n); ++corner) {
            double w = 1;
            std::size_t idx = base;
            for (std::size_t i = 0; i < n; ++i) {
                if (corner >> i & 1) {
                    w *= frac[i];
                    idx += g.stride(i);
                } else {
                    w *= 1 - frac[i];
                }
            }
            if (w != 0) acc += w * values[idx];
        }
        return acc;
    }
};

namespace detail {

/// b_{jk} sampled at every grid node, nonzero entries only.
struct CoefficientTable {
    struct Entry {
        std::size_t field, axis;
        std::vector<double> values;
    };
    std::size_t m = 0;
    std::vector<Entry> entries;

    CoefficientTable(const VectorFieldSystem& sys, const GridDomain& g) : m(sys.field_count())
    {
        if (sys.dim() != g.dim()) throw DimensionError("grid dimension differs from the system");
        std::vector<double> x(g.dim());
        for (std::size_t j = 0; j < sys.field_count(); ++j)
            for (std::size_t k = 0; k < sys.dim(); ++k) {
                const auto& c = sys.fields[j].coeff(k);
                if (c.is_zero()) continue;
                Entry e{j, k, std::vector<double>(g.size())};
                const CompiledPolynomial cp(c);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    g.coords(i, x);
                    e.values[i] = cp(x);
                }
                entries.push_back(std::move(e));
            }
    }
};

inline double p_star(double p, double Q) { return p * Q / (Q - p); }

} // namespace detail

/// (X_j u) at every node: coefficient-weighted centred differences, one-sided
/// at the box edge. Result is [field][node].
inline std::vector<std::vector<double>> horizontal_gradient(const VectorFieldSystem& sys, const GridFunction& u)
{
    const auto& g = *u.domain;
    const detail::CoefficientTable tab(sys, g);
    const std::size_t n = g.dim();
    std::vector<std::vector<double>> out(sys.field_count(), std::vector<double>(g.size(), 0.0));
    std::vector<std::size_t> k(n);
    for (std::size_t idx = 0; idx < g.size(); ++idx) {
        g.multi_index(idx, k);
        for (const auto& e : tab.entries) {
            const std::size_t a = e.axis, st = g.stride(a);
            const double h = g.spacing(a);
            double d;
            if (k[a] == 0) d = (u.values[idx + st] - u.values[idx]) / h;
            else if (k[a] + 1 == g.nodes[a]) d = (u.values[idx] - u.values[idx - st]) / h;
            else d = (u.values[idx + st] - u.values[idx - st]) / (2 * h);
            out[e.field][idx] += e.values[idx] * d;
        }
    }
    return out;
}

struct EnergyReport {
    double p = 0;
    double p_star = 0;
    double energy = 0;
    double norm = 0;
    std::optional<double> quotient;
};

struct EnergyOptions {
    /// (|Xu|^2 + eps^2)^(p/2) smoothing; negative picks 1e-8 for p < 3/2 and 0 otherwise
    double epsilon = -1;
    unsigned energy_points = 2; // Gauss points per axis and cell
    unsigned norm_points = 3;
};

namespace detail {

inline std::vector<std::pair<double, double>> gauss_unit(unsigned k)
{
    switch (k) {
    case 1: return {{0.5, 1.0}};
    case 2: {
        const double d = 0.5 / std::sqrt(3.0);
        return {{0.5 - d, 0.5}, {0.5 + d, 0.5}};
    }
    case 3: {
        const double d = 0.5 * std::sqrt(0.6);
        return {{0.5 - d, 5.0 / 18}, {0.5, 4.0 / 9}, {0.5 + d, 5.0 / 18}};
    }
    case 4: {
        const double a = std::sqrt(3.0 / 7 - 2.0 / 7 * std::sqrt(1.2)), b = std::sqrt(3.0 / 7 + 2.0 / 7 * std::sqrt(1.2));
        const double wa = (18 + std::sqrt(30.0)) / 72, wb = (18 - std::sqrt(30.0)) / 72;
        return {{0.5 - 0.5 * b, wb}, {0.5 - 0.5 * a, wa}, {0.5 + 0.5 * a, wa}, {0.5 + 0.5 * b, wb}};
    }
    default: throw std::invalid_argument("gauss rule: 1 to 4 points per axis");
    }
}

/// Tensor Gauss rule on the reference cell with multilinear basis values and
/// physical derivatives at each point.
struct CellRule {
    std::size_t points = 0, corners = 0, n = 0;
    std::vector<std::vector<double>> xi;   // [point][axis] in [0,1]
    std::vector<double> weight;            // includes the cell volume
    std::vector<double> phi;               // [point][corner]
    std::vector<double> dphi;              // [point][corner][axis]

    CellRule(const GridDomain& g, unsigned per_axis)
    {
        n = g.dim();
        corners = std::size_t{1} << n;
        const auto rule = gauss_unit(per_axis);
        points = 1;
        for (std::size_t i = 0; i < n; ++i) points *= rule.size();
        for (std::size_t pt = 0; pt < points; ++pt) {
            std::vector<double> x(n);
            double w = g.cell_volume();
            std::size_t r = pt;
            for (std::size_t i = n; i-- > 0;) {
                x[i] = rule[r % rule.size()].first;
                w *= rule[r % rule.size()].second;
                r /= rule.size();
            }
            xi.push_back(x);
            weight.push_back(w);
            for (std::size_t v = 0; v < corners; ++v) {
                double val = 1;
                for (std::size_t i = 0; i < n; ++i) val *= (v >> i & 1) ? x[i] : 1 - x[i];
                phi.push_back(val);
                for (std::size_t k = 0; k < n; ++k) {
                    double d = ((v >> k & 1) ? 1.0 : -1.0) / g.spacing(k);
                    for (std::size_t i = 0; i < n; ++i)
                        if (i != k) d *= (v >> i & 1) ? x[i] : 1 - x[i];
                    dphi.push_back(d);
                }
            }
        }
    }
};

} // namespace detail

/// Conforming multilinear (Q1) discretisation: a grid function stands for its
/// multilinear interpolant u_h, and both int |X u_h|^p and int |u_h|^{p*}
/// are integrated cell by cell with tensor Gauss rules. The field
/// coefficients are evaluated exactly at the Gauss points.
class DiscreteEnergy {
public:
    DiscreteEnergy(const VectorFieldSystem& sys, std::shared_ptr<const GridDomain> domain, double p, EnergyOptions opt = {})
        : domain_(std::move(domain)), p_(p), Q_(homogeneous_dimension(sys)), m_(sys.field_count()),
          erule_(*domain_, opt.energy_points), nrule_(*domain_, opt.norm_points)
    {
        if (sys.dim() != domain_->dim()) throw DimensionError("grid dimension differs from the system");
        if (!(p >= 1 && p < Q_)) throw std::domain_error("energy: p must lie in [1, Q)");
        eps_ = opt.epsilon >= 0 ? opt.epsilon : (p < 1.5 ? 1e-8 : 0.0);
        q_ = p_star();
        if (std::fabs(q_ - std::round(q_)) < 1e-12 && q_ <= 16) q_int_ = static_cast<int>(std::round(q_));
        const auto& g = *domain_;
        const std::size_t n = g.dim();
        if (n > 8 || m_ > 16) throw std::invalid_argument("energy: at most 8 dimensions and 16 fields");
        cells_ = 1;
        for (std::size_t i = 0; i < n; ++i) {
            cell_counts_.push_back(g.nodes[i] - 1);
            cells_ *= g.nodes[i] - 1;
        }
        for (std::size_t v = 0; v < erule_.corners; ++v) {
            std::size_t off = 0;
            for (std::size_t i = 0; i < n; ++i)
                if (v >> i & 1) off += g.stride(i);
            corner_offset_.push_back(off);
        }
        std::vector<double> x(n);
        for (std::size_t j = 0; j < m_; ++j)
            for (std::size_t k = 0; k < n; ++k) {
                const auto& c = sys.fields[j].coeff(k);
                if (c.is_zero()) continue;
                Entry e{j, k, 0.0, {}};
                if (c.is_constant()) {
                    e.constant = to_double(c.constant_term());
                } else {
                    const CompiledPolynomial cp(c);
                    e.values.resize(cells_ * erule_.points);
                    for (std::size_t cell = 0; cell < cells_; ++cell) {
                        const auto base = g.point(base_node(cell));
                        for (std::size_t pt = 0; pt < erule_.points; ++pt) {
                            for (std::size_t i = 0; i < n; ++i) x[i] = base[i] + erule_.xi[pt][i] * g.spacing(i);
                            e.values[cell * erule_.points + pt] = cp(x);
                        }
                    }
                }
                entries_.push_back(std::move(e));
            }
    }

    const GridDomain& domain() const { return *domain_; }
    std::shared_ptr<const GridDomain> domain_ptr() const { return domain_; }
    double p() const { return p_; }
    double Q() const { return Q_; }
    double p_star() const { return detail::p_star(p_, Q_); }

    struct Values {
        double energy = 0; // int |X u_h|^p
        double mass = 0;   // int |u_h|^{p*}
        std::vector<double> d_energy, d_mass;
    };

    /// Energy and L^{p*} mass in one sweep, with node gradients on request.
    Values evaluate_both(std::span<const double> u, bool gradients, unsigned jobs = 0) const
    {
        return integrate(u, true, true, gradients, jobs);
    }

    /// int |X u_h|^p, with its gradient in node coordinates when `grad` is set.
    double evaluate(std::span<const double> u, std::vector<double>* grad = nullptr, unsigned jobs = 0) const
    {
        auto v = integrate(u, true, false, grad != nullptr, jobs);
        if (grad) *grad = std::move(v.d_energy);
        return v.energy;
    }

    /// int |u_h|^{p*}, with its gradient when `grad` is set.
    double power_integral(std::span<const double> u, std::vector<double>* grad = nullptr, unsigned jobs = 0) const
    {
        auto v = integrate(u, false, true, grad != nullptr, jobs);
        if (grad) *grad = std::move(v.d_mass);
        return v.mass;
    }

    double norm(std::span<const double> u, unsigned jobs = 0) const { return std::pow(power_integral(u, nullptr, jobs), 1 / p_star()); }

    EnergyReport report(const GridFunction& u) const
    {
        EnergyReport r;
        r.p = p_;
        r.p_star = p_star();
        r.energy = evaluate(u.values);
        r.norm = norm(u.values);
        if (r.norm > 0) r.quotient = r.energy / std::pow(r.norm, p_);
        return r;
    }

private:
    struct Entry {
        std::size_t field, axis;
        double constant;
        std::vector<double> values; // [cell][point]; empty for constants
    };

    double coefficient(const Entry& e, std::size_t cell, std::size_t pt) const
    {
        return e.values.empty() ? e.constant : e.values[cell * erule_.points + pt];
    }

    std::size_t base_node(std::size_t cell) const
    {
        const auto& g = *domain_;
        std::size_t node = 0;
        for (std::size_t i = g.dim(); i-- > 0;) {
            node += (cell % cell_counts_[i]) * g.stride(i);
            cell /= cell_counts_[i];
        }
        return node;
    }

    double power_q(double a) const
    {
        if (q_int_ == 0) return std::pow(a, q_);
        double r = a;
        for (int i = 1; i < q_int_; ++i) r *= a;
        return r;
    }

    // N > 0 fixes the dimension at compile time so the corner loops unroll
    template <std::size_t N>
    double energy_cell(std::size_t cell, const double* uv, double* out) const
    {
        const auto& R = erule_;
        const std::size_t n = N ? N : domain_->dim();
        const std::size_t corners = std::size_t{1} << n;
        double du[8], G[16], c[16], t[8];
        double acc = 0;
        for (std::size_t pt = 0; pt < R.points; ++pt) {
            const double* D = &R.dphi[pt * corners * n];
            for (std::size_t k = 0; k < n; ++k) du[k] = 0;
            for (std::size_t v = 0; v < corners; ++v)
                for (std::size_t k = 0; k < n; ++k) du[k] += D[v * n + k] * uv[v];
            for (std::size_t j = 0; j < m_; ++j) G[j] = 0;
            for (const auto& e : entries_) G[e.field] += coefficient(e, cell, pt) * du[e.axis];
            double sq = eps_ * eps_;
            for (std::size_t j = 0; j < m_; ++j) sq += G[j] * G[j];
            if (sq == 0) continue;
            acc += R.weight[pt] * (p_ == 2 ? sq : std::pow(sq, 0.5 * p_));
            if (!out) continue;
            const double scale = R.weight[pt] * (p_ == 2 ? 2.0 : p_ * std::pow(sq, 0.5 * p_ - 1));
            for (std::size_t j = 0; j < m_; ++j) c[j] = scale * G[j];
            for (std::size_t k = 0; k < n; ++k) t[k] = 0;
            for (const auto& e : entries_) t[e.axis] += c[e.field] * coefficient(e, cell, pt);
            for (std::size_t v = 0; v < corners; ++v)
                for (std::size_t k = 0; k < n; ++k) out[v] += t[k] * D[v * n + k];
        }
        return acc;
    }

    template <std::size_t N>
    double mass_cell(const double* uv, double* out) const
    {
        const auto& R = nrule_;
        const std::size_t corners = std::size_t{1} << (N ? N : domain_->dim());
        double acc = 0;
        for (std::size_t pt = 0; pt < R.points; ++pt) {
            const double* phi = &R.phi[pt * corners];
            double val = 0;
            for (std::size_t v = 0; v < corners; ++v) val += phi[v] * uv[v];
            const double a = std::fabs(val);
            if (a == 0) continue;
            const double aq = power_q(a);
            acc += R.weight[pt] * aq;
            if (!out) continue;
            const double d = R.weight[pt] * q_ * aq / val;
            for (std::size_t v = 0; v < corners; ++v) out[v] += d * phi[v];
        }
        return acc;
    }

    // Sweeps all cells in slabs along axis 0. Gradients are gathered per node
    // from per-cell buffers, so the sum order never depends on the thread count.
    Values integrate(std::span<const double> u, bool want_e, bool want_m, bool gradients, unsigned jobs) const
    {
        const auto& g = *domain_;
        const std::size_t n = g.dim(), corners = std::size_t{1} << n;
        jobs = jobs ? jobs : default_jobs();
        std::vector<double> le(gradients && want_e ? cells_ * corners : 0, 0.0);
        std::vector<double> lm(gradients && want_m ? cells_ * corners : 0, 0.0);
        const std::size_t slabs = cell_counts_[0], per_slab = cells_ / slabs;
        std::vector<double> pe(slabs, 0.0), pm(slabs, 0.0);
        parallel_for(slabs, jobs, [&](std::size_t s) {
            double uv[256];
            for (std::size_t cell = s * per_slab; cell < (s + 1) * per_slab; ++cell) {
                const std::size_t base = base_node(cell);
                bool any = false;
                for (std::size_t v = 0; v < corners; ++v) {
                    uv[v] = u[base + corner_offset_[v]];
                    any = any || uv[v] != 0.0;
                }
                if (!any) continue; // also skips the constant eps^p floor of empty cells
                double* oe = le.empty() ? nullptr : &le[cell * corners];
                double* om = lm.empty() ? nullptr : &lm[cell * corners];
                switch (n) {
                case 2:
                    if (want_e) pe[s] += energy_cell<2>(cell, uv, oe);
                    if (want_m) pm[s] += mass_cell<2>(uv, om);
                    break;
                case 3:
                    if (want_e) pe[s] += energy_cell<3>(cell, uv, oe);
                    if (want_m) pm[s] += mass_cell<3>(uv, om);
                    break;
                default:
                    if (want_e) pe[s] += energy_cell<0>(cell, uv, oe);
                    if (want_m) pm[s] += mass_cell<0>(uv, om);
                }
            }
        });
        Values out;
        for (std::size_t s = 0; s < slabs; ++s) {
            out.energy += pe[s];
            out.mass += pm[s];
        }
        if (!gradients) return out;
        if (want_e) out.d_energy.assign(g.size(), 0.0);
        if (want_m) out.d_mass.assign(g.size(), 0.0);
        parallel_for(g.nodes[0], jobs, [&](std::size_t s) {
            std::vector<std::size_t> k(n);
            const std::size_t per = g.size() / g.nodes[0];
            for (std::size_t y = s * per; y < (s + 1) * per; ++y) {
                if (g.mask[y]) continue;
                g.multi_index(y, k);
                double ae = 0, am = 0;
                for (std::size_t v = 0; v < corners; ++v) {
                    std::size_t cell = 0;
                    bool ok = true;
                    for (std::size_t i = 0; i < n && ok; ++i) {
                        const std::size_t b = v >> i & 1;
                        if (k[i] < b || k[i] - b >= cell_counts_[i]) ok = false;
                        else cell = cell * cell_counts_[i] + (k[i] - b);
                    }
                    if (!ok) continue;
                    if (want_e) ae += le[cell * corners + v];
                    if (want_m) am += lm[cell * corners + v];
                }
                if (want_e) out.d_energy[y] = ae;
                if (want_m) out.d_mass[y] = am;
            }
        });
        return out;
    }

    std::shared_ptr<const GridDomain> domain_;
    double p_, Q_, eps_ = 0, q_ = 0;
    int q_int_ = 0; // p* when it is a small integer, else 0
    std::size_t m_;
    detail::CellRule erule_, nrule_;
    std::size_t cells_ = 0;
    std::vector<std::size_t> cell_counts_, corner_offset_;
    std::vector<Entry> entries_;
};

inline EnergyReport energy_report(const VectorFieldSystem& sys, const GridFunction& u, double p, EnergyOptions opt = {})
{
    return DiscreteEnergy(sys, u.domain, p, opt).report(u);
}

// ---------------------------------------------------------------------------
// Minimisation of the quotient E(u) / ||u||_{p*}^p.

struct TraceRow {
    std::size_t iteration = 0;
    double quotient = 0;
    double step = 0;
    unsigned backtracks = 0;
};

struct MinimizeOptions {
    unsigned starts = 3;
    std::size_t max_iterations = 20000;
    std::size_t patience = 50;
    double tolerance = 1e-6;         // relative decrease over `patience` iterations
    std::vector<std::vector<double>> centers; // bump centres, cycled over starts; empty: box centre
    double width = 0;                // homogeneous bump radius of the first start; 0: quarter box
    double width_growth = 1.5;       // later starts use wider bumps
    std::size_t snapshot_every = 0;  // keep every k-th accepted iterate (0: none)
    EnergyOptions energy;
    unsigned jobs = 0;
    std::function<void(const TraceRow&)> progress; // called after each accepted step
};

struct MinimizeResult {
    GridFunction u;
    double constant = 0;
    std::size_t iterations = 0;
    bool converged = false;
    std::vector<TraceRow> trace;         // best start
    std::vector<double> start_constants; // per start
    std::size_t best_start = 0;
    std::vector<GridFunction> snapshots; // best start
    double p = 0, p_star = 0;
};

/// Homogeneous bump (1 - |x - c|_w^2 / width^2)_+^2 with |y|_w = (sum |y_i|^(2/w_i))^(1/2).
inline ScalarFunction homogeneous_bump(std::span<const double> center, const std::vector<unsigned>& weights, double width)
{
    std::vector<double> c(center.begin(), center.end());
    return [c, weights, width](std::span<const double> x) {
        double s = 0;
        for (std::size_t i = 0; i < c.size(); ++i)
            s += std::pow(std::fabs(x[i] - c[i]) / std::pow(width, weights[i]), 2.0 / weights[i]);
        const double t = 1 - s;
        return t > 0 ? t * t : 0.0;
    };
}

namespace detail {

inline double default_bump_width(const VectorFieldSystem& sys, const GridDomain& g)
{
    double r = kInf;
    for (std::size_t i = 0; i < g.dim(); ++i) r = std::min(r, std::pow(0.5 * (g.hi[i] - g.lo[i]), 1.0 / sys.weights[i]));
    return 0.25 * r;
}

struct StartOutcome {
    std::vector<double> u;
    double value = kInf;
    std::size_t iterations = 0;
    bool converged = false;
    std::vector<TraceRow> trace;
    std::vector<std::vector<double>> snapshots;
};

/// Projected gradient descent on the unit sphere of L^{p*}: Barzilai-Borwein
/// step, Armijo backtracking, then u <- |u| / ||u||. Gradients are taken in
/// the lumped L^2 metric (node gradient over cell volume). Each trial costs a
/// single sweep: energy, mass and both gradients rescale exactly under u -> u/c.
inline StartOutcome descend(const DiscreteEnergy& E, std::vector<double> u, const MinimizeOptions& opt, unsigned jobs)
{
    const auto& g = E.domain();
    const double q = E.p_star(), p = E.p(), cell = g.cell_volume();
    const std::size_t N = g.size();
    StartOutcome out;
    for (std::size_t i = 0; i < N; ++i) u[i] = g.mask[i] ? 0.0 : std::fabs(u[i]);

    // normalises v in place from its sweep; returns the quotient and fills d
    std::vector<double> dir(N), trial(N), dir_new(N);
    auto settle = [&](std::vector<double>& v, DiscreteEnergy::Values& val, std::vector<double>& d, double& dd) {
        const double c = std::pow(val.mass, 1 / q);
        for (auto& x : v) x /= c;
        const double F = val.energy / std::pow(c, p);
        const double se = 1 / std::pow(c, p - 1), sm = 1 / std::pow(c, q - 1);
        dd = 0;
        for (std::size_t i = 0; i < N; ++i) {
            d[i] = g.mask[i] ? 0.0 : (se * val.d_energy[i] - F * p / q * sm * val.d_mass[i]) / cell;
            dd += d[i] * d[i];
        }
        dd *= cell;
        return F;
    };

    auto val = E.evaluate_both(u, true, jobs);
    if (!(val.mass > 0)) throw std::invalid_argument("minimize: initial function vanishes on the free nodes");
    double dd = 0;
    double F = settle(u, val, dir, dd);
    double h2 = kInf;
    for (std::size_t i = 0; i < g.dim(); ++i) h2 = std::min(h2, g.spacing(i) * g.spacing(i));
    double alpha = 0.1 * h2;
    out.trace.push_back({0, F, 0.0, 0});
    if (opt.snapshot_every) out.snapshots.push_back(u);

    std::size_t it = 0;
    for (; it < opt.max_iterations; ++it) {
        if (dd == 0) {
            out.converged = true;
            break;
        }
        unsigned back = 0;
        double Ft = kInf;
        bool accepted = false;
        for (; back < 40; ++back) {
            for (std::size_t i = 0; i < N; ++i) trial[i] = g.mask[i] ? 0.0 : std::fabs(u[i] - alpha * dir[i]);
            val = E.evaluate_both(trial, true, jobs);
            if (val.mass > 0) {
                Ft = val.energy / std::pow(val.mass, p / q);
                if (Ft <= F - 1e-4 * alpha * dd) {
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            out.converged = true; // no descent left at working precision
            break;
        }
        double dd_new = 0;
        Ft = settle(trial, val, dir_new, dd_new);
        double ss = 0, sy = 0;
        for (std::size_t i = 0; i < N; ++i) {
            const double si = trial[i] - u[i], yi = dir_new[i] - dir[i];
            ss += si * si;
            sy += si * yi;
        }
        alpha = sy > 0 ? ss / sy : 2 * alpha;
        alpha = std::clamp(alpha, 1e-6 * h2, 1e6 * h2);
        u.swap(trial);
        dir.swap(dir_new);
        F = Ft;
        dd = dd_new;
        out.trace.push_back({it + 1, F, alpha, back});
        if (opt.progress) opt.progress(out.trace.back());
        if (opt.snapshot_every && (it + 1) % opt.snapshot_every == 0) out.snapshots.push_back(u);
        if (out.trace.size() > opt.patience) {
            const double old = out.trace[out.trace.size() - 1 - opt.patience].quotient;
            if (old - F < opt.tolerance * F) {
                out.converged = true;
                ++it;
                break;
            }
        }
    }
    out.iterations = it;
    out.value = F;
    out.u = std::move(u);
    return out;
}

} // namespace detail

/// Minimises the discrete quotient over grid functions on `domain`. Each
/// start is a homogeneous bump; the best final quotient is kept. The result
/// is flagged unconverged when max_iterations runs out.
inline MinimizeResult minimize_quotient(const VectorFieldSystem& sys, std::shared_ptr<const GridDomain> domain, double p,
                                        const MinimizeOptions& opt = {})
{
    const double Q = homogeneous_dimension(sys);
    if (!(p > 1 && p < Q)) throw std::domain_error("minimize: need 1 < p < Q");
    if (Q < 3) throw std::domain_error("minimize: need Q >= 3");
    if (opt.starts == 0) throw std::invalid_argument("minimize: need at least one start");
    const DiscreteEnergy E(sys, domain, p, opt.energy);
    const double base = opt.width > 0 ? opt.width : detail::default_bump_width(sys, *domain);
    const auto centers = opt.centers.empty() ? std::vector<std::vector<double>>{domain->center()} : opt.centers;
    const unsigned jobs = opt.jobs ? opt.jobs : default_jobs();
    const unsigned outer = std::min<unsigned>(jobs, opt.starts);
    const unsigned inner = std::max(1u, jobs / std::max(1u, outer));

    std::vector<detail::StartOutcome> runs(opt.starts);
    parallel_for(opt.starts, outer, [&](std::size_t s) {
        const double width = base * std::pow(opt.width_growth, static_cast<double>(s));
        const auto f = homogeneous_bump(centers[s % centers.size()], sys.weights, width);
        runs[s] = detail::descend(E, GridFunction::sample(domain, f).values, opt, inner);
    });

    MinimizeResult res;
    res.p = p;
    res.p_star = E.p_star();
    for (std::size_t s = 0; s < runs.size(); ++s) {
        res.start_constants.push_back(runs[s].value);
        if (runs[s].value < runs[res.best_start].value) res.best_start = s;
    }
    auto& best = runs[res.best_start];
    res.u = GridFunction(domain);
    res.u.values = std::move(best.u);
    res.constant = best.value;
    res.iterations = best.iterations;
    res.converged = best.converged;
    res.trace = std::move(best.trace);
    for (auto& v : best.snapshots) {
        GridFunction gf(domain);
        gf.values = std::move(v);
        res.snapshots.push_back(std::move(gf));
    }
    return res;
}

// ---------------------------------------------------------------------------
// Oracle: the Euclidean extremal profile, shifted to vanish at a cutoff and
// with its scale tuned to minimise the same discrete quotient.

struct BubbleOracle {
    double scale = 0;
    double cutoff = 0;
    double quotient = 0;
    GridFunction u;
};

/// Aubin-Talenti profile (1 + (|x-c|/s)^{p/(p-1)})^{-(n-p)/p}, minus its value
/// at the cutoff radius and zero beyond it.
inline ScalarFunction talenti_profile(std::span<const double> center, double scale, double p, double cutoff)
{
    std::vector<double> c(center.begin(), center.end());
    const double n = static_cast<double>(c.size());
    const double expo = -(n - p) / p, power = p / (p - 1);
    auto radial = [=](double r) { return std::pow(1 + std::pow(r / scale, power), expo); };
    const double floor_value = radial(cutoff);
    return [c, radial, floor_value, cutoff](std::span<const double> x) {
        double r2 = 0;
        for (std::size_t i = 0; i < c.size(); ++i) r2 += (x[i] - c[i]) * (x[i] - c[i]);
        const double r = std::sqrt(r2);
        return r < cutoff ? radial(r) - floor_value : 0.0;
    };
}

/// Golden-section search over the profile scale. The cutoff is the largest
/// ball about the centre inside the free region.
inline BubbleOracle bubble_oracle(const VectorFieldSystem& sys, std::shared_ptr<const GridDomain> domain, double p,
                                  std::span<const double> center, double lo = 0, double hi = 0)
{
    const auto& g = *domain;
    double cutoff = kInf;
    for (std::size_t i = 0; i < g.dim(); ++i) {
        const double pad = static_cast<double>(g.layer) * g.spacing(i);
        cutoff = std::min({cutoff, center[i] - g.lo[i] - pad, g.hi[i] - pad - center[i]});
    }
    if (!(cutoff > 0)) throw std::invalid_argument("bubble oracle: centre outside the free box");
    double hmin = kInf;
    for (std::size_t i = 0; i < g.dim(); ++i) hmin = std::min(hmin, g.spacing(i));
    if (lo <= 0) lo = 0.5 * hmin;
    if (hi <= 0) hi = 0.5 * cutoff;
    const DiscreteEnergy E(sys, domain, p);
    auto value = [&](double s) {
        return E.report(GridFunction::sample(domain, talenti_profile(center, s, p, cutoff))).quotient.value_or(kInf);
    };
    // golden section in log scale
    const double phi = 0.5 * (std::sqrt(5.0) - 1);
    double a = std::log(lo), b = std::log(hi);
    double c1 = b - phi * (b - a), c2 = a + phi * (b - a);
    double f1 = value(std::exp(c1)), f2 = value(std::exp(c2));
    for (int it = 0; it < 40 && b - a > 1e-4; ++it) {
        if (f1 < f2) {
            b = c2;
            c2 = c1;
            f2 = f1;
            c1 = b - phi * (b - a);
            f1 = value(std::exp(c1));
        } else {
            a = c1;
            c1 = c2;
            f1 = f2;
            c2 = a + phi * (b - a);
            f2 = value(std::exp(c2));
        }
    }
    BubbleOracle o;
    o.scale = std::exp(f1 < f2 ? c1 : c2);
    o.cutoff = cutoff;
    o.u = GridFunction::sample(domain, talenti_profile(center, o.scale, p, cutoff));
    o.quotient = std::min(f1, f2);
    return o;
}

// ---------------------------------------------------------------------------
// Rescaling by a transitive family.

/// v(x) = rho^{(Q-p)/p} u(T(w, delta_rho x)) on `target` (default: u's own
/// grid). Throws SupportEscape when u does not vanish on the image of the
/// target's clamped nodes, i.e. the resampled support would not fit.
inline GridFunction rescale(const GridFunction& u, const VectorFieldSystem& sys, const TransitiveFamily& fam,
                            std::span<const double> w, double rho, double p,
                            std::shared_ptr<const GridDomain> target = nullptr)
{
    if (!(rho > 0)) throw std::domain_error("rescale: rho must be positive");
    const std::size_t n = sys.dim();
    if (fam.n != n || w.size() != n || u.domain->dim() != n) throw DimensionError("rescale: dimension mismatch");
    if (!target) target = u.domain;
    const double Q = homogeneous_dimension(sys);
    const double factor = std::pow(rho, (Q - p) / p);
    std::vector<CompiledPolynomial> T;
    for (const auto& c : fam.map) T.emplace_back(c);
    double umax = 0;
    for (double v : u.values) umax = std::max(umax, std::fabs(v));

    GridFunction out(target);
    std::vector<double> x(n), wx(2 * n), y(n);
    std::copy(w.begin(), w.end(), wx.begin());
    for (std::size_t idx = 0; idx < target->size(); ++idx) {
        target->coords(idx, x);
        for (std::size_t i = 0; i < n; ++i) wx[n + i] = std::pow(rho, sys.weights[i]) * x[i];
        for (std::size_t i = 0; i < n; ++i) y[i] = T[i](wx);
        const double v = u.interpolate(y);
        if (target->mask[idx]) {
            if (std::fabs(v) > 1e-9 * umax) throw SupportEscape("rescale: support escapes the target domain");
            continue;
        }
        out.values[idx] = factor * v;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Levy concentration function Q(rho) = sup_w int_{B(w,rho)} |u|^{p*}.

/// Distances from each H sample to every node of a grid, from metric fields
/// on a coarse copy of the grid's box.
struct LevyGeometry {
    std::shared_ptr<const GridDomain> domain;
    std::vector<std::vector<double>> centers;
    std::vector<std::vector<double>> distance; // [center][node]
};

inline LevyGeometry levy_geometry(const VectorFieldSystem& sys, std::shared_ptr<const GridDomain> domain,
                                  const std::vector<std::vector<double>>& centers, std::size_t per_axis = 65)
{
    LevyGeometry geo;
    geo.domain = domain;
    geo.centers = centers;
    geo.distance.resize(centers.size());
    parallel_for(centers.size(), [&](std::size_t c) {
        const auto df = distance_field(sys, centers[c], domain->lattice(per_axis));
        auto& d = geo.distance[c];
        d.resize(domain->size());
        std::vector<double> x(domain->dim());
        for (std::size_t i = 0; i < d.size(); ++i) {
            domain->coords(i, x);
            d[i] = df.lookup(x);
        }
    });
    return geo;
}

struct ConcentrationDiagnostics {
    std::vector<double> rho;
    std::vector<std::vector<double>> values; // [iterate][rho], normalised by total mass
    std::vector<std::size_t> center_index;   // w_k per iterate
    std::vector<std::vector<double>> center;
    std::vector<double> half_radius;         // rho_k with Q_k(rho_k) = 1/2
    std::vector<double> mass_at_infinity;    // 1 - Q_k(max rho)
};

inline ConcentrationDiagnostics levy_concentration(const std::vector<GridFunction>& iterates, const std::vector<double>& rho,
                                                   const LevyGeometry& geo, double q)
{
    if (rho.empty() || !std::is_sorted(rho.begin(), rho.end())) throw std::invalid_argument("levy: rho grid must be increasing");
    ConcentrationDiagnostics diag;
    diag.rho = rho;
    const double cell = geo.domain->cell_volume();
    for (const auto& u : iterates) {
        std::vector<double> mass(u.values.size());
        double total = 0;
        for (std::size_t i = 0; i < mass.size(); ++i) total += mass[i] = std::pow(std::fabs(u.values[i]), q) * cell;
        if (!(total > 0)) throw std::invalid_argument("levy: zero function");
        std::vector<double> best(rho.size(), 0.0);
        double best_half = kInf;
        std::size_t best_center = 0;
        std::vector<std::size_t> order;
        for (std::size_t c = 0; c < geo.centers.size(); ++c) {
            const auto& d = geo.distance[c];
            order.clear();
            for (std::size_t i = 0; i < mass.size(); ++i)
                if (mass[i] > 0) order.push_back(i);
            std::sort(order.begin(), order.end(), [&](auto a, auto b) { return d[a] < d[b]; });
            double cum = 0;
            std::size_t r = 0;
            double half = kInf;
            for (auto i : order) {
                while (r < rho.size() && !(d[i] < rho[r])) {
                    best[r] = std::max(best[r], cum / total);
                    ++r;
                }
                cum += mass[i];
                if (half == kInf && cum >= 0.5 * total) half = d[i];
            }
            for (; r < rho.size(); ++r) best[r] = std::max(best[r], cum / total);
            if (half < best_half) {
                best_half = half;
                best_center = c;
            }
        }
        diag.values.push_back(best);
        diag.center_index.push_back(best_center);
        diag.center.push_back(geo.centers.empty() ? std::vector<double>{} : geo.centers[best_center]);
        diag.half_radius.push_back(best_half);
        diag.mass_at_infinity.push_back(std::max(0.0, 1 - best.back()));
    }
    return diag;
}

// ---------------------------------------------------------------------------
// Exponent probe: R(t) = ||u_t||_{k/(k-1)} / int |X u_t|, u_t = u o delta_{1/t}.

struct ExponentProbeOptions {
    std::vector<double> center;     // dilation centre; empty: origin
    std::vector<unsigned> weights;  // dilation exponents; empty: the system's
    std::size_t nodes_per_axis = 0; // 0: 401 in 2D, 81 in 3D, 31 beyond
};

struct ExponentProbeRow {
    double t = 0;
    double norm = 0;
    double variation = 0;
    double ratio = 0;
};

struct ExponentProbeReport {
    double kappa = 0;
    double Q = 0;
    std::vector<ExponentProbeRow> rows;
    double slope = 0;        // least squares d log R / d log t
    double growth = 0;       // R(smallest t) / R(largest t)
    double spread = 0;       // max R / min R
    double scaling_slope = 0; // 1 - Q/kappa, the exact value for homogeneous fields about the origin
};

/// Each u_t is sampled on the grid delta_t(support box) about the centre, so
/// every scale is resolved equally. The seed u must vanish outside
/// center + [-half, half]. Throws SupportEscape if u_t leaves Omega.
inline ExponentProbeReport exponent_probe(const VectorFieldSystem& sys, const DomainSpec* omega, double kappa,
                                          const ScalarFunction& u, std::span<const double> half, std::vector<double> ts,
                                          const ExponentProbeOptions& opt = {})
{
    const std::size_t n = sys.dim();
    if (!(kappa > 1)) throw std::domain_error("exponent probe: need kappa > 1");
    if (half.size() != n) throw DimensionError("exponent probe: support box dimension");
    if (ts.size() < 2) throw std::invalid_argument("exponent probe: need at least two scales");
    std::sort(ts.begin(), ts.end());
    const auto weights = opt.weights.empty() ? sys.weights : opt.weights;
    const std::vector<double> c = opt.center.empty() ? std::vector<double>(n, 0.0) : opt.center;
    const std::size_t per_axis = opt.nodes_per_axis ? opt.nodes_per_axis : (n == 2 ? 401 : n == 3 ? 81 : 31);
    const double q = kappa / (kappa - 1);
    ExponentProbeReport rep;
    rep.kappa = kappa;
    rep.Q = homogeneous_dimension(sys);
    rep.scaling_slope = 1 - rep.Q / kappa;
    rep.rows.resize(ts.size());
    parallel_for(ts.size(), [&](std::size_t ti) {
        const double t = ts[ti];
        std::vector<double> hw(n), h(n);
        for (std::size_t i = 0; i < n; ++i) {
            hw[i] = std::pow(t, weights[i]) * half[i];
            h[i] = 2 * hw[i] / static_cast<double>(per_axis - 1);
        }
        const auto g = std::make_shared<GridDomain>(GridDomain::box(c, hw, h, {}, 0));
        GridFunction ut(g);
        std::vector<double> x(n), y(n);
        for (std::size_t idx = 0; idx < g->size(); ++idx) {
            g->coords(idx, x);
            for (std::size_t i = 0; i < n; ++i) y[i] = (x[i] - c[i]) / std::pow(t, weights[i]);
            const double v = u(y);
            if (v != 0 && omega && !omega->contains(x)) throw SupportEscape("exponent probe: u_t leaves the domain");
            ut.values[idx] = v;
        }
        const auto grad = horizontal_gradient(sys, ut);
        const double cell = g->cell_volume();
        double var = 0, lq = 0;
        for (std::size_t idx = 0; idx < g->size(); ++idx) {
            double s = 0;
            for (const auto& gj : grad) s += gj[idx] * gj[idx];
            var += std::sqrt(s) * cell;
            lq += std::pow(std::fabs(ut.values[idx]), q) * cell;
        }
        auto& row = rep.rows[ti];
        row.t = t;
        row.variation = var;
        row.norm = std::pow(lq, 1 / q);
        row.ratio = row.norm / row.variation;
    });
    double sx = 0, sy = 0, sxx = 0, sxy = 0, rmin = kInf, rmax = 0;
    for (const auto& r : rep.rows) {
        const double lx = std::log(r.t), ly = std::log(r.ratio);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        rmin = std::min(rmin, r.ratio);
        rmax = std::max(rmax, r.ratio);
    }
    const double m = static_cast<double>(rep.rows.size());
    rep.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    rep.growth = rep.rows.front().ratio / rep.rows.back().ratio;
    rep.spread = rmax / rmin;
    return rep;
}

// ---------------------------------------------------------------------------
// Decay of a minimiser against the distance from its centre.

struct DecayOptions {
    double inner = 0;   // 0: twice the half-maximum radius (at least two lattice steps)
    double outer = 0;   // 0: see decay_profile
    std::size_t bins = 24;
    double min_r2 = 0.9;
};

struct DecayFit {
    double exponent = 0;
    double intercept = 0;
    double residual = 0; // rms of log u about the fit over bin means
    double r2 = 0;
    std::size_t points = 0;
    double inner = 0, outer = 0;
    bool accepted = false;
    std::string reason;
};

/// Least squares fit of log u = a + b log d over log-spaced distance bins in
/// [inner, outer]. `distance` gives d at each node of u's grid.
inline DecayFit decay_profile(const GridFunction& u, std::span<const double> distance, const DecayOptions& opt = {})
{
    const auto& g = *u.domain;
    if (distance.size() != g.size()) throw DimensionError("decay: one distance per node");
    DecayFit fit;
    double umax = 0;
    for (double v : u.values) umax = std::max(umax, v);
    if (!(umax > 0)) throw std::invalid_argument("decay: function has no positive values");
    double half_max_r = 0, boundary = kInf;
    std::size_t peak = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (g.mask[i]) boundary = std::min(boundary, distance[i]);
        else if (u.values[i] >= 0.5 * umax) half_max_r = std::max(half_max_r, distance[i]);
        if (u.values[i] > u.values[peak]) peak = i;
    }
    // a peak one cell wide has no half-maximum ring; fall back to the
    // nearest lattice neighbour of the peak
    double ring = kInf;
    for (std::size_t a = 0; a < g.dim(); ++a)
        for (long s : {-1L, 1L}) {
            const long k = static_cast<long>(peak) + s * static_cast<long>(g.stride(a));
            if (k >= 0 && static_cast<std::size_t>(k) < g.size()) ring = std::min(ring, distance[static_cast<std::size_t>(k)]);
        }
    fit.inner = opt.inner > 0 ? opt.inner : 2 * std::max(half_max_r, std::isfinite(ring) ? ring : 0.0);
    // the Dirichlet wall steepens the tail well before it is reached: a quarter of
    // the wall distance, widened to one octave when the core is broad, never past half
    fit.outer = opt.outer > 0 ? opt.outer : std::min(0.5 * boundary, std::max(0.25 * boundary, 2 * fit.inner));
    if (!(fit.outer > fit.inner) || !std::isfinite(fit.outer)) throw std::invalid_argument("decay: annulus is empty");
    const double la = std::log(fit.inner), lb = std::log(fit.outer);
    std::vector<double> sum(opt.bins, 0.0), centre(opt.bins, 0.0);
    std::vector<std::size_t> count(opt.bins, 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double d = distance[i];
        if (g.mask[i] || !(u.values[i] > 0) || !(d >= fit.inner && d < fit.outer)) continue;
        const auto b = std::min(opt.bins - 1, static_cast<std::size_t>((std::log(d) - la) / (lb - la) * opt.bins));
        sum[b] += std::log(u.values[i]);
        centre[b] += std::log(d);
        ++count[b];
    }
    std::vector<std::pair<double, double>> pts;
    for (std::size_t b = 0; b < opt.bins; ++b)
        if (count[b]) pts.emplace_back(centre[b] / count[b], sum[b] / count[b]);
    fit.points = pts.size();
    if (pts.size() < 3) throw std::invalid_argument("decay: annulus is empty");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (auto [x, y] : pts) {
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double m = static_cast<double>(pts.size());
    fit.exponent = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    fit.intercept = (sy - fit.exponent * sx) / m;
    double ss_res = 0, ss_tot = 0;
    for (auto [x, y] : pts) {
        const double e = y - (fit.intercept + fit.exponent * x);
        ss_res += e * e;
        ss_tot += (y - sy / m) * (y - sy / m);
    }
    fit.residual = std::sqrt(ss_res / m);
    fit.r2 = ss_tot > 0 ? 1 - ss_res / ss_tot : 0.0;
    if (!(fit.exponent < 0)) fit.reason = "no decay";
    else if (fit.r2 < opt.min_r2) fit.reason = "poor power-law fit";
    fit.accepted = fit.reason.empty();
    return fit;
}

/// decay_profile with d measured from the node where u peaks.
inline DecayFit decay_about_peak(const VectorFieldSystem& sys, const GridFunction& u, const DecayOptions& opt = {},
                                 std::size_t per_axis = 0)
{
    const auto& g = *u.domain;
    const auto peak = static_cast<std::size_t>(std::max_element(u.values.begin(), u.values.end()) - u.values.begin());
    const auto df = distance_field(sys, g.point(peak), g.lattice(per_axis));
    std::vector<double> d(g.size()), x(g.dim());
    for (std::size_t i = 0; i < g.size(); ++i) {
        g.coords(i, x);
        d[i] = df.lookup(x);
    }
    return decay_profile(u, d, opt);
}

// ---------------------------------------------------------------------------

struct DomainComparison {
    MinimizeResult first, second;
    double relative_difference = 0; // |C1 - C2| / min(C1, C2)
};

/// Both domains must contain one of the given H points as a free node.
inline DomainComparison domain_independence(const VectorFieldSystem& sys, std::shared_ptr<const GridDomain> a,
                                            std::shared_ptr<const GridDomain> b, double p,
                                            const std::vector<std::vector<double>>& h_points, MinimizeOptions opt = {})
{
    auto meets = [&](const GridDomain& g, std::vector<double>& hit) {
        for (const auto& x : h_points) {
            const auto idx = g.nearest(x);
            if (idx && !g.mask[*idx]) {
                hit = x;
                return true;
            }
        }
        return false;
    };
    std::vector<double> ha, hb;
    if (!meets(*a, ha) || !meets(*b, hb)) throw std::invalid_argument("domain independence: each domain must meet H");
    DomainComparison cmp;
    auto oa = opt, ob = opt;
    if (oa.centers.empty()) oa.centers = {ha};
    if (ob.centers.empty()) ob.centers = {hb};
    cmp.first = minimize_quotient(sys, a, p, oa);
    cmp.second = minimize_quotient(sys, b, p, ob);
    cmp.relative_difference = std::fabs(cmp.first.constant - cmp.second.constant) /
                              std::min(cmp.first.constant, cmp.second.constant);
    return cmp;
}

// ---------------------------------------------------------------------------
// Raw grid dump: <stem>.f64 holds size() IEEE-754 doubles in row-major order
// (axis 0 slowest) and native byte order, which <stem>.json records.

inline nlohmann::json grid_sidecar(const GridDomain& g)
{
    nlohmann::json j;
    j["format"] = "hvf-grid";
    j["version"] = 1;
    j["dtype"] = "float64";
    j["byte_order"] = std::endian::native == std::endian::little ? "little" : "big";
    j["order"] = "row-major, axis 0 slowest";
    j["shape"] = g.nodes;
    j["lo"] = g.lo;
    j["hi"] = g.hi;
    j["layer"] = g.layer;
    std::vector<int> mask(g.mask.begin(), g.mask.end());
    j["masked_nodes"] = std::count(mask.begin(), mask.end(), 1);
    return j;
}

inline void write_grid(const GridFunction& u, const std::string& stem)
{
    std::ofstream bin(stem + ".f64", std::ios::binary);
    if (!bin) throw std::runtime_error("cannot write " + stem + ".f64");
    bin.write(reinterpret_cast<const char*>(u.values.data()), static_cast<std::streamsize>(u.values.size() * sizeof(double)));
    std::ofstream side(stem + ".json");
    if (!side) throw std::runtime_error("cannot write " + stem + ".json");
    side << grid_sidecar(*u.domain).dump(2) << '\n';
}

/// Reads a dump back onto a domain of the recorded shape (mask: boundary layer only).
inline GridFunction read_grid(const std::string& stem)
{
    std::ifstream side(stem + ".json");
    if (!side) throw std::runtime_error("cannot read " + stem + ".json");
    const auto j = nlohmann::json::parse(side);
    if (j.at("format") != "hvf-grid" || j.at("dtype") != "float64") throw std::runtime_error("not an hvf grid dump");
    const std::string native = std::endian::native == std::endian::little ? "little" : "big";
    if (j.at("byte_order") != native) throw std::runtime_error("grid dump byte order differs from this platform");
    const auto lo = j.at("lo").get<std::vector<double>>(), hi = j.at("hi").get<std::vector<double>>();
    const auto shape = j.at("shape").get<std::vector<std::size_t>>();
    std::vector<double> c(lo.size()), hw(lo.size()), h(lo.size());
    for (std::size_t i = 0; i < lo.size(); ++i) {
        c[i] = 0.5 * (lo[i] + hi[i]);
        hw[i] = 0.5 * (hi[i] - lo[i]);
        h[i] = (hi[i] - lo[i]) / static_cast<double>(shape[i] - 1);
    }
    auto g = std::make_shared<GridDomain>(GridDomain::box(c, hw, h, {}, j.at("layer").get<std::size_t>()));
    GridFunction u(g);
    std::ifstream bin(stem + ".f64", std::ios::binary);
    if (!bin) throw std::runtime_error("cannot read " + stem + ".f64");
    bin.read(reinterpret_cast<char*>(u.values.data()), static_cast<std::streamsize>(u.values.size() * sizeof(double)));
    if (bin.gcount() != static_cast<std::streamsize>(u.values.size() * sizeof(double)))
        throw std::runtime_error("grid dump is shorter than its shape");
    return u;
}

} // namespace hvf

#endif
