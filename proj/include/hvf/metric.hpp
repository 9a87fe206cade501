#ifndef HVF_METRIC_HPP
#define HVF_METRIC_HPP

#include "hvf/nsw.hpp"
#include "hvf/parallel.hpp"
#include "hvf/vector_field.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <queue>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace hvf {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Uniform lattice on a box, plus the control-set parameters of the graph
/// built on it. Nodes are stored row-major (axis 0 slowest).
struct LatticeSpec {
    std::vector<double> lo, hi;
    std::vector<std::size_t> nodes;   // per axis, >= 2
    std::size_t random_controls = 0;  // K random unit controls (plus negatives); 0 selects 2m^2
    double tau = 0;                   // shortest step; 0 selects the axis-1 spacing
    double tau_max_fraction = 0.25;   // longest step as a fraction of the axis-1 extent
    unsigned substeps = 2;            // RK4 substeps per doubling segment
    std::uint64_t seed = 1;

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

    double box_volume() const
    {
        double v = 1;
        for (std::size_t i = 0; i < dim(); ++i) v *= hi[i] - lo[i];
        return v;
    }

    void validate() const
    {
        if (lo.empty() || lo.size() != hi.size() || lo.size() != nodes.size())
            throw std::invalid_argument("lattice: box and node counts must share one dimension");
        for (std::size_t i = 0; i < dim(); ++i) {
            if (!(lo[i] < hi[i])) throw std::invalid_argument("lattice: empty box");
            if (nodes[i] < 2) throw std::invalid_argument("lattice: need at least two nodes per axis");
        }
        if (tau < 0 || tau_max_fraction <= 0 || substeps == 0) throw std::invalid_argument("lattice: bad step parameters");
    }

    double base_tau() const { return tau > 0 ? tau : spacing(0); }

    unsigned tau_levels() const
    {
        const double longest = tau_max_fraction * (hi[0] - lo[0]);
        unsigned k = 0;
        while (base_tau() * std::ldexp(1.0, static_cast<int>(k + 1)) <= longest + 1e-12) ++k;
        return k + 1;
    }

    std::vector<double> point(std::size_t idx) const
    {
        std::vector<double> x(dim());
        for (std::size_t i = dim(); i-- > 0;) {
            x[i] = lo[i] + spacing(i) * static_cast<double>(idx % nodes[i]);
            idx /= nodes[i];
        }
        return x;
    }

    /// Index of the nearest node, or nullopt outside the box by more than half a cell.
    std::optional<std::size_t> nearest(std::span<const double> x) const
    {
        std::size_t idx = 0;
        for (std::size_t i = 0; i < dim(); ++i) {
            const double u = (x[i] - lo[i]) / spacing(i);
            const double k = std::nearbyint(u);
            if (!(k >= 0 && k <= static_cast<double>(nodes[i] - 1))) return std::nullopt;
            idx = idx * nodes[i] + static_cast<std::size_t>(k);
        }
        return idx;
    }

    bool on_boundary(std::size_t idx) const
    {
        for (std::size_t i = dim(); i-- > 0;) {
            const std::size_t k = idx % nodes[i];
            if (k == 0 || k + 1 == nodes[i]) return true;
            idx /= nodes[i];
        }
        return false;
    }
};

/// All +-e_i plus K random unit vectors and their negatives in R^m. The K
/// vectors are drawn greedily from a pool of random candidates, each pick
/// maximising its smallest angle to the directions already chosen, so a
/// fixed seed never leaves a wide angular gap.
inline std::vector<std::vector<double>> control_set(std::size_t m, std::size_t random_count, std::uint64_t seed)
{
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < m; ++i) {
        std::vector<double> e(m, 0.0);
        e[i] = 1;
        out.push_back(e);
        e[i] = -1;
        out.push_back(e);
    }
    if (random_count == 0) return out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    std::vector<std::vector<double>> pool(64 * random_count, std::vector<double>(m));
    for (auto& a : pool) {
        double norm = 0;
        do {
            norm = 0;
            for (auto& v : a) {
                v = g(rng);
                norm += v * v;
            }
        } while (norm < 1e-12);
        norm = std::sqrt(norm);
        for (auto& v : a) v /= norm;
    }
    auto max_cos = [&](const std::vector<double>& a) {
        double best = -1;
        for (const auto& b : out) {
            double c = 0;
            for (std::size_t i = 0; i < m; ++i) c += a[i] * b[i];
            best = std::max(best, c);
        }
        return best;
    };
    for (std::size_t k = 0; k < random_count; ++k) {
        std::size_t pick = 0;
        double pick_cos = 2;
        for (std::size_t c = 0; c < pool.size(); ++c) {
            const double v = max_cos(pool[c]);
            if (v < pick_cos) {
                pick_cos = v;
                pick = c;
            }
        }
        auto a = pool[pick];
        out.push_back(a);
        for (auto& v : a) v = -v;
        out.push_back(a);
    }
    return out;
}

/// Double evaluation of the field coefficients b_{ik}(y).
class FieldEvaluator {
public:
    explicit FieldEvaluator(const VectorFieldSystem& sys) : n_(sys.dim()), m_(sys.field_count())
    {
        for (std::size_t i = 0; i < m_; ++i)
            for (std::size_t k = 0; k < n_; ++k)
                if (!sys.fields[i].coeff(k).is_zero()) entries_.push_back({i, k, CompiledPolynomial(sys.fields[i].coeff(k))});
    }

    std::size_t dim() const { return n_; }
    std::size_t field_count() const { return m_; }

    /// out = sum_i a_i X_i(y)
    void combine(std::span<const double> y, std::span<const double> a, std::span<double> out) const
    {
        std::fill(out.begin(), out.end(), 0.0);
        for (const auto& e : entries_)
            if (a[e.field] != 0.0) out[e.axis] += a[e.field] * e.poly(y);
    }

    /// out[i*n + k] = b_{ik}(y)
    void coefficients(std::span<const double> y, std::span<double> out) const
    {
        std::fill(out.begin(), out.end(), 0.0);
        for (const auto& e : entries_) out[e.field * n_ + e.axis] = e.poly(y);
    }

private:
    struct Entry {
        std::size_t field, axis;
        CompiledPolynomial poly;
    };
    std::size_t n_, m_;
    std::vector<Entry> entries_;
};

struct DistanceField {
    LatticeSpec lattice;
    std::vector<double> source;
    std::size_t source_node = 0;
    std::vector<double> values;
    double tau0 = 0;
    unsigned tau_levels = 0;
    std::size_t controls = 0;
    double cutoff = kInf;
    std::size_t settled = 0;

    double at(std::size_t idx) const { return values[idx]; }

    /// Nearest-node lookup; +inf outside the lattice.
    double lookup(std::span<const double> x) const
    {
        const auto idx = lattice.nearest(x);
        return idx ? values[*idx] : kInf;
    }
};

/// Single-source shortest paths on the control graph. Every node u carries
/// the continuous point that reached it. When u is settled, the flow of
/// y' = sum_i a_i X_i(y) from that point is integrated with RK4 for each
/// control a and checkpointed at arc lengths tau0 * 2^k; each checkpoint
/// relaxes the node nearest to it with cost equal to the arc length and, on
/// success, becomes that node's point. Every finite value is therefore the
/// length of a genuine piecewise-constant-control path from the source to a
/// point within half a cell of the node. Values above `cutoff` are not
/// propagated. The estimate is not monotone under lattice refinement.
inline DistanceField distance_field(const VectorFieldSystem& sys, std::span<const double> source, const LatticeSpec& lat,
                                    double cutoff = kInf)
{
    lat.validate();
    if (lat.dim() != sys.dim()) throw DimensionError("distance_field: lattice dimension differs from the system");
    if (source.size() != sys.dim()) throw DimensionError("distance_field: source dimension mismatch");
    const auto src = lat.nearest(source);
    if (!src) throw std::out_of_range("distance_field: source outside the lattice box");

    const std::size_t n = sys.dim();
    const std::size_t m = sys.field_count();
    const std::size_t k_random = lat.random_controls ? lat.random_controls : 2 * m * m;
    const auto controls = control_set(m, k_random, lat.seed);
    if (controls.empty()) throw std::invalid_argument("distance_field: empty control set");
    const FieldEvaluator fe(sys);

    DistanceField df;
    df.lattice = lat;
    df.source.assign(source.begin(), source.end());
    df.source_node = *src;
    df.values.assign(lat.size(), kInf);
    df.tau0 = lat.base_tau();
    df.tau_levels = lat.tau_levels();
    df.controls = controls.size();
    df.cutoff = cutoff;

    std::vector<double> h(n), lo_ext(n), hi_ext(n);
    for (std::size_t i = 0; i < n; ++i) {
        h[i] = lat.spacing(i);
        lo_ext[i] = lat.lo[i] - 0.5 * h[i];
        hi_ext[i] = lat.hi[i] + 0.5 * h[i];
    }

    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    df.values[*src] = 0;
    pq.emplace(0.0, *src);
    std::vector<char> done(lat.size(), 0);

    std::vector<double> y(n), s(n), tmp(n), k1(n), k2(n), k3(n), k4(n), z(n);
    auto rhs = [&](const std::vector<double>& at, const std::vector<double>& a, std::vector<double>& out) {
        fe.combine(at, a, out);
    };

    // rep[u]: the continuous flow endpoint that set values[u]
    std::vector<double> rep(lat.size() * n, 0.0);
    std::copy(source.begin(), source.end(), rep.begin() + static_cast<std::ptrdiff_t>(*src * n));
    while (!pq.empty()) {
        const auto [d, u] = pq.top();
        pq.pop();
        if (done[u] || d > df.values[u]) continue;
        done[u] = 1;
        ++df.settled;
        std::copy(rep.begin() + static_cast<std::ptrdiff_t>(u * n), rep.begin() + static_cast<std::ptrdiff_t>((u + 1) * n), y.begin());
        for (const auto& a : controls) {
            s = y;
            double arc = 0;
            for (unsigned lev = 0; lev < df.tau_levels; ++lev) {
                const double target = df.tau0 * std::ldexp(1.0, static_cast<int>(lev));
                const double dt = (target - arc) / lat.substeps;
                for (unsigned sub = 0; sub < lat.substeps; ++sub) {
                    rhs(s, a, k1);
                    for (std::size_t i = 0; i < n; ++i) tmp[i] = s[i] + 0.5 * dt * k1[i];
                    rhs(tmp, a, k2);
                    for (std::size_t i = 0; i < n; ++i) tmp[i] = s[i] + 0.5 * dt * k2[i];
                    rhs(tmp, a, k3);
                    for (std::size_t i = 0; i < n; ++i) tmp[i] = s[i] + dt * k3[i];
                    rhs(tmp, a, k4);
                    for (std::size_t i = 0; i < n; ++i) s[i] += dt / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
                }
                arc = target;
                bool escaped = false;
                for (std::size_t i = 0; i < n; ++i)
                    if (!(s[i] >= lo_ext[i] && s[i] <= hi_ext[i])) escaped = true;
                const double nd = d + arc;
                if (escaped || nd > cutoff) break;
                const auto v = lat.nearest(s);
                if (!v || done[*v] || !(nd < df.values[*v])) continue;
                df.values[*v] = nd;
                std::copy(s.begin(), s.end(), rep.begin() + static_cast<std::ptrdiff_t>(*v * n));
                pq.emplace(nd, *v);
            }
        }
    }
    return df;
}

// ---------------------------------------------------------------------------
// Lattices sized to contain a ball.

struct BallLatticeOptions {
    std::size_t node_budget = 0;     // total nodes; 0 picks a default per dimension
    double margin = 1.1;             // box half-widths are margin * (sup-bound extent)
    std::size_t random_controls = 0;
    std::uint64_t seed = 1;
    unsigned substeps = 2;
    bool fit = true;                 // refit the box to a coarse estimate of the ball
};

inline std::size_t default_node_budget(std::size_t dim)
{
    switch (dim) {
    case 1: return 4001;
    case 2: return 281 * 281;
    case 3: return 41 * 41 * 41;
    default: return 15 * 15 * 15 * 15;
    }
}

/// Half-widths R with R_k = r * sup |(b_{1k}, ..., b_{mk})| over the box
/// |y - c| <= R, found by fixed-point iteration from R = 0 using termwise
/// monomial bounds. Admissible curves of length r from c stay inside.
inline std::vector<double> ball_extent_bound(const VectorFieldSystem& sys, std::span<const double> center, double r)
{
    const std::size_t n = sys.dim();
    std::vector<double> R(n, 0.0), next(n);
    auto bound = [&](const Polynomial& p) {
        double s = 0;
        for (const auto& [e, c] : p.terms()) {
            double t = std::fabs(to_double(c));
            for (std::size_t j = 0; j < n; ++j) t *= std::pow(std::fabs(center[j]) + R[j], e[j]);
            s += t;
        }
        return s;
    };
    for (int it = 0; it < 200; ++it) {
        double change = 0;
        for (std::size_t k = 0; k < n; ++k) {
            double sq = 0;
            for (const auto& f : sys.fields) {
                const double b = bound(f.coeff(k));
                sq += b * b;
            }
            next[k] = r * std::sqrt(sq);
            change = std::max(change, std::fabs(next[k] - R[k]) / std::max(next[k], 1e-300));
        }
        R = next;
        if (change < 1e-12) break;
        for (double v : R)
            if (!std::isfinite(v) || v > 1e12) throw std::domain_error("ball_extent_bound: no finite bound for this radius");
    }
    for (auto& v : R)
        if (v <= 0) v = r;
    return R;
}

namespace detail {

inline LatticeSpec box_lattice(std::span<const double> lo, std::span<const double> hi, std::size_t budget,
                               const BallLatticeOptions& opt)
{
    const std::size_t n = lo.size();
    auto per_axis = static_cast<std::size_t>(std::floor(std::pow(static_cast<double>(budget), 1.0 / n) + 1e-9));
    if (per_axis % 2 == 0) --per_axis;
    per_axis = std::max<std::size_t>(per_axis, 5);
    LatticeSpec lat;
    lat.lo.assign(lo.begin(), lo.end());
    lat.hi.assign(hi.begin(), hi.end());
    lat.nodes.assign(n, per_axis);
    lat.random_controls = opt.random_controls;
    lat.seed = opt.seed;
    lat.substeps = opt.substeps;
    return lat;
}

} // namespace detail

/// Lattice whose box contains B(center, r). The box starts from the
/// sup-bound extent; with `fit` set, a coarse field on that box measures the
/// actual extent of the ball and the box is shrunk to it (plus margin and
/// two coarse cells), with the same node count on every axis.
inline LatticeSpec ball_lattice(const VectorFieldSystem& sys, std::span<const double> center, double r,
                                const BallLatticeOptions& opt = {})
{
    const std::size_t n = sys.dim();
    const auto R = ball_extent_bound(sys, center, r);
    const std::size_t budget = opt.node_budget ? opt.node_budget : default_node_budget(n);
    std::vector<double> lo(n), hi(n);
    for (std::size_t i = 0; i < n; ++i) {
        lo[i] = center[i] - opt.margin * R[i];
        hi[i] = center[i] + opt.margin * R[i];
    }
    if (!opt.fit) return detail::box_lattice(lo, hi, budget, opt);

    const auto coarse = detail::box_lattice(lo, hi, std::max<std::size_t>(budget >> (2 * n), std::size_t{1} << (3 * n)), opt);
    const auto df = distance_field(sys, center, coarse, r);
    std::vector<double> ext_lo(n, 0.0), ext_hi(n, 0.0);
    for (std::size_t idx = 0; idx < df.values.size(); ++idx) {
        if (!(df.values[idx] < r)) continue;
        const auto x = coarse.point(idx);
        for (std::size_t i = 0; i < n; ++i) {
            ext_lo[i] = std::min(ext_lo[i], x[i] - center[i]);
            ext_hi[i] = std::max(ext_hi[i], x[i] - center[i]);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double pad = 2 * coarse.spacing(i);
        lo[i] = std::max(lo[i], center[i] + opt.margin * ext_lo[i] - pad);
        hi[i] = std::min(hi[i], center[i] + opt.margin * ext_hi[i] + pad);
    }
    return detail::box_lattice(lo, hi, budget, opt);
}

// ---------------------------------------------------------------------------
// Ball volumes.

struct BallVolumeEstimate {
    std::vector<double> center;
    double radius = 0;
    double estimate = 0;
    std::string method = "grid-count";
    std::size_t samples = 0;      // nodes counted or Monte-Carlo draws
    double standard_error = 0;
    bool truncated = false;
    std::size_t lattice_nodes = 0;
};

/// Lebesgue measure of {d < r} from an existing field (node count times cell volume).
inline BallVolumeEstimate ball_volume_from_field(const DistanceField& df, double r)
{
    BallVolumeEstimate est;
    est.center = df.source;
    est.radius = r;
    est.lattice_nodes = df.lattice.size();
    std::size_t inside = 0;
    for (std::size_t i = 0; i < df.values.size(); ++i) {
        if (df.values[i] < r) {
            ++inside;
            if (df.lattice.on_boundary(i)) est.truncated = true;
        }
    }
    est.samples = inside;
    est.estimate = static_cast<double>(inside) * df.lattice.cell_volume();
    return est;
}

/// Monte-Carlo variant: uniform draws in the box, membership from the one field.
inline BallVolumeEstimate ball_volume_monte_carlo(const DistanceField& df, double r, std::size_t draws, std::uint64_t seed)
{
    BallVolumeEstimate est = ball_volume_from_field(df, r);
    const auto& lat = df.lattice;
    std::mt19937_64 rng(seed);
    std::vector<std::uniform_real_distribution<double>> dist;
    for (std::size_t i = 0; i < lat.dim(); ++i) dist.emplace_back(lat.lo[i], lat.hi[i]);
    std::vector<double> x(lat.dim());
    std::size_t hits = 0;
    for (std::size_t k = 0; k < draws; ++k) {
        for (std::size_t i = 0; i < lat.dim(); ++i) x[i] = dist[i](rng);
        if (df.lookup(x) < r) ++hits;
    }
    const double p = draws ? static_cast<double>(hits) / static_cast<double>(draws) : 0.0;
    est.method = "monte-carlo";
    est.samples = draws;
    est.estimate = p * lat.box_volume();
    est.standard_error = draws ? lat.box_volume() * std::sqrt(p * (1 - p) / static_cast<double>(draws)) : 0.0;
    return est;
}

inline BallVolumeEstimate ball_volume(const VectorFieldSystem& sys, std::span<const double> center, double r,
                                      const BallLatticeOptions& opt = {})
{
    if (!(r > 0)) throw std::domain_error("ball_volume: radius must be positive");
    LatticeSpec lat = ball_lattice(sys, center, r, opt);
    for (int attempt = 0;; ++attempt) {
        const DistanceField df = distance_field(sys, center, lat, r);
        auto est = ball_volume_from_field(df, r);
        if (!est.truncated || attempt == 3) return est;
        // the coarse fit was too tight: widen about the centre and retry
        for (std::size_t i = 0; i < lat.dim(); ++i) {
            lat.lo[i] = center[i] - 1.5 * (center[i] - lat.lo[i]);
            lat.hi[i] = center[i] + 1.5 * (lat.hi[i] - center[i]);
        }
    }
}

// ---------------------------------------------------------------------------
// Ball-box and doubling.

struct BallBoxRow {
    std::vector<double> center;
    double radius = 0;
    double volume = 0;
    double lambda = 0;
    double ratio = 0;
    bool truncated = false;
};

struct BallBoxReport {
    std::vector<BallBoxRow> rows;
    double min_ratio = kInf;
    double max_ratio = 0;
    double spread() const { return max_ratio / min_ratio; }
    bool any_truncated = false;
};

inline BallBoxReport ball_box_scan(const VectorFieldSystem& sys, const NSWPolynomial& nsw,
                                   const std::vector<std::vector<double>>& centers, const std::vector<double>& radii,
                                   const BallLatticeOptions& opt = {})
{
    const LambdaEvaluator lam(nsw);
    BallBoxReport rep;
    rep.rows.resize(centers.size() * radii.size());
    parallel_for(rep.rows.size(), [&](std::size_t idx) {
        const auto& c = centers[idx / radii.size()];
        const double r = radii[idx % radii.size()];
        const auto v = ball_volume(sys, c, r, opt);
        BallBoxRow row{c, r, v.estimate, lam(c, r), 0.0, v.truncated};
        row.ratio = row.volume / row.lambda;
        rep.rows[idx] = row;
    });
    for (const auto& row : rep.rows) {
        rep.min_ratio = std::min(rep.min_ratio, row.ratio);
        rep.max_ratio = std::max(rep.max_ratio, row.ratio);
        rep.any_truncated = rep.any_truncated || row.truncated;
    }
    return rep;
}

struct DoublingRow {
    std::vector<double> center;
    double radius = 0;
    double small_volume = 0, large_volume = 0;
    double ratio = 0;     // |B(x,2r)| / |B(x,r)|
    double constant = 0;  // ratio / 2^Q
};

struct DoublingReport {
    unsigned Q = 0;
    std::vector<DoublingRow> rows;
    double max_constant = 0;
    double min_ratio = kInf, max_ratio = 0;
};

inline DoublingReport doubling_check(const VectorFieldSystem& sys, const std::vector<std::vector<double>>& centers,
                                     const std::vector<double>& radii, const BallLatticeOptions& opt = {})
{
    DoublingReport rep;
    rep.Q = homogeneous_dimension(sys);
    rep.rows.resize(centers.size() * radii.size());
    parallel_for(rep.rows.size(), [&](std::size_t idx) {
        const auto& c = centers[idx / radii.size()];
        const double r = radii[idx % radii.size()];
        DoublingRow row;
        row.center = c;
        row.radius = r;
        row.small_volume = ball_volume(sys, c, r, opt).estimate;
        row.large_volume = ball_volume(sys, c, 2 * r, opt).estimate;
        row.ratio = row.large_volume / row.small_volume;
        row.constant = row.ratio / std::ldexp(1.0, static_cast<int>(rep.Q));
        rep.rows[idx] = row;
    });
    for (const auto& row : rep.rows) {
        rep.max_constant = std::max(rep.max_constant, row.constant);
        rep.min_ratio = std::min(rep.min_ratio, row.ratio);
        rep.max_ratio = std::max(rep.max_ratio, row.ratio);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Volume growth exponents: inf over (x, r) of |B(x,r)| / r^kappa.

enum class GrowthMode { LambdaProxy, Measured };

struct GrowthSample {
    std::vector<double> x;
    double r = 0;
    double sweep_key = 0; // a sample enters every level whose cut is <= its key
};

struct GrowthPlan {
    std::vector<GrowthSample> samples;
    std::vector<double> cuts; // one sweep level per cut, usually decreasing
};

struct DomainPlanOptions {
    int r_min_quarter = -80;      // radii 2^(s/4) for s in [r_min_quarter, r_max_quarter]
    int r_max_quarter = 16;
    std::size_t sweep_axis = 0;   // sweep key is this coordinate
    unsigned levels = 8;          // cuts 2^-1 .. 2^-levels
};

/// Every domain sample paired with every radius of the grid.
inline GrowthPlan plan_from_domain(const DomainSpec& dom, const DomainPlanOptions& opt = {})
{
    if (dom.samples.empty()) throw std::invalid_argument("growth plan: domain has no samples");
    if (opt.sweep_axis >= dom.dim()) throw std::invalid_argument("growth plan: sweep axis out of range");
    if (opt.r_min_quarter > opt.r_max_quarter || opt.levels == 0) throw std::invalid_argument("growth plan: empty grid");
    GrowthPlan plan;
    for (const auto& s : dom.samples) {
        std::vector<double> x;
        for (const auto& v : s.point) x.push_back(to_double(v));
        for (int e = opt.r_min_quarter; e <= opt.r_max_quarter; ++e)
            plan.samples.push_back({x, std::exp2(e / 4.0), x[opt.sweep_axis]});
    }
    for (unsigned k = 1; k <= opt.levels; ++k) plan.cuts.push_back(std::ldexp(1.0, -static_cast<int>(k)));
    return plan;
}

struct GrowthScan {
    std::vector<double> kappas;
    std::vector<double> cuts;
    std::vector<std::vector<double>> infimum;      // [level][kappa]
    std::vector<std::vector<std::size_t>> argmin;  // sample index achieving it
    std::vector<double> values;                    // |B| or Lambda per sample
    GrowthMode mode = GrowthMode::LambdaProxy;

    /// infimum at the last level over the first, per kappa.
    std::vector<double> end_to_end() const
    {
        std::vector<double> out;
        for (std::size_t k = 0; k < kappas.size(); ++k) out.push_back(infimum.back()[k] / infimum.front()[k]);
        return out;
    }
};

inline GrowthScan growth_exponent_scan(const VectorFieldSystem& sys, const NSWPolynomial& nsw, const GrowthPlan& plan,
                                       const std::vector<double>& kappas, GrowthMode mode = GrowthMode::LambdaProxy,
                                       const BallLatticeOptions& opt = {})
{
    for (double k : kappas)
        if (!(k > 0 && k <= nsw.Q + 1e-12)) throw std::invalid_argument("growth scan: kappa must lie in (0, Q]");
    if (plan.samples.empty() || plan.cuts.empty()) throw std::invalid_argument("growth scan: empty sample plan");
    GrowthScan scan;
    scan.kappas = kappas;
    scan.cuts = plan.cuts;
    scan.mode = mode;
    scan.values.resize(plan.samples.size());
    const LambdaEvaluator lam(nsw);
    parallel_for(plan.samples.size(), [&](std::size_t i) {
        const auto& s = plan.samples[i];
        scan.values[i] = mode == GrowthMode::LambdaProxy ? lam(s.x, s.r) : ball_volume(sys, s.x, s.r, opt).estimate;
    });
    for (double cut : plan.cuts) {
        std::vector<double> inf(kappas.size(), kInf);
        std::vector<std::size_t> arg(kappas.size(), 0);
        for (std::size_t i = 0; i < plan.samples.size(); ++i) {
            if (plan.samples[i].sweep_key < cut) continue;
            const double lr = std::log(plan.samples[i].r);
            for (std::size_t k = 0; k < kappas.size(); ++k) {
                const double v = scan.values[i] * std::exp(-kappas[k] * lr);
                if (v < inf[k]) {
                    inf[k] = v;
                    arg[k] = i;
                }
            }
        }
        scan.infimum.push_back(inf);
        scan.argmin.push_back(arg);
    }
    return scan;
}

// ---------------------------------------------------------------------------
// Isometries: d(A x, A y) = s * d(x, y).

struct IsometryRow {
    std::vector<double> x, y;
    double d_plain = 0;   // s * d(x, y)
    double d_mapped = 0;  // d(A x, A y)
    double relative_error = 0;
};

struct IsometryReport {
    std::vector<IsometryRow> rows;
    double max_relative_error = 0;
};

/// For each source x, compares s * d(x, y_j) with d(A x, A y_j) over the
/// targets y_j, each source getting lattices sized for `radius` about x and A x.
inline IsometryReport isometry_check(const VectorFieldSystem& sys, const std::vector<std::vector<double>>& sources,
                                     const std::vector<std::vector<std::vector<double>>>& targets,
                                     const std::function<std::vector<double>(std::span<const double>)>& map,
                                     double scale, double radius, const BallLatticeOptions& opt = {})
{
    if (targets.size() != sources.size()) throw std::invalid_argument("isometry_check: one target list per source");
    IsometryReport rep;
    std::vector<std::vector<IsometryRow>> per(sources.size());
    parallel_for(sources.size(), [&](std::size_t s) {
        const auto& x = sources[s];
        const auto ax = map(x);
        const auto f1 = distance_field(sys, x, ball_lattice(sys, x, radius, opt));
        const auto f2 = distance_field(sys, ax, ball_lattice(sys, ax, scale * radius, opt));
        for (const auto& y : targets[s]) {
            IsometryRow row;
            row.x = x;
            row.y = y;
            row.d_plain = scale * f1.lookup(y);
            row.d_mapped = f2.lookup(map(y));
            row.relative_error = row.d_plain > 0 ? std::fabs(row.d_mapped - row.d_plain) / row.d_plain
                                                 : (row.d_mapped == 0 ? 0.0 : kInf);
            per[s].push_back(row);
        }
    });
    for (auto& v : per)
        for (auto& row : v) {
            rep.max_relative_error = std::max(rep.max_relative_error, row.relative_error);
            rep.rows.push_back(std::move(row));
        }
    return rep;
}

// ---------------------------------------------------------------------------
// Poincare-Wirtinger: int_B |f - f_B| versus r * int_B |Xf|.

struct PoincareRow {
    std::string function;
    double radius = 0;
    double oscillation = 0;  // int_B |f - f_B|
    double gradient = 0;     // int_B |Xf|
    double ratio = 0;        // oscillation / (r * gradient); 0 when both vanish
    std::size_t nodes = 0;
};

inline PoincareRow poincare_ratio(const VectorFieldSystem& sys, const DistanceField& df, double r, const Polynomial& f,
                                  const std::string& label = {})
{
    if (f.dim() != sys.dim()) throw DimensionError("poincare: test function dimension mismatch");
    const CompiledPolynomial cf(f);
    std::vector<CompiledPolynomial> xf;
    for (const auto& field : sys.fields) xf.emplace_back(field.apply(f));
    const double cell = df.lattice.cell_volume();
    std::vector<std::size_t> inside;
    for (std::size_t i = 0; i < df.values.size(); ++i)
        if (df.values[i] < r) inside.push_back(i);
    PoincareRow row;
    row.function = label.empty() ? to_string(f) : label;
    row.radius = r;
    row.nodes = inside.size();
    if (inside.empty()) return row;
    double mean = 0;
    for (auto i : inside) mean += cf(df.lattice.point(i));
    mean /= static_cast<double>(inside.size());
    for (auto i : inside) {
        const auto x = df.lattice.point(i);
        row.oscillation += std::fabs(cf(x) - mean) * cell;
        double g2 = 0;
        for (const auto& g : xf) {
            const double v = g(x);
            g2 += v * v;
        }
        row.gradient += std::sqrt(g2) * cell;
    }
    row.ratio = row.gradient > 0 ? row.oscillation / (r * row.gradient) : 0.0;
    if (row.oscillation < 1e-13 * std::max(1.0, row.gradient)) row.ratio = 0.0;
    return row;
}

inline std::vector<PoincareRow> poincare_check(const VectorFieldSystem& sys, std::span<const double> center,
                                               const std::vector<double>& radii, const std::vector<Polynomial>& functions,
                                               const BallLatticeOptions& opt = {})
{
    std::vector<PoincareRow> out(radii.size() * functions.size());
    parallel_for(radii.size(), [&](std::size_t ri) {
        const double r = radii[ri];
        const auto df = distance_field(sys, center, ball_lattice(sys, center, r, opt), r);
        for (std::size_t fi = 0; fi < functions.size(); ++fi)
            out[ri * functions.size() + fi] = poincare_ratio(sys, df, r, functions[fi]);
    });
    return out;
}

} // namespace hvf

#endif
