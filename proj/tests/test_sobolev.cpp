#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

using namespace hvf;

namespace {

using Vec = std::vector<double>;

std::shared_ptr<const GridDomain> box(Vec center, Vec half, Vec h, std::size_t layer = 1)
{
    return std::make_shared<GridDomain>(GridDomain::box(center, half, h, {}, layer));
}

TransitiveFamily euclidean_family()
{
    return parse_family("name = euclidean3\ndim = 3\nhparams = 3\nH = s1, s2, s3\n"
                        "T1 = x1 + w1\nT2 = x2 + w2\nT3 = x3 + w3\n"
                        "W1 = q1 - p1\nW2 = q2 - p2\nW3 = q3 - p3\n");
}

double relative(double a, double b) { return std::fabs(a - b) / std::fabs(b); }

} // namespace

TEST(Energy, GradientMatchesFiniteDifferences)
{
    const auto gr = test::system("grushin-1-1-2");
    const auto g = box({0.1, 0.2}, {1, 2}, {0.2, 0.4});
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> U(-1, 1);
    for (double p : {2.0, 1.7, 3.0}) {
        GridFunction u(g);
        for (auto& v : u.values) v = U(rng);
        u.enforce_mask();
        const DiscreteEnergy E(gr, g, p);
        Vec ge, gm;
        E.evaluate(u.values, &ge);
        E.power_integral(u.values, &gm);
        Vec dir(u.values.size());
        for (std::size_t i = 0; i < dir.size(); ++i) dir[i] = g->mask[i] ? 0 : U(rng);
        const double e = 1e-5;
        auto up = u.values, dn = u.values;
        for (std::size_t i = 0; i < dir.size(); ++i) {
            up[i] += e * dir[i];
            dn[i] -= e * dir[i];
        }
        double ae = 0, am = 0;
        for (std::size_t i = 0; i < dir.size(); ++i) {
            ae += ge[i] * dir[i];
            am += gm[i] * dir[i];
        }
        EXPECT_LT(relative(ae, (E.evaluate(up) - E.evaluate(dn)) / (2 * e)), 1e-5) << p;
        EXPECT_LT(relative(am, (E.power_integral(up) - E.power_integral(dn)) / (2 * e)), 1e-5) << p;
    }
}

TEST(Energy, LinearFunctionsAreExact)
{
    const auto eu = test::system("euclidean3");
    const auto g = box({0, 0, 0}, {1, 1, 1}, {0.25, 0.25, 0.25});
    const auto u = GridFunction::sample(g, [](std::span<const double> x) { return x[0]; });
    const auto grad = horizontal_gradient(eu, u);
    std::vector<std::size_t> k(3);
    for (std::size_t i = 0; i < g->size(); ++i) {
        g->multi_index(i, k);
        // unmasked neighbours only: sampled values are zero on the clamped layer
        bool edge = false;
        for (std::size_t a = 0; a < 3; ++a) edge = edge || k[a] < 2 || k[a] + 2 >= g->nodes[a];
        if (edge) continue;
        EXPECT_NEAR(grad[0][i], 1.0, 1e-12);
        EXPECT_NEAR(grad[1][i], 0.0, 1e-12);
    }

    const auto gr = test::system("grushin-1-1-2");
    const auto gg = box({0, 0}, {1, 1}, {0.125, 0.125}, 0);
    const auto y = GridFunction::sample(gg, [](std::span<const double> x) { return x[1]; });
    const auto gy = horizontal_gradient(gr, y);
    Vec x(2);
    for (std::size_t i = 0; i < gg->size(); ++i) {
        gg->coords(i, x);
        EXPECT_NEAR(gy[0][i], 0.0, 1e-12);
        EXPECT_NEAR(gy[1][i], 3 * x[0] * x[0], 1e-12);
    }
}

TEST(Energy, Errors)
{
    const auto gr = test::system("grushin-1-1-2");
    const auto g = box({0, 0}, {1, 1}, {0.25, 0.25});
    EXPECT_THROW(DiscreteEnergy(gr, g, 4.0), std::domain_error);
    EXPECT_THROW(DiscreteEnergy(gr, g, 0.5), std::domain_error);
    EXPECT_THROW(DiscreteEnergy(test::system("martinet"), g, 2.0), DimensionError);
    EXPECT_THROW(GridDomain::box(Vec{0, 0}, Vec{1, 1}, Vec{1, 1}), std::invalid_argument);
    EXPECT_EQ(energy_report(gr, GridFunction(g), 2.0).quotient, std::nullopt);
}

TEST(Minimize, NormalizedMonotoneDescent)
{
    const auto gr = test::system("grushin-1-1-2");
    const auto g = box({0, 0}, {2, 6}, {0.25, 0.75});
    MinimizeOptions opt;
    opt.starts = 1;
    opt.snapshot_every = 5;
    opt.max_iterations = 300;
    const auto res = minimize_quotient(gr, g, 2.0, opt);
    ASSERT_FALSE(res.trace.empty());
    for (std::size_t i = 1; i < res.trace.size(); ++i) EXPECT_LE(res.trace[i].quotient, res.trace[i - 1].quotient);
    const DiscreteEnergy E(gr, g, 2.0);
    EXPECT_NEAR(E.norm(res.u.values), 1.0, 1e-10);
    ASSERT_FALSE(res.snapshots.empty());
    for (const auto& s : res.snapshots) EXPECT_NEAR(E.norm(s.values), 1.0, 1e-10);
    EXPECT_NEAR(E.report(res.u).quotient.value(), res.constant, 1e-9 * res.constant);
    EXPECT_DOUBLE_EQ(res.p_star, 4.0);
    for (std::size_t i = 0; i < g->size(); ++i)
        if (g->mask[i]) EXPECT_EQ(res.u.values[i], 0.0);
}

TEST(Minimize, Errors)
{
    const auto g = box({0, 0}, {1, 1}, {0.25, 0.25});
    EXPECT_THROW(minimize_quotient(test::system("euclidean2"), g, 1.5), std::domain_error);
    MinimizeOptions none;
    none.starts = 0;
    EXPECT_THROW(minimize_quotient(test::system("grushin-1-1-2"), g, 2.0, none), std::invalid_argument);
}

TEST(Minimize, EuclideanAgainstBubbleOracle)
{
    const auto eu = test::system("euclidean3");
    const auto g = box({0, 0, 0}, {4, 4, 4}, {0.5, 0.5, 0.5});
    const Vec c{0, 0, 0};
    const auto oracle = bubble_oracle(eu, g, 2.0, c);
    EXPECT_GT(oracle.scale, 0.0);
    EXPECT_NEAR(oracle.cutoff, 3.5, 1e-12);
    MinimizeOptions opt;
    opt.starts = 1;
    const auto res = minimize_quotient(eu, g, 2.0, opt);
    EXPECT_LT(relative(res.constant, oracle.quotient), 0.05);
    EXPECT_LE(res.constant, oracle.quotient * (1 + 1e-9));
}

TEST(Minimize, GrushinRefinementAndStarts)
{
    const auto gr = test::system("grushin-1-1-2");
    MinimizeOptions opt;
    opt.starts = 1;
    opt.centers = {{0, 0}};
    const auto coarse = minimize_quotient(gr, box({0, 0}, {2, 6}, {0.25, 0.75}), 2.0, opt);
    const auto fine = minimize_quotient(gr, box({0, 0}, {2, 6}, {0.125, 0.375}), 2.0, opt);
    EXPECT_GT(coarse.constant, 0.0);
    EXPECT_LT(relative(coarse.constant, fine.constant), 0.10);

    auto off = opt;
    off.centers = {{1, 0}};
    const auto away = minimize_quotient(gr, box({0, 0}, {2, 6}, {0.125, 0.375}), 2.0, off);
    EXPECT_LT(relative(away.constant, fine.constant), 0.05);
}

TEST(Minimize, EuclideanDomainIndependence)
{
    const auto eu = test::system("euclidean3");
    MinimizeOptions opt;
    opt.starts = 1;
    const auto cmp = domain_independence(eu, box({0, 0, 0}, {3, 3, 3}, {0.5, 0.5, 0.5}),
                                         box({5, -2, 1}, {3, 3, 3}, {0.5, 0.5, 0.5}), 2.0,
                                         {{0, 0, 0}, {5, -2, 1}}, opt);
    EXPECT_LT(cmp.relative_difference, 0.10);
    EXPECT_THROW(domain_independence(eu, box({0, 0, 0}, {1, 1, 1}, {0.5, 0.5, 0.5}),
                                     box({0, 0, 0}, {1, 1, 1}, {0.5, 0.5, 0.5}), 2.0, {{9, 9, 9}}, opt),
                 std::invalid_argument);
}

TEST(Rescale, EuclideanDilationKeepsTheNorm)
{
    const auto eu = test::system("euclidean3");
    const auto g = box({0, 0, 0}, {4, 4, 4}, {0.125, 0.125, 0.125});
    const Vec c{0, 0, 0};
    const auto u = GridFunction::sample(g, homogeneous_bump(c, eu.weights, 2.0));
    const auto fam = euclidean_family();
    const auto v = rescale(u, eu, fam, c, 2.0, 2.0);
    const DiscreteEnergy E(eu, g, 2.0);
    EXPECT_LT(relative(E.norm(v.values), E.norm(u.values)), 0.02);
    EXPECT_LT(relative(E.report(v).quotient.value(), E.report(u).quotient.value()), 0.02);

    // rho = 1/4 spreads the support four times wider than the box
    EXPECT_THROW(rescale(u, eu, fam, c, 0.25, 2.0), SupportEscape);
    EXPECT_THROW(rescale(u, eu, fam, c, 0.0, 2.0), std::domain_error);
}

TEST(Rescale, GrushinTranslationKeepsTheEnergy)
{
    const auto gr = test::system("grushin-1-1-2");
    const auto g = box({0, 0}, {2, 6}, {1.0 / 16, 3.0 / 16});
    const Vec c{0, 0};
    // smooth in y, unlike the homogeneous bump, so interpolation stays second order
    const auto u = GridFunction::sample(g, [](std::span<const double> x) {
        const double t = 1 - x[0] * x[0] / 2.25 - x[1] * x[1] / 9;
        return t > 0 ? t * t * t : 0.0;
    });
    const auto fam = load_family(test::fixture("grushin-1-1-2.family"));
    // a shift by a whole number of cells resamples exactly; the off-grid one interpolates
    const Vec w{0, 0.75};
    const auto exact = rescale(u, gr, fam, w, 1.0, 2.0);
    const DiscreteEnergy E(gr, g, 2.0);
    EXPECT_NEAR(E.evaluate(exact.values), E.evaluate(u.values), 1e-9 * E.evaluate(u.values));
    EXPECT_NEAR(E.norm(exact.values), E.norm(u.values), 1e-9);
    const Vec w2{0, 0.7};
    const auto v = rescale(u, gr, fam, w2, 1.0, 2.0);
    EXPECT_LT(relative(E.evaluate(v.values), E.evaluate(u.values)), 0.02);
    EXPECT_LT(relative(E.norm(v.values), E.norm(u.values)), 0.02);
}

TEST(Levy, ConcentrationFunction)
{
    const auto eu = test::system("euclidean2");
    // Levy needs only the distance fields; a 2D toy keeps it cheap
    const auto g = box({0, 0}, {4, 4}, {0.125, 0.125});
    const Vec a{-2, 0}, b{2, 0};
    const auto one = GridFunction::sample(g, homogeneous_bump(a, eu.weights, 0.5));
    const auto bump_a = homogeneous_bump(a, eu.weights, 0.5), bump_b = homogeneous_bump(b, eu.weights, 0.5);
    const auto two = GridFunction::sample(g, [&](std::span<const double> x) { return bump_a(x) + bump_b(x); });
    const std::vector<double> rho{0.25, 0.5, 1, 2, 4, 8};
    const auto geo = levy_geometry(eu, g, {a, b, {0, 0}});
    const double q = 4;
    const auto diag = levy_concentration({one, two}, rho, geo, q);
    ASSERT_EQ(diag.values.size(), 2u);
    for (const auto& v : diag.values)
        for (std::size_t r = 1; r < v.size(); ++r) EXPECT_GE(v[r], v[r - 1]);
    EXPECT_NEAR(diag.values[0][2], 1.0, 1e-12);
    EXPECT_NEAR(diag.mass_at_infinity[0], 0.0, 1e-12);
    EXPECT_LT(diag.half_radius[0], 0.5);
    EXPECT_EQ(diag.center_index[0], 0u);
    // two equal bumps: radius 1 about either captures half the mass
    EXPECT_NEAR(diag.values[1][2], 0.5, 1e-9);
    EXPECT_NEAR(diag.values[1][5], 1.0, 1e-12);
    EXPECT_THROW(levy_concentration({one}, {1, 0.5}, geo, q), std::invalid_argument);
}

TEST(ExponentProbe, GrushinScaling)
{
    const auto gr = test::system("grushin-1-1-2");
    const Vec c{0, 0}, half{1, 1};
    const auto seed = homogeneous_bump(c, gr.weights, 1.0);
    std::vector<double> ts;
    for (int k = 0; k >= -8; k -= 2) ts.push_back(std::ldexp(1.0, k));
    ExponentProbeOptions opt;
    opt.nodes_per_axis = 161;
    const auto below = exponent_probe(gr, nullptr, 3.5, seed, half, ts, opt);
    EXPECT_NEAR(below.slope, -1.0 / 7.0, 1e-9);
    EXPECT_NEAR(below.scaling_slope, -1.0 / 7.0, 1e-12);
    EXPECT_GT(below.growth, 1.5);
    const auto at_q = exponent_probe(gr, nullptr, 4.0, seed, half, ts, opt);
    EXPECT_NEAR(at_q.slope, 0.0, 1e-9);
    EXPECT_NEAR(at_q.spread, 1.0, 1e-9);

    DomainSpec right;
    right.bbox = {{0, 2}, {-2, 2}};
    right.contains = [](std::span<const double> x) { return x[0] > 0; };
    EXPECT_THROW(exponent_probe(gr, &right, 3.5, seed, half, ts, opt), SupportEscape);
    EXPECT_THROW(exponent_probe(gr, nullptr, 1.0, seed, half, ts, opt), std::domain_error);
}

TEST(Decay, RecoversAPowerLaw)
{
    const auto gr = test::system("grushin-1-1-2");
    const auto g = box({0, 0}, {2, 6}, {1.0 / 32, 3.0 / 32});
    const Vec c{0, 0};
    const auto lat = g->lattice(0);
    const auto df = distance_field(gr, c, lat);
    Vec d(g->size()), x(2);
    GridFunction u(g);
    for (std::size_t i = 0; i < g->size(); ++i) {
        g->coords(i, x);
        d[i] = df.lookup(x);
        if (!g->mask[i]) u.values[i] = 1 / (d[i] * d[i] + 1e-6);
    }
    const auto fit = decay_profile(u, d);
    EXPECT_TRUE(fit.accepted) << fit.reason;
    EXPECT_NEAR(fit.exponent, -2.0, 0.3);
    EXPECT_GT(fit.outer, fit.inner);

    GridFunction flat(g);
    for (std::size_t i = 0; i < g->size(); ++i) flat.values[i] = g->mask[i] ? 0.0 : 1.0;
    const auto none = decay_profile(flat, d, {0.2, 1.0});
    EXPECT_FALSE(none.accepted);
    EXPECT_EQ(none.reason, "no decay");
    EXPECT_THROW(decay_profile(GridFunction(g), d), std::invalid_argument);
}

TEST(GridDump, RoundTrip)
{
    const auto g = box({0.5, -1}, {1, 2}, {0.25, 0.5}, 2);
    const auto u = GridFunction::sample(g, [](std::span<const double> x) { return x[0] * x[0] - x[1]; });
    const auto dir = std::filesystem::temp_directory_path() / "hvf_grid_dump_test";
    std::filesystem::create_directories(dir);
    const auto stem = (dir / "u").string();
    write_grid(u, stem);
    const auto back = read_grid(stem);
    EXPECT_EQ(back.domain->nodes, g->nodes);
    EXPECT_EQ(back.domain->layer, 2u);
    EXPECT_EQ(back.domain->mask, g->mask);
    EXPECT_EQ(back.values, u.values);
    std::filesystem::remove_all(dir);
    EXPECT_THROW(read_grid(stem), std::runtime_error);
}
