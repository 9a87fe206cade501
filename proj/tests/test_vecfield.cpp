#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace hvf;
using hvf::test::poly;

namespace {

VectorField field(const std::string& text, std::size_t dim) { return parse_vector_field(text, dim); }

std::vector<Rational> rationals(std::initializer_list<long> v)
{
    std::vector<Rational> out;
    for (long x : v) out.emplace_back(x);
    return out;
}

std::vector<Rational> dilate_point(const std::vector<Rational>& x, const std::vector<unsigned>& w, const Rational& t)
{
    std::vector<Rational> out;
    for (std::size_t i = 0; i < x.size(); ++i) {
        Rational s(1);
        for (unsigned k = 0; k < w[i]; ++k) s *= t;
        out.push_back(s * x[i]);
    }
    return out;
}

} // namespace

TEST(LieBracket, Examples)
{
    EXPECT_TRUE(lie_bracket(VectorField::coordinate(2, 0), VectorField::coordinate(2, 1)).is_zero());

    const auto m = test::system("martinet");
    EXPECT_EQ(lie_bracket(m.fields[0], m.fields[1]), field("2*x1*d3", 3));

    const auto h = test::system("heisenberg1");
    EXPECT_EQ(lie_bracket(h.fields[0], h.fields[1]), field("-4*d3", 3));

    EXPECT_THROW(lie_bracket(VectorField::coordinate(2, 0), VectorField::coordinate(3, 0)), DimensionError);
}

TEST(LieBracket, AntisymmetryAndJacobi)
{
    test::Random rnd(21);
    for (int i = 0; i < 200; ++i) {
        const auto x = rnd.field(3), y = rnd.field(3), z = rnd.field(3);
        const auto xy = lie_bracket(x, y);
        EXPECT_EQ(xy, -lie_bracket(y, x));
        EXPECT_TRUE(lie_bracket(x, x).is_zero());
        const auto jac = lie_bracket(x, lie_bracket(y, z)) + lie_bracket(y, lie_bracket(z, x))
                         + lie_bracket(z, xy);
        EXPECT_TRUE(jac.is_zero());
        // the bracket is the commutator of the operators
        const auto f = rnd.polynomial(3, 3, 3);
        EXPECT_EQ(xy.apply(f), x.apply(y.apply(f)) - y.apply(x.apply(f)));
    }
}

TEST(VectorFieldText, RoundTrip)
{
    for (const char* name : {"martinet", "bony3", "heisenberg1", "example6", "r4-fourfields", "grushin-1-1-2"}) {
        const auto sys = test::system(name);
        const auto again = parse_system(to_string(sys));
        EXPECT_EQ(again.name, sys.name);
        EXPECT_EQ(again.weights, sys.weights);
        ASSERT_EQ(again.fields.size(), sys.fields.size());
        for (std::size_t j = 0; j < sys.fields.size(); ++j) EXPECT_EQ(again.fields[j], sys.fields[j]) << name;
    }
    EXPECT_THROW(parse_vector_field("x1*d1*d2", 2), ParseError);
    EXPECT_THROW(parse_vector_field("x1 + d1", 2), ParseError);
    EXPECT_THROW(parse_system("dim = 2\nweights = 1,1\nX1 = d1\nX3 = d2\n"), ParseError);
    EXPECT_THROW(parse_system("dim = 2\nweights = 1,1\ncolour = red\nX1 = d1\n"), ParseError);
    EXPECT_THROW(parse_system("dim = 2\nweights = 1\nX1 = d1\n"), ParseError);
}

TEST(H1, PassesOnFixtures)
{
    for (const char* name : {"martinet", "bony3", "heisenberg1", "example6", "r4-fourfields", "grushin-1-1-2",
                             "ex31", "euclidean3"}) {
        const auto rep = check_h1(test::system(name));
        EXPECT_TRUE(rep.pass) << name;
        EXPECT_TRUE(rep.violations.empty()) << name;
    }
}

TEST(H1, ReportsOffendingMonomial)
{
    const VectorFieldSystem sys("bad", {1, 1}, {field("d1 + x1*d1", 2), field("d2", 2)});
    const auto rep = check_h1(sys);
    EXPECT_FALSE(rep.pass);
    EXPECT_TRUE(rep.shape_ok);
    ASSERT_EQ(rep.violations.size(), 1u);
    EXPECT_EQ(rep.violations[0].field, 0u);
    EXPECT_EQ(rep.violations[0].slot, 0u);
    EXPECT_EQ(rep.violations[0].monomial, "x1");
    EXPECT_EQ(rep.violations[0].weighted_degree, 1u);
    EXPECT_EQ(rep.violations[0].expected_degree, 0);
    EXPECT_EQ(rep.field_pass, (std::vector<bool>{false, true}));
    EXPECT_THROW(enumerate_commutators(sys), HomogeneityError);

    const VectorFieldSystem unsorted("unsorted", {1, 3, 2}, {field("d1", 3)});
    EXPECT_FALSE(check_h1(unsorted).shape_ok);
}

TEST(H2, PassAndFail)
{
    const auto m = test::system("martinet");
    const auto rep = check_h2(m);
    EXPECT_TRUE(rep.pass);
    EXPECT_EQ(rep.rank_at_origin, 3u);
    EXPECT_EQ(rep.spanning_entries.size(), 3u);

    const VectorFieldSystem lonely("lonely", {1, 1}, {VectorField::coordinate(2, 0)});
    const auto bad = check_h2(lonely);
    EXPECT_FALSE(bad.pass);
    EXPECT_EQ(bad.rank_at_origin, 1u);
    EXPECT_TRUE(bad.fields_independent);

    const VectorFieldSystem twice("twice", {1, 1}, {field("d1", 2), field("d2", 2), field("d1 + d2", 2)});
    const auto dep = check_h2(twice);
    EXPECT_EQ(dep.rank_at_origin, 2u);
    EXPECT_FALSE(dep.fields_independent);
    EXPECT_EQ(dep.operator_rank, 2u);
    EXPECT_FALSE(dep.pass);
}

TEST(Commutators, Enumeration)
{
    const auto m = enumerate_commutators(test::system("martinet"));
    ASSERT_EQ(m.size(), 6u);
    const std::vector<std::vector<unsigned>> words{{0}, {1}, {0, 1}, {1, 0}, {0, 0, 1}, {0, 1, 0}};
    for (std::size_t i = 0; i < words.size(); ++i) EXPECT_EQ(m.entries[i].word, words[i]) << i;
    EXPECT_EQ(m.entries[4].field, field("2*d3", 3));
    EXPECT_EQ(m.entries[5].field, field("-2*d3", 3));
    EXPECT_EQ(m.word_counts(), (std::map<unsigned, std::size_t>{{1, 2}, {2, 2}, {3, 2}}));
    EXPECT_EQ(m.canonical_counts(), (std::map<unsigned, std::size_t>{{1, 2}, {2, 1}, {3, 1}}));

    const auto e = enumerate_commutators(test::system("euclidean3"));
    EXPECT_EQ(e.size(), 3u);
    EXPECT_EQ(e.max_length, 1u);

    const auto g = enumerate_commutators(test::system("grushin-1-1-2"));
    EXPECT_EQ(g.word_counts(), (std::map<unsigned, std::size_t>{{1, 2}, {2, 2}, {3, 2}}));
    EXPECT_EQ(g.entries[2].field, field("6*x1*d2", 2));
    EXPECT_EQ(g.entries[4].field, field("6*d2", 2));

    EXPECT_EQ(enumerate_commutators(test::system("martinet"), 2u).size(), 4u);
    EXPECT_EQ(word_to_string({0, 1, 0}), "(1,2,1)");
}

TEST(Commutators, HomogeneityPropagates)
{
    for (const char* name : {"martinet", "bony3", "heisenberg1", "example6", "r4-fourfields", "grushin-1-1-2",
                             "ex31"}) {
        const auto sys = test::system(name);
        const auto basis = enumerate_commutators(sys, sys.max_weight() + 1);
        for (const auto& e : basis.entries) {
            EXPECT_EQ(e.degree, e.word.size());
            EXPECT_TRUE(is_dt_homogeneous(e.field, sys.weights, e.degree)) << name << word_to_string(e.word);
        }
    }
}

TEST(Flags, Examples)
{
    const auto h = enumerate_commutators(test::system("heisenberg1"));
    const auto fh = flag_at(h, rationals({0, 0, 0}));
    EXPECT_EQ(fh.nu, 4u);
    EXPECT_EQ(fh.weights, (std::vector<unsigned>{1, 1, 2}));

    const auto g = enumerate_commutators(test::system("grushin-1-1-2"));
    const auto fg = flag_at(g, rationals({1, 0}));
    EXPECT_EQ(fg.nu, 2u);
    EXPECT_EQ(fg.nonholonomy_degree, 1u);
    EXPECT_EQ(flag_at(g, rationals({0, 7})).nu, 4u);

    const auto m = enumerate_commutators(test::system("martinet"));
    const auto fm = flag_at(m, rationals({0, 0, 0}));
    EXPECT_EQ(fm.nu_j, (std::vector<std::size_t>{2, 2, 3}));
    EXPECT_EQ(fm.nu, 5u);
    EXPECT_TRUE(fm.spans);
    EXPECT_EQ(fm.nonholonomy_degree, 3u);
    const auto off = flag_at(m, rationals({1, 0, 0}));
    EXPECT_EQ(off.nu_j, (std::vector<std::size_t>{2, 3, 3}));
    EXPECT_EQ(off.nu, 4u);

    EXPECT_THROW(flag_at(m, rationals({0, 0})), DimensionError);

    const VectorFieldSystem lonely("lonely", {1, 1}, {VectorField::coordinate(2, 0)});
    const auto fl = flag_at(enumerate_commutators(lonely), rationals({0, 0}));
    EXPECT_FALSE(fl.spans);
    EXPECT_TRUE(fl.weights.empty());
}

TEST(Flags, BoundedByQAndDilationInvariant)
{
    test::Random rnd(33);
    for (const char* name : {"martinet", "bony3", "heisenberg1", "example6", "r4-fourfields", "grushin-1-1-2",
                             "ex31"}) {
        const auto sys = test::system(name);
        const auto basis = enumerate_commutators(sys);
        const unsigned q = homogeneous_dimension(sys);
        for (int i = 0; i < 40; ++i) {
            const auto x = rnd.point(sys.dim());
            const auto f = flag_at(basis, x);
            ASSERT_TRUE(f.spans) << name;
            EXPECT_LE(f.nu, q);
            EXPECT_GE(f.nu, sys.dim());
            for (const Rational t : {Rational(2), make_rational(1, 3)}) {
                const auto ft = flag_at(basis, dilate_point(x, sys.weights, t));
                EXPECT_EQ(ft.nu_j, f.nu_j) << name;
            }
        }
        EXPECT_EQ(flag_at(basis, std::vector<Rational>(sys.dim(), Rational(0))).nu, q) << name;
    }
}
