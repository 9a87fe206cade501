#ifndef HVF_CLI_HPP
#define HVF_CLI_HPP

#include "hvf/hvf.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cctype>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace hvf::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kHypothesis = 2, kProperty = 3 };

/// Failure carried to the error envelope.
struct Failure : std::runtime_error {
    std::string code;
    int exit_code;
    Failure(std::string code_, const std::string& message, int exit = kUsage)
        : std::runtime_error(message), code(std::move(code_)), exit_code(exit)
    {
    }
};

inline std::string error_envelope(const std::string& code, const std::string& message)
{
    return nlohmann::json{{"schema_version", kSchemaVersion}, {"error", {{"code", code}, {"message", message}}}}.dump() + "\n";
}

// ---------------------------------------------------------------------------
// Exact number and list parsing.

/// p, p/q, or a decimal with optional exponent (1.25, -3e-2), converted exactly.
inline Rational parse_exact(std::string_view text)
{
    const std::string s = trim(text);
    if (s.empty()) throw Failure("usage", "empty number");
    if (s.find('/') != std::string::npos || s.find_first_of(".eE") == std::string::npos) {
        try {
            return parse_rational(s[0] == '+' ? s.substr(1) : s);
        } catch (const std::exception&) {
            throw Failure("usage", "bad number '" + s + "'");
        }
    }
    std::size_t i = 0;
    bool neg = false;
    if (s[i] == '+' || s[i] == '-') neg = s[i++] == '-';
    std::string digits;
    long scale = 0;
    bool seen_dot = false, any = false;
    for (; i < s.size() && s[i] != 'e' && s[i] != 'E'; ++i) {
        if (s[i] == '.' && !seen_dot) {
            seen_dot = true;
        } else if (std::isdigit(static_cast<unsigned char>(s[i]))) {
            digits += s[i];
            any = true;
            if (seen_dot) --scale;
        } else {
            throw Failure("usage", "bad number '" + s + "'");
        }
    }
    if (!any) throw Failure("usage", "bad number '" + s + "'");
    if (i < s.size()) {
        const std::string ex = s.substr(i + 1);
        std::size_t used = 0;
        long e = 0;
        try {
            e = std::stol(ex, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (ex.empty() || used != ex.size() || std::labs(e) > 400) throw Failure("usage", "bad number '" + s + "'");
        scale += e;
    }
    mpz_class num(digits, 10), ten = 10, p;
    mpz_pow_ui(p.get_mpz_t(), ten.get_mpz_t(), static_cast<unsigned long>(std::labs(scale)));
    Rational r = scale >= 0 ? Rational(num * p) : Rational(num, p);
    r.canonicalize();
    return neg ? Rational(-r) : r;
}

inline std::vector<Rational> parse_exact_list(std::string_view text)
{
    std::vector<Rational> out;
    for (const auto& tok : split(text, ',')) out.push_back(parse_exact(tok));
    return out;
}

inline std::vector<double> parse_double_list(std::string_view text)
{
    std::vector<double> out;
    for (const auto& v : parse_exact_list(text)) out.push_back(to_double(v));
    return out;
}

inline std::vector<double> to_doubles(std::span<const Rational> v)
{
    std::vector<double> out;
    for (const auto& x : v) out.push_back(to_double(x));
    return out;
}

/// One point per line; blank lines, '#' comments and one header row are skipped.
inline std::vector<std::vector<Rational>> read_points_csv(const std::string& path, std::size_t dim)
{
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const std::exception& e) {
        throw Failure("io_error", e.what());
    }
    std::vector<std::vector<Rational>> pts;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (pts.empty() && !(std::isdigit(static_cast<unsigned char>(t[0])) || t[0] == '-' || t[0] == '+' || t[0] == '.'))
            continue; // header
        auto p = parse_exact_list(t);
        if (p.size() != dim)
            throw Failure("parse_error", path + ":" + std::to_string(line_no) + ": expected " + std::to_string(dim) + " coordinates");
        pts.push_back(std::move(p));
    }
    return pts;
}

inline nlohmann::json json_point(std::span<const Rational> x) { return json_rationals({x.begin(), x.end()}); }

template <class Map>
nlohmann::json json_degree_map(const Map& m)
{
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : m) j[std::to_string(k)] = v;
    return j;
}

template <class Map>
std::string brace_map(const Map& m)
{
    std::string s = "{";
    for (const auto& [k, v] : m) {
        if (s.size() > 1) s += ", ";
        s += std::to_string(k) + ":" + std::to_string(v);
    }
    return s + "}";
}

inline std::string join(const std::vector<std::string>& v, const std::string& sep)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + v[i];
    return s;
}

// ---------------------------------------------------------------------------

struct Context {
    std::filesystem::path out_dir = "hvf-out";
    std::uint64_t seed = 1;
    unsigned jobs = 1;
    std::ostream* out = &std::cout;

    void write(const std::string& name, const std::string& text) const
    {
        try {
            write_text_file(out_dir / name, text);
        } catch (const std::exception& e) {
            throw Failure("io_error", e.what());
        }
    }

    void write_json(const std::string& name, nlohmann::json j) const
    {
        j["schema_version"] = kSchemaVersion;
        write(name, dump_report(j));
    }
};

inline VectorFieldSystem load_system_or_fail(const std::string& path)
{
    try {
        return load_system(path);
    } catch (const ParseError& e) {
        throw Failure("parse_error", path + ": " + e.what());
    } catch (const DimensionError& e) {
        throw Failure("parse_error", path + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw Failure("parse_error", path + ": " + e.what());
    } catch (const std::runtime_error& e) {
        throw Failure("io_error", e.what());
    }
}

template <class F>
auto load_or_fail(const std::string& path, F&& loader)
{
    try {
        return loader(path);
    } catch (const ParseError& e) {
        throw Failure("parse_error", path + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw Failure("parse_error", path + ": " + e.what());
    } catch (const std::runtime_error& e) {
        throw Failure("io_error", e.what());
    }
}

/// H.1 and H.2 gate shared by every subcommand that needs the NSW data.
struct Analysis {
    VectorFieldSystem sys;
    CommutatorBasis basis;
    NSWPolynomial nsw;
};

inline Analysis prepare(const std::string& path)
{
    Analysis a;
    a.sys = load_system_or_fail(path);
    const auto h1 = check_h1(a.sys);
    if (!h1.pass) throw Failure("hypothesis_failure", "H.1 fails for " + path, kHypothesis);
    a.basis = enumerate_commutators(a.sys);
    if (!check_h2(a.sys, a.basis).pass) throw Failure("hypothesis_failure", "H.2 fails for " + path, kHypothesis);
    a.nsw = build_nsw(a.basis);
    return a;
}

inline std::vector<std::vector<Rational>> default_points(std::size_t n)
{
    std::vector<std::vector<Rational>> pts;
    pts.emplace_back(n, Rational(0));
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<Rational> e(n, Rational(0));
        e[i] = 1;
        pts.push_back(std::move(e));
    }
    pts.emplace_back(n, Rational(1));
    return pts;
}

// ---------------------------------------------------------------------------
// analyze

inline int cmd_analyze(const Context& ctx, const std::string& spec, const std::string& points_path)
{
    auto& os = *ctx.out;
    const auto sys = load_system_or_fail(spec);
    nlohmann::json j;
    j["command"] = "analyze";
    std::vector<std::string> fields;
    for (const auto& f : sys.fields) fields.push_back(to_string(f));
    j["system"] = {{"name", sys.name}, {"dim", sys.dim()}, {"weights", sys.weights}, {"fields", fields}};
    const unsigned Q = homogeneous_dimension(sys);
    j["Q"] = Q;
    os << "system " << sys.name << ": n = " << sys.dim() << ", m = " << sys.field_count() << ", weights ";
    for (std::size_t i = 0; i < sys.dim(); ++i) os << (i ? "," : "") << sys.weights[i];
    os << "\n";

    const auto h1 = check_h1(sys);
    nlohmann::json viol = nlohmann::json::array();
    for (const auto& v : h1.violations)
        viol.push_back({{"field", v.field + 1}, {"slot", v.slot + 1}, {"monomial", v.monomial},
                        {"weighted_degree", v.weighted_degree}, {"expected_degree", v.expected_degree}});
    j["h1"] = {{"pass", h1.pass}, {"shape_ok", h1.shape_ok}, {"violations", viol}, {"notes", h1.notes}};
    os << "H.1 " << (h1.pass ? "pass" : "FAIL") << "\n";
    if (!h1.pass) {
        for (const auto& n : h1.notes) os << "  " << n << "\n";
        ctx.write_json("analyze.json", j);
        return kHypothesis;
    }

    const auto basis = enumerate_commutators(sys);
    j["commutators"] = {{"max_length", basis.max_length},
                        {"order", basis.order},
                        {"entries", basis.size()},
                        {"word_counts", json_degree_map(basis.word_counts())},
                        {"canonical_counts", json_degree_map(basis.canonical_counts())}};
    const auto h2 = check_h2(sys, basis);
    std::vector<std::string> spanning;
    for (auto i : h2.spanning_entries) spanning.push_back(word_to_string(basis.entries[i].word));
    j["h2"] = {{"pass", h2.pass},
               {"rank_at_origin", h2.rank_at_origin},
               {"fields_independent", h2.fields_independent},
               {"operator_rank", h2.operator_rank},
               {"spanning_words", spanning}};
    os << "H.2 " << (h2.pass ? "pass" : "FAIL") << " (rank " << h2.rank_at_origin << " at 0)\n";
    os << "Q = " << Q << "\n";
    os << "basis degrees " << brace_map(basis.canonical_counts()) << " (nonzero canonical entries; "
       << basis.size() << " words)\n";
    if (!h2.pass) {
        ctx.write_json("analyze.json", j);
        return kHypothesis;
    }

    const auto nsw = build_nsw(basis);
    std::map<unsigned, std::size_t> per_degree;
    for (const auto& [k, v] : nsw.slots) per_degree[k] = v.size();
    j["nsw"] = {{"entries_per_degree", json_degree_map(per_degree)},
                {"field_classes", nsw.field_classes},
                {"ordered_tuples_total", nsw.ordered_tuples_total},
                {"nonzero_ordered_tuples", nsw.nonzero_ordered_tuples},
                {"determinants_evaluated", nsw.determinants_evaluated}};
    os << "NSW entries per degree " << brace_map(per_degree) << "\n";

    const auto tr = translation_directions(sys);
    std::vector<std::size_t> dirs;
    for (auto d : tr.directions) dirs.push_back(d + 1);
    j["translation_directions"] = dirs;

    const auto pts = points_path.empty() ? default_points(sys.dim()) : read_points_csv(points_path, sys.dim());
    nlohmann::json table = nlohmann::json::array();
    os << "nu table:\n";
    for (const auto& x : pts) {
        const auto flag = flag_at(basis, x);
        const unsigned nu = pointwise_nu(nsw, x);
        table.push_back({{"point", json_point(x)},
                         {"nu", nu},
                         {"flag_nu", flag.nu},
                         {"nu_j", flag.nu_j},
                         {"weights", flag.weights},
                         {"nonholonomy_degree", flag.nonholonomy_degree}});
        std::vector<std::string> xs;
        for (const auto& v : x) xs.push_back(to_string(v));
        os << "  (" << join(xs, ", ") << ")  nu = " << nu << "\n";
    }
    j["nu_table"] = table;
    ctx.write_json("analyze.json", j);
    return kOk;
}

// ---------------------------------------------------------------------------
// nu, nsw

inline int cmd_nu(const Context& ctx, const std::string& spec, const std::string& points_path)
{
    const auto a = prepare(spec);
    const auto pts = read_points_csv(points_path, a.sys.dim());
    std::vector<std::string> header;
    for (std::size_t i = 0; i < a.sys.dim(); ++i) header.push_back("x" + std::to_string(i + 1));
    header.push_back("nu");
    header.push_back("in_H");
    CsvTable csv(header);
    std::size_t in_h = 0;
    for (const auto& x : pts) {
        const unsigned nu = pointwise_nu(a.nsw, x);
        std::vector<std::string> row;
        for (const auto& v : x) row.push_back(to_string(v));
        row.push_back(std::to_string(nu));
        row.push_back(nu == a.nsw.Q ? "1" : "0");
        in_h += nu == a.nsw.Q;
        csv.row(row);
    }
    ctx.write("nu.csv", csv.str());
    *ctx.out << pts.size() << " points, " << in_h << " with nu = Q = " << a.nsw.Q << "\n";
    return kOk;
}

inline int cmd_nsw(const Context& ctx, const std::string& spec, const std::string& points_path, const std::string& radii)
{
    const auto a = prepare(spec);
    auto j = nsw_to_json(a.nsw);
    j["command"] = "nsw";
    ctx.write_json("nsw.json", j);
    *ctx.out << "Q = " << a.nsw.Q << ", " << a.nsw.entry_count() << " distinct lambda_I over " << a.nsw.slots.size()
             << " degrees\n";
    if (!points_path.empty()) {
        const auto pts = read_points_csv(points_path, a.sys.dim());
        const auto rs = parse_exact_list(radii.empty() ? "1" : radii);
        std::vector<std::string> header;
        for (std::size_t i = 0; i < a.sys.dim(); ++i) header.push_back("x" + std::to_string(i + 1));
        for (const char* h : {"r", "lambda", "lambda_exact"}) header.emplace_back(h);
        CsvTable csv(header);
        for (const auto& x : pts)
            for (const auto& r : rs) {
                const auto v = eval_lambda(a.nsw, x, r);
                std::vector<std::string> row;
                for (const auto& c : x) row.push_back(to_string(c));
                row.push_back(to_string(r));
                row.push_back(format_double(to_double(v)));
                row.push_back(to_string(v));
                csv.row(row);
            }
        ctx.write("lambda.csv", csv.str());
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// dist, ballvol

struct DistArgs {
    std::string source, lo, hi;
    std::size_t nodes = 0;
    double cutoff = kInf;
    std::size_t random_controls = 0;
};

inline int cmd_dist(const Context& ctx, const std::string& spec, const DistArgs& args)
{
    const auto sys = load_system_or_fail(spec);
    const std::size_t n = sys.dim();
    const auto src = args.source.empty() ? std::vector<double>(n, 0.0) : parse_double_list(args.source);
    if (src.size() != n) throw Failure("usage", "--source needs " + std::to_string(n) + " coordinates");
    LatticeSpec lat;
    if (args.lo.empty() && args.hi.empty()) {
        const double r = std::isfinite(args.cutoff) ? args.cutoff : 1.0;
        BallLatticeOptions bo;
        bo.seed = ctx.seed;
        bo.random_controls = args.random_controls;
        if (args.nodes) bo.node_budget = static_cast<std::size_t>(std::pow(static_cast<double>(args.nodes), n));
        lat = ball_lattice(sys, src, r, bo);
    } else {
        lat.lo = parse_double_list(args.lo);
        lat.hi = parse_double_list(args.hi);
        if (lat.lo.size() != n || lat.hi.size() != n) throw Failure("usage", "--lo/--hi need one value per axis");
        lat.nodes.assign(n, args.nodes ? args.nodes : 41);
        lat.seed = ctx.seed;
        lat.random_controls = args.random_controls;
    }
    DistanceField df;
    try {
        df = distance_field(sys, src, lat, args.cutoff);
    } catch (const std::invalid_argument& e) {
        throw Failure("invalid_argument", e.what());
    }
    std::vector<std::string> header;
    for (std::size_t i = 0; i < n; ++i) header.push_back("x" + std::to_string(i + 1));
    header.emplace_back("d");
    CsvTable csv(header);
    std::size_t finite = 0;
    for (std::size_t i = 0; i < df.values.size(); ++i) {
        if (!std::isfinite(df.values[i])) continue;
        ++finite;
        std::vector<std::string> row;
        for (double v : lat.point(i)) row.push_back(format_double(v));
        row.push_back(format_double(df.values[i]));
        csv.row(row);
    }
    ctx.write("dist.csv", csv.str());
    ctx.write_json("dist.json", {{"command", "dist"},
                                 {"source", json_doubles(src)},
                                 {"lo", json_doubles(lat.lo)},
                                 {"hi", json_doubles(lat.hi)},
                                 {"nodes", lat.nodes},
                                 {"cutoff", json_double(args.cutoff)},
                                 {"tau0", json_double(df.tau0)},
                                 {"tau_levels", df.tau_levels},
                                 {"controls", df.controls},
                                 {"reached", finite}});
    *ctx.out << finite << " of " << df.values.size() << " nodes reached\n";
    return kOk;
}

inline int cmd_ballvol(const Context& ctx, const std::string& spec, const std::string& centers_text,
                       const std::string& radii_text, std::size_t budget, double max_spread)
{
    const auto a = prepare(spec);
    const std::size_t n = a.sys.dim();
    std::vector<std::vector<double>> centers;
    for (const auto& c : split(centers_text.empty() ? std::string(n, '0') : centers_text, ';')) {
        auto x = parse_double_list(c);
        if (x.size() != n) throw Failure("usage", "each --centers entry needs " + std::to_string(n) + " coordinates");
        centers.push_back(std::move(x));
    }
    if (centers_text.empty()) centers = {std::vector<double>(n, 0.0)};
    const auto radii = parse_double_list(radii_text.empty() ? "1" : radii_text);
    BallLatticeOptions bo;
    bo.seed = ctx.seed;
    bo.node_budget = budget;
    BallBoxReport rep;
    try {
        rep = ball_box_scan(a.sys, a.nsw, centers, radii, bo);
    } catch (const std::domain_error& e) {
        throw Failure("invalid_argument", e.what());
    }
    std::vector<std::string> header;
    for (std::size_t i = 0; i < n; ++i) header.push_back("x" + std::to_string(i + 1));
    for (const char* h : {"r", "volume", "lambda", "ratio", "truncated"}) header.emplace_back(h);
    CsvTable csv(header);
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : rep.rows) {
        std::vector<std::string> row;
        for (double v : r.center) row.push_back(format_double(v));
        for (double v : {r.radius, r.volume, r.lambda, r.ratio}) row.push_back(format_double(v));
        row.push_back(r.truncated ? "1" : "0");
        csv.row(row);
    }
    ctx.write("ballvol.csv", csv.str());
    const bool ok = !(max_spread > 0) || rep.spread() <= max_spread;
    ctx.write_json("ballvol.json", {{"command", "ballvol"},
                                    {"min_ratio", json_double(rep.min_ratio)},
                                    {"max_ratio", json_double(rep.max_ratio)},
                                    {"spread", json_double(rep.spread())},
                                    {"max_spread", json_double(max_spread)},
                                    {"any_truncated", rep.any_truncated},
                                    {"pass", ok}});
    *ctx.out << "ratio |B|/Lambda in [" << format_double(rep.min_ratio) << ", " << format_double(rep.max_ratio)
             << "], spread " << format_double(rep.spread());
    if (max_spread > 0) *ctx.out << (ok ? "  PASS" : "  FAIL") << " (bound " << format_double(max_spread) << ")";
    *ctx.out << "\n";
    return ok ? kOk : kProperty;
}

// ---------------------------------------------------------------------------
// growth

inline int cmd_growth(const Context& ctx, const std::string& spec, const std::string& domain_path,
                      const std::string& kappa_text, const std::string& mode_text, const DomainPlanOptions& plan_opt)
{
    const auto a = prepare(spec);
    const auto dom = load_or_fail(domain_path, [](const std::string& p) { return load_domain(p); });
    if (dom.dim() != a.sys.dim()) throw Failure("usage", "domain dimension differs from the system");
    GrowthMode mode;
    if (mode_text == "proxy") mode = GrowthMode::LambdaProxy;
    else if (mode_text == "measured") mode = GrowthMode::Measured;
    else throw Failure("usage", "--mode must be proxy or measured");
    const auto kappas = parse_double_list(kappa_text);
    GrowthScan scan;
    try {
        BallLatticeOptions bo;
        bo.seed = ctx.seed;
        scan = growth_exponent_scan(a.sys, a.nsw, plan_from_domain(dom, plan_opt), kappas, mode, bo);
    } catch (const std::invalid_argument& e) {
        throw Failure("invalid_argument", e.what());
    }
    const auto plan = plan_from_domain(dom, plan_opt);
    CsvTable csv({"level", "cut", "kappa", "infimum", "argmin_x", "argmin_r"});
    nlohmann::json levels = nlohmann::json::array();
    auto& os = *ctx.out;
    os << "infimum of |B|/r^kappa (" << mode_text << ") as the sweep widens:\n  cut        ";
    for (double k : kappas) os << "  kappa=" << format_double(k) << "  ";
    os << "\n";
    for (std::size_t l = 0; l < scan.cuts.size(); ++l) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "  %-11s", format_double(scan.cuts[l]).c_str());
        os << buf;
        for (std::size_t k = 0; k < kappas.size(); ++k) {
            const auto& s = plan.samples[scan.argmin[l][k]];
            std::vector<std::string> xs;
            for (double v : s.x) xs.push_back(format_double(v));
            csv.row({std::to_string(l + 1), format_double(scan.cuts[l]), format_double(kappas[k]),
                     format_double(scan.infimum[l][k]), join(xs, " "), format_double(s.r)});
            std::snprintf(buf, sizeof buf, "  %-13s", format_double(scan.infimum[l][k]).c_str());
            os << buf;
        }
        os << "\n";
        levels.push_back({{"cut", json_double(scan.cuts[l])}, {"infimum", json_doubles(scan.infimum[l])}});
    }
    const auto e2e = scan.end_to_end();
    os << "  last/first";
    for (double v : e2e) os << "   " << format_double(v);
    os << "\n";
    ctx.write("growth.csv", csv.str());
    ctx.write_json("growth.json", {{"command", "growth"},
                                   {"mode", mode_text},
                                   {"kappas", json_doubles(kappas)},
                                   {"samples", plan.samples.size()},
                                   {"levels", levels},
                                   {"end_to_end", json_doubles(e2e)}});
    return kOk;
}

// ---------------------------------------------------------------------------
// verify-auto

inline int cmd_verify_auto(const Context& ctx, const std::string& spec, const std::string& family_path, std::size_t pair_count)
{
    const auto a = prepare(spec);
    const auto fam = load_or_fail(family_path, [](const std::string& p) { return load_family(p); });
    const auto hs = sample_h(fam, 2 * pair_count, ctx.seed);
    std::vector<std::pair<std::vector<Rational>, std::vector<Rational>>> pairs;
    for (std::size_t i = 0; i + 1 < hs.size(); i += 2) pairs.emplace_back(hs[i], hs[i + 1]);
    FamilyReport rep;
    try {
        rep = verify_transitive_family(a.sys, a.nsw, fam, pairs);
    } catch (const DimensionError& e) {
        throw Failure("usage", e.what());
    }
    nlohmann::json residuals = nlohmann::json::array();
    for (const auto& field : rep.certificate.residuals) {
        nlohmann::json r = nlohmann::json::array();
        for (const auto& c : field) r.push_back(to_string(c));
        residuals.push_back(r);
    }
    std::size_t pairs_ok = 0;
    for (const auto& p : rep.pairs) pairs_ok += p.p_in_h && p.q_in_h && p.w_in_h && p.maps_p_to_q;
    ctx.write_json("verify-auto.json", {{"command", "verify-auto"},
                                        {"family", fam.name},
                                        {"identity_at_zero", rep.identity_at_zero},
                                        {"certificate_pass", rep.certificate.pass},
                                        {"unimodular", rep.certificate.unimodular},
                                        {"jacobian_det", to_string(rep.certificate.jacobian_det)},
                                        {"residuals", residuals},
                                        {"pairs", rep.pairs.size()},
                                        {"pairs_pass", pairs_ok},
                                        {"failures", rep.failures},
                                        {"pass", rep.pass}});
    *ctx.out << (rep.pass ? "PASS" : "FAIL") << " " << fam.name << ": T(w,0)=w " << (rep.identity_at_zero ? "yes" : "no")
             << ", automorphism on H " << (rep.certificate.pass ? "yes" : "no") << ", pairs " << pairs_ok << "/"
             << rep.pairs.size() << "\n";
    for (const auto& f : rep.failures) *ctx.out << "  " << f << "\n";
    return rep.pass ? kOk : kProperty;
}

// ---------------------------------------------------------------------------
// probe-exponent

struct ProbeArgs {
    std::string kappas, ts, center, domain;
    double width = 1;
    std::size_t nodes = 0;
};

inline int cmd_probe_exponent(const Context& ctx, const std::string& spec, const ProbeArgs& args)
{
    const auto sys = load_system_or_fail(spec);
    const std::size_t n = sys.dim();
    const unsigned Q = homogeneous_dimension(sys);
    const auto kappas = args.kappas.empty() ? std::vector<double>{static_cast<double>(Q)} : parse_double_list(args.kappas);
    std::vector<double> ts;
    if (args.ts.empty())
        for (int k = 0; k <= 16; k += 2) ts.push_back(std::ldexp(1.0, -k));
    else
        ts = parse_double_list(args.ts);
    ExponentProbeOptions po;
    if (!args.center.empty()) po.center = parse_double_list(args.center);
    if (!po.center.empty() && po.center.size() != n) throw Failure("usage", "--center needs one value per axis");
    po.nodes_per_axis = args.nodes;
    std::optional<DomainSpec> omega;
    if (!args.domain.empty()) omega = load_or_fail(args.domain, [](const std::string& p) { return load_domain(p); });
    const std::vector<double> origin(n, 0.0);
    const auto seed_fn = homogeneous_bump(origin, sys.weights, args.width);
    std::vector<double> half(n);
    for (std::size_t i = 0; i < n; ++i) half[i] = std::pow(args.width, sys.weights[i]);
    CsvTable csv({"kappa", "t", "norm", "variation", "ratio"});
    nlohmann::json reports = nlohmann::json::array();
    for (double k : kappas) {
        ExponentProbeReport rep;
        try {
            rep = exponent_probe(sys, omega ? &*omega : nullptr, k, seed_fn, half, ts, po);
        } catch (const SupportEscape& e) {
            throw Failure("support_escape", e.what(), kProperty);
        } catch (const std::domain_error& e) {
            throw Failure("invalid_argument", e.what());
        }
        for (const auto& r : rep.rows)
            csv.row({format_double(k), format_double(r.t), format_double(r.norm), format_double(r.variation),
                     format_double(r.ratio)});
        reports.push_back({{"kappa", json_double(k)},
                           {"slope", json_double(rep.slope)},
                           {"scaling_slope", json_double(rep.scaling_slope)},
                           {"growth", json_double(rep.growth)},
                           {"spread", json_double(rep.spread)}});
        *ctx.out << "kappa " << format_double(k) << ": slope " << format_double(rep.slope) << " (1 - Q/kappa = "
                 << format_double(rep.scaling_slope) << "), R(t_min)/R(t_max) " << format_double(rep.growth) << "\n";
    }
    ctx.write("probe.csv", csv.str());
    ctx.write_json("probe.json", {{"command", "probe-exponent"}, {"Q", Q}, {"ts", json_doubles(ts)}, {"reports", reports}});
    return kOk;
}

// ---------------------------------------------------------------------------
// sobolev

struct SobolevArgs {
    std::string center, half, h, family, dump;
    double p = 2;
    std::size_t max_iter = 20000, patience = 50;
    double tol = 1e-6;
    unsigned starts = 3;
    double width = 0;
    std::size_t levy_centers = 8;
    bool diagnostics = true;
};

inline int cmd_sobolev(const Context& ctx, const std::string& spec, const SobolevArgs& args)
{
    const auto sys = load_system_or_fail(spec);
    const std::size_t n = sys.dim();
    const unsigned Q = homogeneous_dimension(sys);
    if (!(args.p > 1 && args.p < Q)) throw Failure("usage", "--p must lie in (1, Q)");
    if (Q < 3) throw Failure("usage", "minimisation needs Q >= 3");
    auto per_axis = [&](const std::string& text, double fallback, const char* what) {
        if (text.empty()) return std::vector<double>(n, fallback);
        auto v = parse_double_list(text);
        if (v.size() == 1) v.assign(n, v[0]);
        if (v.size() != n) throw Failure("usage", std::string(what) + " needs 1 or " + std::to_string(n) + " values");
        return v;
    };
    const auto center = per_axis(args.center, 0.0, "--center");
    if (args.half.empty()) throw Failure("usage", "--half is required");
    const auto half = per_axis(args.half, 0.0, "--half");
    const auto h = per_axis(args.h, 0.25, "--spacing");
    std::shared_ptr<const GridDomain> g;
    try {
        g = std::make_shared<GridDomain>(GridDomain::box(center, half, h));
    } catch (const std::exception& e) {
        throw Failure("invalid_argument", e.what());
    }
    std::optional<TransitiveFamily> fam;
    if (!args.family.empty()) fam = load_or_fail(args.family, [](const std::string& p) { return load_family(p); });

    MinimizeOptions mo;
    mo.starts = args.starts;
    mo.max_iterations = args.max_iter;
    mo.patience = args.patience;
    mo.tolerance = args.tol;
    mo.width = args.width;
    mo.jobs = ctx.jobs;
    // start at an H point inside the box when a family is given
    std::vector<std::vector<double>> h_points;
    if (fam) {
        for (const auto& x : sample_h(*fam, 256, ctx.seed)) {
            const auto xd = to_doubles(x);
            const auto idx = g->nearest(xd);
            if (idx && !g->mask[*idx]) h_points.push_back(g->point(*idx));
            if (h_points.size() == args.levy_centers) break;
        }
    }
    std::vector<Rational> center_q;
    for (double v : center) center_q.push_back(snap_to_rational(v));
    const bool center_in_h = fam && fam->in_h(center_q);
    if (fam && !center_in_h && !h_points.empty()) mo.centers = {h_points.front()};
    MinimizeResult res;
    try {
        res = minimize_quotient(sys, g, args.p, mo);
    } catch (const std::domain_error& e) {
        throw Failure("invalid_argument", e.what());
    }

    CsvTable trace({"iteration", "quotient", "step", "backtracks"});
    for (const auto& r : res.trace)
        trace.row({std::to_string(r.iteration), format_double(r.quotient), format_double(r.step), std::to_string(r.backtracks)});
    ctx.write("trace.csv", trace.str());

    nlohmann::json j{{"command", "sobolev"},
                     {"system", sys.name},
                     {"Q", Q},
                     {"p", json_double(res.p)},
                     {"p_star", json_double(res.p_star)},
                     {"box", {{"lo", json_doubles(g->lo)}, {"hi", json_doubles(g->hi)}, {"nodes", g->nodes}}},
                     {"h", json_doubles(h)},
                     {"constant", json_double(res.constant)},
                     {"iterations", res.iterations},
                     {"converged", res.converged},
                     {"start_constants", json_doubles(res.start_constants)},
                     {"best_start", res.best_start}};
    if (args.diagnostics) {
        nlohmann::json diag;
        try {
            const auto fit = decay_about_peak(sys, res.u);
            diag["decay"] = {{"exponent", json_double(fit.exponent)},
                             {"expected", json_double((args.p - Q) / (args.p - 1))},
                             {"r2", json_double(fit.r2)},
                             {"residual", json_double(fit.residual)},
                             {"inner", json_double(fit.inner)},
                             {"outer", json_double(fit.outer)},
                             {"accepted", fit.accepted},
                             {"reason", fit.reason}};
        } catch (const std::invalid_argument& e) {
            diag["decay"] = {{"error", e.what()}};
        }
        auto centers = h_points.empty() ? std::vector<std::vector<double>>{res.u.domain->point(
                                              static_cast<std::size_t>(std::max_element(res.u.values.begin(), res.u.values.end())
                                                                       - res.u.values.begin()))}
                                        : h_points;
        const auto geo = levy_geometry(sys, g, centers);
        double dmax = 0;
        for (const auto& d : geo.distance)
            for (double v : d)
                if (std::isfinite(v)) dmax = std::max(dmax, v);
        std::vector<double> rho;
        const double rmin = *std::min_element(h.begin(), h.end());
        for (int k = 0; k < 24; ++k) rho.push_back(rmin * std::pow(std::max(dmax, 2 * rmin) / rmin, k / 23.0));
        const auto lev = levy_concentration({res.u}, rho, geo, res.p_star);
        diag["levy"] = {{"centers_sampled", centers.size()},
                        {"center", json_doubles(lev.center[0])},
                        {"half_radius", json_double(lev.half_radius[0])},
                        {"mass_at_infinity", json_double(lev.mass_at_infinity[0])}};
        j["diagnostics"] = diag;
    }
    if (!args.dump.empty()) {
        try {
            write_grid(res.u, (ctx.out_dir / args.dump).string());
        } catch (const std::exception& e) {
            throw Failure("io_error", e.what());
        }
        j["dump"] = args.dump;
    }
    ctx.write_json("sobolev.json", j);
    *ctx.out << "C = " << format_double(res.constant) << " after " << res.iterations << " iterations"
             << (res.converged ? "" : " (not converged)") << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------

/// Parses args (without the program name) and dispatches. Errors go to `err`
/// as a one-line JSON envelope.
inline int run(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"Analysis toolkit for homogeneous Hoermander vector fields"};
    app.require_subcommand(1);
    Context ctx;
    ctx.out = &out;
    std::string out_dir = "hvf-out";
    app.add_option("--out", out_dir, "output directory")->capture_default_str();
    app.add_option("--seed", ctx.seed, "seed for every sampled quantity")->capture_default_str();
    app.add_option("--jobs", ctx.jobs, "worker threads")->capture_default_str()->check(CLI::PositiveNumber);

    std::function<int()> action;
    std::string spec, points, radii, domain, family, kappa, mode = "proxy", centers;
    std::size_t pairs = 8, budget = 0;
    double max_spread = 0;

    auto* analyze = app.add_subcommand("analyze", "H.1/H.2 checks, Q, commutators and a nu table");
    analyze->add_option("spec", spec, "system file")->required();
    analyze->add_option("--points", points, "CSV of sample points for the nu table");
    analyze->callback([&] { action = [&] { return cmd_analyze(ctx, spec, points); }; });

    auto* nu = app.add_subcommand("nu", "pointwise homogeneous dimension at CSV points");
    nu->add_option("spec", spec)->required();
    nu->add_option("--points", points)->required();
    nu->callback([&] { action = [&] { return cmd_nu(ctx, spec, points); }; });

    auto* nsw = app.add_subcommand("nsw", "NSW polynomial export");
    nsw->add_option("spec", spec)->required();
    nsw->add_option("--points", points, "CSV of points for a Lambda table");
    nsw->add_option("--radii", radii, "comma-separated radii for the Lambda table");
    nsw->callback([&] { action = [&] { return cmd_nsw(ctx, spec, points, radii); }; });

    DistArgs dist_args;
    auto* dist = app.add_subcommand("dist", "subunit distance field from one source");
    dist->add_option("spec", spec)->required();
    dist->add_option("--source", dist_args.source);
    dist->add_option("--lo", dist_args.lo);
    dist->add_option("--hi", dist_args.hi);
    dist->add_option("--nodes", dist_args.nodes, "nodes per axis");
    dist->add_option("--cutoff", dist_args.cutoff);
    dist->add_option("--controls", dist_args.random_controls, "random controls (0: 2m^2)");
    dist->callback([&] { action = [&] { return cmd_dist(ctx, spec, dist_args); }; });

    auto* ballvol = app.add_subcommand("ballvol", "ball volumes against Lambda");
    ballvol->add_option("spec", spec)->required();
    ballvol->add_option("--centers", centers, "points separated by ';'");
    ballvol->add_option("--radii", radii);
    ballvol->add_option("--budget", budget, "lattice nodes per ball");
    ballvol->add_option("--max-spread", max_spread, "fail (exit 3) above this max/min ratio");
    ballvol->callback([&] { action = [&] { return cmd_ballvol(ctx, spec, centers, radii, budget, max_spread); }; });

    DomainPlanOptions plan_opt;
    auto* growth = app.add_subcommand("growth", "volume growth exponent scan over a domain");
    growth->add_option("spec", spec)->required();
    growth->add_option("--domain", domain)->required();
    growth->add_option("--kappa", kappa)->required();
    growth->add_option("--mode", mode, "proxy or measured")->capture_default_str();
    growth->add_option("--levels", plan_opt.levels)->capture_default_str();
    growth->add_option("--sweep-axis", plan_opt.sweep_axis, "0-based axis of the sweep key")->capture_default_str();
    growth->add_option("--r-min", plan_opt.r_min_quarter, "smallest radius 2^(s/4)")->capture_default_str();
    growth->add_option("--r-max", plan_opt.r_max_quarter, "largest radius 2^(s/4)")->capture_default_str();
    growth->callback([&] { action = [&] { return cmd_growth(ctx, spec, domain, kappa, mode, plan_opt); }; });

    auto* verify = app.add_subcommand("verify-auto", "certify a transitive family of automorphisms");
    verify->add_option("spec", spec)->required();
    verify->add_option("family", family)->required();
    verify->add_option("--pairs", pairs)->capture_default_str();
    verify->callback([&] { action = [&] { return cmd_verify_auto(ctx, spec, family, pairs); }; });

    ProbeArgs probe_args;
    auto* probe = app.add_subcommand("probe-exponent", "R(t) for dilated bumps");
    probe->add_option("spec", spec)->required();
    probe->add_option("--kappa", probe_args.kappas, "comma-separated exponents (default Q)");
    probe->add_option("--t", probe_args.ts, "comma-separated scales (default 2^0 .. 2^-16)");
    probe->add_option("--center", probe_args.center);
    probe->add_option("--domain", probe_args.domain, "domain file; u_t must stay inside");
    probe->add_option("--width", probe_args.width)->capture_default_str();
    probe->add_option("--nodes", probe_args.nodes, "grid nodes per axis");
    probe->callback([&] { action = [&] { return cmd_probe_exponent(ctx, spec, probe_args); }; });

    SobolevArgs sob;
    bool no_diag = false;
    auto* sobolev = app.add_subcommand("sobolev", "minimise the discrete Sobolev quotient on a box");
    sobolev->add_option("spec", spec)->required();
    sobolev->add_option("--center", sob.center);
    sobolev->add_option("--half", sob.half, "box half-widths")->required();
    sobolev->add_option("--spacing", sob.h, "grid spacing h per axis")->capture_default_str();
    sobolev->add_option("--p", sob.p)->capture_default_str();
    sobolev->add_option("--max-iter", sob.max_iter)->capture_default_str();
    sobolev->add_option("--tol", sob.tol)->capture_default_str();
    sobolev->add_option("--patience", sob.patience)->capture_default_str();
    sobolev->add_option("--starts", sob.starts)->capture_default_str()->check(CLI::PositiveNumber);
    sobolev->add_option("--width", sob.width, "first bump width (0: a quarter of the box)");
    sobolev->add_option("--family", sob.family, "family file; H samples seed the starts and the Levy centres");
    sobolev->add_option("--levy-centers", sob.levy_centers)->capture_default_str();
    sobolev->add_option("--dump", sob.dump, "grid dump stem inside --out");
    sobolev->add_flag("--no-diagnostics", no_diag);
    sobolev->callback([&] {
        sob.diagnostics = !no_diag;
        action = [&] { return cmd_sobolev(ctx, spec, sob); };
    });

    try {
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << error_envelope("usage", e.what());
        return kUsage;
    }
    ctx.out_dir = out_dir;
    const unsigned saved_jobs = default_jobs();
    default_jobs() = ctx.jobs;
    int code = kOk;
    try {
        code = action();
    } catch (const Failure& f) {
        err << error_envelope(f.code, f.what());
        code = f.exit_code;
    } catch (const HomogeneityError& e) {
        err << error_envelope("hypothesis_failure", e.what());
        code = kHypothesis;
    } catch (const ParseError& e) {
        err << error_envelope("parse_error", e.what());
        code = kUsage;
    } catch (const std::exception& e) {
        err << error_envelope("runtime_error", e.what());
        code = kUsage;
    }
    default_jobs() = saved_jobs;
    return code;
}

} // namespace hvf::cli

#endif
