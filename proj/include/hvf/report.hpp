#ifndef HVF_REPORT_HPP
#define HVF_REPORT_HPP

#include "hvf/rational.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hvf {

inline constexpr int kSchemaVersion = 1;

/// Floats are always printed with 12 significant digits.
inline std::string format_double(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

/// JSON number rounded to 12 significant digits (non-finite values become strings).
inline nlohmann::json json_double(double v)
{
    if (!std::isfinite(v)) return format_double(v);
    return std::stod(format_double(v));
}

inline nlohmann::json json_doubles(const std::vector<double>& v)
{
    auto out = nlohmann::json::array();
    for (double x : v) out.push_back(json_double(x));
    return out;
}

inline nlohmann::json json_rationals(const std::vector<Rational>& v)
{
    auto out = nlohmann::json::array();
    for (const auto& x : v) out.push_back(to_string(x));
    return out;
}

class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    CsvTable& row(std::vector<std::string> cells)
    {
        if (cells.size() != header_.size()) throw std::logic_error("csv row width differs from the header");
        rows_.push_back(std::move(cells));
        return *this;
    }

    std::string str() const
    {
        std::ostringstream os;
        write_line(os, header_);
        for (const auto& r : rows_) write_line(os, r);
        return os.str();
    }

    std::size_t size() const { return rows_.size(); }

private:
    static void write_line(std::ostream& os, const std::vector<std::string>& cells)
    {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) os << ',';
            const auto& c = cells[i];
            if (c.find_first_of(",\"\n") == std::string::npos) {
                os << c;
            } else {
                os << '"';
                for (char ch : c) os << (ch == '"' ? "\"\"" : std::string(1, ch));
                os << '"';
            }
        }
        os << '\n';
    }

    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

inline void write_text_file(const std::filesystem::path& path, const std::string& text)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << text;
}

inline std::string dump_report(const nlohmann::json& j) { return j.dump(2) + "\n"; }

} // namespace hvf

#endif
