#ifndef HVF_PARSE_HPP
#define HVF_PARSE_HPP

#include "hvf/polynomial.hpp"

#include <cctype>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hvf {

class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

// Recursive-descent parser for polynomial expressions over a fixed list of
// variable names:
//   expr   := term (('+'|'-') term)*
//   term   := unary (('*'|'/') unary)*      division by constants only
//   unary  := ('+'|'-') unary | power
//   power  := atom ('^' integer)?
//   atom   := integer | name | '(' expr ')'
class ExprParser {
public:
    ExprParser(std::string_view text, std::span<const std::string> names) : text_(text), names_(names) {}

    Polynomial parse()
    {
        Polynomial p = expr();
        skip_ws();
        if (pos_ != text_.size()) fail("unexpected trailing input");
        return p;
    }

private:
    [[noreturn]] void fail(const std::string& what) const
    {
        throw ParseError(what + " at offset " + std::to_string(pos_) + " in '" + std::string(text_) + "'");
    }

    void skip_ws()
    {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool accept(char c)
    {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    Polynomial expr()
    {
        Polynomial acc = term();
        for (;;) {
            if (accept('+')) acc += term();
            else if (accept('-')) acc -= term();
            else return acc;
        }
    }

    Polynomial term()
    {
        Polynomial acc = unary();
        for (;;) {
            if (accept('*')) {
                acc *= unary();
            } else if (accept('/')) {
                Polynomial d = unary();
                if (!d.is_constant() || d.is_zero()) fail("division by a non-constant or zero");
                acc *= Rational(1) / d.constant_term();
            } else {
                return acc;
            }
        }
    }

    Polynomial unary()
    {
        if (accept('-')) return -unary();
        if (accept('+')) return unary();
        return power();
    }

    Polynomial power()
    {
        Polynomial base = atom();
        if (accept('^')) {
            skip_ws();
            const std::size_t start = pos_;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
            if (start == pos_) fail("expected exponent");
            const unsigned long k = std::stoul(std::string(text_.substr(start, pos_ - start)));
            return hvf::pow(base, static_cast<unsigned>(k));
        }
        return base;
    }

    Polynomial atom()
    {
        skip_ws();
        if (pos_ >= text_.size()) fail("unexpected end of input");
        const char c = text_[pos_];
        if (c == '(') {
            ++pos_;
            Polynomial inner = expr();
            if (!accept(')')) fail("expected ')'");
            return inner;
        }
        if (std::isdigit(static_cast<unsigned char>(c))) {
            const std::size_t start = pos_;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
            return Polynomial::constant(names_.size(), parse_rational(text_.substr(start, pos_ - start)));
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            const std::size_t start = pos_;
            while (pos_ < text_.size()
                   && (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
                ++pos_;
            const std::string_view name = text_.substr(start, pos_ - start);
            for (std::size_t i = 0; i < names_.size(); ++i)
                if (names_[i] == name) return Polynomial::variable(names_.size(), i);
            fail("unknown variable '" + std::string(name) + "'");
        }
        fail(std::string("unexpected character '") + c + "'");
    }

    std::string_view text_;
    std::span<const std::string> names_;
    std::size_t pos_ = 0;
};

} // namespace detail

inline Polynomial parse_polynomial(std::string_view text, std::span<const std::string> names)
{
    return detail::ExprParser(text, names).parse();
}

/// Parses over the default names x1..x_dim.
inline Polynomial parse_polynomial(std::string_view text, std::size_t dim)
{
    const auto names = default_variable_names(dim);
    return parse_polynomial(text, names);
}

inline std::string trim(std::string_view s)
{
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split(std::string_view s, char sep)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.push_back(trim(s.substr(start, i - start)));
            start = i + 1;
        }
    }
    return out;
}

/// One `key = value` line of the plain-text spec formats. Comments start at '#'.
struct KeyValueLine {
    std::string key;
    std::string value;
    int line_number = 0;
};

inline std::vector<KeyValueLine> read_key_value_lines(std::string_view text)
{
    std::vector<KeyValueLine> out;
    int line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        ++line_no;
        std::string_view line = text.substr(start, end - start);
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        const std::string cleaned = trim(line);
        if (!cleaned.empty()) {
            const auto eq = cleaned.find('=');
            if (eq == std::string::npos)
                throw ParseError("line " + std::to_string(line_no) + ": expected 'key = value'");
            out.push_back({trim(std::string_view(cleaned).substr(0, eq)),
                           trim(std::string_view(cleaned).substr(eq + 1)), line_no});
        }
        if (end == text.size()) break;
        start = end + 1;
    }
    return out;
}

} // namespace hvf

#endif
