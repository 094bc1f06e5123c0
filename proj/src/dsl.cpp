#include "feqstab/dsl.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

namespace feqstab {

ParseError::ParseError(const std::string& message, SourceSpan span, std::vector<std::string> expected)
    : ValidationError([&] {
          std::string text = std::to_string(span.line) + ":" + std::to_string(span.column) + ": " + message;
          if (!expected.empty()) {
              text += " (expected ";
              for (std::size_t i = 0; i < expected.size(); ++i)
                  text += (i ? ", " : "") + expected[i];
              text += ")";
          }
          return text;
      }()),
      span_(span), expected_(std::move(expected)), message_(message) {}

Rational parse_decimal(std::string_view literal) {
    std::size_t i = 0;
    bool negative = false;
    if (i < literal.size() && (literal[i] == '+' || literal[i] == '-'))
        negative = literal[i++] == '-';
    boost::multiprecision::cpp_int digits = 0;
    long long scale = 0;
    bool any = false;
    bool fraction = false;
    for (; i < literal.size(); ++i) {
        const char ch = literal[i];
        if (ch >= '0' && ch <= '9') {
            digits = digits * 10 + (ch - '0');
            any = true;
            if (fraction)
                --scale;
        } else if (ch == '.' && !fraction) {
            fraction = true;
        } else {
            break;
        }
    }
    if (!any)
        throw ValidationError("'" + std::string(literal) + "' is not a decimal number");
    if (i < literal.size()) {
        if (literal[i] != 'e' && literal[i] != 'E')
            throw ValidationError("'" + std::string(literal) + "' is not a decimal number");
        long long exponent = 0;
        const std::size_t at = i + 1 + (i + 1 < literal.size() && literal[i + 1] == '+' ? 1 : 0);
        const auto res = std::from_chars(literal.data() + at,
                                         literal.data() + literal.size(), exponent);
        if (res.ec != std::errc() || res.ptr != literal.data() + literal.size())
            throw ValidationError("'" + std::string(literal) + "' has a malformed exponent");
        if (exponent > 4000 || exponent < -4000)
            throw ValidationError("'" + std::string(literal) + "' has an exponent out of range");
        scale += exponent;
    }
    Rational value(digits);
    boost::multiprecision::cpp_int ten = 1;
    for (long long k = 0; k < (scale < 0 ? -scale : scale); ++k)
        ten *= 10;
    value = scale < 0 ? value / Rational(ten) : value * Rational(ten);
    return negative ? Rational(-value) : value;
}

namespace {

enum class Tok { ident, number, punct, end };

struct Token {
    Tok kind;
    std::string text;
    SourceSpan span;
};

std::string describe(const Token& t) {
    switch (t.kind) {
    case Tok::end: return "end of input";
    case Tok::number: return "number '" + t.text + "'";
    case Tok::ident: return "'" + t.text + "'";
    case Tok::punct: return "'" + t.text + "'";
    }
    return t.text;
}

std::vector<Token> lex(std::string_view text) {
    std::vector<Token> out;
    std::size_t line = 1, col = 1;
    std::size_t i = 0;
    // Position just past the last non-blank character, used for end of input.
    SourceSpan last{1, 1, 0};
    auto advance = [&](std::size_t n) {
        for (std::size_t k = 0; k < n; ++k, ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
    };
    auto is_digit = [](char c) { return c >= '0' && c <= '9'; };
    auto is_alpha = [](char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; };
    while (i < text.size()) {
        const char c = text[i];
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            advance(1);
            continue;
        }
        if (c == '#') {
            while (i < text.size() && text[i] != '\n')
                advance(1);
            continue;
        }
        const SourceSpan start{line, col, 0};
        std::size_t j = i;
        Tok kind;
        if (is_digit(c) || (c == '.' && i + 1 < text.size() && is_digit(text[i + 1]))) {
            kind = Tok::number;
            while (j < text.size() && is_digit(text[j]))
                ++j;
            if (j < text.size() && text[j] == '.') {
                ++j;
                while (j < text.size() && is_digit(text[j]))
                    ++j;
            }
            if (j < text.size() && (text[j] == 'e' || text[j] == 'E')) {
                std::size_t k = j + 1;
                if (k < text.size() && (text[k] == '+' || text[k] == '-'))
                    ++k;
                if (k < text.size() && is_digit(text[k])) {
                    while (k < text.size() && is_digit(text[k]))
                        ++k;
                    j = k;
                }
            }
        } else if (is_alpha(c)) {
            kind = Tok::ident;
            while (j < text.size() && (is_alpha(text[j]) || is_digit(text[j])))
                ++j;
        } else if (std::string_view("{}(),+-*/|^=").find(c) != std::string_view::npos) {
            kind = Tok::punct;
            j = i + 1;
        } else {
            throw ParseError("unexpected character '" + std::string(1, c) + "'", {line, col, 1});
        }
        Token tok{kind, std::string(text.substr(i, j - i)), start};
        tok.span.length = j - i;
        advance(j - i);
        last = {line, col, 0};
        out.push_back(std::move(tok));
    }
    out.push_back(Token{Tok::end, "", last});
    return out;
}

SourceSpan cover(const SourceSpan& from, const SourceSpan& to) {
    SourceSpan s = from;
    if (to.line == from.line && to.column + to.length >= from.column)
        s.length = to.column + to.length - from.column;
    else
        s.length = from.length;
    return s;
}

struct Lin {
    Rational x = 0, y = 0, constant = 0;
};

class Parser {
public:
    explicit Parser(std::string_view text) : tokens_(lex(text)) {}

    SpecDocument document() {
        std::optional<std::vector<OperatorTerm>> terms;
        std::optional<std::vector<BoundTerm>> bound;
        std::map<std::string, double> params;
        std::map<std::string, SourceSpan> spans;
        while (peek().kind != Tok::end) {
            const Token& head = peek();
            if (head.kind != Tok::ident || (head.text != "params" && head.text != "operator" && head.text != "bound"))
                fail({"'params'", "'operator'", "'bound'", "end of input"});
            const Token block = next();
            if (spans.count(block.text))
                throw ParseError("duplicate '" + block.text + "' block", block.span);
            spans[block.text] = block.span;
            expect("{");
            if (block.text == "params")
                parse_params(params, spans);
            else if (block.text == "operator")
                terms = parse_operator(block);
            else
                bound = parse_bound();
            spans[block.text] = cover(block.span, expect("}").span);
        }
        if (!terms)
            throw ParseError("missing 'operator' block", peek().span);
        return SpecDocument{OperatorSpec(std::move(*terms)), BoundSpec(bound.value_or(std::vector<BoundTerm>{})),
                            std::move(params), std::move(spans)};
    }

private:
    const Token& peek() const { return tokens_[pos_]; }
    Token next() { return tokens_[pos_ < tokens_.size() - 1 ? pos_++ : pos_]; }

    bool at(std::string_view punct) const { return peek().kind == Tok::punct && peek().text == punct; }
    bool at_ident(std::string_view name) const { return peek().kind == Tok::ident && peek().text == name; }

    [[noreturn]] void fail(std::vector<std::string> expected) const {
        throw ParseError("unexpected " + describe(peek()), peek().span, std::move(expected));
    }

    Token expect(std::string_view punct) {
        if (!at(punct))
            fail({"'" + std::string(punct) + "'"});
        return next();
    }

    // number ["/" number], exact.
    Rational coef(SourceSpan& span) {
        if (peek().kind != Tok::number)
            fail({"number"});
        const Token num = next();
        span = num.span;
        Rational value = parse_decimal(num.text);
        if (at("/") && tokens_[pos_ + 1].kind == Tok::number) {
            next();
            const Token den = next();
            const Rational d = parse_decimal(den.text);
            if (d == 0)
                throw ParseError("division by zero", den.span);
            value /= d;
            span = cover(span, den.span);
        }
        return value;
    }

    int sign() {
        if (at("+")) {
            next();
            return 1;
        }
        if (at("-")) {
            next();
            return -1;
        }
        return 0;
    }

    void parse_params(std::map<std::string, double>& params, std::map<std::string, SourceSpan>& spans) {
        while (!at("}")) {
            if (peek().kind != Tok::ident)
                fail({"parameter name", "'}'"});
            const Token name = next();
            expect("=");
            const int s = sign();
            if (peek().kind != Tok::number)
                fail({"number"});
            const Token value = next();
            double x = 0.0;
            std::from_chars(value.text.data(), value.text.data() + value.text.size(), x);
            if (!std::isfinite(x))
                throw ParseError("parameter value out of range", value.span);
            if (params.count(name.text))
                throw ParseError("duplicate parameter '" + name.text + "'", name.span);
            params[name.text] = s < 0 ? -x : x;
            spans["params." + name.text] = cover(name.span, value.span);
        }
    }

    std::vector<OperatorTerm> parse_operator(const Token& block) {
        std::vector<OperatorTerm> terms;
        while (!at("}")) {
            const SourceSpan start = peek().span;
            const int s = sign();
            Rational c = 1;
            double value = 1.0;
            if (peek().kind == Tok::number) {
                SourceSpan cs;
                const Token lit = peek();
                c = coef(cs);
                // Plain decimals are read directly so the double is the literal's nearest.
                if (cs.length == lit.span.length)
                    std::from_chars(lit.text.data(), lit.text.data() + lit.text.size(), value);
                else
                    value = c.convert_to<double>();
                if (at("*"))
                    next();
            }
            if (!at_ident("f"))
                fail(s == 0 && peek().kind != Tok::number ? std::vector<std::string>{"'+'", "'-'", "number", "'f'", "'}'"}
                                                          : std::vector<std::string>{"'f'"});
            next();
            expect("(");
            const Lin first = lin();
            expect(",");
            const Lin second = lin();
            const Token close = expect(")");
            const SourceSpan span = cover(start, close.span);
            if (c == 0 || value == 0.0)
                throw ParseError("operator term has a zero coefficient", span);
            if (!std::isfinite(value))
                throw ParseError("operator coefficient out of range", span);
            if (first.constant != 0 || second.constant != 0)
                throw ParseError("argument map has a nonzero constant offset", span);
            terms.push_back({s < 0 ? -value : value, ArgMap(first.x, first.y, second.x, second.y)});
        }
        if (terms.empty())
            throw ParseError("empty 'operator' block", block.span);
        return terms;
    }

    Lin lin() {
        Lin out;
        bool first = true;
        while (true) {
            int s = sign();
            if (s == 0) {
                if (!first)
                    return out;
                s = 1;
            }
            first = false;
            Rational c = 1;
            bool have_coef = false;
            if (peek().kind == Tok::number) {
                SourceSpan cs;
                c = coef(cs);
                have_coef = true;
                if (at("*"))
                    next();
            }
            if (at_ident("x") || at_ident("y")) {
                const bool is_x = next().text == "x";
                if (at("/")) {
                    next();
                    SourceSpan ds;
                    if (peek().kind != Tok::number)
                        fail({"number"});
                    const Rational d = coef(ds);
                    if (d == 0)
                        throw ParseError("division by zero", ds);
                    c /= d;
                }
                if (is_x)
                    out.x += s * c;
                else
                    out.y += s * c;
            } else if (have_coef) {
                out.constant += s * c;
            } else {
                fail({"number", "'x'", "'y'"});
            }
        }
    }

    std::vector<BoundTerm> parse_bound() {
        std::vector<BoundTerm> terms;
        if (at("}"))
            return terms;
        while (true) {
            const SourceSpan start = peek().span;
            const int s = sign();
            double value = 1.0;
            bool need_factor = true;
            if (peek().kind == Tok::number) {
                SourceSpan cs;
                const Token lit = peek();
                const Rational c = coef(cs);
                if (cs.length == lit.span.length)
                    std::from_chars(lit.text.data(), lit.text.data() + lit.text.size(), value);
                else
                    value = c.convert_to<double>();
                need_factor = false;
            }
            double e1 = 0.0, e2 = 0.0;
            SourceSpan end = tokens_[pos_ > 0 ? pos_ - 1 : 0].span;
            while (need_factor || at("*")) {
                if (!need_factor)
                    next();
                need_factor = false;
                if (!at("|"))
                    fail({"'|'"});
                next();
                if (!at_ident("x") && !at_ident("y"))
                    fail({"'x'", "'y'"});
                const bool is_x = next().text == "x";
                end = expect("|").span;
                double e = 1.0;
                if (at("^")) {
                    next();
                    const int es = sign();
                    SourceSpan xs;
                    const Token lit = peek();
                    const Rational r = coef(xs);
                    end = xs;
                    if (xs.length == lit.span.length)
                        std::from_chars(lit.text.data(), lit.text.data() + lit.text.size(), e);
                    else
                        e = r.convert_to<double>();
                    if (es < 0 && e != 0.0)
                        throw ParseError("negative exponent", cover(start, xs));
                    if (!std::isfinite(e))
                        throw ParseError("exponent out of range", xs);
                }
                (is_x ? e1 : e2) += e;
            }
            const SourceSpan span = cover(start, end);
            if (s < 0 && value != 0.0)
                throw ParseError("negative bound coefficient", span);
            if (value == 0.0)
                throw ParseError("bound term has a zero coefficient", span);
            if (!std::isfinite(value))
                throw ParseError("bound coefficient out of range", span);
            terms.push_back({value, e1, e2});
            if (at("}"))
                return terms;
            if (!at("+") && !at("-"))
                fail({"'+'", "'*'", "'}'"});
        }
    }

    std::vector<Token> tokens_;
    std::size_t pos_ = 0;
};

std::string format_lin(const Rational& x, const Rational& y) {
    std::string out;
    auto put = [&out](const Rational& c, const char* slot) {
        if (c == 0)
            return;
        const Rational mag = c < 0 ? Rational(-c) : c;
        if (out.empty())
            out += c < 0 ? "-" : "";
        else
            out += c < 0 ? " - " : " + ";
        if (mag != 1)
            out += format_rational(mag) + " ";
        out += slot;
    };
    put(x, "x");
    put(y, "y");
    return out.empty() ? "0" : out;
}

} // namespace

SpecDocument parse_spec(std::string_view text) { return Parser(text).document(); }

SpecDocument read_spec(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open spec file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_spec(buf.str());
}

std::string format_spec(const OperatorSpec& op, const BoundSpec& bound, const std::map<std::string, double>& params) {
    std::string out;
    if (!params.empty()) {
        out += "params {\n";
        for (const auto& [name, value] : params)
            out += "  " + name + " = " + format_double(value) + "\n";
        out += "}\n\n";
    }
    out += "operator {\n";
    for (const auto& term : op.terms()) {
        out += "  ";
        out += term.coef < 0.0 ? "-" : "+";
        out += format_double(std::fabs(term.coef)) + " * f(" + format_lin(term.map.a(), term.map.b()) + ", " +
               format_lin(term.map.c(), term.map.d()) + ")\n";
    }
    out += "}\n\nbound {\n";
    bool first = true;
    for (const auto& t : bound.terms()) {
        out += first ? "  " : "  + ";
        first = false;
        out += format_double(t.coef);
        auto factor = [&out](const char* slot, double e) {
            if (e == 0.0)
                return;
            out += std::string(" * |") + slot + "|";
            if (e != 1.0)
                out += "^" + format_double(e);
        };
        factor("x", t.exp_first);
        factor("y", t.exp_second);
        out += "\n";
    }
    out += "}\n";
    return out;
}

std::string format_spec(const SpecDocument& doc) { return format_spec(doc.op, doc.bound, doc.params); }

} // namespace feqstab
