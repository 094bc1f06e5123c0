#pragma once

#include "feqstab/domain.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace feqstab {

struct SourceSpan {
    std::size_t line = 1;   ///< 1-based
    std::size_t column = 1; ///< 1-based, in bytes
    std::size_t length = 0;
};

/// Syntax or semantic error in a .feq document, with its position.
class ParseError : public ValidationError {
public:
    ParseError(const std::string& message, SourceSpan span, std::vector<std::string> expected = {});

    const SourceSpan& span() const noexcept { return span_; }
    const std::vector<std::string>& expected() const noexcept { return expected_; }
    const std::string& message() const noexcept { return message_; }

private:
    SourceSpan span_;
    std::vector<std::string> expected_;
    std::string message_;
};

/// A parsed .feq file. Spans are keyed by block name ("operator", "bound",
/// "params") and by "params.<name>"; they do not take part in equality.
struct SpecDocument {
    OperatorSpec op;
    BoundSpec bound;
    std::map<std::string, double> params;
    std::map<std::string, SourceSpan> spans;

    friend bool operator==(const SpecDocument& l, const SpecDocument& r) {
        return l.op == r.op && l.bound == r.bound && l.params == r.params;
    }
};

/// Grammar, '#' starting a line comment:
///
///   document := block*
///   block    := "params" "{" (name "=" number)* "}"
///             | "operator" "{" term+ "}"
///             | "bound" "{" [bterm ("+" bterm)*] "}"
///   term     := [sign] [coef ["*"]] "f" "(" lin "," lin ")"
///   lin      := [sign] atom (sign atom)*
///   atom     := coef ["*"] slot ["/" number] | slot ["/" number] | coef
///   bterm    := [coef] ("*" factor)*  |  factor ("*" factor)*
///   factor   := "|x|" ["^" number] | "|y|" ["^" number]
///   coef     := number ["/" number]
///
/// Slots are x (first argument) and y (second). Map entries are exact
/// rationals, decimals included; operator and bound coefficients are doubles.
SpecDocument parse_spec(std::string_view text);

SpecDocument read_spec(const std::filesystem::path& path);

/// Canonical text: sorted terms, lowest-terms rationals, one term per line.
std::string format_spec(const SpecDocument& doc);

/// Canonical text for a bare operator and bound.
std::string format_spec(const OperatorSpec& op, const BoundSpec& bound,
                        const std::map<std::string, double>& params = {});

/// Exact rational value of a decimal literal such as "-0.2" or "1.5e-3".
Rational parse_decimal(std::string_view literal);

} // namespace feqstab
