#include "helpers.hpp"

#include "feqstab/dsl.hpp"
#include "feqstab/pipeline.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace feqstab;
using namespace testing;

namespace fs = std::filesystem;

namespace {

const fs::path data_dir{TEST_DATA_DIR};

std::vector<fs::path> corpus(const std::string& which) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(data_dir / "dsl" / which))
        if (e.path().extension() == ".feq")
            out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::string> lines_of(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line))
        out.push_back(line);
    return out;
}

SourceSpan span_of(std::string_view text) {
    try {
        parse_spec(text);
    } catch (const ParseError& e) {
        return e.span();
    }
    FAIL("expected a parse error");
    return {};
}

} // namespace

TEST_CASE("positive corpus round-trips") {
    const auto files = corpus("valid");
    REQUIRE(files.size() == 30);
    for (const auto& path : files) {
        CAPTURE(path.filename().string());
        const SpecDocument doc = read_spec(path);
        const std::string text = format_spec(doc);
        const SpecDocument again = parse_spec(text);
        CHECK(again == doc);
        CHECK(format_spec(again) == text);
    }
}

TEST_CASE("negative corpus reports positions inside the file") {
    const auto files = corpus("invalid");
    REQUIRE(files.size() == 10);
    for (const auto& path : files) {
        CAPTURE(path.filename().string());
        const auto lines = lines_of(path);
        try {
            read_spec(path);
            FAIL("expected a parse error");
        } catch (const ParseError& e) {
            REQUIRE(e.span().line >= 1);
            REQUIRE(e.span().line <= std::max<std::size_t>(lines.size(), 1));
            CHECK(e.span().column >= 1);
            CHECK(e.span().column <= lines[e.span().line - 1].size() + 1);
            CHECK(!e.message().empty());
        }
    }
}

TEST_CASE("error positions point at the offending token") {
    const SourceSpan dollar = span_of("operator { f(x, y) }\nbound { 1*|x|^2 } $\n");
    CHECK(dollar.line == 2);
    CHECK(dollar.column == 19);
    const SourceSpan z = span_of("operator { f(x, z) }\n");
    CHECK(z.line == 1);
    CHECK(z.column == 17);
    const SourceSpan dup = span_of("operator { f(x, y) }\noperator { f(x, y) }\n");
    CHECK(dup.line == 2);
    CHECK(dup.column == 1);
    const SourceSpan neg = span_of("operator { f(x, y) }\nbound { -1*|x|^2 }\n");
    CHECK(neg.line == 2);
    CHECK(neg.column == 9);
    try {
        parse_spec("operator { f(x, z) }");
    } catch (const ParseError& e) {
        CHECK(std::find(e.expected().begin(), e.expected().end(), "'x'") != e.expected().end());
        CHECK(std::string(e.what()).rfind("1:17:", 0) == 0);
    }
    CHECK_THROWS_AS(parse_spec("operator { f(x/0, y) }"), ParseError);
    CHECK_THROWS_AS(parse_spec("params { p = 1 p = 2 }\noperator { f(x, y) }"), ParseError);
}

TEST_CASE("the catalog literal parses to the catalog entry") {
    const SpecDocument doc = read_spec(data_dir / "dsl" / "valid" / "01_thm31_literal.feq");
    const auto e = thm31(4);
    CHECK(doc.op == e.spec);
    CHECK(doc.bound == e.bound);
    CHECK(*eigenfactor(doc.op, doc.bound) == e.factor);
    const SpecDocument p5 = read_spec(data_dir / "dsl" / "valid" / "28_thm31_p5.feq");
    CHECK(p5.op == thm31(5).spec);
    CHECK(*eigenfactor(p5.op, p5.bound) == doctest::Approx(thm31(5).factor).epsilon(1e-15));
}

TEST_CASE("identity operator has eigenfactor 1") {
    const SpecDocument doc = read_spec(data_dir / "dsl" / "valid" / "02_identity.feq");
    REQUIRE(eigenfactor(doc.op, doc.bound));
    CHECK(*eigenfactor(doc.op, doc.bound) == 1.0);
}

TEST_CASE("decimal and rational map entries are exact") {
    const SpecDocument a = parse_spec("operator { f(-1/5 x, y) }");
    const SpecDocument b = parse_spec("operator { f(-0.2 x, y) }");
    CHECK(a == b);
    CHECK(format_spec(b).find("-1/5") != std::string::npos);
    CHECK(parse_decimal("1.5e-3") == Rational(3, 2000));
    CHECK(parse_decimal("-0.2") == Rational(-1, 5));
    CHECK(parse_spec("operator { f(x/0.5, y) }").op.terms()[0].map.a() == 2);
}

TEST_CASE("format then parse keeps eigenfactors bit for bit") {
    for (const auto& path : corpus("valid")) {
        const SpecDocument doc = read_spec(path);
        const SpecDocument again = parse_spec(format_spec(doc));
        const auto c1 = eigenfactor(doc.op, doc.bound), c2 = eigenfactor(again.op, again.bound);
        CHECK(c1.has_value() == c2.has_value());
        if (c1 && c2)
            CHECK(*c1 == *c2);
    }
}

TEST_CASE("mixed slots are non-diagonal") {
    const SpecDocument doc = read_spec(data_dir / "mixed_slots.feq");
    CHECK(!doc.op.is_diagonal());
    CHECK(!eigenfactor(doc.op, doc.bound));
}

TEST_CASE("params and spans") {
    const SpecDocument doc = parse_spec("# c\nparams { p = 4 q = -1.5 }\noperator { 2 f(x/2, y) }\nbound { }\n");
    CHECK(doc.params.at("p") == 4.0);
    CHECK(doc.params.at("q") == -1.5);
    CHECK(doc.bound.empty());
    CHECK(doc.spans.at("operator").line == 3);
    CHECK(doc.spans.at("params.q").line == 2);
    CHECK(format_spec(doc).find("bound {\n}") != std::string::npos);
}

TEST_CASE("exported catalog specs round-trip to the entry") {
    for (const auto& e : {thm31(4), thm31(3.5), thm32(3, 0.2), thm32(4, -0.5)}) {
        const SpecDocument doc = parse_spec(export_spec(e));
        CHECK(doc.op == e.spec);
        CHECK(doc.bound == e.bound);
        CHECK(doc.params == e.params);
    }
}
