#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "scope3/common.hpp"
#include "scope3/csv.hpp"
#include "scope3/exact_sum.hpp"
#include "scope3/hash.hpp"
#include "scope3/text.hpp"
#include "support.hpp"

using namespace scope3;

TEST_CASE("normalize lowercases, collapses whitespace and strips token-edge punctuation") {
  CHECK(normalize("  Computer and   Peripheral\tEquipment EXPENSE. ") == "computer and peripheral equipment expense");
  CHECK(normalize("Refund: returned laptops") == "refund returned laptops");
  CHECK(normalize("(Q3) net-30, po#3312") == "q3 net-30 po#3312");
  CHECK(normalize("--- ... !!!") == "");
  CHECK(normalize("") == "");
}

TEST_CASE("normalize is idempotent") {
  for (const char* s : {"A, b; C.", "x  y", "Office furniture purchase - desks and cabinets"}) {
    auto once = normalize(s);
    CHECK(normalize(once) == once);
  }
}

TEST_CASE("tokenize splits on whitespace only") {
  CHECK(tokenize("a bb  ccc") == std::vector<std::string>{"a", "bb", "ccc"});
  CHECK(tokenize("").empty());
  CHECK(normalized_tokens("Legal SERVICES.") == std::vector<std::string>{"legal", "services"});
}

TEST_CASE("format_double round-trips") {
  for (double v : {0.0, 1.0, -899.0, 0.1, 1.0 / 3.0, 1234.5678e10, std::numeric_limits<double>::denorm_min()}) {
    double back = 0.0;
    REQUIRE(parse_double(format_double(v), back));
    CHECK(back == v);
  }
  CHECK(format_double(50.0) == "50");
  CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("parse_double requires the whole field") {
  double v = 0.0;
  CHECK(parse_double("+12.5", v));
  CHECK(v == 12.5);
  CHECK_FALSE(parse_double("12.5x", v));
  CHECK_FALSE(parse_double("", v));
  CHECK_FALSE(parse_double("abc", v));
}

TEST_CASE("csv parse handles quotes, embedded commas and newlines") {
  auto t = csv::parse("a,b,c\n1,\"x, y\",\"say \"\"hi\"\"\"\n2,\"multi\nline\",z\n", "mem");
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0].fields[1] == "x, y");
  CHECK(t.rows[0].fields[2] == "say \"hi\"");
  CHECK(t.rows[1].fields[1] == "multi\nline");
  CHECK(t.require_column("c") == 2);
  CHECK_FALSE(t.column("d").has_value());
  CHECK_THROWS_AS(t.require_column("d"), ParseError);
}

TEST_CASE("csv parse rejects ragged rows naming the line") {
  try {
    csv::parse("a,b\n1,2\n3\n", "ragged.csv");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("ragged.csv") != std::string::npos);
    CHECK(std::string(e.what()).find("3") != std::string::npos);
  }
  CHECK_THROWS_AS(csv::parse("a\n\"open\n", "q.csv"), ParseError);
}

TEST_CASE("csv escape and parse are inverse") {
  std::vector<std::string> fields = {"plain", "with,comma", "with \"quote\"", " lead", "new\nline", ""};
  auto t = csv::parse("h1,h2,h3,h4,h5,h6\n" + csv::format_row(fields), "mem");
  REQUIRE(t.rows.size() == 1);
  CHECK(t.rows[0].fields == fields);
}

TEST_CASE("csv handles CRLF and BOM") {
  auto t = csv::parse("\xEF\xBB\xBFid,text\r\n1,a\r\n", "bom");
  CHECK(t.header == std::vector<std::string>{"id", "text"});
  REQUIRE(t.rows.size() == 1);
  CHECK(t.rows[0].fields[1] == "a");
}

TEST_CASE("exact sum is order independent and correctly rounded") {
  std::vector<double> v = {1e16, 1.0, -1e16, 1.0, 0.1, 0.2, 0.3};
  double expected = 2.6;  // fsum of the values
  CHECK(exact_sum(v) == expected);
  std::reverse(v.begin(), v.end());
  CHECK(exact_sum(v) == expected);
  ExactSum a, b;
  a.add(0.1);
  a.add(0.2);
  b.add(0.3);
  a.merge(b);
  CHECK(a.value() == 0.6);
  CHECK(ExactSum{}.value() == 0.0);
}

TEST_CASE("fnv1a matches the reference vectors") {
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("write_text creates parent directories") {
  testing::TempDir tmp;
  auto p = tmp / "a/b/c.txt";
  csv::write_text(p, "hello\n");
  CHECK(csv::read_text(p) == "hello\n");
}
