#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "scope3/common.hpp"
#include "scope3/csv.hpp"
#include "scope3/taxonomy.hpp"
#include "scope3/text.hpp"
#include "support.hpp"

using namespace scope3;

namespace {

Taxonomy toy(std::vector<EmissionFactorRecord> factors) {
  return Taxonomy({{"A", "Alpha goods", {"1"}, ""}, {"B", "Beta goods", {"2"}, ""}, {"C", "Gamma services", {"3"}, ""}},
                  std::move(factors));
}

}  // namespace

TEST_CASE("canonical taxonomy has the 66 summary classes, each with a nonnegative factor") {
  auto tax = testing::canonical_taxonomy(false);
  CHECK(tax.class_count() == 66);
  CHECK(tax.warnings().empty());
  for (const auto& code : tax.codes()) {
    const auto& f = lookup_factor(tax, code);
    CHECK(f.factor >= 0.0);
    CHECK(f.factor_kind == "supply_chain_with_margins");
  }
  CHECK(tax.at("311FT").title == "Food and beverage and tobacco products");
  CHECK(tax.at("311FT").naics_codes == std::vector<std::string>{"311", "312"});
}

TEST_CASE("canonical files round-trip byte-identically") {
  auto dir = testing::data_dir() / "eeio";
  auto tax = testing::canonical_taxonomy(false);
  CHECK(serialize_classes(tax) == csv::read_text(dir / "summary_classes.csv"));
  CHECK(serialize_factors(tax) == csv::read_text(dir / "emission_factors.csv"));

  testing::TempDir tmp;
  csv::write_text(tmp / "c.csv", serialize_classes(tax));
  csv::write_text(tmp / "f.csv", serialize_factors(tax));
  auto again = load_taxonomy(tmp / "c.csv", tmp / "f.csv");
  CHECK(serialize_classes(again) == serialize_classes(tax));
  CHECK(again.fingerprint() == tax.fingerprint());
}

TEST_CASE("Utilities factor matches the stored golden value and exceeds professional services") {
  auto tax = testing::canonical_taxonomy(false);
  auto golden = csv::read_file(testing::data_dir() / "eeio" / "golden_factors.csv");
  auto c_code = golden.require_column("code");
  auto c_factor = golden.require_column("factor_kg_per_unit");
  REQUIRE_FALSE(golden.rows.empty());
  for (const auto& row : golden.rows) {
    double expected = 0.0;
    REQUIRE(parse_double(row.fields[c_factor], expected));
    CHECK(lookup_factor(tax, row.fields[c_code]).factor == expected);
  }
  CHECK(tax.at("22").title == "Utilities");
  CHECK(lookup_factor(tax, "22").factor > lookup_factor(tax, "5412OP").factor);
}

TEST_CASE("toy taxonomy loads without warnings") {
  auto tax = toy({{"A", 0.5, "USD-2018", "k"}, {"B", 1.0, "USD-2018", "k"}, {"C", 0.0, "USD-2018", "k"}});
  CHECK(tax.class_count() == 3);
  CHECK(tax.warnings().empty());
  CHECK(lookup_factor(tax, "A").factor == 0.5);
}

TEST_CASE("missing factors are warnings, lookups distinguish unknown class from missing factor") {
  auto tax = toy({{"A", 0.5, "USD", "k"}});
  CHECK(tax.warnings().size() == 2);
  CHECK_THROWS_AS(lookup_factor(tax, "B"), MissingFactorError);
  CHECK_THROWS_AS(lookup_factor(tax, "ZZZ"), MissingClassError);
  CHECK(tax.find_factor("B") == nullptr);
}

TEST_CASE("taxonomy validation") {
  CHECK_THROWS_AS(Taxonomy({{"A", "x", {}, ""}, {"A", "y", {}, ""}}, {}), ValidationError);
  CHECK_THROWS_AS(Taxonomy({{"", "x", {}, ""}}, {}), ValidationError);
  CHECK_THROWS_AS(Taxonomy({{"A", "", {}, ""}}, {}), ValidationError);
  CHECK_THROWS_AS(toy({{"A", -0.1, "USD", "k"}}), ValidationError);
  CHECK_THROWS_AS(toy({{"Q", 0.1, "USD", "k"}}), ValidationError);
  CHECK_THROWS_AS(toy({{"A", 0.1, "USD", "k"}, {"A", 0.2, "USD", "k"}}), ValidationError);
}

TEST_CASE("load_taxonomy errors name the line") {
  testing::TempDir tmp;
  csv::write_text(tmp / "c.csv", "code,title,naics_codes,description\nA,Alpha,1,\nB,Beta,2,\n");
  csv::write_text(tmp / "f.csv", "code,factor_kg_per_unit,currency_basis,factor_kind\nA,0.5,USD,k\nB,abc,USD,k\n");
  try {
    load_taxonomy(tmp / "c.csv", tmp / "f.csv", "k");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  csv::write_text(tmp / "neg.csv", "code,factor_kg_per_unit,currency_basis,factor_kind\nA,-1,USD,k\n");
  CHECK_THROWS_AS(load_taxonomy(tmp / "c.csv", tmp / "neg.csv", "k"), ValidationError);
  csv::write_text(tmp / "empty.csv", "");
  CHECK_THROWS_AS(load_taxonomy(tmp / "empty.csv", tmp / "f.csv", "k"), Error);
  csv::write_text(tmp / "header_only.csv", "code,title,naics_codes,description\n");
  CHECK_THROWS_AS(load_taxonomy(tmp / "header_only.csv", tmp / "f.csv", "k"), ValidationError);
  csv::write_text(tmp / "dup.csv", "code,title,naics_codes,description\nA,Alpha,1,\nA,Again,2,\n");
  csv::write_text(tmp / "ok.csv", "code,factor_kg_per_unit,currency_basis,factor_kind\nA,0.5,USD,k\n");
  CHECK_THROWS_AS(load_taxonomy(tmp / "dup.csv", tmp / "ok.csv", "k"), ValidationError);
}

TEST_CASE("factor kind selects rows") {
  testing::TempDir tmp;
  csv::write_text(tmp / "c.csv", "code,title,naics_codes,description\nA,Alpha,1,\n");
  csv::write_text(tmp / "f.csv",
                  "code,factor_kg_per_unit,currency_basis,factor_kind\nA,0.5,USD,with\nA,0.4,USD,without\n");
  CHECK(lookup_factor(load_taxonomy(tmp / "c.csv", tmp / "f.csv", "with"), "A").factor == 0.5);
  CHECK(lookup_factor(load_taxonomy(tmp / "c.csv", tmp / "f.csv", "without"), "A").factor == 0.4);
}

TEST_CASE("compose_description for 311FT concatenates NAICS 311 then 312") {
  auto naics = load_naics_descriptions(testing::data_dir() / "naics" / "descriptions.csv");
  auto tax = testing::canonical_taxonomy(false);
  const auto& cls = tax.at("311FT");
  auto text = compose_description(cls, naics);
  CHECK(text == naics.at("311") + " " + naics.at("312"));
  CHECK(text.rfind("Food Manufacturing", 0) == 0);
  CHECK(text.find("Beverage and Tobacco Product Manufacturing") != std::string::npos);
  CHECK(text.find("Food Manufacturing") < text.find("Beverage and Tobacco"));
}

TEST_CASE("compose_description edge cases") {
  std::map<std::string, std::string> naics = {{"1", "One."}, {"2", "Two."}, {"3", "Three."}};
  CommodityClass single{"S", "Single", {"2"}, ""};
  CHECK(compose_description(single, naics) == "Two.");

  CommodityClass many{"M", "Many", {"1", "2", "3"}, ""};
  CommodityClass permuted{"M", "Many", {"3", "1", "2"}, ""};
  CHECK(compose_description(many, naics) == "One. Two. Three.");
  CHECK(compose_description(permuted, naics) == "Three. One. Two.");

  CommodityClass missing{"X", "Missing", {"1", "9"}, ""};
  try {
    compose_description(missing, naics);
    FAIL("expected LookupError");
  } catch (const LookupError& e) {
    CHECK(std::string(e.what()).find("9") != std::string::npos);
  }
  CommodityClass none{"N", "None", {}, ""};
  CHECK_THROWS_AS(compose_description(none, naics), StateError);
}

TEST_CASE("class_text modes") {
  auto tax = testing::canonical_taxonomy(true);
  const auto& cls = tax.at("311FT");
  CHECK(class_text(cls, TextMode::title) == "Food and beverage and tobacco products");
  auto naics = load_naics_descriptions(testing::data_dir() / "naics" / "descriptions.csv");
  CHECK(class_text(cls, TextMode::description) == compose_description(cls, naics));
  CHECK(tax.descriptions_composed());

  auto bare = testing::canonical_taxonomy(false);
  CHECK_THROWS_AS(class_text(bare.at("311FT"), TextMode::description), StateError);
  CHECK(parse_text_mode("title") == TextMode::title);
  CHECK_THROWS(parse_text_mode("neither"));
}

TEST_CASE("every NAICS code referenced by the canonical classes has a description") {
  auto tax = testing::canonical_taxonomy(true);
  for (const auto& cls : tax.classes()) CHECK_FALSE(cls.description.empty());
}
