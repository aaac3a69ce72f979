#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace scope3 {

/// One EEIO summary commodity class.
struct CommodityClass {
  std::string code;
  std::string title;
  std::vector<std::string> naics_codes;
  /// Composed NAICS description text; empty until composed.
  std::string description;
};

/// Spend-based emission factor for one class, in kg CO2e per currency unit.
struct EmissionFactorRecord {
  std::string code;
  double factor = 0.0;
  std::string currency_basis;
  std::string factor_kind;
};

enum class TextMode { title, description };

TextMode parse_text_mode(std::string_view name);
std::string_view to_string(TextMode mode);

inline constexpr std::string_view kDefaultFactorKind = "supply_chain_with_margins";

/// Immutable after construction. Classes keep file order; codes() returns
/// them in that order.
class Taxonomy {
 public:
  Taxonomy() = default;

  /// Validates and builds. Throws ValidationError on duplicate or empty
  /// codes, empty titles, negative factors, or factors for unknown classes.
  /// Classes without a factor are accepted and reported via warnings().
  Taxonomy(std::vector<CommodityClass> classes, std::vector<EmissionFactorRecord> factors);

  std::size_t class_count() const { return classes_.size(); }
  const std::vector<CommodityClass>& classes() const { return classes_; }
  const std::vector<std::string>& codes() const { return codes_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  bool contains(std::string_view code) const;
  /// Throws MissingClassError for unknown codes.
  const CommodityClass& at(std::string_view code) const;
  /// nullptr when the class has no factor (or is unknown).
  const EmissionFactorRecord* find_factor(std::string_view code) const;
  const std::map<std::string, EmissionFactorRecord>& factors() const { return factors_; }

  /// Copy with every class description composed from `naics_texts`.
  /// Classes whose description is already set keep it.
  Taxonomy with_descriptions(const std::map<std::string, std::string>& naics_texts) const;

  bool descriptions_composed() const;

  /// Stable fingerprint of codes, titles, descriptions and factors.
  std::string fingerprint() const;

 private:
  std::vector<CommodityClass> classes_;
  std::vector<std::string> codes_;
  std::unordered_map<std::string, std::size_t> index_;
  std::map<std::string, EmissionFactorRecord> factors_;
  std::vector<std::string> warnings_;
};

/// Loads the classes and factors files. Only factor rows whose factor_kind
/// equals `factor_kind` are used.
Taxonomy load_taxonomy(const std::filesystem::path& classes_path, const std::filesystem::path& factors_path,
                       std::string_view factor_kind = kDefaultFactorKind);

/// `naics_code,description` file.
std::map<std::string, std::string> load_naics_descriptions(const std::filesystem::path& path);

/// NAICS texts joined in naics_codes order with a single space. Throws
/// LookupError naming the first code missing from `naics_texts`.
std::string compose_description(const CommodityClass& cls, const std::map<std::string, std::string>& naics_texts);

/// Title or composed description. Throws StateError for description mode
/// when the description is empty.
const std::string& class_text(const CommodityClass& cls, TextMode mode);

/// Throws MissingClassError for an unknown code and MissingFactorError for a
/// known class without a factor.
const EmissionFactorRecord& lookup_factor(const Taxonomy& tax, std::string_view code);

/// Serializers matching the file formats accepted by load_taxonomy().
std::string serialize_classes(const Taxonomy& tax);
std::string serialize_factors(const Taxonomy& tax);

}  // namespace scope3
