#include "scope3/taxonomy.hpp"

#include "scope3/common.hpp"
#include "scope3/csv.hpp"
#include "scope3/hash.hpp"
#include "scope3/text.hpp"

namespace scope3 {

TextMode parse_text_mode(std::string_view name) {
  if (name == "title") return TextMode::title;
  if (name == "description") return TextMode::description;
  throw InputError("unknown text mode '" + std::string(name) + "' (expected title or description)");
}

std::string_view to_string(TextMode mode) { return mode == TextMode::title ? "title" : "description"; }

Taxonomy::Taxonomy(std::vector<CommodityClass> classes, std::vector<EmissionFactorRecord> factors)
    : classes_(std::move(classes)) {
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    const auto& c = classes_[i];
    if (c.code.empty()) throw ValidationError("class #" + std::to_string(i + 1) + ": empty code");
    if (c.title.empty()) throw ValidationError("class " + c.code + ": empty title");
    if (!index_.emplace(c.code, i).second) throw ValidationError("duplicate class code '" + c.code + "'");
    codes_.push_back(c.code);
  }
  for (auto& f : factors) {
    if (!index_.count(f.code)) throw ValidationError("factor for unknown class code '" + f.code + "'");
    if (!(f.factor >= 0.0)) throw ValidationError("class " + f.code + ": negative emission factor");
    std::string code = f.code;
    if (!factors_.emplace(code, std::move(f)).second) {
      throw ValidationError("duplicate factor for class code '" + code + "'");
    }
  }
  for (const auto& c : classes_) {
    if (!factors_.count(c.code)) warnings_.push_back("class " + c.code + " has no emission factor");
  }
}

bool Taxonomy::contains(std::string_view code) const { return index_.count(std::string(code)) > 0; }

const CommodityClass& Taxonomy::at(std::string_view code) const {
  auto it = index_.find(std::string(code));
  if (it == index_.end()) throw MissingClassError("unknown commodity class '" + std::string(code) + "'");
  return classes_[it->second];
}

const EmissionFactorRecord* Taxonomy::find_factor(std::string_view code) const {
  auto it = factors_.find(std::string(code));
  return it == factors_.end() ? nullptr : &it->second;
}

Taxonomy Taxonomy::with_descriptions(const std::map<std::string, std::string>& naics_texts) const {
  Taxonomy copy = *this;
  for (auto& c : copy.classes_) {
    if (c.description.empty()) c.description = compose_description(c, naics_texts);
  }
  return copy;
}

bool Taxonomy::descriptions_composed() const {
  for (const auto& c : classes_) {
    if (c.description.empty()) return false;
  }
  return !classes_.empty();
}

std::string Taxonomy::fingerprint() const {
  Fnv1a h;
  for (const auto& c : classes_) {
    h.field(c.code).field(c.title).field(join(c.naics_codes, "|")).field(c.description);
  }
  for (const auto& [code, f] : factors_) {
    h.field(code).field(format_double(f.factor)).field(f.currency_basis).field(f.factor_kind);
  }
  return h.hex();
}

Taxonomy load_taxonomy(const std::filesystem::path& classes_path, const std::filesystem::path& factors_path,
                       std::string_view factor_kind) {
  auto ctab = csv::read_file(classes_path);
  std::size_t c_code = ctab.require_column("code");
  std::size_t c_title = ctab.require_column("title");
  std::size_t c_naics = ctab.require_column("naics_codes");
  auto c_desc = ctab.column("description");
  if (ctab.rows.empty()) throw ValidationError(ctab.source + ": no classes");

  std::vector<CommodityClass> classes;
  for (const auto& row : ctab.rows) {
    CommodityClass c;
    c.code = trim(row.fields[c_code]);
    c.title = trim(row.fields[c_title]);
    std::string naics = trim(row.fields[c_naics]);
    if (!naics.empty()) {
      for (auto& n : split(naics, '|')) {
        auto t = trim(n);
        if (t.empty()) {
          throw ParseError(ctab.source + ": line " + std::to_string(row.line) + ": empty NAICS code in list");
        }
        c.naics_codes.push_back(std::move(t));
      }
    }
    if (c_desc) c.description = trim(row.fields[*c_desc]);
    if (c.code.empty()) throw ValidationError(ctab.source + ": line " + std::to_string(row.line) + ": empty code");
    if (c.title.empty()) throw ValidationError(ctab.source + ": line " + std::to_string(row.line) + ": empty title");
    classes.push_back(std::move(c));
  }

  auto ftab = csv::read_file(factors_path);
  std::size_t f_code = ftab.require_column("code");
  std::size_t f_value = ftab.require_column("factor_kg_per_unit");
  std::size_t f_basis = ftab.require_column("currency_basis");
  std::size_t f_kind = ftab.require_column("factor_kind");
  std::vector<EmissionFactorRecord> factors;
  for (const auto& row : ftab.rows) {
    EmissionFactorRecord f;
    f.code = trim(row.fields[f_code]);
    f.currency_basis = trim(row.fields[f_basis]);
    f.factor_kind = trim(row.fields[f_kind]);
    if (!parse_double(row.fields[f_value], f.factor)) {
      throw ParseError(ftab.source + ": line " + std::to_string(row.line) + ": bad factor value '" +
                       row.fields[f_value] + "'");
    }
    if (f.factor < 0.0) {
      throw ValidationError(ftab.source + ": line " + std::to_string(row.line) + ": negative factor for " + f.code);
    }
    if (f.factor_kind != factor_kind) continue;
    factors.push_back(std::move(f));
  }
  return Taxonomy(std::move(classes), std::move(factors));
}

std::map<std::string, std::string> load_naics_descriptions(const std::filesystem::path& path) {
  auto tab = csv::read_file(path);
  std::size_t c_code = tab.require_column("naics_code");
  std::size_t c_desc = tab.require_column("description");
  std::map<std::string, std::string> out;
  for (const auto& row : tab.rows) {
    auto code = trim(row.fields[c_code]);
    auto desc = trim(row.fields[c_desc]);
    if (code.empty() || desc.empty()) {
      throw ParseError(tab.source + ": line " + std::to_string(row.line) + ": empty NAICS code or description");
    }
    if (!out.emplace(code, desc).second) {
      throw ValidationError(tab.source + ": line " + std::to_string(row.line) + ": duplicate NAICS code " + code);
    }
  }
  return out;
}

std::string compose_description(const CommodityClass& cls, const std::map<std::string, std::string>& naics_texts) {
  if (cls.naics_codes.empty()) throw StateError("class " + cls.code + " lists no NAICS codes");
  std::string out;
  for (const auto& code : cls.naics_codes) {
    auto it = naics_texts.find(code);
    if (it == naics_texts.end()) {
      throw LookupError("class " + cls.code + ": no description for NAICS code " + code);
    }
    if (!out.empty()) out.push_back(' ');
    out += it->second;
  }
  return out;
}

const std::string& class_text(const CommodityClass& cls, TextMode mode) {
  if (mode == TextMode::title) return cls.title;
  if (cls.description.empty()) throw StateError("class " + cls.code + " has no composed description");
  return cls.description;
}

const EmissionFactorRecord& lookup_factor(const Taxonomy& tax, std::string_view code) {
  if (!tax.contains(code)) throw MissingClassError("unknown commodity class '" + std::string(code) + "'");
  const auto* f = tax.find_factor(code);
  if (!f) throw MissingFactorError("no emission factor for class '" + std::string(code) + "'");
  return *f;
}

std::string serialize_classes(const Taxonomy& tax) {
  std::string out = "code,title,naics_codes,description\n";
  for (const auto& c : tax.classes()) {
    out += csv::format_row({c.code, c.title, join(c.naics_codes, "|"), c.description});
  }
  return out;
}

std::string serialize_factors(const Taxonomy& tax) {
  std::string out = "code,factor_kg_per_unit,currency_basis,factor_kind\n";
  for (const auto& code : tax.codes()) {
    if (const auto* f = tax.find_factor(code)) {
      out += csv::format_row({f->code, format_double(f->factor), f->currency_basis, f->factor_kind});
    }
  }
  return out;
}

}  // namespace scope3
