#include "scope3/emission.hpp"

#include <algorithm>

#include "scope3/common.hpp"
#include "scope3/csv.hpp"
#include "scope3/exact_sum.hpp"
#include "scope3/parallel.hpp"
#include "scope3/svg.hpp"
#include "scope3/text.hpp"

namespace scope3 {

namespace {

std::string currency_prefix(const std::string& basis) { return basis.substr(0, basis.find('-')); }

std::string upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

LineOutcome estimate_line(const TransactionRecord& record, const Prediction& pred, const Taxonomy& tax,
                          double threshold) {
  if (!tax.contains(pred.label)) throw InputError("prediction label '" + pred.label + "' is not in the taxonomy");
  UnmappedLine unmapped{record.id, record.text, pred.label, pred.score, {}};
  if (!record.amount) {
    unmapped.reason = "missing_amount";
    return unmapped;
  }
  const EmissionFactorRecord* f = tax.find_factor(pred.label);
  if (f == nullptr) {
    unmapped.reason = "missing_factor";
    return unmapped;
  }

  LineEstimate e;
  e.record_id = record.id;
  e.text = record.text;
  e.label = pred.label;
  e.spend = *record.amount;
  e.factor = f->factor;
  e.emission = e.spend * e.factor;
  e.confidence = pred.score;

  std::vector<std::string> reasons;
  if (pred.score < threshold) reasons.emplace_back("low_confidence");
  if (e.spend < 0.0) reasons.emplace_back("negative_amount");
  if (record.currency && !record.currency->empty() && upper(*record.currency) != upper(currency_prefix(f->currency_basis))) {
    reasons.emplace_back("currency_mismatch");
  }
  e.review_flag = !reasons.empty();
  e.review_reason = join(reasons, ";");
  return e;
}

std::vector<LineOutcome> estimate_ledger(std::span<const TransactionRecord> ledger, const ClassifierModel& model,
                                         const Taxonomy& tax, double threshold) {
  std::vector<LineOutcome> out(ledger.size());
  parallel_for(ledger.size(), [&](std::size_t i) {
    const auto& rec = ledger[i];
    if (normalize(rec.text).empty()) {
      out[i] = UnmappedLine{rec.id, rec.text, {}, 0.0, "empty_text"};
      return;
    }
    out[i] = estimate_line(rec, model.predict(rec.text), tax, threshold);
  });
  return out;
}

namespace {

struct Accumulator {
  ExactSum spend, emission;
  std::int64_t count = 0;
};

EmissionReport finish(std::map<std::string, Accumulator>& acc, std::vector<std::string> unmapped) {
  EmissionReport r;
  ExactSum spend, emission;
  for (auto& [code, a] : acc) {
    r.per_class[code] = {a.spend.value(), a.emission.value(), a.count};
    spend.merge(a.spend);
    emission.merge(a.emission);
    r.mapped_lines += a.count;
  }
  r.total_spend = spend.value();
  r.total_emission = emission.value();
  std::sort(unmapped.begin(), unmapped.end());
  r.unmapped = std::move(unmapped);
  return r;
}

void add(std::map<std::string, Accumulator>& acc, const LineEstimate& e) {
  auto& a = acc[e.label];
  a.spend.add(e.spend);
  a.emission.add(e.emission);
  ++a.count;
}

}  // namespace

EmissionReport aggregate(std::span<const LineOutcome> outcomes) {
  std::map<std::string, Accumulator> acc;
  std::vector<std::string> unmapped;
  for (const auto& o : outcomes) {
    if (const auto* e = std::get_if<LineEstimate>(&o)) {
      add(acc, *e);
    } else {
      unmapped.push_back(std::get<UnmappedLine>(o).record_id);
    }
  }
  return finish(acc, std::move(unmapped));
}

EmissionReport aggregate(std::span<const LineEstimate> estimates) {
  std::map<std::string, Accumulator> acc;
  for (const auto& e : estimates) add(acc, e);
  return finish(acc, {});
}

std::string report_csv(const EmissionReport& report, const Taxonomy& tax) {
  std::string out = "class_code,class_title,total_spend,total_emission_kg,line_count\n";
  for (const auto& code : tax.codes()) {
    auto it = report.per_class.find(code);
    if (it == report.per_class.end()) continue;
    const auto& t = it->second;
    out += csv::format_row({code, tax.at(code).title, format_double(t.total_spend), format_double(t.total_emission),
                            std::to_string(t.line_count)});
  }
  for (const auto& [code, t] : report.per_class) {
    if (tax.contains(code)) continue;
    out += csv::format_row({code, "", format_double(t.total_spend), format_double(t.total_emission),
                            std::to_string(t.line_count)});
  }
  out += csv::format_row({"TOTAL", "", format_double(report.total_spend), format_double(report.total_emission),
                          std::to_string(report.mapped_lines)});
  return out;
}

std::string audit_csv(std::span<const LineOutcome> outcomes) {
  std::string out = "record_id,text,label,score,spend,factor,emission,review_flag\n";
  for (const auto& o : outcomes) {
    if (const auto* e = std::get_if<LineEstimate>(&o)) {
      out += csv::format_row({e->record_id, e->text, e->label, format_double(e->confidence), format_double(e->spend),
                              format_double(e->factor), format_double(e->emission), e->review_flag ? "1" : "0"});
    } else {
      const auto& u = std::get<UnmappedLine>(o);
      out += csv::format_row(
          {u.record_id, u.text, u.label, u.label.empty() ? "" : format_double(u.confidence), "", "", "", "1"});
    }
  }
  return out;
}

std::string unmapped_csv(std::span<const LineOutcome> outcomes) {
  std::string out = "record_id,reason\n";
  for (const auto& o : outcomes) {
    if (const auto* u = std::get_if<UnmappedLine>(&o)) out += csv::format_row({u->record_id, u->reason});
  }
  return out;
}

std::string report_chart_svg(const EmissionReport& report, const Taxonomy& tax) {
  std::vector<std::string> categories;
  svg::Series spend{"spend", {}}, emission{"emission kg CO2e", {}};
  for (const auto& code : tax.codes()) {
    auto it = report.per_class.find(code);
    if (it == report.per_class.end()) continue;
    std::string title = tax.at(code).title;
    if (title.size() > 44) title = title.substr(0, 41) + "...";
    categories.push_back(code + "  " + title);
    spend.values.push_back(it->second.total_spend);
    emission.values.push_back(it->second.total_emission);
  }
  return svg::grouped_bars("Spend and Scope 3 emissions by commodity class", categories, {spend, emission});
}

}  // namespace scope3
