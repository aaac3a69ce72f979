#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "scope3/classifiers.hpp"
#include "scope3/corpus.hpp"
#include "scope3/taxonomy.hpp"

namespace scope3 {

inline constexpr double kDefaultReviewThreshold = 0.5;

struct LineEstimate {
  std::string record_id;
  std::string text;
  std::string label;
  double spend = 0.0;
  double factor = 0.0;
  double emission = 0.0;
  double confidence = 0.0;
  bool review_flag = false;
  /// Semicolon-joined reasons behind review_flag (low_confidence,
  /// negative_amount, currency_mismatch).
  std::string review_reason;
};

struct UnmappedLine {
  std::string record_id;
  std::string text;
  std::string label;  // empty when no prediction was possible
  double confidence = 0.0;
  std::string reason;
};

using LineOutcome = std::variant<LineEstimate, UnmappedLine>;

/// emission = amount * factor(pred.label). A missing amount or a class
/// without a factor yields an UnmappedLine instead of throwing.
LineOutcome estimate_line(const TransactionRecord& record, const Prediction& pred, const Taxonomy& tax,
                          double threshold = kDefaultReviewThreshold);

/// Classifies and estimates every ledger line; output follows ledger order.
/// Lines whose text normalizes to nothing become unmapped.
std::vector<LineOutcome> estimate_ledger(std::span<const TransactionRecord> ledger, const ClassifierModel& model,
                                         const Taxonomy& tax, double threshold = kDefaultReviewThreshold);

struct ClassTotals {
  double total_spend = 0.0;
  double total_emission = 0.0;
  std::int64_t line_count = 0;

  friend bool operator==(const ClassTotals&, const ClassTotals&) = default;
};

struct EmissionReport {
  std::map<std::string, ClassTotals> per_class;
  double total_spend = 0.0;
  double total_emission = 0.0;
  std::int64_t mapped_lines = 0;
  /// Ids sorted ascending.
  std::vector<std::string> unmapped;

  friend bool operator==(const EmissionReport&, const EmissionReport&) = default;
};

/// Per-class and overall sums. Every sum is exact (correctly rounded), so
/// the result does not depend on line order.
EmissionReport aggregate(std::span<const LineOutcome> outcomes);
EmissionReport aggregate(std::span<const LineEstimate> estimates);

/// `class_code,class_title,total_spend,total_emission_kg,line_count` rows in
/// taxonomy order followed by a TOTAL row.
std::string report_csv(const EmissionReport& report, const Taxonomy& tax);

/// `record_id,text,label,score,spend,factor,emission,review_flag`, one row
/// per ledger line; unmapped lines carry empty spend/factor/emission.
std::string audit_csv(std::span<const LineOutcome> outcomes);

/// `record_id,reason`.
std::string unmapped_csv(std::span<const LineOutcome> outcomes);

/// Spend and emission per class as a bar chart (SVG).
std::string report_chart_svg(const EmissionReport& report, const Taxonomy& tax);

}  // namespace scope3
