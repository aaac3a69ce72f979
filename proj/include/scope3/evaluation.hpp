#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "scope3/classifiers.hpp"
#include "scope3/corpus.hpp"

namespace scope3 {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t support = 0;
  std::int64_t predicted = 0;

  friend bool operator==(const ClassMetrics&, const ClassMetrics&) = default;
};

using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

struct EvalReport {
  double weighted_f1 = 0.0;
  /// Sorted union of gold and predicted codes; indexes confusion rows
  /// (gold) and columns (predicted).
  std::vector<std::string> labels;
  std::map<std::string, ClassMetrics> per_class;
  CountMatrix confusion;
  std::int64_t n_examples = 0;

  friend bool operator==(const EvalReport& a, const EvalReport& b) {
    return a.weighted_f1 == b.weighted_f1 && a.labels == b.labels && a.per_class == b.per_class &&
           a.confusion == b.confusion && a.n_examples == b.n_examples;
  }
};

/// Full report from parallel prediction/gold code lists. Throws InputError
/// on length mismatch or empty input.
EvalReport score_predictions(std::span<const std::string> preds, std::span<const std::string> golds);

/// Support-weighted mean of per-class F1 with the 0/0 -> 0 convention.
double weighted_f1(std::span<const std::string> preds, std::span<const std::string> golds);

/// Predicts every example and scores the result. Prediction failures are
/// rethrown as InputError carrying the example id.
EvalReport evaluate(const ClassifierModel& model, std::span<const LabeledExample> test);

/// Same, also returning the predictions in test order.
EvalReport evaluate(const ClassifierModel& model, std::span<const LabeledExample> test,
                    std::vector<Prediction>& predictions);

inline constexpr double kDefaultLowPerformanceThreshold = 0.7;

/// Codes with gold support whose F1 is below `threshold`, ascending by F1
/// then code. Throws RangeError unless 0 < threshold < 1.
std::vector<std::string> flag_low_performance(const EvalReport& report,
                                              double threshold = kDefaultLowPerformanceThreshold);

struct ComparisonRow {
  std::string name;
  double weighted_f1 = 0.0;
  std::int64_t n_examples = 0;
};

/// Rows sorted by weighted F1 descending, ties by name. Throws InputError
/// for an empty map.
std::vector<ComparisonRow> compare(const std::map<std::string, EvalReport>& reports);

nlohmann::json to_json(const EvalReport& report);
/// Aligned human-readable table.
std::string format_report(const EvalReport& report);

nlohmann::json to_json(std::span<const ComparisonRow> rows);
std::string format_comparison(std::span<const ComparisonRow> rows);

/// Learning-curve image (SVG) from an epoch log; marks the best epoch.
std::string learning_curve_svg(std::span<const EpochLog> log, const std::string& title);

}  // namespace scope3
