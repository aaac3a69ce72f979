#include "scope3/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <mutex>
#include <numeric>
#include <optional>

#include "scope3/common.hpp"
#include "scope3/parallel.hpp"
#include "scope3/svg.hpp"
#include "scope3/text.hpp"

namespace scope3 {

namespace {

double ratio(std::int64_t num, std::int64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string pad_right(std::string s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}

std::string pad_left(std::string s, std::size_t w) {
  if (s.size() < w) s.insert(0, w - s.size(), ' ');
  return s;
}

}  // namespace

EvalReport score_predictions(std::span<const std::string> preds, std::span<const std::string> golds) {
  if (preds.size() != golds.size()) {
    throw InputError("predictions and gold labels differ in length (" + std::to_string(preds.size()) + " vs " +
                     std::to_string(golds.size()) + ")");
  }
  if (golds.empty()) throw InputError("cannot score an empty evaluation set");

  EvalReport r;
  r.labels.assign(golds.begin(), golds.end());
  r.labels.insert(r.labels.end(), preds.begin(), preds.end());
  std::sort(r.labels.begin(), r.labels.end());
  r.labels.erase(std::unique(r.labels.begin(), r.labels.end()), r.labels.end());

  auto index = [&](const std::string& code) {
    return static_cast<Eigen::Index>(std::lower_bound(r.labels.begin(), r.labels.end(), code) - r.labels.begin());
  };
  auto k = static_cast<Eigen::Index>(r.labels.size());
  r.confusion = CountMatrix::Zero(k, k);
  for (std::size_t i = 0; i < golds.size(); ++i) ++r.confusion(index(golds[i]), index(preds[i]));
  r.n_examples = static_cast<std::int64_t>(golds.size());

  double weighted = 0.0;
  for (Eigen::Index c = 0; c < k; ++c) {
    ClassMetrics m;
    std::int64_t tp = r.confusion(c, c);
    m.support = r.confusion.row(c).sum();
    m.predicted = r.confusion.col(c).sum();
    m.precision = ratio(tp, m.predicted);
    m.recall = ratio(tp, m.support);
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    weighted += static_cast<double>(m.support) * m.f1;
    r.per_class.emplace(r.labels[static_cast<std::size_t>(c)], m);
  }
  r.weighted_f1 = std::clamp(weighted / static_cast<double>(r.n_examples), 0.0, 1.0);
  return r;
}

double weighted_f1(std::span<const std::string> preds, std::span<const std::string> golds) {
  return score_predictions(preds, golds).weighted_f1;
}

EvalReport evaluate(const ClassifierModel& model, std::span<const LabeledExample> test,
                    std::vector<Prediction>& predictions) {
  if (test.empty()) throw InputError("evaluation set is empty");
  predictions.assign(test.size(), Prediction{});
  std::mutex mu;
  std::optional<std::pair<std::size_t, std::string>> failure;
  parallel_for(test.size(), [&](std::size_t i) {
    try {
      predictions[i] = model.predict(test[i].text);
    } catch (const std::exception& e) {
      std::lock_guard lock(mu);
      if (!failure || i < failure->first) failure = {i, e.what()};
    }
  });
  if (failure) throw InputError("example " + test[failure->first].id + ": " + failure->second);

  std::vector<std::string> preds, golds;
  preds.reserve(test.size());
  golds.reserve(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    preds.push_back(predictions[i].label);
    golds.push_back(test[i].label);
  }
  return score_predictions(preds, golds);
}

EvalReport evaluate(const ClassifierModel& model, std::span<const LabeledExample> test) {
  std::vector<Prediction> ignored;
  return evaluate(model, test, ignored);
}

std::vector<std::string> flag_low_performance(const EvalReport& report, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw RangeError("low-performance threshold must lie in (0, 1), got " + format_double(threshold));
  }
  std::vector<std::pair<double, std::string>> low;
  for (const auto& [code, m] : report.per_class) {
    if (m.support > 0 && m.f1 < threshold) low.emplace_back(m.f1, code);
  }
  std::sort(low.begin(), low.end());
  std::vector<std::string> out;
  for (auto& [f1, code] : low) out.push_back(std::move(code));
  return out;
}

std::vector<ComparisonRow> compare(const std::map<std::string, EvalReport>& reports) {
  if (reports.empty()) throw InputError("nothing to compare");
  std::vector<ComparisonRow> rows;
  for (const auto& [name, r] : reports) rows.push_back({name, r.weighted_f1, r.n_examples});
  std::stable_sort(rows.begin(), rows.end(),
                   [](const ComparisonRow& a, const ComparisonRow& b) { return a.weighted_f1 > b.weighted_f1; });
  return rows;
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [code, m] : report.per_class) {
    per_class[code] = {{"precision", m.precision},
                       {"recall", m.recall},
                       {"f1", m.f1},
                       {"support", m.support},
                       {"predicted", m.predicted}};
  }
  nlohmann::json confusion = nlohmann::json::array();
  for (Eigen::Index i = 0; i < report.confusion.rows(); ++i) {
    std::vector<std::int64_t> row(static_cast<std::size_t>(report.confusion.cols()));
    for (Eigen::Index j = 0; j < report.confusion.cols(); ++j) row[static_cast<std::size_t>(j)] = report.confusion(i, j);
    confusion.push_back(row);
  }
  return {{"weighted_f1", report.weighted_f1},
          {"n_examples", report.n_examples},
          {"labels", report.labels},
          {"per_class", per_class},
          {"confusion", confusion}};
}

std::string format_report(const EvalReport& report) {
  std::size_t w = 5;
  for (const auto& l : report.labels) w = std::max(w, l.size());
  std::string out = "weighted F1: " + fixed(report.weighted_f1, 4) + "  (n = " + std::to_string(report.n_examples) +
                    ")\n\n";
  out += pad_right("class", w) + "  precision     recall         f1    support\n";
  for (const auto& code : report.labels) {
    const auto& m = report.per_class.at(code);
    out += pad_right(code, w) + pad_left(fixed(m.precision, 4), 11) + pad_left(fixed(m.recall, 4), 11) +
           pad_left(fixed(m.f1, 4), 11) + pad_left(std::to_string(m.support), 11) + "\n";
  }
  return out;
}

nlohmann::json to_json(std::span<const ComparisonRow> rows) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.push_back({{"rank", i + 1}, {"name", rows[i].name}, {"weighted_f1", rows[i].weighted_f1},
                   {"n_examples", rows[i].n_examples}});
  }
  return out;
}

std::string format_comparison(std::span<const ComparisonRow> rows) {
  std::size_t w = 5;
  for (const auto& r : rows) w = std::max(w, r.name.size());
  std::string out = "rank  " + pad_right("model", w) + "  weighted_f1  n_examples\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out += pad_left(std::to_string(i + 1), 4) + "  " + pad_right(rows[i].name, w) +
           pad_left(fixed(rows[i].weighted_f1, 4), 13) + pad_left(std::to_string(rows[i].n_examples), 12) + "\n";
  }
  return out;
}

std::string learning_curve_svg(std::span<const EpochLog> log, const std::string& title) {
  svg::Series train{"train loss", {}}, val{"validation loss", {}};
  std::vector<double> best;
  double best_loss = INFINITY;
  double best_epoch = 0;
  for (const auto& e : log) {
    train.values.push_back(e.train_loss);
    val.values.push_back(e.validation_loss);
    if (e.validation_loss < best_loss) {
      best_loss = e.validation_loss;
      best_epoch = static_cast<double>(train.values.size());
    }
  }
  if (best_epoch > 0) best.push_back(best_epoch);
  return svg::line_chart(title, "epoch", {train, val}, best);
}

}  // namespace scope3
