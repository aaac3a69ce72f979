#pragma once

// Deliberately naive reference implementations used to check the library.
// They share no code with it.

#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace oracle {

// Per-class counting by full scans; F1 from counts, 0 when undefined.
inline double weighted_f1(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  std::set<std::string> labels(gold.begin(), gold.end());
  labels.insert(pred.begin(), pred.end());
  double total = 0.0;
  for (const auto& c : labels) {
    long tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      bool p = pred[i] == c, g = gold[i] == c;
      tp += p && g;
      fp += p && !g;
      fn += !p && g;
    }
    double f1 = tp == 0 ? 0.0 : 2.0 * tp / (2.0 * tp + fp + fn);
    total += f1 * static_cast<double>(tp + fn) / static_cast<double>(gold.size());
  }
  return total;
}

inline std::vector<std::string> words(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

// Smoothed-idf tf-idf of `doc` against `corpus` (already lowercase, no
// punctuation), L2-normalized, keyed by term.
inline std::map<std::string, double> tfidf(const std::vector<std::string>& corpus, const std::string& doc) {
  const double n = static_cast<double>(corpus.size());
  std::map<std::string, double> v;
  for (const auto& w : words(doc)) {
    double df = 0;
    for (const auto& d : corpus) {
      auto ws = words(d);
      bool has = false;
      for (const auto& x : ws) has = has || x == w;
      df += has;
    }
    if (df == 0) continue;
    v[w] += std::log((1.0 + n) / (1.0 + df)) + 1.0;
  }
  double sq = 0.0;
  for (const auto& [w, x] : v) sq += x * x;
  for (auto& [w, x] : v) x /= std::sqrt(sq);
  return v;
}

// Sum in binary128, rounded once. Exact for the magnitudes used in tests.
inline double wide_sum(const std::vector<double>& xs) {
  __float128 s = 0;
  for (double x : xs) s += static_cast<__float128>(x);
  return static_cast<double>(s);
}

}  // namespace oracle
