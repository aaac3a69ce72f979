#pragma once

#include <cmath>
#include <vector>

namespace scope3 {

/// Exact floating-point accumulator (Shewchuk's non-overlapping partials).
/// value() is the correctly rounded sum of everything added, so the result
/// does not depend on insertion order or on how partial sums are merged.
class ExactSum {
 public:
  void add(double x) {
    std::size_t i = 0;
    for (double y : partials_) {
      if (std::fabs(x) < std::fabs(y)) std::swap(x, y);
      double hi = x + y;
      double lo = y - (hi - x);
      if (lo != 0.0) partials_[i++] = lo;
      x = hi;
    }
    partials_.resize(i);
    partials_.push_back(x);
  }

  void merge(const ExactSum& other) {
    for (double p : other.partials_) add(p);
  }

  double value() const {
    if (partials_.empty()) return 0.0;
    std::size_t n = partials_.size();
    double hi = partials_[--n];
    double lo = 0.0;
    while (n > 0) {
      double x = hi;
      double y = partials_[--n];
      hi = x + y;
      double yr = hi - x;
      lo = y - yr;
      if (lo != 0.0) break;
    }
    // Round-half-even correction, as in CPython's math.fsum.
    if (n > 0 && ((lo < 0.0 && partials_[n - 1] < 0.0) || (lo > 0.0 && partials_[n - 1] > 0.0))) {
      double y = lo * 2.0;
      double x = hi + y;
      if (y == x - hi) hi = x;
    }
    return hi;
  }

 private:
  std::vector<double> partials_;
};

template <typename Range>
double exact_sum(const Range& values) {
  ExactSum s;
  for (double v : values) s.add(v);
  return s.value();
}

}  // namespace scope3
