#pragma once

#include <string>
#include <vector>

namespace scope3::svg {

struct Series {
  std::string name;
  std::vector<double> values;
};

/// Line chart over x = 1..n. Deterministic output for identical input.
std::string line_chart(const std::string& title, const std::string& x_label, const std::vector<Series>& series,
                       const std::vector<double>& markers = {});

/// Horizontal grouped bars, one group per category. Each series is scaled
/// against its own maximum magnitude so spend and emission share a chart.
std::string grouped_bars(const std::string& title, const std::vector<std::string>& categories,
                         const std::vector<Series>& series);

std::string escape(const std::string& text);

}  // namespace scope3::svg
