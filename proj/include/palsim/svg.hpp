#pragma once

#include <string>
#include <utility>
#include <vector>

namespace palsim {

/// One histogram panel per series, stacked vertically, sharing the x range.
std::string svg_histograms(const std::vector<std::pair<std::string, std::vector<double>>>& series, int bins,
                           const std::string& title, const std::string& x_label);

/// Horizontal bars, drawn in the given order.
std::string svg_bars(const std::vector<std::pair<std::string, double>>& bars, const std::string& title,
                     const std::string& x_label);

}  // namespace palsim
