#pragma once

#include <span>
#include <vector>

namespace unite {

// 0-based ascending ranks; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

// (x - mean) / population std. A constant input maps to all zeros.
std::vector<double> z_normalize(std::span<const double> values);

double mean(std::span<const double> values);

}  // namespace unite
