#include "unite/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace unite {

std::vector<double> average_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i + 1;
        while (j < n && values[order[j]] == values[order[i]]) ++j;
        // positions i..j-1 are tied
        const double shared = 0.5 * static_cast<double>(i + j - 1);
        for (std::size_t k = i; k < j; ++k) ranks[order[k]] = shared;
        i = j;
    }
    return ranks;
}

double mean(std::span<const double> values) {
    if (values.empty()) return 0.0;
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

std::vector<double> z_normalize(std::span<const double> values) {
    const double mu = mean(values);
    double ss = 0.0;
    for (double v : values) ss += (v - mu) * (v - mu);
    const double sd = std::sqrt(ss / static_cast<double>(values.size()));
    std::vector<double> out(values.size(), 0.0);
    if (sd == 0.0) return out;
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - mu) / sd;
    return out;
}

}  // namespace unite
