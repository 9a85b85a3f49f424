#pragma once

// Slow, definitional reference implementations. Nothing here shares code with
// the library; tests compare the library against these.

#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

// Rank of x[i] = number of strictly smaller values plus half the number of
// other equal values (0-based average rank). O(n^2).
inline std::vector<double> ranks(const std::vector<double>& x) {
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        double less = 0.0, equal = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            if (x[j] < x[i]) less += 1.0;
            else if (x[j] == x[i] && j != i) equal += 1.0;
        }
        r[i] = less + equal / 2.0;
    }
    return r;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    return pearson(ranks(x), ranks(y));
}

// Tau-b by counting every pair.
inline double kendall_b(const std::vector<double>& x, const std::vector<double>& y) {
    long long concordant = 0, discordant = 0, tie_x = 0, tie_y = 0, pairs = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        for (std::size_t j = i + 1; j < x.size(); ++j) {
            ++pairs;
            const bool tx = x[i] == x[j];
            const bool ty = y[i] == y[j];
            if (tx) ++tie_x;
            if (ty) ++tie_y;
            if (tx || ty) continue;
            if ((x[i] < x[j]) == (y[i] < y[j])) ++concordant;
            else ++discordant;
        }
    }
    const double denom = std::sqrt(static_cast<double>(pairs - tie_x) * static_cast<double>(pairs - tie_y));
    return static_cast<double>(concordant - discordant) / denom;
}

// Rank-then-z with population std, straight from the definition.
inline std::vector<double> rank_z(const std::vector<double>& x) {
    const auto r = ranks(x);
    const double n = static_cast<double>(r.size());
    double m = 0.0;
    for (double v : r) m += v;
    m /= n;
    double var = 0.0;
    for (double v : r) var += (v - m) * (v - m);
    const double sd = std::sqrt(var / n);
    std::vector<double> out;
    for (double v : r) out.push_back(sd == 0.0 ? 0.0 : (v - m) / sd);
    return out;
}

}  // namespace oracle
