#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "unite/corpus.hpp"

namespace unite {

// All three need equal lengths >= 2 and a non-constant vector on each side;
// otherwise DataError / NumericalError respectively.
double pearson(std::span<const double> x, std::span<const double> y);
// Pearson correlation of average-tie ranks.
double spearman(std::span<const double> x, std::span<const double> y);
// Tau-b with tie corrections, O(n log n).
double kendall_b(std::span<const double> x, std::span<const double> y);

enum class EvalMode { per_lp, pooled };

EvalMode parse_eval_mode(std::string_view text);

struct CorrelationEntry {
    std::string label;  // "xx-yy" or "pooled"
    double spearman = 0.0;
    double pearson = 0.0;
    double kendall_b = 0.0;
    std::size_t n = 0;
};

struct CorrelationReport {
    std::string dataset_id;
    std::string model_id;
    std::vector<CorrelationEntry> entries;

    const CorrelationEntry* find(std::string_view label) const;
};

// per_lp: one entry per language pair (pairs with n < 2 or a constant side
// are skipped with a warning). pooled: one entry over every example.
// Bitwise independent of example order.
CorrelationReport evaluate(const Dataset& dataset, std::span<const double> predictions,
                           EvalMode mode);

std::string to_table(const CorrelationReport& report);
std::string to_tsv(const CorrelationReport& report);
std::string to_json(const CorrelationReport& report);

struct CDFReport {
    std::vector<double> thresholds;
    std::vector<double> fractions;  // share of scores <= threshold
};

CDFReport cdf_report(std::span<const double> scores, std::span<const double> thresholds);

// `count` thresholds evenly spaced over (lo, hi], ending at hi.
std::vector<double> even_thresholds(double lo, double hi, std::size_t count);

std::string to_tsv(const CDFReport& report);

}  // namespace unite
