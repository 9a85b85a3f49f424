#include "unite/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "unite/error.hpp"
#include "unite/io.hpp"
#include "unite/log.hpp"
#include "unite/stats.hpp"

namespace unite {

namespace {

void check_inputs(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw DataError(fmt::format("correlation inputs differ in length ({} vs {})", x.size(), y.size()));
    }
    if (x.size() < 2) throw DataError("correlation needs at least 2 points");
    auto constant = [](std::span<const double> v) {
        return std::all_of(v.begin(), v.end(), [&](double a) { return a == v[0]; });
    };
    if (constant(x) || constant(y)) {
        throw NumericalError("correlation is undefined for a constant vector");
    }
}

double clamp_unit(double r) { return std::clamp(r, -1.0, 1.0); }

double pearson_unchecked(std::span<const double> x, std::span<const double> y) {
    const double mx = mean(x);
    const double my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    return clamp_unit(sxy / std::sqrt(sxx * syy));
}

// Number of pairs within runs of equal keys in a sorted range.
template <typename Eq>
std::int64_t tied_pairs(std::size_t n, Eq equal) {
    std::int64_t total = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i + 1;
        while (j < n && equal(i, j)) ++j;
        const auto t = static_cast<std::int64_t>(j - i);
        total += t * (t - 1) / 2;
        i = j;
    }
    return total;
}

// Sorts `v` ascending and returns the number of inversions.
std::int64_t merge_count(std::vector<double>& v, std::vector<double>& tmp, std::size_t lo, std::size_t hi) {
    if (hi - lo < 2) return 0;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::int64_t swaps = merge_count(v, tmp, lo, mid) + merge_count(v, tmp, mid, hi);
    std::size_t i = lo, j = mid, k = lo;
    while (i < mid && j < hi) {
        if (v[j] < v[i]) {
            swaps += static_cast<std::int64_t>(mid - i);
            tmp[k++] = v[j++];
        } else {
            tmp[k++] = v[i++];
        }
    }
    while (i < mid) tmp[k++] = v[i++];
    while (j < hi) tmp[k++] = v[j++];
    std::copy(tmp.begin() + static_cast<std::ptrdiff_t>(lo), tmp.begin() + static_cast<std::ptrdiff_t>(hi),
              v.begin() + static_cast<std::ptrdiff_t>(lo));
    return swaps;
}

}  // namespace

double pearson(std::span<const double> x, std::span<const double> y) {
    check_inputs(x, y);
    return pearson_unchecked(x, y);
}

double spearman(std::span<const double> x, std::span<const double> y) {
    check_inputs(x, y);
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    return pearson_unchecked(rx, ry);
}

double kendall_b(std::span<const double> x, std::span<const double> y) {
    check_inputs(x, y);
    const std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
    });

    const auto n0 = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
    const std::int64_t ties_x = tied_pairs(n, [&](std::size_t i, std::size_t j) { return x[order[i]] == x[order[j]]; });
    const std::int64_t ties_xy = tied_pairs(n, [&](std::size_t i, std::size_t j) {
        return x[order[i]] == x[order[j]] && y[order[i]] == y[order[j]];
    });

    std::vector<double> ys(n), tmp(n);
    for (std::size_t i = 0; i < n; ++i) ys[i] = y[order[i]];
    const std::int64_t swaps = merge_count(ys, tmp, 0, n);
    const std::int64_t ties_y = tied_pairs(n, [&](std::size_t i, std::size_t j) { return ys[i] == ys[j]; });

    const std::int64_t s = n0 - ties_x - ties_y + ties_xy - 2 * swaps;
    const double denom = std::sqrt(static_cast<double>(n0 - ties_x) * static_cast<double>(n0 - ties_y));
    return clamp_unit(static_cast<double>(s) / denom);
}

EvalMode parse_eval_mode(std::string_view text) {
    if (text == "per_lp" || text == "per-lp") return EvalMode::per_lp;
    if (text == "pooled") return EvalMode::pooled;
    throw UsageError(fmt::format("unknown evaluation mode '{}' (expected per_lp or pooled)", text));
}

const CorrelationEntry* CorrelationReport::find(std::string_view label) const {
    for (const auto& e : entries)
        if (e.label == label) return &e;
    return nullptr;
}

namespace {

// Sorting (gold, prediction) pairs first makes the result independent of input order.
CorrelationEntry correlate(std::string label, std::vector<std::pair<double, double>> pairs) {
    std::sort(pairs.begin(), pairs.end());
    std::vector<double> gold, pred;
    for (const auto& [g, p] : pairs) {
        gold.push_back(g);
        pred.push_back(p);
    }
    CorrelationEntry e;
    e.label = std::move(label);
    e.n = pairs.size();
    e.spearman = spearman(pred, gold);
    e.pearson = pearson(pred, gold);
    e.kendall_b = kendall_b(pred, gold);
    return e;
}

}  // namespace

CorrelationReport evaluate(const Dataset& dataset, std::span<const double> predictions, EvalMode mode) {
    if (predictions.size() != dataset.size()) {
        throw DataError(fmt::format("{} predictions for {} examples", predictions.size(), dataset.size()));
    }
    std::map<LanguagePair, std::vector<std::pair<double, double>>> groups;
    std::vector<std::pair<double, double>> all;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const auto& ex = dataset.examples[i];
        if (!ex.score) throw DataError(fmt::format("example '{}' has no gold score", ex.id));
        if (!std::isfinite(predictions[i])) {
            throw NumericalError(fmt::format("example '{}': non-finite prediction", ex.id));
        }
        groups[ex.lp].emplace_back(*ex.score, predictions[i]);
        all.emplace_back(*ex.score, predictions[i]);
    }

    CorrelationReport report;
    auto add = [&report](std::string label, std::vector<std::pair<double, double>> pairs) {
        if (pairs.size() < 2) {
            log_warning(fmt::format("{}: fewer than 2 examples, omitted from the report", label));
            return;
        }
        try {
            report.entries.push_back(correlate(label, std::move(pairs)));
        } catch (const NumericalError& e) {
            log_warning(fmt::format("{}: {}; omitted from the report", label, e.what()));
        }
    };
    if (mode == EvalMode::pooled) {
        add("pooled", std::move(all));
    } else {
        for (auto& [lp, pairs] : groups) add(lp.str(), std::move(pairs));
    }
    if (report.entries.empty()) throw DataError("evaluation produced no report entries");
    return report;
}

std::string to_table(const CorrelationReport& report) {
    std::string out = fmt::format("{:<10} {:>7} {:>9} {:>9} {:>9}\n", "pair", "n", "spearman", "pearson", "kendall");
    for (const auto& e : report.entries) {
        out += fmt::format("{:<10} {:>7} {:>9.4f} {:>9.4f} {:>9.4f}\n", e.label, e.n, e.spearman, e.pearson,
                           e.kendall_b);
    }
    return out;
}

std::string to_tsv(const CorrelationReport& report) {
    std::string out = "label\tn\tspearman\tpearson\tkendall_b\n";
    for (const auto& e : report.entries) {
        out += fmt::format("{}\t{}\t{}\t{}\t{}\n", e.label, e.n, format_double(e.spearman),
                           format_double(e.pearson), format_double(e.kendall_b));
    }
    return out;
}

std::string to_json(const CorrelationReport& report) {
    nlohmann::ordered_json j;
    j["dataset"] = report.dataset_id;
    j["model"] = report.model_id;
    j["entries"] = nlohmann::ordered_json::array();
    for (const auto& e : report.entries) {
        j["entries"].push_back({{"label", e.label},
                                {"n", e.n},
                                {"spearman", e.spearman},
                                {"pearson", e.pearson},
                                {"kendall_b", e.kendall_b}});
    }
    return j.dump(2) + "\n";
}

CDFReport cdf_report(std::span<const double> scores, std::span<const double> thresholds) {
    if (scores.empty()) throw DataError("cdf report needs at least one score");
    if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
        throw UsageError("cdf thresholds must be ascending");
    }
    std::vector<double> sorted(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end());
    CDFReport report;
    report.thresholds.assign(thresholds.begin(), thresholds.end());
    for (double t : thresholds) {
        const auto count = std::upper_bound(sorted.begin(), sorted.end(), t) - sorted.begin();
        report.fractions.push_back(static_cast<double>(count) / static_cast<double>(sorted.size()));
    }
    return report;
}

std::vector<double> even_thresholds(double lo, double hi, std::size_t count) {
    if (count == 0 || !(hi > lo)) throw UsageError("threshold range must be non-empty");
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        out[i] = lo + (hi - lo) * static_cast<double>(i + 1) / static_cast<double>(count);
    }
    out.back() = hi;
    return out;
}

std::string to_tsv(const CDFReport& report) {
    std::string out = "threshold\tfraction\n";
    for (std::size_t i = 0; i < report.thresholds.size(); ++i) {
        out += format_double(report.thresholds[i]) + '\t' + format_double(report.fractions[i]) + '\n';
    }
    return out;
}

}  // namespace unite
