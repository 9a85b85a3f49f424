#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "unite/corpus.hpp"
#include "unite/error.hpp"
#include "unite/rng.hpp"

namespace unite {

// ---------------------------------------------------------------------------
// Translation providers

struct TranslationRequest {
    std::string_view src;
    const LanguagePair& lp;
    // Reference of the parallel pair. Real engines ignore it.
    std::string_view reference;
};

class TranslationProvider {
public:
    virtual ~TranslationProvider() = default;
    // Throws ProviderError when no translation can be obtained.
    virtual std::string translate(const TranslationRequest& request) = 0;
    virtual std::string name() const = 0;
};

class ProviderError : public Error {
public:
    using Error::Error;
};

// Returns the reference verbatim; degradation supplies the quality spread.
class OfflineProvider final : public TranslationProvider {
public:
    std::string translate(const TranslationRequest& request) override;
    std::string name() const override { return "offline"; }
};

// ---------------------------------------------------------------------------
// Degradation

struct DegradeConfig {
    double word_drop_prob = 0.15;
    double span_drop_prob = 0.3;
    double max_span_fraction = 0.3;
    std::size_t min_tokens_kept = 1;

    // Throws UsageError when a field is out of range.
    void validate() const;
};

// Drops each token independently with probability `p`. If fewer than
// `min_kept` survive, randomly chosen dropped tokens are restored.
std::vector<std::string> word_drop(const std::vector<std::string>& tokens, double p, Rng& rng,
                                   std::size_t min_kept = 1);

// Removes one contiguous span whose length is uniform in
// [1, ceil(max_span_fraction * n)], capped so `min_kept` tokens remain.
std::vector<std::string> span_drop(const std::vector<std::string>& tokens,
                                   double max_span_fraction, Rng& rng, std::size_t min_kept = 1);

// word_drop (always) then span_drop (with probability span_drop_prob).
std::vector<std::string> degrade(const std::vector<std::string>& tokens, const DegradeConfig& cfg,
                                 Rng& rng);

// Pseudo-translates every parallel pair and degrades the output. Per-example
// randomness comes from substream (seed, example index). Examples whose
// translation fails are skipped; more than half failing is a DataError.
Dataset synthesize(const Dataset& parallel, TranslationProvider& provider,
                   const DegradeConfig& cfg, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Labeling and normalization

class Scorer {
public:
    virtual ~Scorer() = default;
    virtual double score(const Example& example, InputFormat format) const = 0;
    virtual std::string name() const = 0;
};

// Fraction of reference tokens (multiset) that survive in the hypothesis.
// Needs the reference regardless of `format`; it is an oracle labeler.
class OverlapScorer final : public Scorer {
public:
    double score(const Example& example, InputFormat format) const override;
    std::string name() const override { return "overlap"; }
};

struct ScoreMatrix {
    std::vector<std::string> ids;
    std::vector<std::string> scorer_names;
    std::vector<double> values;  // row-major, rows() x cols()

    std::size_t rows() const { return ids.size(); }
    std::size_t cols() const { return scorer_names.size(); }
    double at(std::size_t row, std::size_t col) const { return values[row * cols() + col]; }
    std::vector<double> column(std::size_t col) const;
};

ScoreMatrix label(const Dataset& dataset, std::span<const Scorer* const> scorers,
                  InputFormat format);

// Writes `id<TAB>scorer...` with a header row; doubles in shortest round-trip form.
std::string to_tsv(const ScoreMatrix& matrix);
ScoreMatrix parse_score_matrix(std::string_view text, const std::string& origin);

// Average-tie ranks, z-scored with the population std. Needs >= 2 values.
std::vector<double> rank_z_normalize(std::span<const double> scores);

// Column-wise rank_z_normalize, then the mean across each row.
std::vector<double> aggregate(const ScoreMatrix& matrix);

// Aggregates the matrix separately within each language pair of `dataset`
// and stores the result as the examples' scores. Rows are matched by id.
Dataset apply_labels(const Dataset& dataset, const ScoreMatrix& matrix);

// ---------------------------------------------------------------------------
// Quality-bin pruning

using DropRatios = std::array<double, 5>;

inline constexpr DropRatios kDefaultDropRatios = {0.9, 0.8, 0.6, 0.2, 0.0};

struct PruneBin {
    std::size_t size = 0;
    std::size_t kept = 0;
};

struct PruneReport {
    struct Pair {
        LanguagePair lp;
        std::array<PruneBin, 5> bins;
    };
    std::vector<Pair> pairs;
};

// Per language pair: sort ascending by score, cut into 5 near-equal bins
// (lower bins take the remainder) and drop exactly round(ratio * size)
// examples from each bin, sampled without replacement. Kept examples retain
// their input order.
Dataset bin_prune(const Dataset& dataset, const DropRatios& ratios, std::uint64_t seed,
                  PruneReport* report = nullptr);

// Replaces scores with rank_z_normalize computed within each language pair.
Dataset renormalize(const Dataset& dataset);

}  // namespace unite
