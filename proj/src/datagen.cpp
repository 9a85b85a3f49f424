#include "unite/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_map>

#include <fmt/format.h>

#include "unite/hashing.hpp"
#include "unite/io.hpp"
#include "unite/log.hpp"
#include "unite/stats.hpp"

namespace unite {

std::string OfflineProvider::translate(const TranslationRequest& request) {
    return std::string(request.reference);
}

void DegradeConfig::validate() const {
    auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!in_unit(word_drop_prob)) throw UsageError("word_drop_prob must lie in [0, 1]");
    if (!in_unit(span_drop_prob)) throw UsageError("span_drop_prob must lie in [0, 1]");
    if (!(max_span_fraction > 0.0 && max_span_fraction <= 1.0)) {
        throw UsageError("max_span_fraction must lie in (0, 1]");
    }
    if (min_tokens_kept < 1) throw UsageError("min_tokens_kept must be at least 1");
}

std::vector<std::string> word_drop(const std::vector<std::string>& tokens, double p, Rng& rng,
                                   std::size_t min_kept) {
    const std::size_t n = tokens.size();
    std::vector<char> keep(n);
    std::size_t kept = 0;
    for (std::size_t i = 0; i < n; ++i) {
        keep[i] = rng.uniform() >= p;
        kept += keep[i] ? 1 : 0;
    }
    const std::size_t floor = std::min(min_kept, n);
    if (kept < floor) {
        std::vector<std::size_t> dropped;
        for (std::size_t i = 0; i < n; ++i)
            if (!keep[i]) dropped.push_back(i);
        // partial Fisher-Yates over the dropped positions
        for (std::size_t r = 0; r < floor - kept; ++r) {
            const std::size_t j = r + rng.below(dropped.size() - r);
            std::swap(dropped[r], dropped[j]);
            keep[dropped[r]] = 1;
        }
    }
    std::vector<std::string> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        if (keep[i]) out.push_back(tokens[i]);
    return out;
}

std::vector<std::string> span_drop(const std::vector<std::string>& tokens,
                                   double max_span_fraction, Rng& rng, std::size_t min_kept) {
    const std::size_t n = tokens.size();
    const std::size_t removable = n - std::min(min_kept, n);
    if (removable == 0) return tokens;

    // the epsilon keeps e.g. ceil(0.3 * 10) at 3 despite rounding in the product
    auto longest = static_cast<std::size_t>(std::ceil(max_span_fraction * static_cast<double>(n) - 1e-9));
    longest = std::clamp<std::size_t>(longest, 1, removable);
    const std::size_t length = rng.between(1, longest);
    const std::size_t start = rng.between(0, n - length);

    std::vector<std::string> out;
    out.reserve(n - length);
    out.insert(out.end(), tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(start));
    out.insert(out.end(), tokens.begin() + static_cast<std::ptrdiff_t>(start + length), tokens.end());
    return out;
}

std::vector<std::string> degrade(const std::vector<std::string>& tokens, const DegradeConfig& cfg,
                                 Rng& rng) {
    auto out = word_drop(tokens, cfg.word_drop_prob, rng, cfg.min_tokens_kept);
    if (rng.uniform() < cfg.span_drop_prob) {
        out = span_drop(out, cfg.max_span_fraction, rng, cfg.min_tokens_kept);
    }
    return out;
}

Dataset synthesize(const Dataset& parallel, TranslationProvider& provider,
                   const DegradeConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Dataset out;
    out.provenance = Provenance::synthetic;
    std::size_t failures = 0;
    for (std::size_t i = 0; i < parallel.size(); ++i) {
        const Example& in = parallel.examples[i];
        if (!in.ref || in.src.empty()) {
            throw DataError(fmt::format("example '{}': synthesis needs both src and ref", in.id));
        }
        Rng rng(derive_seed(seed, stream::synth, i));
        std::vector<std::string> words;
        try {
            words = split_words(provider.translate({in.src, in.lp, *in.ref}));
            if (words.empty()) throw ProviderError("empty translation");
        } catch (const ProviderError& e) {
            log_warning(fmt::format("{}: skipping example '{}': {}", provider.name(), in.id, e.what()));
            ++failures;
            continue;
        }
        Example ex;
        ex.id = in.id;
        ex.lp = in.lp;
        ex.src = in.src;
        ex.ref = in.ref;
        ex.hyp = join_words(degrade(words, cfg, rng));
        out.examples.push_back(std::move(ex));
    }
    if (2 * failures > parallel.size()) {
        throw DataError(fmt::format("translation failed for {} of {} examples", failures,
                                    parallel.size()));
    }
    return out;
}

// ---------------------------------------------------------------------------

double OverlapScorer::score(const Example& example, InputFormat) const {
    if (!example.ref) throw DataError(fmt::format("example '{}': overlap needs a reference", example.id));
    const auto ref = tokenize(*example.ref);
    if (ref.empty()) throw DataError(fmt::format("example '{}': empty reference", example.id));
    std::unordered_map<std::string, std::size_t> available;
    for (const auto& tok : tokenize(example.hyp)) ++available[tok];
    std::size_t matched = 0;
    for (const auto& tok : ref) {
        auto it = available.find(tok);
        if (it != available.end() && it->second > 0) {
            --it->second;
            ++matched;
        }
    }
    return static_cast<double>(matched) / static_cast<double>(ref.size());
}

std::vector<double> ScoreMatrix::column(std::size_t col) const {
    std::vector<double> out(rows());
    for (std::size_t r = 0; r < rows(); ++r) out[r] = at(r, col);
    return out;
}

ScoreMatrix label(const Dataset& dataset, std::span<const Scorer* const> scorers,
                  InputFormat format) {
    if (scorers.empty()) throw UsageError("labeling needs at least one scorer");
    ScoreMatrix m;
    for (const Scorer* s : scorers) m.scorer_names.push_back(s->name());
    m.values.reserve(dataset.size() * scorers.size());
    for (const auto& ex : dataset.examples) {
        m.ids.push_back(ex.id);
        for (const Scorer* s : scorers) {
            const double v = s->score(ex, format);
            if (!std::isfinite(v)) {
                throw NumericalError(fmt::format("scorer '{}' returned a non-finite score for example '{}'",
                                                 s->name(), ex.id));
            }
            m.values.push_back(v);
        }
    }
    return m;
}

std::string to_tsv(const ScoreMatrix& matrix) {
    std::string out = "id";
    for (const auto& name : matrix.scorer_names) out += '\t' + name;
    out += '\n';
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
        out += matrix.ids[r];
        for (std::size_t c = 0; c < matrix.cols(); ++c) out += '\t' + format_double(matrix.at(r, c));
        out += '\n';
    }
    return out;
}

ScoreMatrix parse_score_matrix(std::string_view text, const std::string& origin) {
    const auto lines = split_lines(text);
    if (lines.empty()) throw DataError(fmt::format("{}: missing header line", origin));
    const auto header = split_fields(lines[0], '\t');
    if (header.size() < 2 || header[0] != "id") {
        throw DataError(fmt::format("{}:1: expected header 'id<TAB>scorer...'", origin));
    }
    ScoreMatrix m;
    for (std::size_t c = 1; c < header.size(); ++c) m.scorer_names.emplace_back(header[c]);
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto fields = split_fields(lines[i], '\t');
        if (fields.size() != header.size()) {
            throw DataError(fmt::format("{}:{}: expected {} fields, got {}", origin, i + 1,
                                        header.size(), fields.size()));
        }
        m.ids.emplace_back(fields[0]);
        for (std::size_t c = 1; c < fields.size(); ++c) {
            try {
                m.values.push_back(parse_double(fields[c]));
            } catch (const std::invalid_argument& e) {
                throw DataError(fmt::format("{}:{}: field '{}': {}", origin, i + 1, header[c], e.what()));
            }
        }
    }
    return m;
}

std::vector<double> rank_z_normalize(std::span<const double> scores) {
    if (scores.size() < 2) {
        throw DataError(fmt::format("rank normalization needs at least 2 scores, got {}", scores.size()));
    }
    const auto ranks = average_ranks(scores);
    return z_normalize(ranks);
}

std::vector<double> aggregate(const ScoreMatrix& matrix) {
    if (matrix.cols() == 0) throw DataError("score matrix has no scorer columns");
    // running mean, so repeated columns leave the result unchanged
    std::vector<double> avg(matrix.rows(), 0.0);
    for (std::size_t c = 0; c < matrix.cols(); ++c) {
        const auto z = rank_z_normalize(matrix.column(c));
        const double w = 1.0 / static_cast<double>(c + 1);
        for (std::size_t r = 0; r < matrix.rows(); ++r) avg[r] += (z[r] - avg[r]) * w;
    }
    return avg;
}

namespace {

std::map<LanguagePair, std::vector<std::size_t>> group_by_pair(const Dataset& dataset) {
    std::map<LanguagePair, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < dataset.size(); ++i) groups[dataset.examples[i].lp].push_back(i);
    return groups;
}

void require_scores(const Dataset& dataset) {
    for (const auto& ex : dataset.examples) {
        if (!ex.score) throw DataError(fmt::format("example '{}' has no score", ex.id));
    }
}

}  // namespace

Dataset apply_labels(const Dataset& dataset, const ScoreMatrix& matrix) {
    std::unordered_map<std::string_view, std::size_t> row_of;
    for (std::size_t r = 0; r < matrix.rows(); ++r) row_of.emplace(matrix.ids[r], r);

    Dataset out = dataset;
    for (const auto& [lp, members] : group_by_pair(dataset)) {
        ScoreMatrix sub;
        sub.scorer_names = matrix.scorer_names;
        for (std::size_t i : members) {
            const auto& id = dataset.examples[i].id;
            auto it = row_of.find(id);
            if (it == row_of.end()) throw DataError(fmt::format("no score row for example '{}'", id));
            sub.ids.push_back(id);
            for (std::size_t c = 0; c < matrix.cols(); ++c) sub.values.push_back(matrix.at(it->second, c));
        }
        const auto agg = aggregate(sub);
        for (std::size_t k = 0; k < members.size(); ++k) out.examples[members[k]].score = agg[k];
    }
    return out;
}

Dataset bin_prune(const Dataset& dataset, const DropRatios& ratios, std::uint64_t seed,
                  PruneReport* report) {
    for (double r : ratios) {
        if (!(r >= 0.0 && r <= 1.0)) throw UsageError("drop ratios must lie in [0, 1]");
    }
    require_scores(dataset);

    std::vector<char> keep(dataset.size(), 1);
    for (auto& [lp, members] : group_by_pair(dataset)) {
        const std::size_t n = members.size();
        if (n < 5) {
            throw DataError(fmt::format("language pair {} has {} examples; pruning needs at least 5",
                                        lp.str(), n));
        }
        // members are in input order, so stable sorting breaks ties by position
        std::stable_sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
            return *dataset.examples[a].score < *dataset.examples[b].score;
        });

        PruneReport::Pair summary{lp, {}};
        const std::uint64_t pair_seed = derive_seed(seed, stream::prune, fnv1a(lp.str()));
        std::size_t pos = 0;
        for (std::size_t b = 0; b < 5; ++b) {
            const std::size_t size = n / 5 + (b < n % 5 ? 1 : 0);
            const auto drop = static_cast<std::size_t>(std::llround(ratios[b] * static_cast<double>(size)));
            std::vector<std::size_t> bin(members.begin() + static_cast<std::ptrdiff_t>(pos),
                                         members.begin() + static_cast<std::ptrdiff_t>(pos + size));
            Rng rng(derive_seed(pair_seed, b));
            for (std::size_t r = 0; r < drop; ++r) {
                const std::size_t j = r + rng.below(size - r);
                std::swap(bin[r], bin[j]);
                keep[bin[r]] = 0;
            }
            summary.bins[b] = {size, size - drop};
            pos += size;
        }
        if (report) report->pairs.push_back(std::move(summary));
    }

    Dataset out;
    out.provenance = dataset.provenance;
    for (std::size_t i = 0; i < dataset.size(); ++i)
        if (keep[i]) out.examples.push_back(dataset.examples[i]);
    return out;
}

Dataset renormalize(const Dataset& dataset) {
    require_scores(dataset);
    Dataset out = dataset;
    for (const auto& [lp, members] : group_by_pair(dataset)) {
        std::vector<double> scores;
        scores.reserve(members.size());
        for (std::size_t i : members) scores.push_back(*dataset.examples[i].score);
        const auto z = rank_z_normalize(scores);
        for (std::size_t k = 0; k < members.size(); ++k) out.examples[members[k]].score = z[k];
    }
    return out;
}

}  // namespace unite
