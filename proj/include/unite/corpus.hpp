#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace unite {

struct LanguagePair {
    std::string source;
    std::string target;

    // Accepts "xx-yy" in any case; throws DataError on anything else.
    static LanguagePair parse(std::string_view text);
    std::string str() const { return source + "-" + target; }

    auto operator<=>(const LanguagePair&) const = default;
};

// One evaluation tuple: hypothesis, source, optional reference and score.
struct Example {
    std::string id;
    LanguagePair lp;
    std::string src;
    std::string hyp;
    std::optional<std::string> ref;
    std::optional<double> score;

    bool operator==(const Example&) const = default;
};

enum class Provenance { synthetic, da, mqm, dev, test };

std::string_view to_string(Provenance p);
Provenance parse_provenance(std::string_view text);

struct Dataset {
    std::vector<Example> examples;
    Provenance provenance = Provenance::dev;

    std::size_t size() const { return examples.size(); }
    bool empty() const { return examples.empty(); }
    bool operator==(const Dataset&) const = default;
};

// Throws DataError on a repeated id.
void check_unique_ids(const Dataset& dataset);

// Stable content hash over every field, independent of file format.
std::string dataset_fingerprint(const Dataset& dataset);

enum class FileFormat { tsv, jsonl };

FileFormat parse_file_format(std::string_view text);
// "tsv" for *.tsv, "jsonl" for *.jsonl / *.json; otherwise `fallback`.
FileFormat file_format_for(const std::string& path, FileFormat fallback = FileFormat::tsv);

Dataset load_dataset(const std::string& path, FileFormat format,
                     Provenance provenance = Provenance::dev);
void save_dataset(const Dataset& dataset, const std::string& path, FileFormat format);

// In-memory variants used by the file functions; `origin` names the source in errors.
Dataset parse_tsv(std::string_view text, const std::string& origin, Provenance provenance);
Dataset parse_jsonl(std::string_view text, const std::string& origin, Provenance provenance);
std::string to_tsv(const Dataset& dataset);
std::string to_jsonl(const Dataset& dataset);

// Seeded shuffle followed by an equal three-way split; earlier parts take the
// remainder. Each part keeps the input's relative order.
std::tuple<Dataset, Dataset, Dataset> split_three_way(const Dataset& dataset, std::uint64_t seed);

// Seeded shuffle then `k` near-equal folds of example indices (earlier folds
// take the remainder). Indices within a fold are ascending.
std::vector<std::vector<std::size_t>> make_folds(std::size_t n, std::size_t k, std::uint64_t seed);

Dataset subset(const Dataset& dataset, const std::vector<std::size_t>& indices);

// ---------------------------------------------------------------------------
// Tokenization and input construction

using TokenId = std::uint32_t;

struct Vocabulary {
    static constexpr TokenId cls = 0;
    static constexpr TokenId sep = 1;
    static constexpr TokenId unk = 2;
    static constexpr TokenId pad = 3;
    static constexpr TokenId first_content = 4;

    std::uint32_t buckets = 65536;

    std::size_t size() const { return first_content + buckets; }
    TokenId id(std::string_view token) const;
};

// Lowercased (ASCII), whitespace-delimited.
std::vector<std::string> tokenize(std::string_view text);
std::vector<TokenId> encode_tokens(std::string_view text, const Vocabulary& vocab);

// Whitespace split that keeps the original casing; used for degradation.
std::vector<std::string> split_words(std::string_view text);
std::string join_words(const std::vector<std::string>& words);

enum class InputFormat { src, ref, src_ref };

inline constexpr InputFormat kAllFormats[] = {InputFormat::ref, InputFormat::src,
                                              InputFormat::src_ref};

std::string_view to_string(InputFormat f);
InputFormat parse_input_format(std::string_view text);

// Which part of the layout a position belongs to. Each separator pair goes
// with the segment it encloses. The CLS position instead carries a tag naming
// the whole layout, so a pooled encoder can tell the three formats apart.
enum class Segment : std::uint8_t { hyp, src, ref, layout_src, layout_ref, layout_src_ref };
inline constexpr std::size_t kSegmentCount = 6;

struct Sequence {
    std::vector<TokenId> ids;
    std::vector<Segment> segments;  // parallel to ids
    InputFormat format = InputFormat::src;
    std::size_t len_h = 0;
    std::size_t len_s = 0;
    std::size_t len_r = 0;

    // Number of CLS/SEP ids the layout adds around the segments.
    static std::size_t special_count(InputFormat format);
};

//   src:     <s> h </s></s> s </s>
//   ref:     <s> h </s></s> r </s>
//   src_ref: <s> h </s></s> s </s></s> r </s>
Sequence build_input(const Example& example, InputFormat format, const Vocabulary& vocab);

}  // namespace unite
