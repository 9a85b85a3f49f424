#include "unite/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "unite/error.hpp"
#include "unite/hashing.hpp"
#include "unite/io.hpp"
#include "unite/rng.hpp"

namespace unite {

namespace {

constexpr std::string_view kTsvHeader = "id\tlp\tsrc\tmt\tref\tscore";
constexpr std::size_t kTsvColumns = 6;

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), ascii_lower);
    return out;
}

bool valid_language_code(std::string_view code) {
    if (code.empty()) return false;
    return std::all_of(code.begin(), code.end(),
                       [](char c) { return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9'); });
}

void check_representable(const Example& ex, std::string_view field, const std::string& text) {
    if (text.find_first_of("\t\n\r") != std::string::npos) {
        throw DataError(fmt::format("example '{}': field '{}' contains a tab or line break "
                                    "and cannot be written as TSV",
                                    ex.id, field));
    }
}

}  // namespace

// ---------------------------------------------------------------------------

LanguagePair LanguagePair::parse(std::string_view text) {
    const auto dash = text.find('-');
    if (dash == std::string_view::npos || text.find('-', dash + 1) != std::string_view::npos) {
        throw DataError(fmt::format("language pair '{}' is not of the form xx-yy", text));
    }
    LanguagePair lp{lower(text.substr(0, dash)), lower(text.substr(dash + 1))};
    if (!valid_language_code(lp.source) || !valid_language_code(lp.target)) {
        throw DataError(fmt::format("language pair '{}' has an invalid code", text));
    }
    return lp;
}

std::string_view to_string(Provenance p) {
    switch (p) {
        case Provenance::synthetic: return "synthetic";
        case Provenance::da: return "da";
        case Provenance::mqm: return "mqm";
        case Provenance::dev: return "dev";
        case Provenance::test: return "test";
    }
    return "unknown";
}

Provenance parse_provenance(std::string_view text) {
    for (auto p : {Provenance::synthetic, Provenance::da, Provenance::mqm, Provenance::dev,
                   Provenance::test}) {
        if (text == to_string(p)) return p;
    }
    throw UsageError(fmt::format("unknown provenance '{}'", text));
}

void check_unique_ids(const Dataset& dataset) {
    std::unordered_set<std::string_view> seen;
    for (const auto& ex : dataset.examples) {
        if (!seen.insert(ex.id).second) throw DataError(fmt::format("duplicate id '{}'", ex.id));
    }
}

std::string dataset_fingerprint(const Dataset& dataset) {
    std::uint64_t h = kFnvOffset;
    auto put = [&h](std::string_view s) {
        h = fnv1a(std::to_string(s.size()), h);
        h = fnv1a(":", h);
        h = fnv1a(s, h);
    };
    for (const auto& ex : dataset.examples) {
        put(ex.id);
        put(ex.lp.str());
        put(ex.src);
        put(ex.hyp);
        put(ex.ref ? "R" + *ex.ref : "-");
        put(ex.score ? "S" + format_double(*ex.score) : "-");
    }
    return hex64(h);
}

FileFormat parse_file_format(std::string_view text) {
    if (text == "tsv") return FileFormat::tsv;
    if (text == "jsonl") return FileFormat::jsonl;
    throw UsageError(fmt::format("unknown file format '{}' (expected tsv or jsonl)", text));
}

FileFormat file_format_for(const std::string& path, FileFormat fallback) {
    auto ends_with = [&path](std::string_view suffix) {
        return path.size() >= suffix.size() &&
               path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (ends_with(".tsv")) return FileFormat::tsv;
    if (ends_with(".jsonl") || ends_with(".json")) return FileFormat::jsonl;
    return fallback;
}

Dataset parse_tsv(std::string_view text, const std::string& origin, Provenance provenance) {
    Dataset dataset;
    dataset.provenance = provenance;
    std::size_t line_no = 0;
    std::size_t start = 0;
    bool saw_header = false;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

        if (!saw_header) {
            if (line != kTsvHeader) {
                throw DataError(fmt::format("{}:1: expected header '{}'", origin,
                                            "id\\tlp\\tsrc\\tmt\\tref\\tscore"));
            }
            saw_header = true;
            continue;
        }
        if (line.empty()) continue;

        const auto fields = split_fields(line, '\t');
        if (fields.size() != kTsvColumns) {
            throw DataError(fmt::format("{}:{}: expected {} fields, got {}", origin, line_no,
                                        kTsvColumns, fields.size()));
        }
        Example ex;
        ex.id = std::string(fields[0]);
        if (ex.id.empty()) throw DataError(fmt::format("{}:{}: field 'id' is empty", origin, line_no));
        try {
            ex.lp = LanguagePair::parse(fields[1]);
        } catch (const DataError& e) {
            throw DataError(fmt::format("{}:{}: field 'lp': {}", origin, line_no, e.what()));
        }
        ex.src = std::string(fields[2]);
        ex.hyp = std::string(fields[3]);
        if (!fields[4].empty()) ex.ref = std::string(fields[4]);
        try {
            if (!fields[5].empty()) ex.score = parse_double(fields[5]);
        } catch (const std::invalid_argument& e) {
            throw DataError(fmt::format("{}:{}: field 'score': {}", origin, line_no, e.what()));
        }
        dataset.examples.push_back(std::move(ex));
    }
    if (!saw_header) throw DataError(fmt::format("{}: missing header line", origin));
    check_unique_ids(dataset);
    return dataset;
}

Dataset parse_jsonl(std::string_view text, const std::string& origin, Provenance provenance) {
    using nlohmann::json;
    Dataset dataset;
    dataset.provenance = provenance;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataError(fmt::format("{}:{}: invalid JSON: {}", origin, line_no, e.what()));
        }
        if (!obj.is_object()) throw DataError(fmt::format("{}:{}: expected an object", origin, line_no));

        auto text_field = [&](const char* key, bool nullable) -> std::optional<std::string> {
            auto it = obj.find(key);
            if (it == obj.end() || it->is_null()) {
                if (nullable) return std::nullopt;
                throw DataError(fmt::format("{}:{}: field '{}' is missing", origin, line_no, key));
            }
            if (!it->is_string()) {
                throw DataError(fmt::format("{}:{}: field '{}' must be a string", origin, line_no, key));
            }
            return it->get<std::string>();
        };

        Example ex;
        ex.id = *text_field("id", false);
        if (ex.id.empty()) throw DataError(fmt::format("{}:{}: field 'id' is empty", origin, line_no));
        try {
            ex.lp = LanguagePair::parse(*text_field("lp", false));
        } catch (const DataError& e) {
            throw DataError(fmt::format("{}:{}: field 'lp': {}", origin, line_no, e.what()));
        }
        ex.src = *text_field("src", false);
        ex.hyp = *text_field("mt", false);
        ex.ref = text_field("ref", true);
        if (auto it = obj.find("score"); it != obj.end() && !it->is_null()) {
            if (!it->is_number()) {
                throw DataError(fmt::format("{}:{}: field 'score' must be a number", origin, line_no));
            }
            ex.score = it->get<double>();
        }
        dataset.examples.push_back(std::move(ex));
    }
    check_unique_ids(dataset);
    return dataset;
}

std::string to_tsv(const Dataset& dataset) {
    std::string out(kTsvHeader);
    out += '\n';
    for (const auto& ex : dataset.examples) {
        check_representable(ex, "id", ex.id);
        check_representable(ex, "src", ex.src);
        check_representable(ex, "mt", ex.hyp);
        if (ex.ref) check_representable(ex, "ref", *ex.ref);
        out += ex.id;
        out += '\t';
        out += ex.lp.str();
        out += '\t';
        out += ex.src;
        out += '\t';
        out += ex.hyp;
        out += '\t';
        if (ex.ref) out += *ex.ref;
        out += '\t';
        if (ex.score) out += format_double(*ex.score);
        out += '\n';
    }
    return out;
}

std::string to_jsonl(const Dataset& dataset) {
    using nlohmann::ordered_json;
    std::string out;
    for (const auto& ex : dataset.examples) {
        ordered_json obj;
        obj["id"] = ex.id;
        obj["lp"] = ex.lp.str();
        obj["src"] = ex.src;
        obj["mt"] = ex.hyp;
        obj["ref"] = ex.ref ? ordered_json(*ex.ref) : ordered_json(nullptr);
        obj["score"] = ex.score ? ordered_json(*ex.score) : ordered_json(nullptr);
        out += obj.dump();
        out += '\n';
    }
    return out;
}

Dataset load_dataset(const std::string& path, FileFormat format, Provenance provenance) {
    const std::string text = read_file(path);
    return format == FileFormat::tsv ? parse_tsv(text, path, provenance)
                                     : parse_jsonl(text, path, provenance);
}

void save_dataset(const Dataset& dataset, const std::string& path, FileFormat format) {
    write_file(path, format == FileFormat::tsv ? to_tsv(dataset) : to_jsonl(dataset));
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::vector<std::size_t>> partition_shuffled(std::size_t n, std::size_t parts,
                                                         std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(order));

    std::vector<std::vector<std::size_t>> out(parts);
    std::size_t pos = 0;
    for (std::size_t p = 0; p < parts; ++p) {
        const std::size_t size = n / parts + (p < n % parts ? 1 : 0);
        out[p].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                      order.begin() + static_cast<std::ptrdiff_t>(pos + size));
        std::sort(out[p].begin(), out[p].end());
        pos += size;
    }
    return out;
}

}  // namespace

Dataset subset(const Dataset& dataset, const std::vector<std::size_t>& indices) {
    Dataset out;
    out.provenance = dataset.provenance;
    out.examples.reserve(indices.size());
    for (std::size_t i : indices) out.examples.push_back(dataset.examples.at(i));
    return out;
}

std::tuple<Dataset, Dataset, Dataset> split_three_way(const Dataset& dataset, std::uint64_t seed) {
    if (dataset.empty()) throw DataError("cannot split an empty dataset");
    const auto parts = partition_shuffled(dataset.size(), 3, derive_seed(seed, stream::split));
    return {subset(dataset, parts[0]), subset(dataset, parts[1]), subset(dataset, parts[2])};
}

std::vector<std::vector<std::size_t>> make_folds(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (k == 0 || n < k) throw DataError(fmt::format("cannot make {} folds from {} examples", k, n));
    return partition_shuffled(n, k, derive_seed(seed, stream::folds));
}

// ---------------------------------------------------------------------------

TokenId Vocabulary::id(std::string_view token) const {
    return first_content + static_cast<TokenId>(fnv1a(token) % buckets);
}

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        const std::size_t start = i;
        while (i < text.size() && !is_space(text[i])) ++i;
        if (i > start) out.emplace_back(text.substr(start, i - start));
    }
    return out;
}

std::string join_words(const std::vector<std::string>& words) {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) out += ' ';
        out += words[i];
    }
    return out;
}

std::vector<std::string> tokenize(std::string_view text) {
    auto words = split_words(text);
    for (auto& w : words) std::transform(w.begin(), w.end(), w.begin(), ascii_lower);
    return words;
}

std::vector<TokenId> encode_tokens(std::string_view text, const Vocabulary& vocab) {
    std::vector<TokenId> ids;
    for (const auto& tok : tokenize(text)) ids.push_back(vocab.id(tok));
    return ids;
}

std::string_view to_string(InputFormat f) {
    switch (f) {
        case InputFormat::src: return "src";
        case InputFormat::ref: return "ref";
        case InputFormat::src_ref: return "src+ref";
    }
    return "unknown";
}

InputFormat parse_input_format(std::string_view text) {
    const std::string t = lower(text);
    if (t == "src") return InputFormat::src;
    if (t == "ref") return InputFormat::ref;
    if (t == "src+ref" || t == "src_ref" || t == "srcref") return InputFormat::src_ref;
    throw UsageError(fmt::format("unknown input format '{}' (expected src, ref or src+ref)", text));
}

std::size_t Sequence::special_count(InputFormat format) {
    return format == InputFormat::src_ref ? 6 : 4;
}

Sequence build_input(const Example& example, InputFormat format, const Vocabulary& vocab) {
    if (format != InputFormat::src && !example.ref) {
        throw DataError(fmt::format("example '{}': format {} needs a reference", example.id,
                                    to_string(format)));
    }
    const auto hyp = encode_tokens(example.hyp, vocab);
    if (hyp.empty()) throw DataError(fmt::format("example '{}': empty hypothesis", example.id));

    Sequence seq;
    seq.format = format;
    seq.len_h = hyp.size();
    seq.ids.push_back(Vocabulary::cls);
    seq.ids.insert(seq.ids.end(), hyp.begin(), hyp.end());
    seq.ids.push_back(Vocabulary::sep);
    seq.segments.assign(seq.ids.size(), Segment::hyp);
    switch (format) {
        case InputFormat::src: seq.segments[0] = Segment::layout_src; break;
        case InputFormat::ref: seq.segments[0] = Segment::layout_ref; break;
        case InputFormat::src_ref: seq.segments[0] = Segment::layout_src_ref; break;
    }

    auto append_segment = [&seq](const std::vector<TokenId>& part, Segment tag) {
        seq.ids.push_back(Vocabulary::sep);
        seq.ids.insert(seq.ids.end(), part.begin(), part.end());
        seq.ids.push_back(Vocabulary::sep);
        seq.segments.resize(seq.ids.size(), tag);
    };
    if (format == InputFormat::src || format == InputFormat::src_ref) {
        const auto src = encode_tokens(example.src, vocab);
        seq.len_s = src.size();
        append_segment(src, Segment::src);
    }
    if (format == InputFormat::ref || format == InputFormat::src_ref) {
        const auto ref = encode_tokens(*example.ref, vocab);
        seq.len_r = ref.size();
        append_segment(ref, Segment::ref);
    }
    return seq;
}

}  // namespace unite
