#include "unite/cli.hpp"

#include <filesystem>
#include <optional>
#include <unordered_map>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "unite/config.hpp"
#include "unite/corpus.hpp"
#include "unite/datagen.hpp"
#include "unite/error.hpp"
#include "unite/eval.hpp"
#include "unite/hashing.hpp"
#include "unite/http_provider.hpp"
#include "unite/io.hpp"
#include "unite/log.hpp"
#include "unite/model.hpp"
#include "unite/pipeline.hpp"

namespace unite::cli {

namespace {

namespace fs = std::filesystem;

struct CommonOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string in;
    std::string out;
    std::string format;
    std::vector<std::string> overrides;
};

struct Manifest {
    std::string command;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
};

// Config file first, then --set overrides, then dedicated flags.
Config build_config(const CommonOptions& opts) {
    Config cfg = opts.config_path.empty() ? Config{} : Config::load(opts.config_path);
    for (const auto& a : opts.overrides) cfg.set_assignment(a);
    if (opts.seed) cfg.set("seed", std::to_string(*opts.seed));
    return cfg;
}

std::uint64_t require_seed(const Config& cfg) {
    if (!cfg.has("seed")) throw UsageError("this command needs a seed (--seed N or 'seed = N' in the config)");
    return cfg.get_uint("seed", 0);
}

std::optional<std::uint64_t> optional_seed(const Config& cfg) {
    if (!cfg.has("seed")) return std::nullopt;
    return cfg.get_uint("seed", 0);
}

// Flag value wins; otherwise the config key (path resolved against the config file).
std::string pick_path(const std::string& flag, const Config& cfg, const std::string& key) {
    if (!flag.empty()) return flag;
    if (auto v = cfg.get(key)) return cfg.resolve_path(*v);
    return {};
}

std::string need_path(const std::string& flag, const Config& cfg, const std::string& key, const char* what) {
    auto p = pick_path(flag, cfg, key);
    if (p.empty()) throw UsageError(fmt::format("missing {} (flag or config key '{}')", what, key));
    return p;
}

FileFormat format_of(const CommonOptions& opts, const std::string& path) {
    return opts.format.empty() ? file_format_for(path) : parse_file_format(opts.format);
}

Dataset read_dataset(const CommonOptions& opts, const std::string& path, Provenance provenance) {
    return load_dataset(path, format_of(opts, path), provenance);
}

void write_dataset(const CommonOptions& opts, const Dataset& d, const std::string& path) {
    save_dataset(d, path, format_of(opts, path));
}

std::string predictions_tsv(const Dataset& dataset, const std::vector<double>& preds) {
    std::string out = "id\tprediction\n";
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        out += dataset.examples[i].id + '\t' + format_double(preds[i]) + '\n';
    }
    return out;
}

std::vector<double> read_predictions(const std::string& path, const Dataset& dataset) {
    const std::string text = read_file(path);
    const auto lines = split_lines(text);
    if (lines.empty() || lines[0] != "id\tprediction") {
        throw DataError(fmt::format("{}:1: expected header 'id<TAB>prediction'", path));
    }
    std::unordered_map<std::string, double> by_id;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        const auto f = split_fields(lines[i], '\t');
        if (f.size() != 2) throw DataError(fmt::format("{}:{}: expected 2 fields, got {}", path, i + 1, f.size()));
        try {
            if (!by_id.emplace(std::string(f[0]), parse_double(f[1])).second) {
                throw DataError(fmt::format("{}:{}: duplicate id '{}'", path, i + 1, f[0]));
            }
        } catch (const std::invalid_argument& e) {
            throw DataError(fmt::format("{}:{}: field 'prediction': {}", path, i + 1, e.what()));
        }
    }
    std::vector<double> out;
    for (const auto& ex : dataset.examples) {
        auto it = by_id.find(ex.id);
        if (it == by_id.end()) throw DataError(fmt::format("{}: no prediction for example '{}'", path, ex.id));
        out.push_back(it->second);
    }
    return out;
}

std::string manifest_json(const Manifest& m) {
    nlohmann::ordered_json j;
    j["command"] = m.command;
    j["seed"] = m.seed ? nlohmann::ordered_json(*m.seed) : nlohmann::ordered_json(nullptr);
    j["inputs"] = nlohmann::ordered_json::array();
    for (const auto& p : m.inputs) j["inputs"].push_back({{"path", p}, {"fnv1a", file_fingerprint(p)}});
    j["outputs"] = nlohmann::ordered_json::array();
    for (const auto& p : m.outputs) j["outputs"].push_back({{"path", p}, {"fnv1a", file_fingerprint(p)}});
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Commands

struct SynthOptions {
    std::string provider;
    std::string endpoint;
    std::optional<double> word_drop, span_drop, max_span;
    std::optional<std::size_t> min_kept;
};

Manifest cmd_synth(const CommonOptions& opts, const SynthOptions& so) {
    const Config cfg = build_config(opts);
    const auto seed = require_seed(cfg);
    const auto in = need_path(opts.in, cfg, "synth.in", "input (--in)");
    const auto out = need_path(opts.out, cfg, "synth.out", "output (--out)");

    DegradeConfig dc;
    dc.word_drop_prob = so.word_drop.value_or(cfg.get_double("synth.word_drop_prob", dc.word_drop_prob));
    dc.span_drop_prob = so.span_drop.value_or(cfg.get_double("synth.span_drop_prob", dc.span_drop_prob));
    dc.max_span_fraction = so.max_span.value_or(cfg.get_double("synth.max_span_fraction", dc.max_span_fraction));
    dc.min_tokens_kept = so.min_kept.value_or(cfg.get_uint("synth.min_tokens_kept", dc.min_tokens_kept));

    const std::string kind = so.provider.empty() ? cfg.get_string("synth.provider", "offline") : so.provider;
    std::unique_ptr<TranslationProvider> provider;
    if (kind == "offline") {
        provider = std::make_unique<OfflineProvider>();
    } else if (kind == "http") {
        HttpProviderConfig hc;
        hc.endpoint = so.endpoint.empty() ? cfg.get_string("synth.endpoint", hc.endpoint) : so.endpoint;
        hc.timeout_ms = static_cast<int>(cfg.get_uint("synth.timeout_ms", static_cast<std::uint64_t>(hc.timeout_ms)));
        hc.retries = static_cast<int>(cfg.get_uint("synth.retries", static_cast<std::uint64_t>(hc.retries)));
        provider = std::make_unique<HttpProvider>(hc);
    } else {
        throw UsageError(fmt::format("unknown provider '{}' (expected offline or http)", kind));
    }

    const Dataset parallel = read_dataset(opts, in, Provenance::synthetic);
    const Dataset synth = synthesize(parallel, *provider, dc, seed);
    write_dataset(opts, synth, out);
    return {"synth", seed, {in}, {out}};
}

Manifest cmd_label(const CommonOptions& opts, std::vector<std::string> scorer_flags, const std::string& input_format) {
    const Config cfg = build_config(opts);
    const auto in = need_path(opts.in, cfg, "label.in", "input (--in)");
    const auto out = need_path(opts.out, cfg, "label.out", "output (--out)");
    const InputFormat fmt_in = parse_input_format(
        input_format.empty() ? cfg.get_string("label.input_format", "src+ref") : input_format);

    std::vector<std::string> names = scorer_flags;
    if (names.empty()) {
        for (const auto& s : cfg.get_strings("label.scorers", {})) names.push_back(s == "overlap" ? s : cfg.resolve_path(s));
    }
    if (names.empty()) throw UsageError("label needs at least one --scorer (overlap or a checkpoint path)");

    Manifest m{"label", optional_seed(cfg), {in}, {out}};
    std::vector<std::unique_ptr<Scorer>> owned;
    for (const auto& name : names) {
        if (name == "overlap") {
            owned.push_back(std::make_unique<OverlapScorer>());
        } else {
            owned.push_back(std::make_unique<ModelScorer>(load_checkpoint(name), fs::path(name).filename().string()));
            m.inputs.push_back(name);
        }
    }
    std::vector<const Scorer*> scorers;
    for (const auto& s : owned) scorers.push_back(s.get());

    const Dataset data = read_dataset(opts, in, Provenance::synthetic);
    write_file(out, to_tsv(label(data, scorers, fmt_in)));
    return m;
}

Manifest cmd_normalize(const CommonOptions& opts, const std::string& matrix_flag) {
    const Config cfg = build_config(opts);
    const auto in = need_path(opts.in, cfg, "normalize.in", "input (--in)");
    const auto out = need_path(opts.out, cfg, "normalize.out", "output (--out)");
    const auto matrix_path = pick_path(matrix_flag, cfg, "normalize.matrix");

    const Dataset data = read_dataset(opts, in, Provenance::synthetic);
    Manifest m{"normalize", optional_seed(cfg), {in}, {out}};
    Dataset result;
    if (!matrix_path.empty()) {
        result = apply_labels(data, parse_score_matrix(read_file(matrix_path), matrix_path));
        m.inputs.push_back(matrix_path);
    } else {
        result = renormalize(data);
    }
    write_dataset(opts, result, out);
    return m;
}

Manifest cmd_prune(const CommonOptions& opts, const std::vector<double>& ratio_flags, bool no_renormalize) {
    const Config cfg = build_config(opts);
    const auto seed = require_seed(cfg);
    const auto in = need_path(opts.in, cfg, "prune.in", "input (--in)");
    const auto out = need_path(opts.out, cfg, "prune.out", "output (--out)");
    const auto list = ratio_flags.empty()
                          ? cfg.get_doubles("prune.ratios", {kDefaultDropRatios.begin(), kDefaultDropRatios.end()})
                          : ratio_flags;
    if (list.size() != 5) throw UsageError(fmt::format("expected 5 drop ratios, got {}", list.size()));
    DropRatios ratios{};
    std::copy(list.begin(), list.end(), ratios.begin());

    const Dataset data = read_dataset(opts, in, Provenance::synthetic);
    PruneReport report;
    Dataset pruned = bin_prune(data, ratios, seed, &report);
    for (const auto& pair : report.pairs) {
        std::string line = pair.lp.str() + " kept";
        for (const auto& b : pair.bins) line += fmt::format(" {}/{}", b.kept, b.size);
        log_info(line);
    }
    if (!no_renormalize && cfg.get_bool("prune.renormalize", true)) pruned = renormalize(pruned);
    write_dataset(opts, pruned, out);
    return {"prune", seed, {in}, {out}};
}

Manifest cmd_split(const CommonOptions& opts) {
    const Config cfg = build_config(opts);
    const auto seed = require_seed(cfg);
    const auto in = need_path(opts.in, cfg, "split.in", "input (--in)");
    const auto prefix = need_path(opts.out, cfg, "split.out", "output prefix (--out)");
    const Dataset data = read_dataset(opts, in, Provenance::synthetic);
    const auto [a, b, c] = split_three_way(data, seed);
    const FileFormat ff = opts.format.empty() ? FileFormat::tsv : parse_file_format(opts.format);
    const std::string ext = ff == FileFormat::tsv ? ".tsv" : ".jsonl";
    Manifest m{"split", seed, {in}, {}};
    const std::pair<const Dataset*, const char*> parts[] = {{&a, ".ref"}, {&b, ".src"}, {&c, ".src_ref"}};
    for (const auto& [d, suffix] : parts) {
        const std::string path = prefix + suffix + ext;
        save_dataset(*d, path, ff);
        m.outputs.push_back(path);
    }
    return m;
}

ModelConfig model_config(const Config& cfg) {
    const std::string preset = cfg.get_string("model.preset", "desk");
    ModelConfig mc;
    if (preset == "desk") mc = ModelConfig::desk();
    else if (preset == "desk_alt") mc = ModelConfig::desk_alt();
    else if (preset == "large_xlmr") mc = ModelConfig::large_xlmr();
    else if (preset == "large_infoxlm") mc = ModelConfig::large_infoxlm();
    else throw UsageError(fmt::format("unknown model preset '{}'", preset));

    mc.dim = cfg.get_uint("model.dim", mc.dim);
    mc.buckets = static_cast<std::uint32_t>(cfg.get_uint("model.buckets", mc.buckets));
    if (cfg.has("model.head_dims")) {
        mc.head_dims.clear();
        for (auto w : cfg.get_uints("model.head_dims", {})) mc.head_dims.push_back(w);
    }
    mc.lr_encoder = cfg.get_double("model.lr_encoder", mc.lr_encoder);
    mc.lr_head = cfg.get_double("model.lr_head", mc.lr_head);
    mc.encoder_kind = cfg.get_string("model.encoder", mc.encoder_kind);
    mc.validate();
    return mc;
}

// Cartesian product of the cv.* lists; without any of them, the default grid.
std::vector<HyperPoint> cv_grid(const Config& cfg, const ModelConfig& base) {
    if (!cfg.has("cv.epochs") && !cfg.has("cv.batch_size") && !cfg.has("cv.lr_encoder") && !cfg.has("cv.lr_head")) {
        return default_grid(base);
    }
    std::vector<HyperPoint> grid;
    for (auto ep : cfg.get_uints("cv.epochs", {1}))
        for (auto bs : cfg.get_uints("cv.batch_size", {32}))
            for (auto le : cfg.get_doubles("cv.lr_encoder", {base.lr_encoder}))
                for (auto lh : cfg.get_doubles("cv.lr_head", {base.lr_head})) grid.push_back({ep, bs, le, lh});
    return grid;
}

Manifest cmd_train(const CommonOptions& opts, const std::string& init_flag) {
    const Config cfg = build_config(opts);
    const auto seed = require_seed(cfg);
    const auto out_dir = need_path(opts.out, cfg, "train.out", "output directory (--out)");
    fs::create_directories(out_dir);
    const ModelConfig base_cfg = model_config(cfg);
    const auto init_path = pick_path(init_flag, cfg, "train.init");
    const auto seeds = cfg.get_uints("model.seeds", {seed});

    Manifest m{"train", seed, {}, {}};
    if (!init_path.empty()) m.inputs.push_back(init_path);

    // Load every stage's data once.
    struct PlannedStage {
        Stage stage;
        std::size_t index;
        StageSpec spec;
    };
    std::vector<PlannedStage> plan;
    for (std::size_t i = 0; i < std::size(kStageOrder); ++i) {
        const Stage st = kStageOrder[i];
        const std::string sec = "stage." + std::string(to_string(st));
        if (!cfg.has_section(sec)) continue;
        StageSpec spec;
        spec.stage = st;
        const auto data_path = need_path("", cfg, sec + ".data", "stage data");
        const Provenance prov = cfg.has(sec + ".provenance") ? parse_provenance(*cfg.get(sec + ".provenance"))
                                                             : expected_provenance(st);
        spec.dataset = read_dataset(opts, data_path, prov);
        m.inputs.push_back(data_path);
        spec.formats = cfg.has(sec + ".formats") ? FormatAssignment::parse(*cfg.get(sec + ".formats"))
                                                 : StageSpec::default_formats(st);
        spec.epochs = cfg.get_uint(sec + ".epochs", 1);
        spec.batch_size = cfg.get_uint(sec + ".batch_size", 32);
        spec.lr_encoder = cfg.get_double(sec + ".lr_encoder", base_cfg.lr_encoder);
        spec.lr_head = cfg.get_double(sec + ".lr_head", base_cfg.lr_head);
        plan.push_back({st, i, std::move(spec)});
    }

    std::vector<std::string> finals;
    for (const auto s : seeds) {
        const fs::path run_dir = fs::path(out_dir) / fmt::format("seed-{}", s);
        fs::create_directories(run_dir);
        ModelState state = [&] {
            if (!init_path.empty()) return load_checkpoint(init_path);
            ModelConfig mc = base_cfg;
            mc.seed = s;
            return ModelState::initialize(mc);
        }();
        std::string last = (run_dir / "init.ckpt").string();
        if (plan.empty()) save_checkpoint(state, last);
        for (auto& p : plan) {
            p.spec.seed = derive_seed(s, p.index);
            const std::string path = (run_dir / (std::string(to_string(p.stage)) + ".ckpt")).string();
            const auto result = run_stage(state, p.spec, path);
            if (!result.epochs.empty()) {
                const auto& e = result.epochs.back();
                log_info(fmt::format("seed {} {}: {} steps, last epoch mean step loss {}", s, to_string(p.stage),
                                     e.steps, e.steps ? e.loss_sum / static_cast<double>(e.steps) : 0.0));
            }
            last = path;
            m.outputs.push_back(path);
        }
        if (plan.empty()) m.outputs.push_back(last);
        finals.push_back(last);
    }

    std::string chosen = finals.front();
    if (cfg.has_section("select")) {
        const auto dev_path = need_path("", cfg, "select.dev", "selection dev set");
        const Dataset dev = read_dataset(opts, dev_path, Provenance::dev);
        m.inputs.push_back(dev_path);
        const std::size_t k = std::min<std::size_t>(cfg.get_uint("select.top_k", 3), finals.size());
        const auto ranked = select_top_k(finals, dev, k);
        std::string tsv = "rank\tpath\tspearman\n";
        for (std::size_t i = 0; i < ranked.size(); ++i) {
            tsv += fmt::format("{}\t{}\t{}\n", i + 1, ranked[i].path, format_double(ranked[i].spearman));
        }
        const std::string path = (fs::path(out_dir) / "selection.tsv").string();
        write_file(path, tsv);
        m.outputs.push_back(path);
        chosen = ranked.front().path;
    }

    if (cfg.has_section("cv")) {
        const auto dev_path = need_path("", cfg, "cv.dev", "cross-validation dev set");
        const Dataset dev = read_dataset(opts, dev_path, Provenance::dev);
        m.inputs.push_back(dev_path);
        const auto grid = cv_grid(cfg, base_cfg);
        const ModelState base = load_checkpoint(chosen);
        const std::uint64_t cv_seed = derive_seed(seed, stream::folds);
        const auto results = kfold_cv(dev, grid, base, cv_seed);

        std::string tsv = "rank\tepochs\tbatch_size\tlr_encoder\tlr_head\tmean";
        for (std::size_t f = 0; f < kFolds; ++f) tsv += fmt::format("\tfold{}", f + 1);
        tsv += '\n';
        for (std::size_t i = 0; i < results.size(); ++i) {
            const auto& r = results[i];
            tsv += fmt::format("{}\t{}\t{}\t{}\t{}\t{}", i + 1, r.point.epochs, r.point.batch_size,
                               format_double(r.point.lr_encoder), format_double(r.point.lr_head),
                               format_double(r.mean));
            for (double v : r.fold_spearman) tsv += '\t' + format_double(v);
            tsv += '\n';
        }
        const std::string cv_path = (fs::path(out_dir) / "cv.tsv").string();
        write_file(cv_path, tsv);
        m.outputs.push_back(cv_path);

        const std::string final_path = (fs::path(out_dir) / "final.ckpt").string();
        final_finetune(base, dev, results.front().point, cv_seed, final_path);
        m.outputs.push_back(final_path);
    }
    return m;
}

Manifest cmd_predict(const CommonOptions& opts, const std::string& ckpt_flag, const std::string& input_format) {
    const Config cfg = build_config(opts);
    const auto in = need_path(opts.in, cfg, "predict.in", "input (--in)");
    const auto out = need_path(opts.out, cfg, "predict.out", "output (--out)");
    const auto ckpt = need_path(ckpt_flag, cfg, "predict.checkpoint", "checkpoint (--checkpoint)");
    const InputFormat f = parse_input_format(input_format.empty() ? cfg.get_string("predict.input_format", "src")
                                                                  : input_format);
    const Dataset data = read_dataset(opts, in, Provenance::test);
    const ModelState state = load_checkpoint(ckpt);
    write_file(out, predictions_tsv(data, predict(state, data, f)));
    return {"predict", optional_seed(cfg), {in, ckpt}, {out}};
}

Manifest cmd_ensemble(const CommonOptions& opts, std::vector<std::string> members, const std::string& input_format) {
    const Config cfg = build_config(opts);
    const auto in = need_path(opts.in, cfg, "ensemble.in", "input (--in)");
    const auto out = need_path(opts.out, cfg, "ensemble.out", "output (--out)");
    if (members.empty()) {
        for (const auto& p : cfg.get_strings("ensemble.members", {})) members.push_back(cfg.resolve_path(p));
    }
    EnsembleSpec spec{members, cfg.get_string("ensemble.rule", "z-mean")};
    const InputFormat f = parse_input_format(input_format.empty() ? cfg.get_string("ensemble.input_format", "src")
                                                                  : input_format);
    const Dataset data = read_dataset(opts, in, Provenance::test);
    write_file(out, predictions_tsv(data, ensemble_predict(spec, data, f)));
    Manifest m{"ensemble", optional_seed(cfg), {in}, {out}};
    for (const auto& p : members) m.inputs.push_back(p);
    return m;
}

Manifest cmd_evaluate(const CommonOptions& opts, const std::string& pred_flag, const std::string& mode_flag,
                      const std::vector<std::string>& checkpoints, std::optional<std::size_t> top_k,
                      std::ostream& stdout_stream) {
    const Config cfg = build_config(opts);
    const auto in = need_path(opts.in, cfg, "evaluate.in", "gold dataset (--in)");
    const auto out = need_path(opts.out, cfg, "evaluate.out", "output (--out)");
    const Dataset gold = read_dataset(opts, in, Provenance::dev);
    Manifest m{"evaluate", optional_seed(cfg), {in}, {out}};

    if (!checkpoints.empty()) {
        const auto ranked = select_top_k(checkpoints, gold, top_k.value_or(std::min<std::size_t>(3, checkpoints.size())));
        std::string tsv = "rank\tpath\tspearman\n";
        for (std::size_t i = 0; i < ranked.size(); ++i) {
            tsv += fmt::format("{}\t{}\t{}\n", i + 1, ranked[i].path, format_double(ranked[i].spearman));
        }
        write_file(out, tsv);
        stdout_stream << tsv;
        for (const auto& c : checkpoints) m.inputs.push_back(c);
        return m;
    }

    const auto pred_path = need_path(pred_flag, cfg, "evaluate.pred", "predictions (--pred)");
    m.inputs.push_back(pred_path);
    const EvalMode mode = parse_eval_mode(mode_flag.empty() ? cfg.get_string("evaluate.mode", "pooled") : mode_flag);
    CorrelationReport report = evaluate(gold, read_predictions(pred_path, gold), mode);
    report.dataset_id = fs::path(in).filename().string();
    report.model_id = fs::path(pred_path).filename().string();
    write_file(out, file_format_for(out) == FileFormat::jsonl ? to_json(report) : to_tsv(report));
    stdout_stream << to_table(report);
    return m;
}

Manifest cmd_report(const CommonOptions& opts, const std::vector<double>& thresholds_flag, std::size_t bins,
                    std::optional<double> lo, std::optional<double> hi) {
    const Config cfg = build_config(opts);
    const auto in = need_path(opts.in, cfg, "report.in", "input (--in)");
    const auto out = need_path(opts.out, cfg, "report.out", "output (--out)");
    const Dataset data = read_dataset(opts, in, Provenance::dev);
    std::vector<double> scores;
    for (const auto& ex : data.examples) {
        if (!ex.score) throw DataError(fmt::format("example '{}' has no score", ex.id));
        scores.push_back(*ex.score);
    }
    if (scores.empty()) throw DataError("cdf report needs at least one score");
    std::vector<double> thresholds = thresholds_flag.empty() ? cfg.get_doubles("report.thresholds", {}) : thresholds_flag;
    if (thresholds.empty()) {
        const auto [mn, mx] = std::minmax_element(scores.begin(), scores.end());
        const double a = lo.value_or(cfg.get_double("report.lo", *mn));
        const double b = hi.value_or(cfg.get_double("report.hi", *mx));
        thresholds = even_thresholds(a, b > a ? b : a + 1.0, bins);
    }
    write_file(out, to_tsv(cdf_report(scores, thresholds)));
    return {"report", optional_seed(cfg), {in}, {out}};
}

void add_common(CLI::App* sub, CommonOptions& opts) {
    sub->add_option("--config", opts.config_path, "Config file (key = value with [sections])");
    sub->add_option("--seed", opts.seed, "Global seed");
    sub->add_option("--in", opts.in, "Input path");
    sub->add_option("--out", opts.out, "Output path");
    sub->add_option("--format", opts.format, "Dataset file format")->check(CLI::IsMember({"tsv", "jsonl"}));
    sub->add_option("--set", opts.overrides, "Override a config key: section.key=value");
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const UsageError*>(&e)) return kUsage;
    if (dynamic_cast<const NumericalError*>(&e)) return kNumerical;
    return kData;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Unified translation quality estimation toolkit", "unite"};
    app.require_subcommand(1);
    CommonOptions opts;

    SynthOptions synth_opts;
    auto* synth = app.add_subcommand("synth", "Pseudo-translate parallel data and degrade the hypotheses");
    add_common(synth, opts);
    synth->add_option("--provider", synth_opts.provider, "offline | http");
    synth->add_option("--endpoint", synth_opts.endpoint, "Translation endpoint for the http provider");
    synth->add_option("--word-drop", synth_opts.word_drop, "Per-token drop probability");
    synth->add_option("--span-drop", synth_opts.span_drop, "Probability of dropping one span");
    synth->add_option("--max-span", synth_opts.max_span, "Longest span as a fraction of the length");
    synth->add_option("--min-kept", synth_opts.min_kept, "Minimum tokens kept");

    std::vector<std::string> scorers;
    std::string input_format;
    auto* label_cmd = app.add_subcommand("label", "Score a dataset with one or more scorers");
    add_common(label_cmd, opts);
    label_cmd->add_option("--scorer", scorers, "'overlap' or a checkpoint path; repeatable");
    label_cmd->add_option("--input-format", input_format, "src | ref | src+ref");

    std::string matrix;
    auto* normalize_cmd = app.add_subcommand("normalize", "Rank-normalize scores (from a score matrix or in place)");
    add_common(normalize_cmd, opts);
    normalize_cmd->add_option("--matrix", matrix, "Score matrix written by 'label'");

    std::vector<double> ratios;
    bool no_renormalize = false;
    auto* prune = app.add_subcommand("prune", "Quality-bin pruning per language pair");
    add_common(prune, opts);
    prune->add_option("--ratios", ratios, "Five drop ratios, lowest bin first")->delimiter(',');
    prune->add_flag("--no-renormalize", no_renormalize, "Keep the scores as they are after pruning");

    auto* split = app.add_subcommand("split", "Split a dataset into three equal parts");
    add_common(split, opts);

    std::string init;
    auto* train = app.add_subcommand("train", "Run the configured training stages");
    add_common(train, opts);
    train->add_option("--init", init, "Start from this checkpoint");

    std::string checkpoint;
    auto* predict_cmd = app.add_subcommand("predict", "Predict scores with one checkpoint");
    add_common(predict_cmd, opts);
    predict_cmd->add_option("--checkpoint", checkpoint, "Checkpoint path");
    predict_cmd->add_option("--input-format", input_format, "src | ref | src+ref");

    std::vector<std::string> members;
    auto* ensemble = app.add_subcommand("ensemble", "Average z-normalized predictions of several checkpoints");
    add_common(ensemble, opts);
    ensemble->add_option("--member", members, "Checkpoint path; repeatable");
    ensemble->add_option("--input-format", input_format, "src | ref | src+ref");

    std::string pred, mode;
    std::vector<std::string> eval_ckpts;
    std::optional<std::size_t> top_k;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Correlate predictions with gold scores, or rank checkpoints");
    add_common(evaluate_cmd, opts);
    evaluate_cmd->add_option("--pred", pred, "Predictions TSV (id, prediction)");
    evaluate_cmd->add_option("--mode", mode, "per_lp | pooled");
    evaluate_cmd->add_option("--checkpoint", eval_ckpts, "Rank these checkpoints by dev Spearman; repeatable");
    evaluate_cmd->add_option("--top-k", top_k, "Number of checkpoints to keep");

    std::vector<double> thresholds;
    std::size_t bins = 20;
    std::optional<double> lo, hi;
    auto* report = app.add_subcommand("report", "Cumulative score distribution");
    add_common(report, opts);
    report->add_option("--thresholds", thresholds, "Ascending thresholds")->delimiter(',');
    report->add_option("--bins", bins, "Evenly spaced thresholds when none are given");
    report->add_option("--lo", lo, "Lower end of the threshold range");
    report->add_option("--hi", hi, "Upper end of the threshold range");

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kUsage;
    }

    try {
        Manifest m;
        if (synth->parsed()) m = cmd_synth(opts, synth_opts);
        else if (label_cmd->parsed()) m = cmd_label(opts, scorers, input_format);
        else if (normalize_cmd->parsed()) m = cmd_normalize(opts, matrix);
        else if (prune->parsed()) m = cmd_prune(opts, ratios, no_renormalize);
        else if (split->parsed()) m = cmd_split(opts);
        else if (train->parsed()) m = cmd_train(opts, init);
        else if (predict_cmd->parsed()) m = cmd_predict(opts, checkpoint, input_format);
        else if (ensemble->parsed()) m = cmd_ensemble(opts, members, input_format);
        else if (evaluate_cmd->parsed()) m = cmd_evaluate(opts, pred, mode, eval_ckpts, top_k, out);
        else if (report->parsed()) m = cmd_report(opts, thresholds, bins, lo, hi);

        const std::string manifest = manifest_json(m);
        const fs::path anchor = m.command == "train" ? fs::path(m.outputs.empty() ? "." : opts.out) / "manifest.json"
                                : m.command == "split" ? fs::path(m.outputs.front()).parent_path() /
                                                             (fs::path(opts.out).filename().string() + ".manifest.json")
                                                       : fs::path(m.outputs.front() + ".manifest.json");
        write_file(anchor.string(), manifest);
        out << manifest;
        return kOk;
    } catch (const std::exception& e) {
        const int code = exit_code_for(e);
        err << "error: " << e.what() << '\n';
        if (code == kUsage) err << "run 'unite " << (args.size() > 1 ? args[1] : std::string()) << " --help' for usage\n";
        return code;
    }
}

}  // namespace unite::cli
