#include "unite/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "unite/error.hpp"
#include "unite/eval.hpp"
#include "unite/io.hpp"
#include "unite/log.hpp"
#include "unite/stats.hpp"

namespace unite {

std::string_view to_string(Stage stage) {
    switch (stage) {
        case Stage::pretrain: return "pretrain";
        case Stage::finetune_da: return "finetune_da";
        case Stage::finetune_mqm: return "finetune_mqm";
        case Stage::finetune_dev: return "finetune_dev";
    }
    return "unknown";
}

Stage parse_stage(std::string_view text) {
    for (Stage s : kStageOrder)
        if (text == to_string(s)) return s;
    throw UsageError(fmt::format("unknown stage '{}'", text));
}

Provenance expected_provenance(Stage stage) {
    switch (stage) {
        case Stage::pretrain: return Provenance::synthetic;
        case Stage::finetune_da: return Provenance::da;
        case Stage::finetune_mqm: return Provenance::mqm;
        case Stage::finetune_dev: return Provenance::dev;
    }
    return Provenance::dev;
}

FormatAssignment StageSpec::default_formats(Stage stage) {
    return stage == Stage::pretrain ? FormatAssignment::all() : FormatAssignment::only(InputFormat::src);
}

namespace {

void reset_optimizer(ModelState& state) {
    std::fill(state.adam_m().begin(), state.adam_m().end(), 0.0);
    std::fill(state.adam_v().begin(), state.adam_v().end(), 0.0);
    state.set_step(0);
}

std::vector<double> gold_scores(const Dataset& dataset) {
    std::vector<double> gold;
    gold.reserve(dataset.size());
    for (const auto& ex : dataset.examples) {
        if (!ex.score) throw DataError(fmt::format("example '{}' has no gold score", ex.id));
        gold.push_back(*ex.score);
    }
    return gold;
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Descending, NaN last.
bool better(double a, double b) {
    if (std::isnan(b)) return !std::isnan(a);
    if (std::isnan(a)) return false;
    return a > b;
}

}  // namespace

StageResult run_stage(ModelState& state, const StageSpec& spec, const std::string& checkpoint_path) {
    if (spec.dataset.provenance != expected_provenance(spec.stage)) {
        throw DataError(fmt::format("stage {} expects {} data, got {}", to_string(spec.stage),
                                    to_string(expected_provenance(spec.stage)), to_string(spec.dataset.provenance)));
    }
    TrainHyper hyper;
    hyper.batch_size = spec.batch_size;
    hyper.optimizer.lr_encoder = spec.lr_encoder;
    hyper.optimizer.lr_head = spec.lr_head;
    hyper.seed = spec.seed;
    hyper.formats = spec.formats;

    reset_optimizer(state);
    StageResult result;
    for (std::size_t e = 0; e < spec.epochs; ++e) {
        try {
            result.epochs.push_back(train_epoch(state, spec.dataset, hyper, e));
        } catch (const NumericalError& err) {
            throw NumericalError(fmt::format("stage {} epoch {}: {}", to_string(spec.stage), e + 1, err.what()));
        }
    }

    const std::string previous = state.metadata.stage;
    state.metadata.stage = std::string(to_string(spec.stage));
    state.metadata.data_hash = dataset_fingerprint(spec.dataset);
    state.metadata.seed = spec.seed;
    state.metadata.extra["previous_stage"] = previous;
    state.metadata.extra["epochs"] = std::to_string(spec.epochs);
    state.metadata.extra["batch_size"] = std::to_string(spec.batch_size);
    state.metadata.extra["lr_encoder"] = format_double(spec.lr_encoder);
    state.metadata.extra["lr_head"] = format_double(spec.lr_head);
    state.metadata.extra["formats"] = spec.formats.str();

    if (!checkpoint_path.empty()) {
        save_checkpoint(state, checkpoint_path);
        result.checkpoint_path = checkpoint_path;
    }
    return result;
}

std::vector<RankedCheckpoint> select_top_k(std::span<const std::string> checkpoints, const Dataset& dev,
                                           std::size_t k) {
    if (dev.empty()) throw DataError("checkpoint selection needs a non-empty dev set");
    if (k > checkpoints.size()) {
        throw UsageError(fmt::format("top-{} requested from {} checkpoints", k, checkpoints.size()));
    }
    const auto gold = gold_scores(dev);
    std::vector<RankedCheckpoint> ranked;
    for (const auto& path : checkpoints) {
        const ModelState state = load_checkpoint(path);
        const auto pred = predict(state, dev, InputFormat::src);
        double rho = kNaN;
        try {
            rho = spearman(pred, gold);
        } catch (const NumericalError& e) {
            log_warning(fmt::format("{}: {}; ranked last", path, e.what()));
        }
        ranked.push_back({path, rho});
    }
    std::sort(ranked.begin(), ranked.end(), [](const RankedCheckpoint& a, const RankedCheckpoint& b) {
        if (better(a.spearman, b.spearman)) return true;
        if (better(b.spearman, a.spearman)) return false;
        return a.path < b.path;
    });
    ranked.resize(k);
    return ranked;
}

std::string HyperPoint::str() const {
    return fmt::format("epochs={} batch_size={} lr_encoder={} lr_head={}", epochs, batch_size,
                       format_double(lr_encoder), format_double(lr_head));
}

std::vector<HyperPoint> default_grid(const ModelConfig& config, std::size_t batch_size) {
    std::vector<HyperPoint> grid;
    for (std::size_t epochs : {1, 2, 4}) {
        for (double scale : {0.5, 1.0}) {
            grid.push_back({epochs, batch_size, config.lr_encoder, config.lr_head * scale});
        }
    }
    return grid;
}

namespace {

StageSpec dev_stage(const Dataset& data, const HyperPoint& point, std::uint64_t seed) {
    StageSpec spec;
    spec.stage = Stage::finetune_dev;
    spec.dataset = data;
    spec.dataset.provenance = Provenance::dev;
    spec.formats = FormatAssignment::only(InputFormat::src);
    spec.epochs = point.epochs;
    spec.batch_size = point.batch_size;
    spec.lr_encoder = point.lr_encoder;
    spec.lr_head = point.lr_head;
    spec.seed = seed;
    return spec;
}

}  // namespace

std::vector<CVResult> kfold_cv(const Dataset& dev, std::span<const HyperPoint> grid, const ModelState& base,
                               std::uint64_t seed) {
    if (grid.empty()) throw UsageError("cross-validation needs at least one grid point");
    if (dev.size() < kFolds) {
        throw DataError(fmt::format("cross-validation needs at least {} dev examples, got {}", kFolds, dev.size()));
    }
    const auto folds = make_folds(dev.size(), kFolds, seed);

    std::vector<CVResult> results;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        CVResult r;
        r.point = grid[g];
        r.grid_index = g;
        r.fold_seed = seed;
        double sum = 0.0;
        std::size_t defined = 0;
        for (std::size_t f = 0; f < kFolds; ++f) {
            std::vector<std::size_t> train_idx;
            for (std::size_t o = 0; o < kFolds; ++o)
                if (o != f) train_idx.insert(train_idx.end(), folds[o].begin(), folds[o].end());
            std::sort(train_idx.begin(), train_idx.end());
            const Dataset train = subset(dev, train_idx);
            const Dataset held = subset(dev, folds[f]);

            ModelState state = base;
            run_stage(state, dev_stage(train, grid[g], derive_seed(seed, f)), {});
            double rho = kNaN;
            try {
                rho = spearman(predict(state, held, InputFormat::src), gold_scores(held));
                sum += rho;
                ++defined;
            } catch (const NumericalError& e) {
                log_warning(fmt::format("grid point {} fold {}: {}", g, f, e.what()));
            }
            r.fold_spearman.push_back(rho);
        }
        r.mean = defined ? sum / static_cast<double>(defined) : kNaN;
        results.push_back(std::move(r));
    }
    std::stable_sort(results.begin(), results.end(),
                     [](const CVResult& a, const CVResult& b) { return better(a.mean, b.mean); });
    return results;
}

ModelState final_finetune(const ModelState& base, const Dataset& dev, const HyperPoint& best, std::uint64_t seed,
                          const std::string& checkpoint_path) {
    ModelState state = base;
    state.metadata.extra["hp.epochs"] = std::to_string(best.epochs);
    state.metadata.extra["hp.batch_size"] = std::to_string(best.batch_size);
    state.metadata.extra["hp.lr_encoder"] = format_double(best.lr_encoder);
    state.metadata.extra["hp.lr_head"] = format_double(best.lr_head);
    run_stage(state, dev_stage(dev, best, seed), checkpoint_path);
    return state;
}

std::vector<double> z_mean_combine(std::span<const std::vector<double>> member_predictions) {
    if (member_predictions.empty()) throw UsageError("an ensemble needs at least one member");
    const std::size_t n = member_predictions.front().size();
    // running mean: identical members reproduce the single-member output exactly
    std::vector<double> avg(n, 0.0);
    for (std::size_t k = 0; k < member_predictions.size(); ++k) {
        if (member_predictions[k].size() != n) {
            throw DataError(fmt::format("ensemble member {} has {} predictions, expected {}", k,
                                        member_predictions[k].size(), n));
        }
        const auto z = z_normalize(member_predictions[k]);
        const double w = 1.0 / static_cast<double>(k + 1);
        for (std::size_t i = 0; i < n; ++i) avg[i] += (z[i] - avg[i]) * w;
    }
    return avg;
}

std::vector<double> ensemble_predict(std::span<const ModelState> members, const Dataset& dataset,
                                     InputFormat format) {
    if (members.empty()) throw UsageError("an ensemble needs at least one member");
    std::vector<std::vector<double>> preds;
    preds.reserve(members.size());
    for (const auto& m : members) preds.push_back(predict(m, dataset, format));
    return z_mean_combine(preds);
}

std::vector<double> ensemble_predict(const EnsembleSpec& spec, const Dataset& dataset, InputFormat format) {
    if (spec.rule != "z-mean") throw UsageError(fmt::format("unknown ensemble rule '{}'", spec.rule));
    if (spec.members.empty()) throw UsageError("an ensemble needs at least one member");
    std::vector<ModelState> members;
    members.reserve(spec.members.size());
    for (const auto& path : spec.members) {
        try {
            members.push_back(load_checkpoint(path));
        } catch (const Error& e) {
            throw DataError(fmt::format("ensemble member '{}': {}", path, e.what()));
        }
    }
    return ensemble_predict(members, dataset, format);
}

}  // namespace unite
