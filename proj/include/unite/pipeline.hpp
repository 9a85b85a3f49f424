#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "unite/corpus.hpp"
#include "unite/model.hpp"

namespace unite {

enum class Stage { pretrain, finetune_da, finetune_mqm, finetune_dev };

inline constexpr Stage kStageOrder[] = {Stage::pretrain, Stage::finetune_da, Stage::finetune_mqm,
                                        Stage::finetune_dev};

std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view text);
// synthetic -> pretrain, da -> finetune_da, mqm -> finetune_mqm, dev -> finetune_dev
Provenance expected_provenance(Stage stage);

// Batch sizes of the large-model recipe: 1024 per format while pretraining,
// 32 for every fine-tuning stage.
inline constexpr std::size_t kPretrainBatchLarge = 1024;
inline constexpr std::size_t kFinetuneBatchLarge = 32;

struct StageSpec {
    Stage stage = Stage::pretrain;
    Dataset dataset;
    FormatAssignment formats = FormatAssignment::all();
    std::size_t epochs = 1;
    std::size_t batch_size = 32;
    double lr_encoder = 1e-3;
    double lr_head = 3e-3;
    std::uint64_t seed = 0;

    // Synthetic pretraining uses every format; fine-tuning is source-only.
    static FormatAssignment default_formats(Stage stage);
};

struct StageResult {
    std::string checkpoint_path;
    std::vector<EpochStats> epochs;
};

// Trains `state` in place. Adam moments restart at the beginning of each
// stage. Saves a checkpoint when `checkpoint_path` is non-empty.
StageResult run_stage(ModelState& state, const StageSpec& spec, const std::string& checkpoint_path);

struct RankedCheckpoint {
    std::string path;
    double spearman = 0.0;  // NaN when undefined (constant predictions)
};

// Source-only dev Spearman, descending; ties broken by path.
std::vector<RankedCheckpoint> select_top_k(std::span<const std::string> checkpoints, const Dataset& dev,
                                           std::size_t k = 3);

struct HyperPoint {
    std::size_t epochs = 1;
    std::size_t batch_size = 32;
    double lr_encoder = 1e-3;
    double lr_head = 3e-3;

    std::string str() const;
    bool operator==(const HyperPoint&) const = default;
};

inline constexpr std::size_t kFolds = 5;

// Small epochs x head-learning-rate grid around the config's own rates.
std::vector<HyperPoint> default_grid(const ModelConfig& config, std::size_t batch_size = 32);

struct CVResult {
    HyperPoint point;
    std::size_t grid_index = 0;
    std::vector<double> fold_spearman;  // one per fold, NaN if undefined
    double mean = 0.0;                  // over the defined folds
    std::uint64_t fold_seed = 0;
};

// Five seeded folds shared by every grid point; for each point, fine-tune a
// copy of `base` source-only on four folds and score Spearman on the fifth.
// Sorted by mean descending, ties by grid order.
std::vector<CVResult> kfold_cv(const Dataset& dev, std::span<const HyperPoint> grid, const ModelState& base,
                               std::uint64_t seed);

// One source-only run over all of `dev` with the chosen hyperparameters.
ModelState final_finetune(const ModelState& base, const Dataset& dev, const HyperPoint& best,
                          std::uint64_t seed, const std::string& checkpoint_path = {});

struct EnsembleSpec {
    std::vector<std::string> members;
    std::string rule = "z-mean";
};

// z-normalizes each prediction vector, then averages element-wise. All
// vectors must have the same length.
std::vector<double> z_mean_combine(std::span<const std::vector<double>> member_predictions);

// Each member's predictions are z-normalized over the dataset, then averaged.
std::vector<double> ensemble_predict(const EnsembleSpec& spec, const Dataset& dataset,
                                     InputFormat format = InputFormat::src);
std::vector<double> ensemble_predict(std::span<const ModelState> members, const Dataset& dataset,
                                     InputFormat format = InputFormat::src);

}  // namespace unite
