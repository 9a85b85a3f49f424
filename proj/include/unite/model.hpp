#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "unite/corpus.hpp"
#include "unite/datagen.hpp"

namespace unite {

struct ModelConfig {
    std::size_t dim = 64;
    std::uint32_t buckets = 8192;
    // Output width of each feedforward layer; tanh between layers, none after the last.
    std::vector<std::size_t> head_dims = {128, 64, 1};
    double lr_encoder = 1e-3;
    double lr_head = 3e-3;
    std::uint64_t seed = 0;
    std::string encoder_kind = "mean-context";

    void validate() const;
    Vocabulary vocabulary() const { return Vocabulary{buckets}; }

    bool operator==(const ModelConfig&) const = default;

    // Desk-scale defaults used by the tests and the toy experiments.
    static ModelConfig desk();
    // Second "backbone" for ensembling: different encoder, width and seed,
    // learning rates halved.
    static ModelConfig desk_alt();
    // Large-model values from the reference system (XLM-R large sized encoder).
    static ModelConfig large_xlmr();
    // Same with the learning rates halved.
    static ModelConfig large_infoxlm();
};

enum class ParamGroup { encoder, head };

struct ParamSection {
    std::string name;
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    ParamGroup group = ParamGroup::encoder;

    std::size_t count() const { return rows * cols; }

    bool operator==(const ParamSection&) const = default;
};

// Stage, data and hyperparameter provenance carried inside a checkpoint.
struct TrainingMetadata {
    std::string stage = "init";
    std::string data_hash;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> extra;

    bool operator==(const TrainingMetadata&) const = default;
};

class ModelState {
public:
    // Every weight matrix uniform in +-1/sqrt(dim), biases zero, drawn from config.seed.
    static ModelState initialize(const ModelConfig& config);
    // Same layout, every parameter zero.
    static ModelState zeros(const ModelConfig& config);

    const ModelConfig& config() const { return config_; }
    const std::vector<ParamSection>& sections() const { return sections_; }
    const ParamSection& section(std::string_view name) const;

    std::span<double> params(std::string_view name);
    std::span<const double> params(std::string_view name) const;

    std::vector<double>& flat() { return params_; }
    const std::vector<double>& flat() const { return params_; }
    std::vector<double>& adam_m() { return m_; }
    const std::vector<double>& adam_m() const { return m_; }
    std::vector<double>& adam_v() { return v_; }
    const std::vector<double>& adam_v() const { return v_; }
    std::uint64_t step() const { return step_; }
    void set_step(std::uint64_t step) { step_ = step; }

    TrainingMetadata metadata;

    bool operator==(const ModelState&) const = default;

private:
    explicit ModelState(const ModelConfig& config);

    ModelConfig config_;
    std::vector<ParamSection> sections_;
    std::vector<double> params_;
    std::vector<double> m_;
    std::vector<double> v_;
    std::uint64_t step_ = 0;
};

// ---------------------------------------------------------------------------
// Encoders. H = Encode(sequence) is a (length x dim) matrix; training only
// needs the CLS row and its backward pass.

struct EncoderCache {
    std::vector<double> context;  // encoder-specific pre-activation inputs
    std::vector<double> cls;      // CLS row of H
};

class Encoder {
public:
    virtual ~Encoder() = default;
    virtual std::string_view kind() const = 0;
    // Sections beyond the shared "embedding" table.
    virtual std::vector<ParamSection> sections(std::size_t dim) const = 0;
    // Full H, row-major.
    virtual std::vector<double> encode(const ModelState& state, const Sequence& seq) const = 0;
    virtual void encode_cls(const ModelState& state, const Sequence& seq, EncoderCache& cache) const = 0;
    // Adds dLoss/dparams to `grad` (flat layout) given dLoss/dCLS.
    virtual void backward_cls(const ModelState& state, const Sequence& seq, const EncoderCache& cache,
                              std::span<const double> d_cls, std::span<double> grad) const = 0;
};

// "mean-context": H_t = tanh(A (e_t + e_mean) + b)
// "dual-context": H_t = tanh(A e_t + C e_mean + b)
// e_t is the input embedding of position t: its token row plus the row of
// its segment (see Segment). A bag of token rows alone cannot tell the
// hypothesis from the reference, which share a vocabulary, nor one layout
// from another; the segment rows stand in for the positional information a
// transformer has. e_mean is the mean input embedding over every position,
// CLS and SEP included.
const Encoder& encoder_for(std::string_view kind);

// ---------------------------------------------------------------------------
// Forward, loss and training

std::vector<double> encode(const ModelState& state, const Sequence& seq);
double forward(const ModelState& state, const Sequence& seq);

// Squared error.
inline double loss(double prediction, double target) {
    const double diff = prediction - target;
    return diff * diff;
}

struct TrainItem {
    Sequence seq;
    double target = 0.0;
};

// Throws DataError naming the example when it has no score or cannot be encoded.
std::vector<TrainItem> make_train_items(const Dataset& dataset, InputFormat format,
                                        const Vocabulary& vocab);

// Batch-mean loss of `batch`; when `grad` is non-empty, adds the gradient of
// that mean to it.
double batch_loss(const ModelState& state, std::span<const TrainItem> batch,
                  std::span<double> grad = {});

struct OptimizerSettings {
    double lr_encoder = 1e-3;
    double lr_head = 3e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Empty spans are formats that take no part in the step.
struct FormatBatches {
    std::span<const TrainItem> ref;
    std::span<const TrainItem> src;
    std::span<const TrainItem> src_ref;
};

struct StepLosses {
    double total = 0.0;
    double ref = 0.0;
    double src = 0.0;
    double src_ref = 0.0;
};

// Gradient of total = ref + src + src_ref, accumulated over the three
// substeps, then one Adam update. All non-empty batches must have equal size.
// On a non-finite loss or gradient nothing is updated and NumericalError is thrown.
StepLosses train_step(ModelState& state, const FormatBatches& batches,
                      const OptimizerSettings& optimizer);

// Full analytic gradient of the summed step loss, flat layout. Exposed for
// gradient checking.
std::vector<double> step_gradient(const ModelState& state, const FormatBatches& batches,
                                  StepLosses* losses = nullptr);

struct FormatAssignment {
    bool unified = true;
    InputFormat single = InputFormat::src;

    static FormatAssignment all() { return {true, InputFormat::src}; }
    static FormatAssignment only(InputFormat f) { return {false, f}; }
    std::string str() const;
    static FormatAssignment parse(std::string_view text);
};

struct TrainHyper {
    std::size_t batch_size = 32;
    OptimizerSettings optimizer;
    std::uint64_t seed = 0;
    FormatAssignment formats = FormatAssignment::all();
};

struct EpochStats {
    std::size_t steps = 0;
    std::size_t sequences_ref = 0;
    std::size_t sequences_src = 0;
    std::size_t sequences_src_ref = 0;
    double loss_sum = 0.0;
};

// Unified mode splits the data three ways once per `hyper.seed` (one part per
// format) and steps through equal-size batches from each part; single-format
// mode uses every example in that format only. Batch order is shuffled from
// (hyper.seed, epoch).
EpochStats train_epoch(ModelState& state, const Dataset& dataset, const TrainHyper& hyper,
                       std::uint64_t epoch = 0);

std::vector<double> predict(const ModelState& state, const Dataset& dataset,
                            InputFormat format = InputFormat::src);

// Scores examples with a trained model; used for pseudo-labeling.
class ModelScorer final : public Scorer {
public:
    ModelScorer(ModelState state, std::string name)
        : state_(std::move(state)), name_(std::move(name)) {}
    double score(const Example& example, InputFormat format) const override;
    std::string name() const override { return name_; }

private:
    ModelState state_;
    std::string name_;
};

// ---------------------------------------------------------------------------
// Checkpoints; layout in docs/checkpoint-format.md.

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ModelState& state, const std::string& path);
ModelState load_checkpoint(const std::string& path);

std::string serialize_checkpoint(const ModelState& state);
ModelState deserialize_checkpoint(std::string_view bytes, const std::string& origin);

}  // namespace unite
