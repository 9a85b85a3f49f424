#include "unite/model.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "unite/error.hpp"
#include "unite/rng.hpp"

namespace unite {

// ---------------------------------------------------------------------------
// Config

void ModelConfig::validate() const {
    if (dim < 1) throw UsageError("model dim must be at least 1");
    if (buckets < 1) throw UsageError("vocabulary buckets must be at least 1");
    if (head_dims.empty() || head_dims.back() != 1) {
        throw UsageError("the last head layer must have output width 1");
    }
    if (std::any_of(head_dims.begin(), head_dims.end(), [](std::size_t w) { return w == 0; })) {
        throw UsageError("head layer widths must be positive");
    }
    if (!(lr_encoder > 0.0) || !(lr_head > 0.0)) throw UsageError("learning rates must be positive");
    encoder_for(encoder_kind);
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::desk_alt() {
    ModelConfig c;
    c.dim = 48;
    c.encoder_kind = "dual-context";
    c.lr_encoder = 0.5e-3;
    c.lr_head = 1.5e-3;
    c.seed = 1;
    return c;
}

ModelConfig ModelConfig::large_xlmr() {
    ModelConfig c;
    c.dim = 1024;
    c.buckets = 65536;
    c.head_dims = {3072, 1024, 1};
    c.lr_encoder = 1.0e-5;
    c.lr_head = 3.0e-5;
    return c;
}

ModelConfig ModelConfig::large_infoxlm() {
    ModelConfig c = large_xlmr();
    c.encoder_kind = "dual-context";
    c.lr_encoder /= 2;
    c.lr_head /= 2;
    return c;
}

// ---------------------------------------------------------------------------
// Encoders

namespace {

bool is_bias(const ParamSection& s) {
    return s.name.size() >= 5 && s.name.compare(s.name.size() - 5, 5, ".bias") == 0;
}

void check_ids(const ModelState& state, const Sequence& seq) {
    if (seq.segments.size() != seq.ids.size()) {
        throw DataError(fmt::format("sequence has {} ids but {} segment tags", seq.ids.size(), seq.segments.size()));
    }
    const std::size_t rows = state.section("embedding").rows;
    for (TokenId id : seq.ids) {
        if (id >= rows) throw DataError(fmt::format("token id {} out of range (vocabulary size {})", id, rows));
    }
}

// y = W x (+ y), W is rows x cols row-major
void matvec_add(std::span<const double> w, std::size_t rows, std::size_t cols,
                std::span<const double> x, std::span<double> y) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = w.data() + r * cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
        y[r] += acc;
    }
}

// y += W^T x
void matvec_t_add(std::span<const double> w, std::size_t rows, std::size_t cols,
                  std::span<const double> x, std::span<double> y) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = w.data() + r * cols;
        const double xr = x[r];
        for (std::size_t c = 0; c < cols; ++c) y[c] += row[c] * xr;
    }
}

// G += a b^T
void outer_add(std::span<double> g, std::span<const double> a, std::span<const double> b) {
    const std::size_t cols = b.size();
    for (std::size_t r = 0; r < a.size(); ++r) {
        double* row = g.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) row[c] += a[r] * b[c];
    }
}

std::span<double> grad_of(std::span<double> grad, const ParamSection& s) {
    return grad.subspan(s.offset, s.count());
}

// Input embedding of position t: token row plus segment row.
std::vector<double> input_embedding(const ModelState& state, const Sequence& seq, std::size_t t) {
    const std::size_t d = state.config().dim;
    const auto tok = state.params("embedding").subspan(static_cast<std::size_t>(seq.ids[t]) * d, d);
    const auto seg = state.params("segment").subspan(static_cast<std::size_t>(seq.segments[t]) * d, d);
    std::vector<double> x(d);
    for (std::size_t k = 0; k < d; ++k) x[k] = tok[k] + seg[k];
    return x;
}

void add_input_grad(const ModelState& state, const Sequence& seq, std::size_t t, std::span<const double> dx,
                    double scale, std::span<double> grad) {
    const std::size_t d = state.config().dim;
    auto gt = grad_of(grad, state.section("embedding")).subspan(static_cast<std::size_t>(seq.ids[t]) * d, d);
    auto gs = grad_of(grad, state.section("segment")).subspan(static_cast<std::size_t>(seq.segments[t]) * d, d);
    for (std::size_t k = 0; k < d; ++k) {
        gt[k] += dx[k] * scale;
        gs[k] += dx[k] * scale;
    }
}

std::vector<double> mean_embedding(const ModelState& state, const Sequence& seq) {
    const std::size_t d = state.config().dim;
    std::vector<double> mean(d, 0.0);
    for (std::size_t t = 0; t < seq.ids.size(); ++t) {
        const auto x = input_embedding(state, seq, t);
        for (std::size_t k = 0; k < d; ++k) mean[k] += x[k];
    }
    const double inv = 1.0 / static_cast<double>(seq.ids.size());
    for (double& v : mean) v *= inv;
    return mean;
}

void scatter_mean_grad(const ModelState& state, const Sequence& seq, std::span<const double> d_mean,
                       std::span<double> grad) {
    const double inv = 1.0 / static_cast<double>(seq.ids.size());
    for (std::size_t t = 0; t < seq.ids.size(); ++t) add_input_grad(state, seq, t, d_mean, inv, grad);
}

class MeanContextEncoder final : public Encoder {
public:
    std::string_view kind() const override { return "mean-context"; }

    std::vector<ParamSection> sections(std::size_t dim) const override {
        return {{"encoder.weight", 0, dim, dim, ParamGroup::encoder},
                {"encoder.bias", 0, dim, 1, ParamGroup::encoder}};
    }

    std::vector<double> encode(const ModelState& state, const Sequence& seq) const override {
        const std::size_t d = state.config().dim;
        const auto mean = mean_embedding(state, seq);
        std::vector<double> out(seq.ids.size() * d);
        for (std::size_t t = 0; t < seq.ids.size(); ++t) {
            auto x = input_embedding(state, seq, t);
            for (std::size_t k = 0; k < d; ++k) x[k] += mean[k];
            row(state, x, std::span<double>(out).subspan(t * d, d));
        }
        return out;
    }

    void encode_cls(const ModelState& state, const Sequence& seq, EncoderCache& cache) const override {
        const std::size_t d = state.config().dim;
        const auto mean = mean_embedding(state, seq);
        cache.context = input_embedding(state, seq, 0);
        for (std::size_t k = 0; k < d; ++k) cache.context[k] += mean[k];
        cache.cls.assign(d, 0.0);
        row(state, cache.context, cache.cls);
    }

    void backward_cls(const ModelState& state, const Sequence& seq, const EncoderCache& cache,
                      std::span<const double> d_cls, std::span<double> grad) const override {
        const std::size_t d = state.config().dim;
        std::vector<double> du(d);
        for (std::size_t k = 0; k < d; ++k) du[k] = d_cls[k] * (1.0 - cache.cls[k] * cache.cls[k]);

        outer_add(grad_of(grad, state.section("encoder.weight")), du, cache.context);
        auto gb = grad_of(grad, state.section("encoder.bias"));
        for (std::size_t k = 0; k < d; ++k) gb[k] += du[k];

        std::vector<double> dx(d, 0.0);
        matvec_t_add(state.params("encoder.weight"), d, d, du, dx);
        add_input_grad(state, seq, 0, dx, 1.0, grad);
        scatter_mean_grad(state, seq, dx, grad);
    }

private:
    static void row(const ModelState& state, std::span<const double> x, std::span<double> out) {
        const std::size_t d = state.config().dim;
        const auto b = state.params("encoder.bias");
        std::copy(b.begin(), b.end(), out.begin());
        matvec_add(state.params("encoder.weight"), d, d, x, out);
        for (double& v : out) v = std::tanh(v);
    }
};

class DualContextEncoder final : public Encoder {
public:
    std::string_view kind() const override { return "dual-context"; }

    std::vector<ParamSection> sections(std::size_t dim) const override {
        return {{"encoder.token_weight", 0, dim, dim, ParamGroup::encoder},
                {"encoder.context_weight", 0, dim, dim, ParamGroup::encoder},
                {"encoder.bias", 0, dim, 1, ParamGroup::encoder}};
    }

    std::vector<double> encode(const ModelState& state, const Sequence& seq) const override {
        const std::size_t d = state.config().dim;
        const auto mean = mean_embedding(state, seq);
        std::vector<double> out(seq.ids.size() * d);
        for (std::size_t t = 0; t < seq.ids.size(); ++t) {
            row(state, input_embedding(state, seq, t), mean, std::span<double>(out).subspan(t * d, d));
        }
        return out;
    }

    void encode_cls(const ModelState& state, const Sequence& seq, EncoderCache& cache) const override {
        const std::size_t d = state.config().dim;
        cache.context = mean_embedding(state, seq);
        cache.cls.assign(d, 0.0);
        row(state, input_embedding(state, seq, 0), cache.context, cache.cls);
    }

    void backward_cls(const ModelState& state, const Sequence& seq, const EncoderCache& cache,
                      std::span<const double> d_cls, std::span<double> grad) const override {
        const std::size_t d = state.config().dim;
        std::vector<double> du(d);
        for (std::size_t k = 0; k < d; ++k) du[k] = d_cls[k] * (1.0 - cache.cls[k] * cache.cls[k]);

        outer_add(grad_of(grad, state.section("encoder.token_weight")), du, input_embedding(state, seq, 0));
        outer_add(grad_of(grad, state.section("encoder.context_weight")), du, cache.context);
        auto gb = grad_of(grad, state.section("encoder.bias"));
        for (std::size_t k = 0; k < d; ++k) gb[k] += du[k];

        std::vector<double> d_token(d, 0.0);
        matvec_t_add(state.params("encoder.token_weight"), d, d, du, d_token);
        add_input_grad(state, seq, 0, d_token, 1.0, grad);

        std::vector<double> d_mean(d, 0.0);
        matvec_t_add(state.params("encoder.context_weight"), d, d, du, d_mean);
        scatter_mean_grad(state, seq, d_mean, grad);
    }

private:
    static void row(const ModelState& state, std::span<const double> token, std::span<const double> mean,
                    std::span<double> out) {
        const std::size_t d = state.config().dim;
        const auto b = state.params("encoder.bias");
        std::copy(b.begin(), b.end(), out.begin());
        matvec_add(state.params("encoder.token_weight"), d, d, token, out);
        matvec_add(state.params("encoder.context_weight"), d, d, mean, out);
        for (double& v : out) v = std::tanh(v);
    }
};

}  // namespace

const Encoder& encoder_for(std::string_view kind) {
    static const MeanContextEncoder mean_context;
    static const DualContextEncoder dual_context;
    if (kind == mean_context.kind()) return mean_context;
    if (kind == dual_context.kind()) return dual_context;
    throw UsageError(fmt::format("unknown encoder kind '{}' (expected mean-context or dual-context)", kind));
}

// ---------------------------------------------------------------------------
// State

ModelState::ModelState(const ModelConfig& config) : config_(config) {
    config_.validate();
    const std::size_t d = config_.dim;
    std::vector<ParamSection> layout;
    layout.push_back({"embedding", 0, config_.vocabulary().size(), d, ParamGroup::encoder});
    layout.push_back({"segment", 0, kSegmentCount, d, ParamGroup::encoder});
    for (auto s : encoder_for(config_.encoder_kind).sections(d)) layout.push_back(std::move(s));
    std::size_t in = d;
    for (std::size_t k = 0; k < config_.head_dims.size(); ++k) {
        const std::size_t out = config_.head_dims[k];
        layout.push_back({fmt::format("head.{}.weight", k), 0, out, in, ParamGroup::head});
        layout.push_back({fmt::format("head.{}.bias", k), 0, out, 1, ParamGroup::head});
        in = out;
    }
    std::size_t offset = 0;
    for (auto& s : layout) {
        s.offset = offset;
        offset += s.count();
    }
    sections_ = std::move(layout);
    params_.assign(offset, 0.0);
    m_.assign(offset, 0.0);
    v_.assign(offset, 0.0);
}

ModelState ModelState::zeros(const ModelConfig& config) { return ModelState(config); }

ModelState ModelState::initialize(const ModelConfig& config) {
    ModelState state(config);
    Rng rng(derive_seed(config.seed, stream::init));
    const double bound = 1.0 / std::sqrt(static_cast<double>(config.dim));
    for (const auto& s : state.sections_) {
        if (is_bias(s)) continue;
        for (std::size_t i = 0; i < s.count(); ++i) state.params_[s.offset + i] = rng.uniform(-bound, bound);
    }
    state.metadata.seed = config.seed;
    return state;
}

const ParamSection& ModelState::section(std::string_view name) const {
    for (const auto& s : sections_)
        if (s.name == name) return s;
    throw Error(fmt::format("model has no parameter section '{}'", name));
}

std::span<double> ModelState::params(std::string_view name) {
    const auto& s = section(name);
    return std::span<double>(params_).subspan(s.offset, s.count());
}

std::span<const double> ModelState::params(std::string_view name) const {
    const auto& s = section(name);
    return std::span<const double>(params_).subspan(s.offset, s.count());
}

// ---------------------------------------------------------------------------
// Head

namespace {

struct HeadCache {
    // acts[0] is the CLS vector; acts[k] the output of layer k-1.
    std::vector<std::vector<double>> acts;
};

std::vector<const ParamSection*> head_sections(const ModelState& state) {
    std::vector<const ParamSection*> out;
    for (const auto& s : state.sections())
        if (s.group == ParamGroup::head) out.push_back(&s);
    return out;
}

double head_forward(const ModelState& state, std::span<const double> input, HeadCache& cache) {
    const auto sections = head_sections(state);
    const auto& flat = state.flat();
    const std::size_t layers = sections.size() / 2;
    cache.acts.assign(1, std::vector<double>(input.begin(), input.end()));
    for (std::size_t k = 0; k < layers; ++k) {
        const auto& w = *sections[2 * k];
        const auto& b = *sections[2 * k + 1];
        std::vector<double> out(flat.begin() + static_cast<std::ptrdiff_t>(b.offset),
                                flat.begin() + static_cast<std::ptrdiff_t>(b.offset + b.count()));
        matvec_add(std::span<const double>(flat).subspan(w.offset, w.count()), w.rows, w.cols,
                   cache.acts.back(), out);
        if (k + 1 < layers)
            for (double& v : out) v = std::tanh(v);
        cache.acts.push_back(std::move(out));
    }
    return cache.acts.back()[0];
}

// Returns dLoss/dinput.
std::vector<double> head_backward(const ModelState& state, const HeadCache& cache, double d_out,
                                  std::span<double> grad) {
    const auto sections = head_sections(state);
    const auto& flat = state.flat();
    const std::size_t layers = sections.size() / 2;
    std::vector<double> delta{d_out};  // dLoss / d(pre-activation of layer k)
    for (std::size_t k = layers; k-- > 0;) {
        const auto& w = *sections[2 * k];
        const auto& b = *sections[2 * k + 1];
        const auto& in = cache.acts[k];
        outer_add(grad_of(grad, w), delta, in);
        auto gb = grad_of(grad, b);
        for (std::size_t r = 0; r < b.rows; ++r) gb[r] += delta[r];

        std::vector<double> d_in(w.cols, 0.0);
        matvec_t_add(std::span<const double>(flat).subspan(w.offset, w.count()), w.rows, w.cols, delta, d_in);
        if (k > 0) {
            // `in` is a tanh output
            for (std::size_t c = 0; c < d_in.size(); ++c) d_in[c] *= 1.0 - in[c] * in[c];
        }
        delta = std::move(d_in);
    }
    return delta;
}

}  // namespace

// ---------------------------------------------------------------------------
// Forward and training

std::vector<double> encode(const ModelState& state, const Sequence& seq) {
    check_ids(state, seq);
    return encoder_for(state.config().encoder_kind).encode(state, seq);
}

double forward(const ModelState& state, const Sequence& seq) {
    if (seq.ids.empty()) throw DataError("cannot score an empty sequence");
    check_ids(state, seq);
    EncoderCache enc;
    encoder_for(state.config().encoder_kind).encode_cls(state, seq, enc);
    HeadCache head;
    return head_forward(state, enc.cls, head);
}

std::vector<TrainItem> make_train_items(const Dataset& dataset, InputFormat format,
                                        const Vocabulary& vocab) {
    std::vector<TrainItem> items;
    items.reserve(dataset.size());
    for (const auto& ex : dataset.examples) {
        if (!ex.score) throw DataError(fmt::format("example '{}' has no score", ex.id));
        items.push_back({build_input(ex, format, vocab), *ex.score});
    }
    return items;
}

double batch_loss(const ModelState& state, std::span<const TrainItem> batch, std::span<double> grad) {
    if (batch.empty()) return 0.0;
    const Encoder& encoder = encoder_for(state.config().encoder_kind);
    const double inv = 1.0 / static_cast<double>(batch.size());
    double sum = 0.0;
    EncoderCache enc;
    HeadCache head;
    for (const auto& item : batch) {
        check_ids(state, item.seq);
        encoder.encode_cls(state, item.seq, enc);
        const double p = head_forward(state, enc.cls, head);
        sum += loss(p, item.target);
        if (!grad.empty()) {
            const double d_out = 2.0 * (p - item.target) * inv;
            const auto d_cls = head_backward(state, head, d_out, grad);
            encoder.backward_cls(state, item.seq, enc, d_cls, grad);
        }
    }
    return sum * inv;
}

std::vector<double> step_gradient(const ModelState& state, const FormatBatches& batches,
                                  StepLosses* losses) {
    std::vector<double> grad(state.flat().size(), 0.0);
    StepLosses l;
    l.ref = batch_loss(state, batches.ref, grad);
    l.src = batch_loss(state, batches.src, grad);
    l.src_ref = batch_loss(state, batches.src_ref, grad);
    l.total = l.ref + l.src + l.src_ref;
    if (losses) *losses = l;
    return grad;
}

StepLosses train_step(ModelState& state, const FormatBatches& batches,
                      const OptimizerSettings& optimizer) {
    std::size_t size = 0;
    for (auto b : {batches.ref, batches.src, batches.src_ref}) {
        if (b.empty()) continue;
        if (size != 0 && b.size() != size) {
            throw DataError("batch sizes must be equal across input formats");
        }
        size = b.size();
    }
    if (size == 0) return {};

    StepLosses losses;
    const auto grad = step_gradient(state, batches, &losses);
    if (!std::isfinite(losses.total)) {
        throw NumericalError(fmt::format("non-finite training loss at step {}", state.step() + 1));
    }
    if (!std::all_of(grad.begin(), grad.end(), [](double g) { return std::isfinite(g); })) {
        throw NumericalError(fmt::format("non-finite gradient at step {}", state.step() + 1));
    }

    const std::uint64_t t = state.step() + 1;
    const double c1 = 1.0 - std::pow(optimizer.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(optimizer.beta2, static_cast<double>(t));
    auto& p = state.flat();
    auto& m = state.adam_m();
    auto& v = state.adam_v();
    for (const auto& s : state.sections()) {
        const double lr = s.group == ParamGroup::head ? optimizer.lr_head : optimizer.lr_encoder;
        for (std::size_t i = s.offset; i < s.offset + s.count(); ++i) {
            m[i] = optimizer.beta1 * m[i] + (1.0 - optimizer.beta1) * grad[i];
            v[i] = optimizer.beta2 * v[i] + (1.0 - optimizer.beta2) * grad[i] * grad[i];
            p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + optimizer.epsilon);
        }
    }
    state.set_step(t);
    return losses;
}

std::string FormatAssignment::str() const {
    return unified ? std::string("all") : std::string(to_string(single));
}

FormatAssignment FormatAssignment::parse(std::string_view text) {
    if (text == "all") return all();
    return only(parse_input_format(text));
}

EpochStats train_epoch(ModelState& state, const Dataset& dataset, const TrainHyper& hyper,
                       std::uint64_t epoch) {
    EpochStats stats;
    if (dataset.empty()) return stats;
    if (hyper.batch_size == 0) throw UsageError("batch size must be positive");
    const Vocabulary vocab = state.config().vocabulary();
    Rng rng(derive_seed(hyper.seed, stream::epoch, epoch));
    const std::size_t bs = hyper.batch_size;

    if (hyper.formats.unified) {
        const auto [p_ref, p_src, p_src_ref] = split_three_way(dataset, hyper.seed);
        auto ref = make_train_items(p_ref, InputFormat::ref, vocab);
        auto src = make_train_items(p_src, InputFormat::src, vocab);
        auto src_ref = make_train_items(p_src_ref, InputFormat::src_ref, vocab);
        rng.shuffle(std::span<TrainItem>(ref));
        rng.shuffle(std::span<TrainItem>(src));
        rng.shuffle(std::span<TrainItem>(src_ref));
        const std::size_t n = std::min({ref.size(), src.size(), src_ref.size()});
        for (std::size_t start = 0; start < n; start += bs) {
            const std::size_t len = std::min(bs, n - start);
            FormatBatches b{std::span<const TrainItem>(ref).subspan(start, len),
                            std::span<const TrainItem>(src).subspan(start, len),
                            std::span<const TrainItem>(src_ref).subspan(start, len)};
            stats.loss_sum += train_step(state, b, hyper.optimizer).total;
            stats.sequences_ref += len;
            stats.sequences_src += len;
            stats.sequences_src_ref += len;
            ++stats.steps;
        }
        return stats;
    }

    auto items = make_train_items(dataset, hyper.formats.single, vocab);
    rng.shuffle(std::span<TrainItem>(items));
    for (std::size_t start = 0; start < items.size(); start += bs) {
        const std::size_t len = std::min(bs, items.size() - start);
        const auto span = std::span<const TrainItem>(items).subspan(start, len);
        FormatBatches b;
        switch (hyper.formats.single) {
            case InputFormat::ref: b.ref = span; stats.sequences_ref += len; break;
            case InputFormat::src: b.src = span; stats.sequences_src += len; break;
            case InputFormat::src_ref: b.src_ref = span; stats.sequences_src_ref += len; break;
        }
        stats.loss_sum += train_step(state, b, hyper.optimizer).total;
        ++stats.steps;
    }
    return stats;
}

std::vector<double> predict(const ModelState& state, const Dataset& dataset, InputFormat format) {
    const Vocabulary vocab = state.config().vocabulary();
    std::vector<double> out;
    out.reserve(dataset.size());
    for (const auto& ex : dataset.examples) {
        try {
            out.push_back(forward(state, build_input(ex, format, vocab)));
        } catch (const DataError& e) {
            throw DataError(fmt::format("example '{}': {}", ex.id, e.what()));
        }
    }
    return out;
}

double ModelScorer::score(const Example& example, InputFormat format) const {
    return forward(state_, build_input(example, format, state_.config().vocabulary()));
}

}  // namespace unite
