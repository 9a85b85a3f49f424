#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "planted.hpp"
#include "temp_dir.hpp"
#include "unite/eval.hpp"
#include "unite/pipeline.hpp"

using namespace unite;

namespace {

ModelConfig tiny(std::uint64_t seed = 1, const char* encoder = "mean-context") {
    ModelConfig c;
    c.dim = 8;
    c.buckets = 64;
    c.head_dims = {6, 1};
    c.seed = seed;
    c.encoder_kind = encoder;
    c.lr_encoder = 1e-2;
    c.lr_head = 1e-2;
    return c;
}

Dataset human(std::size_t n, std::uint64_t seed, Provenance p = Provenance::dev, const char* prefix = "h") {
    return planted::human(n, seed, prefix, p, DegradeConfig{0.2, 0.5, 0.4, 1}, planted::Options{60, 3, 8});
}

StageSpec spec_for(Stage stage, Dataset data, std::size_t epochs, std::uint64_t seed = 3) {
    StageSpec s;
    s.stage = stage;
    s.dataset = std::move(data);
    s.formats = StageSpec::default_formats(stage);
    s.epochs = epochs;
    s.batch_size = 4;
    s.lr_encoder = 1e-2;
    s.lr_head = 1e-2;
    s.seed = seed;
    return s;
}

std::vector<double> gold(const Dataset& d) {
    std::vector<double> g;
    for (const auto& ex : d.examples) g.push_back(*ex.score);
    return g;
}

}  // namespace

TEST_CASE("stage names and provenance") {
    for (Stage s : kStageOrder) CHECK(parse_stage(to_string(s)) == s);
    CHECK_THROWS_AS(parse_stage("warmup"), UsageError);
    CHECK(expected_provenance(Stage::pretrain) == Provenance::synthetic);
    CHECK(expected_provenance(Stage::finetune_da) == Provenance::da);
    CHECK(expected_provenance(Stage::finetune_mqm) == Provenance::mqm);
    CHECK(expected_provenance(Stage::finetune_dev) == Provenance::dev);
    CHECK(StageSpec::default_formats(Stage::pretrain).unified);
    CHECK_FALSE(StageSpec::default_formats(Stage::finetune_mqm).unified);
    CHECK(StageSpec::default_formats(Stage::finetune_da).single == InputFormat::src);
    CHECK(kPretrainBatchLarge == 1024);
    CHECK(kFinetuneBatchLarge == 32);
}

TEST_CASE("zero-epoch stage keeps parameters and records metadata") {
    auto state = ModelState::initialize(tiny());
    const auto before = state.flat();
    const Dataset data = human(20, 1, Provenance::da);
    const auto result = run_stage(state, spec_for(Stage::finetune_da, data, 0), {});
    CHECK(result.epochs.empty());
    CHECK(state.flat() == before);
    CHECK(state.metadata.stage == "finetune_da");
    CHECK(state.metadata.data_hash == dataset_fingerprint(data));
    CHECK(state.metadata.seed == 3);
    CHECK(state.metadata.extra.at("previous_stage") == "init");
    CHECK(state.metadata.extra.at("formats") == "src");
}

TEST_CASE("stage data must carry the matching provenance") {
    auto state = ModelState::initialize(tiny());
    CHECK_THROWS_AS(run_stage(state, spec_for(Stage::finetune_mqm, human(10, 1, Provenance::da), 1), {}), DataError);
    CHECK_THROWS_AS(run_stage(state, spec_for(Stage::pretrain, human(10, 1, Provenance::dev), 1), {}), DataError);
}

TEST_CASE("run_stage resets Adam moments and saves a checkpoint") {
    TempDir dir("pipeline");
    auto state = ModelState::initialize(tiny());
    run_stage(state, spec_for(Stage::finetune_da, human(16, 2, Provenance::da), 1), {});
    CHECK(state.step() == 4);
    const auto path = dir.file("mqm.ckpt");
    const auto result = run_stage(state, spec_for(Stage::finetune_mqm, human(8, 3, Provenance::mqm), 1), path);
    CHECK(state.step() == 2);
    CHECK(result.checkpoint_path == path);
    CHECK(load_checkpoint(path) == state);
    CHECK(state.metadata.extra.at("previous_stage") == "finetune_da");
}

TEST_CASE("resuming from a stage checkpoint equals an uninterrupted run") {
    TempDir dir("resume");
    const Dataset synth = human(24, 4, Provenance::synthetic, "s");
    const Dataset da = human(16, 5, Provenance::da, "d");

    auto straight = ModelState::initialize(tiny());
    run_stage(straight, spec_for(Stage::pretrain, synth, 2), {});
    run_stage(straight, spec_for(Stage::finetune_da, da, 2), {});

    auto first = ModelState::initialize(tiny());
    run_stage(first, spec_for(Stage::pretrain, synth, 2), dir.file("pre.ckpt"));
    auto resumed = load_checkpoint(dir.file("pre.ckpt"));
    run_stage(resumed, spec_for(Stage::finetune_da, da, 2), {});
    CHECK(resumed == straight);
}

TEST_CASE("select_top_k ranks by source-only dev Spearman") {
    TempDir dir("select");
    const Dataset dev = human(40, 6);
    const Dataset train = human(80, 7, Provenance::dev, "t");

    auto trained = ModelState::initialize(tiny(2));
    run_stage(trained, spec_for(Stage::finetune_dev, train, 15), dir.file("trained.ckpt"));
    save_checkpoint(ModelState::initialize(tiny(3)), dir.file("random.ckpt"));
    save_checkpoint(ModelState::zeros(tiny()), dir.file("zero.ckpt"));
    // identical model under two names: the tie goes to the smaller path
    save_checkpoint(trained, dir.file("b_copy.ckpt"));
    save_checkpoint(trained, dir.file("a_copy.ckpt"));

    const std::vector<std::string> paths{dir.file("zero.ckpt"), dir.file("random.ckpt"), dir.file("trained.ckpt"),
                                         dir.file("b_copy.ckpt"), dir.file("a_copy.ckpt")};
    const auto ranked = select_top_k(paths, dev, 5);
    REQUIRE(ranked.size() == 5);
    CHECK(ranked[0].path == dir.file("a_copy.ckpt"));
    CHECK(ranked[1].path == dir.file("b_copy.ckpt"));
    CHECK(ranked[2].path == dir.file("trained.ckpt"));
    CHECK(ranked[3].path == dir.file("random.ckpt"));
    CHECK(ranked[4].path == dir.file("zero.ckpt"));
    CHECK(std::isnan(ranked[4].spearman));
    CHECK(ranked[0].spearman > 0.5);

    const auto expected = oracle::spearman(predict(trained, dev, InputFormat::src), gold(dev));
    CHECK(ranked[0].spearman == doctest::Approx(expected).epsilon(1e-12));

    CHECK(select_top_k(paths, dev, 3).size() == 3);
    CHECK_THROWS_AS(select_top_k(paths, Dataset{}, 3), DataError);
    CHECK_THROWS_AS(select_top_k(paths, dev, 6), UsageError);
}

TEST_CASE("default grid") {
    const auto c = ModelConfig::desk();
    const auto grid = default_grid(c, 16);
    CHECK(grid.size() == 6);
    for (const auto& p : grid) {
        CHECK(p.batch_size == 16);
        CHECK(p.lr_encoder == c.lr_encoder);
        CHECK((p.lr_head == c.lr_head || p.lr_head == c.lr_head * 0.5));
    }
    CHECK(grid.front().epochs == 1);
    CHECK(grid.back().epochs == 4);
}

TEST_CASE("kfold_cv shares folds across grid points") {
    const Dataset dev = human(10, 8);
    const auto base = ModelState::initialize(tiny());
    const std::vector<HyperPoint> one{{1, 2, 1e-2, 1e-2}};
    const auto r1 = kfold_cv(dev, one, base, 5);
    REQUIRE(r1.size() == 1);
    CHECK(r1[0].fold_spearman.size() == kFolds);
    CHECK(make_folds(dev.size(), kFolds, 5)[0].size() == 2);

    // the same point listed twice sees the same folds and gets the same scores
    const std::vector<HyperPoint> twice{{2, 2, 1e-2, 1e-2}, {2, 2, 1e-2, 1e-2}};
    const auto r2 = kfold_cv(dev, twice, base, 5);
    REQUIRE(r2.size() == 2);
    for (std::size_t f = 0; f < kFolds; ++f) {
        const double a = r2[0].fold_spearman[f], b = r2[1].fold_spearman[f];
        CHECK(((std::isnan(a) && std::isnan(b)) || a == b));
    }
    CHECK(r2[0].grid_index == 0);  // ties keep grid order
    CHECK(r2[1].grid_index == 1);
    CHECK(kfold_cv(dev, twice, base, 5)[0].fold_spearman.size() == kFolds);

    CHECK_THROWS_AS(kfold_cv(dev, std::span<const HyperPoint>{}, base, 5), UsageError);
    CHECK_THROWS_AS(kfold_cv(human(4, 1), one, base, 5), DataError);
}

TEST_CASE("kfold_cv orders by mean and the mean covers defined folds") {
    const Dataset dev = human(30, 9);
    const auto base = ModelState::initialize(tiny());
    const std::vector<HyperPoint> grid{{0, 4, 1e-2, 1e-2}, {6, 4, 1e-2, 1e-2}};
    const auto r = kfold_cv(dev, grid, base, 1);
    CHECK(r.size() == 2);
    CHECK((std::isnan(r[1].mean) || r[0].mean >= r[1].mean));
    for (const auto& res : r) {
        double sum = 0;
        std::size_t n = 0;
        for (double v : res.fold_spearman)
            if (!std::isnan(v)) sum += v, ++n;
        if (n) CHECK(res.mean == doctest::Approx(sum / n));
    }
}

TEST_CASE("final_finetune records hyperparameters") {
    TempDir dir("final");
    const Dataset dev = human(12, 10);
    const auto base = ModelState::initialize(tiny());
    const HyperPoint zero{0, 4, 1e-2, 5e-3};
    const auto same = final_finetune(base, dev, zero, 1);
    CHECK(same.flat() == base.flat());
    CHECK(same.metadata.extra.at("hp.epochs") == "0");
    CHECK(same.metadata.extra.at("hp.lr_head") == "0.005");
    CHECK(same.metadata.stage == "finetune_dev");

    const auto tuned = final_finetune(base, dev, {2, 4, 1e-2, 1e-2}, 1, dir.file("final.ckpt"));
    CHECK_FALSE(tuned.flat() == base.flat());
    CHECK(load_checkpoint(dir.file("final.ckpt")) == tuned);
}

TEST_CASE("z_mean_combine") {
    const std::vector<std::vector<double>> opposite{{1, 2, 3}, {3, 2, 1}};
    for (double v : z_mean_combine(opposite)) CHECK(v == 0.0);
    const std::vector<std::vector<double>> single{{5, 1, 3}};
    const auto z = z_mean_combine(single);
    CHECK(z[0] == doctest::Approx(1.224745).epsilon(1e-6));
    CHECK(z[1] == doctest::Approx(-1.224745).epsilon(1e-6));
    const std::vector<std::vector<double>> ragged{{1, 2}, {1, 2, 3}};
    CHECK_THROWS_AS(z_mean_combine(ragged), DataError);
    CHECK_THROWS_AS(z_mean_combine(std::span<const std::vector<double>>{}), UsageError);
}

TEST_CASE("ensemble of one member preserves the prediction order") {
    TempDir dir("ensemble");
    const Dataset d = human(25, 11);
    auto m = ModelState::initialize(tiny(4));
    save_checkpoint(m, dir.file("m.ckpt"));
    const auto single = predict(m, d, InputFormat::src);
    const auto ens = ensemble_predict(EnsembleSpec{{dir.file("m.ckpt")}}, d, InputFormat::src);
    auto order = [](const std::vector<double>& v) {
        std::vector<std::size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
        return idx;
    };
    CHECK(order(single) == order(ens));

    const std::vector<ModelState> three{m, m, m};
    CHECK(ensemble_predict(three, d) == ens);

    try {
        ensemble_predict(EnsembleSpec{{dir.file("m.ckpt"), dir.file("missing.ckpt")}}, d);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("missing.ckpt") != std::string::npos);
    }
    CHECK_THROWS_AS(ensemble_predict(EnsembleSpec{{dir.file("m.ckpt")}, "max"}, d), UsageError);
    CHECK_THROWS_AS(ensemble_predict(EnsembleSpec{}, d), UsageError);
}
