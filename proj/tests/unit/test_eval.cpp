#include <doctest.h>

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "unite/error.hpp"
#include "unite/eval.hpp"
#include "unite/rng.hpp"
#include "unite/stats.hpp"

using namespace unite;

namespace {

std::vector<double> random_vector(Rng& rng, std::size_t n, bool ties) {
    std::vector<double> v(n);
    for (auto& x : v) x = ties ? static_cast<double>(rng.below(4)) : rng.uniform(-100, 100);
    return v;
}

bool constant(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; });
}

Dataset two_pairs() {
    Dataset d;
    const double gold[] = {1, 2, 3, 4, 10, 20, 30};
    for (int i = 0; i < 7; ++i) {
        d.examples.push_back({"e" + std::to_string(i), LanguagePair::parse(i < 4 ? "de-en" : "zh-en"), "s", "h",
                              std::nullopt, gold[i]});
    }
    return d;
}

}  // namespace

TEST_CASE("worked correlation values") {
    const std::vector<double> a{1, 2, 2, 3}, b{1, 2, 3, 4};
    CHECK(spearman(a, b) == doctest::Approx(0.948683).epsilon(1e-6));
    const std::vector<double> x{0, 1, 2}, y{0, 1, 4};
    CHECK(pearson(x, y) == doctest::Approx(0.960769).epsilon(1e-6));
    // reference values frozen from an independent statistics package
    const std::vector<double> p{1, 2, 3, 4, 5}, q{5, 6, 7, 8, 7};
    CHECK(spearman(p, q) == doctest::Approx(0.8207826816681233).epsilon(1e-12));
    CHECK(pearson(p, q) == doctest::Approx(0.8320502943378436).epsilon(1e-12));
    CHECK(kendall_b(p, q) == doctest::Approx(0.7378647873726218).epsilon(1e-12));
    CHECK(kendall_b(b, a) == doctest::Approx(0.9128709291752769).epsilon(1e-12));
    const std::vector<double> k1{1, 1, 2, 2}, k2{1, 2, 1, 2};
    CHECK(kendall_b(k1, k2) == doctest::Approx(0.0));
}

TEST_CASE("perfect and reversed orderings") {
    const std::vector<double> x{1, 2, 3, 4, 5}, up{2, 4, 8, 16, 32}, down{5, 4, 3, 2, 1};
    CHECK(spearman(x, up) == doctest::Approx(1.0));
    CHECK(kendall_b(x, up) == doctest::Approx(1.0));
    CHECK(spearman(x, down) == doctest::Approx(-1.0));
    CHECK(kendall_b(x, down) == doctest::Approx(-1.0));
    CHECK(pearson(x, down) == doctest::Approx(-1.0));
}

TEST_CASE("degenerate inputs") {
    const std::vector<double> c{2, 2, 2}, x{1, 2, 3}, short_{1, 2};
    CHECK_THROWS_AS(spearman(c, x), NumericalError);
    CHECK_THROWS_AS(pearson(x, c), NumericalError);
    CHECK_THROWS_AS(kendall_b(c, x), NumericalError);
    CHECK_THROWS_AS(spearman(x, short_), DataError);
    const std::vector<double> one{1};
    CHECK_THROWS_AS(pearson(one, one), DataError);
}

TEST_CASE("metrics agree with the definitional oracles (property)") {
    for (std::uint64_t seed = 0; seed < 400; ++seed) {
        Rng rng(seed);
        const std::size_t n = rng.between(2, 80);
        const auto x = random_vector(rng, n, seed % 3 == 0);
        const auto y = random_vector(rng, n, seed % 2 == 0);
        if (constant(x) || constant(y)) continue;
        CHECK(spearman(x, y) == doctest::Approx(oracle::spearman(x, y)).epsilon(1e-12));
        CHECK(pearson(x, y) == doctest::Approx(oracle::pearson(x, y)).epsilon(1e-12));
        CHECK(kendall_b(x, y) == doctest::Approx(oracle::kendall_b(x, y)).epsilon(1e-12));
    }
}

TEST_CASE("rank metrics are invariant under increasing maps, symmetric and bounded (property)") {
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
        Rng rng(seed);
        const std::size_t n = rng.between(3, 60);
        const auto x = random_vector(rng, n, seed % 2 == 0);
        const auto y = random_vector(rng, n, false);
        if (constant(x)) continue;
        std::vector<double> fx(n), gy(n);
        for (std::size_t i = 0; i < n; ++i) {
            fx[i] = x[i] * x[i] * x[i] + 3 * x[i];
            gy[i] = std::exp(y[i] / 50.0);
        }
        const double s = spearman(x, y), k = kendall_b(x, y), p = pearson(x, y);
        CHECK(spearman(fx, gy) == doctest::Approx(s).epsilon(1e-12));
        CHECK(kendall_b(fx, gy) == doctest::Approx(k).epsilon(1e-12));
        CHECK(spearman(y, x) == doctest::Approx(s).epsilon(1e-12));
        CHECK(kendall_b(y, x) == doctest::Approx(k).epsilon(1e-12));
        CHECK(pearson(y, x) == doctest::Approx(p).epsilon(1e-12));
        for (double v : {s, k, p}) {
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("average ranks and z-normalization") {
    const std::vector<double> v{10, 20, 20, 5};
    CHECK(average_ranks(v) == std::vector<double>{1, 2.5, 2.5, 0});
    const auto z = z_normalize(std::vector<double>{1, 2, 3});
    CHECK(z[0] == doctest::Approx(-1.224745).epsilon(1e-6));
    CHECK(z[1] == 0.0);
    for (double x : z_normalize(std::vector<double>{4, 4})) CHECK(x == 0.0);
    CHECK(mean(std::vector<double>{1, 2, 6}) == 3.0);
}

TEST_CASE("evaluate per language pair and pooled") {
    const Dataset d = two_pairs();
    const std::vector<double> pred{4, 3, 2, 1, 1, 2, 3};
    const auto per = evaluate(d, pred, EvalMode::per_lp);
    REQUIRE(per.entries.size() == 2);
    CHECK(per.find("de-en")->spearman == doctest::Approx(-1.0));
    CHECK(per.find("zh-en")->spearman == doctest::Approx(1.0));
    CHECK(per.find("de-en")->n == 4);
    CHECK(per.find("fr-en") == nullptr);

    const auto pooled = evaluate(d, pred, EvalMode::pooled);
    REQUIRE(pooled.entries.size() == 1);
    CHECK(pooled.entries[0].label == "pooled");
    std::vector<double> gold;
    for (const auto& ex : d.examples) gold.push_back(*ex.score);
    CHECK(pooled.entries[0].spearman == doctest::Approx(oracle::spearman(pred, gold)).epsilon(1e-12));
    CHECK(pooled.entries[0].n == 7);
}

TEST_CASE("pooled equals per_lp for a single pair") {
    Dataset d = two_pairs();
    d.examples.resize(4);
    const std::vector<double> pred{0.3, 0.1, 0.9, 0.5};
    const auto a = evaluate(d, pred, EvalMode::per_lp).entries.at(0);
    const auto b = evaluate(d, pred, EvalMode::pooled).entries.at(0);
    CHECK(a.spearman == b.spearman);
    CHECK(a.pearson == b.pearson);
    CHECK(a.kendall_b == b.kendall_b);
}

TEST_CASE("evaluate is bitwise independent of example order (property)") {
    Rng rng(5);
    Dataset d;
    std::vector<double> pred;
    const char* pairs[] = {"de-en", "zh-en", "ru-en"};
    for (int i = 0; i < 90; ++i) {
        d.examples.push_back({"e" + std::to_string(i), LanguagePair::parse(pairs[i % 3]), "s", "h", std::nullopt,
                              std::floor(rng.uniform(0, 5))});
        pred.push_back(rng.uniform(-1, 1));
    }
    const auto base_per = evaluate(d, pred, EvalMode::per_lp);
    const auto base_pooled = evaluate(d, pred, EvalMode::pooled);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::size_t> perm(d.size());
        for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
        rng.shuffle(std::span<std::size_t>(perm));
        Dataset shuffled;
        std::vector<double> p2;
        for (std::size_t i : perm) {
            shuffled.examples.push_back(d.examples[i]);
            p2.push_back(pred[i]);
        }
        CHECK(to_json(evaluate(shuffled, p2, EvalMode::per_lp)) == to_json(base_per));
        CHECK(to_json(evaluate(shuffled, p2, EvalMode::pooled)) == to_json(base_pooled));
    }
}

TEST_CASE("evaluate skips degenerate pairs and rejects bad input") {
    Dataset d = two_pairs();
    std::vector<double> pred{1, 1, 1, 1, 1, 2, 3};  // constant predictions for de-en
    const auto r = evaluate(d, pred, EvalMode::per_lp);
    CHECK(r.entries.size() == 1);
    CHECK(r.entries[0].label == "zh-en");
    CHECK_THROWS_AS(evaluate(d, std::vector<double>{1, 2}, EvalMode::pooled), DataError);
    std::vector<double> bad{1, 2, 3, NAN, 1, 2, 3};
    CHECK_THROWS_AS(evaluate(d, bad, EvalMode::pooled), NumericalError);
    d.examples[0].score.reset();
    CHECK_THROWS_AS(evaluate(d, std::vector<double>(7, 0.5), EvalMode::pooled), DataError);
    CHECK_THROWS_AS(parse_eval_mode("global"), UsageError);
    CHECK(parse_eval_mode("per_lp") == EvalMode::per_lp);
}

TEST_CASE("report renderers") {
    const auto r = evaluate(two_pairs(), std::vector<double>{1, 2, 3, 4, 3, 2, 1}, EvalMode::per_lp);
    const auto json = nlohmann::json::parse(to_json(r));
    CHECK(json.is_object());
    const std::string tsv = to_tsv(r);
    CHECK(tsv.rfind("label\t", 0) == 0);
    CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 3);
    CHECK(to_table(r).find("zh-en") != std::string::npos);
}

TEST_CASE("cdf report") {
    const std::vector<double> s{50, 91, 92, 95};
    const std::vector<double> t{90, 49, 95, 100};
    std::vector<double> sorted_t = t;
    std::sort(sorted_t.begin(), sorted_t.end());
    const auto r = cdf_report(s, sorted_t);
    CHECK(r.fractions == std::vector<double>{0.0, 0.25, 1.0, 1.0});
    CHECK_THROWS_AS(cdf_report(s, t), UsageError);
    CHECK_THROWS_AS(cdf_report(std::vector<double>{}, sorted_t), DataError);

    const auto even = even_thresholds(0, 100, 4);
    CHECK(even == std::vector<double>{25, 50, 75, 100});
    CHECK_THROWS_AS(even_thresholds(1, 1, 3), UsageError);
    CHECK(to_tsv(r).find("0.25") != std::string::npos);
}

TEST_CASE("cdf fractions are non-decreasing and reach one at the maximum (property)") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        const auto s = random_vector(rng, rng.between(1, 50), seed % 2 == 0);
        const double hi = *std::max_element(s.begin(), s.end());
        const double lo = *std::min_element(s.begin(), s.end()) - 1.0;
        const auto r = cdf_report(s, even_thresholds(lo, hi, 20));
        CHECK(std::is_sorted(r.fractions.begin(), r.fractions.end()));
        CHECK(r.fractions.back() == 1.0);
        const std::vector<double> below{lo};
        CHECK(cdf_report(s, below).fractions[0] == 0.0);
    }
}
