#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>

#include "temp_dir.hpp"
#include "unite/config.hpp"
#include "unite/error.hpp"
#include "unite/hashing.hpp"
#include "unite/io.hpp"
#include "unite/rng.hpp"

using namespace unite;

TEST_CASE("config sections, comments and typed getters") {
    const Config c = Config::parse(
        "seed = 7\n"
        "# comment\n"
        "; another\n"
        "\n"
        "[model]\n"
        "dim = 32\n"
        "  lr_head =  0.003  \n"
        "head_dims = 16, 8,1\n"
        "[stage.pretrain]\n"
        "enabled = true\n"
        "formats = all\n");
    CHECK(c.get_uint("seed", 0) == 7);
    CHECK(c.get_uint("model.dim", 0) == 32);
    CHECK(c.get_double("model.lr_head", 0) == 0.003);
    CHECK(c.get_uints("model.head_dims", {}) == std::vector<std::uint64_t>{16, 8, 1});
    CHECK(c.get_bool("stage.pretrain.enabled", false));
    CHECK(c.get_string("stage.pretrain.formats", "") == "all");
    CHECK(c.get_string("missing", "fallback") == "fallback");
    CHECK_FALSE(c.get("missing").has_value());
    CHECK(c.has_section("stage.pretrain"));
    CHECK(c.has_section("model"));
    CHECK_FALSE(c.has_section("stage.finetune_da"));
    CHECK(c.keys().size() == 6);
}

TEST_CASE("config errors are usage errors") {
    CHECK_THROWS_AS(Config::parse("[model\n"), UsageError);
    CHECK_THROWS_AS(Config::parse("novalue\n"), UsageError);
    CHECK_THROWS_AS(Config::parse(" = 3\n"), UsageError);
    const Config c = Config::parse("a = x\nb = -1\nc = maybe\n");
    CHECK_THROWS_AS(c.get_double("a", 0), UsageError);
    CHECK_THROWS_AS(c.get_uint("b", 0), UsageError);
    CHECK_THROWS_AS(c.get_bool("c", false), UsageError);
    CHECK_THROWS_AS(Config::load("/nonexistent/unite.cfg"), UsageError);
}

TEST_CASE("overrides replace file values") {
    Config c = Config::parse("[model]\ndim = 32\n");
    c.set_assignment("model.dim=64");
    c.set_assignment("select.top_k = 2");
    CHECK(c.get_uint("model.dim", 0) == 64);
    CHECK(c.get_uint("select.top_k", 0) == 2);
    CHECK_THROWS_AS(c.set_assignment("justakey"), UsageError);
}

TEST_CASE("paths resolve against the config file directory") {
    TempDir dir("config");
    write_file(dir.file("run.cfg"), "[stage.pretrain]\ndata = data/synth.tsv\nabs = /tmp/x.tsv\n");
    const Config c = Config::load(dir.file("run.cfg"));
    CHECK(std::filesystem::path(c.base_dir()) == std::filesystem::path(dir.path()));
    CHECK(std::filesystem::path(c.resolve_path("data/synth.tsv")) ==
          std::filesystem::path(dir.path()) / "data/synth.tsv");
    CHECK(c.resolve_path("/tmp/x.tsv") == "/tmp/x.tsv");
}

TEST_CASE("split_list trims and drops empties") {
    CHECK(split_list(" a, b ,,c ") == std::vector<std::string>{"a", "b", "c"});
    CHECK(split_list("").empty());
}

TEST_CASE("format_double examples") {
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(1.0) == "1");
    CHECK(format_double(-2.5) == "-2.5");
    CHECK(format_double(1.0 / 3.0) == "0.3333333333333333");
    CHECK(format_double(1e-300) == "1e-300");
}

TEST_CASE("format_double round-trips every finite double (property)") {
    Rng rng(2024);
    for (int i = 0; i < 20000; ++i) {
        std::uint64_t bits = rng.next();
        double v;
        std::memcpy(&v, &bits, sizeof v);
        if (!std::isfinite(v)) continue;
        const double back = parse_double(format_double(v));
        CHECK(std::memcmp(&back, &v, sizeof v) == 0);
    }
    for (double v : {0.0, -0.0, std::numeric_limits<double>::denorm_min(), std::numeric_limits<double>::max(),
                     std::numeric_limits<double>::lowest()}) {
        const double back = parse_double(format_double(v));
        CHECK(std::memcmp(&back, &v, sizeof v) == 0);
    }
}

TEST_CASE("parse_double rejects junk and non-finite values") {
    CHECK(parse_double("2.5") == 2.5);
    CHECK(parse_double("-1e3") == -1000.0);
    CHECK_THROWS_AS(parse_double(""), std::invalid_argument);
    CHECK_THROWS_AS(parse_double("1.5x"), std::invalid_argument);
    CHECK_THROWS_AS(parse_double("nan"), std::invalid_argument);
    CHECK_THROWS_AS(parse_double("inf"), std::invalid_argument);
}

TEST_CASE("line and field splitting") {
    const auto lines = split_lines("a\r\n\nb\nc");
    REQUIRE(lines.size() == 4);
    CHECK(lines[0] == "a");
    CHECK(lines[1].empty());
    CHECK(lines[3] == "c");
    CHECK(split_lines("").empty());
    CHECK(split_lines("x\n").size() == 1);
    const auto f = split_fields("a\t\tb\t", '\t');
    REQUIRE(f.size() == 4);
    CHECK(f[1].empty());
    CHECK(f[3].empty());
}

TEST_CASE("file helpers") {
    TempDir dir("io");
    write_file(dir.file("x.txt"), "hello\n");
    CHECK(read_file(dir.file("x.txt")) == "hello\n");
    write_file(dir.file("x.txt"), "a");
    CHECK(read_file(dir.file("x.txt")) == "a");
    CHECK_THROWS_AS(read_file(dir.file("missing.txt")), DataError);
    CHECK_THROWS_AS(write_file(dir.file("no/such/dir/x.txt"), "a"), DataError);
}

TEST_CASE("fnv1a and seed derivation") {
    CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a("tag") == 0x56d7ab194448a4f3ULL);
    CHECK(derive_seed(1, 2) != derive_seed(2, 1));
    CHECK(derive_seed(1, 2, 3) == derive_seed(derive_seed(1, 2), 3));
}

TEST_CASE("rng sampling helpers") {
    Rng a(5), b(5);
    for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
    Rng r(1);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) {
        const auto k = r.below(7);
        REQUIRE(k < 7);
        ++counts[k];
    }
    for (int c : counts) CHECK(std::abs(c - 10000) < 500);
    for (int i = 0; i < 1000; ++i) {
        const double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        const auto k = r.between(3, 5);
        CHECK(k >= 3);
        CHECK(k <= 5);
    }
    std::vector<int> v{1, 2, 3, 4, 5, 6};
    r.shuffle(std::span<int>(v));
    std::sort(v.begin(), v.end());
    CHECK(v == std::vector<int>{1, 2, 3, 4, 5, 6});
}
