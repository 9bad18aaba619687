// Run configuration: INI parsing, overrides, round trip. Export helpers.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "a3m/config.hpp"
#include "a3m/errors.hpp"
#include "a3m/export.hpp"

#include "support.hpp"

#include <charconv>
#include <filesystem>
#include <string>

using namespace a3m;
namespace fs = std::filesystem;

TEST_CASE("defaults describe the toy benchmark")
{
    const RunConfig c = default_run_config();
    CHECK(c.data.num_categories == 24);
    CHECK(c.data.spec.categories.size() == 24);
    CHECK(c.model.num_categories == 24);
    CHECK(c.model.attr_cardinalities == std::vector<std::size_t>{3, 3, 2, 2});
    CHECK(c.model.alpha == 0.5);
    CHECK(c.model.beta == 0.5);
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("format then parse reproduces the config text")
{
    RunConfig c = default_run_config();
    apply_override(c, "model.alpha=0.3");
    apply_override(c, "train.epochs=7");
    apply_override(c, "data.noise=0.125");
    apply_override(c, "eval.recall_ks=1,3");
    apply_override(c, "model.backbone=8:3:2:1,16:3:2:1,16:3:1:1");
    c.sync();
    const std::string text = format_config(c);
    const RunConfig back = parse_config(text);
    CHECK(format_config(back) == text);
    CHECK(back.model.alpha == 0.3);
    CHECK(back.train.epochs == 7);
    CHECK(back.data.spec.noise == 0.125);
    CHECK(back.eval.recall_ks == std::vector<std::size_t>{1, 3});
    REQUIRE(back.model.backbone.size() == 3);
    CHECK(back.model.backbone[2].stride == 1);
}

TEST_CASE("awkward doubles survive the round trip")
{
    RunConfig c = default_run_config();
    c.model.alpha = 0.1 + 0.2;
    c.train.learning_rate = 3e-7;
    const RunConfig back = parse_config(format_config(c));
    CHECK(back.model.alpha == c.model.alpha);
    CHECK(back.train.learning_rate == c.train.learning_rate);
}

TEST_CASE("explicit codebook fixes the categories")
{
    RunConfig c = default_run_config();
    apply_override(c, "data.codebook=0:0:0:0,2:1:1:0,1:2:0:1");
    c.sync();
    CHECK(c.data.num_categories == 3);
    CHECK(c.model.num_categories == 3);
    REQUIRE(c.data.spec.categories.size() == 3);
    CHECK(c.data.spec.categories[1] == std::vector<std::size_t>{2, 1, 1, 0});
    const std::string text = format_config(c);
    CHECK(text.find("codebook = 0:0:0:0,2:1:1:0,1:2:0:1\n") != std::string::npos);
    CHECK(format_config(parse_config(text)) == text);
    CHECK(format_config(default_run_config()).find("codebook") == std::string::npos);
}

TEST_CASE("bad keys and values name the key")
{
    RunConfig c = default_run_config();
    auto message = [&](const std::string& assignment) {
        try {
            apply_override(c, assignment);
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    CHECK(message("model.gamma=1").find("model.gamma") != std::string::npos);
    CHECK(message("train.epochs=many").find("train.epochs") != std::string::npos);
    CHECK(message("model.variant=resnet").find("resnet") != std::string::npos);
    CHECK(message("noequals").find("noequals") != std::string::npos);
    CHECK_THROWS_AS(parse_config("[model]\nalpha = 0.2\nbogus = 1\n", "x.ini"), ConfigError);
    try {
        parse_config("[model]\nbogus = 1\n", "x.ini");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("x.ini") == 0);
    }
    CHECK_THROWS_AS(parse_config("alpha = 0.2\n"), ConfigError);
}

TEST_CASE("partial files keep defaults for missing keys")
{
    const RunConfig c = parse_config("[train]\nepochs = 3\n\n[model]\nvariant = att1\n");
    CHECK(c.train.epochs == 3);
    CHECK(c.model.variant == Variant::Att1);
    CHECK(c.train.batch_size == default_run_config().train.batch_size);
    CHECK(c.data.num_categories == 24);
}

TEST_CASE("read_config reports missing files as IoError")
{
    CHECK_THROWS_AS(read_config("/nonexistent/a3m/config.ini"), IoError);
    const fs::path p = fs::temp_directory_path() / "a3m_test_config.ini";
    RunConfig c = default_run_config();
    c.model.beta = 0.9;
    write_text(p, format_config(c));
    CHECK(read_config(p).model.beta == 0.9);
}

TEST_CASE("eval mode names")
{
    for (auto m : {EvalMode::Classify, EvalMode::Reid, EvalMode::Retrieval})
        CHECK(parse_eval_mode(eval_mode_name(m)) == m);
    CHECK_THROWS_AS(parse_eval_mode("ranking"), ConfigError);
}

TEST_CASE("format_double gives the shortest text that parses back")
{
    for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5, 0.0, 123456789.0}) {
        const std::string s = format_double(v);
        double back = 0;
        std::from_chars(s.data(), s.data() + s.size(), back);
        CHECK(back == v);
    }
    CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("min-max normalization; constant maps go to zero")
{
    RowMat m(2, 2);
    m << 1, 3, 5, 9;
    const RowMat n = normalize_minmax(m);
    CHECK(n(0, 0) == 0.0);
    CHECK(n(1, 1) == 1.0);
    CHECK(n(0, 1) == 0.25);
    CHECK(normalize_minmax(RowMat::Constant(3, 3, 0.7)).isZero());
}

TEST_CASE("PGM bytes: header then one rounded byte per cell")
{
    RowMat m(2, 3);
    m << 0.0, 0.5, 1.0, 0.2, 0.8, 1.0;
    const std::string pgm = format_pgm(m);
    const std::string header = "P5\n3 2\n255\n";
    REQUIRE(pgm.size() == header.size() + 6);
    CHECK(pgm.substr(0, header.size()) == header);
    const auto* px = reinterpret_cast<const unsigned char*>(pgm.data() + header.size());
    CHECK(px[0] == 0);
    CHECK(px[1] == 128);
    CHECK(px[2] == 255);
    CHECK(px[3] == 51);
    CHECK(px[4] == 204);
    const std::string flat = format_pgm(normalize_minmax(RowMat::Constant(2, 2, 4.0)));
    CHECK(flat.substr(flat.size() - 4) == std::string(4, '\0'));
}

TEST_CASE("grid CSV and loss curve text")
{
    RowMat m(2, 2);
    m << 0.25, 1, -3, 0.1;
    CHECK(format_grid_csv(m) == "0.25,1\n-3,0.1\n");
    CHECK(format_loss_curve({2.5, 1.25}) == "epoch,loss\n1,2.5\n2,1.25\n");
    CHECK_THROWS_AS(write_text("/nonexistent/a3m/x.txt", "x"), IoError);
}
