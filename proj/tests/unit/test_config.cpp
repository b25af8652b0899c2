#include "dehaze/config.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cstdlib>
#include <fstream>

using namespace dehaze;
using nlohmann::json;
using dehaze::testing::TempDir;

TEST_CASE("flat config round-trips every key")
{
    TrainConfig cfg;
    cfg.max_iters = 300;
    cfg.lr0 = 1e-3;
    cfg.data.synthetic = 64;
    cfg.data.layout = DatasetLayout::OHaze;
    cfg.model.heads.divide_by_t = true;
    cfg.model.backbone.tiny_widths = {8, 16, 32};
    const json flat = to_flat_json(cfg);
    CHECK(flat.size() == config_keys().size());
    TrainConfig back;
    apply_config(back, flat);
    CHECK(to_flat_json(back) == flat);
    CHECK(back.model == cfg.model);
    CHECK(back.data == cfg.data);
    CHECK(flat["data.layout"] == "OHAZE");
}

TEST_CASE("unknown keys and wrong types are configuration errors")
{
    TrainConfig cfg;
    CHECK_THROWS_WITH_AS(apply_config(cfg, json{{"trainer.learning_rate", 1}}), doctest::Contains("unknown config key"),
                         ConfigError);
    CHECK_THROWS_AS(apply_config(cfg, json{{"trainer.max_iters", "many"}}), ConfigError);
    CHECK_THROWS_AS(apply_config(cfg, json{{"trainer.max_iters", 1.5}}), ConfigError);
    CHECK_THROWS_AS(apply_config(cfg, json{{"trainer.flip", 1}}), ConfigError);
    CHECK_THROWS_AS(apply_config(cfg, json{{"trainer.seed", -3}}), ConfigError);
    CHECK_THROWS_AS(apply_config(cfg, json{{"data.layout", "imagenet"}}), ConfigError);
    CHECK_THROWS_AS(apply_config(cfg, json::array()), ConfigError);
}

TEST_CASE("string values reach numeric and boolean fields")
{
    TrainConfig cfg;
    apply_config(cfg, json{{"trainer.max_iters", "300"}, {"trainer.clip_grad", "true"}, {"trainer.lr0", "5e-4"},
                           {"model.backbone.tiny_widths", "[4, 8, 12]"}});
    CHECK(cfg.max_iters == 300);
    CHECK(cfg.clip_grad);
    CHECK(cfg.lr0 == 5e-4);
    CHECK(cfg.model.backbone.tiny_widths == std::vector<int>{4, 8, 12});
}

TEST_CASE("profile is applied before the other backbone keys")
{
    TrainConfig cfg;
    apply_config(cfg, json{{"model.backbone.aggregate_width", 64}, {"model.backbone.profile", "full"}});
    CHECK(cfg.model.backbone.profile == BackboneProfile::Full);
    CHECK(cfg.model.backbone.aggregate_width == 64);
    apply_config(cfg, json{{"model.backbone.profile", "tiny"}});
    CHECK(cfg.model.backbone == BackboneConfig::tiny());
}

TEST_CASE("config files may be nested or flat")
{
    TempDir dir;
    std::ofstream(dir / "nested.json") << R"({"trainer": {"batch_size": 4, "crop": 128}, "data.synthetic": 8})";
    const json flat = read_config_file(dir / "nested.json");
    CHECK(flat == json{{"trainer.batch_size", 4}, {"trainer.crop", 128}, {"data.synthetic", 8}});
    std::ofstream(dir / "bad.json") << "{ nope";
    CHECK_THROWS_AS(read_config_file(dir / "bad.json"), ConfigError);
    std::ofstream(dir / "list.json") << "[1, 2]";
    CHECK_THROWS_AS(read_config_file(dir / "list.json"), ConfigError);
    CHECK_THROWS_AS(read_config_file(dir / "absent.json"), ConfigError);
}

TEST_CASE("environment overrides use upper-cased underscore names")
{
    ::setenv("DHZTEST_TRAINER_MAX_ITERS", "12", 1);
    ::setenv("DHZTEST_MODEL_HEADS_T_MIN", "0.1", 1);
    const json env = environment_overrides("DHZTEST_");
    ::unsetenv("DHZTEST_TRAINER_MAX_ITERS");
    ::unsetenv("DHZTEST_MODEL_HEADS_T_MIN");
    CHECK(env == json{{"trainer.max_iters", "12"}, {"model.heads.t_min", "0.1"}});
    TrainConfig cfg;
    apply_config(cfg, env);
    CHECK(cfg.max_iters == 12);
    CHECK(cfg.model.heads.t_min == doctest::Approx(0.1));
}
