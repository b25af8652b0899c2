#include "dehaze/cli.hpp"

#include "support.hpp"

#include <doctest.h>

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>

using namespace dehaze;
using dehaze::testing::TempDir;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run(std::vector<std::string> args)
{
    args.push_back("-q");
    return cli::run(args);
}

const std::vector<std::string> kSmallModel{
    "--set", "model.backbone.tiny_widths=[4,6,8]", "--set", "model.backbone.aggregate_width=6",
    "--set", "model.heads.hidden=4",               "--set", "model.fusion.hidden=4",
};

std::vector<std::string> with_small_model(std::vector<std::string> args)
{
    args.insert(args.end(), kSmallModel.begin(), kSmallModel.end());
    return args;
}

json read_json(const fs::path& p)
{
    std::ifstream in(p);
    return json::parse(in);
}

std::vector<json> read_jsonl(const fs::path& p)
{
    std::ifstream in(p);
    std::vector<json> out;
    std::string line;
    while (std::getline(in, line))
        out.push_back(json::parse(line));
    return out;
}

} // namespace

TEST_CASE("synth, train, eval and dehaze work end to end")
{
    TempDir dir;
    const std::string data = (dir / "data").string();
    REQUIRE(run({"synth", "--n", "5", "--size", "32", "--seed", "3", "--out", data}) == cli::kExitOk);
    CHECK(fs::exists(dir / "data/hazy/synth_0004.png"));
    CHECK(fs::exists(dir / "data/clear/synth_0004.png"));
    CHECK(read_jsonl(dir / "data/haze_params.jsonl").size() == 5);

    const std::string run_dir = (dir / "train").string();
    REQUIRE(run(with_small_model({"train", "--data", data, "--heldout", "2", "--iters", "4", "--batch", "2", "--crop",
                                  "32", "--eval-every", "2", "--out", run_dir, "--seed", "1"})) == cli::kExitOk);
    CHECK(fs::exists(dir / "train/final.ckpt"));
    CHECK(fs::exists(dir / "train/train.log"));
    const json config = read_json(dir / "train/config.json");
    CHECK(config["trainer.max_iters"] == 4);
    CHECK(config["trainer.seed"] == 1);
    const json manifest = read_json(dir / "train/manifest.json");
    CHECK(manifest["command"] == "train");
    CHECK(manifest["summary"]["exit_code"] == 0);

    const std::string ckpt = (dir / "train/final.ckpt").string();
    const std::string eval_dir = (dir / "eval").string();
    REQUIRE(run({"eval", "--checkpoint", ckpt, "--data", data, "--out", eval_dir}) == cli::kExitOk);
    const auto rows = read_jsonl(dir / "eval/report.jsonl");
    REQUIRE(rows.size() == 6);
    CHECK(rows.back()["type"] == "summary");
    CHECK(fs::exists(dir / "eval/predictions/synth_0000.png"));
    CHECK(fs::exists(dir / "eval/report.txt"));

    CHECK(run({"eval", "--identity", "--data", data, "--out", (dir / "identity").string()}) == cli::kExitOk);
    CHECK(run({"eval", "--pred", (dir / "eval/predictions").string(), "--gt", data + "/clear", "--out",
               (dir / "pairs").string()}) == cli::kExitOk);
    CHECK(run({"eval", "--checkpoint", ckpt, "--variant", "DM2F", "--data", data, "--out",
               (dir / "mismatch").string()}) == cli::kExitUsage);

    REQUIRE(run({"dehaze", "--checkpoint", ckpt, "--input", data + "/hazy", "--dump-attention", "--out",
                 (dir / "dehazed").string()}) == cli::kExitOk);
    CHECK(fs::exists(dir / "dehazed/synth_0002.png"));
    CHECK(fs::exists(dir / "dehazed/attention/synth_0002_SIN.png"));
    CHECK_FALSE(fs::exists(dir / "dehazed/attention/synth_0002_LOG.png"));

    fs::create_directories(dir / "empty");
    CHECK(run({"dehaze", "--checkpoint", ckpt, "--input", (dir / "empty").string(), "--out",
               (dir / "none").string()}) == cli::kExitUsage);
    std::ofstream(dir / "data/hazy/broken.png") << "not an image";
    CHECK(run({"dehaze", "--checkpoint", ckpt, "--input", data + "/hazy", "--out", (dir / "partial").string()}) ==
          cli::kExitRuntime);
    CHECK(fs::exists(dir / "partial/synth_0000.png"));
}

TEST_CASE("ablate emits one row per requested preset")
{
    TempDir dir;
    REQUIRE(run(with_small_model({"ablate", "--synthetic", "3", "--synthetic-size", "32", "--heldout", "1", "--iters",
                                  "2", "--batch", "1", "--crop", "32", "--only", "CL2S,FD-J1,4", "--out",
                                  dir.path().string()})) == cli::kExitOk);
    const auto rows = read_jsonl(dir / "ablation.jsonl");
    REQUIRE(rows.size() == 2);
    CHECK(rows[0]["variant"] == "CL2S");
    CHECK(rows[1]["variant"] == "FD-J1,4");
    for (const auto& row : rows) {
        CHECK(row["status"] == "ok");
        CHECK(std::isfinite(row["psnr"].get<double>()));
    }
    CHECK(run({"ablate", "--variant", "CL2S", "--synthetic", "2", "--out", (dir / "x").string()}) ==
          cli::kExitUsage);
}

TEST_CASE("configuration sources follow their precedence")
{
    TempDir dir;
    std::ofstream(dir / "cfg.json") << R"({"trainer": {"max_iters": 3, "batch_size": 1, "crop": 32, "lr0": 1e-3},
                                         "data.synthetic": 2, "data.synthetic_size": 32})";
    ::setenv("DEHAZEKIT_TRAINER_LR0", "5e-4", 1);
    const int code = run(with_small_model({"train", "--config", (dir / "cfg.json").string(), "--iters", "2", "--set",
                                           "trainer.batch_size=2", "--out", (dir / "run").string()}));
    ::unsetenv("DEHAZEKIT_TRAINER_LR0");
    REQUIRE(code == cli::kExitOk);
    const json config = read_json(dir / "run/config.json");
    CHECK(config["trainer.max_iters"] == 2);
    CHECK(config["trainer.batch_size"] == 2);
    CHECK(config["trainer.crop"] == 32);
    CHECK(config["trainer.lr0"] == 5e-4);
}

TEST_CASE("usage and configuration errors exit with status 2")
{
    TempDir dir;
    const std::string out = dir.path().string();
    CHECK(run({}) == cli::kExitUsage);
    CHECK(run({"frobnicate"}) == cli::kExitUsage);
    CHECK(run({"train", "--set", "trainer.nope=1", "--synthetic", "2", "--out", out}) == cli::kExitUsage);
    CHECK(run({"train", "--set", "novalue", "--synthetic", "2", "--out", out}) == cli::kExitUsage);
    CHECK(run({"train", "--device", "cuda", "--synthetic", "2", "--out", out}) == cli::kExitUsage);
    CHECK(run({"train", "--variant", "CL2S", "--heads", "AS,MUL", "--synthetic", "2", "--out", out}) ==
          cli::kExitUsage);
    CHECK(run({"train", "--variant", "FD-J9", "--synthetic", "2", "--out", out}) == cli::kExitUsage);
    CHECK(run({"train", "--out", out}) == cli::kExitUsage);
    CHECK(run({"train", "--data", (dir / "missing").string(), "--out", out}) == cli::kExitUsage);
    CHECK(run({"eval", "--out", out}) == cli::kExitUsage);
    CHECK(run({"synth", "--n", "2", "--size", "4", "--out", out}) == cli::kExitUsage);
    CHECK(run({"train", "--help"}) == cli::kExitOk);
}
