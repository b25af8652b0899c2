#include "dehaze/checkpoint.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>

using namespace dehaze;
using dehaze::testing::TempDir;
namespace fs = std::filesystem;

namespace {

ModelConfig small_model(std::uint64_t seed)
{
    ModelConfig cfg;
    cfg.backbone.tiny_widths = {4, 6, 8};
    cfg.backbone.aggregate_width = 6;
    cfg.heads.hidden = 4;
    cfg.fusion.hidden = 4;
    cfg.init_seed = seed;
    return cfg;
}

double max_abs_diff(const nn::Tensor& a, const nn::Tensor& b)
{
    REQUIRE(a.numel() == b.numel());
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i)
        m = std::max(m, static_cast<double>(std::abs(a[i] - b[i])));
    return m;
}

// Untrained outputs barely depend on the small initial weights; push them
// far enough apart that a failed restore is visible in the probe.
void perturb(ModelAssembly& model)
{
    nn::Rng rng(17);
    for (const auto& p : model.parameters().entries()) {
        nn::Var v = p.var;
        const nn::Tensor noise = dehaze::testing::random_tensor(v.shape(), rng, -0.3f, 0.3f);
        for (std::size_t i = 0; i < noise.numel(); ++i)
            v.mutable_value()[i] += noise[i];
    }
}

std::vector<char> read_bytes(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const std::vector<char>& bytes)
{
    std::ofstream(p, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

} // namespace

TEST_CASE("save then load reproduces the probe forward")
{
    TempDir dir;
    for (const char* name : {"CL2S", "FDNet", "FD-J1,4"}) {
        CAPTURE(name);
        const auto model = build_variant(preset(name), small_model(7));
        CheckpointExtras extras{42, nlohmann::json{{"trainer.lr0", 2e-4}}, "state"};
        const fs::path path = dir / (std::string(name) + ".ckpt");
        save_checkpoint(path, model, extras);
        CHECK_FALSE(fs::exists(path.string() + ".tmp"));

        const auto loaded = load_checkpoint(path);
        CHECK(loaded.model.kinds() == model.kinds());
        CHECK(loaded.model.config() == model.config());
        CHECK(loaded.extras.iteration == 42);
        CHECK(loaded.extras.rng_state == "state");
        CHECK(loaded.extras.train_config == extras.train_config);
        CHECK(max_abs_diff(probe_output(loaded.model, 24, 99), probe_output(model, 24, 99)) <= 1e-6);

        auto fresh = build_variant(preset(name), small_model(8));
        perturb(fresh);
        CHECK(max_abs_diff(probe_output(fresh, 16, 1), probe_output(model, 16, 1)) > 1e-6);
        load_checkpoint_into(fresh, path);
        CHECK(max_abs_diff(probe_output(fresh, 16, 1), probe_output(model, 16, 1)) <= 1e-6);
    }
}

TEST_CASE("loading into a different variant or architecture is rejected untouched")
{
    TempDir dir;
    const auto source = build_variant(preset("CL2S"), small_model(1));
    save_checkpoint(dir / "cl2s.ckpt", source);

    auto other = build_variant(preset("DM2F"), small_model(2));
    perturb(other);
    const nn::Tensor before = probe_output(other, 16, 3);
    CHECK_THROWS_WITH_AS(load_checkpoint_into(other, dir / "cl2s.ckpt"), doctest::Contains("incompatible checkpoint"),
                         ConfigError);
    CHECK(max_abs_diff(probe_output(other, 16, 3), before) == 0.0);

    ModelConfig wider = small_model(1);
    wider.backbone.aggregate_width = 10;
    auto different = build_variant(preset("CL2S"), wider);
    CHECK_THROWS_AS(load_checkpoint_into(different, dir / "cl2s.ckpt"), ConfigError);
}

TEST_CASE("corrupted, truncated and foreign files raise IoError")
{
    TempDir dir;
    const auto model = build_variant(preset("CL2S"), small_model(1));
    save_checkpoint(dir / "good.ckpt", model);
    const auto bytes = read_bytes(dir / "good.ckpt");

    auto flipped = bytes;
    flipped[flipped.size() / 2] ^= 0x5a;
    write_bytes(dir / "flipped.ckpt", flipped);
    CHECK_THROWS_WITH_AS(load_checkpoint(dir / "flipped.ckpt"), doctest::Contains("checkpoint parse error"), IoError);

    auto target = build_variant(preset("CL2S"), small_model(2));
    perturb(target);
    const nn::Tensor before = probe_output(target, 16, 3);
    CHECK_THROWS_AS(load_checkpoint_into(target, dir / "flipped.ckpt"), IoError);
    CHECK(max_abs_diff(probe_output(target, 16, 3), before) == 0.0);

    write_bytes(dir / "short.ckpt", std::vector<char>(bytes.begin(), bytes.begin() + bytes.size() / 3));
    CHECK_THROWS_AS(load_checkpoint(dir / "short.ckpt"), IoError);

    auto version = bytes;
    version[8] = 9;
    write_bytes(dir / "version.ckpt", version);
    CHECK_THROWS_AS(load_checkpoint(dir / "version.ckpt"), IoError);

    write_bytes(dir / "text.ckpt", {'h', 'e', 'l', 'l', 'o'});
    CHECK_THROWS_AS(load_checkpoint(dir / "text.ckpt"), IoError);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), IoError);
}

TEST_CASE("backbone weights transfer across variants")
{
    TempDir dir;
    const auto source = build_variant(preset("FDNet"), small_model(1));
    save_checkpoint(dir / "full.ckpt", source);
    auto target = build_variant(preset("CL2S"), small_model(2));
    const auto copied = load_backbone_weights(target, dir / "full.ckpt");
    std::size_t expected = 0;
    for (const auto& p : target.parameters().entries())
        expected += p.name.rfind("backbone.", 0) == 0 ? 1 : 0;
    CHECK(copied == expected);
    CHECK(copied > 0);
    for (const auto& p : target.parameters().entries()) {
        if (p.name.rfind("backbone.", 0) == 0)
            CHECK(max_abs_diff(p.var.value(), source.parameters().find(p.name).value()) == 0.0);
    }
}

TEST_CASE("probe input is seeded")
{
    CHECK(max_abs_diff(probe_input(16, 5), probe_input(16, 5)) == 0.0);
    CHECK(max_abs_diff(probe_input(16, 5), probe_input(16, 6)) > 0.0);
    const nn::Tensor probe = probe_input(8, 1);
    for (float v : probe.values())
        CHECK((v >= 0.0f && v <= 1.0f));
}
