#include "dehaze/cli.hpp"

#include "dehaze/checkpoint.hpp"
#include "dehaze/config.hpp"
#include "dehaze/image_io.hpp"
#include "dehaze/trainer.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdio>
#include <deque>
#include <fstream>
#include <iostream>
#include <mutex>

namespace dehaze::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Raised for command-line misuse detected after parsing.
class UsageError : public Error {
public:
    using Error::Error;
};

struct Flag {
    std::string key;
    std::string value;
    CLI::Option* option = nullptr;
};

struct Options {
    std::string config;
    std::string out;
    std::string variant;
    std::string heads;
    std::string device = "cpu";
    std::uint64_t seed = 0;
    CLI::Option* seed_opt = nullptr;
    std::vector<std::string> sets;
    bool verbose = false;
    bool quiet = false;
    // Flags mapped one-to-one onto config keys; a deque keeps the bound
    // value addresses stable.
    std::deque<Flag> mapped;

    // eval / dehaze
    std::string checkpoint;
    bool identity = false;
    std::string pred_dir;
    std::string gt_dir;
    std::string input_dir;
    bool dump_attention = false;
    // synth
    int synth_n = -1;
    int synth_size = 128;
    // ablate
    std::string only;
};

void add_common(CLI::App& sub, Options& o)
{
    sub.add_option("--config", o.config, "Flat dotted-key JSON config file");
    sub.add_option("--seed", o.seed, "Seed for data, initialisation and sampling");
    sub.add_option("--out", o.out, "Run directory (default runs/<command>)");
    sub.add_option("--variant", o.variant, "Preset name (CL2S, DM2F, FDNet, FD-AS, FD-J1, FD-J2, FD-J3, FD-J1,4)");
    sub.add_option("--heads", o.heads, "Comma separated head list, e.g. AS,MUL,ADD,EXP,SIN");
    sub.add_option("--device", o.device, "Compute device (cpu)")->capture_default_str();
    sub.add_option("--set", o.sets, "Config override key=value (repeatable)");
    sub.add_flag("-v,--verbose", o.verbose, "Debug logging");
    sub.add_flag("-q,--quiet", o.quiet, "Warnings and errors only");
}

void map_flag(CLI::App& sub, Options& o, const std::string& name, const std::string& key, const std::string& type,
              const std::string& help)
{
    o.mapped.push_back({key, {}, nullptr});
    o.mapped.back().option = sub.add_option(name, o.mapped.back().value, help)->type_name(type);
}

void add_data(CLI::App& sub, Options& o)
{
    map_flag(sub, o, "--data", "data.root", "PATH", "Dataset root directory");
    map_flag(sub, o, "--layout", "data.layout", "LAYOUT", "RESIDE_ITS, RESIDE_SOTS, OHAZE, HAZERD or FLAT_PAIRS");
    map_flag(sub, o, "--split", "data.split", "SPLIT", "all, train or test (OHAZE only)");
    map_flag(sub, o, "--synthetic", "data.synthetic", "INT", "Generate this many synthetic training pairs");
    map_flag(sub, o, "--synthetic-size", "data.synthetic_size", "INT", "Side length of synthetic images");
    map_flag(sub, o, "--heldout", "data.heldout", "INT", "Pairs held out for evaluation");
}

void add_training(CLI::App& sub, Options& o)
{
    map_flag(sub, o, "--iters", "trainer.max_iters", "INT", "Optimizer steps");
    map_flag(sub, o, "--batch", "trainer.batch_size", "INT", "Batch size");
    map_flag(sub, o, "--crop", "trainer.crop", "INT", "Square training crop");
    map_flag(sub, o, "--lr0", "trainer.lr0", "FLOAT", "Initial learning rate");
    map_flag(sub, o, "--aux-weight", "trainer.aux_weight", "FLOAT", "Weight of the per-component L1 term");
    map_flag(sub, o, "--clip-grad", "trainer.clip_grad", "BOOL", "Enable global-norm gradient clipping (true/false)");
    map_flag(sub, o, "--log-every", "trainer.log_every", "INT", "Logging interval");
    map_flag(sub, o, "--checkpoint-every", "trainer.checkpoint_every", "INT", "Periodic checkpoint interval (0: off)");
    map_flag(sub, o, "--eval-every", "trainer.eval_every", "INT", "Held-out evaluation interval (0: off)");
}

void setup_logging(const Options& o)
{
    static std::once_flag once;
    std::call_once(once, [] { spdlog::set_default_logger(spdlog::stderr_color_mt("dehazekit")); });
    spdlog::set_level(o.verbose ? spdlog::level::debug : o.quiet ? spdlog::level::warn : spdlog::level::info);
}

void check_device(const Options& o)
{
    if (o.device != "cpu")
        throw UsageError("unsupported device '" + o.device + "' (only cpu is available)");
}

// Defaults < config file < DEHAZEKIT_* environment < command-line flags.
TrainConfig resolve_train_config(const Options& o)
{
    json flat = json::object();
    if (!o.config.empty())
        flat.update(read_config_file(o.config));
    flat.update(environment_overrides());
    for (const auto& f : o.mapped) {
        if (f.option && f.option->count() > 0)
            flat[f.key] = f.value;
    }
    if (!o.variant.empty() && !o.heads.empty())
        throw UsageError("--variant and --heads are mutually exclusive");
    if (!o.variant.empty())
        flat["trainer.variant"] = o.variant;
    if (!o.heads.empty())
        flat["trainer.variant"] = o.heads;
    if (o.seed_opt->count() > 0) {
        flat["trainer.seed"] = o.seed;
        flat["model.init_seed"] = o.seed;
    }
    for (const auto& s : o.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0)
            throw UsageError("--set expects key=value, got '" + s + "'");
        flat[s.substr(0, eq)] = s.substr(eq + 1);
    }
    TrainConfig cfg;
    apply_config(cfg, flat);
    cfg.max_iters = cfg.resolved_max_iters();
    cfg.out_dir = o.out;
    validate(cfg);
    return cfg;
}

void write_json(const fs::path& path, const json& value)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot write " + path.string());
    out << value.dump(2) << '\n';
}

struct Manifest {
    std::string command;
    std::vector<std::string> args;
    json outputs = json::array();
    json summary = json::object();

    void add(const fs::path& path) { outputs.push_back(path.generic_string()); }

    void write(const fs::path& dir) const
    {
        write_json(dir / "manifest.json",
                   {{"command", command}, {"args", args}, {"outputs", outputs}, {"summary", summary}});
    }
};

std::string dir_name(const std::string& variant)
{
    std::string s = variant;
    for (char& c : s) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_')
            c = '_';
    }
    return s;
}

int cmd_train(const Options& o, Manifest& manifest)
{
    const TrainConfig cfg = resolve_train_config(o);
    resolve_variant(cfg.variant);
    auto [train_set, heldout] = resolve_datasets(cfg.data, cfg.seed);
    fs::create_directories(cfg.out_dir);
    write_json(cfg.out_dir / "config.json", to_flat_json(cfg));
    manifest.add(cfg.out_dir / "config.json");
    spdlog::info("training {} on {} samples ({} held out) for {} iterations", cfg.variant, train_set.size(),
                 heldout.size(), cfg.resolved_max_iters());

    const TrainResult result = train(cfg, train_set, heldout);
    manifest.add(cfg.out_dir / "train.log");
    manifest.add(result.final_checkpoint);
    if (!result.best_checkpoint.empty())
        manifest.add(result.best_checkpoint);
    manifest.summary = {{"variant", cfg.variant},
                        {"iterations", cfg.resolved_max_iters()},
                        {"final_loss", result.losses.back()},
                        {"parameters", result.model.parameters().count()}};
    if (result.best_psnr)
        manifest.summary["best_psnr"] = *result.best_psnr;
    std::cout << "final checkpoint: " << result.final_checkpoint.string() << '\n';
    return kExitOk;
}

void emit_report(const fs::path& out, const MetricsReport& report, Manifest& manifest)
{
    write_report_jsonl(out / "report.jsonl", report);
    manifest.add(out / "report.jsonl");
    print_report(std::cout, report);
    std::ofstream txt(out / "report.txt");
    print_report(txt, report);
    manifest.add(out / "report.txt");
    manifest.summary["count"] = report.count();
    manifest.summary["mean_psnr"] = report.mean_psnr;
    manifest.summary["mean_ssim"] = report.mean_ssim;
    manifest.summary["mean_ciede2000"] = report.mean_ciede2000;
    manifest.summary["skipped"] = report.skipped.size();
}

int cmd_eval(const Options& o, Manifest& manifest)
{
    const fs::path out = o.out;
    if (!o.pred_dir.empty() || !o.gt_dir.empty()) {
        if (o.pred_dir.empty() || o.gt_dir.empty())
            throw UsageError("--pred and --gt must be given together");
        fs::create_directories(out);
        write_json(out / "config.json", {{"eval.pred", o.pred_dir}, {"eval.gt", o.gt_dir}});
        manifest.add(out / "config.json");
        emit_report(out, evaluate_pairs(o.pred_dir, o.gt_dir), manifest);
        return kExitOk;
    }

    if (!o.identity) {
        if (o.checkpoint.empty())
            throw UsageError("eval needs --checkpoint (or --identity, or --pred/--gt)");
        if (!fs::exists(o.checkpoint))
            throw UsageError("checkpoint " + o.checkpoint + " does not exist");
    }
    const TrainConfig cfg = resolve_train_config(o);
    auto [train_set, heldout] = resolve_datasets(cfg.data, cfg.seed);
    const Dataset& data = heldout.empty() ? train_set : heldout;
    fs::create_directories(out);
    json config = to_flat_json(cfg);
    config["eval.checkpoint"] = o.checkpoint;
    config["eval.identity"] = o.identity;
    write_json(out / "config.json", config);
    manifest.add(out / "config.json");

    const MetricsReport baseline = evaluate_identity(data);
    MetricsReport report;
    if (o.identity) {
        report = baseline;
    } else {
        LoadedCheckpoint loaded = load_checkpoint(o.checkpoint);
        if (!o.variant.empty() || !o.heads.empty()) {
            const auto wanted = resolve_variant(o.variant.empty() ? o.heads : o.variant);
            if (wanted.active_kinds != loaded.model.kinds())
                throw ConfigError("incompatible checkpoint: " + o.checkpoint + " holds " + loaded.model.spec().name +
                                  ", requested " + wanted.name);
        }
        for (std::size_t i = 0; i < data.size(); ++i) {
            const PairedSample s = data.get(i);
            const Image pred = dehaze_image(loaded.model, s.hazy).image;
            const fs::path file = out / "predictions" / (s.id + ".png");
            write_png(file, pred);
            manifest.add(file);
            report.images.push_back(measure(s.id, pred, s.clear));
        }
        report.finalize();
    }
    report.skipped = data.skipped();
    emit_report(out, report, manifest);
    manifest.summary["hazy_baseline_psnr"] = baseline.mean_psnr;
    std::printf("hazy baseline PSNR: %.4f dB\n", baseline.mean_psnr);
    return kExitOk;
}

int cmd_dehaze(const Options& o, Manifest& manifest)
{
    if (o.checkpoint.empty() || !fs::exists(o.checkpoint))
        throw UsageError("dehaze needs an existing --checkpoint");
    if (o.input_dir.empty() || !fs::is_directory(o.input_dir))
        throw UsageError("dehaze needs an existing --input directory");
    std::vector<fs::path> inputs;
    for (const auto& entry : fs::directory_iterator(o.input_dir)) {
        if (entry.is_regular_file() && is_image_file(entry.path()))
            inputs.push_back(entry.path());
    }
    std::sort(inputs.begin(), inputs.end());
    if (inputs.empty())
        throw UsageError("no images found in " + o.input_dir);

    const LoadedCheckpoint loaded = load_checkpoint(o.checkpoint);
    const fs::path out = o.out;
    fs::create_directories(out);
    write_json(out / "config.json", {{"dehaze.checkpoint", o.checkpoint},
                                     {"dehaze.input", o.input_dir},
                                     {"dehaze.dump_attention", o.dump_attention},
                                     {"model.variant", loaded.model.spec().name}});
    manifest.add(out / "config.json");
    const auto kinds = loaded.model.kinds();
    std::size_t failed = 0;
    for (const auto& path : inputs) {
        try {
            const Image hazy = read_image(path);
            const DehazeResult result = dehaze_image(loaded.model, hazy, o.dump_attention);
            const std::string stem = path.stem().string();
            write_png(out / (stem + ".png"), result.image);
            manifest.add(out / (stem + ".png"));
            for (std::size_t k = 0; k < result.attention.size(); ++k) {
                const fs::path map = out / "attention" / (stem + "_" + std::string(to_string(kinds[k])) + ".png");
                write_png(map, result.attention[k]);
                manifest.add(map);
            }
        } catch (const Error& e) {
            ++failed;
            spdlog::warn("skipping {}: {}", path.string(), e.what());
        }
    }
    manifest.summary = {{"inputs", inputs.size()}, {"written", inputs.size() - failed}, {"failed", failed}};
    std::printf("dehazed %zu of %zu images (%zu failed)\n", inputs.size() - failed, inputs.size(), failed);
    return failed == 0 ? kExitOk : kExitRuntime;
}

int cmd_synth(const Options& o, Manifest& manifest)
{
    if (o.synth_n < 1)
        throw UsageError("synth needs --n >= 1");
    if (o.synth_size < 16)
        throw UsageError("synth needs --size >= 16");
    const Dataset data = make_synthetic_set(o.synth_n, o.synth_size, o.seed);
    const fs::path out = o.out;
    fs::create_directories(out);
    write_json(out / "config.json", {{"synth.n", o.synth_n}, {"synth.size", o.synth_size}, {"synth.seed", o.seed}});
    manifest.add(out / "config.json");
    std::ofstream params(out / "haze_params.jsonl");
    if (!params)
        throw IoError("cannot write " + (out / "haze_params.jsonl").string());
    for (std::size_t i = 0; i < data.size(); ++i) {
        const PairedSample s = data.get(i);
        write_png(out / "hazy" / (s.id + ".png"), s.hazy);
        write_png(out / "clear" / (s.id + ".png"), s.clear);
        params << json{{"id", s.id}, {"light", s.haze->light}, {"beta", s.haze->beta}}.dump() << '\n';
    }
    manifest.add(out / "hazy");
    manifest.add(out / "clear");
    manifest.add(out / "haze_params.jsonl");
    manifest.summary = {{"pairs", data.size()}, {"layout", "FLAT_PAIRS"}};
    std::printf("wrote %zu pairs to %s\n", data.size(), out.string().c_str());
    return kExitOk;
}

int cmd_ablate(const Options& o, Manifest& manifest)
{
    if (!o.variant.empty() || !o.heads.empty())
        throw UsageError("ablate runs presets; use --only to select them");
    std::vector<std::string> names = o.only.empty() ? preset_names() : split_preset_list(o.only);
    for (auto& name : names)
        name = preset(name).name;
    const TrainConfig base = resolve_train_config(o);
    auto [train_set, heldout] = resolve_datasets(base.data, base.seed);
    const Dataset& eval_set = heldout.empty() ? train_set : heldout;
    if (heldout.empty())
        spdlog::warn("no held-out samples; ablation rows are measured on the training set");
    const fs::path out = o.out;
    fs::create_directories(out);
    write_json(out / "config.json", to_flat_json(base));
    manifest.add(out / "config.json");

    json rows = json::array();
    std::size_t ok = 0;
    std::printf("%-10s %10s %10s %10s\n", "variant", "PSNR", "SSIM", "CIEDE2000");
    for (const auto& name : names) {
        TrainConfig cfg = base;
        cfg.variant = name;
        cfg.out_dir = out / dir_name(name);
        json row = {{"variant", name}};
        try {
            const TrainResult result = train(cfg, train_set, heldout);
            const MetricsReport report = evaluate_model(result.model, eval_set);
            row["psnr"] = report.mean_psnr;
            row["ssim"] = report.mean_ssim;
            row["ciede2000"] = report.mean_ciede2000;
            row["parameters"] = result.model.parameters().count();
            row["status"] = "ok";
            std::printf("%-10s %10.4f %10.6f %10.4f\n", name.c_str(), report.mean_psnr, report.mean_ssim,
                        report.mean_ciede2000);
            ++ok;
        } catch (const std::exception& e) {
            row["status"] = "failed";
            row["error"] = e.what();
            std::printf("%-10s %10s %10s %10s\n", name.c_str(), "failed", "-", "-");
            spdlog::error("{} failed: {}", name, e.what());
        }
        std::fflush(stdout);
        rows.push_back(row);
    }
    std::ofstream report(out / "ablation.jsonl");
    for (const auto& row : rows)
        report << row.dump() << '\n';
    if (!report)
        throw IoError("cannot write " + (out / "ablation.jsonl").string());
    manifest.add(out / "ablation.jsonl");
    manifest.summary = {{"rows", rows.size()}, {"succeeded", ok}};
    return ok == 0 ? kExitRuntime : kExitOk;
}

} // namespace

int run(const std::vector<std::string>& args)
{
    CLI::App app{"Single-image dehazing toolkit: training, evaluation, inference and ablations", "dehazekit"};
    app.require_subcommand(1);
    Options o;

    auto* train_cmd = app.add_subcommand("train", "Train a variant and write checkpoints");
    add_common(*train_cmd, o);
    add_data(*train_cmd, o);
    add_training(*train_cmd, o);

    auto* eval_cmd = app.add_subcommand("eval", "Measure PSNR, SSIM and CIEDE2000 on a paired set");
    add_common(*eval_cmd, o);
    add_data(*eval_cmd, o);
    eval_cmd->add_option("--checkpoint", o.checkpoint, "Checkpoint to evaluate");
    eval_cmd->add_flag("--identity", o.identity, "Score the hazy inputs themselves");
    eval_cmd->add_option("--pred", o.pred_dir, "Directory of predictions to score against --gt");
    eval_cmd->add_option("--gt", o.gt_dir, "Ground-truth directory for --pred");

    auto* dehaze_cmd = app.add_subcommand("dehaze", "Dehaze a directory of images");
    add_common(*dehaze_cmd, o);
    dehaze_cmd->add_option("--checkpoint", o.checkpoint, "Checkpoint to run")->required();
    dehaze_cmd->add_option("--input", o.input_dir, "Directory of hazy images")->required();
    dehaze_cmd->add_flag("--dump-attention", o.dump_attention, "Also write per-component weight maps");

    auto* synth_cmd = app.add_subcommand("synth", "Write a seeded synthetic paired dataset (FLAT_PAIRS layout)");
    synth_cmd->add_option("--n", o.synth_n, "Number of pairs")->required();
    synth_cmd->add_option("--size", o.synth_size, "Image side length")->capture_default_str();
    synth_cmd->add_option("--seed", o.seed, "Generation seed");
    synth_cmd->add_option("--out", o.out, "Output directory (default runs/synth)");
    synth_cmd->add_flag("-q,--quiet", o.quiet, "Warnings and errors only");

    auto* ablate_cmd = app.add_subcommand("ablate", "Train and score every ablation preset under one budget");
    add_common(*ablate_cmd, o);
    add_data(*ablate_cmd, o);
    add_training(*ablate_cmd, o);
    ablate_cmd->add_option("--only", o.only, "Comma separated subset of presets");

    std::vector<std::string> argv_rev(args.rbegin(), args.rend());
    try {
        app.parse(argv_rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    CLI::App* sub = app.get_subcommands().front();
    o.seed_opt = sub->get_option("--seed");
    if (o.out.empty())
        o.out = "runs/" + sub->get_name();
    setup_logging(o);

    Manifest manifest;
    manifest.command = sub->get_name();
    manifest.args = args;
    try {
        check_device(o);
        int code = kExitRuntime;
        if (sub == train_cmd)
            code = cmd_train(o, manifest);
        else if (sub == eval_cmd)
            code = cmd_eval(o, manifest);
        else if (sub == dehaze_cmd)
            code = cmd_dehaze(o, manifest);
        else if (sub == synth_cmd)
            code = cmd_synth(o, manifest);
        else if (sub == ablate_cmd)
            code = cmd_ablate(o, manifest);
        manifest.summary["exit_code"] = code;
        manifest.write(o.out);
        return code;
    } catch (const UsageError& e) {
        spdlog::error("{}", e.what());
        return kExitUsage;
    } catch (const ConfigError& e) {
        spdlog::error("{}", e.what());
        return kExitUsage;
    } catch (const ValidationError& e) {
        spdlog::error("{}", e.what());
        return kExitUsage;
    } catch (const IoError& e) {
        spdlog::error("{}", e.what());
        return kExitUsage;
    } catch (const fs::filesystem_error& e) {
        spdlog::error("{}", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kExitRuntime;
    }
}

int run(int argc, const char* const* argv)
{
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i)
        args.emplace_back(argv[i]);
    return run(args);
}

} // namespace dehaze::cli
