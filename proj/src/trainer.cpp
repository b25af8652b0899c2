#include "dehaze/trainer.hpp"

#include "dehaze/checkpoint.hpp"
#include "dehaze/config.hpp"
#include "dehaze/image_io.hpp"
#include "dehaze/nn/optim.hpp"
#include "dehaze/tensor_image.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace dehaze {

namespace fs = std::filesystem;

int TrainConfig::resolved_max_iters() const
{
    if (max_iters != 0)
        return max_iters;
    return data.synthetic == 0 && data.layout == DatasetLayout::OHaze ? 20000 : 40000;
}

void validate(const TrainConfig& cfg)
{
    auto require = [](bool ok, const std::string& what) {
        if (!ok)
            throw ConfigError("invalid training config: " + what);
    };
    require(cfg.resolved_max_iters() >= 1, "max_iters must be >= 1");
    require(std::isfinite(cfg.lr0) && cfg.lr0 > 0.0, "lr0 must be > 0");
    require(std::isfinite(cfg.power) && cfg.power > 0.0, "power must be > 0");
    require(cfg.batch_size >= 1, "batch_size must be >= 1");
    require(cfg.crop >= 1, "crop must be >= 1");
    require(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0 && cfg.beta2 >= 0.0 && cfg.beta2 < 1.0, "Adam betas must lie in [0, 1)");
    require(cfg.weight_decay >= 0.0, "weight_decay must be >= 0");
    require(cfg.aux_weight >= 0.0, "aux_weight must be >= 0");
    require(cfg.clip_norm > 0.0, "clip_norm must be > 0");
    require(cfg.log_every >= 1, "log_every must be >= 1");
    require(cfg.checkpoint_every >= 0 && cfg.eval_every >= 0 && cfg.eval_count >= 0,
            "checkpoint_every, eval_every and eval_count must be >= 0");
    require(cfg.data.synthetic >= 0 && cfg.data.heldout >= 0, "data.synthetic and data.heldout must be >= 0");
    require(cfg.data.synthetic_size >= 1, "data.synthetic_size must be >= 1");
}

double poly_lr(long iter, const TrainConfig& cfg)
{
    const long max_iters = cfg.resolved_max_iters();
    if (iter < 0 || iter > max_iters)
        throw ConfigError("poly_lr: iteration " + std::to_string(iter) + " outside [0, " + std::to_string(max_iters) +
                          "]");
    return cfg.lr0 * std::pow(1.0 - static_cast<double>(iter) / static_cast<double>(max_iters), cfg.power);
}

nn::Var reconstruction_loss(const nn::Var& fused, const std::vector<nn::Var>& components, const nn::Var& target,
                            double aux_weight)
{
    nn::Var loss = nn::mean_abs_diff(fused, target);
    if (aux_weight == 0.0 || components.empty())
        return loss;
    nn::Var aux = nn::mean_abs_diff(components.front(), target);
    for (std::size_t k = 1; k < components.size(); ++k)
        aux = nn::add(aux, nn::mean_abs_diff(components[k], target));
    const auto scale = static_cast<float>(aux_weight / static_cast<double>(components.size()));
    return nn::add(loss, nn::affine(aux, scale, 0.0f));
}

std::pair<Dataset, Dataset> resolve_datasets(const DatasetSpec& spec, std::uint64_t seed)
{
    if (spec.synthetic > 0) {
        const Dataset all = make_synthetic_set(spec.synthetic + spec.heldout, spec.synthetic_size, seed);
        const auto n = static_cast<std::size_t>(spec.synthetic);
        return {all.slice(0, n), all.slice(n, all.size())};
    }
    if (spec.root.empty())
        throw IoError("zero samples: no dataset given (set data.root or data.synthetic)");
    const Dataset all = load_dataset(spec.root, spec.layout, spec.split);
    const auto held = static_cast<std::size_t>(spec.heldout);
    if (held >= all.size())
        throw ConfigError("data.heldout (" + std::to_string(held) + ") leaves no training samples out of " +
                          std::to_string(all.size()));
    return {all.slice(0, all.size() - held), all.slice(all.size() - held, all.size())};
}

std::string TrainLogEntry::format() const
{
    char buf[160];
    std::snprintf(buf, sizeof buf, "iter=%ld lr=%.6e loss=%.6f", iteration, lr, loss);
    std::string out = buf;
    if (eval_psnr) {
        std::snprintf(buf, sizeof buf, " eval_psnr=%.4f eval_ssim=%.6f", *eval_psnr, eval_ssim.value_or(0.0));
        out += buf;
    }
    return out;
}

MetricsReport evaluate_model(const ModelAssembly& model, const Dataset& data, std::size_t limit)
{
    MetricsReport report;
    const std::size_t n = limit == 0 ? data.size() : std::min(limit, data.size());
    for (std::size_t i = 0; i < n; ++i) {
        const PairedSample s = data.get(i);
        report.images.push_back(measure(s.id, dehaze_image(model, s.hazy).image, s.clear));
    }
    report.finalize();
    return report;
}

MetricsReport evaluate_identity(const Dataset& data)
{
    MetricsReport report;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const PairedSample s = data.get(i);
        report.images.push_back(measure(s.id, s.hazy, s.clear));
    }
    report.finalize();
    return report;
}

namespace {

std::string rng_state(const nn::Rng& rng)
{
    std::ostringstream os;
    os << rng;
    return os.str();
}

[[noreturn]] void abort_non_finite(const TrainConfig& cfg, long iter, double loss, const std::vector<PairedSample>& batch)
{
    fs::path dir = cfg.out_dir.empty() ? fs::temp_directory_path() / ("dehazekit_nonfinite_" + std::to_string(cfg.seed))
                                       : cfg.out_dir / "nonfinite_batch";
    std::string ids;
    std::ostringstream report;
    report << "iteration " << iter << " loss " << loss << "\n";
    try {
        fs::create_directories(dir);
        for (std::size_t k = 0; k < batch.size(); ++k) {
            const auto& s = batch[k];
            ids += (ids.empty() ? "" : ",") + s.id;
            std::size_t bad = 0;
            for (double v : s.hazy.data())
                bad += std::isfinite(v) ? 0 : 1;
            const auto [lo, hi] = std::minmax_element(s.hazy.data().begin(), s.hazy.data().end());
            report << k << " " << s.id << " hazy_min " << *lo << " hazy_max " << *hi << " non_finite " << bad << "\n";
            const std::string stem = std::to_string(k) + "_" + s.id;
            write_png(dir / (stem + "_hazy.png"), s.hazy);
            write_png(dir / (stem + "_clear.png"), s.clear);
        }
        std::ofstream(dir / "batch.txt") << report.str();
    } catch (const std::exception& e) {
        spdlog::error("could not write the batch dump: {}", e.what());
    }
    throw TrainingError("non-finite loss " + std::to_string(loss) + " at iteration " + std::to_string(iter) +
                        " (batch " + ids + "); batch dumped to " + dir.string());
}

} // namespace

TrainResult train(const TrainConfig& cfg, const Dataset& data, const Dataset& heldout, const LogSink& sink)
{
    validate(cfg);
    if (data.empty())
        throw IoError("zero samples: training dataset is empty");
    const VariantSpec spec = resolve_variant(cfg.variant);
    const int max_iters = cfg.resolved_max_iters();

    TrainResult result{build_variant(spec, cfg.model), {}, {}, {}, {}, std::nullopt};
    ModelAssembly& model = result.model;
    if (!cfg.model.backbone.pretrained_path.empty()) {
        const auto copied = load_backbone_weights(model, cfg.model.backbone.pretrained_path);
        spdlog::info("loaded {} backbone tensors from {}", copied, cfg.model.backbone.pretrained_path);
    }

    nn::Adam adam(model.parameters(), nn::AdamOptions{static_cast<float>(cfg.beta1), static_cast<float>(cfg.beta2),
                                                      1e-8f, static_cast<float>(cfg.weight_decay)});
    nn::Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);

    std::ofstream log_file;
    if (!cfg.out_dir.empty()) {
        fs::create_directories(cfg.out_dir);
        log_file.open(cfg.out_dir / "train.log", std::ios::trunc);
    }
    auto emit = [&](const TrainLogEntry& entry) {
        result.log.push_back(entry);
        const std::string line = entry.format();
        spdlog::info("{}", line);
        if (log_file)
            log_file << line << '\n' << std::flush;
        if (sink)
            sink(entry);
    };
    auto extras = [&](long iter) { return CheckpointExtras{iter, to_flat_json(cfg), rng_state(rng)}; };

    std::vector<std::size_t> order(data.size());
    std::size_t cursor = order.size();
    result.losses.reserve(static_cast<std::size_t>(max_iters));

    for (long iter = 1; iter <= max_iters; ++iter) {
        std::vector<PairedSample> batch;
        for (int b = 0; b < cfg.batch_size; ++b) {
            if (cursor == order.size()) {
                std::iota(order.begin(), order.end(), std::size_t{0});
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            batch.push_back(random_crop_pair(data.get(order[cursor++]), cfg.crop, rng, cfg.flip));
        }
        std::vector<Image> hazy, clear;
        for (const auto& s : batch) {
            hazy.push_back(s.hazy);
            clear.push_back(s.clear);
        }

        const double lr = poly_lr(iter - 1, cfg);
        model.parameters().zero_grad();
        const nn::Var input(images_to_tensor(hazy));
        const nn::Var target(images_to_tensor(clear));
        const ForwardResult fwd = model.forward(input);
        std::vector<nn::Var> components;
        if (cfg.aux_weight != 0.0) {
            for (const auto& c : fwd.components)
                components.push_back(c.prediction);
        }
        const nn::Var loss = reconstruction_loss(fwd.fused, components, target, cfg.aux_weight);
        const double loss_value = loss.value()[0];
        if (!std::isfinite(loss_value))
            abort_non_finite(cfg, iter, loss_value, batch);
        nn::backward(loss);
        if (cfg.clip_grad)
            nn::clip_grad_norm(model.parameters(), cfg.clip_norm);
        adam.step(static_cast<float>(lr));
        result.losses.push_back(loss_value);

        TrainLogEntry entry{iter, lr, loss_value, std::nullopt, std::nullopt};
        const bool evaluate =
            !heldout.empty() && cfg.eval_every > 0 && (iter % cfg.eval_every == 0 || iter == max_iters);
        if (evaluate) {
            const MetricsReport report = evaluate_model(model, heldout, static_cast<std::size_t>(cfg.eval_count));
            entry.eval_psnr = report.mean_psnr;
            entry.eval_ssim = report.mean_ssim;
            if (!result.best_psnr || report.mean_psnr > *result.best_psnr) {
                result.best_psnr = report.mean_psnr;
                if (!cfg.out_dir.empty()) {
                    result.best_checkpoint = cfg.out_dir / "best.ckpt";
                    save_checkpoint(result.best_checkpoint, model, extras(iter));
                }
            }
        }
        if (evaluate || iter == 1 || iter % cfg.log_every == 0 || iter == max_iters)
            emit(entry);
        if (!cfg.out_dir.empty() && cfg.checkpoint_every > 0 && iter % cfg.checkpoint_every == 0 && iter != max_iters) {
            char name[32];
            std::snprintf(name, sizeof name, "iter_%07ld.ckpt", iter);
            save_checkpoint(cfg.out_dir / "checkpoints" / name, model, extras(iter));
        }
    }

    if (!cfg.out_dir.empty()) {
        result.final_checkpoint = cfg.out_dir / "final.ckpt";
        save_checkpoint(result.final_checkpoint, model, extras(max_iters));
    }
    return result;
}

} // namespace dehaze
