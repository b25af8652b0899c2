#pragma once

#include "dehaze/data.hpp"
#include "dehaze/metrics.hpp"
#include "dehaze/variants.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dehaze {

/// Training aborted mid-run (non-finite loss and similar).
class TrainingError : public Error {
public:
    using Error::Error;
};

/// Where training and held-out samples come from.
struct DatasetSpec {
    /// Dataset root on disk; ignored when `synthetic` > 0.
    std::string root;
    DatasetLayout layout = DatasetLayout::FlatPairs;
    Split split = Split::All;
    /// Number of generated training pairs; 0 reads `root` instead.
    int synthetic = 0;
    int synthetic_size = 128;
    /// Samples held out for evaluation: extra generated pairs for synthetic
    /// data, otherwise the last `heldout` pairs of the loaded set.
    int heldout = 0;

    friend bool operator==(const DatasetSpec&, const DatasetSpec&) = default;
};

struct TrainConfig {
    std::string variant = "CL2S";
    ModelConfig model;
    DatasetSpec data;

    /// 0 selects the layout default: 20000 for OHAZE, 40000 otherwise.
    int max_iters = 0;
    int batch_size = 16;
    int crop = 256;
    double lr0 = 2e-4;
    double power = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.0;
    /// Weight of the mean per-component L1 term; 0 disables it.
    double aux_weight = 0.0;
    std::uint64_t seed = 0;
    bool clip_grad = false;
    double clip_norm = 5.0;
    bool flip = true;

    int log_every = 50;
    /// Periodic checkpoint interval; 0 keeps only the final (and best) one.
    int checkpoint_every = 5000;
    /// Held-out evaluation interval; 0 disables it.
    int eval_every = 2000;
    /// Held-out images used per evaluation; 0 uses all of them.
    int eval_count = 0;

    /// Run directory for logs and checkpoints; empty writes nothing.
    std::filesystem::path out_dir;

    /// max_iters after applying the layout default.
    int resolved_max_iters() const;
};

/// Throws ConfigError when an invariant (max_iters >= 1, lr0 > 0, power > 0,
/// batch_size >= 1, crop >= 1, ...) fails.
void validate(const TrainConfig& cfg);

/// lr0 (1 - iter / max_iters)^power for 0 <= iter <= max_iters; throws
/// ConfigError outside that range.
double poly_lr(long iter, const TrainConfig& cfg);

/// L1(fused, target) + aux_weight * mean_k L1(component_k, target).
nn::Var reconstruction_loss(const nn::Var& fused, const std::vector<nn::Var>& components, const nn::Var& target,
                            double aux_weight);

/// Training and held-out sets described by `spec`. Synthetic sets are seeded
/// with `seed`; the held-out set is empty when spec.heldout is 0.
std::pair<Dataset, Dataset> resolve_datasets(const DatasetSpec& spec, std::uint64_t seed);

struct TrainLogEntry {
    long iteration = 0;
    double lr = 0.0;
    double loss = 0.0;
    std::optional<double> eval_psnr;
    std::optional<double> eval_ssim;

    /// "iter=... lr=... loss=..." plus eval fields when present.
    std::string format() const;
};

struct TrainResult {
    ModelAssembly model;
    /// Loss of every optimizer step, in order.
    std::vector<double> losses;
    /// Entries emitted at the logging interval and at evaluations.
    std::vector<TrainLogEntry> log;
    std::filesystem::path final_checkpoint;
    std::filesystem::path best_checkpoint;
    std::optional<double> best_psnr;
};

using LogSink = std::function<void(const TrainLogEntry&)>;

/// Runs max_iters Adam steps with the poly schedule. Deterministic for a fixed
/// config. Throws TrainingError on a non-finite loss after dumping the batch
/// under out_dir/nonfinite_batch.
TrainResult train(const TrainConfig& cfg, const Dataset& data, const Dataset& heldout = {},
                  const LogSink& sink = {});

/// Dehazes every sample (up to `limit`, 0 for all) and measures it against its
/// clear image.
MetricsReport evaluate_model(const ModelAssembly& model, const Dataset& data, std::size_t limit = 0);

/// Metrics of the untouched hazy inputs against their clear images.
MetricsReport evaluate_identity(const Dataset& data);

} // namespace dehaze
