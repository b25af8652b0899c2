#pragma once

#include "dehaze/variants.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace dehaze {

// File layout (little-endian):
//   8 bytes   magic "DHZKCKPT"
//   u32       format version
//   u64       header length in bytes
//   header    UTF-8 JSON: variant, kinds, model config, train config,
//             iteration, rng state, parameter table, probe input and output
//   payload   float32 tensors in parameter-table order
//   u64       FNV-1a hash of every preceding byte
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointExtras {
    long iteration = 0;
    /// Flat dotted-key training configuration, stored verbatim.
    nlohmann::json train_config = nlohmann::json::object();
    /// Serialized data-order RNG.
    std::string rng_state;
};

/// Writes atomically (temporary file then rename).
void save_checkpoint(const std::filesystem::path& path, const ModelAssembly& model,
                     const CheckpointExtras& extras = {});

struct LoadedCheckpoint {
    ModelAssembly model;
    CheckpointExtras extras;
};

/// Rebuilds the stored variant, restores its parameters and re-runs the
/// recorded probe. Throws IoError on unreadable, corrupted or version
/// mismatched files and Error when the probe disagrees by more than 1e-6.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Restores parameters into an existing assembly. Throws
/// ConfigError("incompatible checkpoint ...") when heads or architecture differ;
/// the model is untouched on any failure.
CheckpointExtras load_checkpoint_into(ModelAssembly& model, const std::filesystem::path& path);

/// Copies every "backbone.*" tensor of a checkpoint whose name and shape match
/// into `model`. Returns the number of tensors copied.
std::size_t load_backbone_weights(ModelAssembly& model, const std::filesystem::path& path);

/// Seeded uniform [0, 1] probe batch (1, 3, size, size).
nn::Tensor probe_input(int size, std::uint64_t seed);

/// Fused output of `model` on probe_input(size, seed), without the tape.
nn::Tensor probe_output(const ModelAssembly& model, int size, std::uint64_t seed);

} // namespace dehaze
