#pragma once

#include "dehaze/core.hpp"
#include "dehaze/nn/layers.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dehaze {

/// Forward haze model parameters: I = J t + A (1 - t), t = exp(-beta * depth).
struct HazeParams {
    std::array<double, 3> light{1.0, 1.0, 1.0};
    double beta = 1.0;
    ScalarField depth;

    ScalarField transmission() const;
};

/// Throws ValidationError when A leaves [0.7, 1], beta < 0, depth < 0 or
/// non-finite values appear.
void validate(const HazeParams& params);

struct PairedSample {
    Image hazy;
    Image clear;
    std::string id;
    /// Known generation parameters (synthetic data only).
    std::optional<HazeParams> haze;
};

enum class DatasetLayout { ResideIts, ResideSots, OHaze, HazeRd, FlatPairs };

std::string_view to_string(DatasetLayout layout);
DatasetLayout parse_layout(std::string_view text);

enum class Split { All, Train, Test };

Split parse_split(std::string_view text);

/// Directory names and the hazy-to-clear filename mapping of a layout.
struct LayoutOptions {
    std::string hazy_subdir;
    std::string clear_subdir;
    /// ECMAScript regex over the hazy file stem; capture group 1 is the clear stem.
    std::string hazy_pattern;
    /// O-HAZE: leading pairs (sorted by name) that form the training split.
    int train_count = 35;
};

LayoutOptions default_layout_options(DatasetLayout layout);

/// Indexed paired dataset backed by files or by in-memory samples. Reads of
/// distinct or equal indices may run concurrently.
class Dataset {
public:
    struct FileEntry {
        std::string id;
        std::filesystem::path hazy;
        std::filesystem::path clear;
    };

    static Dataset from_files(std::vector<FileEntry> entries, std::vector<std::string> skipped = {});
    static Dataset from_samples(std::vector<PairedSample> samples);

    std::size_t size() const;
    bool empty() const { return size() == 0; }
    const std::string& id(std::size_t i) const;
    PairedSample get(std::size_t i) const;
    std::vector<std::string> ids() const;
    /// Inputs dropped during enumeration, with reasons.
    const std::vector<std::string>& skipped() const { return skipped_; }

    /// Samples [begin, end) as a new dataset.
    Dataset slice(std::size_t begin, std::size_t end) const;

private:
    std::vector<FileEntry> files_;
    std::vector<PairedSample> samples_;
    bool in_memory_ = false;
    std::vector<std::string> skipped_;
};

/// Enumerates a dataset root in sorted, deterministic order. Unpaired images are
/// skipped with a warning; zero samples raise IoError("zero samples ...").
Dataset load_dataset(const std::filesystem::path& root, DatasetLayout layout, Split split = Split::All,
                     const std::optional<LayoutOptions>& options = std::nullopt);

Image synthesize_haze(const Image& clear, const HazeParams& params);

/// Exact inversion J = (I - A (1 - t)) / t. Throws ValidationError when any t is
/// below `t_floor`.
Image exact_dehaze_oracle(const Image& hazy, const HazeParams& params, double t_floor = 1e-3);

/// Procedural clear scenes hazed with seeded random A in [0.7, 1], beta in
/// [0.4, 1.6] and a smooth depth field spanning [0, 3]. Clear images are
/// 8-bit representable; hazy images are kept at full precision.
Dataset make_synthetic_set(int count, int size, std::uint64_t seed);

Image crop(const Image& img, int y, int x, int h, int w);
ScalarField crop(const ScalarField& field, int y, int x, int h, int w);
Image flip_horizontal(const Image& img);
ScalarField flip_horizontal(const ScalarField& field);
Image resize_image(const Image& img, int h, int w);

/// Same random window (and, when `allow_flip`, the same coin-flip mirror) on
/// both images and on any haze depth. Undersized pairs are resized whole.
PairedSample random_crop_pair(const PairedSample& sample, int size, nn::Rng& rng, bool allow_flip = true);

} // namespace dehaze
