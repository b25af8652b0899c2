#include "dehaze/data.hpp"

#include "dehaze/image_io.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <regex>

namespace dehaze {

namespace fs = std::filesystem;

ScalarField HazeParams::transmission() const
{
    ScalarField t(depth.height, depth.width);
    for (std::size_t i = 0; i < t.values.size(); ++i)
        t.values[i] = std::exp(-beta * depth.values[i]);
    return t;
}

void validate(const HazeParams& params)
{
    for (double a : params.light) {
        if (!(a >= 0.7 && a <= 1.0))
            throw ValidationError("haze params: atmospheric light " + std::to_string(a) + " outside [0.7, 1]");
    }
    if (!(params.beta >= 0.0) || !std::isfinite(params.beta))
        throw ValidationError("haze params: beta must be a finite value >= 0");
    for (double d : params.depth.values) {
        if (!(d >= 0.0) || !std::isfinite(d))
            throw ValidationError("haze params: depth must be finite and >= 0");
    }
}

std::string_view to_string(DatasetLayout layout)
{
    switch (layout) {
    case DatasetLayout::ResideIts: return "RESIDE_ITS";
    case DatasetLayout::ResideSots: return "RESIDE_SOTS";
    case DatasetLayout::OHaze: return "OHAZE";
    case DatasetLayout::HazeRd: return "HAZERD";
    case DatasetLayout::FlatPairs: return "FLAT_PAIRS";
    }
    return "?";
}

DatasetLayout parse_layout(std::string_view text)
{
    std::string key(text);
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::toupper(c); });
    for (auto layout : {DatasetLayout::ResideIts, DatasetLayout::ResideSots, DatasetLayout::OHaze,
                        DatasetLayout::HazeRd, DatasetLayout::FlatPairs}) {
        if (to_string(layout) == key)
            return layout;
    }
    throw ConfigError("unknown dataset layout '" + std::string(text) + "'");
}

Split parse_split(std::string_view text)
{
    if (text == "all")
        return Split::All;
    if (text == "train")
        return Split::Train;
    if (text == "test")
        return Split::Test;
    throw ConfigError("unknown split '" + std::string(text) + "' (expected all, train or test)");
}

LayoutOptions default_layout_options(DatasetLayout layout)
{
    switch (layout) {
    case DatasetLayout::ResideIts: return {"hazy", "clear", R"(^([^_]+)_.*$)", 0};
    case DatasetLayout::ResideSots: return {"hazy", "gt", R"(^([^_]+)_.*$)", 0};
    case DatasetLayout::HazeRd: return {"hazy", "gt", R"(^(.+)_[^_]+$)", 0};
    case DatasetLayout::OHaze: return {"", "", R"(^(.+)_hazy$)", 35};
    case DatasetLayout::FlatPairs: return {"hazy", "clear", "", 0};
    }
    return {};
}

Dataset Dataset::from_files(std::vector<FileEntry> entries, std::vector<std::string> skipped)
{
    Dataset ds;
    ds.files_ = std::move(entries);
    ds.skipped_ = std::move(skipped);
    return ds;
}

Dataset Dataset::from_samples(std::vector<PairedSample> samples)
{
    Dataset ds;
    ds.samples_ = std::move(samples);
    ds.in_memory_ = true;
    return ds;
}

std::size_t Dataset::size() const
{
    return in_memory_ ? samples_.size() : files_.size();
}

const std::string& Dataset::id(std::size_t i) const
{
    return in_memory_ ? samples_.at(i).id : files_.at(i).id;
}

PairedSample Dataset::get(std::size_t i) const
{
    if (in_memory_)
        return samples_.at(i);
    const auto& entry = files_.at(i);
    PairedSample sample{read_image(entry.hazy), read_image(entry.clear), entry.id, std::nullopt};
    if (!sample.hazy.same_shape(sample.clear))
        throw ValidationError("sample " + entry.id + ": hazy and clear images differ in size");
    return sample;
}

std::vector<std::string> Dataset::ids() const
{
    std::vector<std::string> out;
    for (std::size_t i = 0; i < size(); ++i)
        out.push_back(id(i));
    return out;
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const
{
    end = std::min(end, size());
    begin = std::min(begin, end);
    Dataset out;
    out.in_memory_ = in_memory_;
    out.skipped_ = skipped_;
    if (in_memory_)
        out.samples_.assign(samples_.begin() + begin, samples_.begin() + end);
    else
        out.files_.assign(files_.begin() + begin, files_.begin() + end);
    return out;
}

namespace {

// Image files under `dir` keyed by filename (or stem), sorted.
std::map<std::string, fs::path> scan(const fs::path& dir, bool by_stem, bool recursive)
{
    std::map<std::string, fs::path> out;
    std::error_code ec;
    if (!fs::is_directory(dir, ec))
        return out;
    auto add = [&](const fs::directory_entry& entry) {
        if (!entry.is_regular_file() || !is_image_file(entry.path()))
            return;
        const auto key = by_stem ? entry.path().stem().string() : entry.path().filename().string();
        if (!out.emplace(key, entry.path()).second)
            spdlog::warn("duplicate image name {} under {}; keeping the first", key, dir.string());
    };
    if (recursive) {
        for (const auto& entry : fs::recursive_directory_iterator(dir))
            add(entry);
    } else {
        for (const auto& entry : fs::directory_iterator(dir))
            add(entry);
    }
    return out;
}

void skip(std::vector<std::string>& skipped, const std::string& message)
{
    spdlog::warn("{}", message);
    skipped.push_back(message);
}

} // namespace

Dataset load_dataset(const fs::path& root, DatasetLayout layout, Split split,
                     const std::optional<LayoutOptions>& options)
{
    std::error_code ec;
    if (!fs::is_directory(root, ec))
        throw IoError("dataset root " + root.string() + " does not exist");
    const LayoutOptions opts = options.value_or(default_layout_options(layout));
    if (split != Split::All && layout != DatasetLayout::OHaze)
        throw ConfigError("train/test splits are defined for the OHAZE layout only; use separate roots otherwise");

    std::vector<Dataset::FileEntry> entries;
    std::vector<std::string> skipped;

    if (layout == DatasetLayout::FlatPairs) {
        const auto hazy = scan(root / opts.hazy_subdir, false, false);
        const auto clear = scan(root / opts.clear_subdir, false, false);
        for (const auto& [name, path] : hazy) {
            auto it = clear.find(name);
            if (it == clear.end())
                skip(skipped, "missing clear counterpart for " + name);
            else
                entries.push_back({fs::path(name).stem().string(), path, it->second});
        }
        for (const auto& [name, path] : clear) {
            if (!hazy.contains(name))
                skip(skipped, "missing hazy counterpart for " + name);
        }
    } else if (layout == DatasetLayout::OHaze) {
        const std::regex pattern(opts.hazy_pattern);
        const auto files = scan(root, true, true);
        for (const auto& [stem, path] : files) {
            std::smatch m;
            if (!std::regex_match(stem, m, pattern))
                continue;
            const std::string id = m[1].str();
            auto it = files.find(id + "_GT");
            if (it == files.end())
                skip(skipped, "missing ground truth for " + stem);
            else
                entries.push_back({id, path, it->second});
        }
        const auto train = std::min<std::size_t>(static_cast<std::size_t>(opts.train_count), entries.size());
        if (split == Split::Train)
            entries.resize(train);
        else if (split == Split::Test)
            entries.erase(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(train));
    } else {
        const std::regex pattern(opts.hazy_pattern);
        const auto hazy = scan(root / opts.hazy_subdir, true, false);
        const auto clear = scan(root / opts.clear_subdir, true, false);
        for (const auto& [stem, path] : hazy) {
            std::smatch m;
            if (!std::regex_match(stem, m, pattern)) {
                skip(skipped, "hazy file " + stem + " does not match the naming pattern");
                continue;
            }
            auto it = clear.find(m[1].str());
            if (it == clear.end())
                skip(skipped, "missing clear counterpart " + m[1].str() + " for " + stem);
            else
                entries.push_back({stem, path, it->second});
        }
    }

    if (entries.empty())
        throw IoError("zero samples found under " + root.string() + " (layout " + std::string(to_string(layout)) +
                      ")");
    return Dataset::from_files(std::move(entries), std::move(skipped));
}

Image synthesize_haze(const Image& clear, const HazeParams& params)
{
    require_valid(clear);
    validate(params);
    if (params.depth.height != clear.height() || params.depth.width != clear.width())
        throw ValidationError("haze params: depth map size does not match the image");
    const ScalarField t = params.transmission();
    Image out(clear.height(), clear.width(), 3);
    for (int y = 0; y < clear.height(); ++y) {
        for (int x = 0; x < clear.width(); ++x) {
            const double tv = t.at(y, x);
            for (int c = 0; c < 3; ++c)
                out.at(y, x, c) = clear.at(y, x, c) * tv + params.light[c] * (1.0 - tv);
        }
    }
    return out;
}

Image exact_dehaze_oracle(const Image& hazy, const HazeParams& params, double t_floor)
{
    require_valid(hazy);
    validate(params);
    if (params.depth.height != hazy.height() || params.depth.width != hazy.width())
        throw ValidationError("haze params: depth map size does not match the image");
    const ScalarField t = params.transmission();
    Image out(hazy.height(), hazy.width(), 3);
    for (int y = 0; y < hazy.height(); ++y) {
        for (int x = 0; x < hazy.width(); ++x) {
            const double tv = t.at(y, x);
            if (tv < t_floor)
                throw ValidationError("transmission " + std::to_string(tv) + " below floor " +
                                      std::to_string(t_floor) + " at (" + std::to_string(y) + ", " +
                                      std::to_string(x) + ")");
            for (int c = 0; c < 3; ++c)
                out.at(y, x, c) = (hazy.at(y, x, c) - params.light[c] * (1.0 - tv)) / tv;
        }
    }
    return out;
}

namespace {

double uniform(nn::Rng& rng, double lo, double hi)
{
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Image procedural_scene(int size, nn::Rng& rng)
{
    Image img(size, size, 3);
    std::array<double, 3> c0{}, c1{};
    for (int c = 0; c < 3; ++c) {
        c0[c] = uniform(rng, 0.05, 0.95);
        c1[c] = uniform(rng, 0.05, 0.95);
    }
    const double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double dx = std::cos(angle);
    const double dy = std::sin(angle);
    const double span = std::abs(dx) + std::abs(dy);
    const double offset = (dx < 0 ? -dx : 0.0) + (dy < 0 ? -dy : 0.0);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double s = ((x + 0.5) / size * dx + (y + 0.5) / size * dy + offset) / span;
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = c0[c] + (c1[c] - c0[c]) * s;
        }
    }

    const int shapes = std::uniform_int_distribution<int>(3, 7)(rng);
    for (int s = 0; s < shapes; ++s) {
        std::array<double, 3> color{};
        for (auto& v : color)
            v = uniform(rng, 0.0, 1.0);
        const double cx = uniform(rng, 0.0, size);
        const double cy = uniform(rng, 0.0, size);
        const double rx = uniform(rng, 0.08, 0.3) * size;
        const double ry = uniform(rng, 0.08, 0.3) * size;
        const bool ellipse = std::bernoulli_distribution(0.5)(rng);
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const double u = (x + 0.5 - cx) / rx;
                const double v = (y + 0.5 - cy) / ry;
                const bool inside = ellipse ? (u * u + v * v <= 1.0) : (std::abs(u) <= 1.0 && std::abs(v) <= 1.0);
                if (inside) {
                    for (int c = 0; c < 3; ++c)
                        img.at(y, x, c) = color[c];
                }
            }
        }
    }
    return quantize_8bit(img);
}

// Sum of three random-direction cosine gratings, rescaled to [0, 3].
ScalarField procedural_depth(int size, nn::Rng& rng)
{
    struct Grating {
        double kx, ky, phase, amplitude;
    };
    std::array<Grating, 3> gratings{};
    for (auto& g : gratings) {
        const double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
        const double freq = uniform(rng, 0.5, 2.0) * 2.0 * std::numbers::pi / size;
        g = {freq * std::cos(angle), freq * std::sin(angle), uniform(rng, 0.0, 2.0 * std::numbers::pi),
             uniform(rng, 0.5, 1.0)};
    }
    ScalarField depth(size, size);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            double v = 0.0;
            for (const auto& g : gratings)
                v += g.amplitude * std::cos(g.kx * x + g.ky * y + g.phase);
            depth.at(y, x) = v;
        }
    }
    const auto [lo, hi] = std::minmax_element(depth.values.begin(), depth.values.end());
    const double min = *lo;
    const double range = *hi - *lo;
    for (auto& v : depth.values)
        v = range > 0.0 ? 3.0 * (v - min) / range : 0.0;
    return depth;
}

} // namespace

Dataset make_synthetic_set(int count, int size, std::uint64_t seed)
{
    if (count < 1)
        throw ConfigError("synthetic set needs at least one sample");
    if (size < 1)
        throw ConfigError("synthetic image size must be positive");
    std::vector<PairedSample> samples;
    samples.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(i)};
        nn::Rng rng(seq);
        PairedSample sample;
        sample.clear = procedural_scene(size, rng);
        HazeParams params;
        const double base = uniform(rng, 0.7, 1.0);
        for (auto& a : params.light)
            a = std::clamp(base + uniform(rng, -0.03, 0.03), 0.7, 1.0);
        params.beta = uniform(rng, 0.4, 1.6);
        params.depth = procedural_depth(size, rng);
        sample.hazy = synthesize_haze(sample.clear, params);
        sample.haze = std::move(params);
        char name[32];
        std::snprintf(name, sizeof name, "synth_%04d", i);
        sample.id = name;
        samples.push_back(std::move(sample));
    }
    return Dataset::from_samples(std::move(samples));
}

Image crop(const Image& img, int y, int x, int h, int w)
{
    if (y < 0 || x < 0 || h < 1 || w < 1 || y + h > img.height() || x + w > img.width())
        throw ValidationError("crop window outside image");
    Image out(h, w, img.channels());
    for (int r = 0; r < h; ++r) {
        for (int col = 0; col < w; ++col) {
            for (int c = 0; c < img.channels(); ++c)
                out.at(r, col, c) = img.at(y + r, x + col, c);
        }
    }
    return out;
}

ScalarField crop(const ScalarField& field, int y, int x, int h, int w)
{
    if (y < 0 || x < 0 || h < 1 || w < 1 || y + h > field.height || x + w > field.width)
        throw ValidationError("crop window outside field");
    ScalarField out(h, w);
    for (int r = 0; r < h; ++r) {
        for (int col = 0; col < w; ++col)
            out.at(r, col) = field.at(y + r, x + col);
    }
    return out;
}

Image flip_horizontal(const Image& img)
{
    Image out(img.height(), img.width(), img.channels());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            for (int c = 0; c < img.channels(); ++c)
                out.at(y, x, c) = img.at(y, img.width() - 1 - x, c);
        }
    }
    return out;
}

ScalarField flip_horizontal(const ScalarField& field)
{
    ScalarField out(field.height, field.width);
    for (int y = 0; y < field.height; ++y) {
        for (int x = 0; x < field.width; ++x)
            out.at(y, x) = field.at(y, field.width - 1 - x);
    }
    return out;
}

Image resize_image(const Image& img, int h, int w)
{
    if (h < 1 || w < 1)
        throw ValidationError("resize_image: empty target");
    Image out(h, w, img.channels());
    const double sy = static_cast<double>(img.height()) / h;
    const double sx = static_cast<double>(img.width()) / w;
    for (int y = 0; y < h; ++y) {
        const double fy = std::max((y + 0.5) * sy - 0.5, 0.0);
        const int y0 = std::min(static_cast<int>(fy), img.height() - 1);
        const int y1 = std::min(y0 + 1, img.height() - 1);
        const double wy = fy - y0;
        for (int x = 0; x < w; ++x) {
            const double fx = std::max((x + 0.5) * sx - 0.5, 0.0);
            const int x0 = std::min(static_cast<int>(fx), img.width() - 1);
            const int x1 = std::min(x0 + 1, img.width() - 1);
            const double wx = fx - x0;
            for (int c = 0; c < img.channels(); ++c) {
                const double top = img.at(y0, x0, c) * (1 - wx) + img.at(y0, x1, c) * wx;
                const double bottom = img.at(y1, x0, c) * (1 - wx) + img.at(y1, x1, c) * wx;
                out.at(y, x, c) = top * (1 - wy) + bottom * wy;
            }
        }
    }
    return out;
}

PairedSample random_crop_pair(const PairedSample& sample, int size, nn::Rng& rng, bool allow_flip)
{
    if (!sample.hazy.same_shape(sample.clear))
        throw ValidationError("sample " + sample.id + ": hazy and clear images differ in size");
    if (size < 1)
        throw ConfigError("crop size must be positive");
    PairedSample out;
    out.id = sample.id;
    const int h = sample.hazy.height();
    const int w = sample.hazy.width();
    if (h < size || w < size) {
        spdlog::info("sample {} ({}x{}) is smaller than the {} crop; resizing the whole image", sample.id, h, w, size);
        out.hazy = resize_image(sample.hazy, size, size);
        out.clear = resize_image(sample.clear, size, size);
    } else {
        const int y = std::uniform_int_distribution<int>(0, h - size)(rng);
        const int x = std::uniform_int_distribution<int>(0, w - size)(rng);
        out.hazy = crop(sample.hazy, y, x, size, size);
        out.clear = crop(sample.clear, y, x, size, size);
        if (sample.haze) {
            HazeParams params = *sample.haze;
            params.depth = crop(sample.haze->depth, y, x, size, size);
            out.haze = std::move(params);
        }
    }
    if (allow_flip && std::bernoulli_distribution(0.5)(rng)) {
        out.hazy = flip_horizontal(out.hazy);
        out.clear = flip_horizontal(out.clear);
        if (out.haze)
            out.haze->depth = flip_horizontal(out.haze->depth);
    }
    return out;
}

} // namespace dehaze
