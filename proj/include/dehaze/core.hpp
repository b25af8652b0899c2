#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dehaze {

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input data violates a documented invariant (bad pixels, wrong shapes).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A configuration or user request cannot be honoured.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Dataset, image or checkpoint I/O failure.
class IoError : public Error {
public:
    using Error::Error;
};

/// Interleaved H x W x C image of doubles, RGB channel order.
///
/// Pixel (y, x) channel c lives at ((y * width) + x) * channels + c. Values are
/// expected in [0, 1] once loaded; intermediate predictions may leave the range.
class Image {
public:
    Image() = default;
    Image(int height, int width, int channels = 3, double fill = 0.0);

    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return channels_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(int y, int x, int c) { return data_[index(y, x, c)]; }
    double at(int y, int x, int c) const { return data_[index(y, x, c)]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    bool same_shape(const Image& other) const
    {
        return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
    }

    friend bool operator==(const Image&, const Image&) = default;

private:
    std::size_t index(int y, int x, int c) const
    {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    int height_ = 0;
    int width_ = 0;
    int channels_ = 3;
    std::vector<double> data_;
};

/// Single-channel real-valued map (depth, transmission).
struct ScalarField {
    int height = 0;
    int width = 0;
    std::vector<double> values;

    ScalarField() = default;
    ScalarField(int h, int w, double fill = 0.0)
        : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill)
    {
    }

    double& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
    double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }

    friend bool operator==(const ScalarField&, const ScalarField&) = default;
};

/// Replaces every value by its projection onto [0, 1]. Throws ValidationError
/// naming the first non-finite element.
Image clamp_unit(const Image& img);

/// First violated Image invariant, or nullopt when the image is valid.
std::optional<std::string> validate_image(const Image& img);

/// Throwing form of validate_image.
void require_valid(const Image& img);

/// The six elementary dehazing components. Declaration order is the canonical
/// head order used by every model.
enum class ComponentKind { AS, MUL, ADD, EXP, LOG, SIN };

inline constexpr std::size_t kComponentKindCount = 6;
inline constexpr ComponentKind kAllKinds[kComponentKindCount] = {
    ComponentKind::AS,  ComponentKind::MUL, ComponentKind::ADD,
    ComponentKind::EXP, ComponentKind::LOG, ComponentKind::SIN,
};

std::string_view to_string(ComponentKind kind);
ComponentKind parse_kind(std::string_view text);

/// A named, ordered selection of components.
struct VariantSpec {
    std::string name;
    std::vector<ComponentKind> active_kinds;

    friend bool operator==(const VariantSpec&, const VariantSpec&) = default;
};

/// Throws ConfigError if the kind list is empty or has duplicates.
void validate_variant(const VariantSpec& spec);

/// Builds a custom variant from "AS,MUL,SIN"; kinds are reordered canonically.
VariantSpec variant_from_heads(std::string_view heads);

} // namespace dehaze
