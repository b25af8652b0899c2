#include "dehaze/core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

namespace dehaze {

Image::Image(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels),
      data_(static_cast<std::size_t>(std::max(height, 0)) * std::max(width, 0) * std::max(channels, 0), fill)
{
}

namespace {

std::string pixel_location(const Image& img, std::size_t flat)
{
    const auto c = flat % img.channels();
    const auto px = flat / img.channels();
    std::ostringstream os;
    os << "index " << flat << " (y=" << px / img.width() << ", x=" << px % img.width() << ", c=" << c << ")";
    return os.str();
}

} // namespace

Image clamp_unit(const Image& img)
{
    Image out = img;
    auto values = out.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i]))
            throw ValidationError("non-finite value at " + pixel_location(img, i));
        values[i] = std::clamp(values[i], 0.0, 1.0);
    }
    return out;
}

std::optional<std::string> validate_image(const Image& img)
{
    if (img.height() < 1 || img.width() < 1)
        return "empty image";
    if (img.channels() != 3)
        return "channel mismatch: expected 3, got " + std::to_string(img.channels());
    const auto values = img.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i]))
            return "non-finite value at " + pixel_location(img, i);
    }
    return std::nullopt;
}

void require_valid(const Image& img)
{
    if (auto err = validate_image(img))
        throw ValidationError(*err);
}

std::string_view to_string(ComponentKind kind)
{
    switch (kind) {
    case ComponentKind::AS: return "AS";
    case ComponentKind::MUL: return "MUL";
    case ComponentKind::ADD: return "ADD";
    case ComponentKind::EXP: return "EXP";
    case ComponentKind::LOG: return "LOG";
    case ComponentKind::SIN: return "SIN";
    }
    return "?";
}

ComponentKind parse_kind(std::string_view text)
{
    std::string upper(text);
    std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char ch) { return std::toupper(ch); });
    for (auto kind : kAllKinds) {
        if (to_string(kind) == upper)
            return kind;
    }
    throw ConfigError("unknown component kind '" + std::string(text) + "'");
}

void validate_variant(const VariantSpec& spec)
{
    if (spec.active_kinds.empty())
        throw ConfigError("empty variant");
    std::array<bool, kComponentKindCount> seen{};
    for (auto kind : spec.active_kinds) {
        auto& flag = seen[static_cast<std::size_t>(kind)];
        if (flag)
            throw ConfigError("duplicate component kind " + std::string(to_string(kind)) + " in variant " + spec.name);
        flag = true;
    }
}

VariantSpec variant_from_heads(std::string_view heads)
{
    std::array<bool, kComponentKindCount> wanted{};
    std::size_t start = 0;
    while (start <= heads.size()) {
        auto end = heads.find(',', start);
        if (end == std::string_view::npos)
            end = heads.size();
        auto token = heads.substr(start, end - start);
        while (!token.empty() && token.front() == ' ')
            token.remove_prefix(1);
        while (!token.empty() && token.back() == ' ')
            token.remove_suffix(1);
        if (!token.empty()) {
            auto& flag = wanted[static_cast<std::size_t>(parse_kind(token))];
            if (flag)
                throw ConfigError("duplicate component kind " + std::string(token));
            flag = true;
        }
        start = end + 1;
    }
    VariantSpec spec;
    for (auto kind : kAllKinds) {
        if (wanted[static_cast<std::size_t>(kind)]) {
            if (!spec.name.empty())
                spec.name += ',';
            spec.name += to_string(kind);
            spec.active_kinds.push_back(kind);
        }
    }
    validate_variant(spec);
    return spec;
}

} // namespace dehaze
