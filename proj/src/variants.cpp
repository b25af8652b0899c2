#include "dehaze/variants.hpp"

#include "dehaze/tensor_image.hpp"

#include <algorithm>
#include <cctype>

namespace dehaze {

namespace {

using K = ComponentKind;

struct Preset {
    const char* name;
    std::vector<ComponentKind> removed;
};

const std::vector<Preset>& presets()
{
    static const std::vector<Preset> table{
        {"FD-AS", {K::AS}},
        {"FD-J1", {K::MUL}},
        {"FD-J2", {K::ADD}},
        {"FD-J3", {K::EXP}},
        {"CL2S", {K::LOG}},
        {"DM2F", {K::SIN}},
        {"FD-J1,4", {K::MUL, K::LOG}},
        {"FDNet", {}},
    };
    return table;
}

std::string upper(std::string_view text)
{
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::toupper(c); });
    return out;
}

} // namespace

const std::vector<std::string>& preset_names()
{
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const auto& p : presets())
            out.emplace_back(p.name);
        return out;
    }();
    return names;
}

VariantSpec preset(std::string_view name)
{
    std::string key = upper(name);
    if (key == "FD-J4")
        key = "CL2S";
    else if (key == "FD-J5")
        key = "DM2F";
    for (const auto& p : presets()) {
        if (upper(p.name) != key)
            continue;
        VariantSpec spec{p.name, {}};
        for (auto kind : kAllKinds) {
            if (std::find(p.removed.begin(), p.removed.end(), kind) == p.removed.end())
                spec.active_kinds.push_back(kind);
        }
        return spec;
    }
    throw ConfigError("unknown variant '" + std::string(name) + "'");
}

VariantSpec resolve_variant(std::string_view name_or_heads)
{
    try {
        return preset(name_or_heads);
    } catch (const ConfigError&) {
        try {
            return variant_from_heads(name_or_heads);
        } catch (const ConfigError&) {
            throw ConfigError("unknown variant '" + std::string(name_or_heads) + "'");
        }
    }
}

std::vector<std::string> split_preset_list(std::string_view text)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find(',', start);
        if (end == std::string_view::npos)
            end = text.size();
        std::string token(text.substr(start, end - start));
        token.erase(0, token.find_first_not_of(' '));
        token.erase(token.find_last_not_of(' ') + 1);
        const bool numeric = !token.empty() && std::all_of(token.begin(), token.end(), ::isdigit);
        if (numeric && !out.empty())
            out.back() += "," + token;
        else if (!token.empty())
            out.push_back(token);
        start = end + 1;
    }
    return out;
}

ModelAssembly::ModelAssembly(const VariantSpec& spec, const ModelConfig& config)
    : spec_(spec), config_(config), params_(std::make_unique<nn::ParameterStore>())
{
    validate_variant(spec_);
    std::sort(spec_.active_kinds.begin(), spec_.active_kinds.end());
    nn::Rng rng(config_.init_seed);
    const nn::InitOptions init{config_.backbone.init_std};
    backbone_ = std::make_unique<Backbone>(*params_, config_.backbone, rng);
    aggregation_ = std::make_unique<FeatureAggregation>(*params_, config_.backbone, rng);
    for (auto kind : spec_.active_kinds)
        heads_.emplace_back(*params_, kind, config_.backbone.aggregate_width, config_.heads, rng, init);
    attention_ = std::make_unique<AttentionTrunk>(*params_, config_.backbone.aggregate_width,
                                                  static_cast<int>(heads_.size()), config_.fusion, rng, init);
}

std::vector<ComponentKind> ModelAssembly::kinds() const
{
    std::vector<ComponentKind> out;
    for (const auto& head : heads_)
        out.push_back(head.kind());
    return out;
}

ForwardResult ModelAssembly::forward(const nn::Var& input) const
{
    const auto s = input.shape();
    ForwardResult result;
    result.features = aggregation_->aggregate(backbone_->extract(input));
    for (const auto& head : heads_)
        result.components.push_back(head.forward(input, result.features));
    result.attention = attention_->compute(result.features, s.h, s.w);
    result.fused = fuse(result.components, result.attention);
    return result;
}

ModelAssembly build_variant(const VariantSpec& spec, const ModelConfig& config)
{
    return ModelAssembly(spec, config);
}

DehazeResult dehaze_image(const ModelAssembly& model, const Image& hazy, bool keep_attention)
{
    require_valid(hazy);
    nn::NoGradGuard no_grad;
    const nn::Var input(image_to_tensor(hazy));
    const ForwardResult fwd = model.forward(input);
    DehazeResult out;
    out.image = clamp_unit(tensor_to_image(fwd.fused.value()));
    if (keep_attention) {
        const auto& w = fwd.attention.weights.value();
        for (int k = 0; k < w.shape().c; ++k) {
            Image map(w.shape().h, w.shape().w, 1);
            const float* src = w.plane(0, k);
            for (std::size_t i = 0; i < map.size(); ++i)
                map.data()[i] = src[i];
            out.attention.push_back(std::move(map));
        }
    }
    return out;
}

} // namespace dehaze
