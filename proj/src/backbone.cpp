#include "dehaze/backbone.hpp"

#include <algorithm>

namespace dehaze {

std::string_view to_string(BackboneProfile profile)
{
    return profile == BackboneProfile::Tiny ? "tiny" : "full";
}

BackboneProfile parse_backbone_profile(std::string_view text)
{
    if (text == "tiny")
        return BackboneProfile::Tiny;
    if (text == "full")
        return BackboneProfile::Full;
    throw ConfigError("unknown backbone profile '" + std::string(text) + "' (expected tiny or full)");
}

BackboneConfig BackboneConfig::tiny(int levels)
{
    BackboneConfig cfg;
    cfg.profile = BackboneProfile::Tiny;
    cfg.tiny_levels = levels;
    return cfg;
}

BackboneConfig BackboneConfig::full()
{
    BackboneConfig cfg;
    cfg.profile = BackboneProfile::Full;
    cfg.aggregate_width = 128;
    return cfg;
}

std::vector<int> BackboneConfig::level_strides() const
{
    std::vector<int> strides;
    if (profile == BackboneProfile::Tiny) {
        for (int i = 0; i < tiny_levels; ++i)
            strides.push_back(2 << i);
    } else {
        for (std::size_t i = 0; i < full_blocks.size(); ++i)
            strides.push_back(4 << i);
    }
    return strides;
}

std::vector<int> BackboneConfig::level_channels() const
{
    std::vector<int> channels;
    if (profile == BackboneProfile::Tiny) {
        for (int i = 0; i < tiny_levels; ++i)
            channels.push_back(tiny_widths.at(static_cast<std::size_t>(i)));
    } else {
        for (std::size_t i = 0; i < full_blocks.size(); ++i)
            channels.push_back(256 << i);
    }
    return channels;
}

namespace {

void check_config(const BackboneConfig& config)
{
    const auto strides = config.level_strides();
    if (strides.size() < 2)
        throw ConfigError("backbone needs at least 2 pyramid levels");
    if (config.profile == BackboneProfile::Tiny &&
        config.tiny_levels > static_cast<int>(config.tiny_widths.size()))
        throw ConfigError("tiny backbone: not enough stage widths for " + std::to_string(config.tiny_levels) +
                          " levels");
    if (config.profile == BackboneProfile::Full &&
        std::any_of(config.full_blocks.begin(), config.full_blocks.end(), [](int b) { return b < 1; }))
        throw ConfigError("full backbone: every stage needs at least one block");
    if (config.aggregate_width < 1 || config.working_stride < 1)
        throw ConfigError("backbone: aggregate width and working stride must be positive");
}

} // namespace

Backbone::Backbone(nn::ParameterStore& store, const BackboneConfig& config, nn::Rng& rng) : config_(config)
{
    check_config(config_);
    const nn::InitOptions init{config_.init_std};
    if (config_.profile == BackboneProfile::Tiny) {
        int in = 3;
        for (int level = 0; level < config_.tiny_levels; ++level) {
            const int width = config_.tiny_widths[static_cast<std::size_t>(level)];
            const std::string base = "backbone.level" + std::to_string(level);
            std::vector<nn::Conv2d> stage;
            stage.emplace_back(store, base + ".conv0", in, width, 3, nn::ConvOptions{2, 1, 1}, rng, init);
            stage.emplace_back(store, base + ".conv1", width, width, 3, nn::ConvOptions{1, 1, 1}, rng, init);
            tiny_stages_.push_back(std::move(stage));
            in = width;
        }
        return;
    }

    stem_ = nn::Conv2d(store, "backbone.stem.conv", 3, 64, 7, nn::ConvOptions{2, 3, 1}, rng, init, false);
    stem_bn_ = nn::ChannelAffine(store, "backbone.stem.bn", 64);
    int in = 64;
    for (std::size_t stage = 0; stage < config_.full_blocks.size(); ++stage) {
        const int out = 256 << stage;
        const int inner = config_.cardinality * config_.group_width * (1 << stage);
        std::vector<Bottleneck> blocks;
        for (int b = 0; b < config_.full_blocks[stage]; ++b) {
            const int stride = (b == 0 && stage > 0) ? 2 : 1;
            const std::string base = "backbone.stage" + std::to_string(stage) + ".block" + std::to_string(b);
            Bottleneck block;
            block.reduce = nn::Conv2d(store, base + ".reduce", in, inner, 1, {}, rng, init, false);
            block.reduce_bn = nn::ChannelAffine(store, base + ".reduce_bn", inner);
            block.grouped = nn::Conv2d(store, base + ".grouped", inner, inner, 3,
                                       nn::ConvOptions{stride, 1, config_.cardinality}, rng, init, false);
            block.grouped_bn = nn::ChannelAffine(store, base + ".grouped_bn", inner);
            block.expand = nn::Conv2d(store, base + ".expand", inner, out, 1, {}, rng, init, false);
            block.expand_bn = nn::ChannelAffine(store, base + ".expand_bn", out);
            if (b == 0) {
                block.has_shortcut = true;
                block.shortcut = nn::Conv2d(store, base + ".shortcut", in, out, 1, nn::ConvOptions{stride, 0, 1}, rng,
                                            init, false);
                block.shortcut_bn = nn::ChannelAffine(store, base + ".shortcut_bn", out);
            }
            blocks.push_back(std::move(block));
            in = out;
        }
        full_stages_.push_back(std::move(blocks));
    }
}

nn::Var Backbone::run_bottleneck(const Bottleneck& block, const nn::Var& x) const
{
    nn::Var y = nn::relu(block.reduce_bn(block.reduce(x)));
    y = nn::relu(block.grouped_bn(block.grouped(y)));
    y = block.expand_bn(block.expand(y));
    nn::Var skip = block.has_shortcut ? block.shortcut_bn(block.shortcut(x)) : x;
    return nn::relu(nn::add(y, skip));
}

FeaturePyramid Backbone::extract(const nn::Var& input) const
{
    const auto s = input.shape();
    if (s.c != 3)
        throw ValidationError("channel mismatch: backbone expects 3 input channels");
    const auto strides = config_.level_strides();
    const int coarsest = strides.back();
    if (s.h < coarsest || s.w < coarsest)
        throw ValidationError("input too small: " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                              " is below the coarsest stride " + std::to_string(coarsest));

    FeaturePyramid pyramid;
    pyramid.input_height = s.h;
    pyramid.input_width = s.w;
    if (config_.profile == BackboneProfile::Tiny) {
        nn::Var x = input;
        for (std::size_t level = 0; level < tiny_stages_.size(); ++level) {
            for (const auto& conv : tiny_stages_[level])
                x = nn::relu(conv(x));
            pyramid.levels.push_back({x, strides[level]});
        }
        return pyramid;
    }

    nn::Var x = nn::max_pool_3x3_s2(nn::relu(stem_bn_(stem_(input))));
    for (std::size_t stage = 0; stage < full_stages_.size(); ++stage) {
        for (const auto& block : full_stages_[stage])
            x = run_bottleneck(block, x);
        pyramid.levels.push_back({x, strides[stage]});
    }
    return pyramid;
}

LevelAttention::LevelAttention(nn::ParameterStore& store, const std::string& name,
                               const std::vector<int>& level_channels, int width, nn::Rng& rng,
                               nn::InitOptions init)
    : width_(width)
{
    for (std::size_t i = 0; i < level_channels.size(); ++i)
        projections_.emplace_back(store, name + ".project" + std::to_string(i), level_channels[i], width, 1,
                                  nn::ConvOptions{}, rng, init);
    const int levels = static_cast<int>(level_channels.size());
    logits_ = nn::Conv2d(store, name + ".logits", levels * width, levels, 1, nn::ConvOptions{}, rng, init);
}

nn::Var LevelAttention::operator()(const std::vector<nn::Var>& levels, int out_h, int out_w,
                                   nn::Var* weights_out) const
{
    if (levels.size() != projections_.size())
        throw ValidationError("pyramid inconsistent: expected " + std::to_string(projections_.size()) +
                              " levels, got " + std::to_string(levels.size()));
    std::vector<nn::Var> projected;
    projected.reserve(levels.size());
    for (std::size_t i = 0; i < levels.size(); ++i)
        projected.push_back(nn::resize_bilinear(projections_[i](levels[i]), out_h, out_w));
    nn::Var weights = nn::softmax_channels(logits_(nn::concat_channels(projected)));
    if (weights_out)
        *weights_out = weights;
    return nn::weighted_sum(projected, weights);
}

FeatureAggregation::FeatureAggregation(nn::ParameterStore& store, const BackboneConfig& config, nn::Rng& rng)
    : strides_(config.level_strides()), channels_(config.level_channels()), working_stride_(config.working_stride),
      atmospheric_(store, "aggregate.atmospheric", channels_, config.aggregate_width, rng,
                   nn::InitOptions{config.init_std}),
      shared_(store, "aggregate.shared", channels_, config.aggregate_width, rng, nn::InitOptions{config.init_std})
{
}

void FeatureAggregation::check(const FeaturePyramid& pyramid) const
{
    auto fail = [](const std::string& why) { throw ValidationError("pyramid inconsistent: " + why); };
    if (pyramid.levels.size() != strides_.size())
        fail("level count " + std::to_string(pyramid.levels.size()) + " != " + std::to_string(strides_.size()));
    int batch = -1;
    for (std::size_t i = 0; i < pyramid.levels.size(); ++i) {
        const auto& level = pyramid.levels[i];
        if (!level.features.defined())
            fail("level " + std::to_string(i) + " has no features");
        const auto s = level.features.shape();
        if (level.stride != strides_[i])
            fail("level " + std::to_string(i) + " stride " + std::to_string(level.stride));
        if (i > 0 && level.stride <= pyramid.levels[i - 1].stride)
            fail("strides not strictly increasing");
        if (s.c != channels_[i])
            fail("level " + std::to_string(i) + " has " + std::to_string(s.c) + " channels");
        if (s.h != ceil_div(pyramid.input_height, level.stride) || s.w != ceil_div(pyramid.input_width, level.stride))
            fail("level " + std::to_string(i) + " spatial size " + s.str() + " disagrees with stride");
        if (batch >= 0 && s.n != batch)
            fail("batch size differs across levels");
        batch = s.n;
    }
}

AggregatedFeatures FeatureAggregation::aggregate(const FeaturePyramid& pyramid) const
{
    check(pyramid);
    std::vector<nn::Var> levels;
    for (const auto& level : pyramid.levels)
        levels.push_back(level.features);
    const int out_h = ceil_div(pyramid.input_height, working_stride_);
    const int out_w = ceil_div(pyramid.input_width, working_stride_);
    AggregatedFeatures out;
    out.working_stride = working_stride_;
    out.atmospheric = atmospheric_(levels, out_h, out_w, &out.atmospheric_level_weights);
    out.shared = shared_(levels, out_h, out_w, &out.shared_level_weights);
    return out;
}

} // namespace dehaze
