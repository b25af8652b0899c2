#pragma once

#include "dehaze/core.hpp"
#include "dehaze/nn/layers.hpp"

#include <string>
#include <vector>

namespace dehaze {

enum class BackboneProfile { Tiny, Full };

std::string_view to_string(BackboneProfile profile);
BackboneProfile parse_backbone_profile(std::string_view text);

struct BackboneConfig {
    BackboneProfile profile = BackboneProfile::Tiny;

    // tiny: `tiny_levels` stages of two 3x3 convs, the first with stride 2.
    int tiny_levels = 3;
    std::vector<int> tiny_widths{16, 32, 64, 128};

    // full: ResNeXt bottleneck stages at strides 4/8/16/32.
    std::vector<int> full_blocks{3, 4, 23, 3};
    int cardinality = 32;
    int group_width = 4;

    /// Channel width of the aggregated feature maps.
    int aggregate_width = 32;
    /// Aggregated features live at ceil(input / working_stride).
    int working_stride = 4;
    float init_std = 0.01f;
    /// Optional parameter file whose "backbone.*" tensors replace the random init.
    std::string pretrained_path;

    static BackboneConfig tiny(int levels = 3);
    static BackboneConfig full();

    std::vector<int> level_strides() const;
    std::vector<int> level_channels() const;

    friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

struct FeatureLevel {
    nn::Var features;
    int stride = 1;
};

struct FeaturePyramid {
    int input_height = 0;
    int input_width = 0;
    std::vector<FeatureLevel> levels;
};

struct AggregatedFeatures {
    nn::Var atmospheric;
    nn::Var shared;
    int working_stride = 1;
    /// Per-position softmax weights over pyramid levels, (N, L, h, w).
    nn::Var atmospheric_level_weights;
    nn::Var shared_level_weights;
};

inline int ceil_div(int a, int b)
{
    return (a + b - 1) / b;
}

/// Multi-scale feature extractor honouring the FeaturePyramid contract.
class Backbone {
public:
    Backbone(nn::ParameterStore& store, const BackboneConfig& config, nn::Rng& rng);

    /// `input` is (N, 3, H, W) in [0, 1]. Throws ValidationError("input too small")
    /// when either side is below the coarsest stride.
    FeaturePyramid extract(const nn::Var& input) const;

    const BackboneConfig& config() const { return config_; }

private:
    struct Bottleneck {
        nn::Conv2d reduce, grouped, expand, shortcut;
        nn::ChannelAffine reduce_bn, grouped_bn, expand_bn, shortcut_bn;
        bool has_shortcut = false;
    };

    nn::Var run_bottleneck(const Bottleneck& block, const nn::Var& x) const;

    BackboneConfig config_;
    // tiny
    std::vector<std::vector<nn::Conv2d>> tiny_stages_;
    // full
    nn::Conv2d stem_;
    nn::ChannelAffine stem_bn_;
    std::vector<std::vector<Bottleneck>> full_stages_;
};

/// Softmax-over-levels fusion of a pyramid into one map at working resolution.
class LevelAttention {
public:
    LevelAttention(nn::ParameterStore& store, const std::string& name, const std::vector<int>& level_channels,
                   int width, nn::Rng& rng, nn::InitOptions init);

    /// Returns the fused map; `weights_out`, when given, receives the level weights.
    nn::Var operator()(const std::vector<nn::Var>& levels, int out_h, int out_w, nn::Var* weights_out = nullptr) const;

    const nn::Conv2d& logits_layer() const { return logits_; }
    int width() const { return width_; }

private:
    std::vector<nn::Conv2d> projections_;
    nn::Conv2d logits_;
    int width_;
};

/// Two independent LevelAttention blocks producing atmospheric and shared features.
class FeatureAggregation {
public:
    FeatureAggregation(nn::ParameterStore& store, const BackboneConfig& config, nn::Rng& rng);

    /// Throws ValidationError("pyramid inconsistent") on metadata mismatch.
    AggregatedFeatures aggregate(const FeaturePyramid& pyramid) const;

    const LevelAttention& atmospheric() const { return atmospheric_; }
    const LevelAttention& shared() const { return shared_; }

private:
    void check(const FeaturePyramid& pyramid) const;

    std::vector<int> strides_;
    std::vector<int> channels_;
    int working_stride_;
    LevelAttention atmospheric_;
    LevelAttention shared_;
};

} // namespace dehaze
