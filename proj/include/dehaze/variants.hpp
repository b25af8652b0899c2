#pragma once

#include "dehaze/fusion.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace dehaze {

struct ModelConfig {
    BackboneConfig backbone = BackboneConfig::tiny();
    HeadsConfig heads;
    FusionConfig fusion;
    /// Seed of the Gaussian parameter initialisation.
    std::uint64_t init_seed = 0;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Ablation preset names in table order.
const std::vector<std::string>& preset_names();

/// Resolves a preset name ("CL2S", "DM2F", "FDNet", "FD-AS", "FD-J1", "FD-J2",
/// "FD-J3", "FD-J1,4", plus the aliases "FD-J4" and "FD-J5"). Throws
/// ConfigError("unknown variant ...") otherwise.
VariantSpec preset(std::string_view name);

/// Preset name or, failing that, a comma separated head list ("AS,MUL,SIN").
VariantSpec resolve_variant(std::string_view name_or_heads);

/// Splits "CL2S,FD-J1,4,DM2F" into preset names, re-attaching numeric
/// fragments such as the ",4" of "FD-J1,4".
std::vector<std::string> split_preset_list(std::string_view text);

struct ForwardResult {
    /// Raw fused prediction (N, 3, H, W); clamp before display or saving.
    nn::Var fused;
    AttentionMaps attention;
    /// One entry per active head, in canonical kind order.
    std::vector<ComponentOutput> components;
    AggregatedFeatures features;
};

/// Backbone, aggregation, the variant's heads and an attention trunk of
/// matching arity, sharing one parameter store.
class ModelAssembly {
public:
    ModelAssembly(const VariantSpec& spec, const ModelConfig& config);

    ModelAssembly(ModelAssembly&&) noexcept = default;
    ModelAssembly& operator=(ModelAssembly&&) noexcept = default;
    ModelAssembly(const ModelAssembly&) = delete;
    ModelAssembly& operator=(const ModelAssembly&) = delete;

    const VariantSpec& spec() const { return spec_; }
    const ModelConfig& config() const { return config_; }
    std::vector<ComponentKind> kinds() const;
    int attention_arity() const { return attention_->arity(); }

    nn::ParameterStore& parameters() { return *params_; }
    const nn::ParameterStore& parameters() const { return *params_; }

    const Backbone& backbone() const { return *backbone_; }
    const FeatureAggregation& aggregation() const { return *aggregation_; }
    const std::vector<Head>& heads() const { return heads_; }
    const AttentionTrunk& attention() const { return *attention_; }

    /// End-to-end pass on an (N, 3, H, W) batch.
    ForwardResult forward(const nn::Var& input) const;

private:
    VariantSpec spec_;
    ModelConfig config_;
    std::unique_ptr<nn::ParameterStore> params_;
    std::unique_ptr<Backbone> backbone_;
    std::unique_ptr<FeatureAggregation> aggregation_;
    std::vector<Head> heads_;
    std::unique_ptr<AttentionTrunk> attention_;
};

ModelAssembly build_variant(const VariantSpec& spec, const ModelConfig& config = {});

struct DehazeResult {
    Image image;
    /// One grayscale weight map per active component, canonical order.
    std::vector<Image> attention;
};

/// Inference on one image without recording the tape; output clamped to [0, 1].
DehazeResult dehaze_image(const ModelAssembly& model, const Image& hazy, bool keep_attention = false);

} // namespace dehaze
