#pragma once

#include "dehaze/heads.hpp"

#include <vector>

namespace dehaze {

struct FusionConfig {
    int hidden = 128;

    friend bool operator==(const FusionConfig&, const FusionConfig&) = default;
};

/// Per-pixel convex weights over the active components.
struct AttentionMaps {
    /// (N, K, H, W), non-negative, summing to 1 over K at every pixel.
    nn::Var weights;
    /// Pre-softmax scores at input resolution.
    nn::Var logits;

    int arity() const { return weights.defined() ? weights.shape().c : 0; }
};

/// Softmax over the component axis after resampling logits to (out_h, out_w).
AttentionMaps attention_from_logits(const nn::Var& logits, int out_h, int out_w);

/// 1x1 -> 3x3 -> 3x3 -> 1x1 convolution trunk followed by a per-pixel softmax.
class AttentionTrunk {
public:
    /// Throws ConfigError when `arity` is zero.
    AttentionTrunk(nn::ParameterStore& store, int feature_channels, int arity, const FusionConfig& config,
                   nn::Rng& rng, nn::InitOptions init);

    AttentionMaps compute(const AggregatedFeatures& features, int out_h, int out_w) const;
    int arity() const { return arity_; }

private:
    int arity_;
    nn::Conv2d reduce_;
    nn::Conv2d spatial0_;
    nn::Conv2d spatial1_;
    nn::Conv2d score_;
};

/// J_f = sum_k W_k * J_k per channel, without clamping. Throws
/// ValidationError("fusion arity error ...") on count or shape mismatch.
nn::Var fuse(const std::vector<ComponentOutput>& outputs, const AttentionMaps& attention);

} // namespace dehaze
