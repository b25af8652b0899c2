#pragma once

#include "dehaze/backbone.hpp"

#include <optional>

namespace dehaze {

struct HeadsConfig {
    /// Hidden width of the 3x3 layers producing R_i and T.
    int hidden = 32;
    /// Lower bound of the transmission map; T lies in (t_min, 1].
    float t_min = 0.05f;
    /// Standard scattering inversion (I - A(1 - T)) / T instead of I - A(1 - T).
    bool divide_by_t = false;
    /// Base floor of the exponential head.
    float exp_eps = 1e-4f;
    /// Floor of the logarithm argument 1 + I * R.
    float log_delta = 1e-6f;

    friend bool operator==(const HeadsConfig&, const HeadsConfig&) = default;
};

/// Global atmospheric light A (N, 3, 1, 1) and transmission T (N, 1, H, W).
struct AtmosphericEstimate {
    nn::Var light;
    nn::Var transmission;
};

struct ComponentOutput {
    ComponentKind kind = ComponentKind::AS;
    /// Candidate dehazed image J_k at input resolution; not range restricted.
    nn::Var prediction;
    /// Learned correction map R_k (undefined for AS).
    nn::Var correction;
    /// A and T (AS only).
    std::optional<AtmosphericEstimate> atmosphere;
};

/// Externally supplied maps that bypass a head's learned layers. Used by the
/// formula oracle tests only.
struct HeadInjection {
    nn::Var correction;
    nn::Var light;
    nn::Var transmission;
};

/// Pointwise head formulas over (N, 3, H, W) images, differentiable in every input.
namespace formula {

/// I - A(1 - T), or (I - A(1 - T)) / T when `divide_by_t`.
nn::Var atmospheric(const nn::Var& image, const nn::Var& light, const nn::Var& transmission, bool divide_by_t);
/// I * R
nn::Var multiply(const nn::Var& image, const nn::Var& correction);
/// I + R
nn::Var addition(const nn::Var& image, const nn::Var& correction);
/// clamp(I, eps, 1) ^ R
nn::Var exponential(const nn::Var& image, const nn::Var& correction, float eps);
/// ln(1 + max(I * R, delta - 1))
nn::Var logarithm(const nn::Var& image, const nn::Var& correction, float delta);
/// sin(I + R), radians
nn::Var sine(const nn::Var& image, const nn::Var& correction);

} // namespace formula

/// One elementary-function dehazing component with its learned map producers.
class Head {
public:
    Head(nn::ParameterStore& store, ComponentKind kind, int feature_channels, const HeadsConfig& config,
         nn::Rng& rng, nn::InitOptions init);

    ComponentKind kind() const { return kind_; }

    /// `image` is the (N, 3, H, W) hazy input; feature maps are at working resolution.
    ComponentOutput forward(const nn::Var& image, const AggregatedFeatures& features,
                            const HeadInjection* injection = nullptr) const;

private:
    AtmosphericEstimate estimate_atmosphere(const AggregatedFeatures& features, int out_h, int out_w) const;
    nn::Var estimate_correction(const AggregatedFeatures& features, int out_h, int out_w) const;

    ComponentKind kind_;
    HeadsConfig config_;
    nn::Conv2d map_hidden_;
    nn::Conv2d map_out_;
    nn::Conv2d light_hidden_;
    nn::Conv2d light_out_;
};

} // namespace dehaze
