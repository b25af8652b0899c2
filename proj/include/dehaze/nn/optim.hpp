#pragma once

#include "dehaze/nn/layers.hpp"

#include <vector>

namespace dehaze::nn {

struct AdamOptions {
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float weight_decay = 0.0f;
};

/// Adam with bias-corrected moments over every tensor of a ParameterStore.
class Adam {
public:
    Adam(const ParameterStore& store, AdamOptions opts = {});

    /// One update with learning rate `lr` from the gradients currently held by
    /// the parameters. Parameters without a gradient are left unchanged.
    void step(float lr);
    long steps() const { return step_; }

private:
    std::vector<Var> params_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    AdamOptions opts_;
    long step_ = 0;
};

/// Global L2 norm of all parameter gradients.
double grad_norm(const ParameterStore& store);

/// Scales all gradients so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(ParameterStore& store, double max_norm);

} // namespace dehaze::nn
