#pragma once

#include "dehaze/nn/ops.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace dehaze::nn {

using Rng = std::mt19937_64;

struct NamedParameter {
    std::string name;
    Var var;
};

/// Owns every trainable tensor of a model, keyed by dotted module path.
class ParameterStore {
public:
    /// Registers a trainable tensor; names must be unique.
    Var add(const std::string& name, Tensor init);

    const std::vector<NamedParameter>& entries() const { return entries_; }
    /// Total scalar count.
    std::size_t count() const;
    /// Undefined Var when absent.
    Var find(const std::string& name) const;
    void zero_grad();

private:
    std::vector<NamedParameter> entries_;
};

/// Zero-mean Gaussian weights (given std) and zero biases.
struct InitOptions {
    float weight_std = 0.01f;
};

Tensor gaussian_tensor(Shape shape, float std, Rng& rng);

class Conv2d {
public:
    Conv2d() = default;
    Conv2d(ParameterStore& store, const std::string& name, int in_channels, int out_channels, int kernel,
           ConvOptions opts, Rng& rng, InitOptions init = {}, bool with_bias = true);

    Var operator()(const Var& x) const { return conv2d(x, weight_, bias_, opts_); }

    const Var& weight() const { return weight_; }
    const Var& bias() const { return bias_; }
    int out_channels() const { return weight_.shape().n; }

private:
    Var weight_;
    Var bias_;
    ConvOptions opts_;
};

/// Per-channel scale/shift standing in for a folded batch-norm layer.
class ChannelAffine {
public:
    ChannelAffine() = default;
    ChannelAffine(ParameterStore& store, const std::string& name, int channels);

    Var operator()(const Var& x) const { return channel_affine(x, scale_, shift_); }

private:
    Var scale_;
    Var shift_;
};

} // namespace dehaze::nn
