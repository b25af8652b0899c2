#pragma once

#include "dehaze/nn/autograd.hpp"

#include <vector>

namespace dehaze::nn {

struct ConvOptions {
    int stride = 1;
    int pad = 0;
    int groups = 1;
};

/// Spatial output size of a convolution / pooling window.
int conv_out_size(int in, int kernel, int stride, int pad);

/// Weight shape (Cout, Cin / groups, k, k); bias (1, Cout, 1, 1) or undefined.
Var conv2d(const Var& x, const Var& weight, const Var& bias, ConvOptions opts);

Var relu(const Var& x);
Var sigmoid(const Var& x);

/// a * x + b with scalar a, b.
Var affine(const Var& x, float a, float b);

Var add(const Var& a, const Var& b);

/// Per-channel scale and shift, both (1, C, 1, 1).
Var channel_affine(const Var& x, const Var& scale, const Var& shift);

/// Half-pixel-centre bilinear resampling (no corner alignment).
Var resize_bilinear(const Var& x, int out_h, int out_w);

Var max_pool_3x3_s2(const Var& x);

/// (N, C, H, W) -> (N, C, 1, 1).
Var global_avg_pool(const Var& x);

Var concat_channels(const std::vector<Var>& xs);

/// Softmax across the channel axis, independently at every (n, y, x).
Var softmax_channels(const Var& x);

/// out(n, c, y, x) = sum_k weights(n, k, y, x) * items[k](n, c, y, x).
Var weighted_sum(const std::vector<Var>& items, const Var& weights);

/// Mean of |a - b| over all elements, as a (1, 1, 1, 1) scalar.
Var mean_abs_diff(const Var& a, const Var& b);

/// Sum of x * probe over all elements; used for directional derivative checks.
Var dot_constant(const Var& x, const Tensor& probe);

} // namespace dehaze::nn
