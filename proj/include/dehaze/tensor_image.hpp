#pragma once

#include "dehaze/core.hpp"
#include "dehaze/nn/tensor.hpp"

#include <span>

namespace dehaze {

/// Stacks equally sized RGB images into an (N, 3, H, W) tensor.
nn::Tensor images_to_tensor(std::span<const Image> images);
nn::Tensor image_to_tensor(const Image& image);

/// Extracts batch entry `n` of an (N, C, H, W) tensor as an H x W x C image.
Image tensor_to_image(const nn::Tensor& tensor, int n = 0);

} // namespace dehaze
