#pragma once

#include "dehaze/core.hpp"

#include <filesystem>

namespace dehaze {

/// Decodes an 8-bit PNG/JPEG as RGB in [0, 1]. Throws IoError when unreadable.
Image read_image(const std::filesystem::path& path);

/// Writes an RGB (3-channel) or grayscale (1-channel) image as 8-bit PNG,
/// clamping to [0, 1] and rounding to the nearest code value.
void write_png(const std::filesystem::path& path, const Image& image);

/// Round trip through 8-bit code values, as a saved PNG would see it.
Image quantize_8bit(const Image& image);

/// True for extensions the loaders accept (.png, .jpg, .jpeg, case-insensitive).
bool is_image_file(const std::filesystem::path& path);

} // namespace dehaze
