#include "dehaze/tensor_image.hpp"

namespace dehaze {

nn::Tensor images_to_tensor(std::span<const Image> images)
{
    if (images.empty())
        throw ValidationError("images_to_tensor: empty batch");
    const Image& first = images.front();
    nn::Tensor out(nn::Shape{static_cast<int>(images.size()), first.channels(), first.height(), first.width()});
    for (std::size_t n = 0; n < images.size(); ++n) {
        const Image& img = images[n];
        if (!img.same_shape(first))
            throw ValidationError("images_to_tensor: batch images differ in shape");
        for (int c = 0; c < img.channels(); ++c) {
            float* dst = out.plane(static_cast<int>(n), c);
            for (int y = 0; y < img.height(); ++y) {
                for (int x = 0; x < img.width(); ++x)
                    *dst++ = static_cast<float>(img.at(y, x, c));
            }
        }
    }
    return out;
}

nn::Tensor image_to_tensor(const Image& image)
{
    return images_to_tensor(std::span<const Image>(&image, 1));
}

Image tensor_to_image(const nn::Tensor& tensor, int n)
{
    const auto& s = tensor.shape();
    Image img(s.h, s.w, s.c);
    for (int c = 0; c < s.c; ++c) {
        const float* src = tensor.plane(n, c);
        for (int y = 0; y < s.h; ++y) {
            for (int x = 0; x < s.w; ++x)
                img.at(y, x, c) = *src++;
        }
    }
    return img;
}

} // namespace dehaze
