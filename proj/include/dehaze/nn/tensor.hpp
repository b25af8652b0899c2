#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dehaze::nn {

/// NCHW extent.
struct Shape {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    std::size_t numel() const
    {
        return static_cast<std::size_t>(n) * c * h * w;
    }
    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    std::string str() const;

    friend bool operator==(const Shape&, const Shape&) = default;
};

/// Dense float32 NCHW tensor with value semantics.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);

    const Shape& shape() const { return shape_; }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::span<float> values() { return data_; }
    std::span<const float> values() const { return data_; }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    float& at(int n, int c, int y, int x) { return data_[offset(n, c, y, x)]; }
    float at(int n, int c, int y, int x) const { return data_[offset(n, c, y, x)]; }

    /// Start of the (n, c) spatial plane.
    float* plane(int n, int c) { return data_.data() + offset(n, c, 0, 0); }
    const float* plane(int n, int c) const { return data_.data() + offset(n, c, 0, 0); }

    void fill(float value);
    /// Same data, new extent; numel must match.
    Tensor reshaped(Shape shape) const;

private:
    std::size_t offset(int n, int c, int y, int x) const
    {
        return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }

    Shape shape_{};
    std::vector<float> data_;
};

} // namespace dehaze::nn
