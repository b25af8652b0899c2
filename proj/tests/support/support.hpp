#pragma once

#include "dehaze/core.hpp"
#include "dehaze/nn/autograd.hpp"
#include "dehaze/nn/layers.hpp"

#include <filesystem>
#include <functional>
#include <random>
#include <string>

namespace dehaze::testing {

inline Image random_image(int h, int w, nn::Rng& rng, double lo = 0.0, double hi = 1.0, int channels = 3)
{
    std::uniform_real_distribution<double> dist(lo, hi);
    Image img(h, w, channels);
    for (auto& v : img.data())
        v = dist(rng);
    return img;
}

inline nn::Tensor random_tensor(nn::Shape shape, nn::Rng& rng, float lo = 0.0f, float hi = 1.0f)
{
    std::uniform_real_distribution<float> dist(lo, hi);
    nn::Tensor t(shape);
    for (auto& v : t.values())
        v = dist(rng);
    return t;
}

/// Unique directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir()
    {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("dehazekit_test_" + std::to_string(rd()) + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

/// |a - b| / max(|a|, |b|, floor).
inline double relative_error(double a, double b, double floor = 1e-6)
{
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

} // namespace dehaze::testing

namespace dehaze::testing {

/// Directional derivative check of a float graph: compares grad . d against
/// the central difference (L(x + h d) - L(x - h d)) / 2h, where
/// L = sum(f(x) * probe) and d is a random unit-scale direction over all inputs.
/// Returns the relative error.
inline double directional_grad_error(const std::function<nn::Var(const std::vector<nn::Var>&)>& f,
                                     std::vector<nn::Tensor> inputs, nn::Rng& rng, double h = 1e-2)
{
    std::vector<nn::Var> vars;
    for (const auto& t : inputs)
        vars.emplace_back(t, true);
    const nn::Var out = f(vars);
    const nn::Tensor probe = random_tensor(out.shape(), rng, -1.0f, 1.0f);
    nn::backward(nn::dot_constant(out, probe));

    std::vector<nn::Tensor> dirs;
    double analytic = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        dirs.push_back(random_tensor(inputs[i].shape(), rng, -1.0f, 1.0f));
        const nn::Tensor& g = vars[i].grad();
        if (g.empty())
            continue;
        for (std::size_t j = 0; j < g.numel(); ++j)
            analytic += static_cast<double>(g[j]) * dirs[i][j];
    }
    auto eval = [&](double step) {
        nn::NoGradGuard no_grad;
        std::vector<nn::Var> shifted;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            nn::Tensor t = inputs[i];
            for (std::size_t j = 0; j < t.numel(); ++j)
                t[j] += static_cast<float>(step) * dirs[i][j];
            shifted.emplace_back(t);
        }
        const nn::Tensor y = f(shifted).value();
        double sum = 0.0;
        for (std::size_t j = 0; j < y.numel(); ++j)
            sum += static_cast<double>(y[j]) * probe[j];
        return sum;
    };
    const double numeric = (eval(h) - eval(-h)) / (2.0 * h);
    return relative_error(analytic, numeric, 1e-3);
}

} // namespace dehaze::testing
