#include "dehaze/nn/layers.hpp"
#include "dehaze/nn/optim.hpp"

#include "dehaze/core.hpp"

#include <cmath>

namespace dehaze::nn {

Var ParameterStore::add(const std::string& name, Tensor init)
{
    if (find(name).defined())
        throw ConfigError("duplicate parameter name " + name);
    Var v(std::move(init), true);
    entries_.push_back({name, v});
    return v;
}

std::size_t ParameterStore::count() const
{
    std::size_t total = 0;
    for (const auto& e : entries_)
        total += e.var.value().numel();
    return total;
}

Var ParameterStore::find(const std::string& name) const
{
    for (const auto& e : entries_) {
        if (e.name == name)
            return e.var;
    }
    return {};
}

void ParameterStore::zero_grad()
{
    for (auto& e : entries_)
        e.var.zero_grad();
}

Tensor gaussian_tensor(Shape shape, float std, Rng& rng)
{
    Tensor t(shape);
    std::normal_distribution<float> dist(0.0f, std);
    for (auto& v : t.values())
        v = dist(rng);
    return t;
}

Conv2d::Conv2d(ParameterStore& store, const std::string& name, int in_channels, int out_channels, int kernel,
               ConvOptions opts, Rng& rng, InitOptions init, bool with_bias)
    : opts_(opts)
{
    if (in_channels % opts.groups != 0 || out_channels % opts.groups != 0)
        throw ConfigError(name + ": channel counts not divisible by groups");
    weight_ = store.add(name + ".weight",
                        gaussian_tensor(Shape{out_channels, in_channels / opts.groups, kernel, kernel},
                                        init.weight_std, rng));
    if (with_bias)
        bias_ = store.add(name + ".bias", Tensor(Shape{1, out_channels, 1, 1}));
}

ChannelAffine::ChannelAffine(ParameterStore& store, const std::string& name, int channels)
{
    scale_ = store.add(name + ".scale", Tensor(Shape{1, channels, 1, 1}, 1.0f));
    shift_ = store.add(name + ".shift", Tensor(Shape{1, channels, 1, 1}));
}

Adam::Adam(const ParameterStore& store, AdamOptions opts) : opts_(opts)
{
    for (const auto& e : store.entries()) {
        params_.push_back(e.var);
        m_.emplace_back(e.var.shape());
        v_.emplace_back(e.var.shape());
    }
}

void Adam::step(float lr)
{
    ++step_;
    const double bc1 = 1.0 - std::pow(static_cast<double>(opts_.beta1), static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(static_cast<double>(opts_.beta2), static_cast<double>(step_));
    const float step_size = static_cast<float>(lr / bc1);
    const float inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
    for (std::size_t p = 0; p < params_.size(); ++p) {
        const Tensor& g = params_[p].grad();
        if (g.empty())
            continue;
        Tensor& w = params_[p].mutable_value();
        Tensor& m = m_[p];
        Tensor& v = v_[p];
        for (std::size_t i = 0; i < w.numel(); ++i) {
            const float gi = g[i] + opts_.weight_decay * w[i];
            m[i] = opts_.beta1 * m[i] + (1.0f - opts_.beta1) * gi;
            v[i] = opts_.beta2 * v[i] + (1.0f - opts_.beta2) * gi * gi;
            w[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + opts_.eps);
        }
    }
}

double grad_norm(const ParameterStore& store)
{
    double total = 0.0;
    for (const auto& e : store.entries()) {
        for (float g : e.var.grad().values())
            total += static_cast<double>(g) * g;
    }
    return std::sqrt(total);
}

double clip_grad_norm(ParameterStore& store, double max_norm)
{
    const double norm = grad_norm(store);
    if (norm > max_norm && norm > 0.0) {
        const float scale = static_cast<float>(max_norm / norm);
        for (auto& e : store.entries()) {
            Var v = e.var;
            for (auto& g : v.grad_buffer().values())
                g *= scale;
        }
    }
    return norm;
}

} // namespace dehaze::nn
