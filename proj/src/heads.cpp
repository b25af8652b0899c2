#include "dehaze/heads.hpp"

#include <algorithm>
#include <cmath>

namespace dehaze {

namespace formula {

namespace {

void require_same(const nn::Var& a, const nn::Var& b, const char* what)
{
    if (a.shape() != b.shape())
        throw ValidationError(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
}

// J = f(I, R) elementwise; `grads` returns (dJ/dI, dJ/dR) given (I, R, J).
template <class F, class G>
nn::Var binary(const nn::Var& image, const nn::Var& correction, F f, G grads)
{
    nn::Tensor out(image.shape());
    const auto& iv = image.value();
    const auto& rv = correction.value();
    for (std::size_t i = 0; i < out.numel(); ++i)
        out[i] = f(iv[i], rv[i]);
    return nn::make_result(std::move(out), {image, correction}, [grads](nn::Node& self) {
        const auto& iv = self.parents[0]->value;
        const auto& rv = self.parents[1]->value;
        const bool want_i = self.parents[0] && self.parents[0]->requires_grad;
        const bool want_r = self.parents[1] && self.parents[1]->requires_grad;
        float* gi = want_i ? self.parents[0]->grad_buffer().data() : nullptr;
        float* gr = want_r ? self.parents[1]->grad_buffer().data() : nullptr;
        for (std::size_t i = 0; i < self.value.numel(); ++i) {
            const auto [di, dr] = grads(iv[i], rv[i], self.value[i]);
            if (gi)
                gi[i] += self.grad[i] * di;
            if (gr)
                gr[i] += self.grad[i] * dr;
        }
    });
}

struct Pair {
    float di;
    float dr;
};

} // namespace

nn::Var atmospheric(const nn::Var& image, const nn::Var& light, const nn::Var& transmission, bool divide_by_t)
{
    const auto s = image.shape();
    const auto ls = light.shape();
    const auto ts = transmission.shape();
    if (ls.n != s.n || ls.c != s.c || ls.h != 1 || ls.w != 1)
        throw ValidationError("atmospheric head: light must be (N, C, 1, 1), got " + ls.str());
    if (ts.n != s.n || ts.c != 1 || ts.h != s.h || ts.w != s.w)
        throw ValidationError("atmospheric head: transmission must be (N, 1, H, W), got " + ts.str());
    const std::size_t plane = s.plane();

    nn::Tensor out(s);
    for (int n = 0; n < s.n; ++n) {
        const float* t = transmission.value().plane(n, 0);
        for (int c = 0; c < s.c; ++c) {
            const float a = light.value().at(n, c, 0, 0);
            const float* in = image.value().plane(n, c);
            float* dst = out.plane(n, c);
            for (std::size_t i = 0; i < plane; ++i) {
                const float j = in[i] - a * (1.0f - t[i]);
                dst[i] = divide_by_t ? j / t[i] : j;
            }
        }
    }
    return nn::make_result(std::move(out), {image, light, transmission}, [divide_by_t](nn::Node& self) {
        const auto s = self.value.shape();
        const std::size_t plane = s.plane();
        const auto& iv = self.parents[0]->value;
        const auto& av = self.parents[1]->value;
        const auto& tv = self.parents[2]->value;
        auto want = [&](int p) { return self.parents[p] && self.parents[p]->requires_grad; };
        for (int n = 0; n < s.n; ++n) {
            const float* t = tv.plane(n, 0);
            float* gt = want(2) ? self.parents[2]->grad_buffer().plane(n, 0) : nullptr;
            for (int c = 0; c < s.c; ++c) {
                const float a = av.at(n, c, 0, 0);
                const float* in = iv.plane(n, c);
                const float* g = self.grad.plane(n, c);
                float* gi = want(0) ? self.parents[0]->grad_buffer().plane(n, c) : nullptr;
                double ga = 0.0;
                for (std::size_t i = 0; i < plane; ++i) {
                    if (divide_by_t) {
                        // J = (I - A) / T + A
                        const float inv_t = 1.0f / t[i];
                        if (gi)
                            gi[i] += g[i] * inv_t;
                        ga += static_cast<double>(g[i]) * (1.0f - inv_t);
                        if (gt)
                            gt[i] -= g[i] * (in[i] - a) * inv_t * inv_t;
                    } else {
                        if (gi)
                            gi[i] += g[i];
                        ga -= static_cast<double>(g[i]) * (1.0f - t[i]);
                        if (gt)
                            gt[i] += g[i] * a;
                    }
                }
                if (want(1))
                    self.parents[1]->grad_buffer().at(n, c, 0, 0) += static_cast<float>(ga);
            }
        }
    });
}

nn::Var multiply(const nn::Var& image, const nn::Var& correction)
{
    require_same(image, correction, "multiply head");
    return binary(
        image, correction, [](float i, float r) { return i * r; },
        [](float i, float r, float) { return Pair{r, i}; });
}

nn::Var addition(const nn::Var& image, const nn::Var& correction)
{
    require_same(image, correction, "addition head");
    return binary(
        image, correction, [](float i, float r) { return i + r; }, [](float, float, float) { return Pair{1.0f, 1.0f}; });
}

nn::Var exponential(const nn::Var& image, const nn::Var& correction, float eps)
{
    require_same(image, correction, "exponential head");
    return binary(
        image, correction, [eps](float i, float r) { return std::pow(std::clamp(i, eps, 1.0f), r); },
        [eps](float i, float r, float j) {
            const float base = std::clamp(i, eps, 1.0f);
            const bool inside = i > eps && i < 1.0f;
            const float di = inside ? r * std::pow(base, r - 1.0f) : 0.0f;
            return Pair{di, j * std::log(base)};
        });
}

nn::Var logarithm(const nn::Var& image, const nn::Var& correction, float delta)
{
    require_same(image, correction, "logarithm head");
    // Evaluated in double: in float, delta - 1 rounds away most of delta.
    const double floor = static_cast<double>(delta) - 1.0;
    return binary(
        image, correction,
        [floor](float i, float r) {
            return static_cast<float>(std::log1p(std::max(static_cast<double>(i) * r, floor)));
        },
        [floor](float i, float r, float) {
            const double u = static_cast<double>(i) * r;
            if (u <= floor)
                return Pair{0.0f, 0.0f};
            const double inv = 1.0 / (1.0 + u);
            return Pair{static_cast<float>(r * inv), static_cast<float>(i * inv)};
        });
}

nn::Var sine(const nn::Var& image, const nn::Var& correction)
{
    require_same(image, correction, "sine head");
    return binary(
        image, correction, [](float i, float r) { return std::sin(i + r); },
        [](float i, float r, float) {
            const float d = std::cos(i + r);
            return Pair{d, d};
        });
}

} // namespace formula

Head::Head(nn::ParameterStore& store, ComponentKind kind, int feature_channels, const HeadsConfig& config,
           nn::Rng& rng, nn::InitOptions init)
    : kind_(kind), config_(config)
{
    const std::string base = "heads." + std::string(to_string(kind));
    const nn::ConvOptions same{1, 1, 1};
    if (kind == ComponentKind::AS) {
        map_hidden_ = nn::Conv2d(store, base + ".transmission.conv0", feature_channels, config.hidden, 3, same, rng, init);
        map_out_ = nn::Conv2d(store, base + ".transmission.conv1", config.hidden, 1, 3, same, rng, init);
        light_hidden_ = nn::Conv2d(store, base + ".light.fc0", feature_channels, config.hidden, 1, {}, rng, init);
        light_out_ = nn::Conv2d(store, base + ".light.fc1", config.hidden, 3, 1, {}, rng, init);
    } else {
        map_hidden_ = nn::Conv2d(store, base + ".correction.conv0", feature_channels, config.hidden, 3, same, rng, init);
        map_out_ = nn::Conv2d(store, base + ".correction.conv1", config.hidden, 3, 3, same, rng, init);
    }
}

AtmosphericEstimate Head::estimate_atmosphere(const AggregatedFeatures& features, int out_h, int out_w) const
{
    AtmosphericEstimate est;
    const nn::Var pooled = nn::global_avg_pool(features.atmospheric);
    est.light = nn::sigmoid(light_out_(nn::relu(light_hidden_(pooled))));
    const nn::Var t_map = nn::sigmoid(map_out_(nn::relu(map_hidden_(features.atmospheric))));
    const nn::Var t_full = nn::resize_bilinear(t_map, out_h, out_w);
    est.transmission = nn::affine(t_full, 1.0f - config_.t_min, config_.t_min);
    return est;
}

nn::Var Head::estimate_correction(const AggregatedFeatures& features, int out_h, int out_w) const
{
    const nn::Var r = map_out_(nn::relu(map_hidden_(features.shared)));
    return nn::resize_bilinear(r, out_h, out_w);
}

ComponentOutput Head::forward(const nn::Var& image, const AggregatedFeatures& features,
                              const HeadInjection* injection) const
{
    const auto s = image.shape();
    ComponentOutput out;
    out.kind = kind_;
    if (kind_ == ComponentKind::AS) {
        AtmosphericEstimate est;
        if (injection && injection->light.defined() && injection->transmission.defined())
            est = {injection->light, injection->transmission};
        else
            est = estimate_atmosphere(features, s.h, s.w);
        for (float t : est.transmission.value().values()) {
            if (!(t > 0.0f && t <= 1.0f))
                throw Error("internal invariant violated: transmission " + std::to_string(t) + " outside (0, 1]");
        }
        out.prediction = formula::atmospheric(image, est.light, est.transmission, config_.divide_by_t);
        out.atmosphere = est;
        return out;
    }

    out.correction = (injection && injection->correction.defined()) ? injection->correction
                                                                     : estimate_correction(features, s.h, s.w);
    switch (kind_) {
    case ComponentKind::MUL: out.prediction = formula::multiply(image, out.correction); break;
    case ComponentKind::ADD: out.prediction = formula::addition(image, out.correction); break;
    case ComponentKind::EXP: out.prediction = formula::exponential(image, out.correction, config_.exp_eps); break;
    case ComponentKind::LOG: out.prediction = formula::logarithm(image, out.correction, config_.log_delta); break;
    case ComponentKind::SIN: out.prediction = formula::sine(image, out.correction); break;
    case ComponentKind::AS: break;
    }
    return out;
}

} // namespace dehaze
