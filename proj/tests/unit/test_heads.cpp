#include "dehaze/heads.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>

using namespace dehaze;
using dehaze::testing::random_tensor;
using dehaze::testing::relative_error;
using nn::Shape;
using nn::Tensor;
using nn::Var;

namespace {

constexpr int kSide = 16;
const Shape kImage{1, 3, kSide, kSide};

struct Inputs {
    Tensor image, correction, light, transmission;
};

// Ranges keep every formula away from its clamp and floor boundaries.
Inputs sample_inputs(ComponentKind kind, nn::Rng& rng)
{
    Inputs in;
    in.image = random_tensor(kImage, rng, 0.05f, 0.95f);
    switch (kind) {
    case ComponentKind::AS:
        in.light = random_tensor(Shape{1, 3, 1, 1}, rng, 0.7f, 1.0f);
        in.transmission = random_tensor(Shape{1, 1, kSide, kSide}, rng, 0.05f, 1.0f);
        break;
    case ComponentKind::MUL: in.correction = random_tensor(kImage, rng, 0.0f, 2.0f); break;
    case ComponentKind::ADD: in.correction = random_tensor(kImage, rng, -0.5f, 0.5f); break;
    case ComponentKind::EXP: in.correction = random_tensor(kImage, rng, 0.2f, 2.0f); break;
    case ComponentKind::LOG: in.correction = random_tensor(kImage, rng, -0.5f, 2.0f); break;
    case ComponentKind::SIN: in.correction = random_tensor(kImage, rng, -1.0f, 1.0f); break;
    }
    return in;
}

// Double-precision closed form of one output element.
double closed_form(ComponentKind kind, const Inputs& in, int c, int y, int x, bool divide_by_t = false)
{
    const double i = in.image.at(0, c, y, x);
    switch (kind) {
    case ComponentKind::AS: {
        const double a = in.light.at(0, c, 0, 0);
        const double t = in.transmission.at(0, 0, y, x);
        const double j = i - a * (1.0 - t);
        return divide_by_t ? j / t : j;
    }
    case ComponentKind::MUL: return i * in.correction.at(0, c, y, x);
    case ComponentKind::ADD: return i + in.correction.at(0, c, y, x);
    case ComponentKind::EXP: return std::pow(std::clamp(i, 1e-4, 1.0), static_cast<double>(in.correction.at(0, c, y, x)));
    case ComponentKind::LOG: return std::log(1.0 + std::max(i * in.correction.at(0, c, y, x), 1e-6 - 1.0));
    case ComponentKind::SIN: return std::sin(i + in.correction.at(0, c, y, x));
    }
    return 0.0;
}

Var apply_formula(ComponentKind kind, const Var& image, const Var& correction, const Var& light, const Var& t)
{
    switch (kind) {
    case ComponentKind::AS: return formula::atmospheric(image, light, t, false);
    case ComponentKind::MUL: return formula::multiply(image, correction);
    case ComponentKind::ADD: return formula::addition(image, correction);
    case ComponentKind::EXP: return formula::exponential(image, correction, 1e-4f);
    case ComponentKind::LOG: return formula::logarithm(image, correction, 1e-6f);
    case ComponentKind::SIN: return formula::sine(image, correction);
    }
    return {};
}

AggregatedFeatures random_features(int channels, int h, int w, nn::Rng& rng)
{
    AggregatedFeatures f;
    f.atmospheric = Var(random_tensor(Shape{1, channels, h, w}, rng, -1, 1));
    f.shared = Var(random_tensor(Shape{1, channels, h, w}, rng, -1, 1));
    f.working_stride = 4;
    return f;
}

} // namespace

TEST_CASE("heads with injected maps evaluate their closed forms")
{
    nn::Rng rng(11);
    nn::ParameterStore store;
    for (auto kind : kAllKinds) {
        const Head head(store, kind, 8, HeadsConfig{}, rng, {});
        for (int trial = 0; trial < 10; ++trial) {
            const Inputs in = sample_inputs(kind, rng);
            HeadInjection inj;
            if (kind == ComponentKind::AS) {
                inj.light = Var(in.light);
                inj.transmission = Var(in.transmission);
            } else {
                inj.correction = Var(in.correction);
            }
            const ComponentOutput out = head.forward(Var(in.image), AggregatedFeatures{}, &inj);
            CHECK(out.kind == kind);
            REQUIRE(out.prediction.shape() == kImage);
            double worst = 0.0;
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < kSide; ++y)
                    for (int x = 0; x < kSide; ++x)
                        worst = std::max(worst, std::abs(out.prediction.value().at(0, c, y, x) -
                                                         closed_form(kind, in, c, y, x)));
            CHECK_MESSAGE(worst <= 1e-6, to_string(kind), " max error ", worst);
        }
    }
}

TEST_CASE("the scattering head can divide by the transmission")
{
    nn::Rng rng(12);
    const Inputs in = sample_inputs(ComponentKind::AS, rng);
    const Tensor j = formula::atmospheric(Var(in.image), Var(in.light), Var(in.transmission), true).value();
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < kSide; ++y)
            for (int x = 0; x < kSide; ++x)
                CHECK(relative_error(j.at(0, c, y, x), closed_form(ComponentKind::AS, in, c, y, x, true)) < 1e-5);
}

TEST_CASE("special values of the head formulas")
{
    const Var zero(Tensor(kImage, 0.0f));
    const Var one(Tensor(kImage, 1.0f));
    const Var half(Tensor(kImage, 0.5f));
    // R = 1 leaves I unchanged for MUL and EXP, R = 0 for ADD; SIN(0) = 0; LOG floors at ln(delta).
    CHECK(formula::multiply(half, one).value()[0] == 0.5f);
    CHECK(formula::addition(half, zero).value()[0] == 0.5f);
    CHECK(formula::exponential(half, one, 1e-4f).value()[0] == doctest::Approx(0.5f));
    CHECK(formula::exponential(zero, one, 1e-4f).value()[0] == doctest::Approx(1e-4f));
    CHECK(formula::sine(zero, zero).value()[0] == 0.0f);
    const Var minus_two(Tensor(kImage, -2.0f));
    CHECK(formula::logarithm(one, minus_two, 1e-6f).value()[0] == doctest::Approx(std::log(1e-6)).epsilon(1e-4));
    // T = 1 means no haze: J = I.
    const Tensor j = formula::atmospheric(half, Var(Tensor(Shape{1, 3, 1, 1}, 0.9f)),
                                          Var(Tensor(Shape{1, 1, kSide, kSide}, 1.0f)), false)
                         .value();
    CHECK(j[0] == 0.5f);
}

TEST_CASE("head formula gradients match finite differences of the closed forms")
{
    nn::Rng rng(13);
    for (auto kind : kAllKinds) {
        const Inputs in = sample_inputs(kind, rng);
        Var image(in.image, true), correction, light, transmission;
        if (kind == ComponentKind::AS) {
            light = Var(in.light, true);
            transmission = Var(in.transmission, true);
        } else {
            correction = Var(in.correction, true);
        }
        const Tensor probe = random_tensor(kImage, rng, -1, 1);
        nn::backward(nn::dot_constant(apply_formula(kind, image, correction, light, transmission), probe));

        // Objective sum(probe * J) in double precision as a function of one perturbed input.
        auto objective = [&](Inputs p) {
            double s = 0.0;
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < kSide; ++y)
                    for (int x = 0; x < kSide; ++x)
                        s += probe.at(0, c, y, x) * closed_form(kind, p, c, y, x);
            return s;
        };
        struct Target {
            Tensor Inputs::*field;
            const Var* var;
        };
        std::vector<Target> targets{{&Inputs::image, &image}};
        if (kind == ComponentKind::AS) {
            targets.push_back({&Inputs::light, &light});
            targets.push_back({&Inputs::transmission, &transmission});
        } else {
            targets.push_back({&Inputs::correction, &correction});
        }

        constexpr double h = 1e-4;
        double worst = 0.0;
        for (int point = 0; point < 100; ++point) {
            const Target& t = targets[static_cast<std::size_t>(point) % targets.size()];
            const std::size_t n = (in.*t.field).numel();
            const std::size_t idx = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
            // Perturb in double by evaluating the closed form on a widened copy.
            Inputs plus = in, minus = in;
            const double base = (in.*t.field)[idx];
            (plus.*t.field)[idx] = static_cast<float>(base + h);
            (minus.*t.field)[idx] = static_cast<float>(base - h);
            const double step = static_cast<double>((plus.*t.field)[idx]) - (minus.*t.field)[idx];
            const double numeric = (objective(plus) - objective(minus)) / step;
            const double analytic = t.var->grad()[idx];
            worst = std::max(worst, relative_error(analytic, numeric, 1e-3));
        }
        CHECK_MESSAGE(worst <= 1e-3, to_string(kind), " worst relative error ", worst);
    }
}

TEST_CASE("learned maps respect their ranges and are upsampled to the input size")
{
    nn::Rng rng(14);
    nn::ParameterStore store;
    HeadsConfig cfg;
    const auto features = random_features(8, 5, 6, rng);
    const Var image(random_tensor(Shape{1, 3, 18, 21}, rng));
    for (auto kind : kAllKinds) {
        const Head head(store, kind, 8, cfg, rng, {});
        const ComponentOutput out = head.forward(image, features);
        CHECK(out.prediction.shape() == image.shape());
        if (kind == ComponentKind::AS) {
            REQUIRE(out.atmosphere.has_value());
            CHECK(out.atmosphere->light.shape() == Shape{1, 3, 1, 1});
            CHECK(out.atmosphere->transmission.shape() == Shape{1, 1, 18, 21});
            for (float a : out.atmosphere->light.value().values())
                CHECK((a > 0.0f && a < 1.0f));
            for (float t : out.atmosphere->transmission.value().values())
                CHECK((t > cfg.t_min && t <= 1.0f));
            CHECK_FALSE(out.correction.defined());
        } else {
            CHECK(out.correction.shape() == image.shape());
            CHECK_FALSE(out.atmosphere.has_value());
        }
    }
    CHECK(store.find("heads.SIN.correction.conv0.weight").defined());
    CHECK(store.find("heads.AS.transmission.conv0.weight").defined());
}
