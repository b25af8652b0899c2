#include "dehaze/fusion.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace dehaze;
using dehaze::testing::random_tensor;
using dehaze::testing::relative_error;
using nn::Shape;
using nn::Tensor;
using nn::Var;

namespace {

std::vector<ComponentOutput> random_components(int k, Shape s, nn::Rng& rng, bool grad = false)
{
    std::vector<ComponentOutput> out;
    for (int i = 0; i < k; ++i) {
        ComponentOutput c;
        c.kind = kAllKinds[i];
        c.prediction = Var(random_tensor(s, rng, -0.5f, 1.5f), grad);
        out.push_back(c);
    }
    return out;
}

} // namespace

TEST_CASE("attention weights are convex and the fused image stays inside the component range")
{
    nn::Rng rng(21);
    for (int trial = 0; trial < 5; ++trial) {
        const int k = 2 + trial;
        const Shape s{2, 3, 17, 13};
        const auto comps = random_components(k, s, rng);
        const AttentionMaps att = attention_from_logits(Var(random_tensor(Shape{2, k, 5, 4}, rng, -8, 8)), 17, 13);
        REQUIRE(att.arity() == k);
        const Tensor& w = att.weights.value();
        const Tensor jf = fuse(comps, att).value();
        for (int n = 0; n < 2; ++n)
            for (int y = 0; y < 17; ++y)
                for (int x = 0; x < 13; ++x) {
                    double sum = 0.0;
                    for (int i = 0; i < k; ++i) {
                        CHECK(w.at(n, i, y, x) >= 0.0f);
                        sum += w.at(n, i, y, x);
                    }
                    CHECK(std::abs(sum - 1.0) <= 1e-5);
                    for (int c = 0; c < 3; ++c) {
                        float lo = INFINITY, hi = -INFINITY;
                        for (const auto& comp : comps) {
                            lo = std::min(lo, comp.prediction.value().at(n, c, y, x));
                            hi = std::max(hi, comp.prediction.value().at(n, c, y, x));
                        }
                        const float v = jf.at(n, c, y, x);
                        CHECK((v >= lo - 1e-6 && v <= hi + 1e-6));
                    }
                }
    }
}

TEST_CASE("fusion is invariant to a joint permutation of components and logits")
{
    nn::Rng rng(22);
    const Shape s{1, 3, 8, 8};
    auto comps = random_components(4, s, rng);
    const Tensor logits = random_tensor(Shape{1, 4, 8, 8}, rng, -3, 3);
    const Tensor a = fuse(comps, attention_from_logits(Var(logits), 8, 8)).value();

    const int perm[4] = {2, 0, 3, 1};
    std::vector<ComponentOutput> permuted;
    Tensor plogits(logits.shape());
    for (int i = 0; i < 4; ++i) {
        permuted.push_back(comps[perm[i]]);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x)
                plogits.at(0, i, y, x) = logits.at(0, perm[i], y, x);
    }
    const Tensor b = fuse(permuted, attention_from_logits(Var(plogits), 8, 8)).value();
    for (std::size_t i = 0; i < a.numel(); ++i)
        CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-6));
}

TEST_CASE("a single component passes through unchanged")
{
    nn::Rng rng(23);
    const auto comps = random_components(1, Shape{1, 3, 6, 6}, rng);
    const Tensor jf = fuse(comps, attention_from_logits(Var(random_tensor(Shape{1, 1, 2, 2}, rng)), 6, 6)).value();
    for (std::size_t i = 0; i < jf.numel(); ++i)
        CHECK(jf[i] == doctest::Approx(comps[0].prediction.value()[i]));
}

TEST_CASE("arity mismatches are rejected")
{
    nn::Rng rng(24);
    const auto comps = random_components(3, Shape{1, 3, 6, 6}, rng);
    const AttentionMaps att = attention_from_logits(Var(random_tensor(Shape{1, 2, 6, 6}, rng)), 6, 6);
    CHECK_THROWS_WITH_AS(fuse(comps, att), doctest::Contains("fusion arity error"), ValidationError);
    nn::ParameterStore store;
    CHECK_THROWS_AS(AttentionTrunk(store, 8, 0, FusionConfig{}, rng, {}), ConfigError);
}

TEST_CASE("fused output gradients match finite differences of the closed form")
{
    nn::Rng rng(25);
    constexpr int k = 5, side = 6;
    const Shape s{1, 3, side, side};
    auto comps = random_components(k, s, rng, true);
    Var logits(random_tensor(Shape{1, k, side, side}, rng, -2, 2), true);
    const Tensor probe = random_tensor(s, rng, -1, 1);
    nn::backward(nn::dot_constant(fuse(comps, attention_from_logits(logits, side, side)), probe));

    std::vector<Tensor> j;
    for (const auto& c : comps)
        j.push_back(c.prediction.value());
    Tensor l = logits.value();
    auto objective = [&] {
        double total = 0.0;
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x) {
                double m = -INFINITY, z = 0.0;
                for (int i = 0; i < k; ++i)
                    m = std::max(m, static_cast<double>(l.at(0, i, y, x)));
                for (int i = 0; i < k; ++i)
                    z += std::exp(l.at(0, i, y, x) - m);
                for (int c = 0; c < 3; ++c) {
                    double v = 0.0;
                    for (int i = 0; i < k; ++i)
                        v += std::exp(l.at(0, i, y, x) - m) / z * j[i].at(0, c, y, x);
                    total += probe.at(0, c, y, x) * v;
                }
            }
        return total;
    };

    double worst = 0.0;
    for (int point = 0; point < 100; ++point) {
        const bool on_logits = point % 2 == 0;
        const int comp = std::uniform_int_distribution<int>(0, k - 1)(rng);
        Tensor& target = on_logits ? l : j[comp];
        const std::size_t idx = std::uniform_int_distribution<std::size_t>(0, target.numel() - 1)(rng);
        const float base = target[idx];
        const float up = base + 1e-3f, down = base - 1e-3f;
        target[idx] = up;
        const double fp = objective();
        target[idx] = down;
        const double fm = objective();
        target[idx] = base;
        const double numeric = (fp - fm) / (static_cast<double>(up) - down);
        const double analytic = on_logits ? logits.grad()[idx] : comps[comp].prediction.grad()[idx];
        worst = std::max(worst, relative_error(analytic, numeric, 1e-3));
    }
    CHECK(worst <= 1e-3);
}
