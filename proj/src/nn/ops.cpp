#include "dehaze/nn/ops.hpp"

#include "dehaze/core.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>

namespace dehaze::nn {

namespace {

using MatrixRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatrixRM>;
using ConstMapRM = Eigen::Map<const MatrixRM>;

void require(bool ok, const std::string& message)
{
    if (!ok)
        throw ValidationError(message);
}

Tensor& parent_grad(Node& self, std::size_t i)
{
    return self.parents[i]->grad_buffer();
}

bool wants_grad(const Node& self, std::size_t i)
{
    return self.parents[i] && self.parents[i]->requires_grad;
}

struct ConvGeometry {
    int cin_group, cout_group, k, h, w, out_h, out_w;
    ConvOptions opts;
    int rows() const { return cin_group * k * k; }
    int cols() const { return out_h * out_w; }
    bool pointwise() const { return k == 1 && opts.stride == 1 && opts.pad == 0; }
};

// Unfolds one group of channels of one image into a (Cg * k * k) x (Ho * Wo) matrix.
void im2col(const float* src, const ConvGeometry& g, float* col)
{
    const int stride = g.opts.stride;
    const int pad = g.opts.pad;
    for (int c = 0; c < g.cin_group; ++c) {
        const float* plane = src + static_cast<std::size_t>(c) * g.h * g.w;
        for (int ky = 0; ky < g.k; ++ky) {
            for (int kx = 0; kx < g.k; ++kx) {
                float* row = col + (static_cast<std::size_t>(c) * g.k * g.k + ky * g.k + kx) * g.cols();
                for (int oy = 0; oy < g.out_h; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    float* dst = row + static_cast<std::size_t>(oy) * g.out_w;
                    if (iy < 0 || iy >= g.h) {
                        std::fill(dst, dst + g.out_w, 0.0f);
                        continue;
                    }
                    const float* line = plane + static_cast<std::size_t>(iy) * g.w;
                    for (int ox = 0; ox < g.out_w; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        dst[ox] = (ix >= 0 && ix < g.w) ? line[ix] : 0.0f;
                    }
                }
            }
        }
    }
}

void col2im(const float* col, const ConvGeometry& g, float* dst)
{
    const int stride = g.opts.stride;
    const int pad = g.opts.pad;
    for (int c = 0; c < g.cin_group; ++c) {
        float* plane = dst + static_cast<std::size_t>(c) * g.h * g.w;
        for (int ky = 0; ky < g.k; ++ky) {
            for (int kx = 0; kx < g.k; ++kx) {
                const float* row = col + (static_cast<std::size_t>(c) * g.k * g.k + ky * g.k + kx) * g.cols();
                for (int oy = 0; oy < g.out_h; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= g.h)
                        continue;
                    const float* src = row + static_cast<std::size_t>(oy) * g.out_w;
                    float* line = plane + static_cast<std::size_t>(iy) * g.w;
                    for (int ox = 0; ox < g.out_w; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < g.w)
                            line[ix] += src[ox];
                    }
                }
            }
        }
    }
}

template <class Forward, class Derivative>
Var unary(const Var& x, Forward f, Derivative df)
{
    Tensor out(x.shape());
    const auto in = x.value().values();
    for (std::size_t i = 0; i < in.size(); ++i)
        out[i] = f(in[i]);
    return make_result(std::move(out), {x}, [df](Node& self) {
        auto& gx = parent_grad(self, 0);
        const auto& xv = self.parents[0]->value;
        for (std::size_t i = 0; i < gx.numel(); ++i)
            gx[i] += self.grad[i] * df(xv[i], self.value[i]);
    });
}

struct Lerp {
    int i0, i1;
    float w0, w1;
};

std::vector<Lerp> lerp_table(int in, int out)
{
    std::vector<Lerp> table(out);
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
        double src = (o + 0.5) * scale - 0.5;
        src = std::max(src, 0.0);
        int i0 = std::min(static_cast<int>(src), in - 1);
        int i1 = std::min(i0 + 1, in - 1);
        const float frac = static_cast<float>(src - i0);
        table[o] = {i0, i1, 1.0f - frac, frac};
    }
    return table;
}

} // namespace

int conv_out_size(int in, int kernel, int stride, int pad)
{
    return (in + 2 * pad - kernel) / stride + 1;
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, ConvOptions opts)
{
    const Shape xs = x.shape();
    const Shape ws = weight.shape();
    require(opts.groups >= 1 && xs.c % opts.groups == 0 && ws.n % opts.groups == 0,
            "conv2d: channels not divisible by groups");
    require(ws.c * opts.groups == xs.c, "conv2d: weight " + ws.str() + " does not match input " + xs.str());
    require(ws.h == ws.w, "conv2d: square kernels only");
    ConvGeometry g{ws.c, ws.n / opts.groups, ws.h, xs.h, xs.w,
                   conv_out_size(xs.h, ws.h, opts.stride, opts.pad), conv_out_size(xs.w, ws.w, opts.stride, opts.pad),
                   opts};
    require(g.out_h >= 1 && g.out_w >= 1, "conv2d: input " + xs.str() + " too small for kernel");
    if (bias.defined())
        require(bias.value().numel() == static_cast<std::size_t>(ws.n), "conv2d: bias size mismatch");

    Tensor out(Shape{xs.n, ws.n, g.out_h, g.out_w});
    std::vector<float> col(g.pointwise() ? 0 : static_cast<std::size_t>(g.rows()) * g.cols());
    for (int n = 0; n < xs.n; ++n) {
        for (int grp = 0; grp < opts.groups; ++grp) {
            const float* src = x.value().plane(n, grp * g.cin_group);
            const float* colp = src;
            if (!g.pointwise()) {
                im2col(src, g, col.data());
                colp = col.data();
            }
            ConstMapRM wmat(weight.value().data() + static_cast<std::size_t>(grp) * g.cout_group * g.rows(),
                            g.cout_group, g.rows());
            ConstMapRM cmat(colp, g.rows(), g.cols());
            MapRM omat(out.plane(n, grp * g.cout_group), g.cout_group, g.cols());
            omat.noalias() = wmat * cmat;
        }
        if (bias.defined()) {
            for (int c = 0; c < ws.n; ++c) {
                const float b = bias.value()[c];
                float* p = out.plane(n, c);
                for (int i = 0; i < g.cols(); ++i)
                    p[i] += b;
            }
        }
    }

    return make_result(std::move(out), {x, weight, bias}, [g](Node& self) {
        const Tensor& xv = self.parents[0]->value;
        const Tensor& wv = self.parents[1]->value;
        const bool gx_needed = wants_grad(self, 0);
        const bool gw_needed = wants_grad(self, 1);
        const bool gb_needed = wants_grad(self, 2);
        const int groups = g.opts.groups;
        const int n_batch = xv.shape().n;
        std::vector<float> col(g.pointwise() ? 0 : static_cast<std::size_t>(g.rows()) * g.cols());
        std::vector<float> dcol(col.size());
        for (int n = 0; n < n_batch; ++n) {
            for (int grp = 0; grp < groups; ++grp) {
                ConstMapRM dout(self.grad.plane(n, grp * g.cout_group), g.cout_group, g.cols());
                if (gw_needed) {
                    const float* src = xv.plane(n, grp * g.cin_group);
                    const float* colp = src;
                    if (!g.pointwise()) {
                        im2col(src, g, col.data());
                        colp = col.data();
                    }
                    ConstMapRM cmat(colp, g.rows(), g.cols());
                    MapRM dw(parent_grad(self, 1).data() + static_cast<std::size_t>(grp) * g.cout_group * g.rows(),
                             g.cout_group, g.rows());
                    dw.noalias() += dout * cmat.transpose();
                }
                if (gx_needed) {
                    ConstMapRM wmat(wv.data() + static_cast<std::size_t>(grp) * g.cout_group * g.rows(),
                                    g.cout_group, g.rows());
                    if (g.pointwise()) {
                        MapRM dx(parent_grad(self, 0).plane(n, grp * g.cin_group), g.rows(), g.cols());
                        dx.noalias() += wmat.transpose() * dout;
                    } else {
                        MapRM dc(dcol.data(), g.rows(), g.cols());
                        dc.noalias() = wmat.transpose() * dout;
                        col2im(dcol.data(), g, parent_grad(self, 0).plane(n, grp * g.cin_group));
                    }
                }
            }
            if (gb_needed) {
                auto& gb = parent_grad(self, 2);
                for (int c = 0; c < self.value.shape().c; ++c) {
                    const float* p = self.grad.plane(n, c);
                    double acc = 0.0;
                    for (int i = 0; i < g.cols(); ++i)
                        acc += p[i];
                    gb[c] += static_cast<float>(acc);
                }
            }
        }
    });
}

Var relu(const Var& x)
{
    return unary(
        x, [](float v) { return v > 0.0f ? v : 0.0f; }, [](float in, float) { return in > 0.0f ? 1.0f : 0.0f; });
}

Var sigmoid(const Var& x)
{
    return unary(
        x, [](float v) { return 1.0f / (1.0f + std::exp(-v)); }, [](float, float y) { return y * (1.0f - y); });
}

Var affine(const Var& x, float a, float b)
{
    return unary(x, [a, b](float v) { return a * v + b; }, [a](float, float) { return a; });
}

Var add(const Var& a, const Var& b)
{
    require(a.shape() == b.shape(), "add: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i)
        out[i] = a.value()[i] + b.value()[i];
    return make_result(std::move(out), {a, b}, [](Node& self) {
        for (std::size_t p = 0; p < 2; ++p) {
            if (!wants_grad(self, p))
                continue;
            auto& g = parent_grad(self, p);
            for (std::size_t i = 0; i < g.numel(); ++i)
                g[i] += self.grad[i];
        }
    });
}

Var channel_affine(const Var& x, const Var& scale, const Var& shift)
{
    const Shape s = x.shape();
    require(scale.value().numel() == static_cast<std::size_t>(s.c) && shift.value().numel() == scale.value().numel(),
            "channel_affine: parameter size mismatch");
    Tensor out(s);
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            const float a = scale.value()[c];
            const float b = shift.value()[c];
            const float* src = x.value().plane(n, c);
            float* dst = out.plane(n, c);
            for (std::size_t i = 0; i < s.plane(); ++i)
                dst[i] = a * src[i] + b;
        }
    }
    return make_result(std::move(out), {x, scale, shift}, [](Node& self) {
        const Shape s = self.value.shape();
        const Tensor& xv = self.parents[0]->value;
        const Tensor& sv = self.parents[1]->value;
        for (int n = 0; n < s.n; ++n) {
            for (int c = 0; c < s.c; ++c) {
                const float* g = self.grad.plane(n, c);
                const float* src = xv.plane(n, c);
                if (wants_grad(self, 0)) {
                    float* gx = parent_grad(self, 0).plane(n, c);
                    for (std::size_t i = 0; i < s.plane(); ++i)
                        gx[i] += sv[c] * g[i];
                }
                double ga = 0.0;
                double gb = 0.0;
                for (std::size_t i = 0; i < s.plane(); ++i) {
                    ga += static_cast<double>(g[i]) * src[i];
                    gb += g[i];
                }
                if (wants_grad(self, 1))
                    parent_grad(self, 1)[c] += static_cast<float>(ga);
                if (wants_grad(self, 2))
                    parent_grad(self, 2)[c] += static_cast<float>(gb);
            }
        }
    });
}

Var resize_bilinear(const Var& x, int out_h, int out_w)
{
    const Shape s = x.shape();
    require(out_h >= 1 && out_w >= 1, "resize_bilinear: empty target");
    if (s.h == out_h && s.w == out_w)
        return x;
    auto ty = lerp_table(s.h, out_h);
    auto tx = lerp_table(s.w, out_w);
    Tensor out(Shape{s.n, s.c, out_h, out_w});
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            const float* src = x.value().plane(n, c);
            float* dst = out.plane(n, c);
            for (int oy = 0; oy < out_h; ++oy) {
                const auto& ly = ty[oy];
                const float* r0 = src + static_cast<std::size_t>(ly.i0) * s.w;
                const float* r1 = src + static_cast<std::size_t>(ly.i1) * s.w;
                for (int ox = 0; ox < out_w; ++ox) {
                    const auto& lx = tx[ox];
                    dst[static_cast<std::size_t>(oy) * out_w + ox] =
                        ly.w0 * (lx.w0 * r0[lx.i0] + lx.w1 * r0[lx.i1]) + ly.w1 * (lx.w0 * r1[lx.i0] + lx.w1 * r1[lx.i1]);
                }
            }
        }
    }
    return make_result(std::move(out), {x}, [ty = std::move(ty), tx = std::move(tx), s](Node& self) {
        auto& gx = parent_grad(self, 0);
        const int out_h = static_cast<int>(ty.size());
        const int out_w = static_cast<int>(tx.size());
        for (int n = 0; n < s.n; ++n) {
            for (int c = 0; c < s.c; ++c) {
                const float* g = self.grad.plane(n, c);
                float* dst = gx.plane(n, c);
                for (int oy = 0; oy < out_h; ++oy) {
                    const auto& ly = ty[oy];
                    float* r0 = dst + static_cast<std::size_t>(ly.i0) * s.w;
                    float* r1 = dst + static_cast<std::size_t>(ly.i1) * s.w;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const auto& lx = tx[ox];
                        const float v = g[static_cast<std::size_t>(oy) * out_w + ox];
                        r0[lx.i0] += ly.w0 * lx.w0 * v;
                        r0[lx.i1] += ly.w0 * lx.w1 * v;
                        r1[lx.i0] += ly.w1 * lx.w0 * v;
                        r1[lx.i1] += ly.w1 * lx.w1 * v;
                    }
                }
            }
        }
    });
}

Var max_pool_3x3_s2(const Var& x)
{
    const Shape s = x.shape();
    const int oh = conv_out_size(s.h, 3, 2, 1);
    const int ow = conv_out_size(s.w, 3, 2, 1);
    Tensor out(Shape{s.n, s.c, oh, ow});
    std::vector<std::uint32_t> argmax(out.numel());
    std::size_t o = 0;
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            const float* src = x.value().plane(n, c);
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox, ++o) {
                    float best = -std::numeric_limits<float>::infinity();
                    std::uint32_t best_i = 0;
                    for (int ky = 0; ky < 3; ++ky) {
                        const int iy = oy * 2 - 1 + ky;
                        if (iy < 0 || iy >= s.h)
                            continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            const int ix = ox * 2 - 1 + kx;
                            if (ix < 0 || ix >= s.w)
                                continue;
                            const std::uint32_t i = static_cast<std::uint32_t>(iy * s.w + ix);
                            if (src[i] > best) {
                                best = src[i];
                                best_i = i;
                            }
                        }
                    }
                    out[o] = best;
                    argmax[o] = best_i;
                }
            }
        }
    }
    return make_result(std::move(out), {x}, [argmax = std::move(argmax)](Node& self) {
        auto& gx = parent_grad(self, 0);
        const Shape os = self.value.shape();
        std::size_t o = 0;
        for (int n = 0; n < os.n; ++n) {
            for (int c = 0; c < os.c; ++c) {
                float* dst = gx.plane(n, c);
                for (std::size_t i = 0; i < os.plane(); ++i, ++o)
                    dst[argmax[o]] += self.grad[o];
            }
        }
    });
}

Var global_avg_pool(const Var& x)
{
    const Shape s = x.shape();
    Tensor out(Shape{s.n, s.c, 1, 1});
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            const float* p = x.value().plane(n, c);
            double acc = 0.0;
            for (std::size_t i = 0; i < s.plane(); ++i)
                acc += p[i];
            out.at(n, c, 0, 0) = static_cast<float>(acc / s.plane());
        }
    }
    return make_result(std::move(out), {x}, [s](Node& self) {
        auto& gx = parent_grad(self, 0);
        const float inv = 1.0f / static_cast<float>(s.plane());
        for (int n = 0; n < s.n; ++n) {
            for (int c = 0; c < s.c; ++c) {
                const float g = self.grad.at(n, c, 0, 0) * inv;
                float* dst = gx.plane(n, c);
                for (std::size_t i = 0; i < s.plane(); ++i)
                    dst[i] += g;
            }
        }
    });
}

Var concat_channels(const std::vector<Var>& xs)
{
    require(!xs.empty(), "concat_channels: no inputs");
    Shape s = xs.front().shape();
    int total = 0;
    for (const auto& x : xs) {
        const Shape xsh = x.shape();
        require(xsh.n == s.n && xsh.h == s.h && xsh.w == s.w, "concat_channels: spatial mismatch");
        total += xsh.c;
    }
    Tensor out(Shape{s.n, total, s.h, s.w});
    for (int n = 0; n < s.n; ++n) {
        int c0 = 0;
        for (const auto& x : xs) {
            const int c = x.shape().c;
            std::copy_n(x.value().plane(n, 0), static_cast<std::size_t>(c) * s.plane(), out.plane(n, c0));
            c0 += c;
        }
    }
    return make_result(std::move(out), xs, [](Node& self) {
        const Shape s = self.value.shape();
        int c0 = 0;
        for (std::size_t p = 0; p < self.parents.size(); ++p) {
            const int c = self.parents[p]->value.shape().c;
            if (wants_grad(self, p)) {
                auto& g = parent_grad(self, p);
                for (int n = 0; n < s.n; ++n) {
                    const float* src = self.grad.plane(n, c0);
                    float* dst = g.plane(n, 0);
                    for (std::size_t i = 0; i < static_cast<std::size_t>(c) * s.plane(); ++i)
                        dst[i] += src[i];
                }
            }
            c0 += c;
        }
    });
}

Var softmax_channels(const Var& x)
{
    const Shape s = x.shape();
    Tensor out(s);
    const std::size_t plane = s.plane();
    for (int n = 0; n < s.n; ++n) {
        const float* src = x.value().plane(n, 0);
        float* dst = out.plane(n, 0);
        for (std::size_t i = 0; i < plane; ++i) {
            float peak = src[i];
            for (int c = 1; c < s.c; ++c)
                peak = std::max(peak, src[c * plane + i]);
            double total = 0.0;
            for (int c = 0; c < s.c; ++c) {
                const float e = std::exp(src[c * plane + i] - peak);
                dst[c * plane + i] = e;
                total += e;
            }
            const float inv = static_cast<float>(1.0 / total);
            for (int c = 0; c < s.c; ++c)
                dst[c * plane + i] *= inv;
        }
    }
    return make_result(std::move(out), {x}, [](Node& self) {
        const Shape s = self.value.shape();
        const std::size_t plane = s.plane();
        auto& gx = parent_grad(self, 0);
        for (int n = 0; n < s.n; ++n) {
            const float* y = self.value.plane(n, 0);
            const float* g = self.grad.plane(n, 0);
            float* dst = gx.plane(n, 0);
            for (std::size_t i = 0; i < plane; ++i) {
                double dot = 0.0;
                for (int c = 0; c < s.c; ++c)
                    dot += static_cast<double>(y[c * plane + i]) * g[c * plane + i];
                for (int c = 0; c < s.c; ++c)
                    dst[c * plane + i] += y[c * plane + i] * (g[c * plane + i] - static_cast<float>(dot));
            }
        }
    });
}

Var weighted_sum(const std::vector<Var>& items, const Var& weights)
{
    require(!items.empty(), "weighted_sum: no items");
    const Shape s = items.front().shape();
    const Shape ws = weights.shape();
    require(ws.c == static_cast<int>(items.size()) && ws.n == s.n && ws.h == s.h && ws.w == s.w,
            "weighted_sum: weights " + ws.str() + " do not match " + std::to_string(items.size()) + " items of " +
                s.str());
    for (const auto& item : items)
        require(item.shape() == s, "weighted_sum: item shape mismatch");

    const std::size_t plane = s.plane();
    Tensor out(s);
    for (int n = 0; n < s.n; ++n) {
        for (std::size_t k = 0; k < items.size(); ++k) {
            const float* w = weights.value().plane(n, static_cast<int>(k));
            for (int c = 0; c < s.c; ++c) {
                const float* src = items[k].value().plane(n, c);
                float* dst = out.plane(n, c);
                for (std::size_t i = 0; i < plane; ++i)
                    dst[i] += w[i] * src[i];
            }
        }
    }
    std::vector<Var> parents = items;
    parents.push_back(weights);
    return make_result(std::move(out), std::move(parents), [](Node& self) {
        const Shape s = self.value.shape();
        const std::size_t plane = s.plane();
        const std::size_t k_count = self.parents.size() - 1;
        const Tensor& wv = self.parents[k_count]->value;
        const bool gw_needed = wants_grad(self, k_count);
        for (std::size_t k = 0; k < k_count; ++k) {
            const Tensor& item = self.parents[k]->value;
            const bool gi_needed = wants_grad(self, k);
            for (int n = 0; n < s.n; ++n) {
                const float* w = wv.plane(n, static_cast<int>(k));
                float* gw = gw_needed ? parent_grad(self, k_count).plane(n, static_cast<int>(k)) : nullptr;
                for (int c = 0; c < s.c; ++c) {
                    const float* g = self.grad.plane(n, c);
                    const float* src = item.plane(n, c);
                    if (gi_needed) {
                        float* gi = parent_grad(self, k).plane(n, c);
                        for (std::size_t i = 0; i < plane; ++i)
                            gi[i] += w[i] * g[i];
                    }
                    if (gw) {
                        for (std::size_t i = 0; i < plane; ++i)
                            gw[i] += src[i] * g[i];
                    }
                }
            }
        }
    });
}

Var mean_abs_diff(const Var& a, const Var& b)
{
    require(a.shape() == b.shape(), "mean_abs_diff: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    const std::size_t count = a.value().numel();
    double acc = 0.0;
    for (std::size_t i = 0; i < count; ++i)
        acc += std::abs(static_cast<double>(a.value()[i]) - b.value()[i]);
    Tensor out(Shape{1, 1, 1, 1}, static_cast<float>(acc / count));
    return make_result(std::move(out), {a, b}, [count](Node& self) {
        const Tensor& av = self.parents[0]->value;
        const Tensor& bv = self.parents[1]->value;
        const float g = self.grad[0] / static_cast<float>(count);
        for (std::size_t p = 0; p < 2; ++p) {
            if (!wants_grad(self, p))
                continue;
            auto& dst = parent_grad(self, p);
            const float sign = p == 0 ? 1.0f : -1.0f;
            for (std::size_t i = 0; i < count; ++i) {
                const float d = av[i] - bv[i];
                if (d > 0.0f)
                    dst[i] += sign * g;
                else if (d < 0.0f)
                    dst[i] -= sign * g;
            }
        }
    });
}

Var dot_constant(const Var& x, const Tensor& probe)
{
    require(x.value().numel() == probe.numel(), "dot_constant: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < probe.numel(); ++i)
        acc += static_cast<double>(x.value()[i]) * probe[i];
    Tensor out(Shape{1, 1, 1, 1}, static_cast<float>(acc));
    return make_result(std::move(out), {x}, [probe](Node& self) {
        auto& gx = parent_grad(self, 0);
        for (std::size_t i = 0; i < probe.numel(); ++i)
            gx[i] += self.grad[0] * probe[i];
    });
}

} // namespace dehaze::nn
