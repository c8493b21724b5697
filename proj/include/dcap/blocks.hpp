#pragma once

// Architectural units: ConvBlock, MDRC (parallel dilated branches with
// concat-fuse and optional identity residual), AaSP (reduce, two sequential
// max-pools, concat-fuse, SE recalibration), SE channel attention, SSCA
// (7x7 spatial gate x pooled 1x1 channel gate), SPPF, and a simplified C3
// that can host MDRC branches in its bottlenecks.

#include <cmath>
#include <optional>
#include <vector>

#include "dcap/rng.hpp"
#include "dcap/tensor.hpp"

namespace dcap {

// Kaiming-uniform fan-in init, zero bias.
template <typename T>
ConvParamsT<T> make_conv(int cin, int cout, int k, int stride, int dilation, int pad, Rng& rng) {
    ConvParamsT<T> p;
    p.weight = TensorT<T>({cout, cin, k, k}, true);
    p.bias = TensorT<T>({cout}, true);
    p.stride = stride;
    p.dilation = dilation;
    p.pad = pad;
    const double bound = std::sqrt(6.0 / (static_cast<double>(cin) * k * k));
    for (auto& v : *p.weight.data) v = static_cast<T>(rng.uniform(-bound, bound));
    return p;
}

template <typename T>
struct DenseParamsT {
    TensorT<T> weight; // (F, G)
    TensorT<T> bias;   // (G)
};

template <typename T>
DenseParamsT<T> make_dense(int f, int g, Rng& rng) {
    DenseParamsT<T> p;
    p.weight = TensorT<T>({f, g}, true);
    p.bias = TensorT<T>({g}, true);
    const double bound = std::sqrt(6.0 / static_cast<double>(f));
    for (auto& v : *p.weight.data) v = static_cast<T>(rng.uniform(-bound, bound));
    return p;
}

template <typename T>
void collect(std::vector<TensorT<T>*>& out, ConvParamsT<T>& p) {
    out.push_back(&p.weight);
    out.push_back(&p.bias);
}

template <typename T>
void collect(std::vector<TensorT<T>*>& out, DenseParamsT<T>& p) {
    out.push_back(&p.weight);
    out.push_back(&p.bias);
}

// ---------------------------------------------------------------------------

template <typename T>
struct ConvBlockT {
    ConvParamsT<T> conv;
    Activation act = Activation::silu;

    ConvBlockT() = default;
    ConvBlockT(int cin, int cout, int k, int stride, Rng& rng)
        : conv(make_conv<T>(cin, cout, k, stride, 1, (k - 1) / 2, rng)) {}

    TensorT<T> forward(const TensorT<T>& x) const { return activate(conv2d(x, conv), act); }

    void params(std::vector<TensorT<T>*>& out) { collect(out, conv); }
};

// ---------------------------------------------------------------------------

// Parallel dilated 3x3 branches (padding d keeps every branch at the same
// extent), channel concat, 1x1 fuse back to c2. Identity residual when
// c1 == c2 and stride == 1.
template <typename T>
struct MDRCBlockT {
    int c1 = 0, c2 = 0, stride = 1;
    std::vector<int> dilations;
    std::vector<ConvParamsT<T>> branches;
    ConvParamsT<T> fuse;

    MDRCBlockT() = default;
    MDRCBlockT(int c1_, int c2_, std::vector<int> dilations_, int stride_, Rng& rng)
        : c1(c1_), c2(c2_), stride(stride_), dilations(std::move(dilations_)) {
        for (int d : dilations) branches.push_back(make_conv<T>(c1, c2, 3, stride, d, d, rng));
        fuse = make_conv<T>(static_cast<int>(dilations.size()) * c2, c2, 1, 1, 1, 0, rng);
    }

    bool residual() const { return c1 == c2 && stride == 1; }

    TensorT<T> forward(const TensorT<T>& x) const {
        if (x.dim(1) != c1)
            throw ShapeError("mdrc: input has " + std::to_string(x.dim(1)) + " channels, expected " +
                             std::to_string(c1));
        std::vector<TensorT<T>> outs;
        outs.reserve(branches.size());
        for (const auto& b : branches) outs.push_back(activate(conv2d(x, b), Activation::silu));
        TensorT<T> fused = activate(conv2d(concat_channels(outs), fuse), Activation::silu);
        return residual() ? fused + x : fused;
    }

    void params(std::vector<TensorT<T>*>& out) {
        for (auto& b : branches) collect(out, b);
        collect(out, fuse);
    }
};

// ---------------------------------------------------------------------------

// Squeeze-excitation: global average pool, bottleneck MLP with reduction 16
// (clamped to at least one hidden unit), sigmoid gates, per-channel rescale.
template <typename T>
struct SEAttentionT {
    int channels = 0;
    DenseParamsT<T> w1, w2;

    SEAttentionT() = default;
    SEAttentionT(int channels_, Rng& rng) : channels(channels_) {
        const int hidden = std::max(channels / 16, 1);
        w1 = make_dense<T>(channels, hidden, rng);
        w2 = make_dense<T>(hidden, channels, rng);
    }

    TensorT<T> forward(const TensorT<T>& x) const {
        if (x.dim(1) != channels) throw ShapeError("se: channel mismatch");
        const int n = x.dim(0);
        TensorT<T> z = reshape(global_avg_pool(x), {n, channels});
        TensorT<T> h = activate(dense(z, w1.weight, w1.bias), Activation::relu);
        TensorT<T> s = activate(dense(h, w2.weight, w2.bias), Activation::sigmoid);
        return x * reshape(s, {n, channels, 1, 1});
    }

    void params(std::vector<TensorT<T>*>& out) {
        collect(out, w1);
        collect(out, w2);
    }
};

// ---------------------------------------------------------------------------

// AaSP: 1x1 reduce, two sequential same-extent max-pools (k = 5 then 9),
// concat {x1, y1, y2}, 1x1 fuse, then SE recalibration.
template <typename T>
struct AaSPBlockT {
    int c1 = 0, c2 = 0;
    ConvParamsT<T> reduce, fuse;
    SEAttentionT<T> se;

    static constexpr int kPool1 = 5;
    static constexpr int kPool2 = 9;

    AaSPBlockT() = default;
    AaSPBlockT(int c1_, int c2_, Rng& rng) : c1(c1_), c2(c2_) {
        const int ch = std::max(c1 / 2, 1);
        reduce = make_conv<T>(c1, ch, 1, 1, 1, 0, rng);
        fuse = make_conv<T>(3 * ch, c2, 1, 1, 1, 0, rng);
        se = SEAttentionT<T>(c2, rng);
    }

    TensorT<T> forward(const TensorT<T>& x) const {
        if (x.dim(1) != c1) throw ShapeError("aasp: channel mismatch");
        TensorT<T> x1 = activate(conv2d(x, reduce), Activation::silu);
        TensorT<T> y1 = maxpool2d(x1, kPool1, 1, (kPool1 - 1) / 2);
        TensorT<T> y2 = maxpool2d(y1, kPool2, 1, (kPool2 - 1) / 2);
        TensorT<T> fused = activate(conv2d(concat_channels<T>({x1, y1, y2}), fuse), Activation::silu);
        return se.forward(fused);
    }

    void params(std::vector<TensorT<T>*>& out) {
        collect(out, reduce);
        collect(out, fuse);
        se.params(out);
    }
};

// ---------------------------------------------------------------------------

// SSCA: Ms = sigmoid(7x7 conv -> 1 channel), Mc = sigmoid(1x1 conv over the
// pooled NC11 descriptor), Y = X (*) Ms (*) Mc with double broadcast.
template <typename T>
struct SSCABlockT {
    int channels = 0;
    ConvParamsT<T> spatial_conv; // C -> 1, k=7, pad 3
    ConvParamsT<T> channel_conv; // C -> C, 1x1 on NC11

    SSCABlockT() = default;
    SSCABlockT(int channels_, Rng& rng) : channels(channels_) {
        spatial_conv = make_conv<T>(channels, 1, 7, 1, 1, 3, rng);
        channel_conv = make_conv<T>(channels, channels, 1, 1, 1, 0, rng);
    }

    TensorT<T> forward(const TensorT<T>& x) const {
        if (x.dim(1) != channels) throw ShapeError("ssca: channel mismatch");
        TensorT<T> ms = activate(conv2d(x, spatial_conv), Activation::sigmoid);            // N1HW
        TensorT<T> mc = activate(conv2d(global_avg_pool(x), channel_conv), Activation::sigmoid); // NC11
        return x * ms * mc;
    }

    void params(std::vector<TensorT<T>*>& out) {
        collect(out, spatial_conv);
        collect(out, channel_conv);
    }
};

// ---------------------------------------------------------------------------

// SPPF: 1x1 reduce to c1/2, three chained k=5 stride-1 same-pad max-pools,
// concat of the four maps, 1x1 fuse. Equivalent to parallel {5,9,13} SPP.
template <typename T>
struct SPPFBlockT {
    int c1 = 0, c2 = 0;
    ConvParamsT<T> reduce, fuse;

    SPPFBlockT() = default;
    SPPFBlockT(int c1_, int c2_, Rng& rng) : c1(c1_), c2(c2_) {
        const int ch = std::max(c1 / 2, 1);
        reduce = make_conv<T>(c1, ch, 1, 1, 1, 0, rng);
        fuse = make_conv<T>(4 * ch, c2, 1, 1, 1, 0, rng);
    }

    TensorT<T> forward(const TensorT<T>& x) const {
        if (x.dim(1) != c1) throw ShapeError("sppf: channel mismatch");
        TensorT<T> r = activate(conv2d(x, reduce), Activation::silu);
        TensorT<T> p1 = maxpool2d(r, 5, 1, 2);
        TensorT<T> p2 = maxpool2d(p1, 5, 1, 2);
        TensorT<T> p3 = maxpool2d(p2, 5, 1, 2);
        return activate(conv2d(concat_channels<T>({r, p1, p2, p3}), fuse), Activation::silu);
    }

    void params(std::vector<TensorT<T>*>& out) {
        collect(out, reduce);
        collect(out, fuse);
    }
};

// ---------------------------------------------------------------------------

// Bottleneck unit of C3: 1x1 then 3x3 with identity residual. With
// use_mdrc the 3x3 is replaced by parallel dilated branches + 1x1 fuse
// (the Table-V "MDRC in C3 layers" ablation host).
template <typename T>
struct BottleneckT {
    int ch = 0;
    bool use_mdrc = false;
    ConvParamsT<T> cv1;
    ConvParamsT<T> cv2;                     // plain path
    std::vector<ConvParamsT<T>> mdrc_branches; // mdrc path
    ConvParamsT<T> mdrc_fuse;

    BottleneckT() = default;
    BottleneckT(int ch_, bool use_mdrc_, const std::vector<int>& dilations, Rng& rng)
        : ch(ch_), use_mdrc(use_mdrc_) {
        cv1 = make_conv<T>(ch, ch, 1, 1, 1, 0, rng);
        if (use_mdrc) {
            for (int d : dilations) mdrc_branches.push_back(make_conv<T>(ch, ch, 3, 1, d, d, rng));
            mdrc_fuse = make_conv<T>(static_cast<int>(dilations.size()) * ch, ch, 1, 1, 1, 0, rng);
        } else {
            cv2 = make_conv<T>(ch, ch, 3, 1, 1, 1, rng);
        }
    }

    TensorT<T> forward(const TensorT<T>& x) const {
        TensorT<T> y = activate(conv2d(x, cv1), Activation::silu);
        if (use_mdrc) {
            std::vector<TensorT<T>> outs;
            for (const auto& b : mdrc_branches) outs.push_back(activate(conv2d(y, b), Activation::silu));
            y = activate(conv2d(concat_channels(outs), mdrc_fuse), Activation::silu);
        } else {
            y = activate(conv2d(y, cv2), Activation::silu);
        }
        return y + x;
    }

    void params(std::vector<TensorT<T>*>& out) {
        collect(out, cv1);
        if (use_mdrc) {
            for (auto& b : mdrc_branches) collect(out, b);
            collect(out, mdrc_fuse);
        } else {
            collect(out, cv2);
        }
    }
};

// Two-path cross-stage block: parallel 1x1 reductions, a bottleneck chain on
// one path, concat, 1x1 fuse.
template <typename T>
struct C3BlockT {
    int c1 = 0, c2 = 0;
    ConvParamsT<T> cv1, cv2, cv3;
    std::vector<BottleneckT<T>> bottlenecks;

    C3BlockT() = default;
    C3BlockT(int c1_, int c2_, int n, bool mdrc_bottlenecks, const std::vector<int>& dilations, Rng& rng)
        : c1(c1_), c2(c2_) {
        const int ch = std::max(c2 / 2, 1);
        cv1 = make_conv<T>(c1, ch, 1, 1, 1, 0, rng);
        cv2 = make_conv<T>(c1, ch, 1, 1, 1, 0, rng);
        for (int i = 0; i < n; ++i) bottlenecks.emplace_back(ch, mdrc_bottlenecks, dilations, rng);
        cv3 = make_conv<T>(2 * ch, c2, 1, 1, 1, 0, rng);
    }

    TensorT<T> forward(const TensorT<T>& x) const {
        if (x.dim(1) != c1) throw ShapeError("c3: channel mismatch");
        TensorT<T> a = activate(conv2d(x, cv1), Activation::silu);
        TensorT<T> b = activate(conv2d(x, cv2), Activation::silu);
        for (const auto& bn : bottlenecks) a = bn.forward(a);
        return activate(conv2d(concat_channels<T>({a, b}), cv3), Activation::silu);
    }

    void params(std::vector<TensorT<T>*>& out) {
        collect(out, cv1);
        collect(out, cv2);
        for (auto& bn : bottlenecks) bn.params(out);
        collect(out, cv3);
    }
};

using ConvBlock = ConvBlockT<float>;
using MDRCBlock = MDRCBlockT<float>;
using SEAttention = SEAttentionT<float>;
using AaSPBlock = AaSPBlockT<float>;
using SSCABlock = SSCABlockT<float>;
using SPPFBlock = SPPFBlockT<float>;
using C3Block = C3BlockT<float>;

} // namespace dcap
