#pragma once

// Dense NCHW tensors with tape-based reverse-mode autodiff. Templated on
// the scalar type: float is the training/eval precision, double is the
// gradient-check precision. The tape is thread_local and scoped by the
// Tape object itself (RAII); ops record backward closures only while a
// tape is active and some input requires grad.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dcap/errors.hpp"

namespace dcap {

inline std::size_t numel_of(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int e : shape) {
        if (e <= 0) throw ShapeError("tensor extent must be positive");
        n *= static_cast<std::size_t>(e);
    }
    return n;
}

inline std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ")";
    return os.str();
}

template <typename T>
struct TensorT {
    std::vector<int> shape;
    std::shared_ptr<std::vector<T>> data;
    // Shared, lazily filled gradient buffer. The vector object is created at
    // construction so every handle copy observes a later allocation; it stays
    // empty until an op or caller needs it.
    std::shared_ptr<std::vector<T>> grad;
    bool requires_grad = false;

    TensorT() = default;

    explicit TensorT(std::vector<int> shape_, bool requires_grad_ = false)
        : shape(std::move(shape_)),
          data(std::make_shared<std::vector<T>>(numel_of(shape), T(0))),
          grad(std::make_shared<std::vector<T>>()),
          requires_grad(requires_grad_) {}

    static TensorT zeros(std::vector<int> shape, bool rg = false) {
        return TensorT(std::move(shape), rg);
    }

    static TensorT full(std::vector<int> shape, T value, bool rg = false) {
        TensorT t(std::move(shape), rg);
        std::fill(t.data->begin(), t.data->end(), value);
        return t;
    }

    static TensorT from(std::vector<int> shape, std::vector<T> values, bool rg = false) {
        if (numel_of(shape) != values.size())
            throw ShapeError("from: value count " + std::to_string(values.size()) +
                             " does not match shape " + shape_str(shape));
        TensorT t;
        t.shape = std::move(shape);
        t.data = std::make_shared<std::vector<T>>(std::move(values));
        t.grad = std::make_shared<std::vector<T>>();
        t.requires_grad = rg;
        return t;
    }

    static TensorT scalar(T value, bool rg = false) { return full({1}, value, rg); }

    bool defined() const { return static_cast<bool>(data); }
    std::size_t numel() const { return data ? data->size() : 0; }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }

    T* ptr() { return data->data(); }
    const T* ptr() const { return data->data(); }
    T* grad_ptr() { return grad->data(); }
    const T* grad_ptr() const { return grad->data(); }

    T item() const {
        if (numel() != 1) throw ValueError("item: tensor is not scalar, shape " + shape_str(shape));
        return (*data)[0];
    }

    void ensure_grad() {
        if (!grad) grad = std::make_shared<std::vector<T>>();
        if (grad->size() != numel()) grad->assign(numel(), T(0));
    }

    void zero_grad() {
        if (grad) std::fill(grad->begin(), grad->end(), T(0));
    }
};

using Tensor = TensorT<float>;

// ---------------------------------------------------------------------------
// Tape

template <typename T>
class Tape {
public:
    Tape() {
        prev_ = current();
        current() = this;
    }
    ~Tape() { current() = prev_; }
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active() { return current(); }

    void record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }

    std::size_t size() const { return ops_.size(); }

    // Seeds d(loss)/d(loss) = 1 and replays recorded ops in reverse. The
    // tape is append-only per forward pass, so the reverse order is a valid
    // topological order and cycles cannot occur.
    void backward(TensorT<T>& loss) {
        if (loss.numel() != 1)
            throw ValueError("backward: loss must be scalar, got shape " + shape_str(loss.shape));
        loss.ensure_grad();
        (*loss.grad)[0] = T(1);
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    }

private:
    static Tape*& current() {
        thread_local Tape* cur = nullptr;
        return cur;
    }
    std::vector<std::function<void()>> ops_;
    Tape* prev_ = nullptr;
};

namespace detail {

template <typename T>
bool recording() {
    return Tape<T>::active() != nullptr;
}

template <typename T>
void check_finite(const TensorT<T>& t, const char* op) {
#ifndef NDEBUG
    for (std::size_t i = 0; i < t.numel(); ++i) {
        if (!std::isfinite((*t.data)[i]))
            throw ValueError(std::string("non-finite value after ") + op + " at element " +
                             std::to_string(i));
    }
#else
    (void)t;
    (void)op;
#endif
}

// Prepares an op output: propagates requires_grad and pre-allocates grad
// buffers so backward closures can capture live shared_ptrs.
template <typename T>
bool prime_for_backward(TensorT<T>& out, std::initializer_list<TensorT<T>*> inputs) {
    bool any = false;
    for (TensorT<T>* in : inputs)
        if (in->requires_grad) any = true;
    if (!any || !recording<T>()) {
        out.requires_grad = any;
        return false;
    }
    out.requires_grad = true;
    out.ensure_grad();
    for (TensorT<T>* in : inputs)
        if (in->requires_grad) in->ensure_grad();
    return true;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Matrix kernels (row-major). K is always the innermost accumulation index,
// in ascending order, so the im2col conv path sums in the same order as the
// direct loop and the two are bit-comparable.

namespace detail {

// C[M,N] += A[M,K] * B[K,N]
template <typename T>
void gemm_nn(int M, int N, int K, const T* A, const T* B, T* C) {
    for (int i = 0; i < M; ++i) {
        T* c = C + static_cast<std::size_t>(i) * N;
        const T* a = A + static_cast<std::size_t>(i) * K;
        for (int k = 0; k < K; ++k) {
            const T av = a[k];
            const T* b = B + static_cast<std::size_t>(k) * N;
            for (int j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

// C[M,N] += A^T * B where A is [K,M]
template <typename T>
void gemm_tn(int M, int N, int K, const T* A, const T* B, T* C) {
    for (int i = 0; i < M; ++i) {
        T* c = C + static_cast<std::size_t>(i) * N;
        for (int k = 0; k < K; ++k) {
            const T av = A[static_cast<std::size_t>(k) * M + i];
            const T* b = B + static_cast<std::size_t>(k) * N;
            for (int j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

// C[M,N] += A * B^T where B is [N,K]
template <typename T>
void gemm_nt(int M, int N, int K, const T* A, const T* B, T* C) {
    for (int i = 0; i < M; ++i) {
        const T* a = A + static_cast<std::size_t>(i) * K;
        T* c = C + static_cast<std::size_t>(i) * N;
        for (int j = 0; j < N; ++j) {
            const T* b = B + static_cast<std::size_t>(j) * K;
            T acc = 0;
            for (int k = 0; k < K; ++k) acc += a[k] * b[k];
            c[j] += acc;
        }
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Convolution

template <typename T>
struct ConvParamsT {
    TensorT<T> weight; // (Cout, Cin, k, k), square kernels only
    TensorT<T> bias;   // (Cout)
    int stride = 1;
    int dilation = 1;
    int pad = 0;
};

using ConvParams = ConvParamsT<float>;

// Blocks only ever build square kernels, but the core accepts rectangular
// ones (a 1-D signal under a 1xK kernel is the degenerate case).
struct ConvGeometry {
    int n, cin, h, w;
    int cout, kh, kw;
    int stride, dilation, pad;
    int ho, wo;
};

template <typename T>
inline ConvGeometry conv_geometry(const TensorT<T>& x, const ConvParamsT<T>& p) {
    if (x.rank() != 4) throw ShapeError("conv2d: input must be NCHW, got " + shape_str(x.shape));
    if (p.weight.rank() != 4)
        throw ShapeError("conv2d: weight must be (Cout,Cin,Kh,Kw), got " + shape_str(p.weight.shape));
    if (p.dilation < 1 || p.stride < 1 || p.pad < 0)
        throw ValueError("conv2d: stride/dilation must be >= 1 and pad >= 0");
    ConvGeometry g;
    g.n = x.dim(0);
    g.cin = x.dim(1);
    g.h = x.dim(2);
    g.w = x.dim(3);
    g.cout = p.weight.dim(0);
    g.kh = p.weight.dim(2);
    g.kw = p.weight.dim(3);
    g.stride = p.stride;
    g.dilation = p.dilation;
    g.pad = p.pad;
    if (p.weight.dim(1) != g.cin)
        throw ShapeError("conv2d: input has " + std::to_string(g.cin) + " channels, weight expects " +
                         std::to_string(p.weight.dim(1)));
    if (p.bias.numel() != static_cast<std::size_t>(g.cout))
        throw ShapeError("conv2d: bias length must equal Cout");
    const int effh = g.dilation * (g.kh - 1) + 1;
    const int effw = g.dilation * (g.kw - 1) + 1;
    g.ho = (g.h + 2 * g.pad - effh) / g.stride + 1;
    g.wo = (g.w + 2 * g.pad - effw) / g.stride + 1;
    if (effh > g.h + 2 * g.pad || effw > g.w + 2 * g.pad || g.ho <= 0 || g.wo <= 0)
        throw GeometryError("conv2d: effective kernel exceeds padded input " + shape_str(x.shape));
    return g;
}

namespace detail {

// Scatters one image into the (Cin*k*k) x (Ho*Wo) patch matrix.
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
    const int hw = g.ho * g.wo;
    for (int c = 0; c < g.cin; ++c) {
        const T* plane = x + static_cast<std::size_t>(c) * g.h * g.w;
        for (int ki = 0; ki < g.kh; ++ki) {
            for (int kj = 0; kj < g.kw; ++kj) {
                T* row = col + static_cast<std::size_t>((c * g.kh + ki) * g.kw + kj) * hw;
                for (int oi = 0; oi < g.ho; ++oi) {
                    const int ii = oi * g.stride - g.pad + ki * g.dilation;
                    if (ii < 0 || ii >= g.h) {
                        std::fill(row + oi * g.wo, row + (oi + 1) * g.wo, T(0));
                        continue;
                    }
                    const T* src = plane + static_cast<std::size_t>(ii) * g.w;
                    for (int oj = 0; oj < g.wo; ++oj) {
                        const int jj = oj * g.stride - g.pad + kj * g.dilation;
                        row[oi * g.wo + oj] = (jj >= 0 && jj < g.w) ? src[jj] : T(0);
                    }
                }
            }
        }
    }
}

// Inverse scatter-add of im2col.
template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* x) {
    const int hw = g.ho * g.wo;
    for (int c = 0; c < g.cin; ++c) {
        T* plane = x + static_cast<std::size_t>(c) * g.h * g.w;
        for (int ki = 0; ki < g.kh; ++ki) {
            for (int kj = 0; kj < g.kw; ++kj) {
                const T* row = col + static_cast<std::size_t>((c * g.kh + ki) * g.kw + kj) * hw;
                for (int oi = 0; oi < g.ho; ++oi) {
                    const int ii = oi * g.stride - g.pad + ki * g.dilation;
                    if (ii < 0 || ii >= g.h) continue;
                    T* dst = plane + static_cast<std::size_t>(ii) * g.w;
                    for (int oj = 0; oj < g.wo; ++oj) {
                        const int jj = oj * g.stride - g.pad + kj * g.dilation;
                        if (jj >= 0 && jj < g.w) dst[jj] += row[oi * g.wo + oj];
                    }
                }
            }
        }
    }
}

// Naive direct loop; the reference path im2col is bit-compared against.
template <typename T>
void conv2d_forward_direct(const T* x, const T* w, const T* b, const ConvGeometry& g, T* y) {
    const int hw = g.ho * g.wo;
    for (int n = 0; n < g.n; ++n) {
        const T* xn = x + static_cast<std::size_t>(n) * g.cin * g.h * g.w;
        T* yn = y + static_cast<std::size_t>(n) * g.cout * hw;
        for (int co = 0; co < g.cout; ++co) {
            const T* wc = w + static_cast<std::size_t>(co) * g.cin * g.kh * g.kw;
            T* plane = yn + static_cast<std::size_t>(co) * hw;
            std::fill(plane, plane + hw, b[co]);
            for (int ci = 0; ci < g.cin; ++ci) {
                const T* xp = xn + static_cast<std::size_t>(ci) * g.h * g.w;
                for (int ki = 0; ki < g.kh; ++ki) {
                    for (int kj = 0; kj < g.kw; ++kj) {
                        const T wv = wc[(ci * g.kh + ki) * g.kw + kj];
                        for (int oi = 0; oi < g.ho; ++oi) {
                            const int ii = oi * g.stride - g.pad + ki * g.dilation;
                            if (ii < 0 || ii >= g.h) continue;
                            for (int oj = 0; oj < g.wo; ++oj) {
                                const int jj = oj * g.stride - g.pad + kj * g.dilation;
                                if (jj < 0 || jj >= g.w) continue;
                                plane[oi * g.wo + oj] += wv * xp[ii * g.w + jj];
                            }
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_forward_im2col(const T* x, const T* w, const T* b, const ConvGeometry& g, T* y) {
    const int hw = g.ho * g.wo;
    const int kk = g.cin * g.kh * g.kw;
    const bool needs_col = !(g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0);
    std::vector<T> col;
    if (needs_col) col.resize(static_cast<std::size_t>(kk) * hw);
    for (int n = 0; n < g.n; ++n) {
        const T* xn = x + static_cast<std::size_t>(n) * g.cin * g.h * g.w;
        T* yn = y + static_cast<std::size_t>(n) * g.cout * hw;
        const T* cp = xn;
        if (needs_col) {
            im2col(xn, g, col.data());
            cp = col.data();
        }
        for (int co = 0; co < g.cout; ++co)
            std::fill(yn + static_cast<std::size_t>(co) * hw, yn + static_cast<std::size_t>(co + 1) * hw,
                      b[co]);
        gemm_nn(g.cout, hw, kk, w, cp, yn);
    }
}

} // namespace detail

// Dilated 2-D convolution over NCHW, zero padded. Output value at each site
// is sum_k w[k] * x[i + d*k] + bias, generalized to two spatial dims.
template <typename T>
TensorT<T> conv2d(const TensorT<T>& x_in, const ConvParamsT<T>& p) {
    const ConvGeometry g = conv_geometry(x_in, p);
    TensorT<T> out({g.n, g.cout, g.ho, g.wo});
    detail::conv2d_forward_im2col(x_in.ptr(), p.weight.ptr(), p.bias.ptr(), g, out.ptr());
    detail::check_finite(out, "conv2d");

    TensorT<T> x = x_in, w = p.weight, b = p.bias;
    TensorT<T> o = out;
    if (detail::prime_for_backward(out, {&x, &w, &b})) {
        o = out;
        Tape<T>::active()->record([x, w, b, o, g]() mutable {
            const int hw = g.ho * g.wo;
            const int kk = g.cin * g.kh * g.kw;
            const bool needs_col = !(g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0);
            std::vector<T> col, dcol;
            if (needs_col) col.resize(static_cast<std::size_t>(kk) * hw);
            if (x.requires_grad) dcol.resize(static_cast<std::size_t>(kk) * hw);
            const T* dy_all = o.grad_ptr();
            for (int n = 0; n < g.n; ++n) {
                const T* xn = x.ptr() + static_cast<std::size_t>(n) * g.cin * g.h * g.w;
                const T* dy = dy_all + static_cast<std::size_t>(n) * g.cout * hw;
                const T* cp = xn;
                if (needs_col && (w.requires_grad || x.requires_grad)) {
                    detail::im2col(xn, g, col.data());
                    cp = col.data();
                }
                if (w.requires_grad)
                    detail::gemm_nt(g.cout, kk, hw, dy, cp, w.grad_ptr());
                if (b.requires_grad) {
                    T* db = b.grad_ptr();
                    for (int co = 0; co < g.cout; ++co) {
                        T acc = 0;
                        const T* row = dy + static_cast<std::size_t>(co) * hw;
                        for (int i = 0; i < hw; ++i) acc += row[i];
                        db[co] += acc;
                    }
                }
                if (x.requires_grad) {
                    T* dx = x.grad_ptr() + static_cast<std::size_t>(n) * g.cin * g.h * g.w;
                    if (needs_col) {
                        std::fill(dcol.begin(), dcol.end(), T(0));
                        detail::gemm_tn(kk, hw, g.cout, w.ptr(), dy, dcol.data());
                        detail::col2im_add(dcol.data(), g, dx);
                    } else {
                        detail::gemm_tn(kk, hw, g.cout, w.ptr(), dy, dx);
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Pooling

// Max pooling with implicit -inf padding: padded cells never win the max.
// Gradient routes to the argmax; ties break to the first element in
// row-major scan order.
template <typename T>
TensorT<T> maxpool2d(const TensorT<T>& x_in, int k, int stride, int pad) {
    if (x_in.rank() != 4) throw ShapeError("maxpool2d: input must be NCHW");
    if (k < 1 || stride < 1 || pad < 0) throw ValueError("maxpool2d: bad window arguments");
    if (pad >= k) throw ValueError("maxpool2d: pad must be < k");
    const int n = x_in.dim(0), c = x_in.dim(1), h = x_in.dim(2), w = x_in.dim(3);
    const int ho = (h + 2 * pad - k) / stride + 1;
    const int wo = (w + 2 * pad - k) / stride + 1;
    if (k > h + 2 * pad || k > w + 2 * pad || ho <= 0 || wo <= 0)
        throw GeometryError("maxpool2d: window larger than padded input");

    TensorT<T> out({n, c, ho, wo});
    auto argmax = std::make_shared<std::vector<std::int32_t>>(out.numel());
    const T* xp = x_in.ptr();
    T* yp = out.ptr();
    std::size_t oi_flat = 0;
    for (int ni = 0; ni < n; ++ni) {
        for (int ci = 0; ci < c; ++ci) {
            const T* plane = xp + (static_cast<std::size_t>(ni) * c + ci) * h * w;
            for (int oy = 0; oy < ho; ++oy) {
                for (int ox = 0; ox < wo; ++ox, ++oi_flat) {
                    T best = -std::numeric_limits<T>::infinity();
                    int best_idx = -1;
                    for (int ky = 0; ky < k; ++ky) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            const int ix = ox * stride - pad + kx;
                            if (ix < 0 || ix >= w) continue;
                            const T v = plane[iy * w + ix];
                            if (v > best) {
                                best = v;
                                best_idx = iy * w + ix;
                            }
                        }
                    }
                    yp[oi_flat] = best;
                    (*argmax)[oi_flat] = best_idx;
                }
            }
        }
    }
    detail::check_finite(out, "maxpool2d");

    TensorT<T> x = x_in;
    if (detail::prime_for_backward(out, {&x})) {
        TensorT<T> o = out;
        const std::size_t plane_sz = static_cast<std::size_t>(h) * w;
        const std::size_t oplane_sz = static_cast<std::size_t>(ho) * wo;
        Tape<T>::active()->record([x, o, argmax, plane_sz, oplane_sz]() mutable {
            const T* dy = o.grad_ptr();
            T* dx = x.grad_ptr();
            const std::size_t planes = o.numel() / oplane_sz;
            for (std::size_t p = 0; p < planes; ++p)
                for (std::size_t i = 0; i < oplane_sz; ++i) {
                    const std::size_t oi = p * oplane_sz + i;
                    dx[p * plane_sz + static_cast<std::size_t>((*argmax)[oi])] += dy[oi];
                }
        });
    }
    return out;
}

// Per-channel spatial mean: NCHW -> NC11.
template <typename T>
TensorT<T> global_avg_pool(const TensorT<T>& x_in) {
    if (x_in.rank() != 4) throw ShapeError("global_avg_pool: input must be NCHW");
    const int n = x_in.dim(0), c = x_in.dim(1), h = x_in.dim(2), w = x_in.dim(3);
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    TensorT<T> out({n, c, 1, 1});
    const T* xp = x_in.ptr();
    T* yp = out.ptr();
    for (int i = 0; i < n * c; ++i) {
        T acc = 0;
        const T* plane = xp + static_cast<std::size_t>(i) * hw;
        for (std::size_t j = 0; j < hw; ++j) acc += plane[j];
        yp[i] = acc / static_cast<T>(hw);
    }
    detail::check_finite(out, "global_avg_pool");

    TensorT<T> x = x_in;
    if (detail::prime_for_backward(out, {&x})) {
        TensorT<T> o = out;
        Tape<T>::active()->record([x, o, hw]() mutable {
            const T* dy = o.grad_ptr();
            T* dx = x.grad_ptr();
            const std::size_t planes = o.numel();
            for (std::size_t p = 0; p < planes; ++p) {
                const T g = dy[p] / static_cast<T>(hw);
                T* dst = dx + p * hw;
                for (std::size_t j = 0; j < hw; ++j) dst[j] += g;
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Dense / activations

// Affine map: x (N,F) * W (F,G) + b (G) -> (N,G).
template <typename T>
TensorT<T> dense(const TensorT<T>& x_in, const TensorT<T>& w_in, const TensorT<T>& b_in) {
    if (x_in.rank() != 2 || w_in.rank() != 2)
        throw ShapeError("dense: x and W must be rank-2");
    const int n = x_in.dim(0), f = x_in.dim(1), g = w_in.dim(1);
    if (w_in.dim(0) != f)
        throw ShapeError("dense: inner dimensions disagree, x " + shape_str(x_in.shape) + " W " +
                         shape_str(w_in.shape));
    if (b_in.numel() != static_cast<std::size_t>(g)) throw ShapeError("dense: bias length mismatch");
    TensorT<T> out({n, g});
    T* yp = out.ptr();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < g; ++j) yp[i * g + j] = b_in.ptr()[j];
    detail::gemm_nn(n, g, f, x_in.ptr(), w_in.ptr(), yp);
    detail::check_finite(out, "dense");

    TensorT<T> x = x_in, w = w_in, b = b_in;
    if (detail::prime_for_backward(out, {&x, &w, &b})) {
        TensorT<T> o = out;
        Tape<T>::active()->record([x, w, b, o, n, f, g]() mutable {
            const T* dy = o.grad_ptr();
            if (x.requires_grad) detail::gemm_nt(n, f, g, dy, w.ptr(), x.grad_ptr());
            if (w.requires_grad) detail::gemm_tn(f, g, n, x.ptr(), dy, w.grad_ptr());
            if (b.requires_grad) {
                T* db = b.grad_ptr();
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < g; ++j) db[j] += dy[i * g + j];
            }
        });
    }
    return out;
}

enum class Activation { relu, sigmoid, silu };

// relu'(0) = 0 by convention.
template <typename T>
TensorT<T> activate(const TensorT<T>& x_in, Activation kind) {
    TensorT<T> out(x_in.shape);
    const T* xp = x_in.ptr();
    T* yp = out.ptr();
    const std::size_t n = x_in.numel();
    switch (kind) {
        case Activation::relu:
            for (std::size_t i = 0; i < n; ++i) yp[i] = xp[i] > T(0) ? xp[i] : T(0);
            break;
        case Activation::sigmoid:
            for (std::size_t i = 0; i < n; ++i) yp[i] = T(1) / (T(1) + std::exp(-xp[i]));
            break;
        case Activation::silu:
            for (std::size_t i = 0; i < n; ++i) yp[i] = xp[i] / (T(1) + std::exp(-xp[i]));
            break;
    }
    detail::check_finite(out, "activate");

    TensorT<T> x = x_in;
    if (detail::prime_for_backward(out, {&x})) {
        TensorT<T> o = out;
        Tape<T>::active()->record([x, o, kind]() mutable {
            const T* dy = o.grad_ptr();
            const T* xp = x.ptr();
            const T* yp = o.ptr();
            T* dx = x.grad_ptr();
            const std::size_t n = x.numel();
            switch (kind) {
                case Activation::relu:
                    for (std::size_t i = 0; i < n; ++i)
                        if (xp[i] > T(0)) dx[i] += dy[i];
                    break;
                case Activation::sigmoid:
                    for (std::size_t i = 0; i < n; ++i) dx[i] += dy[i] * yp[i] * (T(1) - yp[i]);
                    break;
                case Activation::silu:
                    for (std::size_t i = 0; i < n; ++i) {
                        const T s = T(1) / (T(1) + std::exp(-xp[i]));
                        dx[i] += dy[i] * (s + xp[i] * s * (T(1) - s));
                    }
                    break;
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Concat / slice along channels

template <typename T>
TensorT<T> concat_channels(const std::vector<TensorT<T>>& xs) {
    if (xs.empty()) throw ShapeError("concat_channels: empty input list");
    const int n = xs[0].dim(0), h = xs[0].dim(2), w = xs[0].dim(3);
    int ctot = 0;
    for (const auto& x : xs) {
        if (x.rank() != 4) throw ShapeError("concat_channels: inputs must be NCHW");
        if (x.dim(0) != n || x.dim(2) != h || x.dim(3) != w)
            throw ShapeError("concat_channels: spatial/batch mismatch " + shape_str(x.shape));
        ctot += x.dim(1);
    }
    TensorT<T> out({n, ctot, h, w});
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    T* yp = out.ptr();
    for (int ni = 0; ni < n; ++ni) {
        std::size_t off = static_cast<std::size_t>(ni) * ctot * hw;
        for (const auto& x : xs) {
            const std::size_t sz = static_cast<std::size_t>(x.dim(1)) * hw;
            std::copy_n(x.ptr() + static_cast<std::size_t>(ni) * sz, sz, yp + off);
            off += sz;
        }
    }

    bool any = false;
    for (const auto& x : xs) any = any || x.requires_grad;
    out.requires_grad = any;
    if (any && detail::recording<T>()) {
        out.ensure_grad();
        auto inputs = std::make_shared<std::vector<TensorT<T>>>(xs);
        for (auto& x : *inputs)
            if (x.requires_grad) x.ensure_grad();
        TensorT<T> o = out;
        Tape<T>::active()->record([inputs, o, n, ctot, hw]() mutable {
            const T* dy = o.grad_ptr();
            for (int ni = 0; ni < n; ++ni) {
                std::size_t off = static_cast<std::size_t>(ni) * ctot * hw;
                for (auto& x : *inputs) {
                    const std::size_t sz = static_cast<std::size_t>(x.dim(1)) * hw;
                    if (x.requires_grad) {
                        T* dx = x.grad_ptr() + static_cast<std::size_t>(ni) * sz;
                        for (std::size_t i = 0; i < sz; ++i) dx[i] += dy[off + i];
                    }
                    off += sz;
                }
            }
        });
    }
    return out;
}

// Channel range [c0, c1) of an NCHW tensor.
template <typename T>
TensorT<T> slice_channels(const TensorT<T>& x_in, int c0, int c1) {
    if (x_in.rank() != 4) throw ShapeError("slice_channels: input must be NCHW");
    const int n = x_in.dim(0), c = x_in.dim(1), h = x_in.dim(2), w = x_in.dim(3);
    if (c0 < 0 || c1 > c || c0 >= c1) throw ShapeError("slice_channels: bad channel range");
    const std::size_t hw = static_cast<std::size_t>(h) * w;
    TensorT<T> out({n, c1 - c0, h, w});
    T* yp = out.ptr();
    for (int ni = 0; ni < n; ++ni)
        std::copy_n(x_in.ptr() + (static_cast<std::size_t>(ni) * c + c0) * hw,
                    static_cast<std::size_t>(c1 - c0) * hw,
                    yp + static_cast<std::size_t>(ni) * (c1 - c0) * hw);

    TensorT<T> x = x_in;
    if (detail::prime_for_backward(out, {&x})) {
        TensorT<T> o = out;
        Tape<T>::active()->record([x, o, c0, c1, c, hw]() mutable {
            const T* dy = o.grad_ptr();
            const int n = x.dim(0);
            for (int ni = 0; ni < n; ++ni) {
                T* dx = x.grad_ptr() + (static_cast<std::size_t>(ni) * c + c0) * hw;
                const T* src = dy + static_cast<std::size_t>(ni) * (c1 - c0) * hw;
                for (std::size_t i = 0; i < static_cast<std::size_t>(c1 - c0) * hw; ++i) dx[i] += src[i];
            }
        });
    }
    return out;
}

// View with a different shape; shares storage, so gradient flows through
// with no copy.
template <typename T>
TensorT<T> reshape(const TensorT<T>& x, std::vector<int> new_shape) {
    if (numel_of(new_shape) != x.numel())
        throw ShapeError("reshape: element count mismatch " + shape_str(x.shape) + " -> " +
                         shape_str(new_shape));
    TensorT<T> out;
    out.shape = std::move(new_shape);
    out.data = x.data;
    out.requires_grad = x.requires_grad;
    if (x.requires_grad && detail::recording<T>()) {
        const_cast<TensorT<T>&>(x).ensure_grad();
        out.grad = x.grad;
    } else {
        out.grad = x.grad;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Elementwise with limited broadcast: shapes equal, or each extent of b is
// either equal to a's or 1 (covers NC11 channel gates and N1HW spatial
// gates against NCHW). Broadcast gradients sum over the broadcast axes.

enum class EOp { add, sub, mul, divide, minimum, maximum };

namespace detail {

inline void broadcast_strides(const std::vector<int>& a, const std::vector<int>& b,
                              std::vector<std::size_t>& bstride) {
    if (a.size() != b.size()) throw ShapeError("elementwise: rank mismatch");
    bstride.assign(a.size(), 0);
    std::size_t s = 1;
    for (int i = static_cast<int>(a.size()) - 1; i >= 0; --i) {
        if (b[static_cast<std::size_t>(i)] != a[static_cast<std::size_t>(i)] &&
            b[static_cast<std::size_t>(i)] != 1)
            throw ShapeError("elementwise: incompatible shapes " + shape_str(a) + " vs " + shape_str(b));
        bstride[static_cast<std::size_t>(i)] = (b[static_cast<std::size_t>(i)] == 1) ? 0 : s;
        s *= static_cast<std::size_t>(b[static_cast<std::size_t>(i)]);
    }
}

} // namespace detail

template <typename T>
TensorT<T> elementwise(const TensorT<T>& a_in, const TensorT<T>& b_in, EOp op) {
    std::vector<std::size_t> bstride;
    detail::broadcast_strides(a_in.shape, b_in.shape, bstride);
    TensorT<T> out(a_in.shape);

    const int rank = a_in.rank();
    std::vector<int> idx(static_cast<std::size_t>(rank), 0);
    const T* ap = a_in.ptr();
    const T* bp = b_in.ptr();
    T* yp = out.ptr();
    const std::size_t n = a_in.numel();
    // Flat iteration with a carried multi-index for the broadcast operand.
    std::size_t bi = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const T a = ap[i], b = bp[bi];
        switch (op) {
            case EOp::add: yp[i] = a + b; break;
            case EOp::sub: yp[i] = a - b; break;
            case EOp::mul: yp[i] = a * b; break;
            case EOp::divide: yp[i] = a / b; break;
            case EOp::minimum: yp[i] = (b < a) ? b : a; break;
            case EOp::maximum: yp[i] = (b > a) ? b : a; break;
        }
        // advance multi-index
        for (int d = rank - 1; d >= 0; --d) {
            bi += bstride[static_cast<std::size_t>(d)];
            if (++idx[static_cast<std::size_t>(d)] < a_in.shape[static_cast<std::size_t>(d)]) break;
            idx[static_cast<std::size_t>(d)] = 0;
            bi -= bstride[static_cast<std::size_t>(d)] *
                  static_cast<std::size_t>(a_in.shape[static_cast<std::size_t>(d)]);
        }
    }
    detail::check_finite(out, "elementwise");

    TensorT<T> a = a_in, b = b_in;
    if (detail::prime_for_backward(out, {&a, &b})) {
        TensorT<T> o = out;
        Tape<T>::active()->record([a, b, o, op, bstride]() mutable {
            const T* dy = o.grad_ptr();
            const T* ap = a.ptr();
            const T* bp = b.ptr();
            T* da = a.requires_grad ? a.grad_ptr() : nullptr;
            T* db = b.requires_grad ? b.grad_ptr() : nullptr;
            const int rank = a.rank();
            std::vector<int> idx(static_cast<std::size_t>(rank), 0);
            std::size_t bi = 0;
            const std::size_t n = a.numel();
            for (std::size_t i = 0; i < n; ++i) {
                const T av = ap[i], bv = bp[bi], g = dy[i];
                T ga = 0, gb = 0;
                switch (op) {
                    case EOp::add: ga = g; gb = g; break;
                    case EOp::sub: ga = g; gb = -g; break;
                    case EOp::mul: ga = g * bv; gb = g * av; break;
                    case EOp::divide: ga = g / bv; gb = -g * av / (bv * bv); break;
                    case EOp::minimum: // ties route to a
                        if (bv < av) gb = g; else ga = g;
                        break;
                    case EOp::maximum:
                        if (bv > av) gb = g; else ga = g;
                        break;
                }
                if (da) da[i] += ga;
                if (db) db[bi] += gb;
                for (int d = rank - 1; d >= 0; --d) {
                    bi += bstride[static_cast<std::size_t>(d)];
                    if (++idx[static_cast<std::size_t>(d)] < a.shape[static_cast<std::size_t>(d)]) break;
                    idx[static_cast<std::size_t>(d)] = 0;
                    bi -= bstride[static_cast<std::size_t>(d)] *
                          static_cast<std::size_t>(a.shape[static_cast<std::size_t>(d)]);
                }
            }
        });
    }
    return out;
}

template <typename T>
TensorT<T> operator+(const TensorT<T>& a, const TensorT<T>& b) { return elementwise(a, b, EOp::add); }
template <typename T>
TensorT<T> operator-(const TensorT<T>& a, const TensorT<T>& b) { return elementwise(a, b, EOp::sub); }
template <typename T>
TensorT<T> operator*(const TensorT<T>& a, const TensorT<T>& b) { return elementwise(a, b, EOp::mul); }
template <typename T>
TensorT<T> operator/(const TensorT<T>& a, const TensorT<T>& b) { return elementwise(a, b, EOp::divide); }
template <typename T>
TensorT<T> tmin(const TensorT<T>& a, const TensorT<T>& b) { return elementwise(a, b, EOp::minimum); }
template <typename T>
TensorT<T> tmax(const TensorT<T>& a, const TensorT<T>& b) { return elementwise(a, b, EOp::maximum); }

// ---------------------------------------------------------------------------
// Scalar-argument and unary ops

template <typename T>
TensorT<T> scale(const TensorT<T>& x_in, T c) {
    TensorT<T> out(x_in.shape);
    const T* xp = x_in.ptr();
    T* yp = out.ptr();
    for (std::size_t i = 0; i < x_in.numel(); ++i) yp[i] = xp[i] * c;
    TensorT<T> x = x_in;
    if (detail::prime_for_backward(out, {&x})) {
        TensorT<T> o = out;
        Tape<T>::active()->record([x, o, c]() mutable {
            const T* dy = o.grad_ptr();
            T* dx = x.grad_ptr();
            for (std::size_t i = 0; i < x.numel(); ++i) dx[i] += dy[i] * c;
        });
    }
    return out;
}

template <typename T>
TensorT<T> add_scalar(const TensorT<T>& x_in, T c) {
    TensorT<T> out(x_in.shape);
    const T* xp = x_in.ptr();
    T* yp = out.ptr();
    for (std::size_t i = 0; i < x_in.numel(); ++i) yp[i] = xp[i] + c;
    TensorT<T> x = x_in;
    if (detail::prime_for_backward(out, {&x})) {
        TensorT<T> o = out;
        Tape<T>::active()->record([x, o]() mutable {
            const T* dy = o.grad_ptr();
            T* dx = x.grad_ptr();
            for (std::size_t i = 0; i < x.numel(); ++i) dx[i] += dy[i];
        });
    }
    return out;
}

template <typename T>
TensorT<T> tatan(const TensorT<T>& x_in) {
    TensorT<T> out(x_in.shape);
    const T* xp = x_in.ptr();
    T* yp = out.ptr();
    for (std::size_t i = 0; i < x_in.numel(); ++i) yp[i] = std::atan(xp[i]);
    TensorT<T> x = x_in;
    if (detail::prime_for_backward(out, {&x})) {
        TensorT<T> o = out;
        Tape<T>::active()->record([x, o]() mutable {
            const T* dy = o.grad_ptr();
            const T* xp = x.ptr();
            T* dx = x.grad_ptr();
            for (std::size_t i = 0; i < x.numel(); ++i) dx[i] += dy[i] / (T(1) + xp[i] * xp[i]);
        });
    }
    return out;
}

// Sum of all elements -> scalar.
template <typename T>
TensorT<T> sum(const TensorT<T>& x_in) {
    T acc = 0;
    const T* xp = x_in.ptr();
    for (std::size_t i = 0; i < x_in.numel(); ++i) acc += xp[i];
    TensorT<T> out = TensorT<T>::scalar(acc);
    TensorT<T> x = x_in;
    if (detail::prime_for_backward(out, {&x})) {
        TensorT<T> o = out;
        Tape<T>::active()->record([x, o]() mutable {
            const T g = o.grad_ptr()[0];
            T* dx = x.grad_ptr();
            for (std::size_t i = 0; i < x.numel(); ++i) dx[i] += g;
        });
    }
    return out;
}

template <typename T>
TensorT<T> mean(const TensorT<T>& x) {
    return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

// Picks elements at flat indices; backward scatter-adds.
template <typename T>
TensorT<T> gather(const TensorT<T>& x_in, const std::vector<std::size_t>& indices) {
    TensorT<T> out({static_cast<int>(indices.size())});
    const T* xp = x_in.ptr();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= x_in.numel()) throw ShapeError("gather: index out of range");
        out.ptr()[i] = xp[indices[i]];
    }
    TensorT<T> x = x_in;
    if (detail::prime_for_backward(out, {&x})) {
        TensorT<T> o = out;
        Tape<T>::active()->record([x, o, indices]() mutable {
            const T* dy = o.grad_ptr();
            T* dx = x.grad_ptr();
            for (std::size_t i = 0; i < indices.size(); ++i) dx[indices[i]] += dy[i];
        });
    }
    return out;
}

// Masked mean binary cross-entropy on logits, numerically stable form
// l = max(t,0) - t*y + log(1 + exp(-|t|)). Elements with mask 0 are
// ignored; the sum is normalized by the mask count. Returns scalar zero
// when the mask is empty.
template <typename T>
TensorT<T> bce_with_logits_masked(const TensorT<T>& logits_in, const std::vector<T>& targets,
                                  const std::vector<T>& mask) {
    if (targets.size() != logits_in.numel() || mask.size() != logits_in.numel())
        throw ShapeError("bce_with_logits_masked: target/mask size mismatch");
    T count = 0;
    for (T m : mask) count += m;
    if (count <= T(0)) return TensorT<T>::scalar(T(0));

    const T* tp = logits_in.ptr();
    T acc = 0;
    for (std::size_t i = 0; i < logits_in.numel(); ++i) {
        if (mask[i] == T(0)) continue;
        const T t = tp[i], y = targets[i];
        const T l = std::max(t, T(0)) - t * y + std::log1p(std::exp(-std::abs(t)));
        acc += l;
    }
    TensorT<T> out = TensorT<T>::scalar(acc / count);
    TensorT<T> logits = logits_in;
    if (detail::prime_for_backward(out, {&logits})) {
        TensorT<T> o = out;
        Tape<T>::active()->record([logits, o, targets, mask, count]() mutable {
            const T g = o.grad_ptr()[0] / count;
            const T* tp = logits.ptr();
            T* dx = logits.grad_ptr();
            for (std::size_t i = 0; i < logits.numel(); ++i) {
                if (mask[i] == T(0)) continue;
                const T s = T(1) / (T(1) + std::exp(-tp[i]));
                dx[i] += g * (s - targets[i]);
            }
        });
    }
    return out;
}

} // namespace dcap
