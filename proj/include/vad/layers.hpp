#pragma once

// Differentiable layer primitives: time-distributed conv / transposed conv,
// ConvLSTM2D, layer/batch normalization, dense. Every layer caches what its
// backward pass needs; parameters live in a ParameterStore shared by the model.
// Scalar type is a template parameter: float in production, double for
// finite-difference gradient checking.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "vad/error.hpp"
#include "vad/tensor.hpp"

namespace vad {

// ---------------------------------------------------------------------------
// Specs and parameter counting
// ---------------------------------------------------------------------------

enum class Padding { same, valid };
enum class Activation { linear, relu, sigmoid, tanh };

struct Conv2DSpec {
    int in_channels = 0;
    int filters = 0;
    int kernel_h = 1, kernel_w = 1;
    int stride_h = 1, stride_w = 1;
    Padding padding = Padding::same;
    bool transposed = false;
    Activation activation = Activation::linear;
};

struct ConvLSTMSpec {
    int in_channels = 0;
    int filters = 0;
    int kernel_h = 3, kernel_w = 3;
    bool return_sequences = true;
};

enum class NormKind { layer_norm, batch_norm };

struct NormSpec {
    NormKind kind = NormKind::layer_norm;
    int channels = 0;
    double epsilon = 1e-3;
    double momentum = 0.99;  // batch_norm running-statistics decay
};

struct DenseSpec {
    long long in_dim = 0;
    long long out_dim = 0;
};

struct ParamCount {
    long long total = 0;
    long long trainable = 0;
    long long non_trainable = 0;
};

inline ParamCount param_count(const Conv2DSpec& s) {
    const long long n = static_cast<long long>(s.kernel_h) * s.kernel_w * s.in_channels * s.filters + s.filters;
    return {n, n, 0};
}

// Four gates, each with input kernel, recurrent kernel and bias.
inline ParamCount param_count(const ConvLSTMSpec& s) {
    const long long per_gate =
        static_cast<long long>(s.kernel_h) * s.kernel_w * (s.in_channels + s.filters) * s.filters + s.filters;
    return {4 * per_gate, 4 * per_gate, 0};
}

inline ParamCount param_count(const NormSpec& s) {
    const long long c = s.channels;
    if (s.kind == NormKind::layer_norm) return {2 * c, 2 * c, 0};
    return {4 * c, 2 * c, 2 * c};  // gamma/beta trainable, running mean/var not
}

inline ParamCount param_count(const DenseSpec& s) {
    const long long n = s.in_dim * s.out_dim + s.out_dim;
    return {n, n, 0};
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

template <class S>
inline S sigmoid(S v) {
    if (v >= S(0)) {
        const S e = std::exp(-v);
        return S(1) / (S(1) + e);
    }
    const S e = std::exp(v);
    return e / (S(1) + e);
}

template <class S>
inline void apply_activation(S* p, long long n, Activation act) {
    switch (act) {
        case Activation::linear:
            break;
        case Activation::relu:
            for (long long i = 0; i < n; ++i) p[i] = p[i] > S(0) ? p[i] : S(0);
            break;
        case Activation::sigmoid:
            for (long long i = 0; i < n; ++i) p[i] = sigmoid(p[i]);
            break;
        case Activation::tanh:
            for (long long i = 0; i < n; ++i) p[i] = std::tanh(p[i]);
            break;
    }
}

// dL/d(pre-activation) from dL/dy, using the cached post-activation output.
template <class S>
inline void activation_backward(const S* y, S* dy, long long n, Activation act) {
    switch (act) {
        case Activation::linear:
            break;
        case Activation::relu:
            for (long long i = 0; i < n; ++i)
                if (y[i] <= S(0)) dy[i] = S(0);
            break;
        case Activation::sigmoid:
            for (long long i = 0; i < n; ++i) dy[i] *= y[i] * (S(1) - y[i]);
            break;
        case Activation::tanh:
            for (long long i = 0; i < n; ++i) dy[i] *= S(1) - y[i] * y[i];
            break;
    }
}

// ---------------------------------------------------------------------------
// Parameter store
// ---------------------------------------------------------------------------

enum class ParamInit { xavier_uniform, zeros, ones };

template <class S>
struct Param {
    Shape shape;
    std::vector<S> value;
    std::vector<S> grad;  // allocated on first use
    bool trainable = true;
    ParamInit init = ParamInit::zeros;
    long long fan_in = 0, fan_out = 0;

    long long size() const { return static_cast<long long>(value.size()); }

    std::vector<S>& g() {
        if (grad.size() != value.size()) grad.assign(value.size(), S(0));
        return grad;
    }
};

// Named, shaped weight arrays. std::map keeps iteration order (and therefore
// checkpoint payload order) deterministic, and node addresses stable.
template <class S>
class ParameterStore {
public:
    Param<S>& create(const std::string& name, Shape shape, bool trainable, ParamInit init,
                     long long fan_in = 0, long long fan_out = 0) {
        if (entries_.count(name)) throw Error("duplicate parameter name: " + name);
        Param<S> p;
        p.shape = std::move(shape);
        p.value.assign(static_cast<std::size_t>(numel(p.shape)), init == ParamInit::ones ? S(1) : S(0));
        p.trainable = trainable;
        p.init = init;
        p.fan_in = fan_in;
        p.fan_out = fan_out;
        return entries_.emplace(name, std::move(p)).first->second;
    }

    Param<S>* find(const std::string& name) {
        auto it = entries_.find(name);
        return it == entries_.end() ? nullptr : &it->second;
    }
    const Param<S>* find(const std::string& name) const {
        auto it = entries_.find(name);
        return it == entries_.end() ? nullptr : &it->second;
    }

    std::map<std::string, Param<S>>& entries() { return entries_; }
    const std::map<std::string, Param<S>>& entries() const { return entries_; }

    ParamCount counts() const {
        ParamCount c;
        for (const auto& [name, p] : entries_) {
            c.total += p.size();
            (p.trainable ? c.trainable : c.non_trainable) += p.size();
        }
        return c;
    }

    ParamCount counts_with_prefix(const std::string& prefix) const {
        ParamCount c;
        for (const auto& [name, p] : entries_) {
            if (name.rfind(prefix, 0) != 0) continue;
            c.total += p.size();
            (p.trainable ? c.trainable : c.non_trainable) += p.size();
        }
        return c;
    }

    void zero_grads() {
        for (auto& [name, p] : entries_)
            if (!p.grad.empty()) std::fill(p.grad.begin(), p.grad.end(), S(0));
    }

private:
    std::map<std::string, Param<S>> entries_;
};

// ---------------------------------------------------------------------------
// Convolution core: im2col + GEMM, channels-last
// ---------------------------------------------------------------------------

struct ConvGeom {
    int h_in = 0, w_in = 0, c_in = 0;
    int h_out = 0, w_out = 0, filters = 0;
    int kh = 0, kw = 0, sh = 1, sw = 1;
    int pad_top = 0, pad_left = 0;
};

// "same" pads symmetrically with the extra row/column on the bottom/right.
inline ConvGeom conv_geometry(const Conv2DSpec& s, int h, int w) {
    ConvGeom g;
    g.h_in = h;
    g.w_in = w;
    g.c_in = s.in_channels;
    g.filters = s.filters;
    g.kh = s.kernel_h;
    g.kw = s.kernel_w;
    g.sh = s.stride_h;
    g.sw = s.stride_w;
    if (!s.transposed) {
        if (s.padding == Padding::same) {
            g.h_out = (h + g.sh - 1) / g.sh;
            g.w_out = (w + g.sw - 1) / g.sw;
            g.pad_top = std::max((g.h_out - 1) * g.sh + g.kh - h, 0) / 2;
            g.pad_left = std::max((g.w_out - 1) * g.sw + g.kw - w, 0) / 2;
        } else {
            if (h < g.kh || w < g.kw)
                throw ShapeError("valid conv: input smaller than kernel");
            g.h_out = (h - g.kh) / g.sh + 1;
            g.w_out = (w - g.kw) / g.sw + 1;
        }
    } else {
        if (s.padding == Padding::same) {
            g.h_out = h * g.sh;
            g.w_out = w * g.sw;
            g.pad_top = std::max(g.kh - g.sh, 0) / 2;
            g.pad_left = std::max(g.kw - g.sw, 0) / 2;
        } else {
            g.h_out = (h - 1) * g.sh + g.kh;
            g.w_out = (w - 1) * g.sw + g.kw;
        }
    }
    return g;
}

namespace detail {

// col is (h_out*w_out) x (kh*kw*c_in); out-of-bounds taps are zero.
template <class S>
void im2col(const S* x, const ConvGeom& g, S* col) {
    const int C = g.c_in;
    const long long row_len = static_cast<long long>(g.kh) * g.kw * C;
    for (int oh = 0; oh < g.h_out; ++oh) {
        for (int ow = 0; ow < g.w_out; ++ow) {
            S* row = col + (static_cast<long long>(oh) * g.w_out + ow) * row_len;
            for (int ki = 0; ki < g.kh; ++ki) {
                const int ih = oh * g.sh - g.pad_top + ki;
                for (int kj = 0; kj < g.kw; ++kj) {
                    const int iw = ow * g.sw - g.pad_left + kj;
                    S* dst = row + (static_cast<long long>(ki) * g.kw + kj) * C;
                    if (ih < 0 || ih >= g.h_in || iw < 0 || iw >= g.w_in) {
                        std::fill(dst, dst + C, S(0));
                    } else {
                        const S* src = x + (static_cast<long long>(ih) * g.w_in + iw) * C;
                        std::copy(src, src + C, dst);
                    }
                }
            }
        }
    }
}

template <class S>
void col2im_add(const S* col, const ConvGeom& g, S* x) {
    const int C = g.c_in;
    const long long row_len = static_cast<long long>(g.kh) * g.kw * C;
    for (int oh = 0; oh < g.h_out; ++oh) {
        for (int ow = 0; ow < g.w_out; ++ow) {
            const S* row = col + (static_cast<long long>(oh) * g.w_out + ow) * row_len;
            for (int ki = 0; ki < g.kh; ++ki) {
                const int ih = oh * g.sh - g.pad_top + ki;
                if (ih < 0 || ih >= g.h_in) continue;
                for (int kj = 0; kj < g.kw; ++kj) {
                    const int iw = ow * g.sw - g.pad_left + kj;
                    if (iw < 0 || iw >= g.w_in) continue;
                    const S* src = row + (static_cast<long long>(ki) * g.kw + kj) * C;
                    S* dst = x + (static_cast<long long>(ih) * g.w_in + iw) * C;
                    for (int c = 0; c < C; ++c) dst[c] += src[c];
                }
            }
        }
    }
}

// One (H,W,C) slice of a regular convolution. kernel layout (kh,kw,c_in,filters).
template <class S>
void conv_slice_forward(const S* x, const ConvGeom& g, const S* kernel, const S* bias, S* y,
                        std::vector<S>& col, bool accumulate) {
    const long long rows = static_cast<long long>(g.h_out) * g.w_out;
    const long long k = static_cast<long long>(g.kh) * g.kw * g.c_in;
    col.resize(static_cast<std::size_t>(rows * k));
    im2col(x, g, col.data());
    gemm(col.data(), kernel, y, static_cast<int>(rows), static_cast<int>(k), g.filters, accumulate);
    if (bias) {
        for (long long r = 0; r < rows; ++r) {
            S* yr = y + r * g.filters;
            for (int f = 0; f < g.filters; ++f) yr[f] += bias[f];
        }
    }
}

template <class S>
void conv_slice_backward(const S* x, const ConvGeom& g, const S* kernel, const S* dy, S* dx,
                         S* dkernel, S* dbias, std::vector<S>& col, std::vector<S>& dcol) {
    const long long rows = static_cast<long long>(g.h_out) * g.w_out;
    const long long k = static_cast<long long>(g.kh) * g.kw * g.c_in;
    if (dkernel) {
        col.resize(static_cast<std::size_t>(rows * k));
        im2col(x, g, col.data());
        gemm_tn(col.data(), dy, dkernel, static_cast<int>(k), static_cast<int>(rows), g.filters, true);
    }
    if (dbias) {
        for (long long r = 0; r < rows; ++r) {
            const S* dyr = dy + r * g.filters;
            for (int f = 0; f < g.filters; ++f) dbias[f] += dyr[f];
        }
    }
    if (dx) {
        dcol.resize(static_cast<std::size_t>(rows * k));
        gemm_nt(dy, kernel, dcol.data(), static_cast<int>(rows), g.filters, static_cast<int>(k), false);
        col2im_add(dcol.data(), g, dx);
    }
}

// Transposed convolution uses the kernel repacked as (c_in) x (kh*kw*filters).
template <class S>
void pack_tconv_kernel(const S* kernel, const ConvGeom& g, S* packed) {
    const int C = g.c_in, F = g.filters;
    for (int ki = 0; ki < g.kh; ++ki)
        for (int kj = 0; kj < g.kw; ++kj)
            for (int c = 0; c < C; ++c) {
                const S* src = kernel + ((static_cast<long long>(ki) * g.kw + kj) * C + c) * F;
                S* dst = packed + (static_cast<long long>(c) * g.kh * g.kw + ki * g.kw + kj) * F;
                std::copy(src, src + F, dst);
            }
}

template <class S>
void unpack_tconv_kernel_add(const S* packed, const ConvGeom& g, S* dkernel) {
    const int C = g.c_in, F = g.filters;
    for (int ki = 0; ki < g.kh; ++ki)
        for (int kj = 0; kj < g.kw; ++kj)
            for (int c = 0; c < C; ++c) {
                const S* src = packed + (static_cast<long long>(c) * g.kh * g.kw + ki * g.kw + kj) * F;
                S* dst = dkernel + ((static_cast<long long>(ki) * g.kw + kj) * C + c) * F;
                for (int f = 0; f < F; ++f) dst[f] += src[f];
            }
}

// Scatter form: every input pixel contributes a kh*kw*filters patch to the output.
template <class S>
void tconv_slice_forward(const S* x, const ConvGeom& g, const S* packed, const S* bias, S* y,
                         std::vector<S>& cols) {
    const long long in_rows = static_cast<long long>(g.h_in) * g.w_in;
    const long long patch = static_cast<long long>(g.kh) * g.kw * g.filters;
    cols.resize(static_cast<std::size_t>(in_rows * patch));
    gemm(x, packed, cols.data(), static_cast<int>(in_rows), g.c_in, static_cast<int>(patch), false);

    const long long out_n = static_cast<long long>(g.h_out) * g.w_out;
    if (bias) {
        for (long long r = 0; r < out_n; ++r)
            for (int f = 0; f < g.filters; ++f) y[r * g.filters + f] = bias[f];
    } else {
        std::fill(y, y + out_n * g.filters, S(0));
    }
    for (int ih = 0; ih < g.h_in; ++ih)
        for (int iw = 0; iw < g.w_in; ++iw) {
            const S* row = cols.data() + (static_cast<long long>(ih) * g.w_in + iw) * patch;
            for (int ki = 0; ki < g.kh; ++ki) {
                const int oh = ih * g.sh + ki - g.pad_top;
                if (oh < 0 || oh >= g.h_out) continue;
                for (int kj = 0; kj < g.kw; ++kj) {
                    const int ow = iw * g.sw + kj - g.pad_left;
                    if (ow < 0 || ow >= g.w_out) continue;
                    const S* src = row + (static_cast<long long>(ki) * g.kw + kj) * g.filters;
                    S* dst = y + (static_cast<long long>(oh) * g.w_out + ow) * g.filters;
                    for (int f = 0; f < g.filters; ++f) dst[f] += src[f];
                }
            }
        }
}

template <class S>
void tconv_slice_backward(const S* x, const ConvGeom& g, const S* packed, const S* dy, S* dx,
                          S* dpacked, S* dbias, std::vector<S>& dcols) {
    const long long in_rows = static_cast<long long>(g.h_in) * g.w_in;
    const long long patch = static_cast<long long>(g.kh) * g.kw * g.filters;
    dcols.assign(static_cast<std::size_t>(in_rows * patch), S(0));
    for (int ih = 0; ih < g.h_in; ++ih)
        for (int iw = 0; iw < g.w_in; ++iw) {
            S* row = dcols.data() + (static_cast<long long>(ih) * g.w_in + iw) * patch;
            for (int ki = 0; ki < g.kh; ++ki) {
                const int oh = ih * g.sh + ki - g.pad_top;
                if (oh < 0 || oh >= g.h_out) continue;
                for (int kj = 0; kj < g.kw; ++kj) {
                    const int ow = iw * g.sw + kj - g.pad_left;
                    if (ow < 0 || ow >= g.w_out) continue;
                    const S* src = dy + (static_cast<long long>(oh) * g.w_out + ow) * g.filters;
                    S* dst = row + (static_cast<long long>(ki) * g.kw + kj) * g.filters;
                    std::copy(src, src + g.filters, dst);
                }
            }
        }
    if (dpacked)
        gemm_tn(x, dcols.data(), dpacked, g.c_in, static_cast<int>(in_rows), static_cast<int>(patch), true);
    if (dx)
        gemm_nt(dcols.data(), packed, dx, static_cast<int>(in_rows), static_cast<int>(patch), g.c_in, true);
    if (dbias) {
        const long long out_n = static_cast<long long>(g.h_out) * g.w_out;
        for (long long r = 0; r < out_n; ++r)
            for (int f = 0; f < g.filters; ++f) dbias[f] += dy[r * g.filters + f];
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Spec-level free functions (single-slice / single-sequence forms)
// ---------------------------------------------------------------------------

// x is (H,W,C); kernel (kh,kw,c_in,filters); bias (filters).
template <class S>
Tensor<S> conv2d_forward(const Tensor<S>& x, const Conv2DSpec& spec, const Tensor<S>& kernel,
                         const Tensor<S>& bias) {
    if (x.rank() != 3) throw ShapeError("conv2d_forward: expected (H,W,C), got " + shape_str(x.shape));
    if (x.dim(2) != spec.in_channels)
        throw ShapeError("conv2d_forward: input has " + std::to_string(x.dim(2)) + " channels, spec wants " +
                         std::to_string(spec.in_channels));
    const Shape kshape{spec.kernel_h, spec.kernel_w, spec.in_channels, spec.filters};
    if (kernel.shape != kshape)
        throw ShapeError("conv2d_forward: kernel shape " + shape_str(kernel.shape) + " != " + shape_str(kshape));
    if (bias.size() != spec.filters) throw ShapeError("conv2d_forward: bias size mismatch");

    const ConvGeom g = conv_geometry(spec, x.dim(0), x.dim(1));
    Tensor<S> y({g.h_out, g.w_out, g.filters});
    std::vector<S> scratch;
    if (!spec.transposed) {
        detail::conv_slice_forward(x.ptr(), g, kernel.ptr(), bias.ptr(), y.ptr(), scratch, false);
    } else {
        std::vector<S> packed(kernel.data.size());
        detail::pack_tconv_kernel(kernel.ptr(), g, packed.data());
        detail::tconv_slice_forward(x.ptr(), g, packed.data(), bias.ptr(), y.ptr(), scratch);
    }
    apply_activation(y.ptr(), y.size(), spec.activation);
    return y;
}

// Applies a per-frame op with shared parameters to every time slice of (T,...).
template <class S, class Op>
Tensor<S> time_distributed(Op&& frame_op, const Tensor<S>& clip) {
    if (clip.rank() < 2) throw ShapeError("time_distributed: expected (T,...), got " + shape_str(clip.shape));
    const int t_dim = clip.dim(0);
    const long long slice = clip.size() / t_dim;
    Tensor<S> out;
    for (int t = 0; t < t_dim; ++t) {
        Tensor<S> x(Shape(clip.shape.begin() + 1, clip.shape.end()));
        std::copy(clip.ptr() + t * slice, clip.ptr() + (t + 1) * slice, x.ptr());
        Tensor<S> y;
        try {
            y = frame_op(x);
        } catch (const Error& e) {
            throw ShapeError("time_distributed at t=" + std::to_string(t) + ": " + e.what());
        }
        if (t == 0) {
            Shape os{t_dim};
            os.insert(os.end(), y.shape.begin(), y.shape.end());
            out = Tensor<S>(std::move(os));
        }
        std::copy(y.ptr(), y.ptr() + y.size(), out.ptr() + t * y.size());
    }
    return out;
}

namespace detail {

// Gate order along the packed last axis: [input, forget, candidate, output].
// i/f/o use the logistic sigmoid, the candidate uses tanh (no peepholes).
template <class S>
void convlstm_cell(S* gates, const S* c_prev, S* c, S* tanhc, S* h, long long positions, int f_count) {
    for (long long p = 0; p < positions; ++p) {
        S* gp = gates + p * 4 * f_count;
        const S* cp = c_prev + p * f_count;
        S* cn = c + p * f_count;
        S* tc = tanhc + p * f_count;
        S* hp = h + p * f_count;
        for (int f = 0; f < f_count; ++f) {
            const S gi = sigmoid(gp[f]);
            const S gf = sigmoid(gp[f_count + f]);
            const S gg = std::tanh(gp[2 * f_count + f]);
            const S go = sigmoid(gp[3 * f_count + f]);
            gp[f] = gi;
            gp[f_count + f] = gf;
            gp[2 * f_count + f] = gg;
            gp[3 * f_count + f] = go;
            cn[f] = gf * cp[f] + gi * gg;
            tc[f] = std::tanh(cn[f]);
            hp[f] = go * tc[f];
        }
    }
}

}  // namespace detail

// Single-sequence ConvLSTM pass, x (T,H,W,C). Gate convolutions use "same"
// padding, stride 1. Returns (T,H,W,F) when return_sequences, else (H,W,F).
template <class S>
Tensor<S> convlstm_forward(const Tensor<S>& x, const ConvLSTMSpec& spec, const Tensor<S>& kernel_x,
                           const Tensor<S>& kernel_h, const Tensor<S>& bias,
                           const Tensor<S>* h0 = nullptr, const Tensor<S>* c0 = nullptr) {
    if (x.rank() != 4) throw ShapeError("convlstm_forward: expected (T,H,W,C), got " + shape_str(x.shape));
    if (x.dim(3) != spec.in_channels) throw ShapeError("convlstm_forward: channel mismatch");
    const int t_count = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int f_count = spec.filters;
    const Shape kx{spec.kernel_h, spec.kernel_w, spec.in_channels, 4 * f_count};
    const Shape kh{spec.kernel_h, spec.kernel_w, f_count, 4 * f_count};
    if (kernel_x.shape != kx || kernel_h.shape != kh || bias.size() != 4 * f_count)
        throw ShapeError("convlstm_forward: parameter shape mismatch");

    Conv2DSpec gate_x{spec.in_channels, 4 * f_count, spec.kernel_h, spec.kernel_w, 1, 1, Padding::same};
    Conv2DSpec gate_h{f_count, 4 * f_count, spec.kernel_h, spec.kernel_w, 1, 1, Padding::same};
    const ConvGeom gx = conv_geometry(gate_x, h, w);
    const ConvGeom gh = conv_geometry(gate_h, h, w);

    const long long positions = static_cast<long long>(h) * w;
    const long long state = positions * f_count;
    std::vector<S> h_prev(state, S(0)), c_prev(state, S(0));
    if (h0) std::copy(h0->ptr(), h0->ptr() + state, h_prev.data());
    if (c0) std::copy(c0->ptr(), c0->ptr() + state, c_prev.data());
    std::vector<S> gates(positions * 4 * f_count), c_cur(state), tanhc(state), h_cur(state);
    std::vector<S> scratch;

    Tensor<S> seq({t_count, h, w, f_count});
    for (int t = 0; t < t_count; ++t) {
        const S* xt = x.ptr() + static_cast<long long>(t) * positions * spec.in_channels;
        detail::conv_slice_forward(xt, gx, kernel_x.ptr(), bias.ptr(), gates.data(), scratch, false);
        detail::conv_slice_forward(h_prev.data(), gh, kernel_h.ptr(), static_cast<const S*>(nullptr),
                                   gates.data(), scratch, true);
        detail::convlstm_cell(gates.data(), c_prev.data(), c_cur.data(), tanhc.data(), h_cur.data(),
                              positions, f_count);
        std::copy(h_cur.begin(), h_cur.end(), seq.ptr() + static_cast<long long>(t) * state);
        h_prev.swap(h_cur);
        c_prev.swap(c_cur);
    }
    if (spec.return_sequences) return seq;
    Tensor<S> last({h, w, f_count});
    std::copy(h_prev.begin(), h_prev.end(), last.ptr());
    return last;
}

// x is a vector (in) or batch (B,in); weight (in,out); bias (out).
template <class S>
Tensor<S> dense_forward(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>& bias,
                        Activation act = Activation::linear) {
    if (weight.rank() != 2) throw ShapeError("dense_forward: weight must be (in,out)");
    const int in = weight.dim(0), out = weight.dim(1);
    if (bias.size() != out) throw ShapeError("dense_forward: bias size mismatch");
    const bool batched = x.rank() == 2;
    const int b_count = batched ? x.dim(0) : 1;
    if ((batched ? x.dim(1) : static_cast<int>(x.size())) != in)
        throw ShapeError("dense_forward: input dim " + shape_str(x.shape) + " does not match weight (in=" +
                         std::to_string(in) + ")");
    Tensor<S> y(batched ? Shape{b_count, out} : Shape{out});
    gemm(x.ptr(), weight.ptr(), y.ptr(), b_count, in, out, false);
    for (int b = 0; b < b_count; ++b)
        for (int o = 0; o < out; ++o) y.ptr()[static_cast<long long>(b) * out + o] += bias.ptr()[o];
    apply_activation(y.ptr(), y.size(), act);
    return y;
}

// ---------------------------------------------------------------------------
// Pipeline layers (batched, caching)
// ---------------------------------------------------------------------------

enum class Mode { train, infer };

template <class S>
class Layer {
public:
    virtual ~Layer() = default;
    virtual const std::string& name() const = 0;
    virtual Tensor<S> forward(const Tensor<S>& x, Mode mode) = 0;
    virtual Tensor<S> backward(const Tensor<S>& dy) = 0;
    virtual Shape output_shape(const Shape& in) const = 0;
};

// Shared-weight 2-D (de)convolution over every (b,t) slice of (B,T,H,W,C).
template <class S>
class TimeDistConv2D final : public Layer<S> {
public:
    TimeDistConv2D(std::string name, const Conv2DSpec& spec, ParameterStore<S>& store)
        : name_(std::move(name)), spec_(spec) {
        const long long rf = static_cast<long long>(spec.kernel_h) * spec.kernel_w;
        kernel_ = &store.create(name_ + ".kernel", {spec.kernel_h, spec.kernel_w, spec.in_channels, spec.filters},
                                true, ParamInit::xavier_uniform, rf * spec.in_channels, rf * spec.filters);
        bias_ = &store.create(name_ + ".bias", {spec.filters}, true, ParamInit::zeros);
    }

    const std::string& name() const override { return name_; }
    const Conv2DSpec& spec() const { return spec_; }

    Shape output_shape(const Shape& in) const override {
        check_input(in);
        const ConvGeom g = conv_geometry(spec_, in[2], in[3]);
        return {in[0], in[1], g.h_out, g.w_out, g.filters};
    }

    Tensor<S> forward(const Tensor<S>& x, Mode) override {
        check_input(x.shape);
        geom_ = conv_geometry(spec_, x.dim(2), x.dim(3));
        const int slices = x.dim(0) * x.dim(1);
        const long long in_sz = static_cast<long long>(geom_.h_in) * geom_.w_in * geom_.c_in;
        const long long out_sz = static_cast<long long>(geom_.h_out) * geom_.w_out * geom_.filters;

        Tensor<S> y({x.dim(0), x.dim(1), geom_.h_out, geom_.w_out, geom_.filters});
        if (spec_.transposed) {
            packed_.resize(kernel_->value.size());
            detail::pack_tconv_kernel(kernel_->value.data(), geom_, packed_.data());
        }
        for (int s = 0; s < slices; ++s) {
            const S* xs = x.ptr() + s * in_sz;
            S* ys = y.ptr() + s * out_sz;
            if (spec_.transposed)
                detail::tconv_slice_forward(xs, geom_, packed_.data(), bias_->value.data(), ys, col_);
            else
                detail::conv_slice_forward(xs, geom_, kernel_->value.data(), bias_->value.data(), ys, col_, false);
        }
        apply_activation(y.ptr(), y.size(), spec_.activation);
        x_cache_ = x;
        y_cache_ = y;
        return y;
    }

    Tensor<S> backward(const Tensor<S>& dy) override {
        if (dy.shape != y_cache_.shape)
            throw ShapeError(name_ + ": backward shape " + shape_str(dy.shape) + " != forward output " +
                             shape_str(y_cache_.shape));
        Tensor<S> dpre = dy;
        activation_backward(y_cache_.ptr(), dpre.ptr(), dpre.size(), spec_.activation);

        Tensor<S> dx(x_cache_.shape);
        S* dk = kernel_->g().data();
        S* db = bias_->g().data();
        const int slices = x_cache_.dim(0) * x_cache_.dim(1);
        const long long in_sz = static_cast<long long>(geom_.h_in) * geom_.w_in * geom_.c_in;
        const long long out_sz = static_cast<long long>(geom_.h_out) * geom_.w_out * geom_.filters;

        if (spec_.transposed) {
            dpacked_.assign(kernel_->value.size(), S(0));
            for (int s = 0; s < slices; ++s)
                detail::tconv_slice_backward(x_cache_.ptr() + s * in_sz, geom_, packed_.data(),
                                             dpre.ptr() + s * out_sz, dx.ptr() + s * in_sz, dpacked_.data(),
                                             db, dcol_);
            detail::unpack_tconv_kernel_add(dpacked_.data(), geom_, dk);
        } else {
            for (int s = 0; s < slices; ++s)
                detail::conv_slice_backward(x_cache_.ptr() + s * in_sz, geom_, kernel_->value.data(),
                                            dpre.ptr() + s * out_sz, dx.ptr() + s * in_sz, dk, db, col_, dcol_);
        }
        return dx;
    }

private:
    void check_input(const Shape& in) const {
        if (in.size() != 5)
            throw ShapeError(name_ + ": expected (B,T,H,W,C), got " + shape_str(in));
        if (in[4] != spec_.in_channels)
            throw ShapeError(name_ + ": input has " + std::to_string(in[4]) + " channels, layer wants " +
                             std::to_string(spec_.in_channels));
    }

    std::string name_;
    Conv2DSpec spec_;
    Param<S>* kernel_ = nullptr;
    Param<S>* bias_ = nullptr;
    ConvGeom geom_;
    Tensor<S> x_cache_, y_cache_;
    std::vector<S> col_, dcol_, packed_, dpacked_;
};

// ConvLSTM2D over (B,T,H,W,C); spatial size is preserved (same padding, stride 1).
template <class S>
class ConvLSTM final : public Layer<S> {
public:
    ConvLSTM(std::string name, const ConvLSTMSpec& spec, ParameterStore<S>& store)
        : name_(std::move(name)), spec_(spec) {
        const long long rf = static_cast<long long>(spec.kernel_h) * spec.kernel_w;
        kernel_x_ = &store.create(name_ + ".kernel_x",
                                  {spec.kernel_h, spec.kernel_w, spec.in_channels, 4 * spec.filters}, true,
                                  ParamInit::xavier_uniform, rf * spec.in_channels, rf * 4 * spec.filters);
        kernel_h_ = &store.create(name_ + ".kernel_h",
                                  {spec.kernel_h, spec.kernel_w, spec.filters, 4 * spec.filters}, true,
                                  ParamInit::xavier_uniform, rf * spec.filters, rf * 4 * spec.filters);
        bias_ = &store.create(name_ + ".bias", {4 * spec.filters}, true, ParamInit::zeros);
    }

    const std::string& name() const override { return name_; }

    Shape output_shape(const Shape& in) const override {
        check_input(in);
        if (spec_.return_sequences) return {in[0], in[1], in[2], in[3], spec_.filters};
        return {in[0], in[2], in[3], spec_.filters};
    }

    Tensor<S> forward(const Tensor<S>& x, Mode) override {
        check_input(x.shape);
        const int b_count = x.dim(0), t_count = x.dim(1), h = x.dim(2), w = x.dim(3);
        const int f_count = spec_.filters;
        Conv2DSpec gate_x{spec_.in_channels, 4 * f_count, spec_.kernel_h, spec_.kernel_w, 1, 1, Padding::same};
        Conv2DSpec gate_h{f_count, 4 * f_count, spec_.kernel_h, spec_.kernel_w, 1, 1, Padding::same};
        gx_ = conv_geometry(gate_x, h, w);
        gh_ = conv_geometry(gate_h, h, w);

        const long long positions = static_cast<long long>(h) * w;
        const long long state = positions * f_count;
        x_cache_ = x;
        gates_ = Tensor<S>({b_count, t_count, h, w, 4 * f_count});
        cells_ = Tensor<S>({b_count, t_count, h, w, f_count});
        tanhc_ = Tensor<S>({b_count, t_count, h, w, f_count});
        hidden_ = Tensor<S>({b_count, t_count, h, w, f_count});

        std::vector<S> zero_state(state, S(0));
        for (int b = 0; b < b_count; ++b) {
            const S* h_prev = zero_state.data();
            const S* c_prev = zero_state.data();
            for (int t = 0; t < t_count; ++t) {
                const long long bt = static_cast<long long>(b) * t_count + t;
                const S* xt = x.ptr() + bt * positions * spec_.in_channels;
                S* gt = gates_.ptr() + bt * positions * 4 * f_count;
                S* ct = cells_.ptr() + bt * state;
                S* tt = tanhc_.ptr() + bt * state;
                S* ht = hidden_.ptr() + bt * state;
                detail::conv_slice_forward(xt, gx_, kernel_x_->value.data(), bias_->value.data(), gt, col_, false);
                detail::conv_slice_forward(h_prev, gh_, kernel_h_->value.data(), static_cast<const S*>(nullptr),
                                           gt, col_, true);
                detail::convlstm_cell(gt, c_prev, ct, tt, ht, positions, f_count);
                h_prev = ht;
                c_prev = ct;
            }
        }
        if (spec_.return_sequences) return hidden_;
        Tensor<S> last({b_count, h, w, f_count});
        for (int b = 0; b < b_count; ++b) {
            const long long bt = static_cast<long long>(b) * t_count + (t_count - 1);
            std::copy(hidden_.ptr() + bt * state, hidden_.ptr() + (bt + 1) * state, last.ptr() + b * state);
        }
        return last;
    }

    Tensor<S> backward(const Tensor<S>& dy) override {
        const int b_count = x_cache_.dim(0), t_count = x_cache_.dim(1);
        const int h = x_cache_.dim(2), w = x_cache_.dim(3);
        const int f_count = spec_.filters;
        const long long positions = static_cast<long long>(h) * w;
        const long long state = positions * f_count;
        const long long in_sz = positions * spec_.in_channels;
        const Shape want = output_shape(x_cache_.shape);
        if (dy.shape != want)
            throw ShapeError(name_ + ": backward shape " + shape_str(dy.shape) + " != " + shape_str(want));

        Tensor<S> dx(x_cache_.shape);
        S* dkx = kernel_x_->g().data();
        S* dkh = kernel_h_->g().data();
        S* db = bias_->g().data();

        std::vector<S> dh(state), dc_next(state), dh_rec(state), dpre(positions * 4 * f_count);
        std::vector<S> zero_state(state, S(0));
        for (int b = 0; b < b_count; ++b) {
            std::fill(dh_rec.begin(), dh_rec.end(), S(0));
            std::fill(dc_next.begin(), dc_next.end(), S(0));
            for (int t = t_count - 1; t >= 0; --t) {
                const long long bt = static_cast<long long>(b) * t_count + t;
                std::copy(dh_rec.begin(), dh_rec.end(), dh.begin());
                if (spec_.return_sequences) {
                    const S* up = dy.ptr() + bt * state;
                    for (long long i = 0; i < state; ++i) dh[i] += up[i];
                } else if (t == t_count - 1) {
                    const S* up = dy.ptr() + static_cast<long long>(b) * state;
                    for (long long i = 0; i < state; ++i) dh[i] += up[i];
                }

                const S* gt = gates_.ptr() + bt * positions * 4 * f_count;
                const S* tt = tanhc_.ptr() + bt * state;
                const S* c_prev = t > 0 ? cells_.ptr() + (bt - 1) * state : zero_state.data();
                for (long long p = 0; p < positions; ++p) {
                    const S* gp = gt + p * 4 * f_count;
                    S* dp = dpre.data() + p * 4 * f_count;
                    for (int f = 0; f < f_count; ++f) {
                        const S gi = gp[f], gf = gp[f_count + f], gg = gp[2 * f_count + f], go = gp[3 * f_count + f];
                        const S tc = tt[p * f_count + f];
                        const S dhv = dh[p * f_count + f];
                        const S dov = dhv * tc;
                        const S dcv = dc_next[p * f_count + f] + dhv * go * (S(1) - tc * tc);
                        const S div = dcv * gg;
                        const S dgv = dcv * gi;
                        const S dfv = dcv * c_prev[p * f_count + f];
                        dc_next[p * f_count + f] = dcv * gf;
                        dp[f] = div * gi * (S(1) - gi);
                        dp[f_count + f] = dfv * gf * (S(1) - gf);
                        dp[2 * f_count + f] = dgv * (S(1) - gg * gg);
                        dp[3 * f_count + f] = dov * go * (S(1) - go);
                    }
                }

                detail::conv_slice_backward(x_cache_.ptr() + bt * in_sz, gx_, kernel_x_->value.data(),
                                            dpre.data(), dx.ptr() + bt * in_sz, dkx, db, col_, dcol_);
                const S* h_prev = t > 0 ? hidden_.ptr() + (bt - 1) * state : zero_state.data();
                std::fill(dh_rec.begin(), dh_rec.end(), S(0));
                detail::conv_slice_backward(h_prev, gh_, kernel_h_->value.data(), dpre.data(), dh_rec.data(),
                                            dkh, static_cast<S*>(nullptr), col_, dcol_);
            }
        }
        return dx;
    }

private:
    void check_input(const Shape& in) const {
        if (in.size() != 5) throw ShapeError(name_ + ": expected (B,T,H,W,C), got " + shape_str(in));
        if (in[4] != spec_.in_channels)
            throw ShapeError(name_ + ": input has " + std::to_string(in[4]) + " channels, layer wants " +
                             std::to_string(spec_.in_channels));
    }

    std::string name_;
    ConvLSTMSpec spec_;
    Param<S>* kernel_x_ = nullptr;
    Param<S>* kernel_h_ = nullptr;
    Param<S>* bias_ = nullptr;
    ConvGeom gx_, gh_;
    Tensor<S> x_cache_, gates_, cells_, tanhc_, hidden_;
    std::vector<S> col_, dcol_;
};

// Per-sample normalization over all non-batch features, per-channel affine.
template <class S>
class LayerNorm final : public Layer<S> {
public:
    LayerNorm(std::string name, const NormSpec& spec, ParameterStore<S>& store)
        : name_(std::move(name)), spec_(spec) {
        gamma_ = &store.create(name_ + ".gamma", {spec.channels}, true, ParamInit::ones);
        beta_ = &store.create(name_ + ".beta", {spec.channels}, true, ParamInit::zeros);
    }

    const std::string& name() const override { return name_; }
    Shape output_shape(const Shape& in) const override { return in; }

    Tensor<S> forward(const Tensor<S>& x, Mode) override {
        check_input(x.shape);
        const int b_count = x.dim(0);
        const long long n = x.size() / b_count;
        const int c = spec_.channels;

        xhat_ = Tensor<S>(x.shape);
        inv_std_.assign(static_cast<std::size_t>(b_count), S(0));
        Tensor<S> y(x.shape);
        const S* gm = gamma_->value.data();
        const S* bt = beta_->value.data();
        for (int b = 0; b < b_count; ++b) {
            const S* xb = x.ptr() + static_cast<long long>(b) * n;
            S* hb = xhat_.ptr() + static_cast<long long>(b) * n;
            S* yb = y.ptr() + static_cast<long long>(b) * n;
            double mean = 0.0;
            for (long long i = 0; i < n; ++i) mean += xb[i];
            mean /= static_cast<double>(n);
            double var = 0.0;
            for (long long i = 0; i < n; ++i) {
                const double d = xb[i] - mean;
                var += d * d;
            }
            var /= static_cast<double>(n);
            const S istd = static_cast<S>(1.0 / std::sqrt(var + spec_.epsilon));
            inv_std_[static_cast<std::size_t>(b)] = istd;
            for (long long i = 0; i < n; ++i) {
                hb[i] = (xb[i] - static_cast<S>(mean)) * istd;
                yb[i] = gm[i % c] * hb[i] + bt[i % c];
            }
        }
        return y;
    }

    Tensor<S> backward(const Tensor<S>& dy) override {
        if (dy.shape != xhat_.shape)
            throw ShapeError(name_ + ": backward shape mismatch " + shape_str(dy.shape));
        const int b_count = dy.dim(0);
        const long long n = dy.size() / b_count;
        const int c = spec_.channels;

        Tensor<S> dx(dy.shape);
        S* dgm = gamma_->g().data();
        S* dbt = beta_->g().data();
        const S* gm = gamma_->value.data();
        for (int b = 0; b < b_count; ++b) {
            const S* dyb = dy.ptr() + static_cast<long long>(b) * n;
            const S* hb = xhat_.ptr() + static_cast<long long>(b) * n;
            S* dxb = dx.ptr() + static_cast<long long>(b) * n;
            double m1 = 0.0, m2 = 0.0;
            for (long long i = 0; i < n; ++i) {
                const double dxh = static_cast<double>(dyb[i]) * gm[i % c];
                m1 += dxh;
                m2 += dxh * hb[i];
                dgm[i % c] += dyb[i] * hb[i];
                dbt[i % c] += dyb[i];
            }
            m1 /= static_cast<double>(n);
            m2 /= static_cast<double>(n);
            const S istd = inv_std_[static_cast<std::size_t>(b)];
            for (long long i = 0; i < n; ++i) {
                const double dxh = static_cast<double>(dyb[i]) * gm[i % c];
                dxb[i] = static_cast<S>(istd * (dxh - m1 - hb[i] * m2));
            }
        }
        return dx;
    }

private:
    void check_input(const Shape& in) const {
        if (in.size() < 2 || in.back() != spec_.channels)
            throw ShapeError(name_ + ": expected trailing channel dim " + std::to_string(spec_.channels) +
                             ", got " + shape_str(in));
    }

    std::string name_;
    NormSpec spec_;
    Param<S>* gamma_ = nullptr;
    Param<S>* beta_ = nullptr;
    Tensor<S> xhat_;
    std::vector<S> inv_std_;
};

// Per-channel batch statistics in train mode, running statistics in infer mode.
template <class S>
class BatchNorm final : public Layer<S> {
public:
    BatchNorm(std::string name, const NormSpec& spec, ParameterStore<S>& store)
        : name_(std::move(name)), spec_(spec) {
        gamma_ = &store.create(name_ + ".gamma", {spec.channels}, true, ParamInit::ones);
        beta_ = &store.create(name_ + ".beta", {spec.channels}, true, ParamInit::zeros);
        run_mean_ = &store.create(name_ + ".running_mean", {spec.channels}, false, ParamInit::zeros);
        run_var_ = &store.create(name_ + ".running_var", {spec.channels}, false, ParamInit::ones);
    }

    const std::string& name() const override { return name_; }
    Shape output_shape(const Shape& in) const override { return in; }

    Tensor<S> forward(const Tensor<S>& x, Mode mode) override {
        check_input(x.shape);
        const int c = spec_.channels;
        const long long rows = x.size() / c;
        if (mode == Mode::train && (x.dim(0) == 0 || rows == 0))
            throw ShapeError(name_ + ": zero-size batch in train mode");

        mode_ = mode;
        xhat_ = Tensor<S>(x.shape);
        inv_std_.assign(static_cast<std::size_t>(c), S(0));
        Tensor<S> y(x.shape);
        const S* gm = gamma_->value.data();
        const S* bt = beta_->value.data();

        std::vector<double> mean(static_cast<std::size_t>(c), 0.0), var(static_cast<std::size_t>(c), 0.0);
        if (mode == Mode::train) {
            for (long long r = 0; r < rows; ++r) {
                const S* xr = x.ptr() + r * c;
                for (int j = 0; j < c; ++j) mean[static_cast<std::size_t>(j)] += xr[j];
            }
            for (int j = 0; j < c; ++j) mean[static_cast<std::size_t>(j)] /= static_cast<double>(rows);
            for (long long r = 0; r < rows; ++r) {
                const S* xr = x.ptr() + r * c;
                for (int j = 0; j < c; ++j) {
                    const double d = xr[j] - mean[static_cast<std::size_t>(j)];
                    var[static_cast<std::size_t>(j)] += d * d;
                }
            }
            for (int j = 0; j < c; ++j) var[static_cast<std::size_t>(j)] /= static_cast<double>(rows);
            // momentum-averaged running statistics (population variance)
            const double m = spec_.momentum;
            for (int j = 0; j < c; ++j) {
                run_mean_->value[static_cast<std::size_t>(j)] = static_cast<S>(
                    m * run_mean_->value[static_cast<std::size_t>(j)] + (1.0 - m) * mean[static_cast<std::size_t>(j)]);
                run_var_->value[static_cast<std::size_t>(j)] = static_cast<S>(
                    m * run_var_->value[static_cast<std::size_t>(j)] + (1.0 - m) * var[static_cast<std::size_t>(j)]);
            }
        } else {
            for (int j = 0; j < c; ++j) {
                mean[static_cast<std::size_t>(j)] = run_mean_->value[static_cast<std::size_t>(j)];
                var[static_cast<std::size_t>(j)] = run_var_->value[static_cast<std::size_t>(j)];
            }
        }
        for (int j = 0; j < c; ++j)
            inv_std_[static_cast<std::size_t>(j)] = static_cast<S>(1.0 / std::sqrt(var[static_cast<std::size_t>(j)] + spec_.epsilon));
        for (long long r = 0; r < rows; ++r) {
            const S* xr = x.ptr() + r * c;
            S* hr = xhat_.ptr() + r * c;
            S* yr = y.ptr() + r * c;
            for (int j = 0; j < c; ++j) {
                hr[j] = (xr[j] - static_cast<S>(mean[static_cast<std::size_t>(j)])) * inv_std_[static_cast<std::size_t>(j)];
                yr[j] = gm[j] * hr[j] + bt[j];
            }
        }
        return y;
    }

    Tensor<S> backward(const Tensor<S>& dy) override {
        if (dy.shape != xhat_.shape)
            throw ShapeError(name_ + ": backward shape mismatch " + shape_str(dy.shape));
        const int c = spec_.channels;
        const long long rows = dy.size() / c;

        Tensor<S> dx(dy.shape);
        S* dgm = gamma_->g().data();
        S* dbt = beta_->g().data();
        const S* gm = gamma_->value.data();

        std::vector<double> sum_dy(static_cast<std::size_t>(c), 0.0), sum_dyh(static_cast<std::size_t>(c), 0.0);
        for (long long r = 0; r < rows; ++r) {
            const S* dyr = dy.ptr() + r * c;
            const S* hr = xhat_.ptr() + r * c;
            for (int j = 0; j < c; ++j) {
                sum_dy[static_cast<std::size_t>(j)] += dyr[j];
                sum_dyh[static_cast<std::size_t>(j)] += static_cast<double>(dyr[j]) * hr[j];
                dgm[j] += dyr[j] * hr[j];
                dbt[j] += dyr[j];
            }
        }
        if (mode_ == Mode::train) {
            for (long long r = 0; r < rows; ++r) {
                const S* dyr = dy.ptr() + r * c;
                const S* hr = xhat_.ptr() + r * c;
                S* dxr = dx.ptr() + r * c;
                for (int j = 0; j < c; ++j) {
                    const double m1 = sum_dy[static_cast<std::size_t>(j)] / static_cast<double>(rows);
                    const double m2 = sum_dyh[static_cast<std::size_t>(j)] / static_cast<double>(rows);
                    dxr[j] = static_cast<S>(gm[j] * inv_std_[static_cast<std::size_t>(j)] * (dyr[j] - m1 - hr[j] * m2));
                }
            }
        } else {
            for (long long r = 0; r < rows; ++r) {
                const S* dyr = dy.ptr() + r * c;
                S* dxr = dx.ptr() + r * c;
                for (int j = 0; j < c; ++j) dxr[j] = dyr[j] * gm[j] * inv_std_[static_cast<std::size_t>(j)];
            }
        }
        return dx;
    }

private:
    void check_input(const Shape& in) const {
        if (in.size() < 2 || in.back() != spec_.channels)
            throw ShapeError(name_ + ": expected trailing channel dim " + std::to_string(spec_.channels) +
                             ", got " + shape_str(in));
    }

    std::string name_;
    NormSpec spec_;
    Param<S>* gamma_ = nullptr;
    Param<S>* beta_ = nullptr;
    Param<S>* run_mean_ = nullptr;
    Param<S>* run_var_ = nullptr;
    Mode mode_ = Mode::train;
    Tensor<S> xhat_;
    std::vector<S> inv_std_;
};

template <class S>
class Dense final : public Layer<S> {
public:
    Dense(std::string name, const DenseSpec& spec, ParameterStore<S>& store,
          Activation act = Activation::linear)
        : name_(std::move(name)), spec_(spec), act_(act) {
        weight_ = &store.create(name_ + ".weight", {static_cast<int>(spec.in_dim), static_cast<int>(spec.out_dim)},
                                true, ParamInit::xavier_uniform, spec.in_dim, spec.out_dim);
        bias_ = &store.create(name_ + ".bias", {static_cast<int>(spec.out_dim)}, true, ParamInit::zeros);
    }

    const std::string& name() const override { return name_; }

    Shape output_shape(const Shape& in) const override {
        check_input(in);
        return {in[0], static_cast<int>(spec_.out_dim)};
    }

    Tensor<S> forward(const Tensor<S>& x, Mode) override {
        check_input(x.shape);
        const int b_count = x.dim(0), out = static_cast<int>(spec_.out_dim);
        Tensor<S> y({b_count, out});
        gemm(x.ptr(), weight_->value.data(), y.ptr(), b_count, static_cast<int>(spec_.in_dim), out, false);
        const S* bias = bias_->value.data();
        for (int b = 0; b < b_count; ++b)
            for (int o = 0; o < out; ++o) y.ptr()[static_cast<long long>(b) * out + o] += bias[o];
        apply_activation(y.ptr(), y.size(), act_);
        x_cache_ = x;
        y_cache_ = y;
        return y;
    }

    Tensor<S> backward(const Tensor<S>& dy) override {
        if (dy.shape != y_cache_.shape)
            throw ShapeError(name_ + ": backward shape mismatch " + shape_str(dy.shape));
        Tensor<S> dpre = dy;
        activation_backward(y_cache_.ptr(), dpre.ptr(), dpre.size(), act_);

        const int b_count = dy.dim(0);
        const int in = static_cast<int>(spec_.in_dim), out = static_cast<int>(spec_.out_dim);
        gemm_tn(x_cache_.ptr(), dpre.ptr(), weight_->g().data(), in, b_count, out, true);
        S* db = bias_->g().data();
        for (int b = 0; b < b_count; ++b)
            for (int o = 0; o < out; ++o) db[o] += dpre.ptr()[static_cast<long long>(b) * out + o];
        Tensor<S> dx({b_count, in});
        gemm_nt(dpre.ptr(), weight_->value.data(), dx.ptr(), b_count, out, in, false);
        return dx;
    }

private:
    void check_input(const Shape& in) const {
        if (in.size() != 2 || in[1] != spec_.in_dim)
            throw ShapeError(name_ + ": expected (B," + std::to_string(spec_.in_dim) + "), got " + shape_str(in));
    }

    std::string name_;
    DenseSpec spec_;
    Activation act_;
    Param<S>* weight_ = nullptr;
    Param<S>* bias_ = nullptr;
    Tensor<S> x_cache_, y_cache_;
};

// (B, ...) -> (B, N)
template <class S>
class Flatten final : public Layer<S> {
public:
    explicit Flatten(std::string name) : name_(std::move(name)) {}
    const std::string& name() const override { return name_; }

    Shape output_shape(const Shape& in) const override {
        long long n = 1;
        for (std::size_t i = 1; i < in.size(); ++i) n *= in[i];
        return {in[0], static_cast<int>(n)};
    }

    Tensor<S> forward(const Tensor<S>& x, Mode) override {
        in_shape_ = x.shape;
        return x.reshaped(output_shape(x.shape));
    }

    Tensor<S> backward(const Tensor<S>& dy) override { return dy.reshaped(in_shape_); }

private:
    std::string name_;
    Shape in_shape_;
};

// (B, N) -> (B, dims...)
template <class S>
class Reshape final : public Layer<S> {
public:
    Reshape(std::string name, Shape per_sample) : name_(std::move(name)), dims_(std::move(per_sample)) {}
    const std::string& name() const override { return name_; }

    Shape output_shape(const Shape& in) const override {
        Shape out{in[0]};
        out.insert(out.end(), dims_.begin(), dims_.end());
        if (numel(out) != numel(in))
            throw ShapeError(name_ + ": cannot reshape " + shape_str(in) + " to " + shape_str(out));
        return out;
    }

    Tensor<S> forward(const Tensor<S>& x, Mode) override {
        in_shape_ = x.shape;
        return x.reshaped(output_shape(x.shape));
    }

    Tensor<S> backward(const Tensor<S>& dy) override { return dy.reshaped(in_shape_); }

private:
    std::string name_;
    Shape dims_;
    Shape in_shape_;
};

}  // namespace vad
