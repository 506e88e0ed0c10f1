#pragma once

// Forward/backward kernels for the layer kinds the classifier uses.
// Everything is templated on the scalar so the same code runs in float
// (deployed) and double (gradient-check reference).

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "cpnav/error.hpp"
#include "cpnav/tensor.hpp"

namespace cpnav::ops {

// ---------------------------------------------------------------- gemm

// C[m x n] (+)= A[m x k] * B[k x n], all row-major. Inner loop runs over n
// so it vectorizes without reassociating any sum.
template <typename T>
void gemm_nn(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
    if (!accumulate) std::fill(c, c + static_cast<std::size_t>(m) * n, T{0});
    for (int i = 0; i < m; ++i) {
        T* crow = c + static_cast<std::size_t>(i) * n;
        const T* arow = a + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const T av = arow[p];
            if (av == T{0}) continue;
            const T* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
std::vector<T> transpose(const T* a, int rows, int cols) {
    std::vector<T> t(static_cast<std::size_t>(rows) * cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) t[static_cast<std::size_t>(c) * rows + r] = a[static_cast<std::size_t>(r) * cols + c];
    return t;
}

// ---------------------------------------------------------------- conv2d

struct ConvGeometry {
    int in_channels = 0, in_h = 0, in_w = 0;
    int out_channels = 0, kh = 0, kw = 0;
    int stride = 1, pad = 0;
    int out_h = 0, out_w = 0;

    int patch() const { return in_channels * kh * kw; }
    int positions() const { return out_h * out_w; }
};

inline int conv_out_extent(int in, int k, int stride, int pad) {
    if (stride <= 0) throw DimensionError("stride must be positive");
    if (pad < 0) throw DimensionError("padding must be non-negative");
    if (in + 2 * pad < k)
        throw DimensionError("kernel " + std::to_string(k) + " larger than padded extent " + std::to_string(in + 2 * pad));
    return (in + 2 * pad - k) / stride + 1;
}

template <typename T>
ConvGeometry conv_geometry(const BasicTensor<T>& input, const BasicTensor<T>& weights, int stride, int pad) {
    if (input.rank() != 3) throw DimensionError("conv2d input must be (C,H,W), got " + shape_str(input.shape()));
    if (weights.rank() != 4) throw DimensionError("conv2d weights must be (Co,Ci,kh,kw), got " + shape_str(weights.shape()));
    if (weights.dim(1) != input.dim(0))
        throw DimensionError("conv2d weight channels " + std::to_string(weights.dim(1)) + " != input channels " +
                             std::to_string(input.dim(0)));
    ConvGeometry g;
    g.in_channels = input.dim(0);
    g.in_h = input.dim(1);
    g.in_w = input.dim(2);
    g.out_channels = weights.dim(0);
    g.kh = weights.dim(2);
    g.kw = weights.dim(3);
    g.stride = stride;
    g.pad = pad;
    g.out_h = conv_out_extent(g.in_h, g.kh, stride, pad);
    g.out_w = conv_out_extent(g.in_w, g.kw, stride, pad);
    return g;
}

// Patch matrix [patch x positions]; out-of-bounds taps read zero.
template <typename T>
std::vector<T> im2col(const BasicTensor<T>& input, const ConvGeometry& g) {
    const int P = g.positions();
    std::vector<T> col(static_cast<std::size_t>(g.patch()) * P, T{0});
    const T* in = input.data().data();
    std::size_t row = 0;
    for (int c = 0; c < g.in_channels; ++c)
        for (int ky = 0; ky < g.kh; ++ky)
            for (int kx = 0; kx < g.kw; ++kx, ++row) {
                T* dst = col.data() + row * P;
                for (int oy = 0; oy < g.out_h; ++oy) {
                    const int iy = oy * g.stride - g.pad + ky;
                    if (iy < 0 || iy >= g.in_h) continue;
                    const T* src = in + (static_cast<std::size_t>(c) * g.in_h + iy) * g.in_w;
                    for (int ox = 0; ox < g.out_w; ++ox) {
                        const int ix = ox * g.stride - g.pad + kx;
                        if (ix >= 0 && ix < g.in_w) dst[oy * g.out_w + ox] = src[ix];
                    }
                }
            }
    return col;
}

template <typename T>
void col2im(const std::vector<T>& col, const ConvGeometry& g, BasicTensor<T>& out) {
    const int P = g.positions();
    T* dst = out.data().data();
    std::size_t row = 0;
    for (int c = 0; c < g.in_channels; ++c)
        for (int ky = 0; ky < g.kh; ++ky)
            for (int kx = 0; kx < g.kw; ++kx, ++row) {
                const T* src = col.data() + row * P;
                for (int oy = 0; oy < g.out_h; ++oy) {
                    const int iy = oy * g.stride - g.pad + ky;
                    if (iy < 0 || iy >= g.in_h) continue;
                    T* drow = dst + (static_cast<std::size_t>(c) * g.in_h + iy) * g.in_w;
                    for (int ox = 0; ox < g.out_w; ++ox) {
                        const int ix = ox * g.stride - g.pad + kx;
                        if (ix >= 0 && ix < g.in_w) drow[ix] += src[oy * g.out_w + ox];
                    }
                }
            }
}

template <typename T>
struct ConvCache {
    ConvGeometry geometry;
    std::vector<T> columns;  // im2col of the forward input
};

template <typename T>
struct ConvGrads {
    BasicTensor<T> input;
    BasicTensor<T> weights;
    BasicTensor<T> bias;
};

/// Cross-correlation (no kernel flip) with zero padding and floor output extents.
template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias,
                              int stride, int pad, ConvCache<T>* cache = nullptr) {
    const ConvGeometry g = conv_geometry(input, weights, stride, pad);
    if (bias.size() != static_cast<std::size_t>(g.out_channels))
        throw DimensionError("conv2d bias length " + std::to_string(bias.size()) + " != out channels " +
                             std::to_string(g.out_channels));
    require_finite(input, "conv2d input");

    std::vector<T> col = im2col(input, g);
    BasicTensor<T> out({g.out_channels, g.out_h, g.out_w});
    const int P = g.positions();
    T* o = out.data().data();
    for (int co = 0; co < g.out_channels; ++co) std::fill(o + static_cast<std::size_t>(co) * P, o + static_cast<std::size_t>(co + 1) * P, bias[co]);
    gemm_nn(g.out_channels, P, g.patch(), weights.data().data(), col.data(), o, true);
    if (cache) {
        cache->geometry = g;
        cache->columns = std::move(col);
    }
    return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& out_grad, const ConvCache<T>& cache, const BasicTensor<T>& weights) {
    const ConvGeometry& g = cache.geometry;
    if (out_grad.shape() != Shape{g.out_channels, g.out_h, g.out_w})
        throw DimensionError("conv2d out_grad shape " + shape_str(out_grad.shape()) + " does not match forward output");
    require_finite(out_grad, "conv2d out_grad");
    const int P = g.positions();
    const int K = g.patch();
    const T* og = out_grad.data().data();

    ConvGrads<T> grads{BasicTensor<T>({g.in_channels, g.in_h, g.in_w}), BasicTensor<T>(weights.shape()),
                       BasicTensor<T>({g.out_channels})};
    for (int co = 0; co < g.out_channels; ++co) {
        T s{0};
        for (int p = 0; p < P; ++p) s += og[static_cast<std::size_t>(co) * P + p];
        grads.bias[static_cast<std::size_t>(co)] = s;
    }
    // dW^T [K x Co] = col [K x P] * og^T [P x Co]
    const std::vector<T> og_t = transpose(og, g.out_channels, P);
    std::vector<T> wg_t(static_cast<std::size_t>(K) * g.out_channels);
    gemm_nn(K, g.out_channels, P, cache.columns.data(), og_t.data(), wg_t.data(), false);
    T* wg = grads.weights.data().data();
    for (int k = 0; k < K; ++k)
        for (int co = 0; co < g.out_channels; ++co)
            wg[static_cast<std::size_t>(co) * K + k] = wg_t[static_cast<std::size_t>(k) * g.out_channels + co];
    // dcol [K x P] = W^T [K x Co] * og [Co x P]
    const std::vector<T> w_t = transpose(weights.data().data(), g.out_channels, K);
    std::vector<T> col_grad(static_cast<std::size_t>(K) * P);
    gemm_nn(K, P, g.out_channels, w_t.data(), og, col_grad.data(), false);
    col2im(col_grad, g, grads.input);
    return grads;
}

// ---------------------------------------------------------------- relu

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& input) {
    require_finite(input, "relu input");
    BasicTensor<T> out = input;
    for (T& v : out.data()) v = v > T{0} ? v : T{0};
    return out;
}

// Gradient passes where the forward input was strictly positive.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& out_grad, const BasicTensor<T>& input) {
    if (out_grad.shape() != input.shape()) throw DimensionError("relu out_grad shape mismatch");
    BasicTensor<T> g = out_grad;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (!(input[i] > T{0})) g[i] = T{0};
    return g;
}

// ---------------------------------------------------------------- maxpool2d

struct PoolCache {
    Shape input_shape;
    std::vector<std::size_t> argmax;  // flat input index per output element
};

/// Ties go to the first maximal element in row-major window order.
template <typename T>
BasicTensor<T> maxpool2d_forward(const BasicTensor<T>& input, int k, int stride, PoolCache* cache = nullptr) {
    if (input.rank() != 3) throw DimensionError("maxpool2d input must be (C,H,W), got " + shape_str(input.shape()));
    require_finite(input, "maxpool2d input");
    const int C = input.dim(0), H = input.dim(1), W = input.dim(2);
    const int oh = conv_out_extent(H, k, stride, 0);
    const int ow = conv_out_extent(W, k, stride, 0);
    BasicTensor<T> out({C, oh, ow});
    std::vector<std::size_t> arg(out.size());
    std::size_t o = 0;
    for (int c = 0; c < C; ++c)
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x, ++o) {
                std::size_t best = (static_cast<std::size_t>(c) * H + y * stride) * W + x * stride;
                T best_v = input[best];
                for (int dy = 0; dy < k; ++dy)
                    for (int dx = 0; dx < k; ++dx) {
                        const std::size_t idx = (static_cast<std::size_t>(c) * H + y * stride + dy) * W + x * stride + dx;
                        if (input[idx] > best_v) {
                            best_v = input[idx];
                            best = idx;
                        }
                    }
                out[o] = best_v;
                arg[o] = best;
            }
    if (cache) {
        cache->input_shape = input.shape();
        cache->argmax = std::move(arg);
    }
    return out;
}

template <typename T>
BasicTensor<T> maxpool2d_backward(const BasicTensor<T>& out_grad, const PoolCache& cache) {
    if (out_grad.size() != cache.argmax.size()) throw DimensionError("maxpool2d out_grad shape mismatch");
    BasicTensor<T> g(cache.input_shape);
    for (std::size_t i = 0; i < out_grad.size(); ++i) g[cache.argmax[i]] += out_grad[i];
    return g;
}

// ---------------------------------------------------------------- dense

template <typename T>
BasicTensor<T> dense_forward(const BasicTensor<T>& input, const BasicTensor<T>& weights, const BasicTensor<T>& bias) {
    if (weights.rank() != 2) throw DimensionError("dense weights must be (out,in), got " + shape_str(weights.shape()));
    const int out_dim = weights.dim(0), in_dim = weights.dim(1);
    if (input.size() != static_cast<std::size_t>(in_dim))
        throw DimensionError("dense input length " + std::to_string(input.size()) + " != in_dim " + std::to_string(in_dim));
    if (bias.size() != static_cast<std::size_t>(out_dim)) throw DimensionError("dense bias length mismatch");
    require_finite(input, "dense input");
    BasicTensor<T> out({out_dim});
    const T* w = weights.data().data();
    const T* x = input.data().data();
    for (int o = 0; o < out_dim; ++o) {
        T s = bias[static_cast<std::size_t>(o)];
        const T* row = w + static_cast<std::size_t>(o) * in_dim;
        for (int i = 0; i < in_dim; ++i) s += row[i] * x[i];
        out[static_cast<std::size_t>(o)] = s;
    }
    return out;
}

template <typename T>
struct DenseGrads {
    BasicTensor<T> input;
    BasicTensor<T> weights;
    BasicTensor<T> bias;
};

template <typename T>
DenseGrads<T> dense_backward(const BasicTensor<T>& out_grad, const BasicTensor<T>& input, const BasicTensor<T>& weights) {
    const int out_dim = weights.dim(0), in_dim = weights.dim(1);
    if (out_grad.size() != static_cast<std::size_t>(out_dim)) throw DimensionError("dense out_grad length mismatch");
    require_finite(out_grad, "dense out_grad");
    DenseGrads<T> g{BasicTensor<T>(input.shape()), BasicTensor<T>(weights.shape()), out_grad.reshaped({out_dim})};
    const T* w = weights.data().data();
    const T* x = input.data().data();
    T* gi = g.input.data().data();
    T* gw = g.weights.data().data();
    for (int o = 0; o < out_dim; ++o) {
        const T go = out_grad[static_cast<std::size_t>(o)];
        const T* row = w + static_cast<std::size_t>(o) * in_dim;
        T* grow = gw + static_cast<std::size_t>(o) * in_dim;
        for (int i = 0; i < in_dim; ++i) {
            grow[i] = go * x[i];
            gi[i] += go * row[i];
        }
    }
    return g;
}

// ---------------------------------------------------------------- softmax

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
    require_finite(logits, "softmax input");
    BasicTensor<T> out({static_cast<int>(logits.size())});
    T mx = logits[0];
    for (std::size_t i = 1; i < logits.size(); ++i) mx = std::max(mx, logits[i]);
    T sum{0};
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (T& v : out.data()) v /= sum;
    return out;
}

// Vector-Jacobian product of softmax given its forward output.
template <typename T>
BasicTensor<T> softmax_backward(const BasicTensor<T>& out_grad, const BasicTensor<T>& output) {
    if (out_grad.size() != output.size()) throw DimensionError("softmax out_grad length mismatch");
    T dot{0};
    for (std::size_t i = 0; i < output.size(); ++i) dot += out_grad[i] * output[i];
    BasicTensor<T> g(output.shape());
    for (std::size_t i = 0; i < output.size(); ++i) g[i] = output[i] * (out_grad[i] - dot);
    return g;
}

template <typename T>
struct LossAndGrad {
    T loss;
    BasicTensor<T> logit_grad;
};

/// -log softmax(logits)[label], max-subtracted; gradient softmax - onehot.
template <typename T>
LossAndGrad<T> softmax_cross_entropy(const BasicTensor<T>& logits, int label) {
    const int K = static_cast<int>(logits.size());
    if (K < 2) throw DimensionError("softmax_cross_entropy needs at least 2 classes");
    if (label < 0 || label >= K)
        throw DomainError("label " + std::to_string(label) + " outside [0," + std::to_string(K) + ")");
    require_finite(logits, "softmax_cross_entropy logits");
    T mx = logits[0];
    for (int i = 1; i < K; ++i) mx = std::max(mx, logits[static_cast<std::size_t>(i)]);
    T sum{0};
    for (int i = 0; i < K; ++i) sum += std::exp(logits[static_cast<std::size_t>(i)] - mx);
    const T log_z = mx + std::log(sum);
    LossAndGrad<T> r{log_z - logits[static_cast<std::size_t>(label)], BasicTensor<T>({K})};
    for (int i = 0; i < K; ++i)
        r.logit_grad[static_cast<std::size_t>(i)] = std::exp(logits[static_cast<std::size_t>(i)] - log_z);
    r.logit_grad[static_cast<std::size_t>(label)] -= T{1};
    if (r.loss < T{0}) r.loss = T{0};  // rounding can give -eps when p(label) == 1
    return r;
}

}  // namespace cpnav::ops
