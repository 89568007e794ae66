#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <utility>

#include "hypernet/tensor.hpp"

namespace hn {

// Parameter + gradient pair for conv / deconv / fc layers.
// Gradients accumulate across backward calls; the optimizer zeroes them.
template <typename T>
struct LayerParams {
    Tensor<T> weight;
    Tensor<T> bias;
    Tensor<T> grad_weight;
    Tensor<T> grad_bias;

    LayerParams() = default;
    LayerParams(std::vector<int> w_shape, int bias_len)
        : weight(std::move(w_shape)),
          bias({bias_len}),
          grad_weight(weight.shape),
          grad_bias(bias.shape) {}

    void zero_grad() {
        grad_weight.fill(T(0));
        grad_bias.fill(T(0));
    }
};

// weight layout [out_c][in_c][kh][kw]
template <typename T>
LayerParams<T> make_conv_params(int out_c, int in_c, int kh, int kw) {
    return LayerParams<T>({out_c, in_c, kh, kw}, out_c);
}

// weight layout [in_c][out_c][kh][kw] (transposed-conv convention)
template <typename T>
LayerParams<T> make_deconv_params(int in_c, int out_c, int kh, int kw) {
    return LayerParams<T>({in_c, out_c, kh, kw}, out_c);
}

// weight layout [out][in]
template <typename T>
LayerParams<T> make_fc_params(int out_n, int in_n) {
    return LayerParams<T>({out_n, in_n}, out_n);
}

inline int conv_out_extent(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// Cross-correlation (no kernel flip), bias per output channel.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const LayerParams<T>& params, int stride,
                         int padding) {
    if (input.ndim() != 3 || params.weight.ndim() != 4)
        throw std::invalid_argument("conv2d: input must be CxHxW, weight OxIxKHxKW");
    const int in_c = input.dim(0), in_h = input.dim(1), in_w = input.dim(2);
    const int out_c = params.weight.dim(0), w_in_c = params.weight.dim(1);
    const int kh = params.weight.dim(2), kw = params.weight.dim(3);
    if (w_in_c != in_c)
        throw std::invalid_argument("conv2d: input channels " + std::to_string(in_c) +
                                    " != kernel in-channels " + std::to_string(w_in_c));
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
    if (kh > in_h + 2 * padding || kw > in_w + 2 * padding)
        throw std::invalid_argument("conv2d: kernel larger than padded input");

    const int out_h = conv_out_extent(in_h, kh, stride, padding);
    const int out_w = conv_out_extent(in_w, kw, stride, padding);
    Tensor<T> out({out_c, out_h, out_w});

    for (int oc = 0; oc < out_c; ++oc) {
        T* out_plane = out.ptr() + static_cast<std::size_t>(oc) * out_h * out_w;
        const T b = params.bias[oc];
        for (int i = 0; i < out_h * out_w; ++i) out_plane[i] = b;
        for (int ic = 0; ic < in_c; ++ic) {
            const T* in_plane = input.ptr() + static_cast<std::size_t>(ic) * in_h * in_w;
            const T* w_plane =
                params.weight.ptr() + (static_cast<std::size_t>(oc) * in_c + ic) * kh * kw;
            for (int ky = 0; ky < kh; ++ky) {
                for (int kx = 0; kx < kw; ++kx) {
                    const T w = w_plane[ky * kw + kx];
                    if (w == T(0)) continue;
                    for (int oy = 0; oy < out_h; ++oy) {
                        const int iy = oy * stride + ky - padding;
                        if (iy < 0 || iy >= in_h) continue;
                        const T* in_row = in_plane + static_cast<std::size_t>(iy) * in_w;
                        T* out_row = out_plane + static_cast<std::size_t>(oy) * out_w;
                        for (int ox = 0; ox < out_w; ++ox) {
                            const int ix = ox * stride + kx - padding;
                            if (ix < 0 || ix >= in_w) continue;
                            out_row[ox] += w * in_row[ix];
                        }
                    }
                }
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& input, LayerParams<T>& params,
                          const Tensor<T>& grad_output, int stride, int padding) {
    const int in_c = input.dim(0), in_h = input.dim(1), in_w = input.dim(2);
    const int out_c = params.weight.dim(0);
    const int kh = params.weight.dim(2), kw = params.weight.dim(3);
    const int out_h = conv_out_extent(in_h, kh, stride, padding);
    const int out_w = conv_out_extent(in_w, kw, stride, padding);
    if (grad_output.shape != std::vector<int>{out_c, out_h, out_w})
        throw std::invalid_argument("conv2d_backward: grad_output shape mismatch, got " +
                                    shape_str(grad_output.shape));

    Tensor<T> grad_input(input.shape);
    for (int oc = 0; oc < out_c; ++oc) {
        const T* g_plane = grad_output.ptr() + static_cast<std::size_t>(oc) * out_h * out_w;
        T gb = T(0);
        for (int i = 0; i < out_h * out_w; ++i) gb += g_plane[i];
        params.grad_bias[oc] += gb;
        for (int ic = 0; ic < in_c; ++ic) {
            const T* in_plane = input.ptr() + static_cast<std::size_t>(ic) * in_h * in_w;
            T* gin_plane = grad_input.ptr() + static_cast<std::size_t>(ic) * in_h * in_w;
            const std::size_t w_base = (static_cast<std::size_t>(oc) * in_c + ic) * kh * kw;
            for (int ky = 0; ky < kh; ++ky) {
                for (int kx = 0; kx < kw; ++kx) {
                    const T w = params.weight[w_base + ky * kw + kx];
                    T gw = T(0);
                    for (int oy = 0; oy < out_h; ++oy) {
                        const int iy = oy * stride + ky - padding;
                        if (iy < 0 || iy >= in_h) continue;
                        const T* in_row = in_plane + static_cast<std::size_t>(iy) * in_w;
                        T* gin_row = gin_plane + static_cast<std::size_t>(iy) * in_w;
                        const T* g_row = g_plane + static_cast<std::size_t>(oy) * out_w;
                        for (int ox = 0; ox < out_w; ++ox) {
                            const int ix = ox * stride + kx - padding;
                            if (ix < 0 || ix >= in_w) continue;
                            const T g = g_row[ox];
                            gw += g * in_row[ix];
                            gin_row[ix] += g * w;
                        }
                    }
                    params.grad_weight[w_base + ky * kw + kx] += gw;
                }
            }
        }
    }
    return grad_input;
}

template <typename T>
struct PoolResult {
    Tensor<T> output;
    std::vector<int> argmax;  // linear index into the input, one per output cell
};

template <typename T>
PoolResult<T> maxpool2d_forward(const Tensor<T>& input, int window, int stride) {
    const int c = input.dim(0), in_h = input.dim(1), in_w = input.dim(2);
    if (window > in_h || window > in_w)
        throw std::invalid_argument("maxpool2d: window larger than input");
    const int out_h = (in_h - window) / stride + 1;
    const int out_w = (in_w - window) / stride + 1;
    PoolResult<T> res{Tensor<T>({c, out_h, out_w}), {}};
    res.argmax.resize(res.output.size());

    std::size_t oi = 0;
    for (int ch = 0; ch < c; ++ch) {
        const T* plane = input.ptr() + static_cast<std::size_t>(ch) * in_h * in_w;
        for (int oy = 0; oy < out_h; ++oy) {
            for (int ox = 0; ox < out_w; ++ox, ++oi) {
                int best = -1;
                T best_v = T(0);
                for (int ky = 0; ky < window; ++ky) {
                    const int iy = oy * stride + ky;
                    for (int kx = 0; kx < window; ++kx) {
                        const int ix = ox * stride + kx;
                        const int lin = iy * in_w + ix;
                        // ties go to the lowest linear index
                        if (best < 0 || plane[lin] > best_v) {
                            best = lin;
                            best_v = plane[lin];
                        }
                    }
                }
                res.output[oi] = best_v;
                res.argmax[oi] =
                    static_cast<int>(static_cast<std::size_t>(ch) * in_h * in_w) + best;
            }
        }
    }
    return res;
}

template <typename T>
Tensor<T> maxpool2d_backward(const Tensor<T>& grad_output, const std::vector<int>& argmax,
                             const std::vector<int>& input_shape) {
    Tensor<T> grad_input(input_shape);
    for (std::size_t i = 0; i < grad_output.size(); ++i)
        grad_input[static_cast<std::size_t>(argmax[i])] += grad_output[i];
    return grad_input;
}

// Transposed convolution; output extent = (in-1)*stride + k.
template <typename T>
Tensor<T> deconv2d_forward(const Tensor<T>& input, const LayerParams<T>& params, int stride) {
    const int in_c = input.dim(0), in_h = input.dim(1), in_w = input.dim(2);
    const int w_in_c = params.weight.dim(0), out_c = params.weight.dim(1);
    const int kh = params.weight.dim(2), kw = params.weight.dim(3);
    if (w_in_c != in_c)
        throw std::invalid_argument("deconv2d: input channels " + std::to_string(in_c) +
                                    " != kernel in-channels " + std::to_string(w_in_c));
    if (stride < 1) throw std::invalid_argument("deconv2d: stride must be >= 1");
    const int out_h = (in_h - 1) * stride + kh;
    const int out_w = (in_w - 1) * stride + kw;
    Tensor<T> out({out_c, out_h, out_w});
    for (int oc = 0; oc < out_c; ++oc) {
        T* out_plane = out.ptr() + static_cast<std::size_t>(oc) * out_h * out_w;
        const T b = params.bias[oc];
        for (int i = 0; i < out_h * out_w; ++i) out_plane[i] = b;
    }
    for (int ic = 0; ic < in_c; ++ic) {
        const T* in_plane = input.ptr() + static_cast<std::size_t>(ic) * in_h * in_w;
        for (int oc = 0; oc < out_c; ++oc) {
            T* out_plane = out.ptr() + static_cast<std::size_t>(oc) * out_h * out_w;
            const T* w_plane =
                params.weight.ptr() + (static_cast<std::size_t>(ic) * out_c + oc) * kh * kw;
            for (int iy = 0; iy < in_h; ++iy) {
                for (int ix = 0; ix < in_w; ++ix) {
                    const T v = in_plane[iy * in_w + ix];
                    if (v == T(0)) continue;
                    T* out_base = out_plane + static_cast<std::size_t>(iy * stride) * out_w +
                                  ix * stride;
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx)
                            out_base[ky * out_w + kx] += v * w_plane[ky * kw + kx];
                }
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> deconv2d_backward(const Tensor<T>& input, LayerParams<T>& params,
                            const Tensor<T>& grad_output, int stride) {
    const int in_c = input.dim(0), in_h = input.dim(1), in_w = input.dim(2);
    const int out_c = params.weight.dim(1);
    const int kh = params.weight.dim(2), kw = params.weight.dim(3);
    const int out_h = (in_h - 1) * stride + kh;
    const int out_w = (in_w - 1) * stride + kw;
    if (grad_output.shape != std::vector<int>{out_c, out_h, out_w})
        throw std::invalid_argument("deconv2d_backward: grad_output shape mismatch");

    Tensor<T> grad_input(input.shape);
    for (int oc = 0; oc < out_c; ++oc) {
        const T* g_plane = grad_output.ptr() + static_cast<std::size_t>(oc) * out_h * out_w;
        T gb = T(0);
        for (int i = 0; i < out_h * out_w; ++i) gb += g_plane[i];
        params.grad_bias[oc] += gb;
    }
    for (int ic = 0; ic < in_c; ++ic) {
        const T* in_plane = input.ptr() + static_cast<std::size_t>(ic) * in_h * in_w;
        T* gin_plane = grad_input.ptr() + static_cast<std::size_t>(ic) * in_h * in_w;
        for (int oc = 0; oc < out_c; ++oc) {
            const T* g_plane = grad_output.ptr() + static_cast<std::size_t>(oc) * out_h * out_w;
            const std::size_t w_base = (static_cast<std::size_t>(ic) * out_c + oc) * kh * kw;
            for (int iy = 0; iy < in_h; ++iy) {
                for (int ix = 0; ix < in_w; ++ix) {
                    const T v = in_plane[iy * in_w + ix];
                    const T* g_base = g_plane + static_cast<std::size_t>(iy * stride) * out_w +
                                      ix * stride;
                    T gin = T(0);
                    for (int ky = 0; ky < kh; ++ky) {
                        for (int kx = 0; kx < kw; ++kx) {
                            const T g = g_base[ky * out_w + kx];
                            gin += g * params.weight[w_base + ky * kw + kx];
                            params.grad_weight[w_base + ky * kw + kx] += g * v;
                        }
                    }
                    gin_plane[iy * in_w + ix] += gin;
                }
            }
        }
    }
    return grad_input;
}

// Bilinear upsampling kernel for a stride-s transposed conv, kernel size 2s,
// written on the diagonal (channel c -> channel c) of an in_c x out_c weight.
template <typename T>
void fill_bilinear_kernel(Tensor<T>& weight) {
    const int in_c = weight.dim(0), out_c = weight.dim(1);
    const int kh = weight.dim(2), kw = weight.dim(3);
    const double fy = kh / 2.0, cy = (kh - 1) / 2.0;
    const double fx = kw / 2.0, cx = (kw - 1) / 2.0;
    weight.fill(T(0));
    for (int c = 0; c < std::min(in_c, out_c); ++c) {
        T* plane = weight.ptr() + (static_cast<std::size_t>(c) * out_c + c) * kh * kw;
        for (int y = 0; y < kh; ++y)
            for (int x = 0; x < kw; ++x)
                plane[y * kw + x] = static_cast<T>((1.0 - std::abs(y - cy) / fy) *
                                                   (1.0 - std::abs(x - cx) / fx));
    }
}

struct LrnConfig {
    int depth = 5;
    double alpha = 1e-4;
    double beta = 0.75;
    double k = 2.0;
};

// Across-channel LRN: b_c = a_c / (k + (alpha/n) * sum_{c' in win(c)} a_{c'}^2)^beta
template <typename T>
Tensor<T> lrn_forward(const Tensor<T>& input, const LrnConfig& cfg) {
    if (cfg.depth < 1 || cfg.k <= 0) throw std::invalid_argument("lrn: depth >= 1, k > 0");
    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    const int lo = (cfg.depth - 1) / 2, hi = cfg.depth / 2;
    Tensor<T> out(input.shape);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (std::size_t p = 0; p < plane; ++p) {
        for (int i = 0; i < c; ++i) {
            double s = cfg.k;
            const int j0 = std::max(0, i - lo), j1 = std::min(c - 1, i + hi);
            for (int j = j0; j <= j1; ++j) {
                const double a = input.data[static_cast<std::size_t>(j) * plane + p];
                s += (cfg.alpha / cfg.depth) * a * a;
            }
            out.data[static_cast<std::size_t>(i) * plane + p] =
                static_cast<T>(input.data[static_cast<std::size_t>(i) * plane + p] *
                               std::pow(s, -cfg.beta));
        }
    }
    return out;
}

template <typename T>
Tensor<T> lrn_backward(const Tensor<T>& input, const Tensor<T>& grad_output,
                       const LrnConfig& cfg) {
    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    const int lo = (cfg.depth - 1) / 2, hi = cfg.depth / 2;
    Tensor<T> grad_input(input.shape);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const double an = cfg.alpha / cfg.depth;
    for (std::size_t p = 0; p < plane; ++p) {
        for (int i = 0; i < c; ++i) {
            double s = cfg.k;
            const int j0 = std::max(0, i - lo), j1 = std::min(c - 1, i + hi);
            for (int j = j0; j <= j1; ++j) {
                const double a = input.data[static_cast<std::size_t>(j) * plane + p];
                s += an * a * a;
            }
            const double g = grad_output.data[static_cast<std::size_t>(i) * plane + p];
            const double ai = input.data[static_cast<std::size_t>(i) * plane + p];
            const double s_mb = std::pow(s, -cfg.beta);
            grad_input.data[static_cast<std::size_t>(i) * plane + p] += static_cast<T>(g * s_mb);
            const double common = -2.0 * an * cfg.beta * g * ai * s_mb / s;
            for (int j = j0; j <= j1; ++j)
                grad_input.data[static_cast<std::size_t>(j) * plane + p] += static_cast<T>(
                    common * input.data[static_cast<std::size_t>(j) * plane + p]);
        }
    }
    return grad_input;
}

template <typename T>
Tensor<T> fc_forward(const Tensor<T>& input, const LayerParams<T>& params) {
    const int out_n = params.weight.dim(0), in_n = params.weight.dim(1);
    if (static_cast<std::size_t>(in_n) != input.size())
        throw std::invalid_argument("fc: input size " + std::to_string(input.size()) +
                                    " != weight in-size " + std::to_string(in_n));
    Tensor<T> out({out_n});
    const T* x = input.ptr();
    for (int o = 0; o < out_n; ++o) {
        const T* w_row = params.weight.ptr() + static_cast<std::size_t>(o) * in_n;
        // independent partial sums; a single chain is fma-latency bound and
        // the fixed-width lane loop vectorizes without reassociation
        T lanes[16] = {};
        int i = 0;
        for (; i + 16 <= in_n; i += 16)
            for (int k = 0; k < 16; ++k) lanes[k] += w_row[i + k] * x[i + k];
        for (int step = 8; step >= 1; step /= 2)
            for (int k = 0; k < step; ++k) lanes[k] += lanes[k + step];
        T acc = params.bias[o] + lanes[0];
        for (; i < in_n; ++i) acc += w_row[i] * x[i];
        out[o] = acc;
    }
    return out;
}

template <typename T>
Tensor<T> fc_backward(const Tensor<T>& input, LayerParams<T>& params,
                      const Tensor<T>& grad_output) {
    const int out_n = params.weight.dim(0), in_n = params.weight.dim(1);
    if (static_cast<std::size_t>(out_n) != grad_output.size())
        throw std::invalid_argument("fc_backward: grad_output size mismatch");
    Tensor<T> grad_input(input.shape);
    for (int o = 0; o < out_n; ++o) {
        const T g = grad_output[o];
        params.grad_bias[o] += g;
        const T* w_row = params.weight.ptr() + static_cast<std::size_t>(o) * in_n;
        T* gw_row = params.grad_weight.ptr() + static_cast<std::size_t>(o) * in_n;
        if (g == T(0)) continue;
        for (int i = 0; i < in_n; ++i) {
            gw_row[i] += g * input[i];
            grad_input[i] += g * w_row[i];
        }
    }
    return grad_input;
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input) {
    Tensor<T> out(input.shape);
    for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T(0) ? input[i] : T(0);
    return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_output) {
    Tensor<T> grad_input(input.shape);
    for (std::size_t i = 0; i < input.size(); ++i)
        grad_input[i] = input[i] > T(0) ? grad_output[i] : T(0);
    return grad_input;
}

template <typename T>
struct DropoutResult {
    Tensor<T> output;
    std::vector<std::uint8_t> mask;  // 1 = kept
    T scale = T(1);
};

// Inverted dropout: kept activations scaled by 1/(1-rate) at train time.
template <typename T>
DropoutResult<T> dropout_forward(const Tensor<T>& input, double rate, bool train,
                                 std::uint64_t seed) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0,1)");
    DropoutResult<T> res{Tensor<T>(input.shape), {}, T(1)};
    if (!train || rate == 0.0) {
        res.output = input;
        res.mask.assign(input.size(), 1);
        return res;
    }
    res.scale = static_cast<T>(1.0 / (1.0 - rate));
    res.mask.resize(input.size());
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (std::size_t i = 0; i < input.size(); ++i) {
        const bool keep = uni(rng) >= rate;
        res.mask[i] = keep ? 1 : 0;
        res.output[i] = keep ? input[i] * res.scale : T(0);
    }
    return res;
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& grad_output, const DropoutResult<T>& fwd) {
    Tensor<T> grad_input(grad_output.shape);
    for (std::size_t i = 0; i < grad_output.size(); ++i)
        grad_input[i] = fwd.mask[i] ? grad_output[i] * fwd.scale : T(0);
    return grad_input;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
    Tensor<T> out(logits.shape);
    T mx = logits[0];
    for (std::size_t i = 1; i < logits.size(); ++i) mx = std::max(mx, logits[i]);
    T sum = T(0);
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (std::size_t i = 0; i < logits.size(); ++i) out[i] /= sum;
    return out;
}

template <typename T>
struct SoftmaxLoss {
    T loss;
    Tensor<T> grad;  // d loss / d logits
    Tensor<T> probs;
};

template <typename T>
SoftmaxLoss<T> softmax_cross_entropy(const Tensor<T>& logits, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= logits.size())
        throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(label) +
                                    " out of range for " + std::to_string(logits.size()) +
                                    " classes");
    SoftmaxLoss<T> res;
    res.probs = softmax(logits);
    res.loss = -std::log(std::max(res.probs[label], std::numeric_limits<T>::min()));
    res.grad = res.probs;
    res.grad[label] -= T(1);
    return res;
}

}  // namespace hn
