#pragma once

#include <string>
#include <vector>

#include "hypernet/layers.hpp"
#include "hypernet/tensor.hpp"

namespace hn {

// One 3x3/pad-1 conv stage followed by ReLU.
struct StageSpec {
    int out_channels;
    int stride;
};

struct BackboneConfig {
    std::vector<StageSpec> stages;
    std::vector<int> taps;  // stage indices whose output feeds fusion, shallow to deep

    // 5 stages at cumulative strides 2/4/4/8/8; taps 1/3/5 sit at 2/4/8.
    static BackboneConfig desk_default() {
        BackboneConfig c;
        c.stages = {{16, 2}, {16, 2}, {32, 1}, {32, 2}, {64, 1}};
        c.taps = {0, 2, 4};
        return c;
    }

    std::vector<int> cumulative_strides() const {
        std::vector<int> out;
        int s = 1;
        for (const StageSpec& st : stages) {
            s *= st.stride;
            out.push_back(s);
        }
        return out;
    }

    int max_stride() const {
        int s = 1;
        for (const StageSpec& st : stages) s *= st.stride;
        return s;
    }

    int tap_stride(int tap_index) const { return cumulative_strides()[taps[tap_index]]; }
    int tap_channels(int tap_index) const { return stages[taps[tap_index]].out_channels; }
};

template <typename T>
struct BackboneTrace {
    std::vector<Tensor<T>> conv_out;  // pre-activation per stage
    std::vector<Tensor<T>> relu_out;  // post-activation per stage
};

template <typename T>
struct Backbone {
    BackboneConfig cfg;
    std::vector<LayerParams<T>> convs;

    void configure(const BackboneConfig& c, int image_channels = 3) {
        cfg = c;
        convs.clear();
        int in_c = image_channels;
        for (const StageSpec& st : cfg.stages) {
            convs.push_back(make_conv_params<T>(st.out_channels, in_c, 3, 3));
            in_c = st.out_channels;
        }
    }

    BackboneTrace<T> forward(const Tensor<T>& image) const {
        const int h = image.dim(1), w = image.dim(2);
        const int ms = cfg.max_stride();
        if (h % ms != 0 || w % ms != 0)
            throw std::invalid_argument("backbone: input " + shape_str(image.shape) +
                                        " not divisible by stride " + std::to_string(ms));
        BackboneTrace<T> tr;
        const Tensor<T>* x = &image;
        for (std::size_t i = 0; i < convs.size(); ++i) {
            tr.conv_out.push_back(conv2d_forward(*x, convs[i], cfg.stages[i].stride, 1));
            tr.relu_out.push_back(relu_forward(tr.conv_out.back()));
            x = &tr.relu_out.back();
        }
        return tr;
    }

    std::vector<const Tensor<T>*> taps(const BackboneTrace<T>& tr) const {
        std::vector<const Tensor<T>*> out;
        for (int t : cfg.taps) out.push_back(&tr.relu_out[t]);
        return out;
    }

    // tap_grads must align with cfg.taps; returns the image gradient.
    Tensor<T> backward(const Tensor<T>& image, const BackboneTrace<T>& tr,
                       const std::vector<Tensor<T>>& tap_grads) {
        const int n = static_cast<int>(convs.size());
        Tensor<T> grad;  // grad at the ReLU output of the current stage
        bool have_grad = false;
        for (int i = n - 1; i >= 0; --i) {
            auto tap_it = std::find(cfg.taps.begin(), cfg.taps.end(), i);
            if (tap_it != cfg.taps.end()) {
                const Tensor<T>& tg = tap_grads[tap_it - cfg.taps.begin()];
                if (!have_grad) {
                    grad = tg;
                    have_grad = true;
                } else {
                    for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += tg[j];
                }
            }
            if (!have_grad) grad = Tensor<T>(tr.relu_out[i].shape);
            have_grad = true;
            Tensor<T> g_pre = relu_backward(tr.conv_out[i], grad);
            const Tensor<T>& input = (i == 0) ? image : tr.relu_out[i - 1];
            grad = conv2d_backward(input, convs[i], g_pre, cfg.stages[i].stride, 1);
        }
        return grad;
    }
};

struct FusionConfig {
    std::vector<int> tap_strides;   // cumulative stride per fused tap, shallow to deep
    std::vector<int> tap_channels;  // backbone channels per fused tap
    int reference_stride = 4;
    int channels_per_tap = 42;
    LrnConfig lrn;

    int total_channels() const {
        return channels_per_tap * static_cast<int>(tap_strides.size());
    }
};

// Fusion over any tap subset; single-layer configs drive the ablation grid.
inline FusionConfig ablation_select(const BackboneConfig& backbone,
                                    const std::vector<int>& tap_subset, int channels_per_tap = 42,
                                    const LrnConfig& lrn = {}) {
    FusionConfig f;
    f.channels_per_tap = channels_per_tap;
    f.lrn = lrn;
    for (int t : tap_subset) {
        f.tap_strides.push_back(backbone.tap_stride(t));
        f.tap_channels.push_back(backbone.tap_channels(t));
    }
    return f;
}

template <typename T>
struct FusionTapTrace {
    PoolResult<T> pool;            // shallow taps
    Tensor<T> deconv_out;          // deep taps, before crop
    Tensor<T> sampled;             // at reference resolution
    Tensor<T> compress_out;        // pre-activation
    Tensor<T> relu_out;            // LRN input
    Tensor<T> lrn_out;
};

template <typename T>
struct FusionTrace {
    std::vector<FusionTapTrace<T>> taps;
    Tensor<T> hyper;
};

template <typename T>
Tensor<T> crop_center(const Tensor<T>& x, int margin) {
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor<T> out({c, h - 2 * margin, w - 2 * margin});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < out.dim(1); ++y)
            for (int xx = 0; xx < out.dim(2); ++xx)
                out.at(ch, y, xx) = x.at(ch, y + margin, xx + margin);
    return out;
}

template <typename T>
Tensor<T> pad_center(const Tensor<T>& x, int margin, const std::vector<int>& full_shape) {
    Tensor<T> out(full_shape);
    for (int ch = 0; ch < x.dim(0); ++ch)
        for (int y = 0; y < x.dim(1); ++y)
            for (int xx = 0; xx < x.dim(2); ++xx)
                out.at(ch, y + margin, xx + margin) = x.at(ch, y, xx);
    return out;
}

// Sample-to-reference-resolution, compress, normalize, concatenate.
template <typename T>
struct Fusion {
    FusionConfig cfg;
    std::vector<LayerParams<T>> deconvs;   // sized only for deep taps
    std::vector<LayerParams<T>> compress;  // 3x3 pad-1 conv per tap

    void configure(const FusionConfig& c) {
        cfg = c;
        deconvs.clear();
        compress.clear();
        for (std::size_t i = 0; i < cfg.tap_strides.size(); ++i) {
            const int ch = cfg.tap_channels[i];
            if (cfg.tap_strides[i] > cfg.reference_stride) {
                const int r = cfg.tap_strides[i] / cfg.reference_stride;
                auto p = make_deconv_params<T>(ch, ch, 2 * r, 2 * r);
                fill_bilinear_kernel(p.weight);
                deconvs.push_back(std::move(p));
            } else {
                deconvs.emplace_back();
            }
            compress.push_back(make_conv_params<T>(cfg.channels_per_tap, ch, 3, 3));
        }
    }

    FusionTrace<T> forward(const std::vector<const Tensor<T>*>& taps) const {
        if (taps.size() != cfg.tap_strides.size())
            throw std::invalid_argument("fusion: tap count mismatch");
        FusionTrace<T> tr;
        int ref_h = -1, ref_w = -1;
        for (std::size_t i = 0; i < taps.size(); ++i) {
            FusionTapTrace<T> t;
            const int stride = cfg.tap_strides[i];
            if (stride < cfg.reference_stride) {
                const int r = cfg.reference_stride / stride;
                t.pool = maxpool2d_forward(*taps[i], r, r);
                t.sampled = t.pool.output;
            } else if (stride > cfg.reference_stride) {
                const int r = stride / cfg.reference_stride;
                t.deconv_out = deconv2d_forward(*taps[i], deconvs[i], r);
                t.sampled = crop_center(t.deconv_out, r / 2);
            } else {
                t.sampled = *taps[i];
            }
            if (ref_h < 0) {
                ref_h = t.sampled.dim(1);
                ref_w = t.sampled.dim(2);
            } else if (t.sampled.dim(1) != ref_h || t.sampled.dim(2) != ref_w) {
                throw std::runtime_error("fusion: tap resolution mismatch after sampling: " +
                                         shape_str(t.sampled.shape));
            }
            t.compress_out = conv2d_forward(t.sampled, compress[i], 1, 1);
            t.relu_out = relu_forward(t.compress_out);
            t.lrn_out = lrn_forward(t.relu_out, cfg.lrn);
            tr.taps.push_back(std::move(t));
        }
        tr.hyper = Tensor<T>({cfg.total_channels(), ref_h, ref_w});
        std::size_t off = 0;
        for (const FusionTapTrace<T>& t : tr.taps) {
            std::copy(t.lrn_out.data.begin(), t.lrn_out.data.end(), tr.hyper.data.begin() + off);
            off += t.lrn_out.size();
        }
        return tr;
    }

    // Adjoint of forward; returns per-tap input gradients.
    std::vector<Tensor<T>> backward(const std::vector<const Tensor<T>*>& taps,
                                    const FusionTrace<T>& tr, const Tensor<T>& grad_hyper) {
        if (grad_hyper.shape != tr.hyper.shape)
            throw std::invalid_argument("fusion backward: grad shape mismatch");
        std::vector<Tensor<T>> tap_grads;
        std::size_t off = 0;
        for (std::size_t i = 0; i < tr.taps.size(); ++i) {
            const FusionTapTrace<T>& t = tr.taps[i];
            Tensor<T> g_lrn(t.lrn_out.shape);
            std::copy(grad_hyper.data.begin() + off, grad_hyper.data.begin() + off + g_lrn.size(),
                      g_lrn.data.begin());
            off += g_lrn.size();

            Tensor<T> g_relu = lrn_backward(t.relu_out, g_lrn, cfg.lrn);
            Tensor<T> g_comp = relu_backward(t.compress_out, g_relu);
            Tensor<T> g_sampled = conv2d_backward(t.sampled, compress[i], g_comp, 1, 1);

            const int stride = cfg.tap_strides[i];
            if (stride < cfg.reference_stride) {
                tap_grads.push_back(maxpool2d_backward(g_sampled, t.pool.argmax, taps[i]->shape));
            } else if (stride > cfg.reference_stride) {
                const int r = stride / cfg.reference_stride;
                Tensor<T> g_deconv = pad_center(g_sampled, r / 2, t.deconv_out.shape);
                tap_grads.push_back(deconv2d_backward(*taps[i], deconvs[i], g_deconv, r));
            } else {
                tap_grads.push_back(std::move(g_sampled));
            }
        }
        return tap_grads;
    }
};

}  // namespace hn
