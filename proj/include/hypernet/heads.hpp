#pragma once

#include <cstdint>
#include <vector>

#include "hypernet/geometry.hpp"
#include "hypernet/layers.hpp"
#include "hypernet/roi_pool.hpp"

namespace hn {

enum class Variant { kBasic, kSp };

inline const char* variant_name(Variant v) { return v == Variant::kBasic ? "basic" : "sp"; }

// Mix a base seed with per-call identifiers; splitmix64 finalizer.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (a + 1) + 0xbf58476d1ce4e5b9ull * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

struct ProposalHeadConfig {
    Variant variant = Variant::kBasic;
    int roi_bins = 13;
    int mid_channels = 4;  // the 3x3x4 conv, after pooling (basic) or before (sp)
    int fc_width = 256;
    double nms_threshold = 0.7;
    int top_k_train = 200;
    int top_k_test = 100;
};

// Objectness scoring + box regression over candidate boxes.
// basic: roi-pool(C) -> conv3x3x4 -> relu -> fc -> relu -> {2 scores, 4 deltas}
// sp:    conv3x3x4 on the shared map once, then roi-pool(4) -> fc -> ...
template <typename T>
struct ProposalHead {
    ProposalHeadConfig cfg;
    int in_channels = 0;
    LayerParams<T> conv;
    LayerParams<T> fc;
    LayerParams<T> fc_score;
    LayerParams<T> fc_reg;

    void configure(const ProposalHeadConfig& c, int hyper_channels) {
        cfg = c;
        in_channels = hyper_channels;
        conv = make_conv_params<T>(cfg.mid_channels, hyper_channels, 3, 3);
        fc = make_fc_params<T>(cfg.fc_width, cfg.mid_channels * cfg.roi_bins * cfg.roi_bins);
        fc_score = make_fc_params<T>(2, cfg.fc_width);
        fc_reg = make_fc_params<T>(4, cfg.fc_width);
    }

    struct MapTrace {
        Tensor<T> conv_out;  // sp only
        Tensor<T> relu_out;
    };

    // For sp the per-image conv runs once, ahead of all rois.
    MapTrace forward_map(const Tensor<T>& hyper) const {
        MapTrace m;
        if (cfg.variant == Variant::kSp) {
            m.conv_out = conv2d_forward(hyper, conv, 1, 1);
            m.relu_out = relu_forward(m.conv_out);
        }
        return m;
    }

    const Tensor<T>& roi_source(const Tensor<T>& hyper, const MapTrace& m) const {
        return cfg.variant == Variant::kSp ? m.relu_out : hyper;
    }

    struct RoiTrace {
        RoiPoolResult<T> pool;
        Tensor<T> conv_out;  // basic only
        Tensor<T> relu1;     // basic only
        Tensor<T> fc_in;
        Tensor<T> fc_out;
        Tensor<T> relu2;
        Tensor<T> score_logits;  // 2
        Tensor<T> reg_out;       // 4
    };

    RoiTrace forward_roi(const Tensor<T>& source_map, const Box& roi,
                         double feature_stride) const {
        RoiTrace t;
        t.pool = roi_pool_forward(source_map, RoiSpec{roi, feature_stride, cfg.roi_bins,
                                                      cfg.roi_bins});
        if (cfg.variant == Variant::kBasic) {
            t.conv_out = conv2d_forward(t.pool.output, conv, 1, 1);
            t.relu1 = relu_forward(t.conv_out);
            t.fc_in = t.relu1;
        } else {
            t.fc_in = t.pool.output;
        }
        t.fc_in.shape = {static_cast<int>(t.fc_in.size())};
        t.fc_out = fc_forward(t.fc_in, fc);
        t.relu2 = relu_forward(t.fc_out);
        t.score_logits = fc_forward(t.relu2, fc_score);
        t.reg_out = fc_forward(t.relu2, fc_reg);
        return t;
    }

    void backward_roi(const RoiTrace& t, const Tensor<T>& g_score, const Tensor<T>& g_reg,
                      Tensor<T>& grad_source_map) {
        Tensor<T> g_relu2 = fc_backward(t.relu2, fc_score, g_score);
        Tensor<T> g_reg_in = fc_backward(t.relu2, fc_reg, g_reg);
        for (std::size_t i = 0; i < g_relu2.size(); ++i) g_relu2[i] += g_reg_in[i];
        Tensor<T> g_fc_out = relu_backward(t.fc_out, g_relu2);
        Tensor<T> g_fc_in = fc_backward(t.fc_in, fc, g_fc_out);
        if (cfg.variant == Variant::kBasic) {
            g_fc_in.shape = t.conv_out.shape;
            Tensor<T> g_conv = relu_backward(t.conv_out, g_fc_in);
            Tensor<T> g_pool = conv2d_backward(t.pool.output, conv, g_conv, 1, 1);
            roi_pool_backward_accum(g_pool, t.pool.argmax, grad_source_map);
        } else {
            g_fc_in.shape = t.pool.output.shape;
            roi_pool_backward_accum(g_fc_in, t.pool.argmax, grad_source_map);
        }
    }

    // sp: fold the accumulated conv-map gradient back to the hyper map.
    Tensor<T> backward_map(const Tensor<T>& hyper, const MapTrace& m,
                           const Tensor<T>& grad_source_map) {
        if (cfg.variant != Variant::kSp) return grad_source_map;
        Tensor<T> g_conv = relu_backward(m.conv_out, grad_source_map);
        return conv2d_backward(hyper, conv, g_conv, 1, 1);
    }
};

struct DetectionHeadConfig {
    Variant variant = Variant::kBasic;
    int roi_bins = 13;
    int conv_channels = 63;
    int fc_width = 256;
    int num_classes = 3;
    double dropout = 0.25;
    double score_floor = 0.05;
    double class_nms_threshold = 0.3;
};

struct Detection {
    Box box;
    int class_id = 1;  // 1..N; background never emitted
    double score = 0;
};

// Per-region classifier: conv3x3x63, then FC-Dropout-FC-Dropout, then
// N+1 scores and 4N offsets.
template <typename T>
struct DetectionHead {
    DetectionHeadConfig cfg;
    int in_channels = 0;
    LayerParams<T> conv;
    LayerParams<T> fc1;
    LayerParams<T> fc2;
    LayerParams<T> fc_score;
    LayerParams<T> fc_reg;

    void configure(const DetectionHeadConfig& c, int hyper_channels) {
        cfg = c;
        in_channels = hyper_channels;
        conv = make_conv_params<T>(cfg.conv_channels, hyper_channels, 3, 3);
        fc1 = make_fc_params<T>(cfg.fc_width, cfg.conv_channels * cfg.roi_bins * cfg.roi_bins);
        fc2 = make_fc_params<T>(cfg.fc_width, cfg.fc_width);
        fc_score = make_fc_params<T>(cfg.num_classes + 1, cfg.fc_width);
        fc_reg = make_fc_params<T>(4 * cfg.num_classes, cfg.fc_width);
    }

    struct MapTrace {
        Tensor<T> conv_out;
        Tensor<T> relu_out;
    };

    MapTrace forward_map(const Tensor<T>& hyper) const {
        MapTrace m;
        if (cfg.variant == Variant::kSp) {
            m.conv_out = conv2d_forward(hyper, conv, 1, 1);
            m.relu_out = relu_forward(m.conv_out);
        }
        return m;
    }

    const Tensor<T>& roi_source(const Tensor<T>& hyper, const MapTrace& m) const {
        return cfg.variant == Variant::kSp ? m.relu_out : hyper;
    }

    struct RoiTrace {
        RoiPoolResult<T> pool;
        Tensor<T> conv_out;  // basic only
        Tensor<T> relu0;     // basic only
        Tensor<T> fc_in;
        Tensor<T> fc1_out, relu1;
        DropoutResult<T> drop1;
        Tensor<T> fc2_out, relu2;
        DropoutResult<T> drop2;
        Tensor<T> score_logits;  // N+1
        Tensor<T> reg_out;       // 4N
    };

    RoiTrace forward_roi(const Tensor<T>& source_map, const Box& roi, double feature_stride,
                         bool train, std::uint64_t seed) const {
        RoiTrace t;
        t.pool = roi_pool_forward(source_map, RoiSpec{roi, feature_stride, cfg.roi_bins,
                                                      cfg.roi_bins});
        if (cfg.variant == Variant::kBasic) {
            t.conv_out = conv2d_forward(t.pool.output, conv, 1, 1);
            t.relu0 = relu_forward(t.conv_out);
            t.fc_in = t.relu0;
        } else {
            t.fc_in = t.pool.output;
        }
        t.fc_in.shape = {static_cast<int>(t.fc_in.size())};
        t.fc1_out = fc_forward(t.fc_in, fc1);
        t.relu1 = relu_forward(t.fc1_out);
        t.drop1 = dropout_forward(t.relu1, cfg.dropout, train, mix_seed(seed, 1));
        t.fc2_out = fc_forward(t.drop1.output, fc2);
        t.relu2 = relu_forward(t.fc2_out);
        t.drop2 = dropout_forward(t.relu2, cfg.dropout, train, mix_seed(seed, 2));
        t.score_logits = fc_forward(t.drop2.output, fc_score);
        t.reg_out = fc_forward(t.drop2.output, fc_reg);
        return t;
    }

    void backward_roi(const RoiTrace& t, const Tensor<T>& g_score, const Tensor<T>& g_reg,
                      Tensor<T>& grad_source_map) {
        Tensor<T> g_drop2 = fc_backward(t.drop2.output, fc_score, g_score);
        Tensor<T> g_reg_in = fc_backward(t.drop2.output, fc_reg, g_reg);
        for (std::size_t i = 0; i < g_drop2.size(); ++i) g_drop2[i] += g_reg_in[i];
        Tensor<T> g_relu2 = dropout_backward(g_drop2, t.drop2);
        Tensor<T> g_fc2 = relu_backward(t.fc2_out, g_relu2);
        Tensor<T> g_drop1 = fc_backward(t.drop1.output, fc2, g_fc2);
        Tensor<T> g_relu1 = dropout_backward(g_drop1, t.drop1);
        Tensor<T> g_fc1 = relu_backward(t.fc1_out, g_relu1);
        Tensor<T> g_fc_in = fc_backward(t.fc_in, fc1, g_fc1);
        if (cfg.variant == Variant::kBasic) {
            g_fc_in.shape = t.conv_out.shape;
            Tensor<T> g_conv = relu_backward(t.conv_out, g_fc_in);
            Tensor<T> g_pool = conv2d_backward(t.pool.output, conv, g_conv, 1, 1);
            roi_pool_backward_accum(g_pool, t.pool.argmax, grad_source_map);
        } else {
            g_fc_in.shape = t.pool.output.shape;
            roi_pool_backward_accum(g_fc_in, t.pool.argmax, grad_source_map);
        }
    }

    Tensor<T> backward_map(const Tensor<T>& hyper, const MapTrace& m,
                           const Tensor<T>& grad_source_map) {
        if (cfg.variant != Variant::kSp) return grad_source_map;
        Tensor<T> g_conv = relu_backward(m.conv_out, grad_source_map);
        return conv2d_backward(hyper, conv, g_conv, 1, 1);
    }
};

struct FlopEstimate {
    long long per_candidate = 0;  // multiply-accumulates per candidate box
    long long total = 0;
};

// Closed-form MAC count for the per-candidate portion of the proposal head.
// sp excludes the conv (it runs once on the shared map, not per candidate).
inline FlopEstimate flop_estimate(const ProposalHeadConfig& cfg, int hyper_channels,
                                  long long num_candidates) {
    const long long bins2 = static_cast<long long>(cfg.roi_bins) * cfg.roi_bins;
    const long long fc_macs = cfg.fc_width * (cfg.mid_channels * bins2) +
                              static_cast<long long>(cfg.fc_width) * 2 +
                              static_cast<long long>(cfg.fc_width) * 4;
    long long per = fc_macs;
    if (cfg.variant == Variant::kBasic)
        per += static_cast<long long>(cfg.mid_channels) * hyper_channels * 9 * bins2;
    return {per, per * num_candidates};
}

}  // namespace hn
