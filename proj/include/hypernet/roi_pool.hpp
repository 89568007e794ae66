#pragma once

#include <vector>

#include "hypernet/geometry.hpp"
#include "hypernet/tensor.hpp"

namespace hn {

// Dynamic max pooling of an image-space box into a fixed bin grid.
struct RoiSpec {
    Box box;                    // image pixel coordinates
    double feature_stride = 4;  // image-to-feature scale
    int bins_h = 13;
    int bins_w = 13;
};

struct RoiGrid {
    int x0, y0, x1, y1;  // quantized feature-cell span, end exclusive
};

// Box -> feature grid quantization: floor on start, ceil on end, clamped to the
// map and to at least one cell.
RoiGrid quantize_roi(const RoiSpec& roi, int feat_h, int feat_w);

// Per-bin cell span within [0, len): [floor(b*len/bins), ceil((b+1)*len/bins)),
// clamped to at least one cell.
void bin_span(int b, int bins, int len, int& begin, int& end);

template <typename T>
struct RoiPoolResult {
    Tensor<T> output;        // C x bins_h x bins_w
    std::vector<int> argmax; // linear index into the feature tensor per output cell
};

template <typename T>
RoiPoolResult<T> roi_pool_forward(const Tensor<T>& features, const RoiSpec& roi) {
    const int c = features.dim(0), h = features.dim(1), w = features.dim(2);
    const RoiGrid g = quantize_roi(roi, h, w);
    const int len_y = g.y1 - g.y0, len_x = g.x1 - g.x0;

    RoiPoolResult<T> res{Tensor<T>({c, roi.bins_h, roi.bins_w}), {}};
    res.argmax.resize(res.output.size());
    std::size_t oi = 0;
    for (int ch = 0; ch < c; ++ch) {
        const T* plane = features.ptr() + static_cast<std::size_t>(ch) * h * w;
        for (int by = 0; by < roi.bins_h; ++by) {
            int yb, ye;
            bin_span(by, roi.bins_h, len_y, yb, ye);
            for (int bx = 0; bx < roi.bins_w; ++bx, ++oi) {
                int xb, xe;
                bin_span(bx, roi.bins_w, len_x, xb, xe);
                int best = -1;
                T best_v = T(0);
                for (int y = g.y0 + yb; y < g.y0 + ye; ++y) {
                    for (int x = g.x0 + xb; x < g.x0 + xe; ++x) {
                        const int lin = y * w + x;
                        if (best < 0 || plane[lin] > best_v) {
                            best = lin;
                            best_v = plane[lin];
                        }
                    }
                }
                res.output[oi] = best_v;
                res.argmax[oi] = static_cast<int>(static_cast<std::size_t>(ch) * h * w) + best;
            }
        }
    }
    return res;
}

// Scatter grad to the recorded argmax cells, accumulating into grad_features.
template <typename T>
void roi_pool_backward_accum(const Tensor<T>& grad_output, const std::vector<int>& argmax,
                             Tensor<T>& grad_features) {
    for (std::size_t i = 0; i < grad_output.size(); ++i)
        grad_features[static_cast<std::size_t>(argmax[i])] += grad_output[i];
}

template <typename T>
Tensor<T> roi_pool_backward(const Tensor<T>& grad_output, const std::vector<int>& argmax,
                            const std::vector<int>& feature_shape) {
    Tensor<T> grad(feature_shape);
    roi_pool_backward_accum(grad_output, argmax, grad);
    return grad;
}

}  // namespace hn
