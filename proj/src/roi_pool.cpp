#include "hypernet/roi_pool.hpp"

#include <algorithm>
#include <cmath>

namespace hn {

RoiGrid quantize_roi(const RoiSpec& roi, int feat_h, int feat_w) {
    if (roi.bins_h < 1 || roi.bins_w < 1 || roi.feature_stride <= 0)
        throw std::invalid_argument("roi_pool: bins must be >= 1 and stride > 0");
    const double img_w = feat_w * roi.feature_stride;
    const double img_h = feat_h * roi.feature_stride;
    if (roi.box.x_max <= 0 || roi.box.y_max <= 0 || roi.box.x_min >= img_w ||
        roi.box.y_min >= img_h)
        throw std::invalid_argument("roi_pool: roi fully outside the image");

    RoiGrid g;
    g.x0 = std::clamp(static_cast<int>(std::floor(roi.box.x_min / roi.feature_stride)), 0,
                      feat_w - 1);
    g.y0 = std::clamp(static_cast<int>(std::floor(roi.box.y_min / roi.feature_stride)), 0,
                      feat_h - 1);
    g.x1 = std::clamp(static_cast<int>(std::ceil(roi.box.x_max / roi.feature_stride)), g.x0 + 1,
                      feat_w);
    g.y1 = std::clamp(static_cast<int>(std::ceil(roi.box.y_max / roi.feature_stride)), g.y0 + 1,
                      feat_h);
    return g;
}

void bin_span(int b, int bins, int len, int& begin, int& end) {
    begin = b * len / bins;
    end = ((b + 1) * len + bins - 1) / bins;
    // small rois replicate cells across bins
    begin = std::min(begin, len - 1);
    end = std::max(end, begin + 1);
}

}  // namespace hn
