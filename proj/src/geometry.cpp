#include "hypernet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hn {

double iou(const Box& a, const Box& b) {
    const double ix = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    const double iy = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    if (ix <= 0 || iy <= 0) return 0.0;
    const double inter = ix * iy;
    // smaller area first so fma contraction cannot make the result depend on
    // argument order
    const double lo = std::min(a.area(), b.area());
    const double hi = std::max(a.area(), b.area());
    return inter / (lo + hi - inter);
}

BoxDelta encode_box(const Box& proposal, const Box& target) {
    BoxDelta d;
    d.tx = (target.cx() - proposal.cx()) / proposal.width();
    d.ty = (target.cy() - proposal.cy()) / proposal.height();
    d.tw = std::log(target.width() / proposal.width());
    d.th = std::log(target.height() / proposal.height());
    return d;
}

Box decode_box(const Box& proposal, const BoxDelta& delta, const std::optional<Box>& bounds) {
    const double tw = std::clamp(delta.tw, -4.0, 4.0);
    const double th = std::clamp(delta.th, -4.0, 4.0);
    const double cx = delta.tx * proposal.width() + proposal.cx();
    const double cy = delta.ty * proposal.height() + proposal.cy();
    const double w = proposal.width() * std::exp(tw);
    const double h = proposal.height() * std::exp(th);
    Box out = Box::from_center(cx, cy, w, h);
    if (bounds) {
        out.x_min = std::clamp(out.x_min, bounds->x_min, bounds->x_max);
        out.x_max = std::clamp(out.x_max, bounds->x_min, bounds->x_max);
        out.y_min = std::clamp(out.y_min, bounds->y_min, bounds->y_max);
        out.y_max = std::clamp(out.y_max, bounds->y_min, bounds->y_max);
    }
    return out;
}

std::vector<ScoredBox> nms(const std::vector<ScoredBox>& boxes, double iou_threshold,
                           int keep_max) {
    if (iou_threshold <= 0.0 || iou_threshold > 1.0)
        throw std::invalid_argument("nms: threshold must be in (0,1]");
    std::vector<int> order(boxes.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return boxes[a].score > boxes[b].score; });

    std::vector<ScoredBox> kept;
    for (int idx : order) {
        bool suppressed = false;
        for (const ScoredBox& k : kept) {
            if (iou(boxes[idx].box, k.box) > iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) {
            kept.push_back(boxes[idx]);
            if (keep_max >= 0 && static_cast<int>(kept.size()) >= keep_max) break;
        }
    }
    return kept;
}

std::vector<Box> generate_candidates(int grid_h, int grid_w, int stride,
                                     const std::vector<double>& scales,
                                     const std::vector<double>& ratios, const Box& image_bounds) {
    if (scales.empty() || ratios.empty())
        throw std::invalid_argument("generate_candidates: scales and ratios must be nonempty");
    std::vector<Box> out;
    out.reserve(static_cast<std::size_t>(grid_h) * grid_w * scales.size() * ratios.size());
    for (int row = 0; row < grid_h; ++row) {
        for (int col = 0; col < grid_w; ++col) {
            const double cx = (col + 0.5) * stride;
            const double cy = (row + 0.5) * stride;
            for (double scale : scales) {
                for (double ratio : ratios) {
                    const double w = scale * std::sqrt(ratio);
                    const double h = scale / std::sqrt(ratio);
                    Box b = Box::from_center(cx, cy, w, h);
                    b.x_min = std::max(b.x_min, image_bounds.x_min);
                    b.y_min = std::max(b.y_min, image_bounds.y_min);
                    b.x_max = std::min(b.x_max, image_bounds.x_max);
                    b.y_max = std::min(b.y_max, image_bounds.y_max);
                    if (b.valid()) out.push_back(b);
                }
            }
        }
    }
    return out;
}

}  // namespace hn
