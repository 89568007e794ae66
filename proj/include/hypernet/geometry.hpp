#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hn {

// Axis-aligned box in continuous pixel coordinates, width = x_max - x_min.
struct Box {
    double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double cx() const { return 0.5 * (x_min + x_max); }
    double cy() const { return 0.5 * (y_min + y_max); }
    double area() const { return width() * height(); }
    bool valid() const { return x_max > x_min && y_max > y_min; }

    static Box from_center(double cx, double cy, double w, double h) {
        return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
    }
};

struct ScoredBox {
    Box box;
    double score = 0;
    int class_id = -1;  // -1 = class-agnostic
};

struct BoxDelta {
    double tx = 0, ty = 0, tw = 0, th = 0;
};

double iou(const Box& a, const Box& b);

// Box regression parameterization in center/size coordinates:
// tx=(Gx-Px)/Pw, ty=(Gy-Py)/Ph, tw=log(Gw/Pw), th=log(Gh/Ph)
BoxDelta encode_box(const Box& proposal, const Box& target);

// Inverse of encode_box; tw/th clamped to [-4,4] before exp. When bounds is
// given the result is clipped to it.
Box decode_box(const Box& proposal, const BoxDelta& delta,
               const std::optional<Box>& bounds = std::nullopt);

// Greedy NMS: sort by score descending (ties by original index), keep a box
// iff IoU with every kept box <= threshold. keep_max < 0 means unlimited.
std::vector<ScoredBox> nms(const std::vector<ScoredBox>& boxes, double iou_threshold,
                           int keep_max = -1);

// Dense anchors over a feature grid: one box per (cell, scale, ratio), centered
// at ((col+0.5)*stride, (row+0.5)*stride), width scale*sqrt(ratio), height
// scale/sqrt(ratio). Clipped to image_bounds; degenerate boxes dropped.
// Order: row-major cells, then scale, then ratio.
std::vector<Box> generate_candidates(int grid_h, int grid_w, int stride,
                                     const std::vector<double>& scales,
                                     const std::vector<double>& ratios, const Box& image_bounds);

}  // namespace hn
