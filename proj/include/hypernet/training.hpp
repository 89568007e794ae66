#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "hypernet/geometry.hpp"
#include "hypernet/layers.hpp"

namespace hn {

enum class RoiLabel { kPositive, kNegative, kIgnored };

struct LabelEntry {
    RoiLabel label = RoiLabel::kIgnored;
    int gt_index = -1;     // for positives
    BoxDelta delta;        // regression target for positives
    double max_iou = 0.0;
};

struct LabelAssignment {
    std::vector<LabelEntry> entries;
    int num_positive = 0;
    int num_negative = 0;
};

struct AssignConfig {
    double positive_iou = 0.45;
    double negative_iou = 0.3;
    bool force_match = true;  // every gt claims its best candidate
};

// IoU > positive_iou -> positive (matched to the max-IoU gt); max IoU <
// negative_iou -> negative; otherwise ignored. With force_match each gt
// additionally claims its best-IoU candidate, ties by lowest index.
LabelAssignment assign_labels(const std::vector<Box>& candidates,
                              const std::vector<std::pair<Box, int>>& ground_truth,
                              const AssignConfig& cfg = {});

// Up to size*positive_fraction positives, remainder negatives; short positive
// sets are backfilled with negatives. Seeded and reproducible.
std::vector<int> sample_minibatch(const LabelAssignment& assignment, int size,
                                  double positive_fraction, std::uint64_t seed);

inline double smooth_l1(double x) {
    const double ax = std::abs(x);
    return ax < 1.0 ? 0.5 * x * x : ax - 0.5;
}

inline double smooth_l1_grad(double x) {
    if (x > 1.0) return 1.0;
    if (x < -1.0) return -1.0;
    return x;
}

// One classification sample of the Eq.-style multi-task objective.
template <typename T>
struct LossSample {
    Tensor<T> logits;       // K classes
    int label = 0;          // 0 = background / not-object
    bool has_reg = false;   // positives only
    Tensor<T> delta_pred;   // 4 values
    BoxDelta delta_target;
};

template <typename T>
struct MultitaskLossResult {
    double total = 0;
    double l_cls = 0;
    double l_reg = 0;
    std::vector<Tensor<T>> grad_logits;
    std::vector<Tensor<T>> grad_delta;  // zero tensors for non-regression samples
};

// L = mean CE over samples + lambda * mean over positives of sum smooth_l1.
template <typename T>
MultitaskLossResult<T> multitask_loss(const std::vector<LossSample<T>>& samples, double lambda) {
    MultitaskLossResult<T> res;
    if (samples.empty()) return res;
    int n_pos = 0;
    for (const auto& s : samples)
        if (s.has_reg) ++n_pos;
    const double cls_norm = 1.0 / static_cast<double>(samples.size());
    const double reg_norm = n_pos > 0 ? 1.0 / static_cast<double>(n_pos) : 0.0;

    for (const auto& s : samples) {
        auto ce = softmax_cross_entropy(s.logits, s.label);
        res.l_cls += ce.loss * cls_norm;
        for (auto& g : ce.grad.data) g = static_cast<T>(g * cls_norm);
        res.grad_logits.push_back(std::move(ce.grad));

        Tensor<T> gd({4});
        if (s.has_reg) {
            const double target[4] = {s.delta_target.tx, s.delta_target.ty, s.delta_target.tw,
                                      s.delta_target.th};
            for (int i = 0; i < 4; ++i) {
                const double diff = static_cast<double>(s.delta_pred[i]) - target[i];
                res.l_reg += smooth_l1(diff) * reg_norm;
                gd[i] = static_cast<T>(lambda * smooth_l1_grad(diff) * reg_norm);
            }
        }
        res.grad_delta.push_back(std::move(gd));
    }
    res.total = res.l_cls + lambda * res.l_reg;
    return res;
}

struct SgdConfig {
    double lr_initial = 0.005;
    double lr_late = 0.0005;
    double lr_switch_fraction = 2.0 / 3.0;  // of each stage
    double momentum = 0.9;
    double weight_decay = 0.0005;
};

// v <- mu*v - lr*(g + wd*w); w <- w + v
template <typename T>
void sgd_step(Tensor<T>& weights, const Tensor<T>& grads, Tensor<T>& velocity, double lr,
              double momentum, double weight_decay) {
    if (!weights.same_shape(grads) || !weights.same_shape(velocity))
        throw std::invalid_argument("sgd_step: shape mismatch");
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double v = momentum * static_cast<double>(velocity[i]) -
                         lr * (static_cast<double>(grads[i]) +
                               weight_decay * static_cast<double>(weights[i]));
        velocity[i] = static_cast<T>(v);
        weights[i] = static_cast<T>(static_cast<double>(weights[i]) + v);
    }
}

// Uniform on +/- sqrt(6/(fan_in+fan_out)).
template <typename T>
void xavier_fill(Tensor<T>& t, int fan_in, int fan_out, std::uint64_t seed) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> uni(-bound, bound);
    for (auto& v : t.data) v = static_cast<T>(uni(gen));
}

template <typename T>
Tensor<T> xavier_init(const std::vector<int>& shape, std::uint64_t seed) {
    Tensor<T> t(shape);
    int fan_in, fan_out;
    if (shape.size() == 2) {
        fan_out = shape[0];
        fan_in = shape[1];
    } else if (shape.size() == 4) {
        const int k = shape[2] * shape[3];
        fan_out = shape[0] * k;
        fan_in = shape[1] * k;
    } else {
        throw std::invalid_argument("xavier_init: expected fc or conv weight shape");
    }
    xavier_fill(t, fan_in, fan_out, seed);
    return t;
}

struct StagePlan {
    int iterations = 0;
};

// The six-step joint schedule; step 1 is seeded init, step 6 the unified output.
struct TrainPlan {
    StagePlan stage2{2000};  // proposal training
    StagePlan stage3{2000};  // detection training on stage-2 proposals
    StagePlan stage4{1000};  // proposal fine-tune, shared hyper layers
    StagePlan stage5{1000};  // detection fine-tune, hyper layers frozen
    std::uint64_t seed = 0;
    int minibatch = 64;
    double positive_fraction = 0.25;
    double lambda_proposal = 3.0;
    double lambda_detection = 1.0;
    bool horizontal_flip = true;
    int log_every = 50;
    SgdConfig sgd;
};

struct MetricRecord {
    int stage = 0;
    int iteration = 0;
    double l_cls = 0;
    double l_reg = 0;
    double total = 0;
};

}  // namespace hn
