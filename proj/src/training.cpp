#include "hypernet/training.hpp"

#include <algorithm>

namespace hn {

LabelAssignment assign_labels(const std::vector<Box>& candidates,
                              const std::vector<std::pair<Box, int>>& ground_truth,
                              const AssignConfig& cfg) {
    LabelAssignment out;
    out.entries.resize(candidates.size());

    std::vector<int> best_candidate(ground_truth.size(), -1);
    std::vector<double> best_gt_iou(ground_truth.size(), 0.0);

    for (std::size_t i = 0; i < candidates.size(); ++i) {
        LabelEntry& e = out.entries[i];
        double best = 0.0;
        int best_j = -1;
        for (std::size_t j = 0; j < ground_truth.size(); ++j) {
            const double v = iou(candidates[i], ground_truth[j].first);
            if (v > best) {
                best = v;
                best_j = static_cast<int>(j);
            }
            if (v > best_gt_iou[j]) {
                best_gt_iou[j] = v;
                best_candidate[j] = static_cast<int>(i);
            }
        }
        e.max_iou = best;
        if (best > cfg.positive_iou) {
            e.label = RoiLabel::kPositive;
            e.gt_index = best_j;
        } else if (best < cfg.negative_iou) {
            e.label = RoiLabel::kNegative;
        } else {
            e.label = RoiLabel::kIgnored;
        }
    }

    if (cfg.force_match) {
        for (std::size_t j = 0; j < ground_truth.size(); ++j) {
            const int c = best_candidate[j];
            if (c < 0 || best_gt_iou[j] <= 0.0) continue;
            LabelEntry& e = out.entries[c];
            if (e.label != RoiLabel::kPositive) {
                e.label = RoiLabel::kPositive;
                e.gt_index = static_cast<int>(j);
            }
        }
    }

    for (std::size_t i = 0; i < out.entries.size(); ++i) {
        LabelEntry& e = out.entries[i];
        if (e.label == RoiLabel::kPositive) {
            e.delta = encode_box(candidates[i], ground_truth[e.gt_index].first);
            ++out.num_positive;
        } else if (e.label == RoiLabel::kNegative) {
            ++out.num_negative;
        }
    }
    return out;
}

std::vector<int> sample_minibatch(const LabelAssignment& assignment, int size,
                                  double positive_fraction, std::uint64_t seed) {
    std::vector<int> positives, negatives;
    for (std::size_t i = 0; i < assignment.entries.size(); ++i) {
        switch (assignment.entries[i].label) {
            case RoiLabel::kPositive: positives.push_back(static_cast<int>(i)); break;
            case RoiLabel::kNegative: negatives.push_back(static_cast<int>(i)); break;
            case RoiLabel::kIgnored: break;
        }
    }
    std::mt19937_64 gen(seed);
    std::shuffle(positives.begin(), positives.end(), gen);
    std::shuffle(negatives.begin(), negatives.end(), gen);

    const int want_pos = static_cast<int>(size * positive_fraction);
    const int n_pos = std::min<int>(want_pos, static_cast<int>(positives.size()));
    const int n_neg = std::min<int>(size - n_pos, static_cast<int>(negatives.size()));

    std::vector<int> out(positives.begin(), positives.begin() + n_pos);
    out.insert(out.end(), negatives.begin(), negatives.begin() + n_neg);
    return out;
}

}  // namespace hn
