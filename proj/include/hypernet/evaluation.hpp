#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hypernet/data_io.hpp"
#include "hypernet/geometry.hpp"
#include "hypernet/model.hpp"

namespace hn {

// Fraction of ground-truth boxes covered by at least one of the top_n
// highest-scoring proposals at IoU >= iou_threshold. Throws when there is no
// ground truth at all. top_n <= 0 means use every proposal.
double recall_at(const std::vector<std::vector<ScoredBox>>& proposals,
                 const std::vector<std::vector<Box>>& ground_truth, double iou_threshold,
                 int top_n);

std::vector<std::pair<double, double>> recall_vs_iou(
    const std::vector<std::vector<ScoredBox>>& proposals,
    const std::vector<std::vector<Box>>& ground_truth, int top_n,
    const std::vector<double>& iou_thresholds);

std::vector<std::pair<int, double>> recall_vs_count(
    const std::vector<std::vector<ScoredBox>>& proposals,
    const std::vector<std::vector<Box>>& ground_truth, double iou_threshold,
    const std::vector<int>& counts);

// Smallest count from `counts` reaching recall_target, or -1 when none does.
int proposals_needed(const std::vector<std::vector<ScoredBox>>& proposals,
                     const std::vector<std::vector<Box>>& ground_truth, double recall_target,
                     double iou_threshold, const std::vector<int>& counts);

// Single-class AP. Detections are matched greedily in score order to the
// highest-IoU unmatched ground-truth box of the same image; IoU below the
// threshold or a duplicate match counts as a false positive. Default is
// all-point interpolation (area under the monotone precision envelope);
// eleven_point switches to the mean over recall levels 0, 0.1, ..., 1.
double average_precision(const std::vector<std::vector<ScoredBox>>& detections,
                         const std::vector<std::vector<Box>>& ground_truth,
                         double iou_threshold, bool eleven_point = false);

struct MeanApResult {
    double map = 0;
    std::vector<std::pair<int, double>> per_class;  // class id -> AP
    std::vector<int> skipped_classes;               // no ground truth anywhere
};

MeanApResult mean_average_precision(const std::vector<std::vector<Detection>>& detections,
                                    const std::vector<std::vector<Annotation>>& ground_truth,
                                    int num_classes, double iou_threshold,
                                    bool eleven_point = false);

struct StageTimings {
    double conv_ms = 0;       // image to hyper map
    double proposal_ms = 0;   // candidate scoring + NMS
    double detection_ms = 0;  // classification of the kept proposals
    double total_ms = 0;
    int runs = 0;
};

// Median wall-clock per stage over `runs` forward passes, cycling through the
// dataset. Requires runs >= 1.
StageTimings benchmark_stages(const HyperNetModel& model, const Dataset& dataset, int runs);

// Per-position channel L2 norm of a feature map, min-max scaled to [0,1].
// A constant map comes back all zero.
std::vector<std::vector<double>> hyper_heatmap(const TensorF& features);

// hyper_heatmap rendered as an 8-bit P5 graymap.
void export_hyper_heatmap(const std::string& path, const TensorF& features);

}  // namespace hn
