#include "hypernet/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace hn {

namespace {

std::vector<ScoredBox> top_by_score(std::vector<ScoredBox> boxes, int top_n) {
    std::stable_sort(boxes.begin(), boxes.end(),
                     [](const ScoredBox& a, const ScoredBox& b) { return a.score > b.score; });
    if (top_n > 0 && static_cast<int>(boxes.size()) > top_n) boxes.resize(top_n);
    return boxes;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

double recall_at(const std::vector<std::vector<ScoredBox>>& proposals,
                 const std::vector<std::vector<Box>>& ground_truth, double iou_threshold,
                 int top_n) {
    if (proposals.size() != ground_truth.size())
        throw std::invalid_argument("recall_at: image count mismatch");
    long long total = 0, hit = 0;
    for (std::size_t i = 0; i < ground_truth.size(); ++i) {
        const auto kept = top_by_score(proposals[i], top_n);
        for (const Box& gt : ground_truth[i]) {
            ++total;
            for (const ScoredBox& p : kept) {
                if (iou(p.box, gt) >= iou_threshold) {
                    ++hit;
                    break;
                }
            }
        }
    }
    if (total == 0) throw std::invalid_argument("recall_at: no ground truth boxes");
    return static_cast<double>(hit) / static_cast<double>(total);
}

std::vector<std::pair<double, double>> recall_vs_iou(
    const std::vector<std::vector<ScoredBox>>& proposals,
    const std::vector<std::vector<Box>>& ground_truth, int top_n,
    const std::vector<double>& iou_thresholds) {
    std::vector<std::pair<double, double>> out;
    for (double t : iou_thresholds)
        out.emplace_back(t, recall_at(proposals, ground_truth, t, top_n));
    return out;
}

std::vector<std::pair<int, double>> recall_vs_count(
    const std::vector<std::vector<ScoredBox>>& proposals,
    const std::vector<std::vector<Box>>& ground_truth, double iou_threshold,
    const std::vector<int>& counts) {
    std::vector<std::pair<int, double>> out;
    for (int n : counts)
        out.emplace_back(n, recall_at(proposals, ground_truth, iou_threshold, n));
    return out;
}

int proposals_needed(const std::vector<std::vector<ScoredBox>>& proposals,
                     const std::vector<std::vector<Box>>& ground_truth, double recall_target,
                     double iou_threshold, const std::vector<int>& counts) {
    std::vector<int> sorted = counts;
    std::sort(sorted.begin(), sorted.end());
    for (int n : sorted)
        if (recall_at(proposals, ground_truth, iou_threshold, n) >= recall_target) return n;
    return -1;
}

double average_precision(const std::vector<std::vector<ScoredBox>>& detections,
                         const std::vector<std::vector<Box>>& ground_truth,
                         double iou_threshold, bool eleven_point) {
    if (detections.size() != ground_truth.size())
        throw std::invalid_argument("average_precision: image count mismatch");
    long long total_gt = 0;
    for (const auto& g : ground_truth) total_gt += static_cast<long long>(g.size());
    if (total_gt == 0) throw std::invalid_argument("average_precision: no ground truth boxes");

    struct Det {
        int image;
        int index;  // original order, for stable ties
        double score;
    };
    std::vector<Det> all;
    for (std::size_t i = 0; i < detections.size(); ++i)
        for (std::size_t j = 0; j < detections[i].size(); ++j)
            all.push_back({static_cast<int>(i), static_cast<int>(j), detections[i][j].score});
    std::stable_sort(all.begin(), all.end(),
                     [](const Det& a, const Det& b) { return a.score > b.score; });

    std::vector<std::vector<char>> taken(ground_truth.size());
    for (std::size_t i = 0; i < ground_truth.size(); ++i)
        taken[i].assign(ground_truth[i].size(), 0);

    std::vector<double> precisions, recalls;
    long long tp = 0, fp = 0;
    for (const Det& d : all) {
        const Box& box = detections[d.image][d.index].box;
        int best = -1;
        double best_iou = 0;
        for (std::size_t g = 0; g < ground_truth[d.image].size(); ++g) {
            if (taken[d.image][g]) continue;
            const double v = iou(box, ground_truth[d.image][g]);
            if (v >= iou_threshold && v > best_iou) {
                best_iou = v;
                best = static_cast<int>(g);
            }
        }
        if (best >= 0) {
            taken[d.image][best] = 1;
            ++tp;
        } else {
            ++fp;
        }
        precisions.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
        recalls.push_back(static_cast<double>(tp) / static_cast<double>(total_gt));
    }
    if (all.empty()) return 0.0;

    // Monotone envelope from the right.
    std::vector<double> env = precisions;
    for (int i = static_cast<int>(env.size()) - 2; i >= 0; --i)
        env[i] = std::max(env[i], env[i + 1]);

    if (eleven_point) {
        double sum = 0;
        for (int k = 0; k <= 10; ++k) {
            const double r = k / 10.0;
            double p = 0;
            for (std::size_t i = 0; i < recalls.size(); ++i) {
                if (recalls[i] >= r) {
                    p = env[i];
                    break;
                }
            }
            sum += p;
        }
        return sum / 11.0;
    }

    double ap = 0;
    double prev_r = 0;
    for (std::size_t i = 0; i < recalls.size(); ++i) {
        if (recalls[i] > prev_r) {
            ap += (recalls[i] - prev_r) * env[i];
            prev_r = recalls[i];
        }
    }
    return ap;
}

MeanApResult mean_average_precision(const std::vector<std::vector<Detection>>& detections,
                                    const std::vector<std::vector<Annotation>>& ground_truth,
                                    int num_classes, double iou_threshold, bool eleven_point) {
    if (detections.size() != ground_truth.size())
        throw std::invalid_argument("mean_average_precision: image count mismatch");
    MeanApResult res;
    double sum = 0;
    int counted = 0;
    for (int c = 1; c <= num_classes; ++c) {
        std::vector<std::vector<ScoredBox>> det_c(detections.size());
        std::vector<std::vector<Box>> gt_c(ground_truth.size());
        long long n_gt = 0;
        for (std::size_t i = 0; i < detections.size(); ++i) {
            for (const Detection& d : detections[i])
                if (d.class_id == c) det_c[i].push_back({d.box, d.score, c});
            for (const Annotation& a : ground_truth[i])
                if (a.class_id == c) {
                    gt_c[i].push_back(a.box);
                    ++n_gt;
                }
        }
        if (n_gt == 0) {
            res.skipped_classes.push_back(c);
            continue;
        }
        const double ap = average_precision(det_c, gt_c, iou_threshold, eleven_point);
        res.per_class.emplace_back(c, ap);
        sum += ap;
        ++counted;
    }
    res.map = counted > 0 ? sum / counted : 0.0;
    return res;
}

StageTimings benchmark_stages(const HyperNetModel& model, const Dataset& dataset, int runs) {
    if (runs < 1) throw std::invalid_argument("benchmark_stages: runs must be >= 1");
    if (dataset.empty()) throw std::invalid_argument("benchmark_stages: empty dataset");
    using clock = std::chrono::steady_clock;
    auto ms_since = [](clock::time_point t0) {
        return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    };

    std::vector<double> conv, prop, det, total;
    for (int r = 0; r < runs; ++r) {
        const Sample& s = dataset[r % dataset.size()];
        const auto t0 = clock::now();
        const auto trace = model.forward_hyper(s.image);
        const double t_conv = ms_since(t0);

        const auto t1 = clock::now();
        const auto proposals = model.propose(trace);
        const double t_prop = ms_since(t1);

        std::vector<Box> boxes;
        for (const ScoredBox& b : proposals) boxes.push_back(b.box);
        const auto t2 = clock::now();
        model.detect(trace, boxes);
        const double t_det = ms_since(t2);

        conv.push_back(t_conv);
        prop.push_back(t_prop);
        det.push_back(t_det);
        total.push_back(t_conv + t_prop + t_det);
    }
    return {median(conv), median(prop), median(det), median(total), runs};
}

std::vector<std::vector<double>> hyper_heatmap(const TensorF& features) {
    const int c = features.dim(0), h = features.dim(1), w = features.dim(2);
    std::vector<std::vector<double>> rows(h, std::vector<double>(w, 0.0));
    double lo = 0, hi = 0;
    bool first = true;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double sq = 0;
            for (int ch = 0; ch < c; ++ch) {
                const double v = features.at(ch, y, x);
                sq += v * v;
            }
            const double norm = std::sqrt(sq);
            rows[y][x] = norm;
            if (first || norm < lo) lo = norm;
            if (first || norm > hi) hi = norm;
            first = false;
        }
    const double span = hi - lo;
    for (auto& row : rows)
        for (double& v : row) v = span > 0 ? (v - lo) / span : 0.0;
    return rows;
}

void export_hyper_heatmap(const std::string& path, const TensorF& features) {
    write_pgm(path, hyper_heatmap(features));
}

}  // namespace hn
