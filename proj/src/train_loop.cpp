#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "hypernet/model.hpp"

namespace hn {

namespace {

TensorF flip_image(const TensorF& img) {
    TensorF out(img.shape);
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.at(ch, y, x) = img.at(ch, y, w - 1 - x);
    return out;
}

Box flip_box(const Box& b, double image_w) {
    return {image_w - b.x_max, b.y_min, image_w - b.x_min, b.y_max};
}

std::vector<std::pair<Box, int>> ground_truth_of(const Sample& s, bool flip) {
    std::vector<std::pair<Box, int>> gt;
    for (const Annotation& a : s.annotations)
        gt.emplace_back(flip ? flip_box(a.box, s.width()) : a.box, a.class_id);
    return gt;
}

struct Trainer {
    HyperNetModel& model;
    const Dataset& dataset;
    const TrainPlan& plan;
    const std::function<void(const MetricRecord&)>& on_metric;
    std::vector<MetricRecord>& metrics;
    std::vector<HyperNetModel::ParamRef> refs;
    std::vector<TensorF> velocity;

    Trainer(HyperNetModel& m, const Dataset& d, const TrainPlan& p,
            const std::function<void(const MetricRecord&)>& cb, std::vector<MetricRecord>& mr)
        : model(m), dataset(d), plan(p), on_metric(cb), metrics(mr) {
        refs = model.params();
        for (const auto& r : refs) velocity.emplace_back(r.value->shape);
    }

    static bool has_prefix(const std::string& name, const std::vector<std::string>& prefixes) {
        for (const std::string& p : prefixes)
            if (name.compare(0, p.size(), p) == 0) return true;
        return false;
    }

    double lr_at(int iter, int iterations) const {
        const double frac = iterations > 0 ? static_cast<double>(iter) / iterations : 0.0;
        return frac < plan.sgd.lr_switch_fraction ? plan.sgd.lr_initial : plan.sgd.lr_late;
    }

    void zero_grads() {
        for (auto& r : refs) r.grad->fill(0.0f);
    }

    void apply_sgd(const std::vector<std::string>& trainable, double lr) {
        for (std::size_t i = 0; i < refs.size(); ++i) {
            if (!has_prefix(refs[i].name, trainable)) continue;
            sgd_step(*refs[i].value, *refs[i].grad, velocity[i], lr, plan.sgd.momentum,
                     plan.sgd.weight_decay);
        }
    }

    void check_finite(double total, int stage, int iter) const {
        if (!std::isfinite(total))
            throw NumericError("training diverged at stage " + std::to_string(stage) +
                               " iteration " + std::to_string(iter) + " (loss " +
                               std::to_string(total) + ")");
    }

    void record(int stage, int iter, const MultitaskLossResult<float>& loss) {
        if (iter != 0 && (iter + 1) % plan.log_every != 0) return;
        MetricRecord r{stage, iter, loss.l_cls, loss.l_reg, loss.total};
        metrics.push_back(r);
        if (on_metric) on_metric(r);
    }

    // Shared image-to-hyper backward; tap gradients for taps outside the fused
    // subset stay zero.
    void backward_hyper(const TensorF& image, const HyperNetModel::HyperTrace& trace,
                        const TensorF& grad_hyper) {
        std::vector<const TensorF*> all_taps = model.backbone.taps(trace.btrace);
        std::vector<const TensorF*> used;
        for (int i : model.cfg.fusion_taps) used.push_back(all_taps[i]);
        std::vector<TensorF> used_grads = model.fusion.backward(used, trace.ftrace, grad_hyper);
        std::vector<TensorF> tap_grads;
        for (const TensorF* t : all_taps) tap_grads.emplace_back(t->shape);
        for (std::size_t i = 0; i < model.cfg.fusion_taps.size(); ++i)
            tap_grads[model.cfg.fusion_taps[i]] = std::move(used_grads[i]);
        model.backbone.backward(image, trace.btrace, tap_grads);
    }

    void proposal_stage(int stage, const StagePlan& sp) {
        const std::vector<std::string> trainable = {"backbone.", "fusion.", "proposal."};
        for (int iter = 0; iter < sp.iterations; ++iter) {
            std::mt19937_64 gen(mix_seed(plan.seed, stage, iter));
            const int idx = std::uniform_int_distribution<int>(
                0, static_cast<int>(dataset.size()) - 1)(gen);
            const bool flip = plan.horizontal_flip && (gen() & 1u);
            const Sample& s = dataset[idx];
            const TensorF image = flip ? flip_image(s.image) : s.image;
            const auto gt = ground_truth_of(s, flip);

            const std::vector<Box> candidates = model.make_candidates(s.height(), s.width());
            const LabelAssignment assign = assign_labels(candidates, gt);
            const std::vector<int> picks =
                sample_minibatch(assign, plan.minibatch, plan.positive_fraction, gen());
            if (picks.empty()) continue;

            const auto trace = model.forward_hyper(image);
            const auto mtrace = model.proposal_head.forward_map(trace.hyper());
            const TensorF& src = model.proposal_head.roi_source(trace.hyper(), mtrace);

            std::vector<ProposalHead<float>::RoiTrace> rois;
            std::vector<LossSample<float>> samples;
            for (int p : picks) {
                rois.push_back(model.proposal_head.forward_roi(src, candidates[p],
                                                               model.cfg.reference_stride));
                const LabelEntry& e = assign.entries[p];
                LossSample<float> ls;
                ls.logits = rois.back().score_logits;
                ls.label = e.label == RoiLabel::kPositive ? 1 : 0;
                ls.has_reg = e.label == RoiLabel::kPositive;
                ls.delta_pred = rois.back().reg_out;
                ls.delta_target = e.delta;
                samples.push_back(std::move(ls));
            }
            const auto loss = multitask_loss(samples, plan.lambda_proposal);
            check_finite(loss.total, stage, iter);

            zero_grads();
            TensorF grad_src(src.shape);
            for (std::size_t i = 0; i < rois.size(); ++i)
                model.proposal_head.backward_roi(rois[i], loss.grad_logits[i],
                                                 loss.grad_delta[i], grad_src);
            const TensorF grad_hyper =
                model.proposal_head.backward_map(trace.hyper(), mtrace, grad_src);
            backward_hyper(image, trace, grad_hyper);
            apply_sgd(trainable, lr_at(iter, sp.iterations));
            record(stage, iter, loss);
        }
    }

    void detection_stage(int stage, const StagePlan& sp, bool train_hyper) {
        std::vector<std::string> trainable = {"detection."};
        if (train_hyper) {
            trainable.push_back("backbone.");
            trainable.push_back("fusion.");
        }
        // Proposals come from the model as frozen at stage entry.
        const HyperNetModel frozen = model;
        std::unordered_map<int, std::vector<Box>> cache;
        auto proposals_for = [&](int idx) -> const std::vector<Box>& {
            auto it = cache.find(idx);
            if (it == cache.end()) {
                const auto tr = frozen.forward_hyper(dataset[idx].image);
                std::vector<Box> boxes;
                for (const ScoredBox& b :
                     frozen.propose(tr, frozen.cfg.proposal.top_k_train))
                    boxes.push_back(b.box);
                it = cache.emplace(idx, std::move(boxes)).first;
            }
            return it->second;
        };

        const int n_reg = 4 * model.cfg.num_classes;
        for (int iter = 0; iter < sp.iterations; ++iter) {
            std::mt19937_64 gen(mix_seed(plan.seed, stage, iter));
            const int idx = std::uniform_int_distribution<int>(
                0, static_cast<int>(dataset.size()) - 1)(gen);
            const bool flip = plan.horizontal_flip && (gen() & 1u);
            const Sample& s = dataset[idx];
            const TensorF image = flip ? flip_image(s.image) : s.image;
            const auto gt = ground_truth_of(s, flip);

            std::vector<Box> proposals = proposals_for(idx);
            if (flip)
                for (Box& b : proposals) b = flip_box(b, s.width());
            if (proposals.empty()) continue;

            const LabelAssignment assign = assign_labels(proposals, gt);
            const std::vector<int> picks =
                sample_minibatch(assign, plan.minibatch, plan.positive_fraction, gen());
            if (picks.empty()) continue;

            const auto trace = model.forward_hyper(image);
            const auto mtrace = model.detection_head.forward_map(trace.hyper());
            const TensorF& src = model.detection_head.roi_source(trace.hyper(), mtrace);

            std::vector<DetectionHead<float>::RoiTrace> rois;
            std::vector<LossSample<float>> samples;
            std::vector<int> sample_class;
            for (std::size_t i = 0; i < picks.size(); ++i) {
                const int p = picks[i];
                rois.push_back(model.detection_head.forward_roi(
                    src, proposals[p], model.cfg.reference_stride, true,
                    mix_seed(plan.seed, stage * 1000 + iter, i)));
                const LabelEntry& e = assign.entries[p];
                const bool pos = e.label == RoiLabel::kPositive;
                const int cls = pos ? gt[e.gt_index].second : 0;
                LossSample<float> ls;
                ls.logits = rois.back().score_logits;
                ls.label = cls;
                ls.has_reg = pos;
                ls.delta_pred = TensorF({4});
                if (pos)
                    for (int k = 0; k < 4; ++k)
                        ls.delta_pred[k] = rois.back().reg_out[4 * (cls - 1) + k];
                ls.delta_target = e.delta;
                samples.push_back(std::move(ls));
                sample_class.push_back(cls);
            }
            const auto loss = multitask_loss(samples, plan.lambda_detection);
            check_finite(loss.total, stage, iter);

            zero_grads();
            TensorF grad_src(src.shape);
            for (std::size_t i = 0; i < rois.size(); ++i) {
                TensorF g_reg({n_reg});
                if (sample_class[i] > 0)
                    for (int k = 0; k < 4; ++k)
                        g_reg[4 * (sample_class[i] - 1) + k] = loss.grad_delta[i][k];
                model.detection_head.backward_roi(rois[i], loss.grad_logits[i], g_reg, grad_src);
            }
            const TensorF grad_hyper =
                model.detection_head.backward_map(trace.hyper(), mtrace, grad_src);
            if (train_hyper) backward_hyper(image, trace, grad_hyper);
            apply_sgd(trainable, lr_at(iter, sp.iterations));
            record(stage, iter, loss);
        }
    }
};

}  // namespace

TrainResult run_joint_training(const Dataset& dataset, const ModelConfig& config,
                               const TrainPlan& plan,
                               const std::function<void(const MetricRecord&)>& on_metric) {
    if (dataset.empty()) throw std::invalid_argument("run_joint_training: empty dataset");
    TrainResult res;
    res.model.configure(config);
    res.model.init_params(plan.seed);

    Trainer t(res.model, dataset, plan, on_metric, res.metrics);
    t.proposal_stage(2, plan.stage2);
    t.detection_stage(3, plan.stage3, true);
    t.proposal_stage(4, plan.stage4);
    t.detection_stage(5, plan.stage5, false);
    return res;
}

}  // namespace hn
