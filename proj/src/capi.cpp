#include "hypernet.h"

#include <exception>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hypernet/evaluation.hpp"
#include "hypernet/model.hpp"

using nlohmann::json;

struct hn_model {
    hn::HyperNetModel model;
    std::string config_json;
};

namespace {

thread_local std::string g_last_error;

template <typename Fn>
int guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return HN_OK;
    } catch (const hn::NumericError& e) {
        g_last_error = e.what();
        return HN_ERR_NUMERIC;
    } catch (const hn::DataError& e) {
        g_last_error = e.what();
        return HN_ERR_DATA;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return HN_ERR_USAGE;
    }
}

void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(what);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw hn::DataError("cannot open for writing: " + path);
    f << text;
    if (!f) throw hn::DataError("write failed: " + path);
}

json box_json(const hn::Box& b) {
    return {{"x_min", b.x_min}, {"y_min", b.y_min}, {"x_max", b.x_max}, {"y_max", b.y_max}};
}

// proposals per image, at the given top-k, in dataset order
std::vector<std::vector<hn::ScoredBox>> propose_all(const hn::HyperNetModel& m,
                                                    const hn::Dataset& ds, int top_k) {
    std::vector<std::vector<hn::ScoredBox>> out;
    for (const hn::Sample& s : ds) {
        const auto trace = m.forward_hyper(s.image);
        out.push_back(m.propose(trace, top_k));
    }
    return out;
}

}  // namespace

extern "C" {

const char* hn_last_error(void) { return g_last_error.c_str(); }

int hn_generate_shapes(const char* dir, int count, int image_size, int num_classes,
                       unsigned long long seed) {
    return guarded([&] {
        require(dir != nullptr, "dir is null");
        require(count > 0, "count must be positive");
        require(image_size >= 16, "image_size must be at least 16");
        require(num_classes >= 1 && num_classes <= 3, "num_classes must be 1..3");
        hn::ShapesDatasetConfig cfg;
        cfg.count = count;
        cfg.image_size = image_size;
        cfg.num_classes = num_classes;
        cfg.seed = seed;
        hn::write_dataset(dir, hn::generate_shapes_dataset(cfg), num_classes);
    });
}

int hn_model_open(const char* path, hn_model** out) {
    return guarded([&] {
        require(path != nullptr && out != nullptr, "path/out is null");
        auto* h = new hn_model{hn::HyperNetModel::load_from(path), {}};
        h->config_json = h->model.cfg.to_json();
        *out = h;
    });
}

void hn_model_close(hn_model* model) { delete model; }

const char* hn_model_config(hn_model* model) {
    return model ? model->config_json.c_str() : "";
}

int hn_train(const char* data_dir, const char* config_json, const char* model_out,
             const char* metrics_csv, hn_metric_cb on_metric, void* user) {
    return guarded([&] {
        require(data_dir != nullptr && model_out != nullptr, "data_dir/model_out is null");
        json j = json::object();
        if (config_json && *config_json) {
            try {
                j = json::parse(config_json);
            } catch (const json::exception& e) {
                throw std::invalid_argument(std::string("bad config json: ") + e.what());
            }
        }
        const hn::Dataset ds = hn::read_dataset(data_dir);

        hn::ModelConfig mc;
        const std::string variant = j.value("variant", "basic");
        if (variant == "basic") {
            mc.variant = hn::Variant::kBasic;
        } else if (variant == "sp") {
            mc.variant = hn::Variant::kSp;
        } else {
            throw std::invalid_argument("variant must be 'basic' or 'sp'");
        }
        mc.num_classes = hn::dataset_num_classes(data_dir);

        hn::TrainPlan plan;
        plan.seed = j.value("seed", 0ull);
        plan.stage2.iterations = j.value("stage2", plan.stage2.iterations);
        plan.stage3.iterations = j.value("stage3", plan.stage3.iterations);
        plan.stage4.iterations = j.value("stage4", plan.stage4.iterations);
        plan.stage5.iterations = j.value("stage5", plan.stage5.iterations);
        plan.minibatch = j.value("minibatch", plan.minibatch);
        plan.sgd.lr_initial = j.value("lr", plan.sgd.lr_initial);
        plan.sgd.lr_late = j.value("lr_late", plan.sgd.lr_late);
        plan.horizontal_flip = j.value("flip", plan.horizontal_flip);
        plan.log_every = j.value("log_every", plan.log_every);

        auto cb = [&](const hn::MetricRecord& r) {
            if (on_metric) on_metric(r.stage, r.iteration, r.l_cls, r.l_reg, r.total, user);
        };
        hn::TrainResult res = hn::run_joint_training(ds, mc, plan, cb);
        res.model.save(model_out, "unified");

        if (metrics_csv && *metrics_csv) {
            std::string csv = "stage,iteration,l_cls,l_reg,total\n";
            for (const hn::MetricRecord& r : res.metrics)
                csv += std::to_string(r.stage) + "," + std::to_string(r.iteration) + "," +
                       std::to_string(r.l_cls) + "," + std::to_string(r.l_reg) + "," +
                       std::to_string(r.total) + "\n";
            write_text(metrics_csv, csv);
        }
    });
}

int hn_propose(hn_model* model, const char* data_dir, int top_k, const char* out_json) {
    return guarded([&] {
        require(model != nullptr && data_dir != nullptr && out_json != nullptr,
                "model/data_dir/out_json is null");
        const hn::Dataset ds = hn::read_dataset(data_dir);
        json images = json::array();
        for (const hn::Sample& s : ds) {
            const auto trace = model->model.forward_hyper(s.image);
            json props = json::array();
            for (const hn::ScoredBox& b : model->model.propose(trace, top_k)) {
                json e = box_json(b.box);
                e["score"] = b.score;
                props.push_back(std::move(e));
            }
            images.push_back({{"id", s.id}, {"proposals", std::move(props)}});
        }
        write_text(out_json, json{{"images", std::move(images)}}.dump(2) + "\n");
    });
}

int hn_detect(hn_model* model, const char* data_dir, const char* out_json) {
    return guarded([&] {
        require(model != nullptr && data_dir != nullptr && out_json != nullptr,
                "model/data_dir/out_json is null");
        const hn::Dataset ds = hn::read_dataset(data_dir);
        json images = json::array();
        for (const hn::Sample& s : ds) {
            const auto trace = model->model.forward_hyper(s.image);
            std::vector<hn::Box> boxes;
            for (const hn::ScoredBox& b : model->model.propose(trace, 0)) boxes.push_back(b.box);
            json dets = json::array();
            for (const hn::Detection& d : model->model.detect(trace, boxes)) {
                json e = box_json(d.box);
                e["class"] = d.class_id;
                e["score"] = d.score;
                dets.push_back(std::move(e));
            }
            images.push_back({{"id", s.id}, {"detections", std::move(dets)}});
        }
        write_text(out_json, json{{"images", std::move(images)}}.dump(2) + "\n");
    });
}

int hn_eval_proposals(hn_model* model, const char* data_dir, int top_k, double recall_target,
                      const char* out_json) {
    return guarded([&] {
        require(model != nullptr && data_dir != nullptr && out_json != nullptr,
                "model/data_dir/out_json is null");
        require(recall_target > 0 && recall_target <= 1, "recall_target must be in (0,1]");
        const hn::Dataset ds = hn::read_dataset(data_dir);
        if (top_k <= 0) top_k = model->model.cfg.proposal.top_k_test;
        const auto proposals = propose_all(model->model, ds, top_k);
        std::vector<std::vector<hn::Box>> gt;
        for (const hn::Sample& s : ds) {
            gt.emplace_back();
            for (const hn::Annotation& a : s.annotations) gt.back().push_back(a.box);
        }

        const std::vector<double> thresholds = {0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9};
        std::vector<int> counts;
        for (int n : {1, 2, 5, 10, 20, 50, 100, 200})
            if (n <= top_k) counts.push_back(n);

        json by_iou = json::array();
        for (const auto& [t, r] : hn::recall_vs_iou(proposals, gt, top_k, thresholds))
            by_iou.push_back({{"iou", t}, {"recall", r}});
        json by_count = json::array();
        for (const auto& [n, r] : hn::recall_vs_count(proposals, gt, 0.5, counts))
            by_count.push_back({{"proposals", n}, {"recall", r}});
        const int needed = hn::proposals_needed(proposals, gt, recall_target, 0.5, counts);

        json out = {{"top_k", top_k},
                    {"recall_vs_iou", std::move(by_iou)},
                    {"recall_vs_count", std::move(by_count)},
                    {"recall_target", recall_target},
                    {"proposals_needed", needed >= 0 ? json(needed) : json("unreached")}};
        write_text(out_json, out.dump(2) + "\n");
    });
}

int hn_eval_detections(hn_model* model, const char* data_dir, double iou_threshold,
                       const char* out_json) {
    return guarded([&] {
        require(model != nullptr && data_dir != nullptr && out_json != nullptr,
                "model/data_dir/out_json is null");
        require(iou_threshold > 0 && iou_threshold <= 1, "iou_threshold must be in (0,1]");
        const hn::Dataset ds = hn::read_dataset(data_dir);
        std::vector<std::vector<hn::Detection>> detections;
        std::vector<std::vector<hn::Annotation>> gt;
        for (const hn::Sample& s : ds) {
            const auto trace = model->model.forward_hyper(s.image);
            std::vector<hn::Box> boxes;
            for (const hn::ScoredBox& b : model->model.propose(trace, 0)) boxes.push_back(b.box);
            detections.push_back(model->model.detect(trace, boxes));
            gt.push_back(s.annotations);
        }
        const auto res = hn::mean_average_precision(detections, gt, model->model.cfg.num_classes,
                                                    iou_threshold);
        json per_class = json::array();
        for (const auto& [c, ap] : res.per_class)
            per_class.push_back({{"class", c}, {"ap", ap}});
        json out = {{"iou_threshold", iou_threshold},
                    {"map", res.map},
                    {"per_class", std::move(per_class)},
                    {"skipped_classes", res.skipped_classes}};
        write_text(out_json, out.dump(2) + "\n");
    });
}

int hn_benchmark(hn_model* model, const char* data_dir, int runs, const char* out_json) {
    return guarded([&] {
        require(model != nullptr && data_dir != nullptr && out_json != nullptr,
                "model/data_dir/out_json is null");
        const hn::Dataset ds = hn::read_dataset(data_dir);
        const hn::StageTimings t = hn::benchmark_stages(model->model, ds, runs);
        json out = {{"runs", t.runs},
                    {"conv_ms", t.conv_ms},
                    {"proposal_ms", t.proposal_ms},
                    {"detection_ms", t.detection_ms},
                    {"total_ms", t.total_ms}};
        write_text(out_json, out.dump(2) + "\n");
    });
}

int hn_viz_hyper(hn_model* model, const char* data_dir, const char* sample_id,
                 const char* out_pgm) {
    return guarded([&] {
        require(model != nullptr && data_dir != nullptr && sample_id != nullptr &&
                    out_pgm != nullptr,
                "model/data_dir/sample_id/out_pgm is null");
        const hn::Sample s = hn::read_sample(data_dir, sample_id);
        const auto trace = model->model.forward_hyper(s.image);
        hn::export_hyper_heatmap(out_pgm, trace.hyper());
    });
}

}  // extern "C"
