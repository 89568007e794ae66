// Command-line front end; everything goes through the C interface.

#include <cstdio>
#include <fstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "hypernet.h"

using nlohmann::json;

namespace {

int fail(int code) {
    std::fprintf(stderr, "error: %s\n", hn_last_error());
    return code;
}

// Every command leaves a record of its resolved options next to its output.
void write_run_config(const std::string& out_path, const std::string& command,
                      const json& options) {
    std::ofstream f(out_path + ".run.json", std::ios::binary);
    if (f) f << json{{"command", command}, {"options", options}}.dump(2) << "\n";
}

struct ModelGuard {
    hn_model* m = nullptr;
    ~ModelGuard() { hn_model_close(m); }
};

void print_metric(int stage, int iter, double l_cls, double l_reg, double total, void*) {
    std::printf("stage %d iter %d  cls %.4f  reg %.4f  total %.4f\n", stage, iter, l_cls, l_reg,
                total);
    std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-scale feature fusion object detector"};
    app.require_subcommand(1);

    // gen-data
    std::string gd_dir;
    int gd_count = 100, gd_size = 128, gd_classes = 3;
    unsigned long long gd_seed = 0;
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic shapes dataset");
    gen->add_option("--out", gd_dir, "Output directory")->required();
    gen->add_option("--count", gd_count, "Number of images");
    gen->add_option("--size", gd_size, "Image side length");
    gen->add_option("--classes", gd_classes, "Number of shape classes (1..3)");
    gen->add_option("--seed", gd_seed, "Random seed");

    // train
    std::string tr_data, tr_out, tr_metrics, tr_variant = "basic";
    unsigned long long tr_seed = 0;
    int tr_s2 = 2000, tr_s3 = 2000, tr_s4 = 1000, tr_s5 = 1000, tr_minibatch = 64,
        tr_log_every = 50;
    double tr_lr = 0.005, tr_lr_late = 0.0005;
    bool tr_no_flip = false, tr_quiet = false;
    auto* train = app.add_subcommand("train", "Run the multi-stage training schedule");
    train->add_option("--data", tr_data, "Dataset directory")->required();
    train->add_option("--out", tr_out, "Output checkpoint path")->required();
    train->add_option("--metrics", tr_metrics, "Loss-curve CSV path");
    train->add_option("--variant", tr_variant, "basic or sp");
    train->add_option("--seed", tr_seed, "Random seed");
    train->add_option("--stage2", tr_s2, "Proposal-training iterations");
    train->add_option("--stage3", tr_s3, "Detection-training iterations");
    train->add_option("--stage4", tr_s4, "Proposal fine-tune iterations");
    train->add_option("--stage5", tr_s5, "Detection fine-tune iterations");
    train->add_option("--minibatch", tr_minibatch, "Regions per iteration");
    train->add_option("--lr", tr_lr, "Initial learning rate");
    train->add_option("--lr-late", tr_lr_late, "Late-phase learning rate");
    train->add_option("--log-every", tr_log_every, "Metric logging interval");
    train->add_flag("--no-flip", tr_no_flip, "Disable horizontal-flip augmentation");
    train->add_flag("--quiet", tr_quiet, "Suppress progress lines");

    // propose / detect
    std::string pr_model, pr_data, pr_out;
    int pr_top_k = 0;
    auto* propose = app.add_subcommand("propose", "Write region proposals for a dataset");
    propose->add_option("--model", pr_model, "Checkpoint path")->required();
    propose->add_option("--data", pr_data, "Dataset directory")->required();
    propose->add_option("--out", pr_out, "Output JSON path")->required();
    propose->add_option("--top-k", pr_top_k, "Proposals per image (0 = model default)");

    std::string de_model, de_data, de_out;
    auto* detect = app.add_subcommand("detect", "Run full detection on a dataset");
    detect->add_option("--model", de_model, "Checkpoint path")->required();
    detect->add_option("--data", de_data, "Dataset directory")->required();
    detect->add_option("--out", de_out, "Output JSON path")->required();

    // eval-proposals / eval-detections
    std::string ep_model, ep_data, ep_out;
    int ep_top_k = 0;
    double ep_target = 0.75;
    auto* evalp = app.add_subcommand("eval-proposals", "Recall curves for the proposal stage");
    evalp->add_option("--model", ep_model, "Checkpoint path")->required();
    evalp->add_option("--data", ep_data, "Dataset directory")->required();
    evalp->add_option("--out", ep_out, "Output JSON path")->required();
    evalp->add_option("--top-k", ep_top_k, "Proposals per image (0 = model default)");
    evalp->add_option("--recall-target", ep_target, "Target recall for the count search");

    std::string ed_model, ed_data, ed_out;
    double ed_iou = 0.5;
    auto* evald = app.add_subcommand("eval-detections", "Average precision for detections");
    evald->add_option("--model", ed_model, "Checkpoint path")->required();
    evald->add_option("--data", ed_data, "Dataset directory")->required();
    evald->add_option("--out", ed_out, "Output JSON path")->required();
    evald->add_option("--iou", ed_iou, "Overlap threshold");

    // bench
    std::string be_model, be_data, be_out;
    int be_runs = 20;
    auto* bench = app.add_subcommand("bench", "Median per-stage forward timings");
    bench->add_option("--model", be_model, "Checkpoint path")->required();
    bench->add_option("--data", be_data, "Dataset directory")->required();
    bench->add_option("--out", be_out, "Output JSON path")->required();
    bench->add_option("--runs", be_runs, "Number of timed passes");

    // viz-hyper
    std::string vh_model, vh_data, vh_id, vh_out;
    auto* viz = app.add_subcommand("viz-hyper", "Fused-feature heatmap for one sample");
    viz->add_option("--model", vh_model, "Checkpoint path")->required();
    viz->add_option("--data", vh_data, "Dataset directory")->required();
    viz->add_option("--id", vh_id, "Sample id")->required();
    viz->add_option("--out", vh_out, "Output PGM path")->required();

    CLI11_PARSE(app, argc, argv);

    if (gen->parsed()) {
        const json opts = {{"out", gd_dir},   {"count", gd_count}, {"size", gd_size},
                           {"classes", gd_classes}, {"seed", gd_seed}};
        int rc = hn_generate_shapes(gd_dir.c_str(), gd_count, gd_size, gd_classes, gd_seed);
        if (rc != HN_OK) return fail(rc);
        write_run_config(gd_dir + "/gen-data", "gen-data", opts);
        std::printf("wrote %d images to %s\n", gd_count, gd_dir.c_str());
        return 0;
    }

    if (train->parsed()) {
        const json cfg = {{"variant", tr_variant}, {"seed", tr_seed},
                          {"stage2", tr_s2},       {"stage3", tr_s3},
                          {"stage4", tr_s4},       {"stage5", tr_s5},
                          {"minibatch", tr_minibatch}, {"lr", tr_lr},
                          {"lr_late", tr_lr_late}, {"flip", !tr_no_flip},
                          {"log_every", tr_log_every}};
        int rc = hn_train(tr_data.c_str(), cfg.dump().c_str(), tr_out.c_str(),
                          tr_metrics.empty() ? nullptr : tr_metrics.c_str(),
                          tr_quiet ? nullptr : &print_metric, nullptr);
        if (rc != HN_OK) return fail(rc);
        json opts = cfg;
        opts["data"] = tr_data;
        opts["metrics"] = tr_metrics;
        write_run_config(tr_out, "train", opts);
        std::printf("saved %s\n", tr_out.c_str());
        return 0;
    }

    ModelGuard guard;
    auto open_model = [&](const std::string& path) {
        int rc = hn_model_open(path.c_str(), &guard.m);
        if (rc != HN_OK) std::exit(fail(rc));
    };

    if (propose->parsed()) {
        open_model(pr_model);
        int rc = hn_propose(guard.m, pr_data.c_str(), pr_top_k, pr_out.c_str());
        if (rc != HN_OK) return fail(rc);
        write_run_config(pr_out, "propose",
                         {{"model", pr_model}, {"data", pr_data}, {"top_k", pr_top_k}});
        std::printf("wrote %s\n", pr_out.c_str());
        return 0;
    }
    if (detect->parsed()) {
        open_model(de_model);
        int rc = hn_detect(guard.m, de_data.c_str(), de_out.c_str());
        if (rc != HN_OK) return fail(rc);
        write_run_config(de_out, "detect", {{"model", de_model}, {"data", de_data}});
        std::printf("wrote %s\n", de_out.c_str());
        return 0;
    }
    if (evalp->parsed()) {
        open_model(ep_model);
        int rc = hn_eval_proposals(guard.m, ep_data.c_str(), ep_top_k, ep_target,
                                   ep_out.c_str());
        if (rc != HN_OK) return fail(rc);
        write_run_config(ep_out, "eval-proposals",
                         {{"model", ep_model},
                          {"data", ep_data},
                          {"top_k", ep_top_k},
                          {"recall_target", ep_target}});
        std::printf("wrote %s\n", ep_out.c_str());
        return 0;
    }
    if (evald->parsed()) {
        open_model(ed_model);
        int rc = hn_eval_detections(guard.m, ed_data.c_str(), ed_iou, ed_out.c_str());
        if (rc != HN_OK) return fail(rc);
        write_run_config(ed_out, "eval-detections",
                         {{"model", ed_model}, {"data", ed_data}, {"iou", ed_iou}});
        std::printf("wrote %s\n", ed_out.c_str());
        return 0;
    }
    if (bench->parsed()) {
        open_model(be_model);
        int rc = hn_benchmark(guard.m, be_data.c_str(), be_runs, be_out.c_str());
        if (rc != HN_OK) return fail(rc);
        write_run_config(be_out, "bench",
                         {{"model", be_model}, {"data", be_data}, {"runs", be_runs}});
        std::printf("wrote %s\n", be_out.c_str());
        return 0;
    }
    if (viz->parsed()) {
        open_model(vh_model);
        int rc = hn_viz_hyper(guard.m, vh_data.c_str(), vh_id.c_str(), vh_out.c_str());
        if (rc != HN_OK) return fail(rc);
        write_run_config(vh_out, "viz-hyper",
                         {{"model", vh_model}, {"data", vh_data}, {"id", vh_id}});
        std::printf("wrote %s\n", vh_out.c_str());
        return 0;
    }
    return 0;
}
