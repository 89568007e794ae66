#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hypernet/backbone.hpp"
#include "hypernet/data_io.hpp"
#include "hypernet/geometry.hpp"
#include "hypernet/heads.hpp"
#include "hypernet/training.hpp"

namespace hn {

struct ModelConfig {
    Variant variant = Variant::kBasic;
    int num_classes = 3;
    BackboneConfig backbone = BackboneConfig::desk_default();
    std::vector<int> fusion_taps = {0, 1, 2};  // indices into backbone.taps
    int channels_per_tap = 42;
    int reference_stride = 4;
    LrnConfig lrn;
    std::vector<double> anchor_scales = {16, 32, 64};
    std::vector<double> anchor_ratios = {0.5, 1.0, 2.0};
    ProposalHeadConfig proposal;
    DetectionHeadConfig detection;

    int hyper_channels() const {
        return channels_per_tap * static_cast<int>(fusion_taps.size());
    }

    std::string to_json() const;
    static ModelConfig from_json(const std::string& s);
};

// The full network: backbone, Hyper Feature fusion, proposal head, detection
// head, in either the basic or the sp (conv-before-pooling) arrangement.
class HyperNetModel {
public:
    ModelConfig cfg;
    Backbone<float> backbone;
    Fusion<float> fusion;
    ProposalHead<float> proposal_head;
    DetectionHead<float> detection_head;

    void configure(const ModelConfig& c);
    void init_params(std::uint64_t seed);

    struct ParamRef {
        std::string name;
        TensorF* value;
        TensorF* grad;
    };
    std::vector<ParamRef> params();
    std::vector<NamedTensor> named_tensors() const;

    struct HyperTrace {
        BackboneTrace<float> btrace;
        FusionTrace<float> ftrace;
        int image_h = 0, image_w = 0;
        const TensorF& hyper() const { return ftrace.hyper; }
    };
    HyperTrace forward_hyper(const TensorF& image) const;

    std::vector<Box> make_candidates(int image_h, int image_w) const;

    // Score + regress every candidate, NMS, top-k. top_k <= 0 uses the config
    // test-time value.
    std::vector<ScoredBox> propose(const HyperTrace& trace, int top_k = 0) const;

    std::vector<Detection> detect(const HyperTrace& trace,
                                  const std::vector<Box>& proposals) const;

    void save(const std::string& path, const std::string& stage_tag) const;
    static HyperNetModel load_from(const std::string& path);
};

struct TrainResult {
    HyperNetModel model;
    std::vector<MetricRecord> metrics;
};

// Algorithm-style six-step schedule: seeded init, proposal training, detection
// training on generated proposals, proposal fine-tune, detection fine-tune
// with hyper layers frozen, unified output.
TrainResult run_joint_training(const Dataset& dataset, const ModelConfig& config,
                               const TrainPlan& plan,
                               const std::function<void(const MetricRecord&)>& on_metric = {});

}  // namespace hn
