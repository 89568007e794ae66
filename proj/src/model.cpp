#include "hypernet/model.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

using nlohmann::json;

namespace hn {

namespace {

json variant_to_json(Variant v) { return variant_name(v); }

Variant variant_from_json(const json& j) {
    const std::string s = j.get<std::string>();
    if (s == "basic") return Variant::kBasic;
    if (s == "sp") return Variant::kSp;
    throw DataError("unknown variant '" + s + "'");
}

}  // namespace

std::string ModelConfig::to_json() const {
    json stages = json::array();
    for (const StageSpec& s : backbone.stages)
        stages.push_back({{"channels", s.out_channels}, {"stride", s.stride}});
    json j = {
        {"variant", variant_to_json(variant)},
        {"num_classes", num_classes},
        {"backbone", {{"stages", stages}, {"taps", backbone.taps}}},
        {"fusion",
         {{"taps", fusion_taps},
          {"channels_per_tap", channels_per_tap},
          {"reference_stride", reference_stride},
          {"lrn",
           {{"depth", lrn.depth}, {"alpha", lrn.alpha}, {"beta", lrn.beta}, {"k", lrn.k}}}}},
        {"anchors", {{"scales", anchor_scales}, {"ratios", anchor_ratios}}},
        {"proposal",
         {{"roi_bins", proposal.roi_bins},
          {"mid_channels", proposal.mid_channels},
          {"fc_width", proposal.fc_width},
          {"nms_threshold", proposal.nms_threshold},
          {"top_k_train", proposal.top_k_train},
          {"top_k_test", proposal.top_k_test}}},
        {"detection",
         {{"roi_bins", detection.roi_bins},
          {"conv_channels", detection.conv_channels},
          {"fc_width", detection.fc_width},
          {"dropout", detection.dropout},
          {"score_floor", detection.score_floor},
          {"class_nms_threshold", detection.class_nms_threshold}}},
    };
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& s) {
    ModelConfig c;
    try {
        json j = json::parse(s);
        c.variant = variant_from_json(j.at("variant"));
        c.num_classes = j.at("num_classes").get<int>();
        c.backbone.stages.clear();
        for (const json& st : j.at("backbone").at("stages"))
            c.backbone.stages.push_back(
                {st.at("channels").get<int>(), st.at("stride").get<int>()});
        c.backbone.taps = j.at("backbone").at("taps").get<std::vector<int>>();
        const json& f = j.at("fusion");
        c.fusion_taps = f.at("taps").get<std::vector<int>>();
        c.channels_per_tap = f.at("channels_per_tap").get<int>();
        c.reference_stride = f.at("reference_stride").get<int>();
        c.lrn.depth = f.at("lrn").at("depth").get<int>();
        c.lrn.alpha = f.at("lrn").at("alpha").get<double>();
        c.lrn.beta = f.at("lrn").at("beta").get<double>();
        c.lrn.k = f.at("lrn").at("k").get<double>();
        c.anchor_scales = j.at("anchors").at("scales").get<std::vector<double>>();
        c.anchor_ratios = j.at("anchors").at("ratios").get<std::vector<double>>();
        const json& p = j.at("proposal");
        c.proposal.roi_bins = p.at("roi_bins").get<int>();
        c.proposal.mid_channels = p.at("mid_channels").get<int>();
        c.proposal.fc_width = p.at("fc_width").get<int>();
        c.proposal.nms_threshold = p.at("nms_threshold").get<double>();
        c.proposal.top_k_train = p.at("top_k_train").get<int>();
        c.proposal.top_k_test = p.at("top_k_test").get<int>();
        const json& d = j.at("detection");
        c.detection.roi_bins = d.at("roi_bins").get<int>();
        c.detection.conv_channels = d.at("conv_channels").get<int>();
        c.detection.fc_width = d.at("fc_width").get<int>();
        c.detection.dropout = d.at("dropout").get<double>();
        c.detection.score_floor = d.at("score_floor").get<double>();
        c.detection.class_nms_threshold = d.at("class_nms_threshold").get<double>();
    } catch (const json::exception& e) {
        throw DataError(std::string("bad model config: ") + e.what());
    }
    c.proposal.variant = c.variant;
    c.detection.variant = c.variant;
    c.detection.num_classes = c.num_classes;
    return c;
}

void HyperNetModel::configure(const ModelConfig& c) {
    cfg = c;
    cfg.proposal.variant = cfg.variant;
    cfg.detection.variant = cfg.variant;
    cfg.detection.num_classes = cfg.num_classes;
    backbone.configure(cfg.backbone);
    FusionConfig f = ablation_select(cfg.backbone, cfg.fusion_taps, cfg.channels_per_tap, cfg.lrn);
    f.reference_stride = cfg.reference_stride;
    fusion.configure(f);
    proposal_head.configure(cfg.proposal, cfg.hyper_channels());
    detection_head.configure(cfg.detection, cfg.hyper_channels());
}

void HyperNetModel::init_params(std::uint64_t seed) {
    int k = 0;
    for (auto& conv : backbone.convs) {
        xavier_fill(conv.weight, conv.weight.dim(1) * 9, conv.weight.dim(0) * 9,
                    mix_seed(seed, 10, k++));
        conv.bias.fill(0.0f);
    }
    for (std::size_t i = 0; i < fusion.compress.size(); ++i) {
        auto& comp = fusion.compress[i];
        xavier_fill(comp.weight, comp.weight.dim(1) * 9, comp.weight.dim(0) * 9,
                    mix_seed(seed, 20, i));
        comp.bias.fill(0.0f);
        auto& dc = fusion.deconvs[i];
        if (dc.weight.size() > 0) {
            fill_bilinear_kernel(dc.weight);
            dc.bias.fill(0.0f);
        }
    }
    auto init_fc = [&](LayerParams<float>& p, std::uint64_t a, std::uint64_t b) {
        xavier_fill(p.weight, p.weight.dim(1), p.weight.dim(0), mix_seed(seed, a, b));
        p.bias.fill(0.0f);
    };
    xavier_fill(proposal_head.conv.weight, proposal_head.conv.weight.dim(1) * 9,
                proposal_head.conv.weight.dim(0) * 9, mix_seed(seed, 30, 0));
    proposal_head.conv.bias.fill(0.0f);
    init_fc(proposal_head.fc, 30, 1);
    init_fc(proposal_head.fc_score, 30, 2);
    init_fc(proposal_head.fc_reg, 30, 3);
    xavier_fill(detection_head.conv.weight, detection_head.conv.weight.dim(1) * 9,
                detection_head.conv.weight.dim(0) * 9, mix_seed(seed, 40, 0));
    detection_head.conv.bias.fill(0.0f);
    init_fc(detection_head.fc1, 40, 1);
    init_fc(detection_head.fc2, 40, 2);
    init_fc(detection_head.fc_score, 40, 3);
    init_fc(detection_head.fc_reg, 40, 4);
}

std::vector<HyperNetModel::ParamRef> HyperNetModel::params() {
    std::vector<ParamRef> out;
    auto add = [&](const std::string& name, LayerParams<float>& p) {
        if (p.weight.size() == 0) return;
        out.push_back({name + ".weight", &p.weight, &p.grad_weight});
        out.push_back({name + ".bias", &p.bias, &p.grad_bias});
    };
    for (std::size_t i = 0; i < backbone.convs.size(); ++i)
        add("backbone.conv" + std::to_string(i + 1), backbone.convs[i]);
    for (std::size_t i = 0; i < fusion.compress.size(); ++i) {
        add("fusion.tap" + std::to_string(i) + ".deconv", fusion.deconvs[i]);
        add("fusion.tap" + std::to_string(i) + ".compress", fusion.compress[i]);
    }
    add("proposal.conv", proposal_head.conv);
    add("proposal.fc", proposal_head.fc);
    add("proposal.score", proposal_head.fc_score);
    add("proposal.reg", proposal_head.fc_reg);
    add("detection.conv", detection_head.conv);
    add("detection.fc1", detection_head.fc1);
    add("detection.fc2", detection_head.fc2);
    add("detection.score", detection_head.fc_score);
    add("detection.reg", detection_head.fc_reg);
    return out;
}

std::vector<NamedTensor> HyperNetModel::named_tensors() const {
    std::vector<NamedTensor> out;
    auto& self = const_cast<HyperNetModel&>(*this);
    for (const ParamRef& p : self.params()) out.push_back({p.name, p.value});
    return out;
}

HyperNetModel::HyperTrace HyperNetModel::forward_hyper(const TensorF& image) const {
    HyperTrace t;
    t.image_h = image.dim(1);
    t.image_w = image.dim(2);
    t.btrace = backbone.forward(image);
    std::vector<const TensorF*> all_taps = backbone.taps(t.btrace);
    std::vector<const TensorF*> used;
    for (int i : cfg.fusion_taps) used.push_back(all_taps[i]);
    t.ftrace = fusion.forward(used);
    return t;
}

std::vector<Box> HyperNetModel::make_candidates(int image_h, int image_w) const {
    return generate_candidates(image_h / cfg.reference_stride, image_w / cfg.reference_stride,
                               cfg.reference_stride, cfg.anchor_scales, cfg.anchor_ratios,
                               Box{0, 0, static_cast<double>(image_w),
                                   static_cast<double>(image_h)});
}

std::vector<ScoredBox> HyperNetModel::propose(const HyperTrace& trace, int top_k) const {
    if (top_k <= 0) top_k = cfg.proposal.top_k_test;
    const Box bounds{0, 0, static_cast<double>(trace.image_w),
                     static_cast<double>(trace.image_h)};
    const std::vector<Box> candidates = make_candidates(trace.image_h, trace.image_w);
    auto map_trace = proposal_head.forward_map(trace.hyper());
    const TensorF& src = proposal_head.roi_source(trace.hyper(), map_trace);

    std::vector<ScoredBox> scored;
    scored.reserve(candidates.size());
    for (const Box& c : candidates) {
        auto roi = proposal_head.forward_roi(src, c, cfg.reference_stride);
        auto probs = softmax(roi.score_logits);
        const BoxDelta d{roi.reg_out[0], roi.reg_out[1], roi.reg_out[2], roi.reg_out[3]};
        Box decoded = decode_box(c, d, bounds);
        if (!decoded.valid()) continue;
        scored.push_back({decoded, probs[1], -1});
    }
    return nms(scored, cfg.proposal.nms_threshold, top_k);
}

std::vector<Detection> HyperNetModel::detect(const HyperTrace& trace,
                                             const std::vector<Box>& proposals) const {
    std::vector<Detection> out;
    if (proposals.empty()) return out;
    const Box bounds{0, 0, static_cast<double>(trace.image_w),
                     static_cast<double>(trace.image_h)};
    auto map_trace = detection_head.forward_map(trace.hyper());
    const TensorF& src = detection_head.roi_source(trace.hyper(), map_trace);

    std::vector<std::vector<ScoredBox>> per_class(cfg.num_classes + 1);
    for (const Box& p : proposals) {
        auto roi = detection_head.forward_roi(src, p, cfg.reference_stride, false, 0);
        auto probs = softmax(roi.score_logits);
        for (int c = 1; c <= cfg.num_classes; ++c) {
            if (probs[c] <= cfg.detection.score_floor) continue;
            const int off = 4 * (c - 1);
            const BoxDelta d{roi.reg_out[off], roi.reg_out[off + 1], roi.reg_out[off + 2],
                             roi.reg_out[off + 3]};
            Box decoded = decode_box(p, d, bounds);
            if (!decoded.valid()) continue;
            per_class[c].push_back({decoded, probs[c], c});
        }
    }
    for (int c = 1; c <= cfg.num_classes; ++c) {
        for (const ScoredBox& s : nms(per_class[c], cfg.detection.class_nms_threshold))
            out.push_back({s.box, c, s.score});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const Detection& a, const Detection& b) { return a.score > b.score; });
    return out;
}

void HyperNetModel::save(const std::string& path, const std::string& stage_tag) const {
    save_checkpoint(path, cfg.to_json(), stage_tag, named_tensors());
}

HyperNetModel HyperNetModel::load_from(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    HyperNetModel m;
    m.configure(ModelConfig::from_json(ck.config_json));
    auto refs = m.params();
    if (refs.size() != ck.tensors.size())
        throw DataError(path + ": checkpoint has " + std::to_string(ck.tensors.size()) +
                        " tensors, architecture expects " + std::to_string(refs.size()));
    for (std::size_t i = 0; i < refs.size(); ++i) {
        const auto& [name, tensor] = ck.tensors[i];
        if (name != refs[i].name || tensor.shape != refs[i].value->shape)
            throw DataError(path + ": tensor mismatch at '" + name + "' " +
                            shape_str(tensor.shape) + ", expected '" + refs[i].name + "' " +
                            shape_str(refs[i].value->shape));
        *refs[i].value = tensor;
    }
    return m;
}

}  // namespace hn
