#include <doctest.h>

#include "hypernet/heads.hpp"
#include "testing.hpp"

using namespace hn;
namespace tt = hn::testing;

namespace {

template <typename T>
ProposalHead<T> small_proposal_head(Variant v, int channels, std::mt19937_64& gen) {
    ProposalHeadConfig cfg;
    cfg.variant = v;
    cfg.roi_bins = 4;
    cfg.mid_channels = 3;
    cfg.fc_width = 8;
    ProposalHead<T> head;
    head.configure(cfg, channels);
    for (auto* p : {&head.conv, &head.fc, &head.fc_score, &head.fc_reg}) {
        p->weight = tt::random_tensor<T>(p->weight.shape, gen, -0.4, 0.4);
        p->bias = tt::random_tensor<T>(p->bias.shape, gen, -0.1, 0.1);
    }
    return head;
}

template <typename T>
DetectionHead<T> small_detection_head(Variant v, int channels, std::mt19937_64& gen) {
    DetectionHeadConfig cfg;
    cfg.variant = v;
    cfg.roi_bins = 4;
    cfg.conv_channels = 5;
    cfg.fc_width = 8;
    cfg.num_classes = 2;
    DetectionHead<T> head;
    head.configure(cfg, channels);
    for (auto* p : {&head.conv, &head.fc1, &head.fc2, &head.fc_score, &head.fc_reg}) {
        p->weight = tt::random_tensor<T>(p->weight.shape, gen, -0.4, 0.4);
        p->bias = tt::random_tensor<T>(p->bias.shape, gen, -0.1, 0.1);
    }
    return head;
}

}  // namespace

TEST_CASE("proposal head output shapes, both variants") {
    auto gen = tt::rng(1);
    TensorF hyper = tt::random_tensor<float>({6, 12, 12}, gen);
    Box roi{4, 4, 28, 36};

    for (Variant v : {Variant::kBasic, Variant::kSp}) {
        auto head = small_proposal_head<float>(v, 6, gen);
        auto m = head.forward_map(hyper);
        const TensorF& src = head.roi_source(hyper, m);
        auto t = head.forward_roi(src, roi, 4);
        CHECK(t.score_logits.shape == std::vector<int>{2});
        CHECK(t.reg_out.shape == std::vector<int>{4});
    }
}

TEST_CASE("sp variant pools a thin map, basic pools the full stack") {
    auto gen = tt::rng(2);
    TensorF hyper = tt::random_tensor<float>({6, 12, 12}, gen);
    Box roi{0, 0, 20, 20};

    auto basic = small_proposal_head<float>(Variant::kBasic, 6, gen);
    auto mb = basic.forward_map(hyper);
    auto tb = basic.forward_roi(basic.roi_source(hyper, mb), roi, 4);
    CHECK(tb.pool.output.dim(0) == 6);

    auto sp = small_proposal_head<float>(Variant::kSp, 6, gen);
    auto ms = sp.forward_map(hyper);
    CHECK(ms.relu_out.shape == std::vector<int>{3, 12, 12});
    auto ts = sp.forward_roi(sp.roi_source(hyper, ms), roi, 4);
    CHECK(ts.pool.output.dim(0) == 3);
}

TEST_CASE("proposal head gradients, both variants") {
    for (Variant v : {Variant::kBasic, Variant::kSp}) {
        auto gen = tt::rng(3 + static_cast<int>(v));
        auto head = small_proposal_head<double>(v, 4, gen);
        TensorD hyper = tt::random_tensor<double>({4, 10, 10}, gen);
        Box roi{2, 2, 30, 26};
        TensorD proj_s = tt::projection_like<double>({2}, 51);
        TensorD proj_r = tt::projection_like<double>({4}, 52);

        auto loss = [&] {
            auto m = head.forward_map(hyper);
            auto t = head.forward_roi(head.roi_source(hyper, m), roi, 4);
            return tt::dot(t.score_logits, proj_s) + tt::dot(t.reg_out, proj_r);
        };

        auto m = head.forward_map(hyper);
        const TensorD& src = head.roi_source(hyper, m);
        auto t = head.forward_roi(src, roi, 4);
        TensorD g_src(src.shape);
        head.backward_roi(t, proj_s, proj_r, g_src);
        TensorD g_hyper = head.backward_map(hyper, m, g_src);

        auto res = tt::check_gradient_tensor(hyper, g_hyper, loss, gen, 1e-4, 40);
        CHECK(res.ok(1e-5));
        for (auto* p : {&head.conv, &head.fc, &head.fc_score, &head.fc_reg}) {
            auto rw = tt::check_gradient_tensor(p->weight, p->grad_weight, loss, gen, 1e-4, 15);
            CHECK(rw.ok(1e-5));
            auto rb = tt::check_gradient_tensor(p->bias, p->grad_bias, loss, gen, 1e-4, 15);
            CHECK(rb.ok(1e-5));
        }
    }
}

TEST_CASE("detection head output shapes and dropout determinism") {
    auto gen = tt::rng(5);
    TensorF hyper = tt::random_tensor<float>({6, 12, 12}, gen);
    Box roi{4, 0, 36, 40};

    for (Variant v : {Variant::kBasic, Variant::kSp}) {
        auto head = small_detection_head<float>(v, 6, gen);
        auto m = head.forward_map(hyper);
        const TensorF& src = head.roi_source(hyper, m);
        auto t1 = head.forward_roi(src, roi, 4, true, 77);
        CHECK(t1.score_logits.shape == std::vector<int>{3});
        CHECK(t1.reg_out.shape == std::vector<int>{8});

        auto t2 = head.forward_roi(src, roi, 4, true, 77);
        CHECK(t1.score_logits.data == t2.score_logits.data);
        auto t3 = head.forward_roi(src, roi, 4, true, 78);
        CHECK(t1.drop1.mask != t3.drop1.mask);

        // eval mode is dropout-free and seed-independent
        auto e1 = head.forward_roi(src, roi, 4, false, 1);
        auto e2 = head.forward_roi(src, roi, 4, false, 2);
        CHECK(e1.score_logits.data == e2.score_logits.data);
    }
}

TEST_CASE("detection head gradients, both variants") {
    for (Variant v : {Variant::kBasic, Variant::kSp}) {
        auto gen = tt::rng(7 + static_cast<int>(v));
        auto head = small_detection_head<double>(v, 4, gen);
        TensorD hyper = tt::random_tensor<double>({4, 10, 10}, gen);
        Box roi{0, 4, 28, 32};
        TensorD proj_s = tt::projection_like<double>({3}, 61);
        TensorD proj_r = tt::projection_like<double>({8}, 62);
        const std::uint64_t seed = 123;  // fixed mask keeps the op differentiable

        auto loss = [&] {
            auto m = head.forward_map(hyper);
            auto t = head.forward_roi(head.roi_source(hyper, m), roi, 4, true, seed);
            return tt::dot(t.score_logits, proj_s) + tt::dot(t.reg_out, proj_r);
        };

        auto m = head.forward_map(hyper);
        const TensorD& src = head.roi_source(hyper, m);
        auto t = head.forward_roi(src, roi, 4, true, seed);
        TensorD g_src(src.shape);
        head.backward_roi(t, proj_s, proj_r, g_src);
        TensorD g_hyper = head.backward_map(hyper, m, g_src);

        auto res = tt::check_gradient_tensor(hyper, g_hyper, loss, gen, 1e-4, 40);
        CHECK(res.ok(1e-5));
        for (auto* p : {&head.conv, &head.fc1, &head.fc2, &head.fc_score, &head.fc_reg}) {
            auto rw = tt::check_gradient_tensor(p->weight, p->grad_weight, loss, gen, 1e-4, 15);
            CHECK(rw.ok(1e-5));
        }
    }
}

TEST_CASE("per-candidate cost model") {
    ProposalHeadConfig basic;  // reference-size configuration
    basic.variant = Variant::kBasic;
    ProposalHeadConfig sp = basic;
    sp.variant = Variant::kSp;

    const auto fb = flop_estimate(basic, 126, 1);
    const auto fs = flop_estimate(sp, 126, 1);
    // conv 4*126*9*13^2, fc 256*(4*13^2), outputs 256*6
    CHECK(fb.per_candidate == 4LL * 126 * 9 * 169 + 256LL * 676 + 256LL * 6);
    CHECK(fs.per_candidate == 256LL * 676 + 256LL * 6);
    CHECK(static_cast<double>(fb.per_candidate) / fs.per_candidate > 5.0);

    // totals scale linearly in the candidate count
    CHECK(flop_estimate(basic, 126, 1000).total == 1000 * fb.per_candidate);
    CHECK(flop_estimate(sp, 126, 9216).total == 9216 * fs.per_candidate);
}
