#include <doctest.h>

#include <cmath>

#include "hypernet/training.hpp"
#include "testing.hpp"

using namespace hn;
namespace tt = hn::testing;

TEST_CASE("label assignment thresholds") {
    // candidate 0: IoU 0.5 with gt -> positive; candidate 1: 0.2 -> negative;
    // candidate 2: 0.35 -> ignored
    std::vector<Box> cands = {{0, 0, 10, 5}, {0, 0, 10, 2}, {0, 0, 10, 3.5}};
    std::vector<std::pair<Box, int>> gt = {{{0, 0, 10, 10}, 1}};

    auto a = assign_labels(cands, gt, {0.45, 0.3, false});
    CHECK(a.entries[0].label == RoiLabel::kPositive);
    CHECK(a.entries[0].gt_index == 0);
    CHECK(a.entries[0].max_iou == doctest::Approx(0.5));
    CHECK(a.entries[1].label == RoiLabel::kNegative);
    CHECK(a.entries[2].label == RoiLabel::kIgnored);
    CHECK(a.num_positive == 1);
    CHECK(a.num_negative == 1);

    // regression target matches the closed-form encoding
    auto d = encode_box(cands[0], gt[0].first);
    CHECK(a.entries[0].delta.tx == doctest::Approx(d.tx));
    CHECK(a.entries[0].delta.th == doctest::Approx(d.th));
}

TEST_CASE("force-match claims the best candidate for an otherwise unmatched gt") {
    std::vector<Box> cands = {{0, 0, 10, 4}, {0, 0, 10, 3}};  // IoUs 0.4 and 0.3
    std::vector<std::pair<Box, int>> gt = {{{0, 0, 10, 10}, 2}};

    auto off = assign_labels(cands, gt, {0.45, 0.3, false});
    CHECK(off.num_positive == 0);

    auto on = assign_labels(cands, gt, {0.45, 0.3, true});
    CHECK(on.num_positive == 1);
    CHECK(on.entries[0].label == RoiLabel::kPositive);
    CHECK(on.entries[0].gt_index == 0);
    CHECK(on.entries[1].label == RoiLabel::kIgnored);
}

TEST_CASE("minibatch sampling composition and determinism") {
    LabelAssignment a;
    a.entries.resize(100);
    for (int i = 0; i < 100; ++i) {
        a.entries[i].label = i < 30 ? RoiLabel::kPositive
                                    : (i < 90 ? RoiLabel::kNegative : RoiLabel::kIgnored);
    }
    a.num_positive = 30;
    a.num_negative = 60;

    auto picks = sample_minibatch(a, 64, 0.25, 9);
    REQUIRE(picks.size() == 64);
    int pos = 0;
    for (int p : picks) {
        CHECK(a.entries[p].label != RoiLabel::kIgnored);
        if (a.entries[p].label == RoiLabel::kPositive) ++pos;
    }
    CHECK(pos == 16);

    CHECK(sample_minibatch(a, 64, 0.25, 9) == picks);
    CHECK(sample_minibatch(a, 64, 0.25, 10) != picks);
}

TEST_CASE("minibatch backfills negatives when positives run short") {
    LabelAssignment a;
    a.entries.resize(50);
    for (int i = 0; i < 50; ++i)
        a.entries[i].label = i < 3 ? RoiLabel::kPositive : RoiLabel::kNegative;

    auto picks = sample_minibatch(a, 32, 0.25, 1);
    REQUIRE(picks.size() == 32);
    int pos = 0;
    for (int p : picks)
        if (a.entries[p].label == RoiLabel::kPositive) ++pos;
    CHECK(pos == 3);
}

TEST_CASE("smooth L1 values and continuity") {
    CHECK(smooth_l1(0.0) == 0.0);
    CHECK(smooth_l1(0.5) == doctest::Approx(0.125));
    CHECK(smooth_l1(2.0) == doctest::Approx(1.5));
    CHECK(smooth_l1(-2.0) == doctest::Approx(1.5));
    CHECK(smooth_l1_grad(0.5) == doctest::Approx(0.5));
    CHECK(smooth_l1_grad(3.0) == 1.0);
    CHECK(smooth_l1_grad(-3.0) == -1.0);

    // value and derivative are continuous at |x| = 1
    const double eps = 1e-7;
    CHECK(std::abs(smooth_l1(1 + eps) - smooth_l1(1 - eps)) < 1e-6);
    CHECK(std::abs(smooth_l1_grad(1 + eps) - smooth_l1_grad(1 - eps)) < 1e-6);
}

TEST_CASE("multitask loss hand value") {
    // one negative with equal logits: CE = ln 2, no regression term
    LossSample<double> s;
    s.logits = TensorD({2});
    s.label = 0;
    auto r = multitask_loss<double>({s}, 3.0);
    CHECK(r.l_cls == doctest::Approx(std::log(2.0)));
    CHECK(r.l_reg == 0.0);
    CHECK(r.total == doctest::Approx(std::log(2.0)));

    // add one positive with a known regression error of 0.5 on tx only
    LossSample<double> p;
    p.logits = TensorD({2});
    p.label = 1;
    p.has_reg = true;
    p.delta_pred = TensorD({4});
    p.delta_pred[0] = 0.5;
    auto r2 = multitask_loss<double>({s, p}, 3.0);
    CHECK(r2.l_cls == doctest::Approx(std::log(2.0)));
    CHECK(r2.l_reg == doctest::Approx(0.125));
    CHECK(r2.total == doctest::Approx(std::log(2.0) + 3.0 * 0.125));
}

TEST_CASE("lambda zero removes the regression gradient") {
    auto gen = tt::rng(11);
    std::vector<LossSample<double>> samples;
    for (int i = 0; i < 6; ++i) {
        LossSample<double> s;
        s.logits = tt::random_tensor<double>({3}, gen);
        s.label = i % 3;
        s.has_reg = i % 2 == 0;
        s.delta_pred = tt::random_tensor<double>({4}, gen);
        s.delta_target = {0.1, -0.2, 0.3, -0.4};
        samples.push_back(std::move(s));
    }
    auto r = multitask_loss(samples, 0.0);
    for (const auto& g : r.grad_delta)
        for (double v : g.data) CHECK(v == 0.0);
    CHECK(r.total == doctest::Approx(r.l_cls));
}

TEST_CASE("multitask loss gradients against finite differences") {
    for (double lambda : {1.0, 3.0}) {
        auto gen = tt::rng(13);
        std::vector<LossSample<double>> samples;
        for (int i = 0; i < 5; ++i) {
            LossSample<double> s;
            s.logits = tt::random_tensor<double>({4}, gen);
            s.label = i % 4;
            s.has_reg = i != 2;
            s.delta_pred = tt::random_tensor<double>({4}, gen);
            s.delta_target = {0.2, -0.1, 0.4, -0.3};
            samples.push_back(std::move(s));
        }
        auto loss = [&] { return multitask_loss(samples, lambda).total; };
        auto r = multitask_loss(samples, lambda);
        for (std::size_t i = 0; i < samples.size(); ++i) {
            auto rl = tt::check_gradient_tensor(samples[i].logits, r.grad_logits[i], loss, gen,
                                                1e-5, 4);
            CHECK(rl.ok(1e-5));
            if (samples[i].has_reg) {
                auto rd = tt::check_gradient_tensor(samples[i].delta_pred, r.grad_delta[i], loss,
                                                    gen, 1e-5, 4);
                CHECK(rd.ok(1e-5));
            }
        }
    }
}

TEST_CASE("sgd step hand cases") {
    TensorD w({1}), g({1}), v({1});
    w[0] = 1.0;
    g[0] = 0.5;

    // no momentum, no decay: plain descent
    sgd_step(w, g, v, 0.1, 0.0, 0.0);
    CHECK(w[0] == doctest::Approx(0.95));
    CHECK(v[0] == doctest::Approx(-0.05));

    // second identical step with momentum 0.9 applies 1.9x the base update
    w[0] = 1.0;
    v[0] = 0.0;
    sgd_step(w, g, v, 0.1, 0.9, 0.0);
    sgd_step(w, g, v, 0.1, 0.9, 0.0);
    CHECK(w[0] == doctest::Approx(1.0 - 0.05 - 0.095));

    // weight decay folds into the gradient
    w[0] = 2.0;
    g[0] = 0.0;
    v[0] = 0.0;
    sgd_step(w, g, v, 0.1, 0.0, 0.5);
    CHECK(w[0] == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0));

    TensorD bad({2});
    CHECK_THROWS_AS(sgd_step(w, bad, v, 0.1, 0.0, 0.0), std::invalid_argument);
}

TEST_CASE("xavier init bounds, spread and determinism") {
    auto t1 = xavier_init<double>({64, 36}, 5);
    const double bound = std::sqrt(6.0 / (64 + 36));
    double sumsq = 0;
    for (double v : t1.data) {
        CHECK(std::abs(v) <= bound);
        sumsq += v * v;
    }
    // uniform(-b, b) variance is b^2/3
    const double var = sumsq / t1.size();
    CHECK(var == doctest::Approx(bound * bound / 3.0).epsilon(0.05));

    auto t2 = xavier_init<double>({64, 36}, 5);
    CHECK(t1.data == t2.data);
    auto t3 = xavier_init<double>({64, 36}, 6);
    CHECK(t1.data != t3.data);

    // conv fan counts the kernel area
    auto c = xavier_init<double>({8, 4, 3, 3}, 7);
    const double cb = std::sqrt(6.0 / (4 * 9 + 8 * 9));
    for (double v : c.data) CHECK(std::abs(v) <= cb);

    CHECK_THROWS_AS(xavier_init<double>({5}, 1), std::invalid_argument);
}
