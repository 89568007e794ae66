#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "hypernet/evaluation.hpp"
#include "testing.hpp"

using namespace hn;
namespace tt = hn::testing;

namespace {

// Independent AP reference: for every prefix of the score-sorted detections,
// re-run the greedy matching from scratch, then integrate the precision
// envelope with a naive max scan.
double ap_oracle(const std::vector<std::vector<ScoredBox>>& detections,
                 const std::vector<std::vector<Box>>& ground_truth, double thr) {
    struct D {
        int image, index;
        double score;
    };
    std::vector<D> all;
    for (std::size_t i = 0; i < detections.size(); ++i)
        for (std::size_t j = 0; j < detections[i].size(); ++j)
            all.push_back({static_cast<int>(i), static_cast<int>(j), detections[i][j].score});
    std::stable_sort(all.begin(), all.end(), [](const D& a, const D& b) {
        return a.score > b.score;
    });
    std::size_t n_gt = 0;
    for (const auto& g : ground_truth) n_gt += g.size();

    auto tp_of_prefix = [&](std::size_t k) {
        std::vector<std::vector<char>> used(ground_truth.size());
        for (std::size_t i = 0; i < ground_truth.size(); ++i)
            used[i].assign(ground_truth[i].size(), 0);
        int tp = 0;
        for (std::size_t i = 0; i < k; ++i) {
            const Box& b = detections[all[i].image][all[i].index].box;
            int best = -1;
            double best_v = 0;
            for (std::size_t g = 0; g < ground_truth[all[i].image].size(); ++g) {
                if (used[all[i].image][g]) continue;
                double v = iou(b, ground_truth[all[i].image][g]);
                if (v >= thr && v > best_v) {
                    best_v = v;
                    best = static_cast<int>(g);
                }
            }
            if (best >= 0) {
                used[all[i].image][best] = 1;
                ++tp;
            }
        }
        return tp;
    };

    std::vector<double> prec, rec;
    for (std::size_t k = 1; k <= all.size(); ++k) {
        const int tp = tp_of_prefix(k);
        prec.push_back(static_cast<double>(tp) / k);
        rec.push_back(static_cast<double>(tp) / n_gt);
    }
    double ap = 0, prev = 0;
    for (std::size_t i = 0; i < rec.size(); ++i) {
        if (rec[i] <= prev) continue;
        double env = 0;
        for (std::size_t j = i; j < prec.size(); ++j) env = std::max(env, prec[j]);
        ap += (rec[i] - prev) * env;
        prev = rec[i];
    }
    return ap;
}

Box rand_box(std::mt19937_64& gen) {
    std::uniform_real_distribution<double> c(5, 45), s(4, 30);
    return Box::from_center(c(gen), c(gen), s(gen), s(gen));
}

}  // namespace

TEST_CASE("recall hand cases") {
    std::vector<std::vector<ScoredBox>> props = {
        {{{0, 0, 10, 10}, 0.9, -1}, {{40, 40, 50, 50}, 0.8, -1}},
        {{{0, 0, 4, 4}, 0.7, -1}},
    };
    std::vector<std::vector<Box>> gt = {
        {{0, 0, 10, 10}, {20, 20, 30, 30}},  // first matched, second missed
        {{0, 0, 4, 4}},
    };
    CHECK(recall_at(props, gt, 0.5, 0) == doctest::Approx(2.0 / 3.0));
    // top-1 drops the second proposal of image 0, recall unchanged here
    CHECK(recall_at(props, gt, 0.5, 1) == doctest::Approx(2.0 / 3.0));
    // perfect-overlap-only threshold
    CHECK(recall_at(props, gt, 1.0, 0) == doctest::Approx(2.0 / 3.0));

    CHECK_THROWS_AS(recall_at(props, {{}, {}}, 0.5, 0), std::invalid_argument);
    CHECK_THROWS_AS(recall_at(props, {gt[0]}, 0.5, 0), std::invalid_argument);
}

TEST_CASE("recall is monotone in the proposal budget and threshold") {
    auto gen = tt::rng(3);
    std::vector<std::vector<ScoredBox>> props(8);
    std::vector<std::vector<Box>> gt(8);
    std::uniform_real_distribution<double> score(0, 1);
    for (int i = 0; i < 8; ++i) {
        for (int g = 0; g < 3; ++g) gt[i].push_back(rand_box(gen));
        for (int p = 0; p < 30; ++p) props[i].push_back({rand_box(gen), score(gen), -1});
    }

    double prev = 0;
    for (int n : {1, 2, 5, 10, 20, 30}) {
        const double r = recall_at(props, gt, 0.5, n);
        CHECK(r >= prev);
        prev = r;
    }
    prev = 1.0;
    for (double t : {0.3, 0.5, 0.7, 0.9}) {
        const double r = recall_at(props, gt, t, 0);
        CHECK(r <= prev);
        prev = r;
    }
}

TEST_CASE("proposals_needed picks the smallest sufficient budget") {
    std::vector<std::vector<ScoredBox>> props = {{
        {{0, 0, 10, 10}, 0.9, -1},   // matches gt 0
        {{50, 50, 60, 60}, 0.8, -1}, // matches gt 1
    }};
    std::vector<std::vector<Box>> gt = {{{0, 0, 10, 10}, {50, 50, 60, 60}}};
    CHECK(proposals_needed(props, gt, 0.5, 0.5, {1, 2, 5}) == 1);
    CHECK(proposals_needed(props, gt, 1.0, 0.5, {1, 2, 5}) == 2);
    CHECK(proposals_needed(props, gt, 1.0, 0.5, {1}) == -1);
}

TEST_CASE("average precision hand cases") {
    std::vector<std::vector<Box>> gt = {{{0, 0, 10, 10}}};

    // single perfect detection
    CHECK(average_precision({{{{0, 0, 10, 10}, 0.9, -1}}}, gt, 0.5) == doctest::Approx(1.0));

    // higher-scored miss first: precision at full recall is 1/2
    std::vector<std::vector<ScoredBox>> det = {{
        {{30, 30, 40, 40}, 0.9, -1},
        {{0, 0, 10, 10}, 0.8, -1},
    }};
    CHECK(average_precision(det, gt, 0.5) == doctest::Approx(0.5));

    // duplicate on the same gt counts as a false positive but does not reduce AP
    std::vector<std::vector<ScoredBox>> dup = {{
        {{0, 0, 10, 10}, 0.9, -1},
        {{0, 0, 10, 10}, 0.8, -1},
    }};
    CHECK(average_precision(dup, gt, 0.5) == doctest::Approx(1.0));

    CHECK(average_precision({{}}, gt, 0.5) == 0.0);
    CHECK_THROWS_AS(average_precision(det, {{}}, 0.5), std::invalid_argument);
}

TEST_CASE("eleven point variant") {
    std::vector<std::vector<Box>> gt = {{{0, 0, 10, 10}}};
    // one perfect detection: precision 1 at every recall level
    CHECK(average_precision({{{{0, 0, 10, 10}, 0.9, -1}}}, gt, 0.5, true) ==
          doctest::Approx(1.0));
    // miss-then-hit: levels 0.1..1.0 see precision 1/2, level 0 sees 1/2 too
    std::vector<std::vector<ScoredBox>> det = {{
        {{30, 30, 40, 40}, 0.9, -1},
        {{0, 0, 10, 10}, 0.8, -1},
    }};
    CHECK(average_precision(det, gt, 0.5, true) == doctest::Approx(0.5));
}

TEST_CASE("average precision agrees with the prefix oracle") {
    auto gen = tt::rng(7);
    std::uniform_int_distribution<int> n_det(0, 10), n_gt(1, 5), n_img(1, 3);
    std::uniform_real_distribution<double> score(0, 1);
    for (int trial = 0; trial < 300; ++trial) {
        const int imgs = n_img(gen);
        std::vector<std::vector<ScoredBox>> det(imgs);
        std::vector<std::vector<Box>> gt(imgs);
        for (int i = 0; i < imgs; ++i) {
            for (int g = n_gt(gen); g > 0; --g) gt[i].push_back(rand_box(gen));
            for (int d = n_det(gen); d > 0; --d) det[i].push_back({rand_box(gen), score(gen), -1});
        }
        const double got = average_precision(det, gt, 0.5);
        const double want = ap_oracle(det, gt, 0.5);
        CHECK(got == doctest::Approx(want).epsilon(1e-9));
    }
}

TEST_CASE("average precision is invariant under monotone score transforms") {
    auto gen = tt::rng(8);
    std::uniform_real_distribution<double> score(0.1, 5.0);
    std::vector<std::vector<ScoredBox>> det(4);
    std::vector<std::vector<Box>> gt(4);
    for (int i = 0; i < 4; ++i) {
        for (int g = 0; g < 4; ++g) gt[i].push_back(rand_box(gen));
        for (int d = 0; d < 8; ++d) det[i].push_back({rand_box(gen), score(gen), -1});
    }
    const double base = average_precision(det, gt, 0.5);
    auto squashed = det;
    for (auto& img : squashed)
        for (auto& d : img) d.score = d.score / (1.0 + d.score);
    CHECK(average_precision(squashed, gt, 0.5) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("mean AP skips classes without ground truth") {
    std::vector<std::vector<Detection>> det = {{
        {{0, 0, 10, 10}, 1, 0.9},
        {{20, 20, 30, 30}, 3, 0.8},  // class 3 has no gt anywhere
    }};
    std::vector<std::vector<Annotation>> gt = {{
        {{0, 0, 10, 10}, 1},
        {{50, 50, 60, 60}, 2},  // class 2: gt but no detections
    }};
    auto res = mean_average_precision(det, gt, 3, 0.5);
    REQUIRE(res.per_class.size() == 2);
    CHECK(res.per_class[0] == std::pair<int, double>{1, 1.0});
    CHECK(res.per_class[1].first == 2);
    CHECK(res.per_class[1].second == 0.0);
    CHECK(res.map == doctest::Approx(0.5));
    CHECK(res.skipped_classes == std::vector<int>{3});
}

TEST_CASE("heatmap normalization and shape") {
    TensorF flat({4, 3, 5});
    flat.fill(2.0f);
    auto rows = hyper_heatmap(flat);
    REQUIRE(rows.size() == 3);
    REQUIRE(rows[0].size() == 5);
    for (const auto& r : rows)
        for (double v : r) CHECK(v == 0.0);  // constant map renders black

    TensorF spiky({2, 2, 2});
    spiky.at(0, 1, 1) = 3.0f;
    spiky.at(1, 1, 1) = 4.0f;  // norm 5 at (1,1), 0 elsewhere
    auto hm = hyper_heatmap(spiky);
    CHECK(hm[1][1] == doctest::Approx(1.0));
    CHECK(hm[0][0] == 0.0);
    CHECK(hm[0][1] == 0.0);
}
