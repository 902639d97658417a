#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "wsseg/metrics.hpp"
#include "wsseg/rng.hpp"

using namespace wsseg;

namespace {

MaskGrid random_mask(Rng& rng, int h, int w, double density) {
    MaskGrid m(h, w);
    for (auto& c : m.cells) c = rng.uniform() < density;
    return m;
}

}  // namespace

TEST_CASE("overlap metrics match set enumeration") {
    Rng rng(301);
    for (int trial = 0; trial < 100; ++trial) {
        const double d = rng.uniform(0.0, 0.8);
        const MaskGrid a = random_mask(rng, 11, 13, d);
        const MaskGrid b = random_mask(rng, 11, 13, d);
        CHECK(iou(a, b) == doctest::Approx(oracle::iou(a, b)).epsilon(1e-12));
        CHECK(dsc(a, b) == doctest::Approx(oracle::dsc(a, b)).epsilon(1e-12));
        const auto got = prediction_precision(a, b);
        const auto want = oracle::precision(a, b);
        REQUIRE(got.has_value() == want.has_value());
        if (got) CHECK(*got == doctest::Approx(*want).epsilon(1e-12));
        CHECK(dsc(a, b) ==
              doctest::Approx(2.0 * iou(a, b) / (1.0 + iou(a, b))).epsilon(1e-12));
    }
}

TEST_CASE("empty-mask conventions") {
    const MaskGrid e1(6, 7), e2(6, 7);
    MaskGrid full(6, 7);
    for (auto& c : full.cells) c = 1;
    CHECK(iou(e1, e2) == 1.0);
    CHECK(dsc(e1, e2) == 1.0);
    CHECK_FALSE(prediction_precision(e1, full).has_value());
    CHECK(hd95(e1, e2) == 0.0);
    CHECK(hd95(e1, full) == doctest::Approx(std::hypot(6.0, 7.0)).epsilon(1e-12));
    CHECK(hd95(full, e2) == doctest::Approx(std::hypot(6.0, 7.0)).epsilon(1e-12));
}

TEST_CASE("boundary extraction keeps exactly the exposed pixels") {
    // 4x4 solid block inside a 6x6 grid: the 2x2 interior must drop out.
    MaskGrid m(6, 6);
    for (int y = 1; y <= 4; ++y)
        for (int x = 1; x <= 4; ++x) m.at(y, x) = 1;
    const MaskGrid b = boundary_mask(m);
    CHECK(b.count() == 12);
    CHECK(b.at(2, 2) == 0);
    CHECK(b.at(1, 1) == 1);

    // Touching the image edge makes a pixel exposed even with full neighbors.
    MaskGrid stripe(3, 5);
    for (int x = 0; x < 5; ++x)
        for (int y = 0; y < 3; ++y) stripe.at(y, x) = 1;
    CHECK(boundary_mask(stripe).count() == 15 - 3);
}

TEST_CASE("squared distance transform matches brute force") {
    Rng rng(302);
    for (int trial = 0; trial < 30; ++trial) {
        const MaskGrid src = random_mask(rng, 9, 12, trial == 0 ? 0.0 : rng.uniform(0.05, 0.5));
        const RealGrid got = squared_distance_transform(src);
        const RealGrid want = oracle::squared_edt(src);
        for (std::size_t i = 0; i < got.values.size(); ++i) {
            if (std::isinf(want.values[i]))
                CHECK(std::isinf(got.values[i]));
            else
                CHECK(got.values[i] == doctest::Approx(want.values[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("hd95 matches the all-pairs oracle") {
    Rng rng(303);
    for (int trial = 0; trial < 50; ++trial) {
        const MaskGrid a = random_mask(rng, 10, 10, rng.uniform(0.1, 0.6));
        const MaskGrid b = random_mask(rng, 10, 10, rng.uniform(0.1, 0.6));
        CHECK(std::abs(hd95(a, b) - oracle::hd95(a, b)) <= 1e-9);
    }
    // Identical masks sit at distance zero at every percentile.
    const MaskGrid m = random_mask(rng, 10, 10, 0.4);
    CHECK(hd95(m, m) == 0.0);
}

TEST_CASE("binarize thresholds inclusively") {
    RealGrid g(1, 4);
    g.values = {0.49, 0.5, 0.51, 0.0};
    const MaskGrid m = binarize(g, 0.5);
    CHECK(m.cells == std::vector<std::uint8_t>{0, 1, 1, 0});
}

TEST_CASE("summaries use the population standard deviation") {
    const MetricsSummary two = summarize({0.2, 0.8});
    CHECK(two.mean == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(two.stddev == doctest::Approx(0.3).epsilon(1e-12));
    const MetricsSummary empty = summarize({});
    CHECK(empty.mean == 0.0);
    CHECK(empty.stddev == 0.0);

    Rng rng(304);
    std::vector<double> vals;
    for (int i = 0; i < 17; ++i) vals.push_back(rng.uniform());
    const MetricsSummary got = summarize(vals);
    const oracle::MeanStd want = oracle::mean_std(vals);
    CHECK(got.mean == doctest::Approx(want.mean).epsilon(1e-12));
    CHECK(got.stddev == doctest::Approx(want.stddev).epsilon(1e-12));
}

TEST_CASE("corpus report binarizes at 0.5 and aggregates per image") {
    Rng rng(305);
    std::vector<RealGrid> preds;
    std::vector<MaskGrid> gts;
    for (int i = 0; i < 6; ++i) {
        RealGrid p(8, 8);
        for (auto& v : p.values) v = rng.uniform();
        preds.push_back(p);
        gts.push_back(random_mask(rng, 8, 8, 0.3));
    }
    const MetricsReport rep = corpus_report(preds, gts, 0.5);
    REQUIRE(rep.iou.size() == 6);
    REQUIRE(rep.dsc.size() == 6);
    REQUIRE(rep.hd95.size() == 6);
    for (int i = 0; i < 6; ++i) {
        const MaskGrid bin = binarize(preds[i], 0.5);
        CHECK(rep.iou[i] == doctest::Approx(oracle::iou(bin, gts[i])).epsilon(1e-12));
        CHECK(rep.dsc[i] == doctest::Approx(oracle::dsc(bin, gts[i])).epsilon(1e-12));
        CHECK(std::abs(rep.hd95[i] - oracle::hd95(bin, gts[i])) <= 1e-9);
    }
    const oracle::MeanStd want = oracle::mean_std(rep.iou);
    CHECK(rep.iou_summary.mean == doctest::Approx(want.mean).epsilon(1e-12));
    CHECK(rep.iou_summary.stddev == doctest::Approx(want.stddev).epsilon(1e-12));
}
