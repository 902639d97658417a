#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "wsseg/dataset.hpp"
#include "wsseg/image_io.hpp"
#include "wsseg/labelgen.hpp"
#include "wsseg/losses.hpp"
#include "wsseg/net.hpp"
#include "wsseg/train.hpp"

using namespace wsseg;
namespace fs = std::filesystem;

namespace {

SynthConfig tiny_config(std::uint64_t seed) {
    SynthConfig cfg;
    cfg.size = 32;
    cfg.seed = seed;
    return cfg;
}

RunConfig tiny_run(std::uint64_t seed) {
    RunConfig cfg;
    cfg.synth = tiny_config(seed);
    cfg.train_count = 8;
    cfg.test_count = 4;
    cfg.epochs = 2;
    cfg.batch = 4;
    cfg.seed = seed;
    return cfg;
}

bool same_tensors(const NetParams& a, const NetParams& b) {
    const auto ta = named_tensors(a), tb = named_tensors(b);
    for (std::size_t t = 0; t < ta.size(); ++t)
        if (*ta[t].second != *tb[t].second) return false;
    return true;
}

}  // namespace

TEST_CASE("mode strings parse and print consistently") {
    CHECK(parse_label_mode("T") == LabelMode::kTopo);
    CHECK(parse_label_mode("2") == LabelMode::kPrompt);
    CHECK(parse_label_mode("h") == LabelMode::kFused);
    CHECK(parse_loss_mode("P") == LossMode::kPixel);
    CHECK(parse_loss_mode("e") == LossMode::kE);
    CHECK(mode_code(LossMode::kE, LabelMode::kFused) == "E3");
    CHECK(mode_code(LossMode::kPixel, LabelMode::kTopo) == "P1");
    CHECK(mode_code(LossMode::kA, LabelMode::kPrompt) == "A2");
    CHECK_THROWS_AS(parse_label_mode("X"), std::invalid_argument);
    CHECK_THROWS_AS(parse_loss_mode("F"), std::invalid_argument);
}

TEST_CASE("run config survives the json round trip") {
    RunConfig cfg;
    cfg.synthetic = false;
    cfg.synth.size = 96;
    cfg.synth.seed = 4;
    cfg.train_count = 33;
    cfg.test_count = 11;
    cfg.data_dir = "some/dir";
    cfg.epochs = 7;
    cfg.batch = 3;
    cfg.lr = 5e-4;
    cfg.weights.lambda = 0.6;
    cfg.weights.beta = 0.2;
    cfg.weights.tau = 0.05;
    cfg.weights.scales = {1, 5};
    cfg.weights.samples_per_class = 16;
    cfg.label_mode = LabelMode::kPrompt;
    cfg.loss_mode = LossMode::kC;
    cfg.seed = 123;
    cfg.out_dir = "elsewhere";
    const RunConfig back = run_config_from_json(run_config_to_json(cfg));
    CHECK(back.synthetic == cfg.synthetic);
    CHECK(back.synth.size == cfg.synth.size);
    CHECK(back.synth.seed == cfg.synth.seed);
    CHECK(back.train_count == cfg.train_count);
    CHECK(back.test_count == cfg.test_count);
    CHECK(back.data_dir == cfg.data_dir);
    CHECK(back.epochs == cfg.epochs);
    CHECK(back.batch == cfg.batch);
    CHECK(back.lr == cfg.lr);
    CHECK(back.weights.lambda == cfg.weights.lambda);
    CHECK(back.weights.beta == cfg.weights.beta);
    CHECK(back.weights.tau == cfg.weights.tau);
    CHECK(back.weights.scales == cfg.weights.scales);
    CHECK(back.weights.samples_per_class == cfg.weights.samples_per_class);
    CHECK(back.label_mode == cfg.label_mode);
    CHECK(back.loss_mode == cfg.loss_mode);
    CHECK(back.seed == cfg.seed);
    CHECK(back.out_dir == cfg.out_dir);
}

TEST_CASE("label bundles follow the mode semantics") {
    const Sample s = gen_sample(tiny_config(61), 0);
    const int n = s.gt.height;

    MaskGrid boxes(n, n), quads(n, n);
    for (const NodulePoints& np : s.annotation.nodules) {
        boxes = mask_or(boxes, bounding_box_mask(np, n, n));
        quads = mask_or(quads, quadrilateral_mask(np, n, n));
    }

    const LabelBundle topo = make_bundle(s, LabelMode::kTopo);
    CHECK(topo.location == boxes);
    CHECK(topo.foreground == quads);
    CHECK(topo.background == mask_not(boxes));

    const LabelBundle prompt = make_bundle(s, LabelMode::kPrompt);
    CHECK(prompt.location == s.prompt_mask);
    CHECK(prompt.foreground == s.prompt_mask);
    CHECK(prompt.background == mask_not(s.prompt_mask));

    const LabelBundle fused = make_bundle(s, LabelMode::kFused);
    const LabelBundle want = multi_nodule_fuse(s.annotation, s.prompt_mask, n, n);
    CHECK(fused.location == want.location);
    CHECK(fused.foreground == want.foreground);
    CHECK(fused.background == want.background);

    CHECK(pixel_target(s, LabelMode::kTopo) == quads);
    CHECK(pixel_target(s, LabelMode::kPrompt) == s.prompt_mask);
    CHECK(pixel_target(s, LabelMode::kFused) == want.foreground);
}

TEST_CASE("training is bit-deterministic in the seed") {
    const RunConfig cfg = tiny_run(5);
    const auto train_set = generate_corpus(cfg.synth, cfg.train_count, 0);
    const auto test_set = generate_corpus(cfg.synth, cfg.test_count, cfg.train_count);

    const TrainResult a = train(cfg, train_set, test_set);
    const TrainResult b = train(cfg, train_set, test_set);
    REQUIRE(a.history.steps.size() == b.history.steps.size());
    for (std::size_t i = 0; i < a.history.steps.size(); ++i) {
        CHECK(a.history.steps[i].total == b.history.steps[i].total);
        CHECK(a.history.steps[i].alignment == b.history.steps[i].alignment);
        CHECK(a.history.steps[i].contrastive == b.history.steps[i].contrastive);
        CHECK(a.history.steps[i].correlation == b.history.steps[i].correlation);
    }
    CHECK(same_tensors(a.params, b.params));
    CHECK(a.rng_state == b.rng_state);

    RunConfig other = cfg;
    other.seed = 6;
    const TrainResult c = train(other, train_set, test_set);
    CHECK_FALSE(same_tensors(a.params, c.params));
}

TEST_CASE("logged step totals recompose from their components") {
    RunConfig cfg = tiny_run(15);
    cfg.loss_mode = LossMode::kE;
    const auto train_set = generate_corpus(cfg.synth, cfg.train_count, 0);
    const auto test_set = generate_corpus(cfg.synth, cfg.test_count, cfg.train_count);
    const TrainResult res = train(cfg, train_set, test_set);
    REQUIRE_FALSE(res.history.steps.empty());
    int step = 0;
    for (const StepLog& s : res.history.steps) {
        CHECK(s.step == step++);
        const double recomposed = s.alignment + cfg.weights.lambda * s.contrastive +
                                  cfg.weights.beta * s.correlation + s.pixel;
        CHECK(std::abs(s.total - recomposed) <= 1e-9);
        CHECK(std::isfinite(s.total));
    }
    CHECK(res.history.epochs.size() == static_cast<std::size_t>(cfg.epochs) + 1);
    CHECK(res.history.best_epoch >= 0);
    CHECK(res.history.wall_seconds > 0.0);
}

TEST_CASE("per-image composition agrees with the one-call total loss") {
    const Sample s = gen_sample(tiny_config(25), 3);
    const LabelBundle bundle = make_bundle(s, LabelMode::kFused);
    const NetParams p = init_params(2);
    const ForwardResult fwd = forward(s.image, p);
    LossWeights w;

    Rng r1(77);
    const LossResult total = total_loss(fwd.prediction, fwd.features, bundle, w, r1);

    const MaskGrid fgf = downsample_min(bundle.foreground, 2);
    const MaskGrid bgf = downsample_min(bundle.background, 2);
    const double align =
        alignment_loss(fwd.prediction, bundle.location, bundle.foreground).value;
    Rng r2(77);
    const double cnt = contrastive_loss(fwd.features, fgf, bgf, w, r2).value;
    const double corr =
        prototype_correlation_loss(fwd.features, fwd.prediction, fgf, bgf).value;
    CHECK(std::abs(total.value - (align + w.lambda * cnt + w.beta * corr)) <= 1e-12);
}

TEST_CASE("zero epochs evaluates the freshly initialized network") {
    RunConfig cfg = tiny_run(35);
    cfg.epochs = 0;
    const auto train_set = generate_corpus(cfg.synth, cfg.train_count, 0);
    const auto test_set = generate_corpus(cfg.synth, cfg.test_count, cfg.train_count);
    const TrainResult res = train(cfg, train_set, test_set);
    CHECK(res.history.steps.empty());
    REQUIRE(res.history.epochs.size() == 1);
    CHECK(res.history.epochs[0].epoch == 0);
    CHECK(res.history.best_epoch == 0);

    // Two zero-epoch runs agree; training for an epoch moves the parameters.
    const TrainResult again = train(cfg, train_set, test_set);
    CHECK(same_tensors(res.params, again.params));
}

TEST_CASE("prompt-dependent modes refuse samples without prompts") {
    RunConfig cfg = tiny_run(45);
    auto train_set = generate_corpus(cfg.synth, 4, 0);
    const auto test_set = generate_corpus(cfg.synth, 2, 4);
    train_set[1].has_prompt = false;
    cfg.label_mode = LabelMode::kFused;
    CHECK_THROWS_AS(train(cfg, train_set, test_set), std::invalid_argument);
    cfg.label_mode = LabelMode::kPrompt;
    CHECK_THROWS_AS(train(cfg, train_set, test_set), std::invalid_argument);
    cfg.label_mode = LabelMode::kTopo;  // annotations suffice
    cfg.epochs = 1;
    CHECK_NOTHROW(train(cfg, train_set, test_set));
}

TEST_CASE("evaluation consumes only images and ground truth") {
    const auto samples = generate_corpus(tiny_config(55), 3, 0);
    std::vector<RealGrid> images;
    std::vector<MaskGrid> gts;
    for (const Sample& s : samples) {
        images.push_back(s.image);
        gts.push_back(s.gt);
    }
    const NetParams p = init_params(4);
    const MetricsReport rep = evaluate(p, images, gts);
    REQUIRE(rep.iou.size() == 3);
    for (double v : rep.iou) CHECK(std::isfinite(v));
    const MetricsReport rep2 = evaluate(p, images, gts);
    CHECK(rep.iou == rep2.iou);

    CHECK_THROWS_AS(evaluate(p, {}, {}), std::invalid_argument);
    images.pop_back();
    CHECK_THROWS_AS(evaluate(p, images, gts), std::invalid_argument);
}

TEST_CASE("ablation tables serialize losslessly") {
    std::vector<AblationRow> rows(2);
    rows[0].mode = "E3";
    rows[0].miou = {1.0 / 3.0, 0.017362842};
    rows[0].dsc = {0.5, 0.25};
    rows[0].precision = {0.9999999999999999, 1e-17};
    rows[0].hd95 = {7.0710678118654755, 0.0};
    rows[1].mode = "P3";
    rows[1].miou = {0.25, 0.125};
    rows[1].dsc = {2.0 / 7.0, 0.1};
    rows[1].precision = {0.75, 0.05};
    rows[1].hd95 = {1.4142135623730951, 0.7071067811865476};

    const auto parsed = parse_ablation_csv(ablation_csv(rows));
    REQUIRE(parsed.size() == 2);
    for (int i = 0; i < 2; ++i) {
        CHECK(parsed[i].mode == rows[i].mode);
        CHECK(parsed[i].miou.mean == rows[i].miou.mean);
        CHECK(parsed[i].miou.stddev == rows[i].miou.stddev);
        CHECK(parsed[i].dsc.mean == rows[i].dsc.mean);
        CHECK(parsed[i].precision.mean == rows[i].precision.mean);
        CHECK(parsed[i].hd95.mean == rows[i].hd95.mean);
        CHECK(parsed[i].hd95.stddev == rows[i].hd95.stddev);
    }
    CHECK_THROWS_AS(parse_ablation_csv(""), std::runtime_error);
    CHECK_THROWS_AS(parse_ablation_csv("mode\nbad,row\n"), std::runtime_error);
}

TEST_CASE("a single-cell ablation grid produces one labeled row") {
    RunConfig cfg = tiny_run(65);
    cfg.epochs = 1;
    cfg.loss_mode = LossMode::kA;
    const auto rows = ablation_grid(cfg, {LossMode::kA}, {1});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].mode == "A3");
    CHECK(rows[0].miou.mean >= 0.0);
    CHECK(rows[0].miou.mean <= 1.0);
    CHECK(std::isfinite(rows[0].hd95.mean));
}

TEST_CASE("overlays encode the confusion matrix in color counts") {
    const Sample s = gen_sample(tiny_config(75), 1);
    const int n = s.gt.height;
    const fs::path dir = fs::temp_directory_path() / "wsseg_overlay_test";
    fs::create_directories(dir);
    const std::string path = (dir / "overlay.png").string();

    MaskGrid pred = s.gt;
    pred.at(0, 0) = 1;  // one false positive outside the nodule
    render_overlay(s.image, pred, s.gt, path);
    const RgbImage img = read_png_rgb(path);
    std::size_t red = 0, green = 0, blue = 0;
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            const bool r = img.at(y, x, 0) == 255 && img.at(y, x, 1) == 0;
            const bool g = img.at(y, x, 1) == 255 && img.at(y, x, 0) == 0;
            const bool b = img.at(y, x, 2) == 255 && img.at(y, x, 1) == 0;
            red += r;
            green += g;
            blue += b && !r;
        }
    CHECK(red == s.gt.count());
    CHECK(green == 0);
    CHECK(blue == 1);

    render_overlay(s.image, MaskGrid(n, n), s.gt, path);
    const RgbImage miss = read_png_rgb(path);
    std::size_t green2 = 0;
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            green2 += miss.at(y, x, 1) == 255 && miss.at(y, x, 0) == 0;
    CHECK(green2 == s.gt.count());
    fs::remove_all(dir);
}
