#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "wsseg/losses.hpp"
#include "wsseg/net.hpp"
#include "wsseg/rng.hpp"
#include "wsseg/synth.hpp"

using namespace wsseg;

namespace {

RealGrid random_image(Rng& rng, int h, int w) {
    RealGrid g(h, w);
    for (auto& v : g.values) v = rng.uniform();
    return g;
}

bool same_tensors(const NetParams& a, const NetParams& b, double tol = 0.0) {
    const auto ta = named_tensors(a), tb = named_tensors(b);
    for (std::size_t t = 0; t < ta.size(); ++t) {
        const auto& va = *ta[t].second;
        const auto& vb = *tb[t].second;
        if (va.size() != vb.size()) return false;
        for (std::size_t i = 0; i < va.size(); ++i)
            if (std::abs(va[i] - vb[i]) > tol) return false;
    }
    return true;
}

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("parameter count matches the closed form") {
    const NetParams p = init_params(5);
    CHECK(param_count(p) == expected_param_count());
    CHECK(expected_param_count() == 19985);

    std::size_t named_total = 0;
    for (const auto& [name, vec] : named_tensors(p)) named_total += vec->size();
    CHECK(named_total == param_count(p));
}

TEST_CASE("initialization is deterministic per seed") {
    CHECK(same_tensors(init_params(11), init_params(11)));
    CHECK_FALSE(same_tensors(init_params(11), init_params(12)));
}

TEST_CASE("forward produces half-resolution features and full-resolution masks") {
    const NetParams p = init_params(3);
    Rng rng(42);
    const RealGrid img = random_image(rng, 64, 64);
    const ForwardResult r = forward(img, p);
    CHECK(r.prediction.height == 64);
    CHECK(r.prediction.width == 64);
    CHECK(r.features.channels == kFeatureChannels);
    CHECK(r.features.height == 32);
    CHECK(r.features.width == 32);
    for (double v : r.prediction.values) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }

    const ForwardResult again = forward(img, p);
    CHECK(again.prediction.values == r.prediction.values);
    CHECK(again.features.values == r.features.values);

    CHECK_THROWS_AS(forward(random_image(rng, 10, 12), p), std::invalid_argument);
    CHECK_THROWS_AS(forward(random_image(rng, 4, 4), p), std::invalid_argument);
}

TEST_CASE("zeroed parameters reduce the network to the head bias") {
    NetParams p = zero_like(init_params(1));
    p.head.bias[0] = 0.3;
    Rng rng(7);
    const ForwardResult r = forward(random_image(rng, 16, 16), p);
    const double want = 1.0 / (1.0 + std::exp(-0.3));
    for (double v : r.prediction.values) CHECK(v == doctest::Approx(want).epsilon(1e-12));
    for (double v : r.features.values) CHECK(v == 0.0);
}

TEST_CASE("backward is linear in the upstream gradients") {
    const NetParams p = init_params(9);
    Rng rng(21);
    const RealGrid img = random_image(rng, 16, 16);
    const ForwardResult r = forward(img, p);

    RealGrid g1(16, 16), g2(16, 16), g12(16, 16);
    FeatureMap f1(kFeatureChannels, 8, 8), f2(kFeatureChannels, 8, 8),
        f12(kFeatureChannels, 8, 8);
    for (std::size_t i = 0; i < g1.values.size(); ++i) {
        g1.values[i] = rng.normal();
        g2.values[i] = rng.normal();
        g12.values[i] = g1.values[i] + g2.values[i];
    }
    for (std::size_t i = 0; i < f1.values.size(); ++i) {
        f1.values[i] = rng.normal();
        f2.values[i] = rng.normal();
        f12.values[i] = f1.values[i] + f2.values[i];
    }

    const NetParams b1 = backward(r.cache, p, g1, f1);
    const NetParams b2 = backward(r.cache, p, g2, f2);
    const NetParams b12 = backward(r.cache, p, g12, f12);
    const auto t1 = named_tensors(b1), t2 = named_tensors(b2), t12 = named_tensors(b12);
    for (std::size_t t = 0; t < t1.size(); ++t)
        for (std::size_t i = 0; i < t1[t].second->size(); ++i) {
            const double sum = (*t1[t].second)[i] + (*t2[t].second)[i];
            CHECK((*t12[t].second)[i] == doctest::Approx(sum).epsilon(1e-9));
        }

    // An empty feature gradient means zero feature gradient.
    const NetParams be = backward(r.cache, p, g1, FeatureMap());
    const NetParams bz = backward(r.cache, p, g1, FeatureMap(kFeatureChannels, 8, 8));
    CHECK(same_tensors(be, bz));
}

TEST_CASE("adam follows the bias-corrected closed form on step one") {
    NetParams p = init_params(17);
    const NetParams p0 = p;
    AdamState s = init_adam(p, 1e-3);
    CHECK(s.m.size() == param_count(p));

    NetParams g = zero_like(p);
    Rng rng(5);
    for (auto& [name, vec] : named_tensors(g))
        for (auto& v : *vec) v = rng.normal();

    adam_step(p, g, s);
    CHECK(s.step == 1);

    const auto tp = named_tensors(p);
    const auto tp0 = named_tensors(p0);
    const auto tg = named_tensors(g);
    for (std::size_t t = 0; t < tp.size(); ++t)
        for (std::size_t i = 0; i < tp[t].second->size(); ++i) {
            const double grad = (*tg[t].second)[i];
            const double want =
                (*tp0[t].second)[i] - 1e-3 * grad / (std::abs(grad) + 1e-8);
            CHECK((*tp[t].second)[i] == doctest::Approx(want).epsilon(1e-12));
        }

    // A zero gradient leaves parameters untouched.
    NetParams q = init_params(18);
    const NetParams q0 = q;
    AdamState sq = init_adam(q, 1e-3);
    adam_step(q, zero_like(q), sq);
    CHECK(same_tensors(q, q0));
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    NetParams p = init_params(23);
    AdamState s = init_adam(p, 2.5e-3);
    Rng rng(6);
    for (auto& v : s.m) v = rng.normal();
    for (auto& v : s.v) v = std::abs(rng.normal());
    s.step = 41;
    const std::array<std::uint64_t, 4> state = {1, 2, 3, 0xdeadbeefULL};

    const std::string path = temp_path("wsseg_ckpt_test.bin");
    save_checkpoint(path, p, s, state);

    NetParams q = init_params(99);
    AdamState t;
    std::array<std::uint64_t, 4> loaded{};
    load_checkpoint(path, q, t, loaded);
    CHECK(same_tensors(p, q));
    CHECK(t.m == s.m);
    CHECK(t.v == s.v);
    CHECK(t.step == s.step);
    CHECK(t.lr == s.lr);
    CHECK(loaded == state);

    // Corrupting the magic makes the loader refuse the file.
    {
        std::FILE* f = std::fopen(path.c_str(), "r+b");
        REQUIRE(f != nullptr);
        std::fputc('X', f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_checkpoint(path, q, t, loaded), std::runtime_error);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_checkpoint(path, q, t, loaded), std::runtime_error);
}

TEST_CASE("two hundred alignment steps overfit a single image") {
    // The head squashes nearest-upsampled half-resolution features, so the
    // prediction is constant on 2x2 blocks and the projection dice bottoms out
    // near 1/(2*span+1) per axis whose mask bounds straddle a block. This
    // sample's location mask is block aligned on both axes, so the only floor
    // left is sigmoid saturation.
    SynthConfig cfg;
    cfg.size = 32;
    cfg.seed = 23;
    const Sample s = gen_sample(cfg, 0);
    const LabelBundle bundle =
        multi_nodule_fuse(s.annotation, s.prompt_mask, s.gt.height, s.gt.width);

    NetParams p = init_params(1);
    AdamState adam = init_adam(p, 1e-3);
    for (int step = 0; step < 200; ++step) {
        const ForwardResult r = forward(s.image, p);
        const LossResult a = alignment_loss(r.prediction, bundle.location, bundle.foreground);
        const NetParams g = backward(r.cache, p, *a.grad_prediction, FeatureMap());
        adam_step(p, g, adam);
    }
    const ForwardResult r = forward(s.image, p);
    CHECK(projection_loss(r.prediction, bundle.location).value < 0.05);
}
