#include "wsseg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "wsseg/losses.hpp"
#include "wsseg/net.hpp"

namespace wsseg {

double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) /
           std::max(1e-12, std::abs(analytic) + std::abs(numeric));
}

namespace {

// Distinct, well-separated prediction values so row/column maxima and
// min() comparisons sit away from finite-difference step sizes.
RealGrid spaced_pred(int h, int w, Rng& rng) {
    const int n = h * w;
    std::vector<double> levels(n);
    for (int i = 0; i < n; ++i)
        levels[i] = 0.15 + 0.7 * static_cast<double>(i) / static_cast<double>(n - 1);
    rng.shuffle(levels);
    RealGrid g(h, w);
    g.values = std::move(levels);
    return g;
}

RealGrid uniform_grid(int h, int w, double lo, double hi, Rng& rng) {
    RealGrid g(h, w);
    for (auto& v : g.values) v = rng.uniform(lo, hi);
    return g;
}

MaskGrid random_mask(int h, int w, double density, Rng& rng) {
    MaskGrid m(h, w);
    for (auto& c : m.cells) c = rng.uniform() < density ? 1 : 0;
    if (m.empty_mask()) m.cells[rng.below(m.cells.size())] = 1;
    return m;
}

FeatureMap randn_features(int c, int h, int w, Rng& rng) {
    FeatureMap f(c, h, w);
    for (auto& v : f.values) v = rng.normal();
    return f;
}

MaskGrid band_mask(int h, int w, int row_lo, int row_hi) {
    MaskGrid m(h, w);
    for (int y = row_lo; y <= row_hi; ++y)
        for (int x = 0; x < w; ++x) m.at(y, x) = 1;
    return m;
}

MaskGrid box_mask_px(int h, int w, int lo, int hi) {
    MaskGrid m(h, w);
    for (int y = lo; y <= hi; ++y)
        for (int x = lo; x <= hi; ++x) m.at(y, x) = 1;
    return m;
}

struct DiffTarget {
    std::vector<double>* values;
    std::vector<double> analytic;
};

FdReport run_fd(const std::string& name, const std::function<double()>& eval,
                std::vector<DiffTarget>& targets, double h) {
    FdReport rep;
    rep.kernel = name;
    for (auto& t : targets) {
        if (t.values->size() != t.analytic.size())
            throw std::invalid_argument("gradcheck: analytic gradient size mismatch");
        for (std::size_t i = 0; i < t.values->size(); ++i) {
            const double saved = (*t.values)[i];
            (*t.values)[i] = saved + h;
            const double fp = eval();
            (*t.values)[i] = saved - h;
            const double fm = eval();
            (*t.values)[i] = saved;
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw std::runtime_error("gradcheck: non-finite loss in " + name);
            const double numeric = (fp - fm) / (2.0 * h);
            rep.max_rel_err = std::max(rep.max_rel_err, relative_error(t.analytic[i], numeric));
            ++rep.coords_checked;
        }
    }
    return rep;
}

// Bundle on a 16x16 canvas whose downsampled regions stay nonempty: box
// location, inner foreground box, frame background.
LabelBundle fd_bundle(Rng& rng) {
    const int lo = 2 + rng.uniform_int(0, 1);
    const int hi = 13 - rng.uniform_int(0, 1);
    LabelBundle b;
    b.location = box_mask_px(16, 16, lo, hi);
    b.foreground = box_mask_px(16, 16, lo + 2, hi - 2);
    b.background = mask_not(b.location);
    return b;
}

}  // namespace

FdReport finite_diff_check(const std::string& kernel, double h, std::uint64_t seed) {
    Rng rng(Rng::mix(seed, 0xfd15u));

    if (kernel == "projection") {
        RealGrid pred = spaced_pred(8, 8, rng);
        MaskGrid loc = random_mask(8, 8, 0.5, rng);
        const LossResult res = projection_loss(pred, loc);
        auto eval = [&]() { return projection_loss(pred, loc).value; };
        std::vector<DiffTarget> targets;
        targets.push_back({&pred.values, res.grad_prediction->values});
        return run_fd(kernel, eval, targets, h);
    }
    if (kernel == "topo") {
        RealGrid pred = uniform_grid(8, 8, 0.15, 0.85, rng);
        MaskGrid fg = random_mask(8, 8, 0.4, rng);
        const LossResult res = topo_loss(pred, fg);
        auto eval = [&]() { return topo_loss(pred, fg).value; };
        std::vector<DiffTarget> targets;
        targets.push_back({&pred.values, res.grad_prediction->values});
        return run_fd(kernel, eval, targets, h);
    }
    if (kernel == "alignment") {
        RealGrid pred = spaced_pred(8, 8, rng);
        MaskGrid loc = random_mask(8, 8, 0.5, rng);
        MaskGrid fg = random_mask(8, 8, 0.3, rng);
        const LossResult res = alignment_loss(pred, loc, fg);
        auto eval = [&]() { return alignment_loss(pred, loc, fg).value; };
        std::vector<DiffTarget> targets;
        targets.push_back({&pred.values, res.grad_prediction->values});
        return run_fd(kernel, eval, targets, h);
    }
    if (kernel == "dense_bce") {
        RealGrid pred = uniform_grid(8, 8, 0.15, 0.85, rng);
        MaskGrid target = random_mask(8, 8, 0.5, rng);
        const LossResult res = dense_bce_loss(pred, target);
        auto eval = [&]() { return dense_bce_loss(pred, target).value; };
        std::vector<DiffTarget> targets;
        targets.push_back({&pred.values, res.grad_prediction->values});
        return run_fd(kernel, eval, targets, h);
    }
    if (kernel == "contrastive") {
        FeatureMap feats = randn_features(4, 8, 8, rng);
        MaskGrid fg = band_mask(8, 8, 0, 2 + rng.uniform_int(0, 1));
        MaskGrid bg = band_mask(8, 8, 5, 7);
        const LossWeights w;
        const std::uint64_t sample_seed = rng.next_u64();
        auto eval = [&]() {
            Rng r(sample_seed);
            return contrastive_loss(feats, fg, bg, w, r).value;
        };
        Rng r(sample_seed);
        const LossResult res = contrastive_loss(feats, fg, bg, w, r);
        std::vector<DiffTarget> targets;
        targets.push_back({&feats.values, res.grad_features->values});
        return run_fd(kernel, eval, targets, h);
    }
    if (kernel == "correlation_consistency") {
        RealGrid ca = uniform_grid(8, 8, 0.05, 0.95, rng);
        RealGrid cb = uniform_grid(8, 8, 0.05, 0.95, rng);
        const MapPairGrad res = correlation_consistency_loss(ca, cb);
        auto eval = [&]() { return correlation_consistency_loss(ca, cb).value; };
        std::vector<DiffTarget> targets;
        targets.push_back({&ca.values, res.grad_corr_fg.values});
        targets.push_back({&cb.values, res.grad_corr_bg.values});
        return run_fd(kernel, eval, targets, h);
    }
    if (kernel == "correlation_seg") {
        RealGrid pred = spaced_pred(8, 8, rng);
        RealGrid corr = uniform_grid(4, 4, 0.1, 0.9, rng);
        const SegConsistencyGrad res = correlation_seg_loss(pred, corr);
        auto eval = [&]() { return correlation_seg_loss(pred, corr).value; };
        std::vector<DiffTarget> targets;
        targets.push_back({&pred.values, res.grad_prediction.values});
        targets.push_back({&corr.values, res.grad_correlation.values});
        return run_fd(kernel, eval, targets, h);
    }
    if (kernel == "prototype_correlation") {
        FeatureMap feats = randn_features(4, 8, 8, rng);
        RealGrid pred = uniform_grid(16, 16, 0.15, 0.85, rng);
        MaskGrid fg = band_mask(8, 8, 0, 2 + rng.uniform_int(0, 1));
        MaskGrid bg = band_mask(8, 8, 5, 7);
        const LossResult res = prototype_correlation_loss(feats, pred, fg, bg);
        auto eval = [&]() { return prototype_correlation_loss(feats, pred, fg, bg).value; };
        std::vector<DiffTarget> targets;
        targets.push_back({&feats.values, res.grad_features->values});
        targets.push_back({&pred.values, res.grad_prediction->values});
        return run_fd(kernel, eval, targets, h);
    }
    if (kernel == "total") {
        RealGrid pred = spaced_pred(16, 16, rng);
        FeatureMap feats = randn_features(4, 8, 8, rng);
        const LabelBundle bundle = fd_bundle(rng);
        const LossWeights w;
        const std::uint64_t sample_seed = rng.next_u64();
        auto eval = [&]() {
            Rng r(sample_seed);
            return total_loss(pred, feats, bundle, w, r).value;
        };
        Rng r(sample_seed);
        const LossResult res = total_loss(pred, feats, bundle, w, r);
        std::vector<DiffTarget> targets;
        targets.push_back({&pred.values, res.grad_prediction->values});
        targets.push_back({&feats.values, res.grad_features->values});
        return run_fd(kernel, eval, targets, h);
    }
    throw std::invalid_argument("finite_diff_check: unknown kernel " + kernel);
}

std::vector<FdReport> gradcheck_suite(int instances, double h, std::uint64_t base_seed) {
    std::vector<FdReport> reports;
    std::uint64_t kernel_index = 0;
    for (const char* kernel : kGradcheckKernels) {
        FdReport agg;
        agg.kernel = kernel;
        for (int i = 0; i < instances; ++i) {
            const FdReport r = finite_diff_check(
                kernel, h, Rng::mix(base_seed, kernel_index * 1000 + static_cast<std::uint64_t>(i)));
            agg.max_rel_err = std::max(agg.max_rel_err, r.max_rel_err);
            agg.coords_checked += r.coords_checked;
        }
        reports.push_back(std::move(agg));
        ++kernel_index;
    }
    return reports;
}

FdReport gradcheck_end_to_end(int probes, double h, std::uint64_t seed) {
    Rng rng(Rng::mix(seed, 0xe2eu));
    NetParams params = init_params(rng.next_u64());
    RealGrid image = uniform_grid(16, 16, 0.0, 1.0, rng);
    const LabelBundle bundle = fd_bundle(rng);
    const LossWeights w;
    const std::uint64_t sample_seed = rng.next_u64();

    auto eval = [&]() {
        const ForwardResult f = forward(image, params);
        Rng r(sample_seed);
        return total_loss(f.prediction, f.features, bundle, w, r).value;
    };

    const ForwardResult f = forward(image, params);
    Rng r(sample_seed);
    const LossResult loss = total_loss(f.prediction, f.features, bundle, w, r);
    const NetParams grads = backward(f.cache, params, *loss.grad_prediction, *loss.grad_features);

    auto param_tensors = named_tensors(params);
    const auto grad_tensors = named_tensors(grads);
    const std::size_t total_params = param_count(params);

    FdReport rep;
    rep.kernel = "end_to_end";
    for (int probe = 0; probe < probes; ++probe) {
        std::size_t flat = rng.below(total_params);
        std::size_t tensor = 0;
        while (flat >= param_tensors[tensor].second->size()) {
            flat -= param_tensors[tensor].second->size();
            ++tensor;
        }
        double& coord = (*param_tensors[tensor].second)[flat];
        const double analytic = (*grad_tensors[tensor].second)[flat];
        const double saved = coord;
        coord = saved + h;
        const double fp = eval();
        coord = saved - h;
        const double fm = eval();
        coord = saved;
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("gradcheck: non-finite end-to-end loss");
        const double numeric = (fp - fm) / (2.0 * h);
        rep.max_rel_err = std::max(rep.max_rel_err, relative_error(analytic, numeric));
        ++rep.coords_checked;
    }
    return rep;
}

}  // namespace wsseg
