#include "wsseg/losses.hpp"

#include <algorithm>
#include <cmath>

namespace wsseg {

namespace {

// Derivative indicator of clamp_prob: 1 on the open interior, 0 where clamped.
inline double clamp_active(double p) {
    return (p > kProbClamp && p < 1.0 - kProbClamp) ? 1.0 : 0.0;
}

inline double vec_norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

inline double vec_dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Backward through e = u / (||u|| + eps): maps grad wrt e to grad wrt u.
std::vector<double> normalize_backward(const std::vector<double>& u,
                                       const std::vector<double>& grad_e) {
    const double n = vec_norm(u);
    std::vector<double> grad_u(u.size(), 0.0);
    if (n == 0.0) return grad_u;
    const double d = n + kNormEps;
    const double coef = vec_dot(u, grad_e) / (n * d * d);
    for (std::size_t i = 0; i < u.size(); ++i) grad_u[i] = grad_e[i] / d - u[i] * coef;
    return grad_u;
}

void require_grid_mask(const RealGrid& g, const MaskGrid& m, const char* where) {
    if (g.height != m.height || g.width != m.width)
        throw std::invalid_argument(std::string(where) + ": grid/mask dimension mismatch");
}

void require_feat_mask(const FeatureMap& f, const MaskGrid& m, const char* where) {
    if (f.height != m.height || f.width != m.width)
        throw std::invalid_argument(std::string(where) + ": feature/mask dimension mismatch");
}

struct DiceAxis {
    double value = 0.0;
    std::vector<double> grad;  // wrt the prediction-side projection
};

// 1 - 2*sum(min(pred, label)) / (sum(pred) + sum(label)), gradient wrt pred.
DiceAxis projection_dice(const std::vector<double>& pred, const std::vector<double>& label) {
    double inter = 0.0, total = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        inter += std::min(pred[i], label[i]);
        total += pred[i] + label[i];
    }
    DiceAxis out;
    out.grad.assign(pred.size(), 0.0);
    if (total <= 0.0) return out;  // both projections identically zero
    out.value = 1.0 - 2.0 * inter / total;
    const double s2 = 2.0 * inter / (total * total);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double dmin = pred[i] <= label[i] ? 1.0 : 0.0;
        out.grad[i] = s2 - 2.0 * dmin / total;
    }
    return out;
}

}  // namespace

std::pair<std::vector<double>, std::vector<double>> project_axes(const RealGrid& map) {
    if (map.values.empty()) throw std::invalid_argument("project_axes: empty map");
    std::vector<double> px(map.width), py(map.height);
    for (int x = 0; x < map.width; ++x) {
        double m = map.at(0, x);
        for (int y = 1; y < map.height; ++y) m = std::max(m, map.at(y, x));
        px[x] = m;
    }
    for (int y = 0; y < map.height; ++y) {
        double m = map.at(y, 0);
        for (int x = 1; x < map.width; ++x) m = std::max(m, map.at(y, x));
        py[y] = m;
    }
    return {std::move(px), std::move(py)};
}

LossResult projection_loss(const RealGrid& prediction, const MaskGrid& location) {
    require_grid_mask(prediction, location, "projection_loss");
    if (location.empty_mask())
        throw std::invalid_argument("projection_loss: degenerate (empty) location label");

    const int h = prediction.height, w = prediction.width;
    // Prediction projections with first-arg-max bookkeeping for the backward.
    std::vector<double> pred_px(w), pred_py(h);
    std::vector<int> argmax_col(w), argmax_row(h);
    for (int x = 0; x < w; ++x) {
        double best = prediction.at(0, x);
        int besty = 0;
        for (int y = 1; y < h; ++y)
            if (prediction.at(y, x) > best) { best = prediction.at(y, x); besty = y; }
        pred_px[x] = best;
        argmax_col[x] = besty;
    }
    for (int y = 0; y < h; ++y) {
        double best = prediction.at(y, 0);
        int bestx = 0;
        for (int x = 1; x < w; ++x)
            if (prediction.at(y, x) > best) { best = prediction.at(y, x); bestx = x; }
        pred_py[y] = best;
        argmax_row[y] = bestx;
    }
    std::vector<double> loc_px(w, 0.0), loc_py(h, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (location.at(y, x)) { loc_px[x] = 1.0; loc_py[y] = 1.0; }

    const DiceAxis dx = projection_dice(pred_px, loc_px);
    const DiceAxis dy = projection_dice(pred_py, loc_py);

    LossResult out;
    out.value = dx.value + dy.value;
    out.grad_prediction = RealGrid(h, w);
    for (int x = 0; x < w; ++x) out.grad_prediction->at(argmax_col[x], x) += dx.grad[x];
    for (int y = 0; y < h; ++y) out.grad_prediction->at(y, argmax_row[y]) += dy.grad[y];
    return out;
}

LossResult topo_loss(const RealGrid& prediction, const MaskGrid& foreground) {
    require_grid_mask(prediction, foreground, "topo_loss");
    LossResult out;
    out.grad_prediction = RealGrid(prediction.height, prediction.width);
    const std::size_t n = foreground.count();
    if (n == 0) {
        out.skipped |= kSkippedTopo;
        return out;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    double acc = 0.0;
    for (int y = 0; y < prediction.height; ++y) {
        for (int x = 0; x < prediction.width; ++x) {
            if (!foreground.at(y, x)) continue;
            const double p = prediction.at(y, x);
            const double pc = clamp_prob(p);
            acc -= std::log(pc);
            out.grad_prediction->at(y, x) = -inv_n * clamp_active(p) / pc;
        }
    }
    out.value = acc * inv_n;
    return out;
}

LossResult alignment_loss(const RealGrid& prediction, const MaskGrid& location,
                          const MaskGrid& foreground) {
    LossResult proj = projection_loss(prediction, location);
    const LossResult topo = topo_loss(prediction, foreground);
    proj.value += topo.value;
    proj.skipped |= topo.skipped;
    for (std::size_t i = 0; i < proj.grad_prediction->values.size(); ++i)
        proj.grad_prediction->values[i] += topo.grad_prediction->values[i];
    return proj;
}

LossResult dense_bce_loss(const RealGrid& prediction, const MaskGrid& target) {
    require_grid_mask(prediction, target, "dense_bce_loss");
    LossResult out;
    out.grad_prediction = RealGrid(prediction.height, prediction.width);
    const double inv_n = 1.0 / static_cast<double>(prediction.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < prediction.values.size(); ++i) {
        const double p = prediction.values[i];
        const double pc = clamp_prob(p);
        const double t = target.cells[i] ? 1.0 : 0.0;
        acc -= t * std::log(pc) + (1.0 - t) * std::log(1.0 - pc);
        out.grad_prediction->values[i] =
            inv_n * clamp_active(p) * (t > 0.5 ? -1.0 / pc : 1.0 / (1.0 - pc));
    }
    out.value = acc * inv_n;
    return out;
}

std::vector<PatchEmbedding> sample_patch_embeddings(const FeatureMap& features,
                                                    const MaskGrid& region, int k, int n,
                                                    Rng& rng) {
    require_feat_mask(features, region, "sample_patch_embeddings");
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("sample_patch_embeddings: k must be odd");
    if (n < 1) throw std::invalid_argument("sample_patch_embeddings: n must be positive");
    const int r = k / 2;

    std::vector<std::pair<int, int>> eligible;
    for (int y = r; y < features.height - r; ++y) {
        for (int x = r; x < features.width - r; ++x) {
            bool ok = true;
            for (int dy = -r; ok && dy <= r; ++dy)
                for (int dx = -r; ok && dx <= r; ++dx)
                    ok = region.at(y + dy, x + dx) != 0;
            if (ok) eligible.emplace_back(y, x);
        }
    }
    const auto chosen = rng.sample_without_replacement(std::move(eligible),
                                                       static_cast<std::size_t>(n));

    std::vector<PatchEmbedding> out;
    out.reserve(chosen.size());
    const double inv_area = 1.0 / static_cast<double>(k * k);
    for (const auto& [cy, cx] : chosen) {
        PatchEmbedding e;
        e.cy = cy;
        e.cx = cx;
        e.raw.assign(features.channels, 0.0);
        for (int c = 0; c < features.channels; ++c) {
            double acc = 0.0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) acc += features.at(c, cy + dy, cx + dx);
            e.raw[c] = acc * inv_area;
        }
        const double d = vec_norm(e.raw) + kNormEps;
        e.normalized.resize(e.raw.size());
        for (std::size_t i = 0; i < e.raw.size(); ++i) e.normalized[i] = e.raw[i] / d;
        out.push_back(std::move(e));
    }
    return out;
}

namespace {

// Scatter the gradient wrt one patch embedding back onto the feature map.
void scatter_embedding_grad(const PatchEmbedding& e, const std::vector<double>& grad_norm,
                            int k, FeatureMap& grad_features) {
    const std::vector<double> grad_raw = normalize_backward(e.raw, grad_norm);
    const int r = k / 2;
    const double inv_area = 1.0 / static_cast<double>(k * k);
    for (int c = 0; c < grad_features.channels; ++c) {
        const double g = grad_raw[c] * inv_area;
        for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx) grad_features.at(c, e.cy + dy, e.cx + dx) += g;
    }
}

}  // namespace

LossResult contrastive_loss(const FeatureMap& features, const MaskGrid& foreground,
                            const MaskGrid& background, const LossWeights& weights, Rng& rng) {
    if (weights.scales.empty()) throw std::invalid_argument("contrastive_loss: no scales");
    if (weights.tau <= 0.0) throw std::invalid_argument("contrastive_loss: tau must be positive");

    LossResult out;
    out.grad_features = FeatureMap(features.channels, features.height, features.width);
    int contributing = 0;
    double total = 0.0;

    for (const int k : weights.scales) {
        auto anchors = sample_patch_embeddings(features, foreground, k,
                                               weights.samples_per_class, rng);
        auto positives = sample_patch_embeddings(features, foreground, k,
                                                 weights.samples_per_class, rng);
        auto negatives = sample_patch_embeddings(features, background, k,
                                                 weights.samples_per_class, rng);
        const std::size_t n_pairs = std::min(anchors.size(), positives.size());
        if (n_pairs == 0 || negatives.empty()) continue;
        ++contributing;

        const double inv_pairs = 1.0 / static_cast<double>(n_pairs);
        std::vector<std::vector<double>> grad_anchor(n_pairs), grad_positive(n_pairs);
        std::vector<std::vector<double>> grad_negative(negatives.size());
        for (auto& g : grad_negative) g.assign(features.channels, 0.0);

        double scale_value = 0.0;
        std::vector<double> neg_scores(negatives.size());
        for (std::size_t i = 0; i < n_pairs; ++i) {
            grad_anchor[i].assign(features.channels, 0.0);
            grad_positive[i].assign(features.channels, 0.0);
            const double pos_score =
                vec_dot(anchors[i].normalized, positives[i].normalized) / weights.tau;
            double peak = pos_score;
            for (std::size_t j = 0; j < negatives.size(); ++j) {
                neg_scores[j] =
                    vec_dot(anchors[i].normalized, negatives[j].normalized) / weights.tau;
                peak = std::max(peak, neg_scores[j]);
            }
            double z = std::exp(pos_score - peak);
            for (const double s : neg_scores) z += std::exp(s - peak);
            scale_value += peak + std::log(z) - pos_score;

            const double w_pos = std::exp(pos_score - peak) / z;
            const double c_pos = inv_pairs * (w_pos - 1.0) / weights.tau;
            for (int c = 0; c < features.channels; ++c) {
                grad_anchor[i][c] += c_pos * positives[i].normalized[c];
                grad_positive[i][c] += c_pos * anchors[i].normalized[c];
            }
            for (std::size_t j = 0; j < negatives.size(); ++j) {
                const double c_neg = inv_pairs * std::exp(neg_scores[j] - peak) / z / weights.tau;
                for (int c = 0; c < features.channels; ++c) {
                    grad_anchor[i][c] += c_neg * negatives[j].normalized[c];
                    grad_negative[j][c] += c_neg * anchors[i].normalized[c];
                }
            }
        }
        total += scale_value * inv_pairs;
        for (std::size_t i = 0; i < n_pairs; ++i) {
            scatter_embedding_grad(anchors[i], grad_anchor[i], k, *out.grad_features);
            scatter_embedding_grad(positives[i], grad_positive[i], k, *out.grad_features);
        }
        for (std::size_t j = 0; j < negatives.size(); ++j)
            scatter_embedding_grad(negatives[j], grad_negative[j], k, *out.grad_features);
    }

    if (contributing == 0) {
        out.skipped |= kSkippedContrastive;
        return out;
    }
    const double inv_scales = 1.0 / static_cast<double>(contributing);
    out.value = total * inv_scales;
    for (auto& g : out.grad_features->values) g *= inv_scales;
    return out;
}

namespace {

std::optional<std::vector<double>> masked_mean(const FeatureMap& features,
                                               const MaskGrid& region) {
    require_feat_mask(features, region, "region_prototype");
    const std::size_t n = region.count();
    if (n == 0) return std::nullopt;
    std::vector<double> mean(features.channels, 0.0);
    for (int c = 0; c < features.channels; ++c) {
        double acc = 0.0;
        for (int y = 0; y < features.height; ++y)
            for (int x = 0; x < features.width; ++x)
                if (region.at(y, x)) acc += features.at(c, y, x);
        mean[c] = acc / static_cast<double>(n);
    }
    return mean;
}

std::vector<double> normalize_vec(const std::vector<double>& u) {
    const double d = vec_norm(u) + kNormEps;
    std::vector<double> out(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) out[i] = u[i] / d;
    return out;
}

}  // namespace

std::optional<std::vector<double>> region_prototype(const FeatureMap& features,
                                                    const MaskGrid& region) {
    const auto mean = masked_mean(features, region);
    if (!mean) return std::nullopt;
    return normalize_vec(*mean);
}

RealGrid correlation_map(const FeatureMap& features, const std::vector<double>& prototype) {
    if (static_cast<int>(prototype.size()) != features.channels)
        throw std::invalid_argument("correlation_map: channel count mismatch");
    const double proto_norm = vec_norm(prototype);
    RealGrid out(features.height, features.width);
    for (int y = 0; y < features.height; ++y) {
        for (int x = 0; x < features.width; ++x) {
            double dot = 0.0, nf2 = 0.0;
            for (int c = 0; c < features.channels; ++c) {
                const double v = features.at(c, y, x);
                dot += v * prototype[c];
                nf2 += v * v;
            }
            const double denom = std::sqrt(nf2) * proto_norm + kNormEps;
            out.at(y, x) = std::max(0.0, dot / denom);
        }
    }
    return out;
}

MapPairGrad correlation_consistency_loss(const RealGrid& corr_fg, const RealGrid& corr_bg) {
    if (!corr_fg.same_shape(corr_bg))
        throw std::invalid_argument("correlation_consistency_loss: shape mismatch");
    MapPairGrad out;
    out.grad_corr_fg = RealGrid(corr_fg.height, corr_fg.width);
    out.grad_corr_bg = RealGrid(corr_fg.height, corr_fg.width);
    const double inv_n = 1.0 / static_cast<double>(corr_fg.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < corr_fg.values.size(); ++i) {
        const double a = corr_fg.values[i];
        const double g = 1.0 - corr_bg.values[i];  // complement reading of the background map
        const double ac = clamp_prob(a), gc = clamp_prob(g);
        acc += -0.5 * (a * std::log(gc) + (1.0 - a) * std::log(1.0 - gc)) -
               0.5 * (g * std::log(ac) + (1.0 - g) * std::log(1.0 - ac));
        const double da = -0.5 * (std::log(gc) - std::log(1.0 - gc)) -
                          0.5 * clamp_active(a) * (g / ac - (1.0 - g) / (1.0 - ac));
        const double dg = -0.5 * clamp_active(g) * (a / gc - (1.0 - a) / (1.0 - gc)) -
                          0.5 * (std::log(ac) - std::log(1.0 - ac));
        out.grad_corr_fg.values[i] = inv_n * da;
        out.grad_corr_bg.values[i] = -inv_n * dg;  // d(1 - r_bg)/d r_bg = -1
    }
    out.value = acc * inv_n;
    return out;
}

SegConsistencyGrad correlation_seg_loss(const RealGrid& prediction, const RealGrid& fused_corr) {
    if (prediction.height % fused_corr.height != 0 || prediction.width % fused_corr.width != 0)
        throw std::invalid_argument("correlation_seg_loss: resolutions not integer-related");
    const int fy = prediction.height / fused_corr.height;
    const int fx = prediction.width / fused_corr.width;
    if (fy != fx)
        throw std::invalid_argument("correlation_seg_loss: anisotropic resolution ratio");

    SegConsistencyGrad out;
    out.grad_prediction = RealGrid(prediction.height, prediction.width);
    out.grad_correlation = RealGrid(fused_corr.height, fused_corr.width);

    double inter = 0.0, total = 0.0;
    for (int y = 0; y < prediction.height; ++y) {
        for (int x = 0; x < prediction.width; ++x) {
            const double up = fused_corr.at(y / fy, x / fx);
            inter += prediction.at(y, x) * up;
            total += prediction.at(y, x) + up;
        }
    }
    if (total <= 0.0) return out;  // both maps all-zero: vacuous agreement

    out.value = 1.0 - 2.0 * inter / total;
    const double s2 = 2.0 * inter / (total * total);
    for (int y = 0; y < prediction.height; ++y) {
        for (int x = 0; x < prediction.width; ++x) {
            const double up = fused_corr.at(y / fy, x / fx);
            out.grad_prediction.at(y, x) = s2 - 2.0 * up / total;
            out.grad_correlation.at(y / fy, x / fx) += s2 - 2.0 * prediction.at(y, x) / total;
        }
    }
    return out;
}

namespace {

// Accumulates gradients flowing through one rectified-cosine correlation map
// into the feature map and the prototype.
void correlation_backward(const FeatureMap& features, const std::vector<double>& prototype,
                          const RealGrid& grad_map, FeatureMap& grad_features,
                          std::vector<double>& grad_prototype) {
    const double np = vec_norm(prototype);
    for (int y = 0; y < features.height; ++y) {
        for (int x = 0; x < features.width; ++x) {
            const double g = grad_map.at(y, x);
            if (g == 0.0) continue;
            double dot = 0.0, nf2 = 0.0;
            for (int c = 0; c < features.channels; ++c) {
                const double v = features.at(c, y, x);
                dot += v * prototype[c];
                nf2 += v * v;
            }
            const double nf = std::sqrt(nf2);
            const double denom = nf * np + kNormEps;
            if (dot / denom <= 0.0) continue;  // rectifier closed
            const double inv_d = 1.0 / denom;
            const double d2 = denom * denom;
            const double coef_f = (nf > 0.0) ? dot * np / (d2 * nf) : 0.0;
            const double coef_p = (np > 0.0) ? dot * nf / (d2 * np) : 0.0;
            for (int c = 0; c < features.channels; ++c) {
                const double v = features.at(c, y, x);
                grad_features.at(c, y, x) += g * (prototype[c] * inv_d - coef_f * v);
                grad_prototype[c] += g * (v * inv_d - coef_p * prototype[c]);
            }
        }
    }
}

}  // namespace

LossResult prototype_correlation_loss(const FeatureMap& features, const RealGrid& prediction,
                                      const MaskGrid& foreground, const MaskGrid& background) {
    LossResult out;
    out.grad_prediction = RealGrid(prediction.height, prediction.width);
    out.grad_features = FeatureMap(features.channels, features.height, features.width);

    const auto mean_fg = masked_mean(features, foreground);
    const auto mean_bg = masked_mean(features, background);
    if (!mean_fg || !mean_bg) {
        out.skipped |= kSkippedCorrelation;
        return out;
    }
    const std::vector<double> proto_fg = normalize_vec(*mean_fg);
    const std::vector<double> proto_bg = normalize_vec(*mean_bg);

    const RealGrid corr_fg = correlation_map(features, proto_fg);
    const RealGrid corr_bg = correlation_map(features, proto_bg);

    MapPairGrad consistency = correlation_consistency_loss(corr_fg, corr_bg);

    RealGrid fused(corr_fg.height, corr_fg.width);
    for (std::size_t i = 0; i < fused.values.size(); ++i)
        fused.values[i] = 0.5 * (corr_fg.values[i] + 1.0 - corr_bg.values[i]);
    const SegConsistencyGrad seg = correlation_seg_loss(prediction, fused);

    out.value = consistency.value + seg.value;
    out.grad_prediction = seg.grad_prediction;

    // Total gradients on each correlation map: consistency part plus the
    // fused-map part (fused = (corr_fg + 1 - corr_bg) / 2).
    RealGrid grad_fg = consistency.grad_corr_fg;
    RealGrid grad_bg = consistency.grad_corr_bg;
    for (std::size_t i = 0; i < grad_fg.values.size(); ++i) {
        grad_fg.values[i] += 0.5 * seg.grad_correlation.values[i];
        grad_bg.values[i] -= 0.5 * seg.grad_correlation.values[i];
    }

    std::vector<double> grad_proto_fg(features.channels, 0.0);
    std::vector<double> grad_proto_bg(features.channels, 0.0);
    correlation_backward(features, proto_fg, grad_fg, *out.grad_features, grad_proto_fg);
    correlation_backward(features, proto_bg, grad_bg, *out.grad_features, grad_proto_bg);

    // Through L2 normalization into the masked means, then onto the features.
    const std::vector<double> grad_mean_fg = normalize_backward(*mean_fg, grad_proto_fg);
    const std::vector<double> grad_mean_bg = normalize_backward(*mean_bg, grad_proto_bg);
    const double inv_fg = 1.0 / static_cast<double>(foreground.count());
    const double inv_bg = 1.0 / static_cast<double>(background.count());
    for (int y = 0; y < features.height; ++y) {
        for (int x = 0; x < features.width; ++x) {
            if (foreground.at(y, x))
                for (int c = 0; c < features.channels; ++c)
                    out.grad_features->at(c, y, x) += grad_mean_fg[c] * inv_fg;
            if (background.at(y, x))
                for (int c = 0; c < features.channels; ++c)
                    out.grad_features->at(c, y, x) += grad_mean_bg[c] * inv_bg;
        }
    }
    return out;
}

LossResult total_loss(const RealGrid& prediction, const FeatureMap& features,
                      const LabelBundle& bundle, const LossWeights& weights, Rng& rng) {
    if (prediction.height % features.height != 0 || prediction.width % features.width != 0)
        throw std::invalid_argument("total_loss: feature resolution must divide image resolution");
    const int fy = prediction.height / features.height;
    const int fx = prediction.width / features.width;
    if (fy != fx) throw std::invalid_argument("total_loss: anisotropic resolution ratio");

    LossResult out = alignment_loss(prediction, bundle.location, bundle.foreground);
    out.grad_features = FeatureMap(features.channels, features.height, features.width);

    if (weights.lambda == 0.0 && weights.beta == 0.0) return out;

    // Min-pool keeps only feature cells whose every covered pixel is labeled,
    // preserving region purity at feature resolution.
    const MaskGrid fg_feat = downsample_min(bundle.foreground, fy);
    const MaskGrid bg_feat = downsample_min(bundle.background, fy);

    if (weights.lambda != 0.0) {
        const LossResult cnt = contrastive_loss(features, fg_feat, bg_feat, weights, rng);
        out.value += weights.lambda * cnt.value;
        out.skipped |= cnt.skipped;
        for (std::size_t i = 0; i < out.grad_features->values.size(); ++i)
            out.grad_features->values[i] += weights.lambda * cnt.grad_features->values[i];
    }
    if (weights.beta != 0.0) {
        const LossResult corr = prototype_correlation_loss(features, prediction, fg_feat, bg_feat);
        out.value += weights.beta * corr.value;
        out.skipped |= corr.skipped;
        for (std::size_t i = 0; i < out.grad_prediction->values.size(); ++i)
            out.grad_prediction->values[i] += weights.beta * corr.grad_prediction->values[i];
        for (std::size_t i = 0; i < out.grad_features->values.size(); ++i)
            out.grad_features->values[i] += weights.beta * corr.grad_features->values[i];
    }
    return out;
}

}  // namespace wsseg
