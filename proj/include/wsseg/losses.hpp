#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "wsseg/grid.hpp"
#include "wsseg/labelgen.hpp"
#include "wsseg/rng.hpp"

namespace wsseg {

/// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before any
/// logarithm; kNormEps guards every norm denominator.
constexpr double kProbClamp = 1e-7;
constexpr double kNormEps = 1e-8;

inline double clamp_prob(double p) {
    if (p < kProbClamp) return kProbClamp;
    if (p > 1.0 - kProbClamp) return 1.0 - kProbClamp;
    return p;
}

/// Terms a loss evaluation skipped because its supervision region was empty.
enum SkipFlag : std::uint32_t {
    kSkippedTopo = 1u << 0,
    kSkippedContrastive = 1u << 1,
    kSkippedCorrelation = 1u << 2,
};

/// Scalar loss plus gradients with respect to the differentiable inputs the
/// kernel actually consumes; gradients it does not produce stay absent.
struct LossResult {
    double value = 0.0;
    std::optional<RealGrid> grad_prediction;
    std::optional<FeatureMap> grad_features;
    std::uint32_t skipped = 0;
};

struct LossWeights {
    double lambda = 0.8;          // contrastive weight
    double beta = 0.8;            // prototype correlation weight
    double tau = 0.07;            // InfoNCE temperature
    std::vector<int> scales = {1, 3};
    int samples_per_class = 64;
};

/// Column-wise and row-wise maxima of an H x W map.
std::pair<std::vector<double>, std::vector<double>> project_axes(const RealGrid& map);

/// Two-axis soft-dice distance between the projections of the prediction and
/// of the location label. Gradient reaches the prediction through the first
/// arg-max cell of each row/column.
LossResult projection_loss(const RealGrid& prediction, const MaskGrid& location);

/// Cross-entropy toward 1 restricted to high-confidence foreground pixels.
/// Empty foreground -> value 0 with a zero gradient and the topo skip flag.
LossResult topo_loss(const RealGrid& prediction, const MaskGrid& foreground);

/// projection_loss + topo_loss; gradients add.
LossResult alignment_loss(const RealGrid& prediction, const MaskGrid& location,
                          const MaskGrid& foreground);

/// Dense binary cross-entropy against a full mask target, averaged over all
/// pixels. Used by the pixel-to-pixel training mode.
LossResult dense_bce_loss(const RealGrid& prediction, const MaskGrid& target);

/// One sampled patch embedding: its center pixel and the normalized k x k
/// window average (plus the pre-normalization vector the backward pass needs).
struct PatchEmbedding {
    int cy = 0, cx = 0;
    std::vector<double> raw;         // window average before normalization
    std::vector<double> normalized;  // raw / (||raw|| + eps)
};

/// Uniform sample (without replacement) of patch embeddings whose full k x k
/// window lies inside `region`. Fewer eligible centers than requested returns
/// all of them; empty region returns an empty list.
std::vector<PatchEmbedding> sample_patch_embeddings(const FeatureMap& features,
                                                    const MaskGrid& region, int k, int n,
                                                    Rng& rng);

/// Multi-scale InfoNCE over patch embeddings: anchors and positives from the
/// foreground region, negatives from the background region, mean over anchors
/// then over scales. Gradient flows through normalization and window pooling
/// back to the feature map.
LossResult contrastive_loss(const FeatureMap& features, const MaskGrid& foreground,
                            const MaskGrid& background, const LossWeights& weights, Rng& rng);

/// L2-normalized masked spatial mean of the feature map over a region.
/// Empty region -> nullopt (missing prototype).
std::optional<std::vector<double>> region_prototype(const FeatureMap& features,
                                                    const MaskGrid& region);

/// Rectified cosine similarity of every feature vector to the prototype.
RealGrid correlation_map(const FeatureMap& features, const std::vector<double>& prototype);

/// Symmetric pixel-mean cross-entropy between the foreground correlation map
/// and the complement of the background one (their mutual-exclusivity
/// reading). Returns gradients with respect to both input maps.
struct MapPairGrad {
    double value = 0.0;
    RealGrid grad_corr_fg;
    RealGrid grad_corr_bg;
};
MapPairGrad correlation_consistency_loss(const RealGrid& corr_fg, const RealGrid& corr_bg);

/// Soft dice between the prediction and the fused correlation map (upsampled
/// nearest-neighbor to the prediction resolution). Both all-zero -> 0.
struct SegConsistencyGrad {
    double value = 0.0;
    RealGrid grad_prediction;
    RealGrid grad_correlation;
};
SegConsistencyGrad correlation_seg_loss(const RealGrid& prediction, const RealGrid& fused_corr);

/// Full prototype correlation loss: consistency between the two prototype
/// correlation maps plus dice agreement of their fusion with the prediction.
/// Gradients flow through the prototypes (no stop-gradient). Regions are
/// expected at feature resolution. Missing prototype -> skipped result.
LossResult prototype_correlation_loss(const FeatureMap& features, const RealGrid& prediction,
                                      const MaskGrid& foreground, const MaskGrid& background);

/// alignment + lambda * contrastive + beta * prototype-correlation.
/// The bundle is given at image resolution; foreground/background are
/// min-pooled (and only used) at feature resolution. Zero weights skip the
/// corresponding term entirely.
LossResult total_loss(const RealGrid& prediction, const FeatureMap& features,
                      const LabelBundle& bundle, const LossWeights& weights, Rng& rng);

}  // namespace wsseg
