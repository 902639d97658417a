#pragma once

#include <optional>
#include <vector>

#include "wsseg/grid.hpp"

namespace wsseg {

/// Per-image metric row plus corpus aggregates. Means and standard deviations
/// (population form, so a single image reports std 0) cover the same image
/// set for all four metrics.
struct MetricsSummary {
    double mean = 0.0;
    double stddev = 0.0;
};

struct MetricsReport {
    std::vector<double> iou;
    std::vector<double> dsc;
    std::vector<double> precision;
    std::vector<double> hd95;
    MetricsSummary iou_summary, dsc_summary, precision_summary, hd95_summary;
};

/// |A n B| / |A u B|; both masks empty counts as perfect agreement (1).
double iou(const MaskGrid& a, const MaskGrid& b);

/// 2|A n B| / (|A| + |B|); both empty -> 1.
double dsc(const MaskGrid& a, const MaskGrid& b);

/// |A n B| / |A| with A the prediction. Empty prediction -> nullopt.
std::optional<double> prediction_precision(const MaskGrid& prediction, const MaskGrid& gt);

/// Boundary pixels: mask pixels with a zero 4-neighbor or touching the image edge.
MaskGrid boundary_mask(const MaskGrid& mask);

/// Symmetric percentile Hausdorff distance between the two boundaries,
/// Euclidean, percentile with linear interpolation (q = 95 by default,
/// q = 100 recovers the plain Hausdorff distance). Exactly one empty mask
/// returns the image diagonal as a worst-case sentinel; both empty -> 0.
double hd95(const MaskGrid& a, const MaskGrid& b, double percentile = 95.0);

/// Squared Euclidean distance from every pixel to the nearest set pixel of
/// `source` (two-pass lower-envelope transform). Source empty -> all +inf.
RealGrid squared_distance_transform(const MaskGrid& source);

/// Binarize predictions at `threshold` (>=) and aggregate all four metrics.
MetricsReport corpus_report(const std::vector<RealGrid>& predictions,
                            const std::vector<MaskGrid>& gts, double threshold = 0.5);

MaskGrid binarize(const RealGrid& prediction, double threshold = 0.5);

MetricsSummary summarize(const std::vector<double>& values);

}  // namespace wsseg
