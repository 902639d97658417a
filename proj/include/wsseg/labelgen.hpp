#pragma once

#include <optional>
#include <string>
#include <vector>

#include "wsseg/grid.hpp"

namespace wsseg {

/// Pixel coordinate, x = column, y = row.
struct Point {
    int x = 0;
    int y = 0;
    bool operator==(const Point&) const = default;
};

/// The four extreme points a reader marks on one nodule. Stored labeled, not
/// positional: left/right are the x extremes, top/bottom the y extremes.
struct NodulePoints {
    Point left, right, top, bottom;
    bool operator==(const NodulePoints&) const = default;
};

struct PointAnnotation {
    std::string image_id;
    std::vector<NodulePoints> nodules;
    bool operator==(const PointAnnotation&) const = default;
};

/// High-confidence label triple: location = box OR prompt mask,
/// foreground = quadrilateral AND prompt mask, background = everything the
/// location excludes.
struct LabelBundle {
    MaskGrid location;
    MaskGrid foreground;
    MaskGrid background;

    bool foreground_empty() const { return foreground.empty_mask(); }
};

/// Throws std::invalid_argument when a point lies outside [0,w) x [0,h) or
/// the left/right, top/bottom ordering is violated.
void validate_nodule_points(const NodulePoints& ann, int h, int w);

/// Axis-aligned bounding box of the four points, bounds inclusive.
MaskGrid bounding_box_mask(const NodulePoints& ann, int h, int w);

/// Quadrilateral with vertex order top -> right -> bottom -> left. A pixel is
/// inside when its integer coordinate passes an even-odd test or lies on an
/// edge; boundary pixels included so the quadrilateral stays within the box.
/// Degenerate (collinear) annotations rasterize to the segment itself.
MaskGrid quadrilateral_mask(const NodulePoints& ann, int h, int w);

/// Flip every cell. Involution.
MaskGrid complement_mask(const MaskGrid& mask);

/// Fuse geometric masks with the prompted-model mask:
///   location   = box OR prompt
///   foreground = quad AND prompt
///   background = outside AND NOT prompt
/// Callers must supply outside == NOT box and quad within box.
LabelBundle fuse_labels(const MaskGrid& box_mask, const MaskGrid& quad_mask,
                        const MaskGrid& outside_mask, const MaskGrid& prompt_mask);

/// Multi-nodule fusion: per-nodule boxes and quadrilaterals are unioned before
/// fusing; the outside mask is the complement of the union of boxes.
LabelBundle multi_nodule_fuse(const PointAnnotation& ann, const MaskGrid& prompt_mask,
                              int h, int w);

/// Fraction of label pixels that are correct: against gt foreground, or
/// against gt background when as_background is set. Empty label -> nullopt.
std::optional<double> label_precision(const MaskGrid& label, const MaskGrid& gt,
                                      bool as_background = false);

}  // namespace wsseg
