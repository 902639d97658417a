#include "wsseg/labelgen.hpp"

#include <algorithm>
#include <array>
#include <cstdint>

namespace wsseg {

namespace {

bool on_segment(std::int64_t px, std::int64_t py, std::int64_t ax, std::int64_t ay,
                std::int64_t bx, std::int64_t by) {
    const std::int64_t cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax);
    if (cross != 0) return false;
    return px >= std::min(ax, bx) && px <= std::max(ax, bx) &&
           py >= std::min(ay, by) && py <= std::max(ay, by);
}

/// Even-odd crossing test in exact integer arithmetic. Edges are treated as
/// half-open in y so rays through vertices are counted once.
bool inside_even_odd(std::int64_t px, std::int64_t py, const std::array<Point, 4>& poly) {
    bool inside = false;
    for (int i = 0, j = 3; i < 4; j = i++) {
        const std::int64_t xi = poly[i].x, yi = poly[i].y;
        const std::int64_t xj = poly[j].x, yj = poly[j].y;
        if ((yi > py) == (yj > py)) continue;
        // px < xi + (xj - xi) * (py - yi) / (yj - yi), cross-multiplied
        const std::int64_t dy = yj - yi;
        const std::int64_t lhs = (px - xi) * dy;
        const std::int64_t rhs = (xj - xi) * (py - yi);
        if (dy > 0 ? lhs < rhs : lhs > rhs) inside = !inside;
    }
    return inside;
}

}  // namespace

void validate_nodule_points(const NodulePoints& ann, int h, int w) {
    for (const Point& p : {ann.left, ann.right, ann.top, ann.bottom}) {
        if (p.x < 0 || p.x >= w || p.y < 0 || p.y >= h)
            throw std::invalid_argument("nodule point outside image bounds");
    }
    if (ann.left.x > ann.right.x) throw std::invalid_argument("left.x exceeds right.x");
    if (ann.top.y > ann.bottom.y) throw std::invalid_argument("top.y exceeds bottom.y");
}

MaskGrid bounding_box_mask(const NodulePoints& ann, int h, int w) {
    if (h <= 0 || w <= 0) throw std::invalid_argument("bounding_box_mask: empty image");
    validate_nodule_points(ann, h, w);
    const int x0 = std::min({ann.left.x, ann.right.x, ann.top.x, ann.bottom.x});
    const int x1 = std::max({ann.left.x, ann.right.x, ann.top.x, ann.bottom.x});
    const int y0 = std::min({ann.left.y, ann.right.y, ann.top.y, ann.bottom.y});
    const int y1 = std::max({ann.left.y, ann.right.y, ann.top.y, ann.bottom.y});
    MaskGrid out(h, w);
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) out.at(y, x) = 1;
    return out;
}

MaskGrid quadrilateral_mask(const NodulePoints& ann, int h, int w) {
    if (h <= 0 || w <= 0) throw std::invalid_argument("quadrilateral_mask: empty image");
    validate_nodule_points(ann, h, w);
    const std::array<Point, 4> poly = {ann.top, ann.right, ann.bottom, ann.left};
    const int x0 = std::min({poly[0].x, poly[1].x, poly[2].x, poly[3].x});
    const int x1 = std::max({poly[0].x, poly[1].x, poly[2].x, poly[3].x});
    const int y0 = std::min({poly[0].y, poly[1].y, poly[2].y, poly[3].y});
    const int y1 = std::max({poly[0].y, poly[1].y, poly[2].y, poly[3].y});
    MaskGrid out(h, w);
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            bool hit = inside_even_odd(x, y, poly);
            for (int i = 0, j = 3; !hit && i < 4; j = i++)
                hit = on_segment(x, y, poly[j].x, poly[j].y, poly[i].x, poly[i].y);
            out.at(y, x) = hit ? 1 : 0;
        }
    }
    return out;
}

MaskGrid complement_mask(const MaskGrid& mask) { return mask_not(mask); }

LabelBundle fuse_labels(const MaskGrid& box_mask, const MaskGrid& quad_mask,
                        const MaskGrid& outside_mask, const MaskGrid& prompt_mask) {
    require_same_shape(box_mask, quad_mask, "fuse_labels");
    require_same_shape(box_mask, outside_mask, "fuse_labels");
    require_same_shape(box_mask, prompt_mask, "fuse_labels");
    LabelBundle out;
    out.location = mask_or(box_mask, prompt_mask);
    out.foreground = mask_and(quad_mask, prompt_mask);
    out.background = mask_and(outside_mask, mask_not(prompt_mask));
    return out;
}

LabelBundle multi_nodule_fuse(const PointAnnotation& ann, const MaskGrid& prompt_mask,
                              int h, int w) {
    if (ann.nodules.empty())
        throw std::invalid_argument("multi_nodule_fuse: annotation has no nodules");
    MaskGrid boxes(h, w), quads(h, w);
    for (const NodulePoints& np : ann.nodules) {
        boxes = mask_or(boxes, bounding_box_mask(np, h, w));
        quads = mask_or(quads, quadrilateral_mask(np, h, w));
    }
    return fuse_labels(boxes, quads, mask_not(boxes), prompt_mask);
}

std::optional<double> label_precision(const MaskGrid& label, const MaskGrid& gt,
                                      bool as_background) {
    require_same_shape(label, gt, "label_precision");
    std::size_t total = 0, correct = 0;
    for (std::size_t i = 0; i < label.cells.size(); ++i) {
        if (!label.cells[i]) continue;
        ++total;
        const bool gt_fg = gt.cells[i] != 0;
        if (as_background ? !gt_fg : gt_fg) ++correct;
    }
    if (total == 0) return std::nullopt;
    return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace wsseg
