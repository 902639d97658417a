// Brute-force reference implementations the fast library code is checked
// against. Everything here trades speed for obviousness: per-pixel loops,
// all-pairs distances, exact integer geometry.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "wsseg/grid.hpp"
#include "wsseg/labelgen.hpp"

namespace oracle {

using wsseg::MaskGrid;
using wsseg::NodulePoints;
using wsseg::Point;
using wsseg::RealGrid;

inline bool point_in_box(const NodulePoints& np, int x, int y) {
    const int x0 = std::min({np.left.x, np.right.x, np.top.x, np.bottom.x});
    const int x1 = std::max({np.left.x, np.right.x, np.top.x, np.bottom.x});
    const int y0 = std::min({np.left.y, np.right.y, np.top.y, np.bottom.y});
    const int y1 = std::max({np.left.y, np.right.y, np.top.y, np.bottom.y});
    return x >= x0 && x <= x1 && y >= y0 && y <= y1;
}

/// Collinearity plus projection-interval test, exact in 64-bit integers.
inline bool point_on_segment(std::int64_t px, std::int64_t py, std::int64_t ax, std::int64_t ay,
                             std::int64_t bx, std::int64_t by) {
    const std::int64_t len2 = (bx - ax) * (bx - ax) + (by - ay) * (by - ay);
    if (len2 == 0) return px == ax && py == ay;
    if ((bx - ax) * (py - ay) != (by - ay) * (px - ax)) return false;
    const std::int64_t dot = (px - ax) * (bx - ax) + (py - ay) * (by - ay);
    return dot >= 0 && dot <= len2;
}

/// Even-odd containment with a vertical ray (edges half-open in x), boundary
/// included. The library casts horizontally, so off-boundary parity agreeing
/// is a genuine cross-check.
inline bool point_in_quad(const NodulePoints& np, int x, int y) {
    const Point poly[4] = {np.top, np.right, np.bottom, np.left};
    for (int i = 0, j = 3; i < 4; j = i++)
        if (point_on_segment(x, y, poly[j].x, poly[j].y, poly[i].x, poly[i].y)) return true;
    bool inside = false;
    const std::int64_t px = x, py = y;
    for (int i = 0, j = 3; i < 4; j = i++) {
        const std::int64_t xi = poly[i].x, yi = poly[i].y;
        const std::int64_t xj = poly[j].x, yj = poly[j].y;
        if ((xi > px) == (xj > px)) continue;
        const std::int64_t dx = xj - xi;
        const std::int64_t lhs = (py - yi) * dx;
        const std::int64_t rhs = (yj - yi) * (px - xi);
        if (dx > 0 ? lhs < rhs : lhs > rhs) inside = !inside;
    }
    return inside;
}

/// Half-plane test for quads whose vertices are genuine extremes (convex,
/// consistently wound in screen coordinates). Returns nullopt when the point
/// sits exactly on a supporting line, where inclusiveness is a convention.
inline std::optional<bool> point_in_convex_quad(const NodulePoints& np, int x, int y) {
    const Point poly[4] = {np.top, np.right, np.bottom, np.left};
    bool boundary = false;
    for (int i = 0, j = 3; i < 4; j = i++) {
        const std::int64_t cross =
            static_cast<std::int64_t>(poly[i].x - poly[j].x) * (y - poly[j].y) -
            static_cast<std::int64_t>(poly[i].y - poly[j].y) * (x - poly[j].x);
        if (cross < 0) return false;
        if (cross == 0) boundary = true;
    }
    if (boundary) return std::nullopt;
    return true;
}

struct Counts {
    std::size_t a = 0, b = 0, inter = 0, uni = 0;
};

inline Counts count_sets(const MaskGrid& a, const MaskGrid& b) {
    Counts c;
    for (std::size_t i = 0; i < a.cells.size(); ++i) {
        const bool pa = a.cells[i] != 0, pb = b.cells[i] != 0;
        c.a += pa;
        c.b += pb;
        c.inter += pa && pb;
        c.uni += pa || pb;
    }
    return c;
}

inline double iou(const MaskGrid& a, const MaskGrid& b) {
    const Counts c = count_sets(a, b);
    if (c.uni == 0) return 1.0;
    return static_cast<double>(c.inter) / static_cast<double>(c.uni);
}

inline double dsc(const MaskGrid& a, const MaskGrid& b) {
    const Counts c = count_sets(a, b);
    if (c.a + c.b == 0) return 1.0;
    return 2.0 * static_cast<double>(c.inter) / static_cast<double>(c.a + c.b);
}

inline std::optional<double> precision(const MaskGrid& pred, const MaskGrid& gt) {
    const Counts c = count_sets(pred, gt);
    if (c.a == 0) return std::nullopt;
    return static_cast<double>(c.inter) / static_cast<double>(c.a);
}

inline std::vector<std::pair<int, int>> boundary_pixels(const MaskGrid& m) {
    std::vector<std::pair<int, int>> out;
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            if (!m.at(y, x)) continue;
            const bool edge = x == 0 || y == 0 || x == m.width - 1 || y == m.height - 1;
            if (edge || !m.at(y - 1, x) || !m.at(y + 1, x) || !m.at(y, x - 1) ||
                !m.at(y, x + 1))
                out.emplace_back(y, x);
        }
    }
    return out;
}

inline double percentile(std::vector<double> v, double q) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const double rank = q / 100.0 * (static_cast<double>(v.size()) - 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (rank - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// All-pairs directed boundary distances, no distance transform involved.
inline double hd95(const MaskGrid& a, const MaskGrid& b, double q = 95.0) {
    if (a.empty_mask() && b.empty_mask()) return 0.0;
    if (a.empty_mask() || b.empty_mask())
        return std::hypot(static_cast<double>(a.height), static_cast<double>(a.width));
    const auto ba = boundary_pixels(a);
    const auto bb = boundary_pixels(b);
    auto directed = [](const std::vector<std::pair<int, int>>& from,
                       const std::vector<std::pair<int, int>>& to) {
        std::vector<double> d;
        d.reserve(from.size());
        for (const auto& [fy, fx] : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& [ty, tx] : to)
                best = std::min(best, std::hypot(static_cast<double>(fy - ty),
                                                 static_cast<double>(fx - tx)));
            d.push_back(best);
        }
        return d;
    };
    return std::max(percentile(directed(ba, bb), q), percentile(directed(bb, ba), q));
}

inline RealGrid squared_edt(const MaskGrid& source) {
    RealGrid d(source.height, source.width);
    for (int y = 0; y < source.height; ++y) {
        for (int x = 0; x < source.width; ++x) {
            double best = std::numeric_limits<double>::infinity();
            for (int sy = 0; sy < source.height; ++sy)
                for (int sx = 0; sx < source.width; ++sx)
                    if (source.at(sy, sx))
                        best = std::min(
                            best, static_cast<double>((y - sy) * (y - sy) + (x - sx) * (x - sx)));
            d.at(y, x) = best;
        }
    }
    return d;
}

struct MeanStd {
    double mean = 0.0, stddev = 0.0;
};

inline MeanStd mean_std(const std::vector<double>& v) {
    MeanStd s;
    if (v.empty()) return s;
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(var / static_cast<double>(v.size()));
    return s;
}

/// 1 - 2*sum(min)/sum(p+l), the soft dice used on axis projections.
inline double min_dice(const std::vector<double>& p, const std::vector<double>& l) {
    double inter = 0.0, total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        inter += std::min(p[i], l[i]);
        total += p[i] + l[i];
    }
    if (total <= 0.0) return 0.0;
    return 1.0 - 2.0 * inter / total;
}

inline std::pair<std::vector<double>, std::vector<double>> axis_maxima(const RealGrid& g) {
    std::vector<double> px(g.width, -std::numeric_limits<double>::infinity());
    std::vector<double> py(g.height, -std::numeric_limits<double>::infinity());
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) {
            px[x] = std::max(px[x], g.at(y, x));
            py[y] = std::max(py[y], g.at(y, x));
        }
    return {px, py};
}

}  // namespace oracle
