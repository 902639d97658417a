#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace wsseg {

/// H x W binary raster. Cells are exactly 0 or 1; row-major storage.
struct MaskGrid {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> cells;

    MaskGrid() = default;
    MaskGrid(int h, int w, std::uint8_t fill = 0)
        : height(h), width(w), cells(static_cast<std::size_t>(h) * w, fill) {
        if (h <= 0 || w <= 0) throw std::invalid_argument("MaskGrid: non-positive dimensions");
    }

    std::uint8_t& at(int y, int x) { return cells[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int y, int x) const { return cells[static_cast<std::size_t>(y) * width + x]; }

    bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }

    std::size_t count() const {
        std::size_t n = 0;
        for (auto c : cells) n += c;
        return n;
    }
    bool empty_mask() const { return count() == 0; }

    bool same_shape(const MaskGrid& o) const { return height == o.height && width == o.width; }

    bool operator==(const MaskGrid& o) const = default;
};

/// H x W grid of doubles: images, probability maps, correlation maps, projections' source.
struct RealGrid {
    int height = 0;
    int width = 0;
    std::vector<double> values;

    RealGrid() = default;
    RealGrid(int h, int w, double fill = 0.0)
        : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {
        if (h <= 0 || w <= 0) throw std::invalid_argument("RealGrid: non-positive dimensions");
    }

    double& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
    double at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }

    std::size_t size() const { return values.size(); }
    bool same_shape(const RealGrid& o) const { return height == o.height && width == o.width; }
};

/// C x H x W feature tensor, channel-major.
struct FeatureMap {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> values;

    FeatureMap() = default;
    FeatureMap(int c, int h, int w, double fill = 0.0)
        : channels(c), height(h), width(w),
          values(static_cast<std::size_t>(c) * h * w, fill) {
        if (c <= 0 || h <= 0 || w <= 0) throw std::invalid_argument("FeatureMap: non-positive dimensions");
    }

    double& at(int c, int y, int x) {
        return values[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return values[(static_cast<std::size_t>(c) * height + y) * width + x];
    }

    std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
    std::size_t size() const { return values.size(); }
    bool same_shape(const FeatureMap& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
};

inline void require_same_shape(const MaskGrid& a, const MaskGrid& b, const char* where) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(where) + ": mask dimension mismatch");
}

inline MaskGrid mask_and(const MaskGrid& a, const MaskGrid& b) {
    require_same_shape(a, b, "mask_and");
    MaskGrid out(a.height, a.width);
    for (std::size_t i = 0; i < a.cells.size(); ++i) out.cells[i] = a.cells[i] & b.cells[i];
    return out;
}

inline MaskGrid mask_or(const MaskGrid& a, const MaskGrid& b) {
    require_same_shape(a, b, "mask_or");
    MaskGrid out(a.height, a.width);
    for (std::size_t i = 0; i < a.cells.size(); ++i) out.cells[i] = a.cells[i] | b.cells[i];
    return out;
}

inline MaskGrid mask_not(const MaskGrid& a) {
    MaskGrid out(a.height, a.width);
    for (std::size_t i = 0; i < a.cells.size(); ++i) out.cells[i] = a.cells[i] ? 0 : 1;
    return out;
}

inline bool mask_subset(const MaskGrid& a, const MaskGrid& b) {
    require_same_shape(a, b, "mask_subset");
    for (std::size_t i = 0; i < a.cells.size(); ++i)
        if (a.cells[i] && !b.cells[i]) return false;
    return true;
}

/// Block min-pool by an integer factor: output cell is 1 only if every covered pixel is 1.
MaskGrid downsample_min(const MaskGrid& m, int factor);

/// Block max-pool by an integer factor: output cell is 1 if any covered pixel is 1.
MaskGrid downsample_max(const MaskGrid& m, int factor);

/// Nearest-neighbor upsample of a real grid by an integer factor.
RealGrid upsample_nearest(const RealGrid& g, int factor);

}  // namespace wsseg
