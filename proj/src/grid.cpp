#include "wsseg/grid.hpp"

namespace wsseg {

namespace {
void check_factor(int h, int w, int factor, const char* where) {
    if (factor <= 0) throw std::invalid_argument(std::string(where) + ": factor must be positive");
    if (h % factor != 0 || w % factor != 0)
        throw std::invalid_argument(std::string(where) + ": factor must divide dimensions");
}
}  // namespace

MaskGrid downsample_min(const MaskGrid& m, int factor) {
    check_factor(m.height, m.width, factor, "downsample_min");
    MaskGrid out(m.height / factor, m.width / factor);
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            std::uint8_t v = 1;
            for (int dy = 0; v && dy < factor; ++dy)
                for (int dx = 0; v && dx < factor; ++dx)
                    v = m.at(y * factor + dy, x * factor + dx);
            out.at(y, x) = v;
        }
    }
    return out;
}

MaskGrid downsample_max(const MaskGrid& m, int factor) {
    check_factor(m.height, m.width, factor, "downsample_max");
    MaskGrid out(m.height / factor, m.width / factor);
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            std::uint8_t v = 0;
            for (int dy = 0; !v && dy < factor; ++dy)
                for (int dx = 0; !v && dx < factor; ++dx)
                    v = m.at(y * factor + dy, x * factor + dx);
            out.at(y, x) = v;
        }
    }
    return out;
}

RealGrid upsample_nearest(const RealGrid& g, int factor) {
    if (factor <= 0) throw std::invalid_argument("upsample_nearest: factor must be positive");
    RealGrid out(g.height * factor, g.width * factor);
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) out.at(y, x) = g.at(y / factor, x / factor);
    return out;
}

}  // namespace wsseg
