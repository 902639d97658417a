#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wsseg/grid.hpp"

namespace wsseg {

/// 8-bit grayscale codecs. Writing quantizes to k/255; reading returns
/// exactly k/255, so quantized images round-trip bit-exactly.
RealGrid read_image_gray(const std::string& path);  // PNG / JPEG / PGM, by magic bytes
void write_png_gray(const std::string& path, const RealGrid& image);

void write_png_mask(const std::string& path, const MaskGrid& mask);  // 0 / 255
MaskGrid read_mask(const std::string& path);                          // >= 128 -> 1

struct RgbImage {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;  // interleaved r,g,b

    RgbImage() = default;
    RgbImage(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3) {}
    std::uint8_t& at(int y, int x, int c) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    std::uint8_t at(int y, int x, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
};
void write_png_rgb(const std::string& path, const RgbImage& image);
RgbImage read_png_rgb(const std::string& path);

/// Minimal binary P5 codec, kept libpng-free for quick dumps.
void write_pgm(const std::string& path, const RealGrid& image);
RealGrid read_pgm(const std::string& path);

}  // namespace wsseg
