#include "wsseg/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>

#include <jpeglib.h>
#include <png.h>

namespace wsseg {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::string& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw std::runtime_error("cannot open " + path);
    return f;
}

inline std::uint8_t quantize(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

std::vector<std::uint8_t> read_png_bytes(const std::string& path, bool want_rgb, int& height,
                                         int& width) {
    FilePtr fp = open_file(path, "rb");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png: allocation failure");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("png: allocation failure");
    }
    std::vector<std::uint8_t> data;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("png: failed to read " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    width = static_cast<int>(png_get_image_width(png, info));
    height = static_cast<int>(png_get_image_height(png, info));
    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);

    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (want_rgb) {
        if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
            png_set_gray_to_rgb(png);
    } else {
        if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
            color == PNG_COLOR_TYPE_PALETTE)
            png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    }
    png_read_update_info(png, info);

    const int channels = want_rgb ? 3 : 1;
    data.resize(static_cast<std::size_t>(height) * width * channels);
    rows.resize(height);
    for (int y = 0; y < height; ++y)
        rows[y] = data.data() + static_cast<std::size_t>(y) * width * channels;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return data;
}

void write_png_bytes(const std::string& path, const std::uint8_t* data, int height, int width,
                     bool rgb) {
    FilePtr fp = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png: allocation failure");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png: allocation failure");
    }
    std::vector<png_bytep> rows(height);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("png: failed to write " + path);
    }
    png_init_io(png, fp.get());
    const int channels = rgb ? 3 : 1;
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 rgb ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < height; ++y)
        rows[y] = const_cast<png_bytep>(data + static_cast<std::size_t>(y) * width * channels);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

struct JpegErr {
    jpeg_error_mgr mgr;
    std::jmp_buf jump;
};

void jpeg_throw(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErr*>(cinfo->err);
    std::longjmp(err->jump, 1);
}

std::vector<std::uint8_t> read_jpeg_gray_bytes(const std::string& path, int& height, int& width) {
    FilePtr fp = open_file(path, "rb");
    jpeg_decompress_struct cinfo;
    JpegErr err;
    std::vector<std::uint8_t> data;  // declared before setjmp so unwinding stays defined
    cinfo.err = jpeg_std_error(&err.mgr);
    err.mgr.error_exit = jpeg_throw;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw std::runtime_error("jpeg: failed to read " + path);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, fp.get());
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_GRAYSCALE;
    jpeg_start_decompress(&cinfo);
    width = static_cast<int>(cinfo.output_width);
    height = static_cast<int>(cinfo.output_height);
    data.resize(static_cast<std::size_t>(height) * width);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = data.data() + static_cast<std::size_t>(cinfo.output_scanline) * width;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return data;
}

enum class Format { kPng, kJpeg, kPgm, kUnknown };

Format sniff(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    unsigned char magic[8] = {};
    f.read(reinterpret_cast<char*>(magic), 8);
    if (magic[0] == 0x89 && magic[1] == 'P' && magic[2] == 'N' && magic[3] == 'G')
        return Format::kPng;
    if (magic[0] == 0xFF && magic[1] == 0xD8) return Format::kJpeg;
    if (magic[0] == 'P' && magic[1] == '5') return Format::kPgm;
    return Format::kUnknown;
}

RealGrid bytes_to_grid(const std::vector<std::uint8_t>& data, int height, int width) {
    RealGrid g(height, width);
    for (std::size_t i = 0; i < data.size(); ++i) g.values[i] = data[i] / 255.0;
    return g;
}

}  // namespace

RealGrid read_image_gray(const std::string& path) {
    int h = 0, w = 0;
    switch (sniff(path)) {
        case Format::kPng: {
            const auto data = read_png_bytes(path, false, h, w);
            return bytes_to_grid(data, h, w);
        }
        case Format::kJpeg: {
            const auto data = read_jpeg_gray_bytes(path, h, w);
            return bytes_to_grid(data, h, w);
        }
        case Format::kPgm:
            return read_pgm(path);
        default:
            throw std::runtime_error("unrecognized image format: " + path);
    }
}

void write_png_gray(const std::string& path, const RealGrid& image) {
    std::vector<std::uint8_t> data(image.values.size());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = quantize(image.values[i]);
    write_png_bytes(path, data.data(), image.height, image.width, false);
}

void write_png_mask(const std::string& path, const MaskGrid& mask) {
    std::vector<std::uint8_t> data(mask.cells.size());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = mask.cells[i] ? 255 : 0;
    write_png_bytes(path, data.data(), mask.height, mask.width, false);
}

MaskGrid read_mask(const std::string& path) {
    const RealGrid g = read_image_gray(path);
    MaskGrid m(g.height, g.width);
    for (std::size_t i = 0; i < g.values.size(); ++i) m.cells[i] = g.values[i] >= 128.0 / 255.0;
    return m;
}

void write_png_rgb(const std::string& path, const RgbImage& image) {
    if (image.pixels.size() != static_cast<std::size_t>(image.height) * image.width * 3)
        throw std::invalid_argument("write_png_rgb: pixel buffer size mismatch");
    write_png_bytes(path, image.pixels.data(), image.height, image.width, true);
}

RgbImage read_png_rgb(const std::string& path) {
    RgbImage img;
    const auto data = read_png_bytes(path, true, img.height, img.width);
    img.pixels = data;
    return img;
}

void write_pgm(const std::string& path, const RealGrid& image) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "P5\n" << image.width << " " << image.height << "\n255\n";
    for (const double v : image.values) f.put(static_cast<char>(quantize(v)));
    if (!f) throw std::runtime_error("failed to write " + path);
}

RealGrid read_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::string magic;
    f >> magic;
    if (magic != "P5") throw std::runtime_error("not a P5 pgm: " + path);
    int w = 0, h = 0, maxval = 0;
    f >> w >> h >> maxval;
    if (!f || w <= 0 || h <= 0 || maxval != 255)
        throw std::runtime_error("unsupported pgm header in " + path);
    f.get();  // single whitespace after maxval
    RealGrid g(h, w);
    std::vector<char> buf(static_cast<std::size_t>(w) * h);
    f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw std::runtime_error("truncated pgm: " + path);
    for (std::size_t i = 0; i < buf.size(); ++i)
        g.values[i] = static_cast<std::uint8_t>(buf[i]) / 255.0;
    return g;
}

}  // namespace wsseg
