#include "drct/data/image_io.hpp"

#include <png.h>

#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace drct::data {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

Tensor<float> read_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw ImageIoError("png: cannot open '" + path + "'");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                             nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) throw ImageIoError("png: allocation failure");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ImageIoError("png: failed to decode '" + path + "'");
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    const int depth = png_get_bit_depth(png, info);
    if (depth == 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ImageIoError("png: 16-bit input not supported ('" + path + "')");
    }
    const int color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    if (depth < 8) png_set_expand(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    std::vector<unsigned char> rowbuf(static_cast<size_t>(width) * 3);
    Tensor<float> out({1, 3, height, width});
    for (int y = 0; y < height; ++y) {
        png_read_row(png, rowbuf.data(), nullptr);
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < 3; ++c)
                out[(static_cast<int64_t>(c) * height + y) * width + x] =
                    rowbuf[static_cast<size_t>(x) * 3 + c] / 255.0f;
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

void write_png_rgb8(const std::string& path, const unsigned char* rgb, int width,
                    int height) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw ImageIoError("png: cannot open '" + path + "' for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                              nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) throw ImageIoError("png: allocation failure");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw ImageIoError("png: failed to encode '" + path + "'");
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width),
                 static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < height; ++y)
        png_write_row(png, const_cast<png_bytep>(rgb + static_cast<size_t>(y) * width * 3));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void write_png(const std::string& path, const Tensor<float>& img) {
    const Tensor<float>* t = &img;
    Tensor<float> squeezed;
    if (img.rank() == 4 && img.dim(0) == 1) {
        squeezed = img.reshaped({img.dim(1), img.dim(2), img.dim(3)});
        t = &squeezed;
    }
    if (t->rank() != 3 || t->dim(0) != 3)
        throw ImageIoError("png: expected a [3,H,W] image, got " +
                           Tensor<float>::shape_str(img.shape()));
    const int H = t->dim(1), W = t->dim(2);
    std::vector<unsigned char> rgb(static_cast<size_t>(H) * W * 3);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < 3; ++c) {
                float v = (*t)[(static_cast<int64_t>(c) * H + y) * W + x];
                int q = static_cast<int>(std::lround(v * 255.0f));
                rgb[(static_cast<size_t>(y) * W + x) * 3 + c] =
                    static_cast<unsigned char>(std::clamp(q, 0, 255));
            }
    write_png_rgb8(path, rgb.data(), W, H);
}

}  // namespace drct::data
