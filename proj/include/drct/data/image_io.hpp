#pragma once

#include <string>

#include "drct/tensor.hpp"

namespace drct::data {

struct ImageIoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// 8-bit PNG -> [1,3,H,W] floats in [0,1]. Gray and palette images are
/// expanded to RGB; 16-bit files are rejected.
Tensor<float> read_png(const std::string& path);

/// [1,3,H,W] or [3,H,W] unit-range floats -> 8-bit RGB PNG (round + clamp).
void write_png(const std::string& path, const Tensor<float>& img);

/// Raw 8-bit RGB rows (used by the chart renderer).
void write_png_rgb8(const std::string& path, const unsigned char* rgb, int width,
                    int height);

}  // namespace drct::data
