#pragma once

#include <vector>

#include "drct/tensor.hpp"

namespace drct::data {

/// Keys cubic kernel (a = -0.5 reproduces the common imresize convention).
double bicubic_weight(double x, double a = -0.5);

/// Per-output-pixel taps along one axis. When downscaling with antialias the
/// kernel support is stretched by the scale ratio; weights are renormalized to
/// sum to 1 and source indices are clamped to the valid range.
struct AxisTaps {
    int tap_count = 0;
    std::vector<int> start;              // first source index per output pixel
    std::vector<double> weights;         // [out_size * tap_count]
};

AxisTaps bicubic_axis_taps(int in_size, int out_size, bool antialias);

/// Separable resample of a [B,C,H,W] tensor.
Tensor<float> resize_bicubic(const Tensor<float>& img, int out_h, int out_w,
                             bool antialias);

}  // namespace drct::data
