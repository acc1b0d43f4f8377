#pragma once

#include <string>
#include <vector>

#include "drct/tensor.hpp"

namespace drct::eval {

/// Round + clamp unit-range values to the 0..255 grid (still stored as float).
Tensor<float> quantize_8bit(const Tensor<float>& img);

/// Central (H-2p) x (W-2p) region of a [B,C,H,W] tensor.
Tensor<float> crop_border(const Tensor<float>& img, int pixels);

/// PSNR in dB over full RGB of 8-bit-quantized images, border-cropped by
/// `crop` pixels; zero MSE is capped at 100 dB.
double psnr(const Tensor<float>& sr, const Tensor<float>& hr, int crop);

/// Single-scale SSIM: 11x11 Gaussian window sigma 1.5, K1=0.01 K2=0.03,
/// dynamic range 255, per-channel then averaged.
double ssim(const Tensor<float>& sr, const Tensor<float>& hr, int crop);

struct ImageMetrics {
    std::string name;
    double psnr_db = 0.0;
    double ssim = 0.0;
};

struct MetricReport {
    std::vector<ImageMetrics> per_image;
    std::vector<std::string> skipped;  // unreadable / missing files
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    int crop_pixels = 0;
    int scale = 0;
    bool tta = false;

    std::string to_table() const;
    std::string to_json() const;
};

}  // namespace drct::eval
