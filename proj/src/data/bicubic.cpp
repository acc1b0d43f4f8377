#include "drct/data/bicubic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace drct::data {

double bicubic_weight(double x, double a) {
    x = std::fabs(x);
    if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
    if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
    return 0.0;
}

AxisTaps bicubic_axis_taps(int in_size, int out_size, bool antialias) {
    if (out_size < 1 || in_size < 1)
        throw std::invalid_argument("bicubic: sizes must be >= 1");
    const double scale = static_cast<double>(out_size) / in_size;
    const bool shrink = antialias && scale < 1.0;
    const double kscale = shrink ? scale : 1.0;
    const double support = 4.0 / kscale;  // kernel width after stretching

    AxisTaps taps;
    taps.tap_count = static_cast<int>(std::ceil(support)) + 2;
    taps.start.resize(static_cast<size_t>(out_size));
    taps.weights.assign(static_cast<size_t>(out_size) * taps.tap_count, 0.0);

    for (int o = 0; o < out_size; ++o) {
        // center of output pixel o mapped into input coordinates (0-based)
        const double u = (o + 0.5) / scale - 0.5;
        const int left = static_cast<int>(std::floor(u - support / 2.0)) + 1;
        double* w = taps.weights.data() + static_cast<size_t>(o) * taps.tap_count;
        double sum = 0.0;
        for (int t = 0; t < taps.tap_count; ++t) {
            double x = u - (left + t);
            w[t] = kscale * bicubic_weight(kscale * x);
            sum += w[t];
        }
        if (sum != 0.0)
            for (int t = 0; t < taps.tap_count; ++t) w[t] /= sum;
        taps.start[static_cast<size_t>(o)] = left;
    }
    return taps;
}

Tensor<float> resize_bicubic(const Tensor<float>& img, int out_h, int out_w,
                             bool antialias) {
    if (img.rank() != 4) throw std::invalid_argument("resize_bicubic: expected [B,C,H,W]");
    if (out_h < 1 || out_w < 1)
        throw std::invalid_argument("resize_bicubic: output dims must be >= 1");
    const int B = img.dim(0), C = img.dim(1), H = img.dim(2), W = img.dim(3);

    AxisTaps th = bicubic_axis_taps(H, out_h, antialias);
    AxisTaps tw = bicubic_axis_taps(W, out_w, antialias);

    // vertical pass then horizontal, double accumulation
    std::vector<double> mid(static_cast<size_t>(out_h) * W);
    Tensor<float> out({B, C, out_h, out_w});
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const float* plane = img.data() + (static_cast<int64_t>(b) * C + c) * H * W;
            for (int y = 0; y < out_h; ++y) {
                const double* wv = th.weights.data() + static_cast<size_t>(y) * th.tap_count;
                for (int x = 0; x < W; ++x) {
                    double acc = 0.0;
                    for (int t = 0; t < th.tap_count; ++t) {
                        int sy = std::clamp(th.start[static_cast<size_t>(y)] + t, 0, H - 1);
                        acc += wv[t] * plane[static_cast<int64_t>(sy) * W + x];
                    }
                    mid[static_cast<size_t>(y) * W + x] = acc;
                }
            }
            float* oplane = out.data() + (static_cast<int64_t>(b) * C + c) * out_h * out_w;
            for (int y = 0; y < out_h; ++y)
                for (int x = 0; x < out_w; ++x) {
                    const double* wh = tw.weights.data() + static_cast<size_t>(x) * tw.tap_count;
                    double acc = 0.0;
                    for (int t = 0; t < tw.tap_count; ++t) {
                        int sx = std::clamp(tw.start[static_cast<size_t>(x)] + t, 0, W - 1);
                        acc += wh[t] * mid[static_cast<size_t>(y) * W + sx];
                    }
                    oplane[static_cast<int64_t>(y) * out_w + x] = static_cast<float>(acc);
                }
        }
    return out;
}

}  // namespace drct::data
