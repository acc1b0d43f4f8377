#include "drct/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace drct::eval {

Tensor<float> quantize_8bit(const Tensor<float>& img) {
    Tensor<float> out(img.shape());
    for (int64_t i = 0; i < img.numel(); ++i) {
        float q = std::nearbyint(img[i] * 255.0f);
        out[i] = std::clamp(q, 0.0f, 255.0f);
    }
    return out;
}

Tensor<float> crop_border(const Tensor<float>& img, int pixels) {
    if (img.rank() != 4) throw std::invalid_argument("crop_border: expected [B,C,H,W]");
    if (pixels == 0) return img;
    const int B = img.dim(0), C = img.dim(1), H = img.dim(2), W = img.dim(3);
    if (2 * pixels >= std::min(H, W))
        throw std::invalid_argument("crop_border: crop of " + std::to_string(pixels) +
                                    " px exceeds image size");
    const int Ho = H - 2 * pixels, Wo = W - 2 * pixels;
    Tensor<float> out({B, C, Ho, Wo});
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < Ho; ++y)
                for (int x = 0; x < Wo; ++x)
                    out[((static_cast<int64_t>(b) * C + c) * Ho + y) * Wo + x] =
                        img[((static_cast<int64_t>(b) * C + c) * H + y + pixels) * W +
                            x + pixels];
    return out;
}

double psnr(const Tensor<float>& sr, const Tensor<float>& hr, int crop) {
    if (!sr.same_shape(hr)) throw std::invalid_argument("psnr: shape mismatch");
    Tensor<float> a = crop_border(quantize_8bit(sr), crop);
    Tensor<float> b = crop_border(quantize_8bit(hr), crop);
    double mse = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        double d = static_cast<double>(a[i]) - b[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.numel());
    if (mse <= 0.0) return 100.0;
    return std::min(100.0, 10.0 * std::log10(255.0 * 255.0 / mse));
}

namespace {

std::vector<double> gaussian_window_11() {
    std::vector<double> w(11);
    double sum = 0.0;
    for (int i = 0; i < 11; ++i) {
        double d = i - 5;
        w[static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
        sum += w[static_cast<size_t>(i)];
    }
    for (auto& v : w) v /= sum;
    return w;
}

// separable valid-mode filter, output (H-10) x (W-10)
std::vector<double> filter_valid(const std::vector<double>& img, int H, int W,
                                 const std::vector<double>& k) {
    const int Ho = H - 10, Wo = W - 10;
    std::vector<double> mid(static_cast<size_t>(H) * Wo);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < Wo; ++x) {
            double acc = 0.0;
            for (int t = 0; t < 11; ++t) acc += k[static_cast<size_t>(t)] * img[static_cast<size_t>(y) * W + x + t];
            mid[static_cast<size_t>(y) * Wo + x] = acc;
        }
    std::vector<double> out(static_cast<size_t>(Ho) * Wo);
    for (int y = 0; y < Ho; ++y)
        for (int x = 0; x < Wo; ++x) {
            double acc = 0.0;
            for (int t = 0; t < 11; ++t) acc += k[static_cast<size_t>(t)] * mid[static_cast<size_t>(y + t) * Wo + x];
            out[static_cast<size_t>(y) * Wo + x] = acc;
        }
    return out;
}

}  // namespace

double ssim(const Tensor<float>& sr, const Tensor<float>& hr, int crop) {
    if (!sr.same_shape(hr)) throw std::invalid_argument("ssim: shape mismatch");
    Tensor<float> a4 = crop_border(quantize_8bit(sr), crop);
    Tensor<float> b4 = crop_border(quantize_8bit(hr), crop);
    const int B = a4.dim(0), C = a4.dim(1), H = a4.dim(2), W = a4.dim(3);
    if (H < 11 || W < 11)
        throw std::invalid_argument("ssim: image smaller than the 11x11 window");
    const double C1 = (0.01 * 255) * (0.01 * 255);
    const double C2 = (0.03 * 255) * (0.03 * 255);
    const auto k = gaussian_window_11();

    double total = 0.0;
    int planes = 0;
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c, ++planes) {
            const int64_t off = (static_cast<int64_t>(b) * C + c) * H * W;
            std::vector<double> x(static_cast<size_t>(H) * W), y(static_cast<size_t>(H) * W);
            std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
            for (size_t i = 0; i < x.size(); ++i) {
                x[i] = a4[off + static_cast<int64_t>(i)];
                y[i] = b4[off + static_cast<int64_t>(i)];
                xx[i] = x[i] * x[i];
                yy[i] = y[i] * y[i];
                xy[i] = x[i] * y[i];
            }
            auto mx = filter_valid(x, H, W, k);
            auto my = filter_valid(y, H, W, k);
            auto mxx = filter_valid(xx, H, W, k);
            auto myy = filter_valid(yy, H, W, k);
            auto mxy = filter_valid(xy, H, W, k);
            double acc = 0.0;
            for (size_t i = 0; i < mx.size(); ++i) {
                double vx = mxx[i] - mx[i] * mx[i];
                double vy = myy[i] - my[i] * my[i];
                double cxy = mxy[i] - mx[i] * my[i];
                acc += ((2 * mx[i] * my[i] + C1) * (2 * cxy + C2)) /
                       ((mx[i] * mx[i] + my[i] * my[i] + C1) * (vx + vy + C2));
            }
            total += acc / static_cast<double>(mx.size());
        }
    return total / planes;
}

std::string MetricReport::to_table() const {
    std::ostringstream os;
    os << "image                          PSNR(dB)    SSIM\n";
    os << "----------------------------------------------------\n";
    char buf[128];
    for (const auto& m : per_image) {
        std::snprintf(buf, sizeof(buf), "%-30s %8.4f  %6.4f\n", m.name.c_str(),
                      m.psnr_db, m.ssim);
        os << buf;
    }
    os << "----------------------------------------------------\n";
    std::snprintf(buf, sizeof(buf), "%-30s %8.4f  %6.4f\n", "mean", mean_psnr, mean_ssim);
    os << buf;
    os << "crop: " << crop_pixels << " px (2 x scale), full RGB, x" << scale
       << (tta ? ", self-ensemble x8" : "") << "\n";
    for (const auto& s : skipped) os << "skipped: " << s << "\n";
    return os.str();
}

std::string MetricReport::to_json() const {
    nlohmann::json j;
    j["scale"] = scale;
    j["crop_pixels"] = crop_pixels;
    j["channel_mode"] = "rgb_full";
    j["tta"] = tta;
    j["mean_psnr"] = mean_psnr;
    j["mean_ssim"] = mean_ssim;
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& m : per_image)
        arr.push_back({{"name", m.name}, {"psnr", m.psnr_db}, {"ssim", m.ssim}});
    j["per_image"] = std::move(arr);
    j["skipped"] = skipped;
    return j.dump(2);
}

}  // namespace drct::eval
