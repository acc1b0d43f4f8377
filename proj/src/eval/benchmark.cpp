#include "drct/eval/benchmark.hpp"

#include <filesystem>

namespace drct::eval {

MetricReport run_benchmark(const SrFn& forward, const data::DatasetManifest& manifest,
                           int scale, bool tta) {
    MetricReport report;
    report.scale = scale;
    report.crop_pixels = 2 * scale;
    report.tta = tta;

    for (const auto& entry : manifest.entries) {
        std::string name = std::filesystem::path(entry.hr_path).filename().string();
        data::ImagePair pair;
        try {
            pair = data::load_pair(entry);
        } catch (const std::exception&) {
            report.skipped.push_back(entry.hr_path);
            continue;
        }
        Tensor<float> sr = tta ? self_ensemble(forward, pair.lr) : forward(pair.lr);
        // SR of floor-divided LR can fall short of the HR size by a remainder
        // row/column; compare on the common region
        const int H = std::min(sr.dim(2), pair.hr.dim(2));
        const int W = std::min(sr.dim(3), pair.hr.dim(3));
        auto clip = [&](const Tensor<float>& t) {
            Tensor<float> out({1, t.dim(1), H, W});
            for (int c = 0; c < t.dim(1); ++c)
                for (int y = 0; y < H; ++y)
                    for (int x = 0; x < W; ++x)
                        out[(static_cast<int64_t>(c) * H + y) * W + x] =
                            t[(static_cast<int64_t>(c) * t.dim(2) + y) * t.dim(3) + x];
            return out;
        };
        Tensor<float> srx = clip(sr), hrx = clip(pair.hr);
        ImageMetrics m;
        m.name = name;
        m.psnr_db = psnr(srx, hrx, report.crop_pixels);
        m.ssim = ssim(srx, hrx, report.crop_pixels);
        report.per_image.push_back(std::move(m));
    }
    if (!report.per_image.empty()) {
        for (const auto& m : report.per_image) {
            report.mean_psnr += m.psnr_db;
            report.mean_ssim += m.ssim;
        }
        report.mean_psnr /= static_cast<double>(report.per_image.size());
        report.mean_ssim /= static_cast<double>(report.per_image.size());
    }
    return report;
}

}  // namespace drct::eval
