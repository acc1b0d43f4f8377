#pragma once

#include "drct/data/dataset.hpp"
#include "drct/eval/ensemble.hpp"
#include "drct/eval/metrics.hpp"

namespace drct::eval {

/// Runs the benchmark protocol over a manifest: per-image PSNR/SSIM with a
/// 2*scale border crop, order-stable by filename. Unreadable entries are
/// listed in `skipped` (callers should exit nonzero when nonempty).
MetricReport run_benchmark(const SrFn& forward, const data::DatasetManifest& manifest,
                           int scale, bool tta);

}  // namespace drct::eval
