#pragma once

#include <string>
#include <vector>

#include "drct/model/network.hpp"

namespace drct::diag {

struct TapRecord {
    std::string name;
    int layer_index = 0;
    double g_min = 0.0;
    double g_max = 0.0;
};

/// Ordered per-tap feature extrema over one forward pass.
struct IntensityTrace {
    std::vector<TapRecord> taps;
    std::string input_id;
};

/// Sum over consecutive taps of |delta g_min| + |delta g_max|.
double g_index(const IntensityTrace& trace);

/// JSON trace file next to a rendered min/max-vs-depth chart.
void export_trace(const IntensityTrace& trace, const std::string& json_path);
IntensityTrace import_trace(const std::string& json_path);

/// Line chart of g_min/g_max vs depth for one or more traces.
void render_trace_chart(const std::vector<IntensityTrace>& traces,
                        const std::string& png_path);

/// One traced forward pass; capture does not perturb the forward output.
template <typename T>
IntensityTrace record_trace(const model::Drct<T>& net, const Tensor<T>& lr,
                            model::TapLevel level, const std::string& input_id = "") {
    IntensityTrace trace;
    trace.input_id = input_id;
    model::TapFn<T> tap = [&trace](const std::string& name, int idx,
                                   const Tensor<T>& feat) {
        T mn, mx;
        simd::minmax(feat.data(), static_cast<size_t>(feat.numel()), &mn, &mx);
        trace.taps.push_back({name, idx, static_cast<double>(mn), static_cast<double>(mx)});
    };
    NoGradGuard ng;
    (void)net.forward(lr, level, &tap);
    if (trace.taps.empty()) throw std::invalid_argument("record_trace: empty tap set");
    return trace;
}

}  // namespace drct::diag
