#include "drct/diag/trace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

#include "drct/data/image_io.hpp"

namespace drct::diag {

using nlohmann::json;

double g_index(const IntensityTrace& trace) {
    if (trace.taps.size() < 2)
        throw std::invalid_argument("g_index: need at least two taps");
    double gi = 0.0;
    for (size_t i = 1; i < trace.taps.size(); ++i) {
        gi += std::fabs(trace.taps[i].g_min - trace.taps[i - 1].g_min);
        gi += std::fabs(trace.taps[i].g_max - trace.taps[i - 1].g_max);
    }
    return gi;
}

void export_trace(const IntensityTrace& trace, const std::string& json_path) {
    json j;
    j["input_id"] = trace.input_id;
    json arr = json::array();
    for (const auto& t : trace.taps)
        arr.push_back({{"name", t.name},
                       {"index", t.layer_index},
                       {"min", t.g_min},
                       {"max", t.g_max}});
    j["taps"] = std::move(arr);
    std::ofstream os(json_path);
    if (!os) throw std::runtime_error("export_trace: cannot write '" + json_path + "'");
    os << j.dump(2) << "\n";
}

IntensityTrace import_trace(const std::string& json_path) {
    std::ifstream is(json_path);
    if (!is) throw std::runtime_error("import_trace: cannot open '" + json_path + "'");
    json j = json::parse(is);
    IntensityTrace trace;
    trace.input_id = j.value("input_id", std::string());
    for (const auto& t : j.at("taps"))
        trace.taps.push_back({t.at("name").get<std::string>(), t.at("index").get<int>(),
                              t.at("min").get<double>(), t.at("max").get<double>()});
    return trace;
}

namespace {

struct Canvas {
    int w, h;
    std::vector<unsigned char> rgb;
    Canvas(int width, int height) : w(width), h(height), rgb(static_cast<size_t>(w) * h * 3, 255) {}
    void put(int x, int y, unsigned char r, unsigned char g, unsigned char b) {
        if (x < 0 || x >= w || y < 0 || y >= h) return;
        size_t o = (static_cast<size_t>(y) * w + x) * 3;
        rgb[o] = r;
        rgb[o + 1] = g;
        rgb[o + 2] = b;
    }
    void line(int x0, int y0, int x1, int y1, unsigned char r, unsigned char g,
              unsigned char b) {
        int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
        int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1, err = dx + dy;
        while (true) {
            put(x0, y0, r, g, b);
            if (x0 == x1 && y0 == y1) break;
            int e2 = 2 * err;
            if (e2 >= dy) { err += dy; x0 += sx; }
            if (e2 <= dx) { err += dx; y0 += sy; }
        }
    }
};

}  // namespace

void render_trace_chart(const std::vector<IntensityTrace>& traces,
                        const std::string& png_path) {
    if (traces.empty()) throw std::invalid_argument("render_trace_chart: no traces");
    const int W = 720, H = 480, ml = 50, mr = 20, mt = 20, mb = 40;
    Canvas cv(W, H);

    double lo = 0.0, hi = 0.0;
    size_t max_taps = 0;
    bool first = true;
    for (const auto& tr : traces)
        for (const auto& t : tr.taps) {
            if (first) { lo = t.g_min; hi = t.g_max; first = false; }
            lo = std::min(lo, t.g_min);
            hi = std::max(hi, t.g_max);
            max_taps = std::max(max_taps, tr.taps.size());
        }
    if (hi - lo < 1e-12) { hi += 1.0; lo -= 1.0; }

    auto px = [&](size_t i, size_t n) {
        return ml + static_cast<int>((W - ml - mr) * (n > 1 ? double(i) / (n - 1) : 0.5));
    };
    auto py = [&](double v) {
        return H - mb - static_cast<int>((H - mt - mb) * (v - lo) / (hi - lo));
    };

    cv.line(ml, mt, ml, H - mb, 0, 0, 0);
    cv.line(ml, H - mb, W - mr, H - mb, 0, 0, 0);
    // one tick per tap on the depth axis
    for (size_t i = 0; i < max_taps; ++i)
        cv.line(px(i, max_taps), H - mb, px(i, max_taps), H - mb + 5, 0, 0, 0);

    const unsigned char palette[4][3] = {{200, 40, 40}, {40, 90, 200}, {30, 150, 60}, {160, 90, 20}};
    for (size_t k = 0; k < traces.size(); ++k) {
        const auto& taps = traces[k].taps;
        const auto* col = palette[k % 4];
        for (size_t i = 1; i < taps.size(); ++i) {
            cv.line(px(i - 1, taps.size()), py(taps[i - 1].g_min), px(i, taps.size()),
                    py(taps[i].g_min), col[0], col[1], col[2]);
            cv.line(px(i - 1, taps.size()), py(taps[i - 1].g_max), px(i, taps.size()),
                    py(taps[i].g_max), col[0], col[1], col[2]);
        }
    }
    data::write_png_rgb8(png_path, cv.rgb.data(), W, H);
}

}  // namespace drct::diag
