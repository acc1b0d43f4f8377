#include "drct/data/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "json.hpp"

#include "drct/data/bicubic.hpp"
#include "drct/data/image_io.hpp"

namespace drct::data {

namespace fs = std::filesystem;
using nlohmann::json;

uint64_t fnv1a_file_hash(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    uint64_t h = 14695981039346656037ull;
    char buf[4096];
    while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
        for (std::streamsize i = 0; i < is.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
        if (!is) break;
    }
    return h;
}

DatasetManifest scan_dataset(const std::string& root, int scale, Split split,
                             const std::string& cache_dir) {
    fs::path hr_dir = fs::path(root) / "HR";
    if (!fs::is_directory(hr_dir))
        throw std::runtime_error("dataset: missing HR directory under '" + root + "'");
    fs::path lr_dir = fs::path(root) / "LR_bicubic" / ("X" + std::to_string(scale));

    std::vector<std::string> hr_files;
    std::set<std::string> seen;
    for (const auto& e : fs::directory_iterator(hr_dir)) {
        if (!e.is_regular_file() || e.path().extension() != ".png") continue;
        std::string p = e.path().string();
        if (!seen.insert(p).second)
            throw std::runtime_error("dataset: duplicate path '" + p + "'");
        hr_files.push_back(p);
    }
    std::sort(hr_files.begin(), hr_files.end());

    DatasetManifest m;
    m.split = split;
    m.scale = scale;
    for (const auto& hr : hr_files) {
        ManifestEntry e;
        e.hr_path = hr;
        e.scale = scale;
        if (fs::is_directory(lr_dir)) {
            std::string stem = fs::path(hr).stem().string();
            // benchmark convention "<stem>x{s}.png", plain "<stem>.png" fallback
            fs::path cand1 = lr_dir / (stem + "x" + std::to_string(scale) + ".png");
            fs::path cand2 = lr_dir / (stem + ".png");
            if (fs::exists(cand1)) e.lr_path = cand1.string();
            else if (fs::exists(cand2)) e.lr_path = cand2.string();
        }
        m.entries.push_back(std::move(e));
    }

    if (!cache_dir.empty()) {
        json j;
        j["root"] = root;
        j["scale"] = scale;
        json arr = json::array();
        for (const auto& e : m.entries)
            arr.push_back({{"hr", e.hr_path},
                           {"lr", e.lr_path},
                           {"hr_hash", fnv1a_file_hash(e.hr_path)}});
        j["entries"] = std::move(arr);
        fs::create_directories(cache_dir);
        std::ofstream os(fs::path(cache_dir) /
                         ("manifest_x" + std::to_string(scale) + ".json"));
        os << j.dump(2) << "\n";
    }
    return m;
}

ImagePair load_pair(const ManifestEntry& entry) {
    ImagePair pair;
    pair.hr = read_png(entry.hr_path);
    int H = pair.hr.dim(2), W = pair.hr.dim(3);
    if (!entry.lr_path.empty()) {
        pair.lr = read_png(entry.lr_path);
        if (pair.lr.dim(2) != H / entry.scale || pair.lr.dim(3) != W / entry.scale)
            throw std::runtime_error("dataset: LR size mismatch for '" + entry.lr_path +
                                     "'");
    } else {
        pair.lr = resize_bicubic(pair.hr, H / entry.scale, W / entry.scale,
                                 /*antialias=*/true);
    }
    return pair;
}

Tensor<float> dihedral_transform(const Tensor<float>& img, int rot90, bool hflip) {
    const int B = img.dim(0), C = img.dim(1), H = img.dim(2), W = img.dim(3);
    rot90 = ((rot90 % 4) + 4) % 4;
    const bool swap = rot90 % 2 == 1;
    const int Ho = swap ? W : H, Wo = swap ? H : W;
    Tensor<float> out({B, C, Ho, Wo});
    for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
            const float* src = img.data() + (static_cast<int64_t>(b) * C + c) * H * W;
            float* dst = out.data() + (static_cast<int64_t>(b) * C + c) * Ho * Wo;
            for (int y = 0; y < Ho; ++y)
                for (int x = 0; x < Wo; ++x) {
                    int sx = x, sy = y;
                    switch (rot90) {  // counterclockwise rotation
                        case 0: break;
                        case 1: sy = x; sx = W - 1 - y; break;
                        case 2: sy = H - 1 - y; sx = W - 1 - x; break;
                        case 3: sy = H - 1 - x; sx = y; break;
                    }
                    if (hflip) sx = W - 1 - sx;
                    dst[static_cast<int64_t>(y) * Wo + x] =
                        src[static_cast<int64_t>(sy) * W + sx];
                }
        }
    return out;
}

Tensor<float> dihedral_inverse(const Tensor<float>& img, int rot90, bool hflip) {
    // forward is rotate(flip(x)); invert as flip(rotate_back(x))
    Tensor<float> t = dihedral_transform(img, (4 - (((rot90 % 4) + 4) % 4)) % 4, false);
    return hflip ? dihedral_transform(t, 0, true) : t;
}

std::mt19937_64 rng_for_sample(uint64_t seed, int64_t sample_index) {
    uint64_t mixed = seed ^ (0x9e3779b97f4a7c15ull * static_cast<uint64_t>(sample_index + 1));
    std::mt19937_64 rng(mixed);
    rng.discard(7);
    return rng;
}

std::optional<ImagePair> sample_patch(const ImagePair& pair, const PatchSpec& spec,
                                      const AugmentationSpec& aug,
                                      std::mt19937_64& rng) {
    const int s = spec.scale;
    if (spec.hr_patch % s != 0)
        throw std::invalid_argument("sample_patch: hr_patch not divisible by scale");
    const int H = pair.hr.dim(2), W = pair.hr.dim(3);
    const int p = spec.hr_patch, lp = p / s;
    if (H < p || W < p) return std::nullopt;  // skip, never pad

    // HR-first crop at scale-divisible coordinates
    const int max_ly = pair.lr.dim(2) - lp, max_lx = pair.lr.dim(3) - lp;
    std::uniform_int_distribution<int> dy(0, max_ly), dx(0, max_lx);
    const int ly = dy(rng), lx = dx(rng);
    const int hy = ly * s, hx = lx * s;

    auto crop = [](const Tensor<float>& img, int y0, int x0, int size) {
        const int C = img.dim(1), Hc = img.dim(2), Wc = img.dim(3);
        (void)Hc;
        Tensor<float> out({1, C, size, size});
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x)
                    out[(static_cast<int64_t>(c) * size + y) * size + x] =
                        img[(static_cast<int64_t>(c) * Hc + y0 + y) * Wc + x0 + x];
        return out;
    };
    ImagePair out;
    out.hr = crop(pair.hr, hy, hx, p);
    out.lr = crop(pair.lr, ly, lx, lp);

    bool flip = false;
    int rot = 0;
    if (aug.hflip) flip = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
    if (!aug.rotations.empty()) {
        int pick = std::uniform_int_distribution<int>(
            0, static_cast<int>(aug.rotations.size()) - 1)(rng);
        rot = aug.rotations[static_cast<size_t>(pick)] / 90;
    }
    if (flip || rot) {
        out.hr = dihedral_transform(out.hr, rot, flip);
        out.lr = dihedral_transform(out.lr, rot, flip);
    }
    return out;
}

}  // namespace drct::data
