#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "drct/tensor.hpp"

namespace drct::data {

enum class Split { train, val, test };

struct ManifestEntry {
    std::string hr_path;
    std::string lr_path;  // empty = synthesize by bicubic downscale
    int scale = 4;
};

/// Paired HR/LR file listing for one directory tree. Layout:
/// <root>/HR/*.png with optional <root>/LR_bicubic/X{s}/ overrides.
struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    Split split = Split::train;
    int scale = 4;
};

/// Scans <root>, stable-sorted by path. Writes/refreshes a manifest cache
/// (manifest_x{s}.json with per-file content hashes) unless cache_dir is empty.
DatasetManifest scan_dataset(const std::string& root, int scale, Split split,
                             const std::string& cache_dir = "");

struct PatchSpec {
    int hr_patch = 256;
    int scale = 4;
};

struct AugmentationSpec {
    bool hflip = true;
    std::vector<int> rotations = {0, 90, 180, 270};
    uint64_t seed = 0;
};

/// HR/LR pair in memory, [1,3,H,W] unit range each.
struct ImagePair {
    Tensor<float> hr;
    Tensor<float> lr;
};

/// Loads (and if needed synthesizes) the pair for one manifest entry.
ImagePair load_pair(const ManifestEntry& entry);

/// Rotate by a multiple of 90 degrees counterclockwise and/or flip
/// horizontally; operates on [B,C,H,W].
Tensor<float> dihedral_transform(const Tensor<float>& img, int rot90, bool hflip);
Tensor<float> dihedral_inverse(const Tensor<float>& img, int rot90, bool hflip);

/// HR-first aligned crop plus shared augmentation. Returns nullopt (skip
/// policy) when the image is smaller than the patch.
std::optional<ImagePair> sample_patch(const ImagePair& pair, const PatchSpec& spec,
                                      const AugmentationSpec& aug, std::mt19937_64& rng);

/// Derived per-sample RNG so sampling is deterministic independent of worker
/// interleaving.
std::mt19937_64 rng_for_sample(uint64_t seed, int64_t sample_index);

uint64_t fnv1a_file_hash(const std::string& path);

}  // namespace drct::data
