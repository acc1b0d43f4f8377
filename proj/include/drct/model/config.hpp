#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace drct::model {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Architectural hyperparameters. Full-scale values: C=180, K=6, M=6,
/// heads=6, window=16; the desk-scale preset in configs/ shrinks everything
/// so the suite runs on CPU.
struct ModelConfig {
    int scale = 4;          // 2, 3 or 4
    int in_channels = 3;
    int embed_dim = 180;    // C
    int num_rdg = 6;        // K
    int sdrcb_per_rdg = 6;  // M
    int dense_stages = 5;   // fixed
    int growth = 30;        // g; default C/6
    int num_heads = 6;
    int window_size = 16;
    double mlp_ratio = 2.0;
    double alpha = 0.2;
    double leaky_slope = 0.2;
    double img_range = 1.0;
    bool subtract_mean = true;      // per-channel DF2K RGB mean
    bool transition_3x3 = false;    // 1x1 transitions by default
    bool identity_init = false;     // zero every SDRCB final transition

    int stage_width(int stage_j) const {  // width entering stage j (1-based)
        return embed_dim + (stage_j - 1) * growth;
    }

    void validate() const {
        if (scale != 2 && scale != 3 && scale != 4)
            throw ConfigError("config: scale must be 2, 3 or 4 (got " +
                              std::to_string(scale) + ")");
        if (embed_dim <= 0 || num_rdg <= 0 || sdrcb_per_rdg <= 0 || growth <= 0)
            throw ConfigError("config: embed_dim/num_rdg/sdrcb_per_rdg/growth must be positive");
        if (dense_stages != 5)
            throw ConfigError("config: dense_stages is fixed at 5");
        if (num_heads <= 0 || window_size <= 0)
            throw ConfigError("config: num_heads/window_size must be positive");
        if (window_size % 2 != 0)
            throw ConfigError("config: window_size must be even (half-window shift)");
        if (alpha <= 0.0 || alpha > 1.0)
            throw ConfigError("config: alpha must lie in (0, 1]");
        for (int j = 0; j < dense_stages; ++j) {
            int width = embed_dim + j * growth;
            if (width % num_heads != 0)
                throw ConfigError("config: stage width " + std::to_string(width) +
                                  " (C + " + std::to_string(j) +
                                  "*g) not divisible by num_heads=" +
                                  std::to_string(num_heads));
        }
    }
};

}  // namespace drct::model
