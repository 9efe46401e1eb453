#pragma once

#include <array>
#include <cstdint>

namespace beamcast::beamnet {

/// Architecture hyperparameters. Width fields set to 0 take their derived
/// defaults; `resolved()` applies those defaults and `scale_factor`.
struct ModelConfig {
    int image_size = 224;
    std::array<int, 4> conv_channels{64, 128, 256, 512};
    int embed_dim = 512;
    int num_heads = 8;
    int cross_heads = 8;
    int num_encoder_layers = 2;
    int encoder_ffn_hidden = 0; // 0 -> 4 * embed_dim
    int ffn_hidden = 0;         // fusion FFN; 0 -> 2 * embed_dim
    int classifier_hidden = 0;  // 0 -> embed_dim
    int num_beams = 64;
    double dropout = 0.5;
    double scale_factor = 1.0;
    // Off: the 8 structured features form one token. On: one token per feature.
    bool per_feature_tokens = false;

    /// Full-size network.
    static ModelConfig full() { return {}; }

    /// 64x64 images with every width scaled by 1/8.
    static ModelConfig desk()
    {
        ModelConfig c;
        c.image_size = 64;
        c.scale_factor = 0.125;
        return c;
    }

    /// Config used for the synthetic learnability task: 32x32 images, Q = 8.
    static ModelConfig toy()
    {
        ModelConfig c;
        c.image_size = 32;
        c.scale_factor = 0.125;
        c.num_beams = 8;
        return c;
    }

    /// Widths after defaults and scaling; scale_factor becomes 1.
    ModelConfig resolved() const;

    /// Throws ConfigError naming the offending field.
    void validate() const;

    int feature_map_size() const { return image_size / 16; }

    bool operator==(const ModelConfig&) const = default;
};

/// Number of learnable scalars, from the closed form:
///   conv blocks   sum_i 9*C_{i-1}*C_i + C_i + 2*C_i        (C_0 = 3, bias + BN scale/shift)
///   image FC      C_4 * (S/16)^2 * d + d
///   struct input  8*d + d, or 8*d + 8*d with per-feature tokens
///   encoder layer 4*d^2 + (d*F + F + F*d + d) + 4*d         (F = encoder FFN width)
///   cross-attn    4*d^2 + 2*d
///   fusion FFN    2d*H + H + H*2d + 2d
///   classifier    2d*C + C + C*Q + Q
std::int64_t parameter_count(const ModelConfig& config);

} // namespace beamcast::beamnet
