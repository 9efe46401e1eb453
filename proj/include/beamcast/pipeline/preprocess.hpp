#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "beamcast/numcore/rng.hpp"
#include "beamcast/pipeline/image.hpp"

namespace beamcast::pipeline {

struct ImageNormConstants {
    std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
    std::array<float, 3> std{0.229f, 0.224f, 0.225f};

    static ImageNormConstants imagenet() { return {}; }
    void validate() const;
};

struct AugmentConfig {
    bool enabled = true;
    int pad = 16;
    double flip_probability = 0.5;

    void validate() const;
};

Image hflip(const Image& img);

/// Zero-pads `pad` pixels on every side and crops the original size at
/// (offset_y, offset_x) of the padded canvas.
Image pad_crop(const Image& img, int pad, int offset_y, int offset_x);

/// Train mode: flip with the configured probability, then pad and crop at a
/// uniform random offset. Eval mode (or augmentation disabled): identity.
Image augment_image(const Image& img, Rng& rng, bool train_mode, const AugmentConfig& cfg = {});

/// Per-channel (x - mean) / std.
Image normalize_image(const Image& img, const ImageNormConstants& c = ImageNormConstants::imagenet());
Image denormalize_image(const Image& img, const ImageNormConstants& c = ImageNormConstants::imagenet());

/// Bilinear resampling (align-corners off, half-pixel centres).
Image resize_bilinear(const Image& img, int height, int width);

using FeatureVec = std::array<float, 8>;

/// Min-max statistics fit on the training split only.
struct StructScaler {
    std::array<double, 8> min{};
    std::array<double, 8> max{};

    static StructScaler fit(std::span<const FeatureVec> train_features);

    /// (s - min) / (max - min); 0 for a constant feature. No clipping.
    FeatureVec apply(const FeatureVec& s) const;
};

struct SplitSpec {
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
};

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Seeded permutation of 0..n-1; first floor(fraction * n) go to train.
SplitIndices split_dataset(std::size_t n, const SplitSpec& spec);

/// Consecutive batches covering `indices` once; the last one may be short.
/// With `shuffle` the order is permuted by `rng` first.
std::vector<std::vector<std::size_t>> make_batches(std::span<const std::size_t> indices, std::size_t batch_size,
                                                   Rng& rng, bool shuffle);

} // namespace beamcast::pipeline
