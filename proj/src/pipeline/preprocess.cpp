#include "beamcast/pipeline/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "beamcast/errors.hpp"

namespace beamcast::pipeline {

void ImageNormConstants::validate() const
{
    for (float s : std) {
        if (!(s > 0.0f)) {
            throw ConfigError("image normalization std must be positive");
        }
    }
}

void AugmentConfig::validate() const
{
    if (pad < 0) {
        throw ConfigError("augment.pad must be non-negative");
    }
    if (!(flip_probability >= 0.0 && flip_probability <= 1.0)) {
        throw ConfigError("augment.flip_probability must lie in [0, 1]");
    }
}

Image hflip(const Image& img)
{
    Image out(img.height, img.width);
    for (int c = 0; c < Image::channels; ++c) {
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
            }
        }
    }
    return out;
}

Image pad_crop(const Image& img, int pad, int offset_y, int offset_x)
{
    if (offset_y < 0 || offset_x < 0 || offset_y > 2 * pad || offset_x > 2 * pad) {
        throw DimensionError("pad_crop: offset outside the padded canvas");
    }
    Image out(img.height, img.width, 0.0f);
    // output (y, x) reads source (y + offset_y - pad, x + offset_x - pad)
    const int dy = offset_y - pad;
    const int dx = offset_x - pad;
    const int y0 = std::max(0, -dy), y1 = std::min(img.height, img.height - dy);
    const int x0 = std::max(0, -dx), x1 = std::min(img.width, img.width - dx);
    for (int c = 0; c < Image::channels; ++c) {
        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
                out.at(c, y, x) = img.at(c, y + dy, x + dx);
            }
        }
    }
    return out;
}

Image augment_image(const Image& img, Rng& rng, bool train_mode, const AugmentConfig& cfg)
{
    if (!train_mode || !cfg.enabled) {
        return img;
    }
    const bool flip = rng.bernoulli(cfg.flip_probability);
    const auto span = static_cast<std::uint64_t>(2 * cfg.pad + 1);
    const int offset_y = static_cast<int>(rng.uniform_int(span));
    const int offset_x = static_cast<int>(rng.uniform_int(span));
    return pad_crop(flip ? hflip(img) : img, cfg.pad, offset_y, offset_x);
}

Image normalize_image(const Image& img, const ImageNormConstants& c)
{
    Image out = img;
    for (int ch = 0; ch < Image::channels; ++ch) {
        out.plane(ch) = (img.plane(ch) - c.mean[ch]) / c.std[ch];
    }
    return out;
}

Image denormalize_image(const Image& img, const ImageNormConstants& c)
{
    Image out = img;
    for (int ch = 0; ch < Image::channels; ++ch) {
        out.plane(ch) = img.plane(ch) * c.std[ch] + c.mean[ch];
    }
    return out;
}

Image resize_bilinear(const Image& img, int height, int width)
{
    if (height < 1 || width < 1) {
        throw DimensionError("resize_bilinear: target size must be positive");
    }
    Image out(height, width);
    const double sy = static_cast<double>(img.height) / height;
    const double sx = static_cast<double>(img.width) / width;
    for (int y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double wx = fx - x0;
            for (int c = 0; c < Image::channels; ++c) {
                const double top = img.at(c, y0, x0) * (1 - wx) + img.at(c, y0, x1) * wx;
                const double bottom = img.at(c, y1, x0) * (1 - wx) + img.at(c, y1, x1) * wx;
                out.at(c, y, x) = static_cast<float>(top * (1 - wy) + bottom * wy);
            }
        }
    }
    return out;
}

StructScaler StructScaler::fit(std::span<const FeatureVec> train_features)
{
    if (train_features.empty()) {
        throw ConfigError("cannot fit a scaler on an empty training split");
    }
    StructScaler s;
    for (std::size_t i = 0; i < 8; ++i) {
        s.min[i] = train_features.front()[i];
        s.max[i] = train_features.front()[i];
    }
    for (const auto& f : train_features) {
        for (std::size_t i = 0; i < 8; ++i) {
            s.min[i] = std::min<double>(s.min[i], f[i]);
            s.max[i] = std::max<double>(s.max[i], f[i]);
        }
    }
    return s;
}

FeatureVec StructScaler::apply(const FeatureVec& s) const
{
    FeatureVec out{};
    for (std::size_t i = 0; i < 8; ++i) {
        const double range = max[i] - min[i];
        out[i] = range > 0.0 ? static_cast<float>((s[i] - min[i]) / range) : 0.0f;
    }
    return out;
}

SplitIndices split_dataset(std::size_t n, const SplitSpec& spec)
{
    if (n < 2) {
        throw ConfigError("split_dataset: need at least 2 samples");
    }
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
        throw ConfigError("train_fraction must lie in (0, 1)");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = Rng::derived(spec.seed, {0x5917u});
    rng.shuffle(std::span<std::size_t>(order));
    const auto n_train = static_cast<std::size_t>(std::floor(spec.train_fraction * static_cast<double>(n)));
    SplitIndices out;
    out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    return out;
}

std::vector<std::vector<std::size_t>> make_batches(std::span<const std::size_t> indices, std::size_t batch_size,
                                                   Rng& rng, bool shuffle)
{
    if (batch_size < 1) {
        throw ConfigError("batch_size must be >= 1");
    }
    std::vector<std::size_t> order(indices.begin(), indices.end());
    if (shuffle) {
        rng.shuffle(std::span<std::size_t>(order));
    }
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t end = std::min(order.size(), start + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

} // namespace beamcast::pipeline
