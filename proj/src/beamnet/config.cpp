#include "beamcast/beamnet/config.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "beamcast/errors.hpp"

namespace beamcast::beamnet {

namespace {

int scaled(int width, double factor)
{
    return std::max(1, static_cast<int>(std::lround(width * factor)));
}

} // namespace

ModelConfig ModelConfig::resolved() const
{
    if (!(scale_factor > 0.0) || !std::isfinite(scale_factor)) {
        throw ConfigError("model.scale_factor must be positive");
    }
    ModelConfig r = *this;
    for (auto& c : r.conv_channels) {
        c = scaled(c, scale_factor);
    }
    r.embed_dim = scaled(embed_dim, scale_factor);
    r.encoder_ffn_hidden = encoder_ffn_hidden > 0 ? scaled(encoder_ffn_hidden, scale_factor) : 4 * r.embed_dim;
    r.ffn_hidden = ffn_hidden > 0 ? scaled(ffn_hidden, scale_factor) : 2 * r.embed_dim;
    r.classifier_hidden = classifier_hidden > 0 ? scaled(classifier_hidden, scale_factor) : r.embed_dim;
    r.scale_factor = 1.0;
    return r;
}

void ModelConfig::validate() const
{
    if (image_size < 16 || image_size % 16 != 0) {
        throw ConfigError("model.image_size must be a positive multiple of 16 (got " + std::to_string(image_size) +
                          ")");
    }
    if (!(scale_factor > 0.0)) {
        throw ConfigError("model.scale_factor must be positive");
    }
    const ModelConfig r = resolved();
    for (std::size_t i = 0; i < r.conv_channels.size(); ++i) {
        if (conv_channels[i] < 1 || (i > 0 && r.conv_channels[i] <= r.conv_channels[i - 1])) {
            throw ConfigError("model.conv_channels must be positive and strictly increasing");
        }
    }
    if (num_heads < 1 || r.embed_dim % num_heads != 0) {
        throw ConfigError("model.num_heads must divide embed_dim (" + std::to_string(r.embed_dim) + ")");
    }
    if (cross_heads < 1 || r.embed_dim % cross_heads != 0) {
        throw ConfigError("model.cross_heads must divide embed_dim (" + std::to_string(r.embed_dim) + ")");
    }
    if (num_encoder_layers < 0) {
        throw ConfigError("model.num_encoder_layers must be non-negative");
    }
    if (encoder_ffn_hidden < 0 || ffn_hidden < 0 || classifier_hidden < 0 || embed_dim < 1) {
        throw ConfigError("model widths must be positive (0 selects the default)");
    }
    if (num_beams < 1 || num_beams > 65535) {
        throw ConfigError("model.num_beams must lie in [1, 65535]");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) {
        throw ConfigError("model.dropout must lie in [0, 1)");
    }
}

std::int64_t parameter_count(const ModelConfig& config)
{
    const ModelConfig c = config.resolved();
    const std::int64_t d = c.embed_dim;
    std::int64_t total = 0;
    std::int64_t prev = 3;
    for (int ch : c.conv_channels) {
        total += 9 * prev * ch + ch + 2 * ch;
        prev = ch;
    }
    const std::int64_t map = c.image_size / 16;
    total += prev * map * map * d + d;
    total += c.per_feature_tokens ? 8 * d + 8 * d : 8 * d + d;
    const std::int64_t f = c.encoder_ffn_hidden;
    total += c.num_encoder_layers * (4 * d * d + (d * f + f + f * d + d) + 4 * d);
    total += 4 * d * d + 2 * d;
    const std::int64_t h = c.ffn_hidden;
    total += 2 * d * h + h + h * 2 * d + 2 * d;
    const std::int64_t k = c.classifier_hidden;
    total += 2 * d * k + k + k * c.num_beams + c.num_beams;
    return total;
}

} // namespace beamcast::beamnet
