#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "beamcast/beamnet/config.hpp"
#include "beamcast/numcore/nn.hpp"
#include "beamcast/numcore/ops.hpp"

namespace beamcast::beamnet {

struct ForwardContext {
    Mode mode = Mode::Eval;
    Rng* rng = nullptr; // dropout source; required in train mode when dropout > 0
};

/// Intermediate shapes and attention weights recorded by a forward pass.
template <typename S>
struct Trace {
    std::vector<Shape> conv_block_shapes;
    Shape image_embedding;
    Shape struct_embedding;
    Shape fused;
    Shape logits;
    std::vector<Tensor<S>> self_attention_weights; // per encoder layer, [B*h, T, T]
    Tensor<S> cross_attention_weights;             // [B*h, 1, T]
    Tensor<S> image_refined;                       // F'_img
};

template <typename S>
struct AttentionParams {
    Tensor<S> w_q, w_k, w_v, w_o;
};

template <typename S>
struct AttentionResult {
    Tensor<S> output;  // [B, Tq, d]
    Tensor<S> weights; // [B*h, Tq, Tk]
};

/// Multi-head scaled dot-product attention without projection biases.
/// queries: [B, Tq, d]; keys_values: [B, Tk, d].
template <typename S>
AttentionResult<S> multi_head_attention(const Tensor<S>& queries, const Tensor<S>& keys_values,
                                        const AttentionParams<S>& p, int heads)
{
    if (queries.ndim() != 3 || keys_values.ndim() != 3 || queries.dim(0) != keys_values.dim(0) ||
        queries.dim(2) != keys_values.dim(2)) {
        throw DimensionError("attention: queries " + shape_str(queries.shape()) + " and keys " +
                             shape_str(keys_values.shape()) + " are incompatible");
    }
    const Index batch = queries.dim(0), tq = queries.dim(1), tk = keys_values.dim(1), d = queries.dim(2);
    if (d % heads != 0) {
        throw DimensionError("attention: width " + std::to_string(d) + " not divisible by " + std::to_string(heads) +
                             " heads");
    }
    const Index dk = d / heads;
    auto split = [&](const Tensor<S>& x, Index t) {
        return reshape(permute(reshape(x, {batch, t, heads, dk}), {0, 2, 1, 3}), {batch * heads, t, dk});
    };
    const Tensor<S> q = split(linear(queries, p.w_q), tq);
    const Tensor<S> k = split(linear(keys_values, p.w_k), tk);
    const Tensor<S> v = split(linear(keys_values, p.w_v), tk);
    const Tensor<S> scores = scale(bmm(q, k, true), S(1) / std::sqrt(static_cast<S>(dk)));
    const Tensor<S> weights = softmax(scores);
    const Tensor<S> context = bmm(weights, v);
    const Tensor<S> merged = reshape(permute(reshape(context, {batch, heads, tq, dk}), {0, 2, 1, 3}), {batch, tq, d});
    return {linear(merged, p.w_o), weights};
}

/// CNN + Transformer + cross-attention beam classifier.
template <typename S>
class BeamNet {
public:
    BeamNet(const ModelConfig& config, std::uint64_t seed) : config_(config.resolved())
    {
        config.validate();
        Rng rng = Rng::derived(seed, {0xbea7});
        build(rng);
    }

    const ModelConfig& config() const { return config_; }

    ParamList<S>& parameters() { return params_; }
    const ParamList<S>& parameters() const { return params_; }

    std::vector<BatchNormState<S>>& batchnorm_states() { return bn_states_; }
    const std::vector<BatchNormState<S>>& batchnorm_states() const { return bn_states_; }

    Index parameter_count() const
    {
        Index n = 0;
        for (const auto& p : params_) {
            n += p.tensor.size();
        }
        return n;
    }

    Tensor<S>& parameter(const std::string& name)
    {
        for (auto& p : params_) {
            if (p.name == name) {
                return p.tensor;
            }
        }
        throw IndexError("no parameter named '" + name + "'");
    }

    /// images [B,3,S,S] -> F_img [B,d]
    Tensor<S> cnn_forward(const Tensor<S>& images, ForwardContext& ctx, Trace<S>* trace = nullptr)
    {
        const Index s = config_.image_size;
        if (images.ndim() != 4 || images.dim(1) != 3 || images.dim(2) != s || images.dim(3) != s) {
            throw DimensionError("cnn_forward: expected [B,3," + std::to_string(s) + "," + std::to_string(s) +
                                 "], got " + shape_str(images.shape()));
        }
        Tensor<S> x = images;
        for (std::size_t i = 0; i < conv_.size(); ++i) {
            const ConvBlock& block = conv_[i];
            x = conv2d(x, block.kernels, block.bias);
            x = batchnorm2d(x, block.bn_scale, block.bn_shift, bn_states_[i], ctx.mode);
            x = relu(x);
            x = maxpool2d(x);
            if (trace != nullptr) {
                trace->conv_block_shapes.push_back(x.shape());
            }
        }
        const Index batch = x.dim(0);
        x = reshape(x, {batch, x.size() / batch});
        Tensor<S> f_img = linear(x, image_fc_.weight, &image_fc_.bias);
        if (trace != nullptr) {
            trace->image_embedding = f_img.shape();
        }
        return f_img;
    }

    /// features [B,8] -> encoded tokens [B,T,d] (T = 1, or 8 with per-feature tokens)
    Tensor<S> encode_struct(const Tensor<S>& features, ForwardContext& ctx, Trace<S>* trace = nullptr)
    {
        (void)ctx;
        if (features.ndim() != 2 || features.dim(1) != 8) {
            throw DimensionError("transformer_forward: expected [B,8] structured input, got " +
                                 shape_str(features.shape()));
        }
        const Index batch = features.dim(0), d = config_.embed_dim;
        Tensor<S> h;
        if (config_.per_feature_tokens) {
            h = add_broadcast(linear(diag_embed(features), struct_in_.weight), struct_in_.bias);
        } else {
            h = reshape(linear(features, struct_in_.weight, &struct_in_.bias), {batch, 1, d});
        }
        for (const EncoderLayer& layer : encoder_) {
            AttentionResult<S> att = multi_head_attention(h, h, layer.attention, config_.num_heads);
            if (trace != nullptr) {
                trace->self_attention_weights.push_back(att.weights);
            }
            h = layernorm(add(h, att.output), layer.norm1.scale, layer.norm1.shift);
            Tensor<S> ff = linear(relu(linear(h, layer.ffn1.weight, &layer.ffn1.bias)), layer.ffn2.weight,
                                  &layer.ffn2.bias);
            h = layernorm(add(h, ff), layer.norm2.scale, layer.norm2.shift);
        }
        return h;
    }

    /// features [B,8] -> F_struct [B,d]
    Tensor<S> transformer_forward(const Tensor<S>& features, ForwardContext& ctx, Trace<S>* trace = nullptr)
    {
        Tensor<S> f_struct = pool_tokens(encode_struct(features, ctx, trace));
        if (trace != nullptr) {
            trace->struct_embedding = f_struct.shape();
        }
        return f_struct;
    }

    /// F_img [B,d] attends over struct tokens ([B,d] or [B,T,d]) -> F_fused [B,2d]
    Tensor<S> cross_attention_fuse(const Tensor<S>& f_img, const Tensor<S>& struct_tokens, ForwardContext& ctx,
                                   Trace<S>* trace = nullptr)
    {
        (void)ctx;
        const Index d = config_.embed_dim;
        if (f_img.ndim() != 2 || f_img.dim(1) != d) {
            throw DimensionError("cross_attention_fuse: image features " + shape_str(f_img.shape()) +
                                 " are not [B," + std::to_string(d) + "]");
        }
        const Index batch = f_img.dim(0);
        Tensor<S> kv = struct_tokens.ndim() == 2 ? reshape(struct_tokens, {struct_tokens.dim(0), 1, struct_tokens.dim(1)})
                                                 : struct_tokens;
        if (kv.ndim() != 3 || kv.dim(0) != batch || kv.dim(2) != d) {
            throw DimensionError("cross_attention_fuse: structured features " + shape_str(struct_tokens.shape()) +
                                 " do not match image features " + shape_str(f_img.shape()));
        }
        AttentionResult<S> att = multi_head_attention(reshape(f_img, {batch, 1, d}), kv, cross_.attention,
                                                      config_.cross_heads);
        Tensor<S> refined = layernorm(add(f_img, reshape(att.output, {batch, d})), cross_.norm.scale, cross_.norm.shift);
        Tensor<S> fused = concat_last(refined, pool_tokens(kv));
        Tensor<S> ff = linear(relu(linear(fused, fusion1_.weight, &fusion1_.bias)), fusion2_.weight, &fusion2_.bias);
        fused = add(fused, ff);
        if (trace != nullptr) {
            trace->cross_attention_weights = att.weights;
            trace->image_refined = refined;
            trace->fused = fused.shape();
        }
        return fused;
    }

    /// F_fused [B,2d] -> logits [B,Q]
    Tensor<S> classify(const Tensor<S>& fused, ForwardContext& ctx, Trace<S>* trace = nullptr)
    {
        if (fused.ndim() != 2 || fused.dim(1) != 2 * config_.embed_dim) {
            throw DimensionError("classify: expected [B," + std::to_string(2 * config_.embed_dim) + "], got " +
                                 shape_str(fused.shape()));
        }
        Tensor<S> h = relu(linear(fused, classifier1_.weight, &classifier1_.bias));
        if (ctx.mode == Mode::Train && config_.dropout > 0.0) {
            if (ctx.rng == nullptr) {
                throw ConfigError("classify: train mode with dropout needs an rng");
            }
            h = dropout(h, static_cast<S>(config_.dropout), ctx.mode, *ctx.rng);
        }
        Tensor<S> logits = linear(h, classifier2_.weight, &classifier2_.bias);
        if (trace != nullptr) {
            trace->logits = logits.shape();
        }
        return logits;
    }

    /// Full mapping: preprocessed images [B,3,S,S] and scaled features [B,8] -> logits [B,Q].
    Tensor<S> forward(const Tensor<S>& images, const Tensor<S>& features, ForwardContext& ctx,
                      Trace<S>* trace = nullptr)
    {
        if (images.ndim() == 4 && features.ndim() == 2 && images.dim(0) != features.dim(0)) {
            throw DimensionError("forward: " + std::to_string(images.dim(0)) + " images but " +
                                 std::to_string(features.dim(0)) + " feature rows");
        }
        Tensor<S> f_img = cnn_forward(images, ctx, trace);
        Tensor<S> tokens = encode_struct(features, ctx, trace);
        if (trace != nullptr) {
            trace->struct_embedding = {tokens.dim(0), tokens.dim(2)};
        }
        return classify(cross_attention_fuse(f_img, tokens, ctx, trace), ctx, trace);
    }

private:
    struct Dense {
        Tensor<S> weight, bias;
    };
    struct Norm {
        Tensor<S> scale, shift;
    };
    struct ConvBlock {
        Tensor<S> kernels, bias, bn_scale, bn_shift;
    };
    struct EncoderLayer {
        AttentionParams<S> attention;
        Norm norm1;
        Dense ffn1, ffn2;
        Norm norm2;
    };
    struct CrossBlock {
        AttentionParams<S> attention;
        Norm norm;
    };

    static Tensor<S> pool_tokens(const Tensor<S>& tokens)
    {
        if (tokens.dim(1) == 1) {
            return reshape(tokens, {tokens.dim(0), tokens.dim(2)});
        }
        return mean_tokens(tokens);
    }

    Tensor<S> uniform(const std::string& name, Shape shape, double bound, Rng& rng)
    {
        const Index n = shape_size(shape);
        Array<S> data(n);
        for (Index i = 0; i < n; ++i) {
            data[i] = static_cast<S>(rng.uniform(-bound, bound));
        }
        Tensor<S> t(std::move(shape), std::move(data), true);
        params_.push_back({name, t});
        return t;
    }

    Tensor<S> constant(const std::string& name, Shape shape, S value)
    {
        Tensor<S> t = Tensor<S>::full(std::move(shape), value, true);
        params_.push_back({name, t});
        return t;
    }

    // He-uniform for layers feeding a ReLU, Xavier-uniform otherwise.
    Dense dense(const std::string& name, Index in, Index out, bool feeds_relu, Rng& rng)
    {
        const double bound = feeds_relu ? std::sqrt(6.0 / static_cast<double>(in))
                                        : std::sqrt(6.0 / static_cast<double>(in + out));
        Dense l;
        l.weight = uniform(name + ".weight", {in, out}, bound, rng);
        l.bias = constant(name + ".bias", {out}, S(0));
        return l;
    }

    Norm norm(const std::string& name, Index width)
    {
        return {constant(name + ".weight", {width}, S(1)), constant(name + ".bias", {width}, S(0))};
    }

    AttentionParams<S> attention(const std::string& name, Index d, Rng& rng)
    {
        const double bound = std::sqrt(6.0 / static_cast<double>(2 * d));
        return {uniform(name + ".w_q", {d, d}, bound, rng), uniform(name + ".w_k", {d, d}, bound, rng),
                uniform(name + ".w_v", {d, d}, bound, rng), uniform(name + ".w_o", {d, d}, bound, rng)};
    }

    void build(Rng& rng)
    {
        const Index d = config_.embed_dim;
        Index prev = 3;
        for (std::size_t i = 0; i < config_.conv_channels.size(); ++i) {
            const Index ch = config_.conv_channels[i];
            const std::string prefix = "cnn.block" + std::to_string(i);
            ConvBlock block;
            block.kernels = uniform(prefix + ".conv.weight", {ch, prev, 3, 3}, std::sqrt(6.0 / (9.0 * prev)), rng);
            block.bias = constant(prefix + ".conv.bias", {ch}, S(0));
            block.bn_scale = constant(prefix + ".bn.weight", {ch}, S(1));
            block.bn_shift = constant(prefix + ".bn.bias", {ch}, S(0));
            conv_.push_back(block);
            bn_states_.emplace_back(ch);
            prev = ch;
        }
        const Index map = config_.feature_map_size();
        image_fc_ = dense("cnn.fc", prev * map * map, d, false, rng);

        if (config_.per_feature_tokens) {
            struct_in_.weight = uniform("struct.input.weight", {8, d}, std::sqrt(6.0 / (1.0 + d)), rng);
            struct_in_.bias = uniform("struct.input.bias", {8, d}, std::sqrt(6.0 / (1.0 + d)), rng);
        } else {
            struct_in_ = dense("struct.input", 8, d, false, rng);
        }
        for (int l = 0; l < config_.num_encoder_layers; ++l) {
            const std::string prefix = "struct.encoder" + std::to_string(l);
            EncoderLayer layer;
            layer.attention = attention(prefix + ".attn", d, rng);
            layer.norm1 = norm(prefix + ".norm1", d);
            layer.ffn1 = dense(prefix + ".ffn1", d, config_.encoder_ffn_hidden, true, rng);
            layer.ffn2 = dense(prefix + ".ffn2", config_.encoder_ffn_hidden, d, false, rng);
            layer.norm2 = norm(prefix + ".norm2", d);
            encoder_.push_back(layer);
        }
        cross_.attention = attention("fusion.cross_attn", d, rng);
        cross_.norm = norm("fusion.norm", d);
        fusion1_ = dense("fusion.ffn1", 2 * d, config_.ffn_hidden, true, rng);
        fusion2_ = dense("fusion.ffn2", config_.ffn_hidden, 2 * d, false, rng);
        classifier1_ = dense("classifier.hidden", 2 * d, config_.classifier_hidden, true, rng);
        classifier2_ = dense("classifier.out", config_.classifier_hidden, config_.num_beams, false, rng);
    }

    ModelConfig config_;
    ParamList<S> params_;
    std::vector<BatchNormState<S>> bn_states_;
    std::vector<ConvBlock> conv_;
    Dense image_fc_;
    Dense struct_in_;
    std::vector<EncoderLayer> encoder_;
    CrossBlock cross_;
    Dense fusion1_, fusion2_;
    Dense classifier1_, classifier2_;
};

/// The k highest-scoring indices of one logit row, descending; ties go to the
/// lower index.
template <typename S>
std::vector<int> predict_topk(std::span<const S> logits, int k)
{
    const int q = static_cast<int>(logits.size());
    if (k < 1 || k > q) {
        throw IndexError("predict_topk: k = " + std::to_string(k) + " outside [1, " + std::to_string(q) + "]");
    }
    std::vector<int> order(static_cast<std::size_t>(q));
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
        return logits[static_cast<std::size_t>(a)] > logits[static_cast<std::size_t>(b)] ||
               (logits[static_cast<std::size_t>(a)] == logits[static_cast<std::size_t>(b)] && a < b);
    });
    order.resize(static_cast<std::size_t>(k));
    return order;
}

} // namespace beamcast::beamnet
