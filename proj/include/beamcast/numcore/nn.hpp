#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "beamcast/numcore/ops.hpp"
#include "beamcast/numcore/rng.hpp"

namespace beamcast {

enum class Mode { Train, Eval };

namespace detail {

// Accepts [C x H x W] as a batch of one.
inline std::array<Index, 4> as_nchw(const Shape& s, const char* op)
{
    if (s.size() == 3) {
        return {1, s[0], s[1], s[2]};
    }
    if (s.size() == 4) {
        return {s[0], s[1], s[2], s[3]};
    }
    throw DimensionError(std::string(op) + ": expected [C,H,W] or [B,C,H,W], got " + shape_str(s));
}

inline Shape with_nchw(const Shape& like, Index b, Index c, Index h, Index w)
{
    if (like.size() == 3) {
        return {c, h, w};
    }
    return {b, c, h, w};
}

// cols [C*9 x H*W] for one image with zero padding 1.
template <typename S>
void im2col3x3(const S* image, Index channels, Index height, Index width, RowMatrix<S>& cols)
{
    cols.setZero(channels * 9, height * width);
    for (Index c = 0; c < channels; ++c) {
        const S* plane = image + c * height * width;
        for (Index ky = 0; ky < 3; ++ky) {
            for (Index kx = 0; kx < 3; ++kx) {
                S* row = cols.data() + ((c * 9) + ky * 3 + kx) * height * width;
                for (Index y = 0; y < height; ++y) {
                    const Index sy = y + ky - 1;
                    if (sy < 0 || sy >= height) {
                        continue;
                    }
                    const Index x0 = std::max<Index>(0, 1 - kx);
                    const Index x1 = std::min<Index>(width, width + 1 - kx);
                    for (Index x = x0; x < x1; ++x) {
                        row[y * width + x] = plane[sy * width + x + kx - 1];
                    }
                }
            }
        }
    }
}

template <typename S>
void col2im3x3(const RowMatrix<S>& cols, Index channels, Index height, Index width, S* image)
{
    for (Index c = 0; c < channels; ++c) {
        S* plane = image + c * height * width;
        for (Index ky = 0; ky < 3; ++ky) {
            for (Index kx = 0; kx < 3; ++kx) {
                const S* row = cols.data() + ((c * 9) + ky * 3 + kx) * height * width;
                for (Index y = 0; y < height; ++y) {
                    const Index sy = y + ky - 1;
                    if (sy < 0 || sy >= height) {
                        continue;
                    }
                    const Index x0 = std::max<Index>(0, 1 - kx);
                    const Index x1 = std::min<Index>(width, width + 1 - kx);
                    for (Index x = x0; x < x1; ++x) {
                        plane[sy * width + x + kx - 1] += row[y * width + x];
                    }
                }
            }
        }
    }
}

} // namespace detail

/// 3x3 cross-correlation, stride 1, zero padding 1 (spatial size preserved).
/// x: [C_in,H,W] or [B,C_in,H,W]; kernels: [C_out,C_in,3,3]; bias: [C_out].
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& kernels, const Tensor<S>& bias)
{
    const auto [batch, c_in, height, width] = detail::as_nchw(x.shape(), "conv2d");
    if (kernels.ndim() != 4 || kernels.dim(2) != 3 || kernels.dim(3) != 3) {
        throw DimensionError("conv2d: kernels must be [C_out,C_in,3,3], got " + shape_str(kernels.shape()));
    }
    if (kernels.dim(1) != c_in) {
        throw DimensionError("conv2d: input " + shape_str(x.shape()) + " has " + std::to_string(c_in) +
                             " channels but kernels " + shape_str(kernels.shape()) + " expect " +
                             std::to_string(kernels.dim(1)));
    }
    const Index c_out = kernels.dim(0);
    if (bias.size() != c_out) {
        throw DimensionError("conv2d: bias " + shape_str(bias.shape()) + " does not match " + std::to_string(c_out) +
                             " output channels");
    }
    const Index hw = height * width;
    const bool keep_cols = grad_enabled() && kernels.requires_grad();
    std::vector<RowMatrix<S>> saved_cols;
    if (keep_cols) {
        saved_cols.resize(static_cast<std::size_t>(batch));
    }
    Array<S> data(batch * c_out * hw);
    const auto kmat = kernels.matrix(c_out, c_in * 9);
    RowMatrix<S> cols;
    for (Index b = 0; b < batch; ++b) {
        detail::im2col3x3(x.raw() + b * c_in * hw, c_in, height, width, cols);
        Eigen::Map<RowMatrix<S>> om(data.data() + b * c_out * hw, c_out, hw);
        om.noalias() = kmat * cols;
        om.colwise() += Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>(bias.raw(), c_out);
        if (keep_cols) {
            saved_cols[static_cast<std::size_t>(b)] = std::move(cols);
        }
    }
    return Tensor<S>::make_result(
        detail::with_nchw(x.shape(), batch, c_out, height, width), std::move(data), {&x, &kernels, &bias},
        [=, saved_cols = std::move(saved_cols)](const auto& out) {
            const auto km = kernels.matrix(c_out, c_in * 9);
            Array<S> gk = Array<S>::Zero(kernels.size());
            Array<S> gb = Array<S>::Zero(c_out);
            Array<S> gx = x.requires_grad() ? Array<S>(Array<S>::Zero(x.size())) : Array<S>();
            Eigen::Map<RowMatrix<S>> gkm(gk.data(), c_out, c_in * 9);
            RowMatrix<S> cols_b;
            RowMatrix<S> gcols;
            for (Index b = 0; b < batch; ++b) {
                Eigen::Map<const RowMatrix<S>> g(out.grad.data() + b * c_out * hw, c_out, hw);
                gb += g.rowwise().sum().array();
                if (kernels.requires_grad()) {
                    const RowMatrix<S>* cptr = nullptr;
                    if (!saved_cols.empty()) {
                        cptr = &saved_cols[static_cast<std::size_t>(b)];
                    } else {
                        detail::im2col3x3(x.raw() + b * c_in * hw, c_in, height, width, cols_b);
                        cptr = &cols_b;
                    }
                    gkm.noalias() += g * cptr->transpose();
                }
                if (x.requires_grad()) {
                    gcols.noalias() = km.transpose() * g;
                    detail::col2im3x3(gcols, c_in, height, width, gx.data() + b * c_in * hw);
                }
            }
            kernels.accumulate_grad(gk);
            bias.accumulate_grad(gb);
            if (x.requires_grad()) {
                x.accumulate_grad(gx);
            }
        });
}

/// 2x2 max pooling with stride 2. Ties route the gradient to the first
/// element of the window in row-major order.
template <typename S>
Tensor<S> maxpool2d(const Tensor<S>& x)
{
    const auto [batch, channels, height, width] = detail::as_nchw(x.shape(), "maxpool2d");
    if (height % 2 != 0 || width % 2 != 0) {
        throw DimensionError("maxpool2d: spatial size " + std::to_string(height) + "x" + std::to_string(width) +
                             " is not even");
    }
    const Index oh = height / 2, ow = width / 2;
    const Index planes = batch * channels;
    Array<S> data(planes * oh * ow);
    std::vector<Index> argmax(static_cast<std::size_t>(data.size()));
    for (Index p = 0; p < planes; ++p) {
        const S* in = x.raw() + p * height * width;
        for (Index y = 0; y < oh; ++y) {
            for (Index xo = 0; xo < ow; ++xo) {
                Index best = (2 * y) * width + 2 * xo;
                const Index candidates[3] = {best + 1, best + width, best + width + 1};
                for (Index c : candidates) {
                    if (in[c] > in[best]) {
                        best = c;
                    }
                }
                const Index o = p * oh * ow + y * ow + xo;
                data[o] = in[best];
                argmax[static_cast<std::size_t>(o)] = p * height * width + best;
            }
        }
    }
    return Tensor<S>::make_result(detail::with_nchw(x.shape(), batch, channels, oh, ow), std::move(data), {&x},
                                  [x, argmax = std::move(argmax)](const auto& out) {
                                      Array<S> g = Array<S>::Zero(x.size());
                                      for (std::size_t i = 0; i < argmax.size(); ++i) {
                                          g[argmax[i]] += out.grad[static_cast<Index>(i)];
                                      }
                                      x.accumulate_grad(g);
                                  });
}

/// Running statistics of a batchnorm layer (not learnable).
template <typename S>
struct BatchNormState {
    Array<S> running_mean;
    Array<S> running_var;
    S momentum = S(0.1);
    S eps = S(1e-5);

    explicit BatchNormState(Index channels = 0)
        : running_mean(Array<S>::Zero(channels)), running_var(Array<S>::Ones(channels))
    {
    }
};

/// Per-channel normalization over batch and spatial positions of [B,C,H,W]
/// (or [C,H,W]). Train mode uses batch statistics and updates the running
/// estimates; eval mode is the fixed affine map given by the running estimates.
template <typename S>
Tensor<S> batchnorm2d(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta, BatchNormState<S>& state,
                      Mode mode)
{
    if (!(state.eps > S(0))) {
        throw ConfigError("batchnorm2d: eps must be positive");
    }
    const auto [batch, channels, height, width] = detail::as_nchw(x.shape(), "batchnorm2d");
    if (gamma.size() != channels || beta.size() != channels || state.running_mean.size() != channels) {
        throw DimensionError("batchnorm2d: parameters do not match " + std::to_string(channels) + " channels");
    }
    const Index hw = height * width;
    const Index count = batch * hw;
    Array<S> mean_c(channels), inv_std(channels);
    if (mode == Mode::Train) {
        for (Index c = 0; c < channels; ++c) {
            S s = 0;
            for (Index b = 0; b < batch; ++b) {
                s += x.data().segment((b * channels + c) * hw, hw).sum();
            }
            const S mu = s / static_cast<S>(count);
            S ss = 0;
            for (Index b = 0; b < batch; ++b) {
                ss += (x.data().segment((b * channels + c) * hw, hw) - mu).square().sum();
            }
            const S var = ss / static_cast<S>(count);
            mean_c[c] = mu;
            inv_std[c] = S(1) / std::sqrt(var + state.eps);
            const S unbiased = count > 1 ? ss / static_cast<S>(count - 1) : var;
            state.running_mean[c] = (S(1) - state.momentum) * state.running_mean[c] + state.momentum * mu;
            state.running_var[c] = (S(1) - state.momentum) * state.running_var[c] + state.momentum * unbiased;
        }
    } else {
        mean_c = state.running_mean;
        inv_std = (state.running_var + state.eps).sqrt().inverse();
    }
    Array<S> xhat(x.size());
    Array<S> data(x.size());
    for (Index b = 0; b < batch; ++b) {
        for (Index c = 0; c < channels; ++c) {
            const Index off = (b * channels + c) * hw;
            xhat.segment(off, hw) = (x.data().segment(off, hw) - mean_c[c]) * inv_std[c];
            data.segment(off, hw) = xhat.segment(off, hw) * gamma[c] + beta[c];
        }
    }
    const bool batch_stats = mode == Mode::Train;
    return Tensor<S>::make_result(
        x.shape(), std::move(data), {&x, &gamma, &beta},
        [=, xhat = std::move(xhat)](const auto& out) {
            Array<S> gx(x.size());
            Array<S> ggamma = Array<S>::Zero(channels);
            Array<S> gbeta = Array<S>::Zero(channels);
            for (Index c = 0; c < channels; ++c) {
                S sum_g = 0, sum_gx = 0;
                for (Index b = 0; b < batch; ++b) {
                    const Index off = (b * channels + c) * hw;
                    sum_g += out.grad.segment(off, hw).sum();
                    sum_gx += (out.grad.segment(off, hw) * xhat.segment(off, hw)).sum();
                }
                ggamma[c] = sum_gx;
                gbeta[c] = sum_g;
                const S scale_c = gamma[c] * inv_std[c];
                for (Index b = 0; b < batch; ++b) {
                    const Index off = (b * channels + c) * hw;
                    if (batch_stats) {
                        gx.segment(off, hw) = scale_c * (out.grad.segment(off, hw) - sum_g / static_cast<S>(count) -
                                                         xhat.segment(off, hw) * (sum_gx / static_cast<S>(count)));
                    } else {
                        gx.segment(off, hw) = scale_c * out.grad.segment(off, hw);
                    }
                }
            }
            x.accumulate_grad(gx);
            gamma.accumulate_grad(ggamma);
            beta.accumulate_grad(gbeta);
        });
}

/// Inverted dropout. Identity in eval mode or when p == 0.
template <typename S>
Tensor<S> dropout(const Tensor<S>& x, S p, Mode mode, Rng& rng)
{
    if (p < S(0) || p >= S(1)) {
        throw ConfigError("dropout: rate must lie in [0, 1)");
    }
    if (mode == Mode::Eval || p == S(0)) {
        return x;
    }
    Array<S> mask(x.size());
    const S keep_scale = S(1) / (S(1) - p);
    for (Index i = 0; i < x.size(); ++i) {
        mask[i] = rng.bernoulli(static_cast<double>(p)) ? S(0) : keep_scale;
    }
    Array<S> data = x.data() * mask;
    return Tensor<S>::make_result(x.shape(), std::move(data), {&x},
                                  [x, mask = std::move(mask)](const auto& out) { x.accumulate_grad(out.grad * mask); });
}

/// Mean over the batch of -log softmax(logits)[label]. logits: [B,Q].
template <typename S>
Tensor<S> cross_entropy(const Tensor<S>& logits, std::span<const int> labels)
{
    detail::require_rank(logits.shape(), 2, "cross_entropy");
    const Index batch = logits.dim(0), classes = logits.dim(1);
    if (static_cast<Index>(labels.size()) != batch) {
        throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                             std::to_string(batch));
    }
    Array<S> probs(logits.size());
    S total = 0;
    for (Index b = 0; b < batch; ++b) {
        const int label = labels[static_cast<std::size_t>(b)];
        if (label < 0 || label >= classes) {
            throw IndexError("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                             std::to_string(classes) + ")");
        }
        auto row = logits.data().segment(b * classes, classes);
        const S top = row.maxCoeff();
        const S lse = top + std::log((row - top).exp().sum());
        total += lse - row[label];
        probs.segment(b * classes, classes) = (row - lse).exp();
    }
    Array<S> value(1);
    value[0] = total / static_cast<S>(batch);
    std::vector<int> owned(labels.begin(), labels.end());
    return Tensor<S>::make_result({1}, std::move(value), {&logits},
                                  [logits, batch, classes, probs = std::move(probs), owned = std::move(owned)](const auto& out) {
                                      Array<S> g = probs;
                                      for (Index b = 0; b < batch; ++b) {
                                          g[b * classes + owned[static_cast<std::size_t>(b)]] -= S(1);
                                      }
                                      logits.accumulate_grad(g * (out.grad[0] / static_cast<S>(batch)));
                                  });
}

} // namespace beamcast
