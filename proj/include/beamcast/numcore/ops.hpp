#pragma once

#include <cmath>
#include <numeric>
#include <span>

#include "beamcast/numcore/tensor.hpp"

namespace beamcast {

namespace detail {

inline void require_same_shape(const Shape& a, const Shape& b, const char* op)
{
    if (a != b) {
        throw DimensionError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) + " differ");
    }
}

inline void require_rank(const Shape& s, std::size_t rank, const char* op)
{
    if (s.size() != rank) {
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(s));
    }
}

// Product of all leading extents, and the last extent.
inline std::pair<Index, Index> rows_cols(const Shape& s)
{
    const Index cols = s.back();
    return {shape_size(s) / cols, cols};
}

} // namespace detail

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b)
{
    detail::require_same_shape(a.shape(), b.shape(), "add");
    return Tensor<S>::make_result(a.shape(), a.data() + b.data(), {&a, &b}, [a, b](const auto& out) {
        a.accumulate_grad(out.grad);
        b.accumulate_grad(out.grad);
    });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b)
{
    detail::require_same_shape(a.shape(), b.shape(), "sub");
    return Tensor<S>::make_result(a.shape(), a.data() - b.data(), {&a, &b}, [a, b](const auto& out) {
        a.accumulate_grad(out.grad);
        b.accumulate_grad(-out.grad);
    });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b)
{
    detail::require_same_shape(a.shape(), b.shape(), "mul");
    return Tensor<S>::make_result(a.shape(), a.data() * b.data(), {&a, &b}, [a, b](const auto& out) {
        if (a.requires_grad()) {
            a.accumulate_grad(out.grad * b.data());
        }
        if (b.requires_grad()) {
            b.accumulate_grad(out.grad * a.data());
        }
    });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& x, S factor)
{
    return Tensor<S>::make_result(x.shape(), x.data() * factor, {&x},
                                  [x, factor](const auto& out) { x.accumulate_grad(out.grad * factor); });
}

template <typename S>
Tensor<S> sum(const Tensor<S>& x)
{
    Array<S> v(1);
    v[0] = x.data().sum();
    return Tensor<S>::make_result({1}, std::move(v), {&x}, [x](const auto& out) {
        x.accumulate_grad(Array<S>::Constant(x.size(), out.grad[0]));
    });
}

template <typename S>
Tensor<S> mean(const Tensor<S>& x)
{
    return scale(sum(x), S(1) / static_cast<S>(x.size()));
}

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape)
{
    if (shape_size(shape) != x.size()) {
        throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    return Tensor<S>::make_result(std::move(shape), x.data(), {&x},
                                  [x](const auto& out) { x.accumulate_grad(out.grad); });
}

/// Axis permutation: output axis i is input axis perm[i].
template <typename S>
Tensor<S> permute(const Tensor<S>& x, const std::vector<std::size_t>& perm)
{
    const Shape& in_shape = x.shape();
    const std::size_t rank = in_shape.size();
    if (perm.size() != rank) {
        throw DimensionError("permute: permutation rank mismatch for " + shape_str(in_shape));
    }
    Shape out_shape(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        out_shape[i] = in_shape.at(perm[i]);
    }
    std::vector<Index> in_strides(rank, 1);
    for (std::size_t i = rank - 1; i > 0; --i) {
        in_strides[i - 1] = in_strides[i] * in_shape[i];
    }
    // source index for every destination element
    const Index n = x.size();
    std::vector<Index> source(static_cast<std::size_t>(n));
    std::vector<Index> counter(rank, 0);
    for (Index dst = 0; dst < n; ++dst) {
        Index src = 0;
        for (std::size_t i = 0; i < rank; ++i) {
            src += counter[i] * in_strides[perm[i]];
        }
        source[static_cast<std::size_t>(dst)] = src;
        for (std::size_t i = rank; i-- > 0;) {
            if (++counter[i] < out_shape[i]) {
                break;
            }
            counter[i] = 0;
        }
    }
    Array<S> data(n);
    for (Index i = 0; i < n; ++i) {
        data[i] = x.data()[source[static_cast<std::size_t>(i)]];
    }
    return Tensor<S>::make_result(std::move(out_shape), std::move(data), {&x},
                                  [x, source = std::move(source)](const auto& out) {
                                      Array<S> g = Array<S>::Zero(x.size());
                                      for (std::size_t i = 0; i < source.size(); ++i) {
                                          g[source[i]] += out.grad[static_cast<Index>(i)];
                                      }
                                      x.accumulate_grad(g);
                                  });
}

/// [n x k] * [k x m] -> [n x m]
template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b)
{
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    const Index n = a.dim(0), k = a.dim(1), m = b.dim(1);
    Array<S> data(n * m);
    Eigen::Map<RowMatrix<S>>(data.data(), n, m).noalias() = a.matrix(n, k) * b.matrix(k, m);
    return Tensor<S>::make_result({n, m}, std::move(data), {&a, &b}, [a, b, n, k, m](const auto& out) {
        Eigen::Map<const RowMatrix<S>> g(out.grad.data(), n, m);
        if (a.requires_grad()) {
            Array<S> ga(n * k);
            Eigen::Map<RowMatrix<S>>(ga.data(), n, k).noalias() = g * b.matrix(k, m).transpose();
            a.accumulate_grad(ga);
        }
        if (b.requires_grad()) {
            Array<S> gb(k * m);
            Eigen::Map<RowMatrix<S>>(gb.data(), k, m).noalias() = a.matrix(n, k).transpose() * g;
            b.accumulate_grad(gb);
        }
    });
}

/// Batched product [N x n x k] * [N x k x m] -> [N x n x m]; with
/// `transpose_b` the second operand is [N x m x k] and used transposed.
template <typename S>
Tensor<S> bmm(const Tensor<S>& a, const Tensor<S>& b, bool transpose_b = false)
{
    if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0) ||
        a.dim(2) != (transpose_b ? b.dim(2) : b.dim(1))) {
        throw DimensionError("bmm: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    const Index batch = a.dim(0), n = a.dim(1), k = a.dim(2);
    const Index m = transpose_b ? b.dim(1) : b.dim(2);
    const Index b_rows = b.dim(1), b_cols = b.dim(2);
    Array<S> data(batch * n * m);
    for (Index i = 0; i < batch; ++i) {
        Eigen::Map<const RowMatrix<S>> am(a.raw() + i * n * k, n, k);
        Eigen::Map<const RowMatrix<S>> bm(b.raw() + i * b_rows * b_cols, b_rows, b_cols);
        Eigen::Map<RowMatrix<S>> om(data.data() + i * n * m, n, m);
        if (transpose_b) {
            om.noalias() = am * bm.transpose();
        } else {
            om.noalias() = am * bm;
        }
    }
    return Tensor<S>::make_result(
        {batch, n, m}, std::move(data), {&a, &b}, [a, b, batch, n, k, m, b_rows, b_cols, transpose_b](const auto& out) {
            Array<S> ga = a.requires_grad() ? Array<S>(Array<S>::Zero(a.size())) : Array<S>();
            Array<S> gb = b.requires_grad() ? Array<S>(Array<S>::Zero(b.size())) : Array<S>();
            for (Index i = 0; i < batch; ++i) {
                Eigen::Map<const RowMatrix<S>> g(out.grad.data() + i * n * m, n, m);
                Eigen::Map<const RowMatrix<S>> am(a.raw() + i * n * k, n, k);
                Eigen::Map<const RowMatrix<S>> bm(b.raw() + i * b_rows * b_cols, b_rows, b_cols);
                if (a.requires_grad()) {
                    Eigen::Map<RowMatrix<S>> gam(ga.data() + i * n * k, n, k);
                    if (transpose_b) {
                        gam.noalias() = g * bm;
                    } else {
                        gam.noalias() = g * bm.transpose();
                    }
                }
                if (b.requires_grad()) {
                    Eigen::Map<RowMatrix<S>> gbm(gb.data() + i * b_rows * b_cols, b_rows, b_cols);
                    if (transpose_b) {
                        gbm.noalias() = g.transpose() * am;
                    } else {
                        gbm.noalias() = am.transpose() * g;
                    }
                }
            }
            if (a.requires_grad()) {
                a.accumulate_grad(ga);
            }
            if (b.requires_grad()) {
                b.accumulate_grad(gb);
            }
        });
}

/// x [.. x in] * weight [in x out] (+ bias [out]) over the last axis.
template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& weight, const Tensor<S>* bias = nullptr)
{
    if (weight.ndim() != 2 || x.shape().back() != weight.dim(0)) {
        throw DimensionError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                             shape_str(weight.shape()));
    }
    const Index in = weight.dim(0), out_features = weight.dim(1);
    if (bias != nullptr && (bias->ndim() != 1 || bias->dim(0) != out_features)) {
        throw DimensionError("linear: bias " + shape_str(bias->shape()) + " does not match " +
                             std::to_string(out_features) + " outputs");
    }
    const Index rows = x.size() / in;
    Shape out_shape = x.shape();
    out_shape.back() = out_features;
    Array<S> data(rows * out_features);
    Eigen::Map<RowMatrix<S>> om(data.data(), rows, out_features);
    om.noalias() = x.matrix(rows, in) * weight.matrix(in, out_features);
    Tensor<S> b = bias != nullptr ? *bias : Tensor<S>();
    if (bias != nullptr) {
        om.rowwise() += Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(bias->raw(), out_features);
    }
    return Tensor<S>::make_result(
        std::move(out_shape), std::move(data), {&x, &weight, bias}, [x, weight, b, rows, in, out_features](const auto& out) {
            Eigen::Map<const RowMatrix<S>> g(out.grad.data(), rows, out_features);
            if (x.requires_grad()) {
                Array<S> gx(rows * in);
                Eigen::Map<RowMatrix<S>>(gx.data(), rows, in).noalias() = g * weight.matrix(in, out_features).transpose();
                x.accumulate_grad(gx);
            }
            if (weight.requires_grad()) {
                Array<S> gw(in * out_features);
                Eigen::Map<RowMatrix<S>>(gw.data(), in, out_features).noalias() = x.matrix(rows, in).transpose() * g;
                weight.accumulate_grad(gw);
            }
            if (b.size() > 0 && b.requires_grad()) {
                Array<S> gb(out_features);
                Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>>(gb.data(), out_features) = g.colwise().sum();
                b.accumulate_grad(gb);
            }
        });
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x)
{
    return Tensor<S>::make_result(x.shape(), x.data().max(S(0)), {&x}, [x](const auto& out) {
        x.accumulate_grad((x.data() > S(0)).select(out.grad, S(0)));
    });
}

/// Softmax over the last axis.
template <typename S>
Tensor<S> softmax(const Tensor<S>& x)
{
    const auto [rows, cols] = detail::rows_cols(x.shape());
    Array<S> data(x.size());
    for (Index r = 0; r < rows; ++r) {
        auto in = x.data().segment(r * cols, cols);
        auto o = data.segment(r * cols, cols);
        o = (in - in.maxCoeff()).exp();
        o /= o.sum();
    }
    return Tensor<S>::make_result(x.shape(), std::move(data), {&x}, [x, rows, cols](const auto& out) {
        Array<S> g(x.size());
        for (Index r = 0; r < rows; ++r) {
            auto y = out.data.segment(r * cols, cols);
            auto gy = out.grad.segment(r * cols, cols);
            g.segment(r * cols, cols) = y * (gy - (gy * y).sum());
        }
        x.accumulate_grad(g);
    });
}

/// Layer normalization over the last axis with learned scale and shift.
template <typename S>
Tensor<S> layernorm(const Tensor<S>& x, const Tensor<S>& gamma, const Tensor<S>& beta, S eps = S(1e-5))
{
    if (!(eps > S(0))) {
        throw ConfigError("layernorm: eps must be positive");
    }
    const auto [rows, cols] = detail::rows_cols(x.shape());
    if (gamma.size() != cols || beta.size() != cols) {
        throw DimensionError("layernorm: scale/shift width does not match " + shape_str(x.shape()));
    }
    Array<S> normalized(x.size());
    Array<S> inv_std(rows);
    for (Index r = 0; r < rows; ++r) {
        auto in = x.data().segment(r * cols, cols);
        const S mu = in.mean();
        const S var = (in - mu).square().mean();
        inv_std[r] = S(1) / std::sqrt(var + eps);
        normalized.segment(r * cols, cols) = (in - mu) * inv_std[r];
    }
    Array<S> data(x.size());
    for (Index r = 0; r < rows; ++r) {
        data.segment(r * cols, cols) = normalized.segment(r * cols, cols) * gamma.data() + beta.data();
    }
    return Tensor<S>::make_result(
        x.shape(), std::move(data), {&x, &gamma, &beta},
        [x, gamma, beta, rows, cols, normalized = std::move(normalized), inv_std = std::move(inv_std)](const auto& out) {
            Array<S> gx(x.size());
            Array<S> ggamma = Array<S>::Zero(cols);
            Array<S> gbeta = Array<S>::Zero(cols);
            for (Index r = 0; r < rows; ++r) {
                auto gy = out.grad.segment(r * cols, cols);
                auto xhat = normalized.segment(r * cols, cols);
                ggamma += gy * xhat;
                gbeta += gy;
                const Array<S> gxhat = gy * gamma.data();
                gx.segment(r * cols, cols) =
                    inv_std[r] * (gxhat - gxhat.mean() - xhat * (gxhat * xhat).mean());
            }
            x.accumulate_grad(gx);
            gamma.accumulate_grad(ggamma);
            beta.accumulate_grad(gbeta);
        });
}

/// Concatenation of two tensors along the last axis; leading extents must agree.
template <typename S>
Tensor<S> concat_last(const Tensor<S>& a, const Tensor<S>& b)
{
    Shape lead_a(a.shape().begin(), a.shape().end() - 1);
    Shape lead_b(b.shape().begin(), b.shape().end() - 1);
    if (lead_a != lead_b) {
        throw DimensionError("concat: leading shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                             " differ");
    }
    const auto [rows, ca] = detail::rows_cols(a.shape());
    const Index cb = b.shape().back();
    Array<S> data(rows * (ca + cb));
    for (Index r = 0; r < rows; ++r) {
        data.segment(r * (ca + cb), ca) = a.data().segment(r * ca, ca);
        data.segment(r * (ca + cb) + ca, cb) = b.data().segment(r * cb, cb);
    }
    Shape out_shape = lead_a;
    out_shape.push_back(ca + cb);
    return Tensor<S>::make_result(std::move(out_shape), std::move(data), {&a, &b}, [a, b, rows, ca, cb](const auto& out) {
        Array<S> ga(rows * ca), gb(rows * cb);
        for (Index r = 0; r < rows; ++r) {
            ga.segment(r * ca, ca) = out.grad.segment(r * (ca + cb), ca);
            gb.segment(r * cb, cb) = out.grad.segment(r * (ca + cb) + ca, cb);
        }
        a.accumulate_grad(ga);
        b.accumulate_grad(gb);
    });
}

/// Mean over axis 1 of a [B x T x D] tensor -> [B x D].
template <typename S>
Tensor<S> mean_tokens(const Tensor<S>& x)
{
    detail::require_rank(x.shape(), 3, "mean_tokens");
    const Index batch = x.dim(0), tokens = x.dim(1), width = x.dim(2);
    Array<S> data = Array<S>::Zero(batch * width);
    for (Index b = 0; b < batch; ++b) {
        for (Index t = 0; t < tokens; ++t) {
            data.segment(b * width, width) += x.data().segment((b * tokens + t) * width, width);
        }
    }
    data /= static_cast<S>(tokens);
    return Tensor<S>::make_result({batch, width}, std::move(data), {&x}, [x, batch, tokens, width](const auto& out) {
        Array<S> g(x.size());
        for (Index b = 0; b < batch; ++b) {
            for (Index t = 0; t < tokens; ++t) {
                g.segment((b * tokens + t) * width, width) = out.grad.segment(b * width, width) / static_cast<S>(tokens);
            }
        }
        x.accumulate_grad(g);
    });
}

/// x [B x ...] + b [...], with b broadcast over the leading axis.
template <typename S>
Tensor<S> add_broadcast(const Tensor<S>& x, const Tensor<S>& b)
{
    const Index inner = b.size();
    if (x.ndim() != b.ndim() + 1 || !std::equal(b.shape().begin(), b.shape().end(), x.shape().begin() + 1)) {
        throw DimensionError("add_broadcast: cannot broadcast " + shape_str(b.shape()) + " over " + shape_str(x.shape()));
    }
    const Index outer = x.dim(0);
    Array<S> data = x.data();
    for (Index i = 0; i < outer; ++i) {
        data.segment(i * inner, inner) += b.data();
    }
    return Tensor<S>::make_result(x.shape(), std::move(data), {&x, &b}, [x, b, outer, inner](const auto& out) {
        x.accumulate_grad(out.grad);
        if (b.requires_grad()) {
            Array<S> g = Array<S>::Zero(inner);
            for (Index i = 0; i < outer; ++i) {
                g += out.grad.segment(i * inner, inner);
            }
            b.accumulate_grad(g);
        }
    });
}

/// [B x F] -> [B x F x F] with x[b, i] on the diagonal.
template <typename S>
Tensor<S> diag_embed(const Tensor<S>& x)
{
    detail::require_rank(x.shape(), 2, "diag_embed");
    const Index batch = x.dim(0), f = x.dim(1);
    Array<S> data = Array<S>::Zero(batch * f * f);
    for (Index b = 0; b < batch; ++b) {
        for (Index i = 0; i < f; ++i) {
            data[(b * f + i) * f + i] = x.data()[b * f + i];
        }
    }
    return Tensor<S>::make_result({batch, f, f}, std::move(data), {&x}, [x, batch, f](const auto& out) {
        Array<S> g(x.size());
        for (Index b = 0; b < batch; ++b) {
            for (Index i = 0; i < f; ++i) {
                g[b * f + i] = out.grad[(b * f + i) * f + i];
            }
        }
        x.accumulate_grad(g);
    });
}

} // namespace beamcast
