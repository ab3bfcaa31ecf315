#pragma once

#include <span>
#include <vector>

#include "srd/nn/graph.hpp"

// Differentiable tensor ops recorded on a Graph. Shapes are NCHW for images,
// [B, N, C] for token sequences, [N, F] for feature rows.
namespace srd::nn {

template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> scale(Var<T> a, T factor);

// x[B,C,H,W] + bias[B,C] broadcast over space.
template <typename T> Var<T> add_channel_bias(Var<T> x, Var<T> bias);

// 2-D convolution, stride 1, symmetric zero padding. w[Co,Ci,k,k], b[Co].
template <typename T> Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b, int pad);

template <typename T> Var<T> avg_pool2(Var<T> x);
template <typename T> Var<T> upsample_nearest2(Var<T> x);
template <typename T> Var<T> concat_channels(Var<T> a, Var<T> b);
template <typename T> Var<T> global_avg_pool(Var<T> x);  // [B,C,H,W] -> [B,C]

template <typename T> Var<T> silu(Var<T> x);
template <typename T> Var<T> relu(Var<T> x);

// Group normalization over (channels-in-group, H, W); gamma/beta are [C].
template <typename T> Var<T> group_norm(Var<T> x, Var<T> gamma, Var<T> beta, int groups, T eps = T(1e-5));

// Affine map on the last axis: x[..., I] * w[O, I]^T + b[O].
template <typename T> Var<T> linear(Var<T> x, Var<T> w, Var<T> b);

// [B,C,H,W] <-> [B,H*W,C]
template <typename T> Var<T> to_tokens(Var<T> x);
template <typename T> Var<T> from_tokens(Var<T> x, int h, int w);

// a[B,M,K] * b[B,K,N] (or b^T when b is [B,N,K] and transpose_b is set).
template <typename T> Var<T> bmm(Var<T> a, Var<T> b, bool transpose_b);

template <typename T> Var<T> softmax_last(Var<T> x);

// Scales token row n of x[B,N,C] by a constant factor[n] (not differentiated).
template <typename T> Var<T> scale_rows(Var<T> x, std::span<const T> factor);

template <typename T> Var<T> slice_last(Var<T> x, int start, int length);
template <typename T> Var<T> concat_last(const std::vector<Var<T>>& parts);

// Mean over all elements of (a - b)^2, returned as a 1-element tensor.
template <typename T> Var<T> mse(Var<T> a, Var<T> b);

// Mean softmax cross-entropy of logits[B,K] against integer labels.
template <typename T> Var<T> cross_entropy(Var<T> logits, std::span<const int> labels);

template <typename T> Var<T> sum_all(Var<T> x);

}  // namespace srd::nn
