#pragma once

#include <algorithm>

#include "raune/ops.hpp"

namespace raune {

// Sequential channel-then-spatial attention applied at the end of each
// down-sampling block. The channel branch squeezes global average- and
// max-pooled descriptors through a shared two-layer bottleneck; the spatial
// branch convolves the (mean, max) channel statistics with a single kernel.

inline int64_t bottleneck_width(int64_t channels, int reduction) {
    return std::max<int64_t>(1, channels / reduction);
}

template <typename T>
struct ChannelAttentionParams {
    Var<T> fc1_w;  // (C/r, C)
    Var<T> fc2_w;  // (C, C/r)
    int reduction = 16;

    static ChannelAttentionParams make(int64_t channels, int reduction, Rng& rng, double init_std = 0.02) {
        if (reduction < 1) throw ConfigError("attention_reduction: must be >= 1");
        int64_t hidden = bottleneck_width(channels, reduction);
        ChannelAttentionParams p;
        p.reduction = reduction;
        Tensor<T> w1({hidden, channels}), w2({channels, hidden});
        rng.fill_normal(w1, 0.0, init_std);
        rng.fill_normal(w2, 0.0, init_std);
        p.fc1_w = make_var(std::move(w1), true);
        p.fc2_w = make_var(std::move(w2), true);
        return p;
    }
};

template <typename T>
struct SpatialAttentionParams {
    Var<T> conv_w;  // (1, 2, k, k)
    int kernel = 7;

    static SpatialAttentionParams make(int kernel, Rng& rng, double init_std = 0.02) {
        if (kernel < 1 || kernel % 2 == 0) throw ConfigError("spatial_attention_kernel: must be a positive odd integer");
        SpatialAttentionParams p;
        p.kernel = kernel;
        Tensor<T> w({1, 2, kernel, kernel});
        rng.fill_normal(w, 0.0, init_std);
        p.conv_w = make_var(std::move(w), true);
        return p;
    }
};

// Per-channel gate in (0,1), shape (N, C, 1, 1):
// sigmoid(mlp(avg_pool(x)) + mlp(max_pool(x))) with a shared bottleneck.
template <typename T>
Var<T> channel_attention(const ChannelAttentionParams<T>& p, const Var<T>& x) {
    const Shape& s = x->value.shape;
    if (x->value.rank() != 4) throw ShapeError("channel_attention: expected NCHW");
    Var<T> avg_branch = linear(relu(linear(global_avg_pool(x), p.fc1_w)), p.fc2_w);
    Var<T> max_branch = linear(relu(linear(global_max_pool(x), p.fc1_w)), p.fc2_w);
    Var<T> gate = sigmoid(add(avg_branch, max_branch));
    return reshape(gate, {s[0], s[1], 1, 1});
}

// Per-position gate in (0,1), shape (N, 1, H, W): the channel-wise mean and
// max maps are stacked, reflection-padded and convolved with one k x k kernel.
// Reflection padding keeps a spatially constant input exactly constant.
template <typename T>
Var<T> spatial_attention(const SpatialAttentionParams<T>& p, const Var<T>& x) {
    if (x->value.rank() != 4) throw ShapeError("spatial_attention: expected NCHW");
    Var<T> stats = concat_channels(channel_mean(x), channel_max(x));
    Var<T> padded = reflect_pad2d(stats, (p.kernel - 1) / 2);
    return sigmoid(conv2d(padded, p.conv_w, Var<T>{}, 1, 0));
}

// out = sa(ca(x) * x) * (ca(x) * x); shape preserved, elementwise non-expansive.
template <typename T>
Var<T> cbam_apply(const ChannelAttentionParams<T>& cp, const SpatialAttentionParams<T>& sp, const Var<T>& x) {
    Var<T> channel_refined = scale_channels(x, channel_attention(cp, x));
    return scale_spatial(channel_refined, spatial_attention(sp, channel_refined));
}

}  // namespace raune
