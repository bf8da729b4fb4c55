#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "raune/attention.hpp"
#include "raune/image.hpp"
#include "raune/ops.hpp"
#include "raune/rng.hpp"

namespace raune {

// The enhancement network is a strict sequence:
//   WRPM (7x7 wide-range perception) -> ADM blocks (stride-2 + attention)
//   -> HFRLM (residual stack at the bottleneck) -> UM blocks (4x4 transposed
//   convolutions) -> FMSM (7x7 smoothing) -> Tanh.
// There are no encoder-decoder skip connections.

enum class NormKind { instance, batch, none };

inline const char* norm_name(NormKind k) {
    switch (k) {
        case NormKind::instance: return "instance";
        case NormKind::batch: return "batch";
        default: return "none";
    }
}

inline NormKind norm_from_string(const std::string& s) {
    if (s == "instance") return NormKind::instance;
    if (s == "batch") return NormKind::batch;
    if (s == "none") return NormKind::none;
    throw ConfigError("norm_kind: expected instance|batch|none, got '" + s + "'");
}

struct NetworkConfig {
    int base_channels = 64;
    int num_down_blocks = 3;
    int num_residual_blocks = 8;
    NormKind norm_kind = NormKind::instance;
    int channel_growth = 2;       // width multiplier per down block, capped at 8x base
    int attention_reduction = 16;
    int spatial_attention_kernel = 7;
    bool dropout_down = false;
    bool dropout_residual = false;
    bool dropout_up = false;
    double dropout_p = 0.5;
    double down_negative_slope = 0.2;  // LeakyReLU slope in down blocks
    double up_negative_slope = 0.0;    // 0 -> plain ReLU in up blocks
    double init_std = 0.02;

    void validate() const {
        if (base_channels < 1) throw ConfigError("base_channels: must be >= 1, got " + std::to_string(base_channels));
        if (num_down_blocks < 1)
            throw ConfigError("num_down_blocks: must be >= 1, got " + std::to_string(num_down_blocks));
        if (num_residual_blocks < 1)
            throw ConfigError("num_residual_blocks: must be >= 1, got " + std::to_string(num_residual_blocks));
        if (channel_growth < 1) throw ConfigError("channel_growth: must be >= 1, got " + std::to_string(channel_growth));
        if (attention_reduction < 1)
            throw ConfigError("attention_reduction: must be >= 1, got " + std::to_string(attention_reduction));
        if (spatial_attention_kernel < 1 || spatial_attention_kernel % 2 == 0)
            throw ConfigError("spatial_attention_kernel: must be a positive odd integer, got " +
                              std::to_string(spatial_attention_kernel));
        if (dropout_p < 0.0 || dropout_p >= 1.0)
            throw ConfigError("dropout_p: must be in [0, 1), got " + std::to_string(dropout_p));
        if (init_std <= 0.0) throw ConfigError("init_std: must be > 0");
    }

    // Channel width after WRPM and after each down block: doubled (by
    // channel_growth) per stage, capped at 8x base. The decoder mirrors this
    // sequence in reverse.
    std::vector<int64_t> stage_widths() const {
        std::vector<int64_t> w{base_channels};
        for (int i = 0; i < num_down_blocks; ++i)
            w.push_back(std::min<int64_t>(w.back() * channel_growth, int64_t(8) * base_channels));
        return w;
    }

    int64_t downsample_factor() const { return int64_t(1) << num_down_blocks; }
};

// Ordered (name, shape) list of every trainable parameter, derived from the
// configuration alone. build_network() must produce exactly this manifest.
inline std::vector<std::pair<std::string, Shape>> parameter_manifest(const NetworkConfig& cfg) {
    cfg.validate();
    std::vector<std::pair<std::string, Shape>> m;
    auto widths = cfg.stage_widths();
    m.push_back({"wrpm.conv.weight", {cfg.base_channels, 3, 7, 7}});
    m.push_back({"wrpm.conv.bias", {cfg.base_channels}});
    for (int i = 0; i < cfg.num_down_blocks; ++i) {
        std::string p = "down" + std::to_string(i + 1) + ".";
        int64_t cin = widths[size_t(i)], cout = widths[size_t(i) + 1];
        int64_t hidden = bottleneck_width(cout, cfg.attention_reduction);
        int64_t k = cfg.spatial_attention_kernel;
        m.push_back({p + "conv.weight", {cout, cin, 4, 4}});
        m.push_back({p + "conv.bias", {cout}});
        m.push_back({p + "ca.fc1.weight", {hidden, cout}});
        m.push_back({p + "ca.fc2.weight", {cout, hidden}});
        m.push_back({p + "sa.conv.weight", {1, 2, k, k}});
    }
    int64_t bw = widths.back();
    for (int i = 0; i < cfg.num_residual_blocks; ++i) {
        std::string p = "res" + std::to_string(i + 1) + ".";
        m.push_back({p + "conv1.weight", {bw, bw, 3, 3}});
        m.push_back({p + "conv1.bias", {bw}});
        m.push_back({p + "conv2.weight", {bw, bw, 3, 3}});
        m.push_back({p + "conv2.bias", {bw}});
    }
    for (int i = 0; i < cfg.num_down_blocks; ++i) {
        std::string p = "up" + std::to_string(i + 1) + ".";
        int64_t cin = widths[size_t(cfg.num_down_blocks - i)];
        int64_t cout = widths[size_t(cfg.num_down_blocks - i - 1)];
        m.push_back({p + "deconv.weight", {cin, cout, 4, 4}});
        m.push_back({p + "deconv.bias", {cout}});
    }
    m.push_back({"fmsm.conv.weight", {3, cfg.base_channels, 7, 7}});
    m.push_back({"fmsm.conv.bias", {3}});
    return m;
}

template <typename T>
struct Network {
    struct ConvParams {
        Var<T> weight, bias;
    };
    struct DownBlock {
        ConvParams conv;
        ChannelAttentionParams<T> ca;
        SpatialAttentionParams<T> sa;
    };
    struct ResBlock {
        ConvParams conv1, conv2;
    };

    NetworkConfig config;
    ConvParams wrpm;
    std::vector<DownBlock> down;
    std::vector<ResBlock> res;
    std::vector<ConvParams> up;
    ConvParams fmsm;

    // Parameters in manifest order.
    std::vector<std::pair<std::string, Var<T>>> parameters() const {
        std::vector<std::pair<std::string, Var<T>>> ps;
        ps.push_back({"wrpm.conv.weight", wrpm.weight});
        ps.push_back({"wrpm.conv.bias", wrpm.bias});
        for (size_t i = 0; i < down.size(); ++i) {
            std::string p = "down" + std::to_string(i + 1) + ".";
            ps.push_back({p + "conv.weight", down[i].conv.weight});
            ps.push_back({p + "conv.bias", down[i].conv.bias});
            ps.push_back({p + "ca.fc1.weight", down[i].ca.fc1_w});
            ps.push_back({p + "ca.fc2.weight", down[i].ca.fc2_w});
            ps.push_back({p + "sa.conv.weight", down[i].sa.conv_w});
        }
        for (size_t i = 0; i < res.size(); ++i) {
            std::string p = "res" + std::to_string(i + 1) + ".";
            ps.push_back({p + "conv1.weight", res[i].conv1.weight});
            ps.push_back({p + "conv1.bias", res[i].conv1.bias});
            ps.push_back({p + "conv2.weight", res[i].conv2.weight});
            ps.push_back({p + "conv2.bias", res[i].conv2.bias});
        }
        for (size_t i = 0; i < up.size(); ++i) {
            std::string p = "up" + std::to_string(i + 1) + ".";
            ps.push_back({p + "deconv.weight", up[i].weight});
            ps.push_back({p + "deconv.bias", up[i].bias});
        }
        ps.push_back({"fmsm.conv.weight", fmsm.weight});
        ps.push_back({"fmsm.conv.bias", fmsm.bias});
        return ps;
    }

    void zero_grad() {
        for (auto& [name, p] : parameters()) p->zero_grad();
    }
};

namespace detail {

template <typename T>
typename Network<T>::ConvParams make_conv(Shape wshape, Rng& rng, double std) {
    Tensor<T> w(wshape);
    rng.fill_normal(w, 0.0, std);
    Tensor<T> b({wshape[0]});
    return {make_var(std::move(w), true), make_var(std::move(b), true)};
}

template <typename T>
typename Network<T>::ConvParams make_deconv(Shape wshape, Rng& rng, double std) {
    Tensor<T> w(wshape);
    rng.fill_normal(w, 0.0, std);
    Tensor<T> b({wshape[1]});
    return {make_var(std::move(w), true), make_var(std::move(b), true)};
}

}  // namespace detail

// Gaussian-initialized network (weights N(0, init_std), biases zero).
// Identical (config, seed) pairs produce bit-identical parameters.
template <typename T>
Network<T> build_network(const NetworkConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    Network<T> net;
    net.config = cfg;
    auto widths = cfg.stage_widths();
    const double s = cfg.init_std;
    net.wrpm = detail::make_conv<T>({cfg.base_channels, 3, 7, 7}, rng, s);
    for (int i = 0; i < cfg.num_down_blocks; ++i) {
        typename Network<T>::DownBlock b;
        b.conv = detail::make_conv<T>({widths[size_t(i) + 1], widths[size_t(i)], 4, 4}, rng, s);
        b.ca = ChannelAttentionParams<T>::make(widths[size_t(i) + 1], cfg.attention_reduction, rng, s);
        b.sa = SpatialAttentionParams<T>::make(cfg.spatial_attention_kernel, rng, s);
        net.down.push_back(std::move(b));
    }
    int64_t bw = widths.back();
    for (int i = 0; i < cfg.num_residual_blocks; ++i) {
        typename Network<T>::ResBlock b;
        b.conv1 = detail::make_conv<T>({bw, bw, 3, 3}, rng, s);
        b.conv2 = detail::make_conv<T>({bw, bw, 3, 3}, rng, s);
        net.res.push_back(std::move(b));
    }
    for (int i = 0; i < cfg.num_down_blocks; ++i) {
        int64_t cin = widths[size_t(cfg.num_down_blocks - i)];
        int64_t cout = widths[size_t(cfg.num_down_blocks - i - 1)];
        net.up.push_back(detail::make_deconv<T>({cin, cout, 4, 4}, rng, s));
    }
    net.fmsm = detail::make_conv<T>({3, cfg.base_channels, 7, 7}, rng, s);
    return net;
}

namespace detail {

template <typename T>
Var<T> apply_norm(NormKind kind, const Var<T>& x) {
    switch (kind) {
        case NormKind::instance: return instance_norm2d(x);
        case NormKind::batch: return batch_norm2d(x);
        default: return x;
    }
}

}  // namespace detail

// WRPM: reflection pad 3 -> 7x7 conv -> norm -> ReLU. Spatial size preserved.
template <typename T>
Var<T> wrpm_forward(const typename Network<T>::ConvParams& p, NormKind norm, const Var<T>& x) {
    if (x->value.rank() != 4 || x->value.dim(1) != p.weight->value.dim(1))
        throw ShapeError("wrpm_forward: expected " + std::to_string(p.weight->value.dim(1)) + "-channel NCHW input");
    return relu(detail::apply_norm(norm, conv2d(reflect_pad2d(x, 3), p.weight, p.bias, 1, 0)));
}

// ADM block: 4x4 stride-2 conv (pad 1) -> norm -> LeakyReLU -> optional
// dropout -> sequential channel+spatial attention. Halves H and W.
template <typename T>
Var<T> adm_block_forward(const typename Network<T>::DownBlock& b, const NetworkConfig& cfg, const Var<T>& x,
                         bool train_mode, Rng* rng) {
    int64_t H = x->value.dim(2), W = x->value.dim(3);
    if (H % 2 || W % 2)
        throw ShapeError("adm_block_forward: H and W must be even, got " + shape_str(x->value.shape));
    Var<T> y = leaky_relu(detail::apply_norm(cfg.norm_kind, conv2d(x, b.conv.weight, b.conv.bias, 2, 1)),
                          T(cfg.down_negative_slope));
    if (train_mode && cfg.dropout_down) {
        if (!rng) throw ConfigError("dropout: training-mode forward with dropout enabled requires an Rng");
        y = dropout(y, cfg.dropout_p, *rng);
    }
    return cbam_apply(b.ca, b.sa, y);
}

// Residual block: x + (pad -> 3x3 conv -> norm -> ReLU -> optional dropout
// -> pad -> 3x3 conv -> norm). Zeroed branch parameters give the identity map.
template <typename T>
Var<T> residual_block_forward(const typename Network<T>::ResBlock& b, const NetworkConfig& cfg, const Var<T>& x,
                              bool train_mode, Rng* rng) {
    if (x->value.dim(1) != b.conv1.weight->value.dim(1))
        throw ShapeError("residual_block_forward: channel mismatch, expected " +
                         std::to_string(b.conv1.weight->value.dim(1)) + " got " + std::to_string(x->value.dim(1)));
    Var<T> y = relu(detail::apply_norm(cfg.norm_kind, conv2d(reflect_pad2d(x, 1), b.conv1.weight, b.conv1.bias, 1, 0)));
    if (train_mode && cfg.dropout_residual) {
        if (!rng) throw ConfigError("dropout: training-mode forward with dropout enabled requires an Rng");
        y = dropout(y, cfg.dropout_p, *rng);
    }
    y = detail::apply_norm(cfg.norm_kind, conv2d(reflect_pad2d(y, 1), b.conv2.weight, b.conv2.bias, 1, 0));
    return add(x, y);
}

// UM block: 4x4 stride-2 transposed conv (pad 1) -> norm -> activation ->
// optional dropout. Doubles H and W.
template <typename T>
Var<T> um_block_forward(const typename Network<T>::ConvParams& p, const NetworkConfig& cfg, const Var<T>& x,
                        bool train_mode, Rng* rng) {
    Var<T> y = detail::apply_norm(cfg.norm_kind, conv_transpose2d(x, p.weight, p.bias, 2, 1));
    y = cfg.up_negative_slope > 0.0 ? leaky_relu(y, T(cfg.up_negative_slope)) : relu(y);
    if (train_mode && cfg.dropout_up) {
        if (!rng) throw ConfigError("dropout: training-mode forward with dropout enabled requires an Rng");
        y = dropout(y, cfg.dropout_p, *rng);
    }
    return y;
}

// FMSM: reflection pad 3 -> 7x7 conv -> Tanh. Smooths transposed-convolution
// checkerboard artifacts and maps outputs into [-1, 1].
template <typename T>
Var<T> fmsm_forward(const typename Network<T>::ConvParams& p, const Var<T>& x) {
    if (x->value.dim(1) != p.weight->value.dim(1))
        throw ShapeError("fmsm_forward: expected " + std::to_string(p.weight->value.dim(1)) + " input channels");
    return tanh_value(conv2d(reflect_pad2d(x, 3), p.weight, p.bias, 1, 0));
}

// Differentiable forward pass on graph variables. train_mode only controls
// dropout (normalization is frozen by construction); gradient tracking is
// orthogonal and follows grad_enabled().
template <typename T>
Var<T> forward_var(const Network<T>& net, const Var<T>& x, bool train_mode, Rng* rng = nullptr) {
    const Tensor<T>& v = x->value;
    if (v.rank() != 4) throw ShapeError("forward: expected NCHW input, got " + shape_str(v.shape));
    if (v.dim(1) != 3) throw ShapeError("forward: expected 3 input channels, got " + std::to_string(v.dim(1)));
    int64_t d = net.config.downsample_factor();
    if (v.dim(2) % d || v.dim(3) % d)
        throw ShapeError("forward: input H and W must be divisible by " + std::to_string(d) + " (2^num_down_blocks), got " +
                         shape_str(v.shape));
    Var<T> y = wrpm_forward<T>(net.wrpm, net.config.norm_kind, x);
    for (const auto& b : net.down) y = adm_block_forward<T>(b, net.config, y, train_mode, rng);
    for (const auto& b : net.res) y = residual_block_forward<T>(b, net.config, y, train_mode, rng);
    for (const auto& p : net.up) y = um_block_forward<T>(p, net.config, y, train_mode, rng);
    return fmsm_forward<T>(net.fmsm, y);
}

// Inference-style forward on image batches: no graph is built, output range
// is norm11 by the final Tanh.
template <typename T>
ImageBatch<T> forward(const Network<T>& net, const ImageBatch<T>& x, bool train_mode = false, Rng* rng = nullptr) {
    if (x.range != Range::norm11)
        throw ShapeError(std::string("forward: expected norm11 input batch, got ") + range_name(x.range));
    NoGradGuard ng;
    Var<T> out = forward_var(net, constant(x.data), train_mode, rng);
    return ImageBatch<T>{std::move(out->value), Range::norm11};
}

}  // namespace raune
