#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "raune/ops.hpp"

namespace raune {

// Training objective: L = lambda_pcont * L_pcont + lambda_ssim * L_ssim +
// lambda_scont * L_scont. Pixel and SSIM terms are evaluated in the raw01
// domain (so the SSIM dynamic range is 1); the semantic term feeds raw01
// images through a frozen classification backbone.

struct LossWeights {
    double pcont = 1.0;
    double ssim = 1.0;
    double scont = 1.0;

    void validate() const {
        for (double v : {pcont, ssim, scont})
            if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("loss weights: must be finite and >= 0");
    }
};

enum class WindowKind { gaussian, uniform };

struct SsimParams {
    double c1 = 1e-4;  // (0.01 * L)^2 with L = 1
    double c2 = 9e-4;  // (0.03 * L)^2 with L = 1
    WindowKind window = WindowKind::gaussian;
    int window_size = 11;
    double sigma = 1.5;
    double value_range = 1.0;

    static SsimParams for_range(double L, int size = 11, double sigma = 1.5) {
        SsimParams p;
        p.c1 = (0.01 * L) * (0.01 * L);
        p.c2 = (0.03 * L) * (0.03 * L);
        p.window_size = size;
        p.sigma = sigma;
        p.value_range = L;
        return p;
    }

    void validate() const {
        if (!(c1 > 0.0) || !(c2 > 0.0)) throw ConfigError("ssim: c1 and c2 must be > 0");
        if (window_size < 1 || window_size % 2 == 0)
            throw ConfigError("ssim: window_size must be a positive odd integer, got " + std::to_string(window_size));
        if (window == WindowKind::gaussian && !(sigma > 0.0)) throw ConfigError("ssim: sigma must be > 0");
        if (!(value_range > 0.0)) throw ConfigError("ssim: value_range must be > 0");
    }
};

// Normalized 2-D window (sums to 1).
template <typename T>
Tensor<T> ssim_window(const SsimParams& p) {
    p.validate();
    int n = p.window_size;
    Tensor<T> w({n, n});
    if (p.window == WindowKind::uniform) {
        w.fill(T(1) / T(n * n));
        return w;
    }
    std::vector<double> g(static_cast<size_t>(n), 0.0);
    double sum = 0;
    int half = n / 2;
    for (int i = 0; i < n; ++i) {
        g[size_t(i)] = std::exp(-double((i - half) * (i - half)) / (2.0 * p.sigma * p.sigma));
        sum += g[size_t(i)];
    }
    for (auto& v : g) v /= sum;
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) w[r * n + c] = T(g[size_t(r)] * g[size_t(c)]);
    return w;
}

// Mean absolute difference over all elements.
template <typename T>
Var<T> pixel_content_loss(const Var<T>& y_e, const Var<T>& y_ref) {
    check_same_shape(y_e->value, y_ref->value, "pixel_content_loss");
    return mean_all(abs_value(sub(y_e, y_ref)));
}

// Per-pixel structural similarity map from windowed local statistics:
//   SSIM = (2 mu_x mu_y + c1)(2 sigma_xy + c2) /
//          ((mu_x^2 + mu_y^2 + c1)(sigma_x^2 + sigma_y^2 + c2))
// Valid-mode windowing: the map is (H - w + 1) x (W - w + 1) per channel.
template <typename T>
Var<T> ssim_index_map(const Var<T>& x, const Var<T>& y, const SsimParams& p) {
    check_same_shape(x->value, y->value, "ssim_index_map");
    if (x->value.rank() != 4) throw ShapeError("ssim_index_map: expected NCHW");
    Tensor<T> w = ssim_window<T>(p);
    Var<T> mu_x = depthwise_filter2d(x, w);
    Var<T> mu_y = depthwise_filter2d(y, w);
    Var<T> mu_xx = square(mu_x);
    Var<T> mu_yy = square(mu_y);
    Var<T> mu_xy = mul(mu_x, mu_y);
    Var<T> sigma_xx = sub(depthwise_filter2d(square(x), w), mu_xx);
    Var<T> sigma_yy = sub(depthwise_filter2d(square(y), w), mu_yy);
    Var<T> sigma_xy = sub(depthwise_filter2d(mul(x, y), w), mu_xy);
    const T c1 = T(p.c1), c2 = T(p.c2);
    Var<T> num = mul(add_scalar(mul_scalar(mu_xy, T(2)), c1), add_scalar(mul_scalar(sigma_xy, T(2)), c2));
    Var<T> den = mul(add_scalar(add(mu_xx, mu_yy), c1), add_scalar(add(sigma_xx, sigma_yy), c2));
    return div(num, den);
}

template <typename T>
Var<T> ssim_mean(const Var<T>& x, const Var<T>& y, const SsimParams& p) {
    return mean_all(ssim_index_map(x, y, p));
}

// (1 - mean SSIM) / 2, in [0, 1].
template <typename T>
Var<T> ssim_loss(const Var<T>& y_e, const Var<T>& y_ref, const SsimParams& p) {
    return mul_scalar(add_scalar(mul_scalar(ssim_mean(y_e, y_ref, p), T(-1)), T(1)), T(0.5));
}

// Feature taps for the semantic content loss. Implementations receive a raw01
// image batch and return the five deep feature maps (applying any
// backbone-specific input normalization themselves).
template <typename T>
struct FeatureExtractor {
    virtual ~FeatureExtractor() = default;
    virtual std::vector<Var<T>> features(const Var<T>& raw01) = 0;
    virtual std::string name() const = 0;
};

// Pass-through taps: five copies of the input. Useful as a fast stand-in and
// for exercising the loss independently of backbone weights.
template <typename T>
struct IdentityFeatureExtractor : FeatureExtractor<T> {
    std::vector<Var<T>> features(const Var<T>& raw01) override { return {raw01, raw01, raw01, raw01, raw01}; }
    std::string name() const override { return "identity"; }
};

// Configuration for the semantic loss: where the backbone weights live and
// the five tap weights k_i.
struct FeatureExtractorSpec {
    std::string weights_path;
    std::array<double, 5> tap_weights{1.0, 1.0, 1.0, 1.0, 1.0};

    void validate() const {
        for (double k : tap_weights)
            if (!(k >= 0.0) || !std::isfinite(k)) throw ConfigError("tap_weights: must be finite and >= 0");
    }
};

// Sum over the five taps of k_i * MAE(features_i(y_e), features_i(y_ref)).
template <typename T>
Var<T> semantic_content_loss(const Var<T>& y_e_raw01, const Var<T>& y_ref_raw01, FeatureExtractor<T>& extractor,
                             const std::array<double, 5>& tap_weights) {
    check_same_shape(y_e_raw01->value, y_ref_raw01->value, "semantic_content_loss");
    std::vector<Var<T>> fe = extractor.features(y_e_raw01);
    std::vector<Var<T>> fr = extractor.features(y_ref_raw01);
    if (fe.size() != 5 || fr.size() != 5)
        throw ConfigError("semantic_content_loss: extractor '" + extractor.name() + "' must expose exactly 5 taps, got " +
                          std::to_string(fe.size()));
    Var<T> total;
    for (size_t i = 0; i < 5; ++i) {
        Var<T> term = mul_scalar(mean_all(abs_value(sub(fe[i], fr[i]))), T(tap_weights[i]));
        total = total ? add(total, term) : term;
    }
    return total;
}

template <typename T>
struct TotalLoss {
    Var<T> total;
    double pcont = 0.0;
    double ssim = 0.0;
    double scont = 0.0;
    double value() const { return double(total->value[0]); }
};

// Weighted combination on norm11 network outputs. Inputs are mapped back to
// raw01 before the pixel/SSIM terms so the SSIM range constant L = 1 is
// valid; terms with zero weight are skipped entirely.
template <typename T>
TotalLoss<T> total_loss(const Var<T>& y_e_norm11, const Var<T>& y_ref_norm11, const LossWeights& w,
                        const SsimParams& ssim_params, FeatureExtractor<T>* extractor,
                        const std::array<double, 5>& tap_weights = {1, 1, 1, 1, 1}) {
    w.validate();
    check_same_shape(y_e_norm11->value, y_ref_norm11->value, "total_loss");
    Var<T> y_e = add_scalar(mul_scalar(y_e_norm11, T(0.5)), T(0.5));
    Var<T> y_ref = add_scalar(mul_scalar(y_ref_norm11, T(0.5)), T(0.5));

    TotalLoss<T> out;
    Var<T> acc;
    auto contribute = [&acc](const Var<T>& term, double lambda) {
        Var<T> weighted = mul_scalar(term, T(lambda));
        acc = acc ? add(acc, weighted) : weighted;
    };
    if (w.pcont > 0.0) {
        Var<T> l = pixel_content_loss(y_e, y_ref);
        out.pcont = double(l->value[0]);
        contribute(l, w.pcont);
    }
    if (w.ssim > 0.0) {
        Var<T> l = ssim_loss(y_e, y_ref, ssim_params);
        out.ssim = double(l->value[0]);
        contribute(l, w.ssim);
    }
    if (w.scont > 0.0) {
        if (!extractor)
            throw ConfigError("total_loss: lambda_scont > 0 requires a feature extractor (backbone weights)");
        Var<T> l = semantic_content_loss(y_e, y_ref, *extractor, tap_weights);
        out.scont = double(l->value[0]);
        contribute(l, w.scont);
    }
    out.total = acc ? acc : constant(Tensor<T>::scalar(T(0)));
    return out;
}

}  // namespace raune
