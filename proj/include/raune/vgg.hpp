#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "raune/checkpoint.hpp"
#include "raune/losses.hpp"

namespace raune {

// Frozen VGG19 (batch-norm variant) convolutional stack used by the semantic
// content loss. The five taps are the outputs of the last five convolutional
// layers (taken directly after each convolution, before its norm/activation).
//
// Weights load from a tensor container whose entries follow the torchvision
// state-dict naming for the `features` module, which doubles as the published
// layer manifest below. The container metadata must carry the input
// normalization constants the weights were trained with.

struct VggConvSpec {
    int feature_index;  // index of the conv inside the features stack
    int64_t in_channels;
    int64_t out_channels;
    bool pool_after;  // 2x2 max pool after this conv's activation
};

inline const std::vector<VggConvSpec>& vgg19_bn_conv_specs() {
    static const std::vector<VggConvSpec> specs = {
        {0, 3, 64, false},    {3, 64, 64, true},    {7, 64, 128, false},   {10, 128, 128, true},
        {14, 128, 256, false}, {17, 256, 256, false}, {20, 256, 256, false}, {23, 256, 256, true},
        {27, 256, 512, false}, {30, 512, 512, false}, {33, 512, 512, false}, {36, 512, 512, true},
        {40, 512, 512, false}, {43, 512, 512, false}, {46, 512, 512, false}, {49, 512, 512, false},
    };
    return specs;
}

inline constexpr int kVggTapCount = 5;

// Expected (name, shape) pairs for a vgg19_bn_features container.
inline std::vector<std::pair<std::string, Shape>> vgg19_bn_manifest() {
    std::vector<std::pair<std::string, Shape>> m;
    for (const auto& s : vgg19_bn_conv_specs()) {
        std::string conv = "features." + std::to_string(s.feature_index) + ".";
        std::string bn = "features." + std::to_string(s.feature_index + 1) + ".";
        m.push_back({conv + "weight", {s.out_channels, s.in_channels, 3, 3}});
        m.push_back({conv + "bias", {s.out_channels}});
        m.push_back({bn + "weight", {s.out_channels}});
        m.push_back({bn + "bias", {s.out_channels}});
        m.push_back({bn + "running_mean", {s.out_channels}});
        m.push_back({bn + "running_var", {s.out_channels}});
    }
    return m;
}

template <typename T>
class Vgg19BnFeatures : public FeatureExtractor<T> {
public:
    static Vgg19BnFeatures load(const std::filesystem::path& path) {
        Container<T> c = read_container<T>(path);
        if (!c.meta.contains("type") || c.meta["type"] != "vgg19_bn_features")
            throw CheckpointError(path.string() + ": expected a vgg19_bn_features container");
        auto manifest = vgg19_bn_manifest();
        if (c.tensors.size() != manifest.size())
            throw CheckpointError(path.string() + ": expected " + std::to_string(manifest.size()) +
                                  " tensors per the layer manifest, found " + std::to_string(c.tensors.size()));
        Vgg19BnFeatures out;
        auto grab = [&](const std::string& name, const Shape& shape) -> Tensor<T> {
            const Tensor<T>* t = c.find(name);
            if (!t) throw CheckpointError(path.string() + ": missing tensor '" + name + "'");
            if (t->shape != shape)
                throw CheckpointError(path.string() + ": shape mismatch for '" + name + "': stored " +
                                      shape_str(t->shape) + ", manifest " + shape_str(shape));
            return *t;
        };
        size_t mi = 0;
        for (const auto& s : vgg19_bn_conv_specs()) {
            Layer layer;
            layer.spec = s;
            layer.conv_w = make_var(grab(manifest[mi].first, manifest[mi].second), false);
            ++mi;
            layer.conv_b = make_var(grab(manifest[mi].first, manifest[mi].second), false);
            ++mi;
            layer.bn_gamma = grab(manifest[mi].first, manifest[mi].second);
            ++mi;
            layer.bn_beta = grab(manifest[mi].first, manifest[mi].second);
            ++mi;
            layer.bn_mean = grab(manifest[mi].first, manifest[mi].second);
            ++mi;
            layer.bn_var = grab(manifest[mi].first, manifest[mi].second);
            ++mi;
            out.layers_.push_back(std::move(layer));
        }
        auto read_triple = [&](const char* key) -> std::array<double, 3> {
            if (!c.meta.contains(key) || !c.meta[key].is_array() || c.meta[key].size() != 3)
                throw CheckpointError(path.string() + ": metadata missing 3-element '" + std::string(key) + "'");
            std::array<double, 3> a{};
            for (int i = 0; i < 3; ++i) a[size_t(i)] = c.meta[key][size_t(i)].template get<double>();
            return a;
        };
        out.input_mean_ = read_triple("input_mean");
        out.input_std_ = read_triple("input_std");
        return out;
    }

    // Taps at the last five convolutions. Input must be raw01 RGB with H and W
    // divisible by 16 (four pooling stages precede the tapped block).
    std::vector<Var<T>> features(const Var<T>& raw01) override {
        const Tensor<T>& v = raw01->value;
        if (v.rank() != 4 || v.dim(1) != 3) throw ShapeError("vgg features: expected (N,3,H,W) raw01 input");
        if (v.dim(2) % 16 || v.dim(3) % 16 || v.dim(2) < 16 || v.dim(3) < 16)
            throw ShapeError("vgg features: H and W must be multiples of 16, got " + shape_str(v.shape));
        Tensor<T> scale({3}), shift({3});
        for (int64_t c = 0; c < 3; ++c) {
            scale[c] = T(1.0 / input_std_[size_t(c)]);
            shift[c] = T(-input_mean_[size_t(c)] / input_std_[size_t(c)]);
        }
        Var<T> x = channel_affine(raw01, std::move(scale), std::move(shift));
        std::vector<Var<T>> taps;
        const int total = int(layers_.size());
        for (int i = 0; i < total; ++i) {
            const Layer& L = layers_[size_t(i)];
            x = conv2d(x, L.conv_w, L.conv_b, 1, 1);
            if (i >= total - kVggTapCount) taps.push_back(x);
            if (i == total - 1) break;
            x = relu(batch_norm2d_frozen(x, L.bn_gamma, L.bn_beta, L.bn_mean, L.bn_var));
            if (L.spec.pool_after) x = max_pool2d_2x2(x);
        }
        return taps;
    }

    std::string name() const override { return "vgg19_bn"; }

    const std::array<double, 3>& input_mean() const { return input_mean_; }
    const std::array<double, 3>& input_std() const { return input_std_; }

private:
    struct Layer {
        VggConvSpec spec{};
        Var<T> conv_w, conv_b;
        Tensor<T> bn_gamma, bn_beta, bn_mean, bn_var;
    };
    std::vector<Layer> layers_;
    std::array<double, 3> input_mean_{};
    std::array<double, 3> input_std_{};
};

}  // namespace raune
