#pragma once

#include <string>

#include "raune/tensor.hpp"

namespace raune {

// Value-range convention for image tensors:
//   raw01  -> pixel values in [0, 1]
//   norm11 -> normalized to [-1, 1] (the network's input/output domain)
enum class Range { raw01, norm11 };

inline const char* range_name(Range r) { return r == Range::raw01 ? "raw01" : "norm11"; }

// A rank-4 (N, C, H, W) image tensor with a declared value range.
template <typename T>
struct ImageBatch {
    Tensor<T> data;
    Range range = Range::raw01;

    int64_t batch() const { return data.dim(0); }
    int64_t channels() const { return data.dim(1); }
    int64_t height() const { return data.dim(2); }
    int64_t width() const { return data.dim(3); }

    // Checks rank, N >= 1, H,W >= 1 and that every value lies inside the
    // declared range (with a small float tolerance).
    void validate(bool require_rgb = true) const {
        if (data.rank() != 4) throw ShapeError("ImageBatch: expected rank-4 (N,C,H,W), got " + shape_str(data.shape));
        if (batch() < 1 || height() < 1 || width() < 1)
            throw ShapeError("ImageBatch: degenerate shape " + shape_str(data.shape));
        if (require_rgb && channels() != 3)
            throw ShapeError("ImageBatch: expected 3 channels at the network boundary, got " +
                             std::to_string(channels()));
        const double lo = range == Range::raw01 ? 0.0 : -1.0;
        const double tol = 1e-5;
        double mn = double(data.min()), mx = double(data.max());
        if (mn < lo - tol || mx > 1.0 + tol)
            throw ShapeError(std::string("ImageBatch: values [") + std::to_string(mn) + ", " + std::to_string(mx) +
                             "] outside declared range " + range_name(range));
    }
};

// (v - mean) / std with the 0.5/0.5 convention: raw01 -> norm11.
template <typename T>
ImageBatch<T> normalize(const ImageBatch<T>& b, double mean = 0.5, double stddev = 0.5) {
    if (b.range != Range::raw01) throw ShapeError("normalize: expected raw01 input");
    ImageBatch<T> out;
    out.data = Tensor<T>(b.data.shape);
    out.range = Range::norm11;
    for (int64_t i = 0; i < b.data.numel(); ++i)
        out.data[i] = static_cast<T>((double(b.data[i]) - mean) / stddev);
    return out;
}

// Inverse of normalize, clamped to [0, 1].
template <typename T>
ImageBatch<T> denormalize(const ImageBatch<T>& b, double mean = 0.5, double stddev = 0.5) {
    if (b.range != Range::norm11) throw ShapeError("denormalize: expected norm11 input");
    ImageBatch<T> out;
    out.data = Tensor<T>(b.data.shape);
    out.range = Range::raw01;
    for (int64_t i = 0; i < b.data.numel(); ++i) {
        double v = double(b.data[i]) * stddev + mean;
        out.data[i] = static_cast<T>(std::min(1.0, std::max(0.0, v)));
    }
    return out;
}

}  // namespace raune
