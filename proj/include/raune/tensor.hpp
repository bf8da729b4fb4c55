#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "raune/errors.hpp"

namespace raune {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

// Dense row-major (C-order) numeric array. Rank-4 tensors follow the
// (N, C, H, W) layout convention throughout the library.
template <typename T>
struct Tensor {
    Shape shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), data(static_cast<size_t>(shape_numel(shape)), T(0)) {}
    Tensor(Shape s, T fill) : shape(std::move(s)), data(static_cast<size_t>(shape_numel(shape)), fill) {}

    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
    static Tensor full(Shape s, T v) { return Tensor(std::move(s), v); }
    static Tensor scalar(T v) { return Tensor(Shape{1}, v); }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }
    bool empty() const { return data.empty(); }

    T& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    // Rank-4 accessors, no bounds checks in release paths.
    int64_t idx4(int64_t n, int64_t c, int64_t h, int64_t w) const {
        return ((n * shape[1] + c) * shape[2] + h) * shape[3] + w;
    }
    T& at(int64_t n, int64_t c, int64_t h, int64_t w) { return data[static_cast<size_t>(idx4(n, c, h, w))]; }
    const T& at(int64_t n, int64_t c, int64_t h, int64_t w) const {
        return data[static_cast<size_t>(idx4(n, c, h, w))];
    }

    // Rank-3 (C, H, W) accessor for single images.
    T& at3(int64_t c, int64_t h, int64_t w) { return data[static_cast<size_t>((c * shape[1] + h) * shape[2] + w)]; }
    const T& at3(int64_t c, int64_t h, int64_t w) const {
        return data[static_cast<size_t>((c * shape[1] + h) * shape[2] + w)];
    }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    T min() const {
        T m = data.empty() ? T(0) : data[0];
        for (T v : data) m = std::min(m, v);
        return m;
    }
    T max() const {
        T m = data.empty() ? T(0) : data[0];
        for (T v : data) m = std::max(m, v);
        return m;
    }
    double sum() const {
        double s = 0;
        for (T v : data) s += static_cast<double>(v);
        return s;
    }
    double mean() const { return data.empty() ? 0.0 : sum() / static_cast<double>(data.size()); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

// Reflection indexing without edge repetition (valid for |i| <= n-1 overshoot).
inline int64_t reflect_index(int64_t i, int64_t n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "max_abs_diff");
    double m = 0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
    return m;
}

template <typename T>
double mse(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "mse");
    double s = 0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        double d = double(a[i]) - double(b[i]);
        s += d * d;
    }
    return a.numel() ? s / double(a.numel()) : 0.0;
}

}  // namespace raune
