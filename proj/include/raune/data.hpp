#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "raune/image.hpp"
#include "raune/tensor.hpp"

namespace raune {

namespace fs = std::filesystem;

// §: Paired sets live as root/input and root/target with matching filenames;
// pairing is extension-insensitive (a.jpg pairs with a.png) and ordering is
// lexicographic by shared stem, so iteration is deterministic for fixed
// directory contents.

inline bool has_image_ext(const fs::path& p) {
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    return e == ".png" || e == ".jpg" || e == ".jpeg";
}

struct PairedDataset {
    struct Entry {
        std::string id;  // shared stem
        fs::path input;
        fs::path target;
    };
    fs::path root;
    std::vector<Entry> entries;
    std::vector<std::string> warnings;

    size_t size() const { return entries.size(); }
};

struct UnpairedDataset {
    struct Entry {
        std::string id;
        fs::path input;
    };
    fs::path root;
    std::vector<Entry> entries;
    std::vector<std::string> warnings;

    size_t size() const { return entries.size(); }
};

namespace detail {

// stem -> path map of the image files directly inside dir.
inline std::map<std::string, fs::path> image_stems(const fs::path& dir, std::vector<std::string>& warnings) {
    std::map<std::string, fs::path> out;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && has_image_ext(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        auto [it, inserted] = out.emplace(f.stem().string(), f);
        if (!inserted)
            warnings.push_back("duplicate stem '" + f.stem().string() + "': ignoring " + f.string() + " in favor of " +
                               it->second.string());
    }
    return out;
}

}  // namespace detail

inline PairedDataset load_paired(const fs::path& root) {
    PairedDataset ds;
    ds.root = root;
    for (const char* sub : {"input", "target"})
        if (!fs::is_directory(root / sub))
            throw IoError("paired dataset root " + root.string() + " is missing the '" + sub + "' subdirectory");
    auto inputs = detail::image_stems(root / "input", ds.warnings);
    auto targets = detail::image_stems(root / "target", ds.warnings);
    for (const auto& [stem, path] : inputs) {
        auto it = targets.find(stem);
        if (it == targets.end()) {
            ds.warnings.push_back("input '" + path.filename().string() + "' has no matching target; excluded");
            continue;
        }
        ds.entries.push_back({stem, path, it->second});
    }
    for (const auto& [stem, path] : targets)
        if (!inputs.count(stem))
            ds.warnings.push_back("target '" + path.filename().string() + "' has no matching input; excluded");
    if (ds.entries.empty()) throw IoError("paired dataset " + root.string() + " has zero matched input/target pairs");
    return ds;  // std::map iteration already gives lexicographic stem order
}

inline UnpairedDataset load_unpaired(const fs::path& root) {
    UnpairedDataset ds;
    ds.root = root;
    if (!fs::is_directory(root)) throw IoError("dataset directory not found: " + root.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        if (has_image_ext(e.path()))
            files.push_back(e.path());
        else
            ds.warnings.push_back("skipping non-image file " + e.path().filename().string());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) ds.entries.push_back({f.stem().string(), f});
    if (ds.entries.empty()) throw IoError("no images found in " + root.string());
    return ds;
}

// ---------------------------------------------------------------------------
// Image decode / encode
// ---------------------------------------------------------------------------

// 8-bit image file -> (3, H, W) RGB tensor in [0, 1].
template <typename T>
Tensor<T> load_image_raw01(const fs::path& path) {
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw IoError("cannot decode image " + path.string());
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    cv::Mat f;
    rgb.convertTo(f, CV_32FC3, 1.0 / 255.0);
    Tensor<T> out({3, f.rows, f.cols});
    for (int h = 0; h < f.rows; ++h) {
        const cv::Vec3f* row = f.ptr<cv::Vec3f>(h);
        for (int w = 0; w < f.cols; ++w)
            for (int c = 0; c < 3; ++c) out.at3(c, h, w) = T(row[w][c]);
    }
    return out;
}

// Bilinear resize of a (3, H, W) tensor.
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& img, int64_t out_h, int64_t out_w) {
    if (img.rank() != 3) throw ShapeError("resize_bilinear: expected (C,H,W)");
    int64_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    if (H == out_h && W == out_w) return img;
    cv::Mat src(int(H), int(W), CV_32FC3);
    if (C != 3) throw ShapeError("resize_bilinear: expected 3 channels");
    for (int h = 0; h < H; ++h) {
        cv::Vec3f* row = src.ptr<cv::Vec3f>(h);
        for (int w = 0; w < W; ++w)
            for (int c = 0; c < 3; ++c) row[w][c] = float(img.at3(c, h, w));
    }
    cv::Mat dst;
    cv::resize(src, dst, cv::Size(int(out_w), int(out_h)), 0, 0, cv::INTER_LINEAR);
    Tensor<T> out({C, out_h, out_w});
    for (int h = 0; h < out_h; ++h) {
        const cv::Vec3f* row = dst.ptr<cv::Vec3f>(h);
        for (int w = 0; w < out_w; ++w)
            for (int c = 0; c < 3; ++c) out.at3(c, h, w) = T(row[w][c]);
    }
    return out;
}

struct PreprocessSpec {
    int64_t width = 256;
    int64_t height = 256;
    double mean = 0.5;
    double stddev = 0.5;

    void validate() const {
        if (width < 1 || height < 1) throw ConfigError("image_size: must be positive");
        if (!(stddev > 0.0)) throw ConfigError("preprocess stddev: must be > 0");
    }
};

// Decode -> bilinear resize to target -> raw01 -> (v - mean) / std. Returns a
// (3, h, w) tensor in the norm11 domain.
template <typename T>
Tensor<T> preprocess_file(const fs::path& path, const PreprocessSpec& spec) {
    spec.validate();
    Tensor<T> img = resize_bilinear(load_image_raw01<T>(path), spec.height, spec.width);
    for (auto& v : img.data) v = T((double(v) - spec.mean) / spec.stddev);
    return img;
}

// (3, H, W) raw01 -> 8-bit file; v maps to round(v * 255).
template <typename T>
void save_image(const Tensor<T>& img, const fs::path& path) {
    if (img.rank() != 3 || img.dim(0) != 3) throw ShapeError("save_image: expected (3,H,W), got " + shape_str(img.shape));
    const double tol = 1e-6;
    if (double(img.min()) < -tol || double(img.max()) > 1.0 + tol)
        throw ShapeError("save_image: values outside raw01 range [" + std::to_string(double(img.min())) + ", " +
                         std::to_string(double(img.max())) + "]");
    int64_t H = img.dim(1), W = img.dim(2);
    cv::Mat rgb(int(H), int(W), CV_8UC3);
    for (int h = 0; h < H; ++h) {
        cv::Vec3b* row = rgb.ptr<cv::Vec3b>(h);
        for (int w = 0; w < W; ++w)
            for (int c = 0; c < 3; ++c) {
                double v = std::min(1.0, std::max(0.0, double(img.at3(c, h, w))));
                row[w][c] = uchar(std::lround(v * 255.0));
            }
    }
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    if (!cv::imwrite(path.string(), bgr)) throw IoError("cannot write image " + path.string());
}

// ---------------------------------------------------------------------------
// Batch helpers
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> stack_images(const std::vector<Tensor<T>>& images) {
    if (images.empty()) throw ShapeError("stack_images: empty list");
    const Shape& s = images[0].shape;
    Tensor<T> out({int64_t(images.size()), s[0], s[1], s[2]});
    int64_t per = shape_numel(s);
    for (size_t i = 0; i < images.size(); ++i) {
        if (images[i].shape != s) throw ShapeError("stack_images: inconsistent image shapes");
        std::copy(images[i].data.begin(), images[i].data.end(), out.data.begin() + int64_t(i) * per);
    }
    return out;
}

template <typename T>
Tensor<T> slice_image(const Tensor<T>& batch, int64_t n) {
    if (batch.rank() != 4) throw ShapeError("slice_image: expected NCHW");
    Tensor<T> out({batch.dim(1), batch.dim(2), batch.dim(3)});
    int64_t per = out.numel();
    std::copy_n(batch.data.begin() + n * per, per, out.data.begin());
    return out;
}

// ---------------------------------------------------------------------------
// Arbitrary-size inference support: reflect-pad up to the next multiple of the
// downsampling factor, then crop the centered original region back out.
// ---------------------------------------------------------------------------

struct PadInfo {
    int64_t top = 0, left = 0, height = 0, width = 0;  // original region inside the padded frame
};

template <typename T>
std::pair<Tensor<T>, PadInfo> reflect_pad_to_multiple(const Tensor<T>& batch, int64_t multiple) {
    if (batch.rank() != 4) throw ShapeError("reflect_pad_to_multiple: expected NCHW");
    int64_t N = batch.dim(0), C = batch.dim(1), H = batch.dim(2), W = batch.dim(3);
    int64_t Hp = (H + multiple - 1) / multiple * multiple;
    int64_t Wp = (W + multiple - 1) / multiple * multiple;
    PadInfo info{(Hp - H) / 2, (Wp - W) / 2, H, W};
    if (Hp - H > H - 1 || Wp - W > W - 1)
        throw ShapeError("reflect_pad_to_multiple: image " + shape_str(batch.shape) +
                         " too small to pad to a multiple of " + std::to_string(multiple));
    if (Hp == H && Wp == W) return {batch, info};
    Tensor<T> out({N, C, Hp, Wp});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t h = 0; h < Hp; ++h) {
                int64_t sh = reflect_index(h - info.top, H);
                for (int64_t w = 0; w < Wp; ++w) out.at(n, c, h, w) = batch.at(n, c, sh, reflect_index(w - info.left, W));
            }
    return {out, info};
}

template <typename T>
Tensor<T> crop(const Tensor<T>& batch, const PadInfo& info) {
    if (batch.rank() != 4) throw ShapeError("crop: expected NCHW");
    int64_t N = batch.dim(0), C = batch.dim(1);
    Tensor<T> out({N, C, info.height, info.width});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t h = 0; h < info.height; ++h)
                for (int64_t w = 0; w < info.width; ++w)
                    out.at(n, c, h, w) = batch.at(n, c, h + info.top, w + info.left);
    return out;
}

// ---------------------------------------------------------------------------
// Tile grid (training previews)
// ---------------------------------------------------------------------------

// rows x cols raw01 tiles of identical size composed on a white background.
// Output width = cols * tile_w + (cols + 1) * gutter, similarly for height.
template <typename T>
Tensor<T> make_image_grid(const std::vector<std::vector<Tensor<T>>>& rows, int64_t gutter = 2) {
    if (rows.empty() || rows[0].empty()) throw ShapeError("make_image_grid: empty grid");
    const Shape& s = rows[0][0].shape;
    if (s.size() != 3 || s[0] != 3) throw ShapeError("make_image_grid: tiles must be (3,H,W)");
    int64_t th = s[1], tw = s[2];
    int64_t R = int64_t(rows.size()), C = int64_t(rows[0].size());
    Tensor<T> grid({3, R * th + (R + 1) * gutter, C * tw + (C + 1) * gutter}, T(1));
    for (int64_t r = 0; r < R; ++r) {
        if (int64_t(rows[size_t(r)].size()) != C) throw ShapeError("make_image_grid: ragged rows");
        for (int64_t c = 0; c < C; ++c) {
            const Tensor<T>& tile = rows[size_t(r)][size_t(c)];
            if (tile.shape != s) throw ShapeError("make_image_grid: inconsistent tile shapes");
            int64_t oh = gutter + r * (th + gutter), ow = gutter + c * (tw + gutter);
            for (int64_t ch = 0; ch < 3; ++ch)
                for (int64_t h = 0; h < th; ++h)
                    for (int64_t w = 0; w < tw; ++w) grid.at3(ch, oh + h, ow + w) = tile.at3(ch, h, w);
        }
    }
    return grid;
}

}  // namespace raune
