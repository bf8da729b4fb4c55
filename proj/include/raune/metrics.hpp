#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "raune/data.hpp"
#include "raune/losses.hpp"
#include "raune/model.hpp"

namespace raune {

// Peak signal-to-noise ratio in dB over raw01 images (peak = 1):
// 10 * log10(1 / MSE). Identical images return +infinity, serialized as "inf".
template <typename T>
double psnr(const Tensor<T>& x, const Tensor<T>& y) {
    double m = mse(x, y);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / m);
}

// Mean SSIM; shares the windowed-statistics code path with the SSIM loss, so
// metric and loss agree by construction (metric = 1 - 2 * loss).
template <typename T>
double ssim_metric(const Tensor<T>& x, const Tensor<T>& y, const SsimParams& p) {
    NoGradGuard ng;
    Var<T> m = ssim_mean(constant(x), constant(y), p);
    return double(m->value[0]);
}

struct EvalRecord {
    std::string dataset;
    std::string image;
    double psnr = 0.0;
    double ssim = 0.0;
    bool ok = true;
    std::string error;
};

struct EvalReport {
    std::vector<EvalRecord> records;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    size_t evaluated = 0;
    size_t failed = 0;
};

// Same-size raw01 -> raw01 image transform under evaluation.
template <typename T>
using Enhancer = std::function<Tensor<T>(const Tensor<T>&)>;

template <typename T>
struct EvalOptions {
    SsimParams ssim;
    PreprocessSpec prep;           // evaluation resolution when not native
    bool native_resolution = false;
    std::string dataset_id;        // defaults to the dataset root's filename
};

// Runs the enhancer over every pair, in lexicographic image-id order. An
// unreadable or failing pair becomes an error record and the run continues.
// Summary means cover the successful records only.
template <typename T>
EvalReport evaluate_dataset(const Enhancer<T>& enhance, const PairedDataset& ds, const EvalOptions<T>& opts) {
    if (ds.entries.empty()) throw IoError("evaluate_dataset: empty dataset");
    std::string dataset_id = opts.dataset_id.empty() ? ds.root.filename().string() : opts.dataset_id;
    EvalReport report;
    double psnr_sum = 0.0, ssim_sum = 0.0;
    for (const auto& entry : ds.entries) {
        EvalRecord rec;
        rec.dataset = dataset_id;
        rec.image = entry.id;
        try {
            Tensor<T> input = load_image_raw01<T>(entry.input);
            Tensor<T> ref = load_image_raw01<T>(entry.target);
            if (!opts.native_resolution) {
                input = resize_bilinear(input, opts.prep.height, opts.prep.width);
                ref = resize_bilinear(ref, opts.prep.height, opts.prep.width);
            } else if (input.shape != ref.shape) {
                ref = resize_bilinear(ref, input.dim(1), input.dim(2));
            }
            Tensor<T> enhanced = enhance(input);
            check_same_shape(enhanced, ref, "evaluate_dataset");
            rec.psnr = psnr(enhanced, ref);
            rec.ssim = ssim_metric(enhanced, ref, opts.ssim);
            psnr_sum += rec.psnr;
            ssim_sum += rec.ssim;
            ++report.evaluated;
        } catch (const std::exception& e) {
            rec.ok = false;
            rec.error = e.what();
            rec.psnr = std::numeric_limits<double>::quiet_NaN();
            rec.ssim = std::numeric_limits<double>::quiet_NaN();
            ++report.failed;
        }
        report.records.push_back(std::move(rec));
    }
    if (report.evaluated) {
        report.mean_psnr = psnr_sum / double(report.evaluated);
        report.mean_ssim = ssim_sum / double(report.evaluated);
    }
    return report;
}

// Fixed-width metric formatting; infinities serialize as "inf"/"-inf".
inline std::string format_metric(double v, int decimals = 6) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

// CSV report: header `dataset,image,psnr,ssim`, one row per image, and a
// final `__summary__` row carrying the means. UTF-8, LF line endings.
inline void write_eval_csv(const std::filesystem::path& path, const EvalReport& report) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + path.string());
    os << "dataset,image,psnr,ssim\n";
    for (const auto& r : report.records)
        os << r.dataset << "," << r.image << "," << format_metric(r.psnr) << "," << format_metric(r.ssim) << "\n";
    std::string ds = report.records.empty() ? "" : report.records.front().dataset;
    os << ds << ",__summary__," << format_metric(report.mean_psnr) << "," << format_metric(report.mean_ssim) << "\n";
    if (!os) throw IoError("short write to " + path.string());
}

// Wraps a network as an Enhancer. keep_size reflect-pads to the next multiple
// of the downsampling factor, runs the forward pass and center-crops back.
// Without keep_size the input spatial size must already be divisible.
template <typename T>
Enhancer<T> make_network_enhancer(const Network<T>& net, bool keep_size) {
    return [&net, keep_size](const Tensor<T>& raw01) -> Tensor<T> {
        ImageBatch<T> batch;
        batch.data = stack_images<T>({raw01});
        batch.range = Range::raw01;
        ImageBatch<T> normalized = normalize(batch);
        Tensor<T> out;
        if (keep_size) {
            auto [padded, info] = reflect_pad_to_multiple(normalized.data, net.config.downsample_factor());
            ImageBatch<T> pb{std::move(padded), Range::norm11};
            out = crop(forward(net, pb).data, info);
        } else {
            out = forward(net, normalized).data;
        }
        ImageBatch<T> ob{std::move(out), Range::norm11};
        return slice_image(denormalize(ob).data, 0);
    };
}

// Pass-through enhancer (pipeline self-test: output column equals input).
template <typename T>
Enhancer<T> make_identity_enhancer() {
    return [](const Tensor<T>& raw01) { return raw01; };
}

}  // namespace raune
