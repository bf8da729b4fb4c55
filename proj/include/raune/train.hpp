#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "raune/checkpoint.hpp"
#include "raune/data.hpp"
#include "raune/losses.hpp"
#include "raune/metrics.hpp"
#include "raune/model.hpp"
#include "raune/optim.hpp"

namespace raune {

struct TrainConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    int epochs = 100;
    int batch_size = 8;
    int checkpoint_every_epochs = 5;
    int64_t preview_every_iters = 500;  // 0 disables previews
    uint64_t seed = 0;
    bool deterministic = true;
    LossWeights weights;
    SsimParams ssim;
    std::array<double, 5> tap_weights{1.0, 1.0, 1.0, 1.0, 1.0};

    void validate() const {
        AdamConfig{lr, beta1, beta2}.validate();
        if (epochs < 1) throw ConfigError("epochs: must be >= 1, got " + std::to_string(epochs));
        if (batch_size < 1) throw ConfigError("batch_size: must be >= 1, got " + std::to_string(batch_size));
        if (checkpoint_every_epochs < 1) throw ConfigError("checkpoint_every: must be >= 1");
        if (preview_every_iters < 0) throw ConfigError("preview_every: must be >= 0");
        weights.validate();
        ssim.validate();
    }
};

struct LossRow {
    int64_t iter = 0;
    int epoch = 0;
    double total = 0, pcont = 0, ssim = 0, scont = 0;
};

inline std::string loss_row_csv(const LossRow& r) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%lld,%d,%.9g,%.9g,%.9g,%.9g", (long long)r.iter, r.epoch, r.total, r.pcont,
                  r.ssim, r.scont);
    return buf;
}

template <typename T>
struct StepResult {
    double total = 0, pcont = 0, ssim = 0, scont = 0;
};

// One Adam update on the gradients of the weighted total loss. Aborts on a
// non-finite loss before touching the parameters, naming the batch and the
// per-component values.
template <typename T>
StepResult<T> training_step(Network<T>& net, Adam<T>& opt, const ImageBatch<T>& x, const ImageBatch<T>& y,
                            const LossWeights& w, const SsimParams& sp, FeatureExtractor<T>* extractor,
                            const std::array<double, 5>& tap_weights, Rng* dropout_rng,
                            const std::vector<std::string>& batch_ids) {
    if (x.range != Range::norm11 || y.range != Range::norm11)
        throw ShapeError("training_step: expected norm11 batches");
    check_same_shape(x.data, y.data, "training_step");
    net.zero_grad();
    Var<T> out = forward_var(net, constant(x.data), /*train_mode=*/true, dropout_rng);
    TotalLoss<T> loss = total_loss(out, constant(y.data), w, sp, extractor, tap_weights);
    StepResult<T> res{loss.value(), loss.pcont, loss.ssim, loss.scont};
    if (!std::isfinite(res.total) || !std::isfinite(res.pcont) || !std::isfinite(res.ssim) ||
        !std::isfinite(res.scont)) {
        std::ostringstream os;
        os << "non-finite loss: total=" << res.total << " pcont=" << res.pcont << " ssim=" << res.ssim
           << " scont=" << res.scont << " batch=[";
        for (size_t i = 0; i < batch_ids.size(); ++i) os << (i ? "," : "") << batch_ids[i];
        os << "]";
        throw Error(os.str());
    }
    backward(loss.total);
    opt.step();
    return res;
}

// Preview grid: one column per sample; rows are input, enhanced output and
// (when available) reference, all at the preprocessing resolution.
template <typename T>
void write_preview(const Network<T>& net, const std::vector<PairedDataset::Entry>& samples,
                   const PreprocessSpec& pp, const std::filesystem::path& path, int64_t gutter = 2) {
    if (samples.empty()) throw ConfigError("write_preview: no samples");
    Enhancer<T> enhance = make_network_enhancer(net, /*keep_size=*/true);
    std::vector<Tensor<T>> inputs, outputs, refs;
    bool have_refs = true;
    for (const auto& s : samples) {
        Tensor<T> in01 = resize_bilinear(load_image_raw01<T>(s.input), pp.height, pp.width);
        outputs.push_back(enhance(in01));
        inputs.push_back(std::move(in01));
        if (s.target.empty())
            have_refs = false;
        else
            refs.push_back(resize_bilinear(load_image_raw01<T>(s.target), pp.height, pp.width));
    }
    std::vector<std::vector<Tensor<T>>> rows{std::move(inputs), std::move(outputs)};
    if (have_refs) rows.push_back(std::move(refs));
    save_image(make_image_grid(rows, gutter), path);
}

template <typename T>
struct TrainResult {
    int64_t iterations = 0;
    int epochs_done = 0;
    std::filesystem::path final_checkpoint;
    std::vector<LossRow> history;
};

// Epoch-driven training loop. Data order is reshuffled per epoch with an RNG
// derived from (seed, epoch) alone, and the dropout stream from (seed, iter),
// so a run resumed from any checkpoint replays exactly the iterations an
// uninterrupted run would have executed.
//
// Artifacts in out_dir: loss_history.csv (`iter,epoch,total,pcont,ssim,scont`,
// one row per iteration), checkpoint_epochNNNN.rtc every
// checkpoint_every_epochs, checkpoint_final.rtc, and preview_iterNNNNNN.png
// every preview_every_iters (4 fixed samples chosen at run start).
template <typename T>
TrainResult<T> train(Network<T>& net, const TrainConfig& cfg, const PairedDataset& data, const PreprocessSpec& pp,
                     const std::filesystem::path& out_dir, FeatureExtractor<T>* extractor = nullptr,
                     const PairedDataset* preview_set = nullptr, const OptimizerState<T>* resume_opt = nullptr,
                     int start_epoch = 0, int64_t start_iter = 0) {
    cfg.validate();
    pp.validate();
    if (data.entries.empty()) throw IoError("train: empty dataset");
    if (cfg.weights.scont > 0.0 && !extractor)
        throw ConfigError("lambda_scont > 0 requires backbone weights (semantic content loss)");
    std::filesystem::create_directories(out_dir);

    Adam<T> opt(net.parameters(), AdamConfig{cfg.lr, cfg.beta1, cfg.beta2});
    if (resume_opt) opt.restore(*resume_opt);

    std::ofstream loss_csv;
    if (start_iter == 0) {
        loss_csv.open(out_dir / "loss_history.csv", std::ios::binary | std::ios::trunc);
        loss_csv << "iter,epoch,total,pcont,ssim,scont\n";
    } else {
        loss_csv.open(out_dir / "loss_history.csv", std::ios::binary | std::ios::app);
    }
    if (!loss_csv) throw IoError("cannot write loss_history.csv under " + out_dir.string());

    // First four samples (sorted id) of the designated preview set.
    const PairedDataset& psrc = preview_set ? *preview_set : data;
    std::vector<PairedDataset::Entry> preview_samples(
        psrc.entries.begin(), psrc.entries.begin() + std::min<size_t>(4, psrc.entries.size()));

    TrainResult<T> result;
    result.iterations = start_iter;
    int64_t iter = start_iter;
    for (int epoch = start_epoch + 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<size_t> order(data.entries.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng(cfg.seed ^ (0x9E3779B97F4A7C15ull * uint64_t(epoch)));
        shuffle_rng.shuffle(order);

        for (size_t start = 0; start < order.size(); start += size_t(cfg.batch_size)) {
            size_t stop = std::min(order.size(), start + size_t(cfg.batch_size));
            std::vector<Tensor<T>> xs, ys;
            std::vector<std::string> ids;
            for (size_t i = start; i < stop; ++i) {
                const auto& e = data.entries[order[i]];
                xs.push_back(preprocess_file<T>(e.input, pp));
                ys.push_back(preprocess_file<T>(e.target, pp));
                ids.push_back(e.id);
            }
            ImageBatch<T> xb{stack_images(xs), Range::norm11};
            ImageBatch<T> yb{stack_images(ys), Range::norm11};
            Rng dropout_rng(cfg.seed ^ (0x100000001B3ull * uint64_t(iter + 1)));
            StepResult<T> step =
                training_step(net, opt, xb, yb, cfg.weights, cfg.ssim, extractor, cfg.tap_weights, &dropout_rng, ids);
            ++iter;
            LossRow row{iter, epoch, step.total, step.pcont, step.ssim, step.scont};
            loss_csv << loss_row_csv(row) << "\n";
            loss_csv.flush();
            result.history.push_back(row);
            if (cfg.preview_every_iters > 0 && iter % cfg.preview_every_iters == 0 && !preview_samples.empty()) {
                char name[48];
                std::snprintf(name, sizeof(name), "preview_iter%06lld.png", (long long)iter);
                write_preview(net, preview_samples, pp, out_dir / name);
            }
        }

        if (epoch % cfg.checkpoint_every_epochs == 0) {
            char name[48];
            std::snprintf(name, sizeof(name), "checkpoint_epoch%04d.rtc", epoch);
            save_checkpoint(out_dir / name, net, &opt.state(), epoch, iter);
        }
        result.epochs_done = epoch;
    }

    result.iterations = iter;
    result.final_checkpoint = out_dir / "checkpoint_final.rtc";
    save_checkpoint(result.final_checkpoint, net, &opt.state(), cfg.epochs, iter);
    return result;
}

}  // namespace raune
