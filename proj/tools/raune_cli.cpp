// Command-line entry points: train, eval, enhance.
//
// Exit codes: 0 success, 1 configuration/validation error, 2 runtime error.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include "raune/raune.hpp"

namespace fs = std::filesystem;
using Scalar = float;

namespace {

struct CommonFlags {
    std::string config_path;
    std::string output_dir;
    bool output_dir_set = false;
};

std::string join_args(int argc, char** argv) {
    std::ostringstream os;
    for (int i = 0; i < argc; ++i) os << (i ? " " : "") << argv[i];
    return os.str();
}

void print_warnings(const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

// Backbone weights resolution: explicit config key first, then
// $RAUNE_WEIGHTS_DIR/vgg19_bn_features.rtc.
std::string resolve_backbone(const raune::RunSettings& s) {
    if (!s.backbone_weights.empty()) return s.backbone_weights;
    if (const char* dir = std::getenv("RAUNE_WEIGHTS_DIR"))
        return (fs::path(dir) / "vgg19_bn_features.rtc").string();
    return "";
}

struct TrainArgs {
    CommonFlags common;
    std::string data_dir, preview_dir, resume_path;
    int epochs = 0;
    bool epochs_set = false;
    double lr = 0;
    bool lr_set = false;
    int batch_size = 0;
    bool batch_set = false;
    int64_t seed = 0;
    bool seed_set = false;
    bool deterministic = false;
    bool deterministic_set = false;
};

int cmd_train(const TrainArgs& a, const std::string& command) {
    raune::RunSettings settings;
    raune::PairedDataset dataset;
    std::unique_ptr<raune::PairedDataset> preview;
    std::optional<raune::LoadedCheckpoint<Scalar>> resume;
    std::unique_ptr<raune::Vgg19BnFeatures<Scalar>> backbone;

    try {
        raune::KeyValues kv;
        if (!a.common.config_path.empty()) kv = raune::KeyValues::parse_file(a.common.config_path);
        settings = raune::RunSettings::from_kv(kv);
        // Flags override config file values; the manifest records the winner.
        if (!a.data_dir.empty()) settings.train_root = a.data_dir;
        if (!a.preview_dir.empty()) settings.preview_root = a.preview_dir;
        if (a.epochs_set) settings.train.epochs = a.epochs;
        if (a.lr_set) settings.train.lr = a.lr;
        if (a.batch_set) settings.train.batch_size = a.batch_size;
        if (a.seed_set) settings.train.seed = uint64_t(a.seed);
        if (a.deterministic_set) settings.train.deterministic = a.deterministic;
        if (a.common.output_dir_set) settings.output_dir = a.common.output_dir;
        settings.backbone_weights = resolve_backbone(settings);
        settings.validate_for_training();

        dataset = raune::load_paired(settings.train_root);
        print_warnings(dataset.warnings);
        if (!settings.preview_root.empty()) {
            preview = std::make_unique<raune::PairedDataset>(raune::load_paired(settings.preview_root));
            print_warnings(preview->warnings);
        }
        if (settings.train.weights.scont > 0.0)
            backbone = std::make_unique<raune::Vgg19BnFeatures<Scalar>>(
                raune::Vgg19BnFeatures<Scalar>::load(settings.backbone_weights));
        if (!a.resume_path.empty()) resume = raune::load_checkpoint<Scalar>(a.resume_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        fs::create_directories(settings.output_dir);
        raune::Network<Scalar> net;
        int start_epoch = 0;
        int64_t start_iter = 0;
        const raune::OptimizerState<Scalar>* opt_state = nullptr;
        if (resume) {
            net = std::move(resume->net);
            settings.net = net.config;
            start_epoch = resume->meta.epoch;
            start_iter = resume->meta.iteration;
            if (resume->opt) opt_state = &*resume->opt;
            std::cout << "resuming from epoch " << start_epoch << " (iteration " << start_iter << ")\n";
        } else {
            net = raune::build_network<Scalar>(settings.net, settings.train.seed);
        }
        raune::write_manifest(fs::path(settings.output_dir) / "manifest.cfg", settings, command);

        raune::TrainResult<Scalar> result =
            raune::train(net, settings.train, dataset, settings.prep, settings.output_dir, backbone.get(),
                         preview.get(), opt_state, start_epoch, start_iter);
        std::cout << "trained " << result.epochs_done << " epochs, " << result.iterations << " iterations\n"
                  << "final checkpoint: " << result.final_checkpoint.string() << "\n";
        if (!result.history.empty()) {
            const auto& last = result.history.back();
            std::cout << "final loss: total " << raune::format_metric(last.total, 6) << " (pcont "
                      << raune::format_metric(last.pcont, 6) << ", ssim " << raune::format_metric(last.ssim, 6)
                      << ", scont " << raune::format_metric(last.scont, 6) << ")\n";
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

struct EvalArgs {
    CommonFlags common;
    std::string checkpoint, dataset_dir, resolution = "256";
    bool identity = false;
};

int cmd_eval(const EvalArgs& a, const std::string& command) {
    raune::RunSettings settings;
    raune::PairedDataset dataset;
    std::optional<raune::LoadedCheckpoint<Scalar>> loaded;
    try {
        raune::KeyValues kv;
        if (!a.common.config_path.empty()) kv = raune::KeyValues::parse_file(a.common.config_path);
        settings = raune::RunSettings::from_kv(kv);
        if (a.common.output_dir_set) settings.output_dir = a.common.output_dir;
        settings.eval_root = a.dataset_dir;
        if (a.dataset_dir.empty()) throw raune::ConfigError("eval: --dataset is required");
        if (!a.identity && a.checkpoint.empty())
            throw raune::ConfigError("eval: either --checkpoint or --identity is required");
        dataset = raune::load_paired(a.dataset_dir);
        print_warnings(dataset.warnings);
        if (!a.identity) loaded = raune::load_checkpoint<Scalar>(a.checkpoint);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        fs::create_directories(settings.output_dir);
        if (loaded) settings.net = loaded->net.config;
        raune::write_manifest(fs::path(settings.output_dir) / "manifest.cfg", settings, command);
        raune::EvalOptions<Scalar> opts;
        opts.ssim = settings.train.ssim;
        opts.prep = settings.prep;
        opts.native_resolution = a.resolution == "native";
        raune::Enhancer<Scalar> enhance =
            a.identity ? raune::make_identity_enhancer<Scalar>()
                       : raune::make_network_enhancer(loaded->net, /*keep_size=*/opts.native_resolution);
        raune::EvalReport report = raune::evaluate_dataset(enhance, dataset, opts);
        fs::path csv = fs::path(settings.output_dir) / "metrics.csv";
        raune::write_eval_csv(csv, report);
        if (report.failed)
            std::cerr << "warning: " << report.failed << " image(s) failed to evaluate (see " << csv.string()
                      << ")\n";
        std::cout << dataset.root.filename().string() << ": mean PSNR " << raune::format_metric(report.mean_psnr, 3)
                  << " dB, mean SSIM " << raune::format_metric(report.mean_ssim, 3) << " (" << report.evaluated
                  << " images)\n"
                  << "report: " << csv.string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

struct EnhanceArgs {
    CommonFlags common;
    std::string checkpoint, input_dir, output_dir;
    bool keep_size = false;
};

int cmd_enhance(const EnhanceArgs& a) {
    raune::RunSettings settings;
    raune::UnpairedDataset dataset;
    std::optional<raune::LoadedCheckpoint<Scalar>> loaded;
    try {
        raune::KeyValues kv;
        if (!a.common.config_path.empty()) kv = raune::KeyValues::parse_file(a.common.config_path);
        settings = raune::RunSettings::from_kv(kv);
        if (a.checkpoint.empty()) throw raune::ConfigError("enhance: --checkpoint is required");
        loaded = raune::load_checkpoint<Scalar>(a.checkpoint);
        dataset = raune::load_unpaired(a.input_dir);
        print_warnings(dataset.warnings);
        fs::create_directories(a.output_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    raune::Enhancer<Scalar> enhance = raune::make_network_enhancer(loaded->net, a.keep_size);
    size_t failed = 0;
    for (const auto& entry : dataset.entries) {
        try {
            raune::Tensor<Scalar> img = raune::load_image_raw01<Scalar>(entry.input);
            if (!a.keep_size) img = raune::resize_bilinear(img, settings.prep.height, settings.prep.width);
            raune::save_image(enhance(img), fs::path(a.output_dir) / entry.input.filename());
        } catch (const std::exception& e) {
            std::cerr << "error: " << entry.input.string() << ": " << e.what() << "\n";
            ++failed;
        }
    }
    std::cout << "enhanced " << (dataset.entries.size() - failed) << "/" << dataset.entries.size() << " images into "
              << a.output_dir << "\n";
    return failed ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"RAUNE-Net underwater image enhancement"};
    app.set_version_flag("--version", raune::kArtifactVersion);
    app.require_subcommand(1);
    std::string command = join_args(argc, argv);

    TrainArgs train_args;
    CLI::App* train = app.add_subcommand("train", "Train a network on a paired dataset");
    train->add_option("--config", train_args.common.config_path, "Key=value run configuration file");
    train->add_option("--data", train_args.data_dir, "Paired dataset root (input/ + target/); overrides train_root");
    train->add_option("--preview-data", train_args.preview_dir, "Paired dataset for preview grids");
    train->add_option("--resume", train_args.resume_path, "Resume from a checkpoint");
    auto* oe = train->add_option("--epochs", train_args.epochs, "Override epochs");
    auto* ol = train->add_option("--lr", train_args.lr, "Override learning rate");
    auto* ob = train->add_option("--batch-size", train_args.batch_size, "Override batch size");
    auto* os_ = train->add_option("--seed", train_args.seed, "Override RNG seed");
    auto* od = train->add_flag("--deterministic,!--no-deterministic", train_args.deterministic,
                               "Deterministic data order and dropout streams");
    auto* oo = train->add_option("--output-dir", train_args.common.output_dir, "Run output directory");

    EvalArgs eval_args;
    CLI::App* eval = app.add_subcommand("eval", "PSNR/SSIM evaluation over a paired dataset");
    eval->add_option("--config", eval_args.common.config_path, "Key=value run configuration file");
    eval->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint to evaluate");
    eval->add_flag("--identity", eval_args.identity, "Bypass the network (pipeline self-test)");
    eval->add_option("--dataset", eval_args.dataset_dir, "Paired dataset root (input/ + target/)");
    eval->add_option("--eval-resolution", eval_args.resolution, "256 (resize, default) or native")
        ->check(CLI::IsMember({"256", "native"}));
    auto* eo = eval->add_option("--output-dir", eval_args.common.output_dir, "Report output directory (default .)");

    EnhanceArgs enh_args;
    CLI::App* enh = app.add_subcommand("enhance", "Batch-enhance a directory of images");
    enh->add_option("--config", enh_args.common.config_path, "Key=value run configuration file");
    enh->add_option("--checkpoint", enh_args.checkpoint, "Checkpoint to run");
    enh->add_option("--input", enh_args.input_dir, "Input image directory")->required();
    enh->add_option("--output", enh_args.output_dir, "Output image directory")->required();
    enh->add_flag("--keep-size", enh_args.keep_size,
                  "Reflect-pad to the downsampling multiple and crop back (preserves original size)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;  // help/version exit 0, parse errors are validation errors
    }

    if (train->parsed()) {
        train_args.epochs_set = oe->count() > 0;
        train_args.lr_set = ol->count() > 0;
        train_args.batch_set = ob->count() > 0;
        train_args.seed_set = os_->count() > 0;
        train_args.deterministic_set = od->count() > 0;
        train_args.common.output_dir_set = oo->count() > 0;
        return cmd_train(train_args, command);
    }
    if (eval->parsed()) {
        eval_args.common.output_dir_set = eo->count() > 0;
        if (!eval_args.common.output_dir_set) eval_args.common.output_dir = ".";
        return cmd_eval(eval_args, command);
    }
    if (enh->parsed()) return cmd_enhance(enh_args);
    return 1;
}
