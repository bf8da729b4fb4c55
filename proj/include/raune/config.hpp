#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "raune/train.hpp"
#include "raune/version.hpp"

namespace raune {

// Flat key=value run configuration. Lines are `key = value`; blank lines and
// `#` comments are ignored. Flags override file values; the resolved result
// is written back out as the run manifest so every run is reproducible from
// its output directory alone.

class KeyValues {
public:
    static KeyValues parse_string(const std::string& text, const std::string& origin = "<string>") {
        KeyValues kv;
        std::istringstream is(text);
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            std::string s = trim(line);
            if (s.empty() || s[0] == '#') continue;
            auto eq = s.find('=');
            if (eq == std::string::npos)
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value, got '" + s + "'");
            std::string key = trim(s.substr(0, eq));
            std::string value = trim(s.substr(eq + 1));
            if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
            kv.values_[key] = value;
        }
        return kv;
    }

    static KeyValues parse_file(const std::filesystem::path& path) {
        std::ifstream is(path);
        if (!is) throw IoError("cannot open config file " + path.string());
        std::stringstream buf;
        buf << is.rdbuf();
        return parse_string(buf.str(), path.string());
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    std::string get_str(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    int64_t get_int(const std::string& key, int64_t fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            size_t pos = 0;
            int64_t v = std::stoll(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (...) {
            throw ConfigError(key + ": expected integer, got '" + it->second + "'");
        }
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        try {
            size_t pos = 0;
            double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (...) {
            throw ConfigError(key + ": expected number, got '" + it->second + "'");
        }
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        std::string v = it->second;
        std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return char(std::tolower(c)); });
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw ConfigError(key + ": expected boolean, got '" + it->second + "'");
    }

    // Sorted key=value text, LF line endings.
    std::string serialize() const {
        std::ostringstream os;
        for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
        return os.str();
    }

    void write(const std::filesystem::path& path) const {
        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot write " + path.string());
        os << serialize();
    }

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    static std::string trim(const std::string& s) {
        size_t b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        size_t e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    std::map<std::string, std::string> values_;
};

// Every tunable of a run, fully resolved. Defaults follow the reference
// training protocol (Adam 1e-4, betas 0.9/0.999, 100 epochs, checkpoints
// every 5 epochs, previews every 500 iterations, loss weights 1/1/1,
// 256x256 inputs normalized with mean=std=0.5).
struct RunSettings {
    NetworkConfig net;
    TrainConfig train;
    PreprocessSpec prep;
    std::string train_root;
    std::string eval_root;
    std::string preview_root;
    std::string output_dir = "runs/default";
    std::string backbone_weights;  // required only when lambda_scont > 0

    static RunSettings from_kv(const KeyValues& kv) {
        RunSettings s;
        s.net.base_channels = int(kv.get_int("base_channels", s.net.base_channels));
        s.net.num_down_blocks = int(kv.get_int("down_blocks", s.net.num_down_blocks));
        s.net.num_residual_blocks = int(kv.get_int("residual_blocks", s.net.num_residual_blocks));
        s.net.norm_kind = norm_from_string(kv.get_str("norm", norm_name(s.net.norm_kind)));
        s.net.channel_growth = int(kv.get_int("channel_growth", s.net.channel_growth));
        s.net.attention_reduction = int(kv.get_int("attention_reduction", s.net.attention_reduction));
        s.net.spatial_attention_kernel = int(kv.get_int("spatial_kernel", s.net.spatial_attention_kernel));
        s.net.dropout_down = kv.get_bool("dropout_down", s.net.dropout_down);
        s.net.dropout_residual = kv.get_bool("dropout_residual", s.net.dropout_residual);
        s.net.dropout_up = kv.get_bool("dropout_up", s.net.dropout_up);
        s.net.dropout_p = kv.get_double("dropout_p", s.net.dropout_p);
        s.net.down_negative_slope = kv.get_double("down_negative_slope", s.net.down_negative_slope);
        s.net.up_negative_slope = kv.get_double("up_negative_slope", s.net.up_negative_slope);
        s.net.init_std = kv.get_double("init_std", s.net.init_std);

        s.train.lr = kv.get_double("lr", s.train.lr);
        s.train.beta1 = kv.get_double("beta1", s.train.beta1);
        s.train.beta2 = kv.get_double("beta2", s.train.beta2);
        s.train.epochs = int(kv.get_int("epochs", s.train.epochs));
        s.train.batch_size = int(kv.get_int("batch_size", s.train.batch_size));
        s.train.checkpoint_every_epochs = int(kv.get_int("checkpoint_every", s.train.checkpoint_every_epochs));
        s.train.preview_every_iters = kv.get_int("preview_every", s.train.preview_every_iters);
        s.train.seed = uint64_t(kv.get_int("seed", int64_t(s.train.seed)));
        s.train.deterministic = kv.get_bool("deterministic", s.train.deterministic);
        s.train.weights.pcont = kv.get_double("lambda_pcont", s.train.weights.pcont);
        s.train.weights.ssim = kv.get_double("lambda_ssim", s.train.weights.ssim);
        s.train.weights.scont = kv.get_double("lambda_scont", s.train.weights.scont);
        std::string taps = kv.get_str("tap_weights", "");
        if (!taps.empty()) {
            std::istringstream is(taps);
            std::string tok;
            size_t i = 0;
            while (std::getline(is, tok, ',')) {
                if (i >= 5) throw ConfigError("tap_weights: expected 5 comma-separated values");
                try {
                    s.train.tap_weights[i++] = std::stod(tok);
                } catch (...) {
                    throw ConfigError("tap_weights: expected number, got '" + tok + "'");
                }
            }
            if (i != 5) throw ConfigError("tap_weights: expected 5 comma-separated values");
        }
        std::string wk = kv.get_str("ssim_window", "gaussian");
        if (wk == "gaussian")
            s.train.ssim.window = WindowKind::gaussian;
        else if (wk == "uniform")
            s.train.ssim.window = WindowKind::uniform;
        else
            throw ConfigError("ssim_window: expected gaussian|uniform, got '" + wk + "'");
        s.train.ssim.window_size = int(kv.get_int("ssim_window_size", s.train.ssim.window_size));
        s.train.ssim.sigma = kv.get_double("ssim_sigma", s.train.ssim.sigma);

        int64_t size = kv.get_int("image_size", s.prep.width);
        s.prep.width = size;
        s.prep.height = size;

        s.train_root = kv.get_str("train_root", "");
        s.eval_root = kv.get_str("eval_root", "");
        s.preview_root = kv.get_str("preview_root", "");
        s.output_dir = kv.get_str("output_dir", s.output_dir);
        s.backbone_weights = kv.get_str("backbone_weights", "");
        return s;
    }

    // Fully resolved settings; no defaults left implicit.
    KeyValues to_kv() const {
        KeyValues kv;
        kv.set("artifact_version", kArtifactVersion);
        kv.set("base_channels", std::to_string(net.base_channels));
        kv.set("down_blocks", std::to_string(net.num_down_blocks));
        kv.set("residual_blocks", std::to_string(net.num_residual_blocks));
        kv.set("norm", norm_name(net.norm_kind));
        kv.set("channel_growth", std::to_string(net.channel_growth));
        kv.set("attention_reduction", std::to_string(net.attention_reduction));
        kv.set("spatial_kernel", std::to_string(net.spatial_attention_kernel));
        kv.set("dropout_down", net.dropout_down ? "true" : "false");
        kv.set("dropout_residual", net.dropout_residual ? "true" : "false");
        kv.set("dropout_up", net.dropout_up ? "true" : "false");
        kv.set("dropout_p", format_double(net.dropout_p));
        kv.set("down_negative_slope", format_double(net.down_negative_slope));
        kv.set("up_negative_slope", format_double(net.up_negative_slope));
        kv.set("init_std", format_double(net.init_std));
        kv.set("lr", format_double(train.lr));
        kv.set("beta1", format_double(train.beta1));
        kv.set("beta2", format_double(train.beta2));
        kv.set("epochs", std::to_string(train.epochs));
        kv.set("batch_size", std::to_string(train.batch_size));
        kv.set("checkpoint_every", std::to_string(train.checkpoint_every_epochs));
        kv.set("preview_every", std::to_string(train.preview_every_iters));
        kv.set("seed", std::to_string(train.seed));
        kv.set("deterministic", train.deterministic ? "true" : "false");
        kv.set("lambda_pcont", format_double(train.weights.pcont));
        kv.set("lambda_ssim", format_double(train.weights.ssim));
        kv.set("lambda_scont", format_double(train.weights.scont));
        std::ostringstream taps;
        for (size_t i = 0; i < 5; ++i) taps << (i ? "," : "") << format_double(train.tap_weights[i]);
        kv.set("tap_weights", taps.str());
        kv.set("ssim_window", train.ssim.window == WindowKind::gaussian ? "gaussian" : "uniform");
        kv.set("ssim_window_size", std::to_string(train.ssim.window_size));
        kv.set("ssim_sigma", format_double(train.ssim.sigma));
        kv.set("image_size", std::to_string(prep.width));
        kv.set("train_root", train_root);
        kv.set("eval_root", eval_root);
        kv.set("preview_root", preview_root);
        kv.set("output_dir", output_dir);
        kv.set("backbone_weights", backbone_weights);
        return kv;
    }

    void validate_for_training() const {
        net.validate();
        train.validate();
        prep.validate();
        if (train_root.empty()) throw ConfigError("train_root: no training dataset path given");
        if (!std::filesystem::is_directory(train_root))
            throw ConfigError("train_root: dataset directory not found: " + train_root);
        if (train.weights.scont > 0.0 && backbone_weights.empty())
            throw ConfigError("backbone_weights: required when lambda_scont > 0 (set the key, or RAUNE_WEIGHTS_DIR)");
    }

private:
    static std::string format_double(double v) {
        std::ostringstream os;
        os << v;
        return os.str();
    }
};

inline void write_manifest(const std::filesystem::path& path, const RunSettings& settings,
                           const std::string& command) {
    KeyValues kv = settings.to_kv();
    kv.set("command", command);
    kv.write(path);
}

}  // namespace raune
