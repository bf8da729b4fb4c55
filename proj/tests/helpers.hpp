#pragma once

// Test-only utilities: independent brute-force oracles (kept free of the
// library's fast paths), finite-difference grad checking, temp dirs and
// synthetic image construction.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "raune/raune.hpp"

namespace testutil {

namespace fs = std::filesystem;
using raune::Shape;
using raune::Tensor;
using raune::Var;

// ---------------------------------------------------------------------------
// Scratch directories
// ---------------------------------------------------------------------------

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<uint64_t> counter{0};
        path_ = fs::temp_directory_path() /
                ("raune_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

// ---------------------------------------------------------------------------
// Tensor construction
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> random_tensor(Shape shape, raune::Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<T> t(std::move(shape));
    rng.fill_uniform(t, lo, hi);
    return t;
}

// Smooth mid-range image: ramps plus a soft blob, values in [0.05, 0.95].
template <typename T>
Tensor<T> smooth_image(raune::Rng& rng, int64_t h, int64_t w) {
    Tensor<T> img({3, h, w});
    for (int64_t c = 0; c < 3; ++c) {
        double a = 0.4 * rng.uniform(), b = 0.4 * rng.uniform(), amp = 0.4 * rng.uniform();
        double cx = rng.uniform(), cy = rng.uniform();
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                double fx = double(x) / double(w - 1 ? w - 1 : 1), fy = double(y) / double(h - 1 ? h - 1 : 1);
                double blob = std::exp(-((fx - cx) * (fx - cx) + (fy - cy) * (fy - cy)) / 0.08);
                double v = 0.3 + a * fx + b * fy + amp * blob;
                img.at3(c, y, x) = T(std::min(0.95, std::max(0.05, v)));
            }
    }
    return img;
}

// ---------------------------------------------------------------------------
// Naive convolution oracles (plain scalar loops)
// ---------------------------------------------------------------------------

inline Tensor<double> naive_conv2d(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>* b,
                                   int stride, int pad) {
    int64_t N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    int64_t Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    int64_t Ho = (H + 2 * pad - kh) / stride + 1, Wo = (W + 2 * pad - kw) / stride + 1;
    Tensor<double> y({N, Cout, Ho, Wo});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t co = 0; co < Cout; ++co)
            for (int64_t oh = 0; oh < Ho; ++oh)
                for (int64_t ow = 0; ow < Wo; ++ow) {
                    double acc = b ? (*b)[co] : 0.0;
                    for (int64_t ci = 0; ci < Cin; ++ci)
                        for (int64_t r = 0; r < kh; ++r)
                            for (int64_t s = 0; s < kw; ++s) {
                                int64_t ih = oh * stride - pad + r, iw = ow * stride - pad + s;
                                if (ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                acc += x.at(n, ci, ih, iw) * w.at(co, ci, r, s);
                            }
                    y.at(n, co, oh, ow) = acc;
                }
    return y;
}

inline Tensor<double> naive_conv_transpose2d(const Tensor<double>& x, const Tensor<double>& w,
                                             const Tensor<double>* b, int stride, int pad) {
    int64_t N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    int64_t Cout = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    int64_t Ho = (H - 1) * stride - 2 * pad + kh, Wo = (W - 1) * stride - 2 * pad + kw;
    Tensor<double> y({N, Cout, Ho, Wo});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t co = 0; co < Cout; ++co) {
            for (int64_t ci = 0; ci < Cin; ++ci)
                for (int64_t ih = 0; ih < H; ++ih)
                    for (int64_t iw = 0; iw < W; ++iw)
                        for (int64_t r = 0; r < kh; ++r)
                            for (int64_t s = 0; s < kw; ++s) {
                                int64_t oh = ih * stride - pad + r, ow = iw * stride - pad + s;
                                if (oh < 0 || oh >= Ho || ow < 0 || ow >= Wo) continue;
                                y.at(n, co, oh, ow) += x.at(n, ci, ih, iw) * w.at(ci, co, r, s);
                            }
            if (b)
                for (int64_t oh = 0; oh < Ho; ++oh)
                    for (int64_t ow = 0; ow < Wo; ++ow) y.at(n, co, oh, ow) += (*b)[co];
        }
    return y;
}

inline Tensor<double> naive_instance_norm(const Tensor<double>& x, double eps = 1e-5) {
    int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor<double> y(x.shape);
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            double mean = 0;
            for (int64_t h = 0; h < H; ++h)
                for (int64_t w = 0; w < W; ++w) mean += x.at(n, c, h, w);
            mean /= double(H * W);
            double var = 0;
            for (int64_t h = 0; h < H; ++h)
                for (int64_t w = 0; w < W; ++w) {
                    double d = x.at(n, c, h, w) - mean;
                    var += d * d;
                }
            var /= double(H * W);
            for (int64_t h = 0; h < H; ++h)
                for (int64_t w = 0; w < W; ++w) y.at(n, c, h, w) = (x.at(n, c, h, w) - mean) / std::sqrt(var + eps);
        }
    return y;
}

// ---------------------------------------------------------------------------
// Direct SSIM evaluation (independent of the library's filtering path)
// ---------------------------------------------------------------------------

inline std::vector<std::vector<double>> ssim_window_ref(const raune::SsimParams& p) {
    int n = p.window_size;
    std::vector<std::vector<double>> w(size_t(n), std::vector<double>(size_t(n), 0.0));
    if (p.window == raune::WindowKind::uniform) {
        for (auto& row : w)
            for (auto& v : row) v = 1.0 / double(n * n);
        return w;
    }
    std::vector<double> g(static_cast<size_t>(n), 0.0);
    double sum = 0;
    for (int i = 0; i < n; ++i) {
        g[size_t(i)] = std::exp(-double((i - n / 2) * (i - n / 2)) / (2.0 * p.sigma * p.sigma));
        sum += g[size_t(i)];
    }
    for (auto& v : g) v /= sum;
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) w[size_t(r)][size_t(c)] = g[size_t(r)] * g[size_t(c)];
    return w;
}

// Per-window statistics evaluated longhand from the SSIM formula.
inline Tensor<double> naive_ssim_map(const Tensor<double>& x, const Tensor<double>& y, const raune::SsimParams& p) {
    auto win = ssim_window_ref(p);
    int k = p.window_size;
    int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    int64_t Ho = H - k + 1, Wo = W - k + 1;
    Tensor<double> map({N, C, Ho, Wo});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t oh = 0; oh < Ho; ++oh)
                for (int64_t ow = 0; ow < Wo; ++ow) {
                    double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
                    for (int r = 0; r < k; ++r)
                        for (int s = 0; s < k; ++s) {
                            double wv = win[size_t(r)][size_t(s)];
                            double xv = x.at(n, c, oh + r, ow + s), yv = y.at(n, c, oh + r, ow + s);
                            mx += wv * xv;
                            my += wv * yv;
                            mxx += wv * xv * xv;
                            myy += wv * yv * yv;
                            mxy += wv * xv * yv;
                        }
                    double vx = mxx - mx * mx, vy = myy - my * my, vxy = mxy - mx * my;
                    map.at(n, c, oh, ow) = ((2 * mx * my + p.c1) * (2 * vxy + p.c2)) /
                                           ((mx * mx + my * my + p.c1) * (vx + vy + p.c2));
                }
    return map;
}

inline double naive_ssim_mean(const Tensor<double>& x, const Tensor<double>& y, const raune::SsimParams& p) {
    return naive_ssim_map(x, y, p).mean();
}

// ---------------------------------------------------------------------------
// Brute-force CBAM reference (scalar loops, sequential channel then spatial)
// ---------------------------------------------------------------------------

inline double sigmoid_ref(double v) { return 1.0 / (1.0 + std::exp(-v)); }

inline Tensor<double> cbam_reference(const Tensor<double>& fc1, const Tensor<double>& fc2,
                                     const Tensor<double>& sa_w, const Tensor<double>& x) {
    int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    int64_t hidden = fc1.dim(0);
    int k = int(sa_w.dim(2));
    int pad = (k - 1) / 2;
    Tensor<double> xc(x.shape);
    for (int64_t n = 0; n < N; ++n) {
        // channel gate from (avg, max) pooled descriptors through the shared MLP
        std::vector<double> avg(size_t(C), 0.0), mx(size_t(C), -1e300);
        for (int64_t c = 0; c < C; ++c)
            for (int64_t h = 0; h < H; ++h)
                for (int64_t w = 0; w < W; ++w) {
                    avg[size_t(c)] += x.at(n, c, h, w);
                    mx[size_t(c)] = std::max(mx[size_t(c)], x.at(n, c, h, w));
                }
        for (auto& v : avg) v /= double(H * W);
        auto mlp = [&](const std::vector<double>& in) {
            std::vector<double> hid(size_t(hidden), 0.0), out(size_t(C), 0.0);
            for (int64_t j = 0; j < hidden; ++j) {
                for (int64_t c = 0; c < C; ++c) hid[size_t(j)] += fc1[j * C + c] * in[size_t(c)];
                hid[size_t(j)] = std::max(0.0, hid[size_t(j)]);
            }
            for (int64_t c = 0; c < C; ++c)
                for (int64_t j = 0; j < hidden; ++j) out[size_t(c)] += fc2[c * hidden + j] * hid[size_t(j)];
            return out;
        };
        std::vector<double> a = mlp(avg), m = mlp(mx);
        for (int64_t c = 0; c < C; ++c) {
            double gate = sigmoid_ref(a[size_t(c)] + m[size_t(c)]);
            for (int64_t h = 0; h < H; ++h)
                for (int64_t w = 0; w < W; ++w) xc.at(n, c, h, w) = x.at(n, c, h, w) * gate;
        }
    }
    Tensor<double> out(x.shape);
    for (int64_t n = 0; n < N; ++n) {
        // spatial gate: k x k conv over reflect-padded (mean, max) maps
        Tensor<double> mean({H, W}), mx({H, W});
        for (int64_t h = 0; h < H; ++h)
            for (int64_t w = 0; w < W; ++w) {
                double s = 0, m = -1e300;
                for (int64_t c = 0; c < C; ++c) {
                    s += xc.at(n, c, h, w);
                    m = std::max(m, xc.at(n, c, h, w));
                }
                mean[h * W + w] = s / double(C);
                mx[h * W + w] = m;
            }
        for (int64_t h = 0; h < H; ++h)
            for (int64_t w = 0; w < W; ++w) {
                double acc = 0;
                for (int r = 0; r < k; ++r)
                    for (int s = 0; s < k; ++s) {
                        int64_t ih = raune::reflect_index(h - pad + r, H);
                        int64_t iw = raune::reflect_index(w - pad + s, W);
                        acc += sa_w.at(0, 0, r, s) * mean[ih * W + iw];
                        acc += sa_w.at(0, 1, r, s) * mx[ih * W + iw];
                    }
                double gate = sigmoid_ref(acc);
                for (int64_t c = 0; c < C; ++c) out.at(n, c, h, w) = xc.at(n, c, h, w) * gate;
            }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reference Adam (independent of raune::Adam)
// ---------------------------------------------------------------------------

struct ReferenceAdam {
    double lr, b1, b2, eps;
    int64_t t = 0;
    std::vector<double> m, v;

    ReferenceAdam(size_t n, double lr_, double b1_ = 0.9, double b2_ = 0.999, double eps_ = 1e-8)
        : lr(lr_), b1(b1_), b2(b2_), eps(eps_), m(n, 0.0), v(n, 0.0) {}

    void step(std::vector<double>& params, const std::vector<double>& grads) {
        ++t;
        for (size_t i = 0; i < params.size(); ++i) {
            m[i] = b1 * m[i] + (1 - b1) * grads[i];
            v[i] = b2 * v[i] + (1 - b2) * grads[i] * grads[i];
            double mhat = m[i] / (1 - std::pow(b1, double(t)));
            double vhat = v[i] / (1 - std::pow(b2, double(t)));
            params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
};

// ---------------------------------------------------------------------------
// Finite-difference gradient checking
// ---------------------------------------------------------------------------

struct GradCheckResult {
    double max_rel_err = 0.0;
    int checked = 0;
};

// Central finite differences against the autodiff gradient of `loss_fn` with
// respect to `leaf`. loss_fn must rebuild the graph from the current leaf
// values on every call.
inline GradCheckResult gradcheck(const Var<double>& leaf, const std::function<Var<double>()>& loss_fn,
                                 int num_coords, raune::Rng& pick, double h = 1e-5) {
    leaf->requires_grad = true;
    leaf->grad = Tensor<double>();
    Var<double> loss = loss_fn();
    raune::backward(loss);
    if (leaf->grad.empty()) throw std::runtime_error("gradcheck: no gradient reached the leaf");
    Tensor<double> analytic = leaf->grad;

    GradCheckResult res;
    int64_t numel = leaf->value.numel();
    for (int i = 0; i < num_coords; ++i) {
        int64_t j = int64_t(pick.below(uint64_t(numel)));
        double orig = leaf->value[j];
        double fp, fm;
        {
            raune::NoGradGuard ng;
            leaf->value[j] = orig + h;
            fp = loss_fn()->value[0];
            leaf->value[j] = orig - h;
            fm = loss_fn()->value[0];
            leaf->value[j] = orig;
        }
        double numeric = (fp - fm) / (2 * h);
        double a = analytic[j];
        double diff = std::abs(a - numeric);
        if (diff > 1e-9) {
            double rel = diff / std::max({std::abs(a), std::abs(numeric), 1e-8});
            res.max_rel_err = std::max(res.max_rel_err, rel);
        }
        ++res.checked;
    }
    return res;
}

// ---------------------------------------------------------------------------
// Dataset scaffolding
// ---------------------------------------------------------------------------

// Writes `count` paired PNGs (reference = input unless distinct=true) and
// returns the root. Layout: root/input/*.png, root/target/*.png.
template <typename T>
fs::path write_paired_dataset(const fs::path& root, int count, int64_t size, uint64_t seed, bool distinct = false) {
    fs::create_directories(root / "input");
    fs::create_directories(root / "target");
    raune::Rng rng(seed);
    for (int i = 0; i < count; ++i) {
        Tensor<T> img = smooth_image<T>(rng, size, size);
        char name[32];
        std::snprintf(name, sizeof(name), "img%03d.png", i);
        raune::save_image(img, root / "input" / name);
        if (distinct) {
            Tensor<T> ref = smooth_image<T>(rng, size, size);
            raune::save_image(ref, root / "target" / name);
        } else {
            raune::save_image(img, root / "target" / name);
        }
    }
    return root;
}

// ---------------------------------------------------------------------------
// CLI invocation
// ---------------------------------------------------------------------------

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

inline std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

inline CliResult run_cli(const std::string& args, const fs::path& scratch) {
    fs::path out = scratch / "cli_stdout.txt", err = scratch / "cli_stderr.txt";
    std::string cmd = std::string(RAUNE_CLI_BIN) + " " + args + " >" + out.string() + " 2>" + err.string();
    int rc = std::system(cmd.c_str());
    CliResult res;
    res.exit_code = (rc == -1) ? -1 : WEXITSTATUS(rc);
    res.out = slurp(out);
    res.err = slurp(err);
    return res;
}

}  // namespace testutil
