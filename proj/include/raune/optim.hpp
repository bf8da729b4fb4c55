#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "raune/autograd.hpp"

namespace raune {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const {
        if (!(lr >= 0.0)) throw ConfigError("lr: must be >= 0");
        if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
            throw ConfigError("betas: must be in [0, 1)");
        if (!(eps > 0.0)) throw ConfigError("adam eps: must be > 0");
    }
};

// First/second moment buffers, serializable into checkpoints.
template <typename T>
struct OptimizerState {
    int64_t step = 0;
    std::vector<Tensor<T>> m;
    std::vector<Tensor<T>> v;
};

// Adam with bias correction over a fixed parameter list. Parameters are
// updated in place from their accumulated gradients; an empty gradient is
// treated as zero.
template <typename T>
class Adam {
public:
    Adam(std::vector<std::pair<std::string, Var<T>>> params, AdamConfig cfg)
        : params_(std::move(params)), cfg_(cfg) {
        cfg_.validate();
        state_.m.reserve(params_.size());
        state_.v.reserve(params_.size());
        for (auto& [name, p] : params_) {
            state_.m.emplace_back(p->value.shape);
            state_.v.emplace_back(p->value.shape);
        }
    }

    void step() {
        ++state_.step;
        const double b1 = cfg_.beta1, b2 = cfg_.beta2;
        const double bc1 = 1.0 - std::pow(b1, double(state_.step));
        const double bc2 = 1.0 - std::pow(b2, double(state_.step));
        for (size_t i = 0; i < params_.size(); ++i) {
            Var<T>& p = params_[i].second;
            Tensor<T>& m = state_.m[i];
            Tensor<T>& v = state_.v[i];
            const bool has_grad = !p->grad.empty();
            for (int64_t j = 0; j < p->value.numel(); ++j) {
                double g = has_grad ? double(p->grad[j]) : 0.0;
                double mj = b1 * double(m[j]) + (1.0 - b1) * g;
                double vj = b2 * double(v[j]) + (1.0 - b2) * g * g;
                m[j] = T(mj);
                v[j] = T(vj);
                double update = cfg_.lr * (mj / bc1) / (std::sqrt(vj / bc2) + cfg_.eps);
                p->value[j] = T(double(p->value[j]) - update);
            }
        }
    }

    const AdamConfig& config() const { return cfg_; }
    const OptimizerState<T>& state() const { return state_; }
    const std::vector<std::pair<std::string, Var<T>>>& params() const { return params_; }

    // Restores moments saved in a checkpoint; shapes must match.
    void restore(OptimizerState<T> s) {
        if (s.m.size() != params_.size() || s.v.size() != params_.size())
            throw ConfigError("Adam::restore: state size mismatch");
        for (size_t i = 0; i < params_.size(); ++i)
            if (s.m[i].shape != params_[i].second->value.shape || s.v[i].shape != params_[i].second->value.shape)
                throw ConfigError("Adam::restore: moment shape mismatch for " + params_[i].first);
        state_ = std::move(s);
    }

private:
    std::vector<std::pair<std::string, Var<T>>> params_;
    AdamConfig cfg_;
    OptimizerState<T> state_;
};

}  // namespace raune
