#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "raune/tensor.hpp"

namespace raune {

// Deterministic random source. Gaussian samples come from an explicit
// Box-Muller transform rather than std::normal_distribution, whose output
// sequence is implementation-defined; mt19937_64 itself is fully specified,
// so (seed -> sample stream) is reproducible across standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1).
    double uniform() {
        return double(gen_() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller, one spare cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // Uniform integer in [0, n). Modulo bias is irrelevant here; only
    // determinism matters.
    uint64_t below(uint64_t n) { return n ? gen_() % n : 0; }

    template <typename T>
    void fill_normal(Tensor<T>& t, double mean, double stddev) {
        for (auto& v : t.data) v = static_cast<T>(mean + stddev * normal());
    }

    template <typename T>
    void fill_uniform(Tensor<T>& t, double lo, double hi) {
        for (auto& v : t.data) v = static_cast<T>(lo + (hi - lo) * uniform());
    }

    template <typename V>
    void shuffle(std::vector<V>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace raune
