#pragma once

#include <cassert>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace orl {

// Deterministic random source. All draws are derived from mt19937_64 output
// with fixed arithmetic, so streams are reproducible across standard library
// implementations (std::*_distribution makes no such guarantee).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), unbiased via rejection.
    std::uint64_t uniform_int(std::uint64_t n) {
        assert(n > 0);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

    // Index drawn from an (unnormalized) nonnegative weight vector.
    int categorical(std::span<const double> weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        assert(total > 0.0);
        double u = uniform() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            acc += weights[i];
            if (u < acc) return static_cast<int>(i);
        }
        // Rounding spill: return the last index with positive weight.
        for (std::size_t i = weights.size(); i-- > 0;)
            if (weights[i] > 0.0) return static_cast<int>(i);
        return static_cast<int>(weights.size()) - 1;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = uniform_int(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace orl
