#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace vmc {

/// Deterministic random source. Wraps mt19937_64 but does its own uniform and
/// Gaussian transforms so that streams are reproducible byte-for-byte across
/// standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi], both inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo + 1);
        return lo + static_cast<std::int64_t>(gen_() % span);
    }

    /// Standard normal via Box-Muller (one draw per pair of uniforms).
    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    template <class Mat>
    void fill_normal(Mat& m) {
        for (long c = 0; c < m.cols(); ++c)
            for (long r = 0; r < m.rows(); ++r) m(r, c) = normal();
    }

private:
    std::mt19937_64 gen_;
};

/// Derives an independent child seed from a parent seed and a stream tag
/// (splitmix64 finalizer over the combined word).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace vmc
