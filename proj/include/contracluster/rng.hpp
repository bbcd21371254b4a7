#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

#include "contracluster/errors.hpp"

namespace contracluster {

// Deterministic, splittable random stream (xoshiro256++ seeded via splitmix64).
// The generator is self-contained so results are bit-identical across
// platforms and standard libraries. split() derives an independent child
// stream from the *identity* seed, not the draw position, so pre-splitting
// streams per subsystem/epoch/sample gives reproducible parallel schedules.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
        spare_valid_ = false;
    }

    std::uint64_t seed() const { return seed_; }

    Rng split(std::uint64_t stream) const {
        std::uint64_t sm = seed_ ^ (0x9E3779B97F4A7C15ULL * (stream + 1));
        return Rng(splitmix64(sm));
    }

    Rng split(std::string_view tag) const {
        std::uint64_t h = 0xcbf29ce484222325ULL; // FNV-1a
        for (char c : tag) {
            h ^= static_cast<std::uint8_t>(c);
            h *= 0x100000001b3ULL;
        }
        return split(h);
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1) with 53 bits of mantissa.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; the second value of each pair is cached.
    double normal() {
        if (spare_valid_) {
            spare_valid_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        spare_valid_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Unbiased index in [0, n) (Lemire's multiply-shift with rejection).
    std::size_t index(std::size_t n) {
        if (n == 0) throw argument_error("Rng::index: n must be positive");
        const std::uint64_t range = n;
        const std::uint64_t threshold = (0ULL - range) % range;
        while (true) {
            const std::uint64_t x = next();
            const __uint128_t m = static_cast<__uint128_t>(x) * range;
            if (static_cast<std::uint64_t>(m) >= threshold)
                return static_cast<std::size_t>(m >> 64);
        }
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    std::vector<std::size_t> permutation(std::size_t n) {
        std::vector<std::size_t> p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = i;
        shuffle(p);
        return p;
    }

    // First `count` entries of a random permutation: sampling without replacement.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count) {
        if (count > n) throw argument_error("sample_without_replacement: count > n");
        std::vector<std::size_t> p = permutation(n);
        p.resize(count);
        return p;
    }

private:
    static std::uint64_t splitmix64(std::uint64_t& x) {
        x += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t seed_;
    std::uint64_t state_[4];
    double spare_ = 0.0;
    bool spare_valid_ = false;
};

} // namespace contracluster
