#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>

#include "synthrad/errors.hpp"

namespace synthrad {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Derives an independent stream seed from a base seed, used to give each
// pipeline phase (training, sampling, per-example noise) its own stream.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t s = seed ^ (0x9e3779b97f4a7c15ull * (stream + 1));
    return splitmix64(s);
}

// xoshiro256++ seeded through splitmix64. Gaussians come from the Box-Muller
// transform (polar angle form) with the second value of each pair cached, so
// one state serialization must include the spare. All draws are reproducible
// across platforms: the generator uses only integer ops and IEEE double math.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& w : state_) w = splitmix64(x);
    }

    std::uint64_t next_u64() {
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

    // Uniform double in [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    float uniform_f32() { return static_cast<float>(uniform()); }

    // Standard normal via Box-Muller: r = sqrt(-2 ln u1), angle = 2*pi*u2,
    // returns r*cos(angle) and caches r*sin(angle) for the next call.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform();  // (0,1], keeps log finite
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    float normal_f32() { return static_cast<float>(normal()); }

    // Unbiased integer in [0, n) (Lemire's multiply-then-reject method).
    int uniform_int(int n) {
        if (n <= 0) throw ConfigError("Rng::uniform_int: n must be positive, got " + std::to_string(n));
        const std::uint64_t bound = static_cast<std::uint64_t>(n);
        std::uint64_t x = next_u64();
        unsigned __int128 m = static_cast<unsigned __int128>(x) * bound;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < bound) {
            const std::uint64_t threshold = (-bound) % bound;
            while (lo < threshold) {
                x = next_u64();
                m = static_cast<unsigned __int128>(x) * bound;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<int>(m >> 64);
    }

    // In-place Fisher-Yates shuffle of indices [0, n).
    template <typename T>
    void shuffle(T& v) {
        for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
            const int j = uniform_int(i + 1);
            std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(j)]);
        }
    }

    // State serialization for checkpoint resume: four state words plus the
    // Box-Muller spare, all as fixed-width hex.
    std::string serialize() const;
    static Rng deserialize(const std::string& text);

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::array<std::uint64_t, 4> state_{};
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace synthrad
