#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace mrct {

// Deterministic splitmix64 generator. The whole state is one uint64, which
// keeps checkpointed training trajectories exactly resumable and makes the
// stream identical across platforms (no reliance on std::distribution
// implementations).
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // [0, 1) with 53 random bits
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Box-Muller; draws two uniforms per value so the state stays a pure
    // function of the call count.
    double normal(double mu = 0.0, double sigma = 1.0) {
        double u1 = uniform01();
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log1p(-u1));
        return mu + sigma * r * std::cos(6.283185307179586476925286766559 * u2);
    }

    bool bernoulli(double p) { return uniform01() < p; }

    // uniform integer in [lo, hi], inclusive
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        using u128 = unsigned __int128;
        std::uint64_t v = static_cast<std::uint64_t>((u128(next_u64()) * u128(span)) >> 64);
        return lo + static_cast<std::int64_t>(v);
    }

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s; }

    // Derives an independent stream key from a seed and a label, so modules
    // never share or reuse raw seeds.
    static std::uint64_t derive(std::uint64_t seed, std::string_view tag) {
        std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
        for (char c : tag) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
        // final avalanche
        h ^= h >> 33;
        h *= 0xff51afd7ed558ccdULL;
        h ^= h >> 33;
        return h;
    }

    static std::uint64_t derive(std::uint64_t seed, std::string_view tag, std::uint64_t index) {
        return derive(derive(seed, tag) + 0x632be59bd9b4e019ULL * (index + 1), tag);
    }

private:
    std::uint64_t state_;
};

} // namespace mrct
