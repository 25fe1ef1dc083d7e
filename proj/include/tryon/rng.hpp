#ifndef TRYON_RNG_HPP
#define TRYON_RNG_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace tryon {

// xoshiro256++ with splitmix64 seeding. Value semantics: copying an Rng
// snapshots the stream, which checkpoint save/restore and the finite
// difference tests rely on.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) { reseed(seed); }

    void reseed(uint64_t seed) {
        uint64_t x = seed;
        for (auto& w : s_) {
            // splitmix64 step
            x += 0x9e3779b97f4a7c15ull;
            uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
            w = z ^ (z >> 31);
        }
    }

    uint64_t next_u64() {
        uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform in [0, 1)
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n)
    uint64_t below(uint64_t n) { return n ? next_u64() % n : 0; }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller; draws two uniforms per call, no cached spare so the
    // stream position is a pure function of the call count.
    double normal() {
        double u1 = uniform(), u2 = uniform();
        // avoid log(0)
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    template <typename T>
    void fill_normal(T* dst, size_t n, double mean = 0.0, double stddev = 1.0) {
        size_t i = 0;
        while (i + 2 <= n) {
            double u1 = uniform(), u2 = uniform();
            if (u1 <= 0.0) u1 = 0x1.0p-53;
            double r = std::sqrt(-2.0 * std::log(u1));
            double a = 6.283185307179586477 * u2;
            dst[i++] = T(mean + stddev * r * std::cos(a));
            dst[i++] = T(mean + stddev * r * std::sin(a));
        }
        if (i < n) dst[i] = T(mean + stddev * normal());
    }

    template <typename IndexT>
    void shuffle(std::vector<IndexT>& v) {
        for (size_t i = v.size(); i > 1; i--) {
            size_t j = size_t(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::array<uint64_t, 4> state() const { return s_; }
    void set_state(const std::array<uint64_t, 4>& s) { s_ = s; }

    std::string state_hex() const;
    static Rng from_state_hex(const std::string& hex);

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::array<uint64_t, 4> s_;
};

// Stable stream derivation: child streams for scene rendering, per-chunk
// sampling seeds, epoch shuffles. FNV-1a over (seed, tag words).
uint64_t derive_seed(uint64_t base, const std::string& tag);
uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b = 0, uint64_t c = 0);

}  // namespace tryon

#endif
