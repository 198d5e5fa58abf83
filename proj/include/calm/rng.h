#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace calm {

// Deterministic RNG wrapper. mt19937_64 is fully specified by the standard,
// and the uniform/gaussian transforms below are hand-rolled so that streams
// are reproducible across compilers and platforms.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    // Derives an independent stream for a named purpose (init, shuffle, dropout, ...).
    static Rng substream(uint64_t seed, uint64_t stream_id) {
        // splitmix64 mix of (seed, stream_id)
        uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream_id + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return Rng(z ^ (z >> 31));
    }

    uint64_t next() { return gen_(); }

    double uniform() {  // [0,1)
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    // Unbiased enough for shuffling at this scale; fixed algorithm for determinism.
    uint64_t uniform_int(uint64_t n) { return next() % n; }

    double gauss() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform();  // avoid log(0)
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace calm
