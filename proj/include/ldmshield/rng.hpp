#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

#include "ldmshield/tensor.hpp"

namespace ldms {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Deterministic across platforms: mt19937_64 output is fully specified and
// uniform/normal draws are derived with explicit formulas, never through the
// implementation-defined std distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t u64() { return gen_(); }

    double uniform() { return static_cast<double>(u64() >> 11) * 0x1.0p-53; }  // [0, 1)
    double uniform_open() {
        return static_cast<double>((u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    }

    double normal() {
        double u1 = uniform_open();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    int uniform_int(int n) { return static_cast<int>(u64() % static_cast<std::uint64_t>(n)); }

    Tensor normal_tensor(std::vector<int> shape) {
        Tensor t(std::move(shape));
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = normal();
        return t;
    }

    Tensor uniform_tensor(std::vector<int> shape, double lo, double hi) {
        Tensor t(std::move(shape));
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = lo + (hi - lo) * uniform();
        return t;
    }

    // Independent stream derived from this rng's seed (not its current state),
    // so forks are stable no matter how many draws happened in between.
    Rng fork(std::uint64_t stream) const {
        return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x632be59bd9b4e019ULL)));
    }
    Rng fork(std::string_view name, std::uint64_t idx = 0) const {
        return fork(fnv1a64(name) + idx * 0x9e3779b97f4a7c15ULL);
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
};

}  // namespace ldms
