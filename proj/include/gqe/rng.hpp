#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace gqe {

// All randomness in the library flows from one root seed. Substreams are
// derived as mt19937_64(splitmix64(seed ^ fnv1a(tag) ^ index)), so two
// components never share a stream and runs are reproducible byte for byte.
// Bounded draws avoid std::uniform_*_distribution on purpose: those are not
// pinned by the standard and differ across library implementations.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(splitmix64(seed)) {}

    static Rng stream(std::uint64_t root_seed, std::string_view tag, std::uint64_t index = 0) {
        return Rng(root_seed ^ fnv1a(tag) ^ (index * 0x9e3779b97f4a7c15ULL));
    }

    std::uint64_t next_u64() { return gen_(); }

    // Uniform over [0, n). Rejection sampling keeps it exactly uniform.
    std::int64_t uniform_int(std::int64_t n) {
        const auto un = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return static_cast<std::int64_t>(x % un);
    }

    // Uniform over [0, 1) with 53 bits of precision.
    double uniform_real() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform_range(double lo, double hi) { return lo + (hi - lo) * uniform_real(); }

    bool bernoulli(double p) { return uniform_real() < p; }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[static_cast<std::size_t>(uniform_int(static_cast<std::int64_t>(i)))]);
        }
    }

    template <class T>
    const T& pick(const std::vector<T>& v) {
        return v[static_cast<std::size_t>(uniform_int(static_cast<std::int64_t>(v.size())))];
    }

    static std::uint64_t fnv1a(std::string_view s) {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        return h;
    }

    static std::uint64_t splitmix64(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

  private:
    std::mt19937_64 gen_;
};

}  // namespace gqe
