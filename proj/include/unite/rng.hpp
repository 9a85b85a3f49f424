#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace unite {

// SplitMix64 finalizer; used to derive independent substream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    return mix64(mix64(seed) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream,
                                    std::uint64_t index) noexcept {
    return derive_seed(derive_seed(seed, stream), index);
}

// Stream tags keep substreams of different operations apart.
namespace stream {
inline constexpr std::uint64_t synth = 1;
inline constexpr std::uint64_t split = 2;
inline constexpr std::uint64_t prune = 3;
inline constexpr std::uint64_t init = 4;
inline constexpr std::uint64_t shuffle = 5;
inline constexpr std::uint64_t folds = 6;
inline constexpr std::uint64_t epoch = 7;
}  // namespace stream

// mt19937_64 is bit-specified by the standard; the std distributions are not,
// so sampling is done by hand to keep results identical across toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform in [0, n). Rejection sampling, no modulo bias.
    std::size_t below(std::size_t n) {
        const std::uint64_t bound = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return static_cast<std::size_t>(x % bound);
    }

    // Uniform in [lo, hi], inclusive.
    std::size_t between(std::size_t lo, std::size_t hi) { return lo + below(hi - lo + 1); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[below(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace unite
