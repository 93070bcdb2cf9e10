#pragma once

// Counter-based keyed random numbers.
//
// Every random decision in the library is a pure function of a key built
// from (seed, domain tag, cube address, ...) and a draw counter. There is no
// generator state shared between cubes, replicates or threads, so any subtree
// can be regenerated in isolation and replicates run in any order.

#include <cstdint>
#include <initializer_list>

namespace fracperc {

// SplitMix64 finalizer; a bijection on 64-bit words with full avalanche.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Order-sensitive combination of a key with one more word.
constexpr std::uint64_t combine(std::uint64_t key, std::uint64_t word) noexcept {
    return mix64(key ^ mix64(word + 0x632be59bd9b4e019ULL));
}

constexpr std::uint64_t make_key(std::uint64_t seed, std::initializer_list<std::uint64_t> words) noexcept {
    std::uint64_t key = mix64(seed);
    for (auto w : words) key = combine(key, w);
    return key;
}

// Domain tags keep independent uses of the same seed apart.
enum class Domain : std::uint64_t {
    retention = 1,
    surviving = 2,
    replicate = 3,
    resample = 4,
    removal = 5,
    kernel = 6,
    monotone_check = 7,
};

// 53-bit uniform in [0,1).
constexpr double to_unit(std::uint64_t x) noexcept {
    return static_cast<double>(x >> 11) * 0x1.0p-53;
}

// A stream of draws for one key. Satisfies UniformRandomBitGenerator.
class KeyedStream {
public:
    using result_type = std::uint64_t;

    constexpr explicit KeyedStream(std::uint64_t key) noexcept : key_(key) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~result_type{0}; }

    constexpr result_type operator()() noexcept { return mix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }

    constexpr double uniform() noexcept { return to_unit((*this)()); }

    // Uniform integer in [0, n), n > 0. Multiply-shift; bias is below 2^-53 for our n.
    constexpr std::uint64_t below(std::uint64_t n) noexcept {
        auto v = static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
        return v < n ? v : n - 1;
    }

    constexpr std::uint64_t key() const noexcept { return key_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace fracperc
