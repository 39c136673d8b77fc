#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace ecalab {

// Counter-based generator built on the SplitMix64 finalizer.
//
// Every stochastic quantity in the library is a pure function of a 64-bit key
// and a 64-bit counter: value = mix(key + (counter + 1) * 0x9E3779B97F4A7C15).
// Keys for sub-streams are derived with derive(), which folds tags into the
// key through the same finalizer.  Given (rule, seed) alone every dataset,
// window and initial state can therefore be reproduced, and samples can be
// generated in any order.
class CounterRng {
public:
    static constexpr std::uint64_t golden = 0x9E3779B97F4A7C15ULL;

    explicit constexpr CounterRng(std::uint64_t key, std::uint64_t counter = 0) noexcept
        : key_(key), counter_(counter) {}

    static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    static constexpr std::uint64_t at(std::uint64_t key, std::uint64_t counter) noexcept {
        return mix(key + (counter + 1) * golden);
    }

    // Derive an independent key from a parent key and a list of tags.
    static constexpr std::uint64_t derive(std::uint64_t key,
                                          std::initializer_list<std::uint64_t> tags) noexcept {
        std::uint64_t k = mix(key ^ 0x6A09E667F3BCC909ULL);
        for (auto t : tags) {
            k = mix(k + golden + mix(t + 0x3C6EF372FE94F82BULL));
        }
        return k;
    }

    constexpr std::uint64_t next_u64() noexcept { return at(key_, counter_++); }

    // Uniform double in [0, 1) with 53 random bits.
    constexpr double next_double() noexcept {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, bound) by rejection (bound > 0).
    std::uint64_t next_below(std::uint64_t bound) noexcept {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
        std::uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return v % bound;
    }

    bool bernoulli(double p) noexcept { return next_double() < p; }

    // Standard normal via Box-Muller (one value per call, two draws).
    double next_normal() noexcept;

    constexpr std::uint64_t key() const noexcept { return key_; }
    constexpr std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_;
};

// FNV-1a, used to turn tensor names into stable derivation tags.
constexpr std::uint64_t fnv1a64(std::string_view text) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

}  // namespace ecalab
