#pragma once

// Elementary cellular automata: bit-packed simulation on a periodic ring,
// symmetry canonicalization, window sampling and the .ecg grid file format.

#include "ecalab/error.hpp"

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace ecalab::eca {

// Wolfram rule number.  Bit n of the code is the image of the neighbourhood
// (left, center, right) read as the 3-bit number n = 4*left + 2*center + right.
class RuleId {
public:
    constexpr RuleId() noexcept = default;
    explicit constexpr RuleId(std::uint8_t code) noexcept : code_(code) {}
    // Throws invalid-input for values outside [0, 255].
    static RuleId from_int(long long code);

    constexpr std::uint8_t code() const noexcept { return code_; }
    constexpr bool output(unsigned neighbourhood) const noexcept {
        return (code_ >> neighbourhood) & 1U;
    }
    constexpr auto operator<=>(const RuleId&) const noexcept = default;

private:
    std::uint8_t code_ = 0;
};

constexpr bool apply_rule(RuleId rule, bool left, bool center, bool right) noexcept {
    return rule.output((left ? 4U : 0U) | (center ? 2U : 0U) | (right ? 1U : 0U));
}

// One row of a periodic automaton.  Cells are packed 64 per word, cell i at
// bit (i % 64) of word (i / 64); bits past width() are always zero.
class State {
public:
    State() = default;
    explicit State(std::size_t width);
    static State from_bits(std::span<const std::uint8_t> bits);
    static State from_string(std::string_view bits);  // "01001"

    std::size_t width() const noexcept { return width_; }
    bool get(std::size_t i) const noexcept { return (words_[i >> 6] >> (i & 63)) & 1ULL; }
    void set(std::size_t i, bool v) noexcept {
        const std::uint64_t m = 1ULL << (i & 63);
        if (v) words_[i >> 6] |= m; else words_[i >> 6] &= ~m;
    }
    void flip(std::size_t i) noexcept { words_[i >> 6] ^= 1ULL << (i & 63); }

    std::size_t popcount() const noexcept;
    std::size_t hamming(const State& other) const noexcept;

    std::vector<std::uint8_t> to_bits() const;
    std::string to_string() const;

    // Cyclic rotation: result[i] = this[(i - k) mod W].
    State rotated(std::ptrdiff_t k) const;
    // Mirror image: result[i] = this[W - 1 - i].
    State mirrored() const;

    std::span<const std::uint64_t> words() const noexcept { return words_; }
    std::span<std::uint64_t> words() noexcept { return words_; }

    bool operator==(const State&) const = default;

private:
    std::size_t width_ = 0;
    std::vector<std::uint64_t> words_;
};

struct SpacetimeGrid {
    RuleId rule;
    std::uint64_t seed = 0;
    std::vector<State> rows;

    std::size_t height() const noexcept { return rows.size(); }
    std::size_t width() const noexcept { return rows.empty() ? 0 : rows.front().width(); }
    bool at(std::size_t t, std::size_t x) const noexcept { return rows[t].get(x); }
    bool operator==(const SpacetimeGrid&) const = default;
};

// Dense row-major 0/1 matrix; the logical view of windows and model inputs.
struct BitMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> bits;

    BitMatrix() = default;
    BitMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), bits(r * c, 0) {}
    std::uint8_t operator()(std::size_t r, std::size_t c) const noexcept { return bits[r * cols + c]; }
    std::uint8_t& operator()(std::size_t r, std::size_t c) noexcept { return bits[r * cols + c]; }
    bool operator==(const BitMatrix&) const = default;
};

struct Window {
    std::size_t t0 = 0;
    std::size_t x0 = 0;
    BitMatrix cells;  // t_len x x_len; column j is grid column (x0 + j) mod W

    std::size_t t_len() const noexcept { return cells.rows; }
    std::size_t x_len() const noexcept { return cells.cols; }
    bool operator==(const Window&) const = default;
};

State step(RuleId rule, const State& s);
SpacetimeGrid evolve(RuleId rule, const State& init, std::size_t steps, std::uint64_t seed = 0);
State random_state(std::size_t width, double density, std::uint64_t seed);
Window sample_window(const SpacetimeGrid& grid, std::size_t t_len, std::size_t x_len,
                     std::uint64_t seed);

struct SymmetryClass {
    RuleId canonical;
    std::vector<RuleId> members;  // sorted ascending
};

RuleId reflect(RuleId rule) noexcept;     // swap left/right roles
RuleId complement(RuleId rule) noexcept;  // flip every input and output bit
RuleId canonical(RuleId rule) noexcept;   // smallest member of the orbit
std::vector<SymmetryClass> symmetry_classes();

// .ecg grid files: "ECG1", u32 rule, u32 width, u32 rows, u32 reserved (0),
// u64 seed, then each row packed MSB-first (cell 0 -> bit 7 of byte 0) and
// padded to a byte boundary.  All integers little-endian.
void write_grid(std::ostream& out, const SpacetimeGrid& grid);
SpacetimeGrid read_grid(std::istream& in);
void save_grid(const std::string& path, const SpacetimeGrid& grid);
SpacetimeGrid load_grid(const std::string& path);

}  // namespace ecalab::eca
