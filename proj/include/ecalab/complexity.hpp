#pragma once

// The five complexity measures attached to an elementary rule.

#include "ecalab/eca.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ecalab::complexity {

// Lempel-Ziv (1976) exhaustive-history phrase count.  Each phrase is the
// shortest prefix of the remainder that cannot be copied from the history
// (copies may overlap the phrase itself).  Linear time via an online suffix
// automaton.  Throws invalid-input on an empty sequence.
std::size_t lz76(std::span<const std::uint8_t> bits);

// lz76 of the row-major flattened grid divided by n / log2(n).
double lz_grid(const eca::SpacetimeGrid& grid);

// zlib (DEFLATE) at level 9 over the MSB-first packed row-major bit stream;
// returns compressed bytes / raw bytes.
double compression_complexity(const eca::SpacetimeGrid& grid);
std::string compressor_identity();

// Slope assigned to a trial whose damage vanishes before two points with
// nonzero Hamming distance exist; also the lower clamp for every trial.
inline constexpr double lyapunov_floor = -1.0;

// Damage-spreading Lyapunov estimate: mean over trials of the least-squares
// slope of ln H(t) against t, where H is the Hamming distance between a
// random state and a one-cell perturbation of it (points with H = 0 dropped).
double lyapunov(eca::RuleId rule, std::size_t width, std::size_t trials, std::size_t steps,
                std::uint64_t seed);

inline constexpr std::size_t krylov_max_width = 14;

// Operator-spreading index on the enumerable state space of a width-`width`
// ring.  U is the 0/1 one-step transfer matrix (column s has its 1 at row
// step(s)); O0 is the centered occupancy of `observable_cell`.  Returns
// (1/horizon) sum_t sum_n n |<K_n, U^t O0>|^2 / |U^t O0|^2 over an
// orthonormal Krylov basis K_n of {O0, U O0, ...}.  Terms with U^t O0 = 0
// contribute nothing.
double krylov(eca::RuleId rule, std::size_t width, std::size_t horizon,
              std::size_t observable_cell = 0);

enum class WolframClass : std::uint8_t { I = 1, II = 2, III = 3, IV = 4 };

const char* to_string(WolframClass c) noexcept;
WolframClass parse_wolfram_class(std::string_view text);
WolframClass wolfram_class(eca::RuleId rule);
std::string wolfram_table_version();

struct ComplexityConfig {
    std::size_t width = 256;
    std::size_t steps = 1000;
    double density = 0.5;
    std::uint64_t seed = 0;
    std::size_t lyapunov_width = 256;
    std::size_t lyapunov_trials = 32;
    std::size_t lyapunov_steps = 200;
    std::size_t krylov_width = 10;
    std::size_t krylov_horizon = 32;
};

struct ComplexityReport {
    eca::RuleId rule;
    double lempel_ziv = 0;
    double compression = 0;
    double lyapunov = 0;
    double krylov = 0;
    WolframClass wolfram_class = WolframClass::I;

    bool operator==(const ComplexityReport&) const = default;
};

// Grid scored by the LZ and compression measures for (rule, config).
eca::SpacetimeGrid scoring_grid(eca::RuleId rule, const ComplexityConfig& config);

ComplexityReport report(eca::RuleId rule, const ComplexityConfig& config);

// Reports for many rules, computed in parallel; output order follows `rules`.
std::vector<ComplexityReport> sweep(std::span<const eca::RuleId> rules, const ComplexityConfig& config);

}  // namespace ecalab::complexity
