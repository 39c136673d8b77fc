#include "ecalab/complexity.hpp"
#include "ecalab/rng.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace ecalab;

namespace {

std::vector<std::uint8_t> bits_of(const std::string& s) {
    std::vector<std::uint8_t> v;
    for (char ch : s) v.push_back(ch == '1');
    return v;
}

}  // namespace

TEST_CASE("textbook examples") {
    CHECK(complexity::lz76(bits_of("0001101001000101")) == 6);  // 0.001.10.100.1000.101
    CHECK(complexity::lz76(bits_of("0")) == 1);
    CHECK(complexity::lz76(bits_of("01")) == 2);
    CHECK(complexity::lz76(bits_of("0000000000")) == 2);
    CHECK(complexity::lz76(bits_of("0101010101")) == 3);
    CHECK_THROWS_AS(complexity::lz76({}), Error);
}

TEST_CASE("matches the quadratic reference on random and structured sequences") {
    CounterRng rng(20240601);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.next_below(512);
        const double p = trial % 3 == 0 ? 0.5 : rng.next_double();
        std::vector<std::uint8_t> s(n);
        for (auto& b : s) b = rng.bernoulli(p);
        REQUIRE_MESSAGE(complexity::lz76(s) == oracle::lz_reference(s), "trial " << trial << " n " << n);
    }
    for (std::size_t period = 1; period < 12; ++period) {
        std::vector<std::uint8_t> s(300);
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = (i % period) < (period + 1) / 2;
        CHECK(complexity::lz76(s) == oracle::lz_reference(s));
    }
}

TEST_CASE("grid normalisation and compression ratio") {
    const auto ordered = eca::evolve(eca::RuleId(0), eca::random_state(128, 0.5, 1), 200, 1);
    const auto chaotic = eca::evolve(eca::RuleId(30), eca::random_state(128, 0.5, 1), 200, 1);
    const double n = 128.0 * 201.0;
    std::vector<std::uint8_t> flat;
    for (const auto& row : chaotic.rows)
        for (auto b : row.to_bits()) flat.push_back(b);
    CHECK(complexity::lz_grid(chaotic) ==
          doctest::Approx(static_cast<double>(complexity::lz76(flat)) / (n / std::log2(n))).epsilon(1e-12));
    CHECK(complexity::lz_grid(chaotic) > 0.9);
    CHECK(complexity::lz_grid(ordered) < 0.05);
    CHECK(complexity::compression_complexity(chaotic) > 0.95);
    CHECK(complexity::compression_complexity(ordered) < 0.05);
    CHECK(complexity::compressor_identity().find("zlib") != std::string::npos);
}
