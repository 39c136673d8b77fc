#include "ecalab/complexity.hpp"

#include "ecalab/binary_io.hpp"
#include "ecalab/rng.hpp"

#include <Eigen/Dense>
#include <tbb/parallel_for.h>
#include <zlib.h>

#include <cmath>

namespace ecalab::complexity {

namespace {

std::vector<std::uint8_t> flatten(const eca::SpacetimeGrid& grid) {
    std::vector<std::uint8_t> bits;
    bits.reserve(grid.height() * grid.width());
    for (const auto& row : grid.rows) {
        const auto r = row.to_bits();
        bits.insert(bits.end(), r.begin(), r.end());
    }
    return bits;
}

double least_squares_slope(std::span<const double> t, std::span<const double> y) {
    const auto n = static_cast<double>(t.size());
    double mt = 0, my = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        mt += t[i];
        my += y[i];
    }
    mt /= n;
    my /= n;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        sxy += (t[i] - mt) * (y[i] - my);
        sxx += (t[i] - mt) * (t[i] - mt);
    }
    return sxy / sxx;
}

}  // namespace

double lz_grid(const eca::SpacetimeGrid& grid) {
    const auto bits = flatten(grid);
    const auto phrases = static_cast<double>(lz76(bits));
    const auto n = static_cast<double>(bits.size());
    if (bits.size() < 2) return phrases;
    return phrases / (n / std::log2(n));
}

double compression_complexity(const eca::SpacetimeGrid& grid) {
    const auto bits = flatten(grid);
    if (bits.empty()) throw Error(ErrorKind::invalid_input, "compression of an empty grid");
    const auto raw = io::pack_msb(bits.data(), bits.size());
    uLongf out_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<Bytef> out(out_len);
    const int rc = compress2(out.data(), &out_len, raw.data(), static_cast<uLong>(raw.size()), Z_BEST_COMPRESSION);
    if (rc != Z_OK) throw Error(ErrorKind::numeric_failure, "zlib compress2 failed");
    return static_cast<double>(out_len) / static_cast<double>(raw.size());
}

std::string compressor_identity() {
    return std::string("zlib ") + zlibVersion() + " compress2 level 9 (DEFLATE)";
}

double lyapunov(eca::RuleId rule, std::size_t width, std::size_t trials, std::size_t steps,
                std::uint64_t seed) {
    if (width < 16) throw Error(ErrorKind::invalid_input, "lyapunov needs width >= 16");
    if (trials < 1) throw Error(ErrorKind::invalid_input, "lyapunov needs at least one trial");
    if (steps < 2) throw Error(ErrorKind::invalid_input, "lyapunov needs at least two steps");

    double total = 0;
    std::vector<double> ts, ys;
    for (std::size_t trial = 0; trial < trials; ++trial) {
        const auto key = CounterRng::derive(seed, {0x4C59ULL, rule.code(), trial});
        eca::State a = eca::random_state(width, 0.5, key);
        eca::State b = a;
        CounterRng pick(CounterRng::derive(key, {1}));
        b.flip(static_cast<std::size_t>(pick.next_below(width)));

        ts.clear();
        ys.clear();
        for (std::size_t t = 0; t <= steps; ++t) {
            const std::size_t h = a.hamming(b);
            if (h == 0) break;  // identical trajectories stay identical
            ts.push_back(static_cast<double>(t));
            ys.push_back(std::log(static_cast<double>(h)));
            if (t < steps) {
                a = eca::step(rule, a);
                b = eca::step(rule, b);
            }
        }
        const double slope = ts.size() < 2 ? lyapunov_floor : least_squares_slope(ts, ys);
        total += std::max(slope, lyapunov_floor);
    }
    return total / static_cast<double>(trials);
}

double krylov(eca::RuleId rule, std::size_t width, std::size_t horizon, std::size_t observable_cell) {
    if (width > krylov_max_width)
        throw Error(ErrorKind::state_space_too_large,
                    "krylov width " + std::to_string(width) + " exceeds " + std::to_string(krylov_max_width));
    if (width < 3) throw Error(ErrorKind::invalid_input, "krylov needs width >= 3");
    if (horizon < 1) throw Error(ErrorKind::invalid_input, "krylov needs horizon >= 1");
    if (observable_cell >= width) throw Error(ErrorKind::invalid_input, "observable cell outside the ring");

    const std::size_t n_states = std::size_t{1} << width;
    std::vector<std::uint32_t> image(n_states);
    for (std::size_t s = 0; s < n_states; ++s) {
        eca::State st(width);
        for (std::size_t i = 0; i < width; ++i) st.set(i, (s >> i) & 1U);
        const eca::State nx = eca::step(rule, st);
        std::uint32_t code = 0;
        for (std::size_t i = 0; i < width; ++i) code |= static_cast<std::uint32_t>(nx.get(i)) << i;
        image[s] = code;
    }

    using Vec = Eigen::VectorXd;
    auto apply = [&](const Vec& v) {
        Vec out = Vec::Zero(static_cast<Eigen::Index>(n_states));
        for (std::size_t s = 0; s < n_states; ++s) out[image[s]] += v[static_cast<Eigen::Index>(s)];
        return out;
    };

    Vec o0(static_cast<Eigen::Index>(n_states));
    for (std::size_t s = 0; s < n_states; ++s)
        o0[static_cast<Eigen::Index>(s)] = static_cast<double>((s >> observable_cell) & 1U) - 0.5;
    o0.normalize();

    // Arnoldi with two Gram-Schmidt passes.
    constexpr double residual_tol = 1e-10;
    std::vector<Vec> basis{o0};
    while (basis.size() < horizon) {
        Vec w = apply(basis.back());
        for (int pass = 0; pass < 2; ++pass)
            for (const Vec& k : basis) w -= k.dot(w) * k;
        const double norm = w.norm();
        if (norm < residual_tol) break;
        basis.push_back(w / norm);
    }

    double total = 0;
    Vec v = o0;
    for (std::size_t t = 0; t < horizon; ++t) {
        if (t > 0) v = apply(v);
        const double norm2 = v.squaredNorm();
        if (norm2 < 1e-30) continue;
        double acc = 0;
        for (std::size_t n = 1; n < basis.size(); ++n) {
            const double c = basis[n].dot(v);
            acc += static_cast<double>(n) * c * c;
        }
        total += acc / norm2;
    }
    return total / static_cast<double>(horizon);
}

eca::SpacetimeGrid scoring_grid(eca::RuleId rule, const ComplexityConfig& config) {
    const auto key = CounterRng::derive(config.seed, {0x475249ULL, rule.code()});
    return eca::evolve(rule, eca::random_state(config.width, config.density, key), config.steps, key);
}

ComplexityReport report(eca::RuleId rule, const ComplexityConfig& config) {
    const auto grid = scoring_grid(rule, config);
    ComplexityReport r;
    r.rule = rule;
    r.lempel_ziv = lz_grid(grid);
    r.compression = compression_complexity(grid);
    r.lyapunov = lyapunov(rule, config.lyapunov_width, config.lyapunov_trials, config.lyapunov_steps, config.seed);
    r.krylov = krylov(rule, config.krylov_width, config.krylov_horizon);
    r.wolfram_class = wolfram_class(rule);
    return r;
}

std::vector<ComplexityReport> sweep(std::span<const eca::RuleId> rules, const ComplexityConfig& config) {
    std::vector<ComplexityReport> out(rules.size());
    tbb::parallel_for(std::size_t{0}, rules.size(), [&](std::size_t i) { out[i] = report(rules[i], config); });
    return out;
}

}  // namespace ecalab::complexity
