#include "ecalab/datagen.hpp"

#include "ecalab/rng.hpp"

namespace ecalab::datagen {

const char* to_string(TaskKind kind) noexcept {
    switch (kind) {
    case TaskKind::pretrain: return "pretrain";
    case TaskKind::reasoning_easy: return "easy";
    case TaskKind::reasoning_hard: return "hard";
    case TaskKind::chess: return "chess";
    }
    return "?";
}

TaskKind parse_task_kind(std::string_view text) {
    if (text == "pretrain") return TaskKind::pretrain;
    if (text == "easy") return TaskKind::reasoning_easy;
    if (text == "hard") return TaskKind::reasoning_hard;
    if (text == "chess") return TaskKind::chess;
    throw Error(ErrorKind::invalid_input, "unknown task '" + std::string(text) + "'");
}

namespace {

void check_config(std::size_t horizon, const PretrainConfig& c) {
    if (horizon != 1 && horizon != 5) throw Error(ErrorKind::invalid_input, "horizon must be 1 or 5");
    if (c.x_len > c.sim_width) throw Error(ErrorKind::window_too_large, "window wider than the simulation");
    if (c.t_len + horizon > c.sim_steps + 1)
        throw Error(ErrorKind::window_too_large, "window plus horizon exceeds the evolution length");
}

eca::BitMatrix slice_rows(const eca::SpacetimeGrid& grid, std::size_t first, std::size_t count,
                          std::size_t x0, std::size_t x_len) {
    eca::BitMatrix out(count, x_len);
    const std::size_t width = grid.width();
    for (std::size_t r = 0; r < count; ++r)
        for (std::size_t j = 0; j < x_len; ++j) out(r, j) = grid.at(first + r, (x0 + j) % width) ? 1 : 0;
    return out;
}

}  // namespace

PretrainSample make_pretrain_sample(eca::RuleId rule, std::size_t horizon, std::uint64_t seed,
                                    std::size_t index, const PretrainConfig& config) {
    check_config(horizon, config);
    const auto key = CounterRng::derive(seed, {0x505245ULL, rule.code(), index});
    const auto init = eca::random_state(config.sim_width, config.density, key);
    auto grid = eca::evolve(rule, init, config.sim_steps, key);

    // Windows are drawn from rows that still have `horizon` successors.
    eca::SpacetimeGrid head{grid.rule, grid.seed,
                            {grid.rows.begin(), grid.rows.end() - static_cast<std::ptrdiff_t>(horizon)}};
    const auto window = eca::sample_window(head, config.t_len, config.x_len, CounterRng::derive(key, {1}));

    PretrainSample s;
    s.t0 = window.t0;
    s.x0 = window.x0;
    s.sample_seed = key;
    s.anchor = grid.rows[window.t0];
    s.window = window.cells;
    const std::size_t last = window.t0 + config.t_len - 1;
    s.target = config.target_mode == TargetMode::final_state
                   ? slice_rows(grid, last + horizon, 1, window.x0, config.x_len)
                   : slice_rows(grid, last + 1, horizon, window.x0, config.x_len);
    return s;
}

PretrainDataset gen_pretrain(eca::RuleId rule, std::size_t n_samples, std::size_t horizon,
                             std::uint64_t seed, const PretrainConfig& config) {
    check_config(horizon, config);
    PretrainDataset ds{rule, horizon, seed, config, {}};
    ds.samples.reserve(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) ds.samples.push_back(make_pretrain_sample(rule, horizon, seed, i, config));
    return ds;
}

bool verify_pretrain_sample(eca::RuleId rule, std::size_t horizon, const PretrainConfig& config,
                            const PretrainSample& s) {
    const auto grid = eca::evolve(rule, s.anchor, config.t_len - 1 + horizon);
    if (slice_rows(grid, 0, config.t_len, s.x0, config.x_len) != s.window) return false;
    const std::size_t last = config.t_len - 1;
    const auto expect = config.target_mode == TargetMode::final_state
                            ? slice_rows(grid, last + horizon, 1, s.x0, config.x_len)
                            : slice_rows(grid, last + 1, horizon, s.x0, config.x_len);
    return expect == s.target;
}

}  // namespace ecalab::datagen
