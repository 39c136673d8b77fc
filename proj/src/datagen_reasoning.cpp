#include "ecalab/datagen.hpp"

#include "ecalab/rng.hpp"

namespace ecalab::datagen {

std::vector<std::uint8_t> encode_frame(const Frame& frame, std::size_t n_colors) {
    const std::size_t channels = n_colors + 1;
    std::vector<std::uint8_t> out(frame.colors.size() * channels, 0);
    for (std::size_t i = 0; i < frame.colors.size(); ++i) {
        if (frame.colors[i] > n_colors) throw Error(ErrorKind::invalid_input, "colour outside the palette");
        out[i * channels + frame.colors[i]] = 1;
    }
    return out;
}

Frame decode_frame(std::span<const std::uint8_t> encoded, std::size_t size, std::size_t n_colors) {
    const std::size_t channels = n_colors + 1;
    if (encoded.size() != size * size * channels)
        throw Error(ErrorKind::invalid_input, "encoded frame has the wrong length");
    Frame f{size, std::vector<std::uint8_t>(size * size, 0)};
    for (std::size_t i = 0; i < size * size; ++i) {
        int hot = -1;
        for (std::size_t c = 0; c < channels; ++c) {
            if (encoded[i * channels + c] == 0) continue;
            if (hot != -1) throw Error(ErrorKind::invalid_input, "encoded cell is not one-hot");
            hot = static_cast<int>(c);
        }
        if (hot == -1) throw Error(ErrorKind::invalid_input, "encoded cell is not one-hot");
        f.colors[i] = static_cast<std::uint8_t>(hot);
    }
    return f;
}

namespace {

std::uint8_t next_color(std::uint8_t c, std::size_t n_colors) {
    return static_cast<std::uint8_t>(c % n_colors + 1);
}

}  // namespace

ReasoningDataset gen_reasoning_easy(std::size_t n_sequences, std::size_t seq_len, std::uint64_t seed,
                                    const EasyConfig& config) {
    if (seq_len < 2) throw Error(ErrorKind::invalid_input, "sequences need at least two frames");
    if (config.n_colors < 1 || config.n_colors > 254) throw Error(ErrorKind::invalid_input, "bad palette size");
    for (const auto& [y, x] : config.positions)
        if (y + config.square > config.grid || x + config.square > config.grid)
            throw Error(ErrorKind::invalid_input, "square does not fit on the grid");

    ReasoningDataset ds;
    ds.kind = TaskKind::reasoning_easy;
    ds.seq_len = seq_len;
    ds.seed = seed;
    ds.grid = config.grid;
    ds.n_colors = config.n_colors;
    ds.config = {{"grid", config.grid},
                 {"n_colors", config.n_colors},
                 {"square", config.square},
                 {"positions", config.positions}};
    for (std::size_t n = 0; n < n_sequences; ++n) {
        CounterRng rng(CounterRng::derive(seed, {0x45415359ULL, n}));
        std::vector<std::uint8_t> colors;
        for (std::size_t k = 0; k < config.positions.size(); ++k)
            colors.push_back(static_cast<std::uint8_t>(rng.next_below(config.n_colors) + 1));

        ReasoningSample sample;
        for (std::size_t t = 0; t < seq_len; ++t) {
            Frame f{config.grid, std::vector<std::uint8_t>(config.grid * config.grid, 0)};
            for (std::size_t k = 0; k < config.positions.size(); ++k) {
                const auto [y0, x0] = config.positions[k];
                for (std::size_t dy = 0; dy < config.square; ++dy)
                    for (std::size_t dx = 0; dx < config.square; ++dx)
                        f.colors[(y0 + dy) * config.grid + x0 + dx] = colors[k];
            }
            sample.frames.push_back(std::move(f));
            for (auto& c : colors) c = next_color(c, config.n_colors);
        }
        ds.sequences.push_back(std::move(sample));
    }
    return ds;
}

const std::array<ShapeBitmap, 4>& base_shapes() {
    static const std::array<ShapeBitmap, 4> shapes{{
        // L
        {{{1, 0, 0, 0, 0}, {1, 0, 0, 0, 0}, {1, 0, 0, 0, 0}, {1, 0, 0, 0, 0}, {1, 1, 1, 1, 0}}},
        // T
        {{{1, 1, 1, 1, 1}, {0, 0, 1, 0, 0}, {0, 0, 1, 0, 0}, {0, 0, 1, 0, 0}, {0, 0, 0, 0, 0}}},
        // S
        {{{0, 0, 1, 1, 1}, {0, 0, 1, 0, 0}, {0, 1, 1, 1, 0}, {0, 0, 1, 0, 0}, {1, 1, 1, 0, 0}}},
        // cross
        {{{0, 0, 1, 0, 0}, {0, 0, 1, 0, 0}, {1, 1, 1, 1, 1}, {0, 0, 1, 0, 0}, {0, 0, 1, 0, 0}}},
    }};
    return shapes;
}

ShapeBitmap rotate_clockwise(const ShapeBitmap& shape, unsigned quarter_turns) {
    ShapeBitmap cur = shape;
    for (unsigned q = 0; q < quarter_turns % 4; ++q) {
        ShapeBitmap next{};
        for (std::size_t r = 0; r < 5; ++r)
            for (std::size_t c = 0; c < 5; ++c) next[r][c] = cur[4 - c][r];
        cur = next;
    }
    return cur;
}

ShapeState advance(const ShapeState& s, std::size_t grid, std::size_t n_colors) {
    static constexpr int dy[4] = {-1, 0, 1, 0};
    static constexpr int dx[4] = {0, 1, 0, -1};
    const auto g = static_cast<int>(grid);
    const auto d = static_cast<unsigned>(s.direction);
    ShapeState out = s;
    out.color = next_color(s.color, n_colors);
    out.rotation = static_cast<std::uint8_t>((s.rotation + 1) % 4);
    out.y = static_cast<std::uint8_t>((s.y + dy[d] + g) % g);
    out.x = static_cast<std::uint8_t>((s.x + dx[d] + g) % g);
    return out;
}

std::optional<Frame> render(std::span<const ShapeState> shapes, std::size_t grid) {
    Frame f{grid, std::vector<std::uint8_t>(grid * grid, 0)};
    for (const auto& s : shapes) {
        const auto bitmap = rotate_clockwise(base_shapes().at(s.shape), s.rotation);
        for (std::size_t r = 0; r < 5; ++r)
            for (std::size_t c = 0; c < 5; ++c) {
                if (!bitmap[r][c]) continue;
                auto& cell = f.colors[((s.y + r) % grid) * grid + (s.x + c) % grid];
                if (cell != 0) return std::nullopt;
                cell = s.color;
            }
    }
    return f;
}

ReasoningDataset gen_reasoning_hard(std::size_t n_sequences, std::size_t seq_len, std::uint64_t seed,
                                    const HardConfig& config) {
    if (seq_len < 2) throw Error(ErrorKind::invalid_input, "sequences need at least two frames");
    if (config.n_shapes < 1 || config.n_shapes > base_shapes().size())
        throw Error(ErrorKind::invalid_input, "n_shapes must be between 1 and 4");
    if (config.grid < 5 || config.grid > 255) throw Error(ErrorKind::invalid_input, "grid must be in [5, 255]");
    if (config.n_colors < 1 || config.n_colors > 254) throw Error(ErrorKind::invalid_input, "bad palette size");

    ReasoningDataset ds;
    ds.kind = TaskKind::reasoning_hard;
    ds.seq_len = seq_len;
    ds.seed = seed;
    ds.grid = config.grid;
    ds.n_colors = config.n_colors;
    ds.n_shapes = config.n_shapes;
    ds.config = {{"grid", config.grid},
                 {"n_colors", config.n_colors},
                 {"n_shapes", config.n_shapes},
                 {"max_placement_retries", config.max_placement_retries}};

    for (std::size_t n = 0; n < n_sequences; ++n) {
        CounterRng rng(CounterRng::derive(seed, {0x48415244ULL, n}));
        bool placed = false;
        for (std::size_t attempt = 0; attempt < config.max_placement_retries && !placed; ++attempt) {
            std::vector<ShapeState> state;
            for (std::size_t k = 0; k < config.n_shapes; ++k) {
                ShapeState s;
                s.shape = static_cast<std::uint8_t>(k);
                s.rotation = static_cast<std::uint8_t>(rng.next_below(4));
                s.y = static_cast<std::uint8_t>(rng.next_below(config.grid));
                s.x = static_cast<std::uint8_t>(rng.next_below(config.grid));
                s.color = static_cast<std::uint8_t>(rng.next_below(config.n_colors) + 1);
                s.direction = static_cast<Direction>(rng.next_below(4));
                state.push_back(s);
            }
            // Shapes must stay disjoint in every generated frame.
            ReasoningSample sample;
            bool ok = true;
            for (std::size_t t = 0; t < seq_len && ok; ++t) {
                auto frame = render(state, config.grid);
                if (!frame) {
                    ok = false;
                    break;
                }
                sample.frames.push_back(std::move(*frame));
                sample.latent.push_back(state);
                for (auto& s : state) s = advance(s, config.grid, config.n_colors);
            }
            if (ok) {
                ds.sequences.push_back(std::move(sample));
                placed = true;
            }
        }
        if (!placed)
            throw Error(ErrorKind::invalid_input, "could not place shapes without overlap after " +
                                                      std::to_string(config.max_placement_retries) + " attempts");
    }
    return ds;
}

}  // namespace ecalab::datagen
