#include "ecalab/eca.hpp"

#include "ecalab/binary_io.hpp"
#include "ecalab/rng.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <set>
#include <sstream>

namespace ecalab::eca {

namespace {

constexpr std::size_t words_for(std::size_t width) { return (width + 63) / 64; }

constexpr std::uint64_t tail_mask(std::size_t width) {
    const std::size_t r = width & 63;
    return r == 0 ? ~0ULL : (1ULL << r) - 1;
}

// out[i] = s[i - 1 mod W]
void rotate_up(std::span<const std::uint64_t> s, std::size_t width, std::span<std::uint64_t> out) {
    const std::size_t n = s.size();
    const std::uint64_t last = (s[(width - 1) >> 6] >> ((width - 1) & 63)) & 1ULL;
    for (std::size_t j = n; j-- > 1;) out[j] = (s[j] << 1) | (s[j - 1] >> 63);
    out[0] = (s[0] << 1) | last;
    out[n - 1] &= tail_mask(width);
}

// out[i] = s[i + 1 mod W]
void rotate_down(std::span<const std::uint64_t> s, std::size_t width, std::span<std::uint64_t> out) {
    const std::size_t n = s.size();
    const std::uint64_t first = s[0] & 1ULL;
    for (std::size_t j = 0; j + 1 < n; ++j) out[j] = (s[j] >> 1) | (s[j + 1] << 63);
    out[n - 1] = s[n - 1] >> 1;
    out[(width - 1) >> 6] |= first << ((width - 1) & 63);
}

}  // namespace

RuleId RuleId::from_int(long long code) {
    if (code < 0 || code > 255)
        throw Error(ErrorKind::invalid_input, "rule must be in [0, 255], got " + std::to_string(code));
    return RuleId(static_cast<std::uint8_t>(code));
}

State::State(std::size_t width) : width_(width), words_(words_for(width), 0) {}

State State::from_bits(std::span<const std::uint8_t> bits) {
    State s(bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits[i] > 1) throw Error(ErrorKind::invalid_state, "cell values must be 0 or 1");
        s.set(i, bits[i] != 0);
    }
    return s;
}

State State::from_string(std::string_view bits) {
    State s(bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits[i] != '0' && bits[i] != '1')
            throw Error(ErrorKind::invalid_state, "state strings use only '0' and '1'");
        s.set(i, bits[i] == '1');
    }
    return s;
}

std::size_t State::popcount() const noexcept {
    std::size_t n = 0;
    for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
    return n;
}

std::size_t State::hamming(const State& other) const noexcept {
    std::size_t n = 0;
    for (std::size_t j = 0; j < words_.size(); ++j)
        n += static_cast<std::size_t>(std::popcount(words_[j] ^ other.words_[j]));
    return n;
}

std::vector<std::uint8_t> State::to_bits() const {
    std::vector<std::uint8_t> out(width_);
    for (std::size_t i = 0; i < width_; ++i) out[i] = get(i) ? 1 : 0;
    return out;
}

std::string State::to_string() const {
    std::string out(width_, '0');
    for (std::size_t i = 0; i < width_; ++i)
        if (get(i)) out[i] = '1';
    return out;
}

State State::rotated(std::ptrdiff_t k) const {
    State out(width_);
    if (width_ == 0) return out;
    const auto w = static_cast<std::ptrdiff_t>(width_);
    const std::ptrdiff_t shift = ((k % w) + w) % w;
    for (std::size_t i = 0; i < width_; ++i)
        out.set(static_cast<std::size_t>((static_cast<std::ptrdiff_t>(i) + shift) % w), get(i));
    return out;
}

State State::mirrored() const {
    State out(width_);
    for (std::size_t i = 0; i < width_; ++i) out.set(width_ - 1 - i, get(i));
    return out;
}

State step(RuleId rule, const State& s) {
    const std::size_t width = s.width();
    if (width < 3) throw Error(ErrorKind::invalid_state, "state width must be at least 3");
    const std::size_t n = words_for(width);
    std::vector<std::uint64_t> left(n), right(n);
    rotate_up(s.words(), width, left);
    rotate_down(s.words(), width, right);

    State out(width);
    auto dst = out.words();
    const auto center = s.words();
    for (std::size_t j = 0; j < n; ++j) {
        const std::uint64_t l = left[j], c = center[j], r = right[j];
        std::uint64_t acc = 0;
        for (unsigned nb = 0; nb < 8; ++nb) {
            if (!rule.output(nb)) continue;
            acc |= ((nb & 4) ? l : ~l) & ((nb & 2) ? c : ~c) & ((nb & 1) ? r : ~r);
        }
        dst[j] = acc;
    }
    dst[n - 1] &= tail_mask(width);
    return out;
}

SpacetimeGrid evolve(RuleId rule, const State& init, std::size_t steps, std::uint64_t seed) {
    if (steps < 1) throw Error(ErrorKind::invalid_input, "evolve needs at least one step");
    if (init.width() < 3) throw Error(ErrorKind::invalid_state, "state width must be at least 3");
    SpacetimeGrid grid{rule, seed, {}};
    grid.rows.reserve(steps + 1);
    grid.rows.push_back(init);
    for (std::size_t t = 0; t < steps; ++t) grid.rows.push_back(step(rule, grid.rows.back()));
    return grid;
}

State random_state(std::size_t width, double density, std::uint64_t seed) {
    if (!(density >= 0.0 && density <= 1.0))
        throw Error(ErrorKind::invalid_input, "density must lie in [0, 1]");
    CounterRng rng(seed);
    State s(width);
    for (std::size_t i = 0; i < width; ++i) s.set(i, rng.bernoulli(density));
    return s;
}

Window sample_window(const SpacetimeGrid& grid, std::size_t t_len, std::size_t x_len,
                     std::uint64_t seed) {
    const std::size_t rows = grid.height();
    const std::size_t width = grid.width();
    if (t_len == 0 || x_len == 0) throw Error(ErrorKind::invalid_input, "window dimensions must be positive");
    if (t_len > rows)
        throw Error(ErrorKind::window_too_large, "window needs " + std::to_string(t_len) +
                                                     " rows, grid has " + std::to_string(rows));
    if (x_len > width)
        throw Error(ErrorKind::window_too_large, "window needs " + std::to_string(x_len) +
                                                     " columns, grid has " + std::to_string(width));
    CounterRng rng(seed);
    Window w;
    w.t0 = static_cast<std::size_t>(rng.next_below(rows - t_len + 1));
    const auto x_draw = static_cast<std::size_t>(rng.next_below(width));
    w.x0 = x_len == width ? 0 : x_draw;
    w.cells = BitMatrix(t_len, x_len);
    for (std::size_t t = 0; t < t_len; ++t) {
        const State& row = grid.rows[w.t0 + t];
        for (std::size_t j = 0; j < x_len; ++j) w.cells(t, j) = row.get((w.x0 + j) % width) ? 1 : 0;
    }
    return w;
}

RuleId reflect(RuleId rule) noexcept {
    unsigned out = 0;
    for (unsigned n = 0; n < 8; ++n) {
        const unsigned l = (n >> 2) & 1U, c = (n >> 1) & 1U, r = n & 1U;
        const unsigned swapped = (r << 2) | (c << 1) | l;
        out |= static_cast<unsigned>(rule.output(swapped)) << n;
    }
    return RuleId(static_cast<std::uint8_t>(out));
}

RuleId complement(RuleId rule) noexcept {
    unsigned out = 0;
    for (unsigned n = 0; n < 8; ++n) out |= static_cast<unsigned>(!rule.output(7 - n)) << n;
    return RuleId(static_cast<std::uint8_t>(out));
}

RuleId canonical(RuleId rule) noexcept {
    return std::min({rule, reflect(rule), complement(rule), reflect(complement(rule))});
}

std::vector<SymmetryClass> symmetry_classes() {
    std::vector<SymmetryClass> classes;
    for (unsigned code = 0; code < 256; ++code) {
        const RuleId r(static_cast<std::uint8_t>(code));
        if (canonical(r) != r) continue;
        std::set<RuleId> orbit{r, reflect(r), complement(r), reflect(complement(r))};
        classes.push_back({r, {orbit.begin(), orbit.end()}});
    }
    return classes;
}

void write_grid(std::ostream& out, const SpacetimeGrid& grid) {
    if (grid.rows.empty()) throw Error(ErrorKind::invalid_input, "cannot write an empty grid");
    const std::size_t width = grid.width();
    out.write("ECG1", 4);
    io::write_le<std::uint32_t>(out, grid.rule.code());
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(width));
    io::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(grid.height()));
    io::write_le<std::uint32_t>(out, 0);
    io::write_le<std::uint64_t>(out, grid.seed);
    for (const State& row : grid.rows) {
        if (row.width() != width) throw Error(ErrorKind::invalid_state, "ragged grid");
        const auto bits = row.to_bits();
        const auto packed = io::pack_msb(bits.data(), bits.size());
        io::write_bytes(out, packed.data(), packed.size());
    }
}

SpacetimeGrid read_grid(std::istream& in) {
    io::expect_magic(in, "ECG1");
    const auto rule = io::read_le<std::uint32_t>(in, "rule");
    const auto width = io::read_le<std::uint32_t>(in, "width");
    const auto rows = io::read_le<std::uint32_t>(in, "rows");
    const auto reserved = io::read_le<std::uint32_t>(in, "reserved");
    const auto seed = io::read_le<std::uint64_t>(in, "seed");
    if (rule > 255) throw Error(ErrorKind::format_error, "rule field out of range");
    if (width < 3 || rows < 1) throw Error(ErrorKind::format_error, "bad grid dimensions");
    if (reserved != 0) throw Error(ErrorKind::format_error, "reserved field must be zero");

    SpacetimeGrid grid{RuleId(static_cast<std::uint8_t>(rule)), seed, {}};
    grid.rows.reserve(rows);
    const std::size_t row_bytes = (width + 7) / 8;
    std::vector<std::uint8_t> packed(row_bytes);
    std::vector<std::uint8_t> bits(width);
    for (std::uint32_t t = 0; t < rows; ++t) {
        io::read_bytes(in, packed.data(), row_bytes, "grid row");
        if (width % 8 != 0 && (packed.back() & (0xFFU >> (width % 8))) != 0)
            throw Error(ErrorKind::format_error, "nonzero row padding bits");
        io::unpack_msb(packed.data(), width, bits.data());
        grid.rows.push_back(State::from_bits(bits));
    }
    io::expect_eof(in);
    // A grid is only valid if every row is the image of the previous one.
    for (std::size_t t = 0; t + 1 < grid.rows.size(); ++t)
        if (step(grid.rule, grid.rows[t]) != grid.rows[t + 1])
            throw Error(ErrorKind::format_error,
                        "row " + std::to_string(t + 1) + " is not the successor of row " + std::to_string(t));
    return grid;
}

void save_grid(const std::string& path, const SpacetimeGrid& grid) {
    std::ostringstream buf(std::ios::binary);
    write_grid(buf, grid);
    io::atomic_write(path, buf.str());
}

SpacetimeGrid load_grid(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::missing_prerequisite, "cannot open grid file " + path);
    return read_grid(in);
}

}  // namespace ecalab::eca
