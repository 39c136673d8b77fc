#pragma once

// Supervised datasets: ECA pretraining windows, the easy/hard frame-sequence
// reasoning tasks and segmented chess move sequences.

#include "ecalab/eca.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace ecalab::datagen {

enum class TaskKind { pretrain, reasoning_easy, reasoning_hard, chess };
const char* to_string(TaskKind kind) noexcept;
TaskKind parse_task_kind(std::string_view text);

// ---------------------------------------------------------------- pretrain

enum class TargetMode {
    final_state,    // the single state `horizon` steps after the last window row
    all_states,     // all `horizon` intermediate states, stacked row-wise
};

struct PretrainConfig {
    std::size_t sim_width = 256;
    std::size_t sim_steps = 1000;
    std::size_t t_len = 60;
    std::size_t x_len = 100;
    double density = 0.5;
    TargetMode target_mode = TargetMode::final_state;

    bool operator==(const PretrainConfig&) const = default;
};

struct PretrainSample {
    std::size_t t0 = 0;
    std::size_t x0 = 0;
    std::uint64_t sample_seed = 0;  // key of the initial state
    eca::State anchor;              // full-width state at row t0
    eca::BitMatrix window;          // t_len x x_len
    eca::BitMatrix target;          // 1 (or horizon) rows x x_len

    bool operator==(const PretrainSample&) const = default;
};

struct PretrainDataset {
    eca::RuleId rule;
    std::size_t horizon = 1;
    std::uint64_t seed = 0;
    PretrainConfig config;
    std::vector<PretrainSample> samples;

    std::size_t target_rows() const noexcept {
        return config.target_mode == TargetMode::final_state ? 1 : horizon;
    }
    bool operator==(const PretrainDataset&) const = default;
};

PretrainSample make_pretrain_sample(eca::RuleId rule, std::size_t horizon, std::uint64_t seed,
                                    std::size_t index, const PretrainConfig& config);
PretrainDataset gen_pretrain(eca::RuleId rule, std::size_t n_samples, std::size_t horizon,
                             std::uint64_t seed, const PretrainConfig& config = {});

// Re-simulates the anchor row and compares window and target bits.
bool verify_pretrain_sample(eca::RuleId rule, std::size_t horizon, const PretrainConfig& config,
                            const PretrainSample& sample);

// --------------------------------------------------------------- reasoning

// Colours are 1..n_colors; 0 is background.  Every colour advances
// c -> c mod n_colors + 1 per frame.
struct Frame {
    std::size_t size = 0;              // frames are size x size
    std::vector<std::uint8_t> colors;  // row-major

    std::uint8_t at(std::size_t y, std::size_t x) const noexcept { return colors[y * size + x]; }
    bool operator==(const Frame&) const = default;
};

// One-hot over (background + n_colors) channels per cell, row-major cells:
// bit index = (y * size + x) * (n_colors + 1) + colour.
std::vector<std::uint8_t> encode_frame(const Frame& frame, std::size_t n_colors);
Frame decode_frame(std::span<const std::uint8_t> encoded, std::size_t size, std::size_t n_colors);

struct EasyConfig {
    std::size_t grid = 10;
    std::size_t n_colors = 4;  // red -> green -> blue -> yellow
    std::size_t square = 3;
    std::vector<std::array<std::size_t, 2>> positions{{1, 1}, {1, 6}, {6, 1}, {6, 6}};  // (y, x)
};

enum class Direction : std::uint8_t { up = 0, right = 1, down = 2, left = 3 };

struct ShapeState {
    std::uint8_t shape = 0;     // index into base_shapes()
    std::uint8_t rotation = 0;  // quarter turns clockwise
    std::uint8_t y = 0;
    std::uint8_t x = 0;
    std::uint8_t color = 1;
    Direction direction = Direction::up;

    bool operator==(const ShapeState&) const = default;
};

using ShapeBitmap = std::array<std::array<std::uint8_t, 5>, 5>;

// L, T, S and cross.
const std::array<ShapeBitmap, 4>& base_shapes();
ShapeBitmap rotate_clockwise(const ShapeBitmap& shape, unsigned quarter_turns);

struct HardConfig {
    std::size_t grid = 20;  // toroidal
    std::size_t n_colors = 4;
    std::size_t n_shapes = 4;
    std::size_t max_placement_retries = 1000;
};

// Colour advance, quarter turn clockwise and one-cell shift, simultaneously.
ShapeState advance(const ShapeState& s, std::size_t grid, std::size_t n_colors);
// Paints shapes onto a background frame; nullopt if any two shapes overlap.
std::optional<Frame> render(std::span<const ShapeState> shapes, std::size_t grid);

struct ReasoningSample {
    std::vector<Frame> frames;
    std::vector<std::vector<ShapeState>> latent;  // per frame; empty for the easy task

    bool operator==(const ReasoningSample&) const = default;
};

struct ReasoningDataset {
    TaskKind kind = TaskKind::reasoning_easy;
    std::size_t seq_len = 0;
    std::uint64_t seed = 0;
    std::size_t grid = 0;
    std::size_t n_colors = 0;
    std::size_t n_shapes = 0;  // latent shapes per frame (hard task)
    nlohmann::json config;     // generator configuration echo
    std::vector<ReasoningSample> sequences;

    std::size_t frame_width() const noexcept { return grid * grid * (n_colors + 1); }
    bool operator==(const ReasoningDataset&) const = default;
};

ReasoningDataset gen_reasoning_easy(std::size_t n_sequences, std::size_t seq_len, std::uint64_t seed,
                                    const EasyConfig& config = {});
ReasoningDataset gen_reasoning_hard(std::size_t n_sequences, std::size_t seq_len, std::uint64_t seed,
                                    const HardConfig& config = {});

// ------------------------------------------------------------------- chess

inline constexpr std::int32_t pad_id = 0;
inline constexpr std::int32_t unk_id = 1;
inline constexpr std::size_t chess_context = 60;

class Vocabulary {
public:
    Vocabulary();
    // Ids 2.. assigned by descending frequency, ties broken lexicographically.
    static Vocabulary build(const std::vector<std::vector<std::string>>& games);
    static Vocabulary from_tokens(std::vector<std::string> id_to_token);

    std::int32_t encode(const std::string& san) const;
    const std::string& decode(std::int32_t id) const;
    std::size_t size() const noexcept { return tokens_.size(); }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }
    bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::map<std::string, std::int32_t> ids_;
};

struct ChessSequence {
    std::uint64_t game_id = 0;
    std::vector<std::int32_t> tokens;  // exactly chess_context ids
    std::size_t length = 0;            // non-pad prefix length

    bool is_pad(std::size_t i) const noexcept { return i >= length; }
    bool operator==(const ChessSequence&) const = default;
};

// Non-overlapping chunks of `context` ids; the final short chunk is padded.
std::vector<ChessSequence> segment_game(std::uint64_t game_id, std::span<const std::int32_t> ids,
                                        std::size_t context = chess_context);

struct ChessDataset {
    std::string split;  // train | val | test
    Vocabulary vocab;
    std::vector<ChessSequence> sequences;

    bool operator==(const ChessDataset&) const = default;
};

struct SplitSpec {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
    std::uint64_t seed = 0;
};

struct ChessGame {
    std::uint64_t id = 0;
    std::map<std::string, std::string> tags;
    std::vector<std::string> moves;
};

struct ChessCorpus {
    ChessDataset train, val, test;
    Vocabulary vocab;
    std::vector<ChessGame> train_games, val_games, test_games;
    std::size_t games_parsed = 0;
    std::size_t games_malformed = 0;
    std::size_t games_below_rating = 0;
};

using WarningSink = std::function<void(const std::string&)>;

// Games whose WhiteElo and BlackElo are both >= min_rating, split by game.
ChessCorpus ingest_chess(const std::vector<std::string>& pgn_paths, int min_rating = 2200,
                         const SplitSpec& split = {}, const WarningSink& warn = {});
ChessCorpus ingest_chess_text(std::string_view pgn_text, int min_rating = 2200,
                              const SplitSpec& split = {}, const WarningSink& warn = {});

// --------------------------------------------------------------- container

using Dataset = std::variant<PretrainDataset, ReasoningDataset, ChessDataset>;

TaskKind kind_of(const Dataset& ds);
std::size_t record_count(const Dataset& ds);

// .eds container: "EDS1", u32 version, u32 record count, u32 header length,
// JSON header (kind, record layout, config echo, vocabulary, content hash),
// then fixed-width records.  Loading verifies size, layout and hash.
std::string serialize_dataset(const Dataset& ds);
Dataset deserialize_dataset(std::string_view bytes);
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);
// SHA-256 of the record section.
std::string dataset_hash(const Dataset& ds);

}  // namespace ecalab::datagen
