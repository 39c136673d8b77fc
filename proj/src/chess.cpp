#include "ecalab/datagen.hpp"

#include "ecalab/pgn.hpp"
#include "ecalab/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace ecalab::datagen {

Vocabulary::Vocabulary() : tokens_{"<pad>", "<unk>"} {
    ids_.emplace(tokens_[0], pad_id);
    ids_.emplace(tokens_[1], unk_id);
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& games) {
    std::map<std::string, std::size_t> counts;
    for (const auto& g : games)
        for (const auto& t : g) ++counts[t];
    std::vector<std::pair<std::string, std::size_t>> ordered(counts.begin(), counts.end());
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> tokens{"<pad>", "<unk>"};
    for (auto& [tok, n] : ordered) tokens.push_back(tok);
    return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> id_to_token) {
    if (id_to_token.size() < 2 || id_to_token[0] != "<pad>" || id_to_token[1] != "<unk>")
        throw Error(ErrorKind::format_error, "vocabulary must start with <pad>, <unk>");
    Vocabulary v;
    v.tokens_ = std::move(id_to_token);
    v.ids_.clear();
    for (std::size_t i = 0; i < v.tokens_.size(); ++i)
        if (!v.ids_.emplace(v.tokens_[i], static_cast<std::int32_t>(i)).second)
            throw Error(ErrorKind::format_error, "duplicate vocabulary entry '" + v.tokens_[i] + "'");
    return v;
}

std::int32_t Vocabulary::encode(const std::string& san) const {
    const auto it = ids_.find(san);
    return it == ids_.end() || it->second == pad_id ? unk_id : it->second;
}

const std::string& Vocabulary::decode(std::int32_t id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
        throw Error(ErrorKind::invalid_input, "token id out of range");
    return tokens_[static_cast<std::size_t>(id)];
}

std::vector<ChessSequence> segment_game(std::uint64_t game_id, std::span<const std::int32_t> ids,
                                        std::size_t context) {
    std::vector<ChessSequence> out;
    for (std::size_t start = 0; start < ids.size(); start += context) {
        ChessSequence seq;
        seq.game_id = game_id;
        seq.length = std::min(context, ids.size() - start);
        seq.tokens.assign(context, pad_id);
        std::copy_n(ids.begin() + static_cast<std::ptrdiff_t>(start), seq.length, seq.tokens.begin());
        out.push_back(std::move(seq));
    }
    return out;
}

namespace {

std::optional<int> parse_elo(const std::map<std::string, std::string>& tags, const char* key) {
    const auto it = tags.find(key);
    if (it == tags.end()) return std::nullopt;
    int v = 0;
    const auto& s = it->second;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

ChessDataset encode_split(const std::string& name, const std::vector<ChessGame>& games, const Vocabulary& vocab) {
    ChessDataset ds{name, vocab, {}};
    for (const auto& g : games) {
        std::vector<std::int32_t> ids;
        ids.reserve(g.moves.size());
        for (const auto& m : g.moves) ids.push_back(vocab.encode(m));
        auto chunks = segment_game(g.id, ids);
        ds.sequences.insert(ds.sequences.end(), std::make_move_iterator(chunks.begin()),
                            std::make_move_iterator(chunks.end()));
    }
    return ds;
}

ChessCorpus build_corpus(std::vector<ChessGame> kept, std::size_t parsed, std::size_t malformed,
                         std::size_t below, const SplitSpec& split) {
    if (split.train < 0 || split.val < 0 || split.test < 0 ||
        std::abs(split.train + split.val + split.test - 1.0) > 1e-9)
        throw Error(ErrorKind::invalid_input, "split fractions must be nonnegative and sum to 1");
    if (kept.empty()) throw Error(ErrorKind::empty_corpus, "no games left after the rating filter");

    // Fisher-Yates over whole games.
    CounterRng rng(CounterRng::derive(split.seed, {0x53504C54ULL}));
    for (std::size_t i = kept.size(); i > 1; --i) std::swap(kept[i - 1], kept[rng.next_below(i)]);

    const std::size_t n = kept.size();
    const auto n_train = static_cast<std::size_t>(std::llround(split.train * static_cast<double>(n)));
    const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(split.val * static_cast<double>(n))));

    ChessCorpus c;
    c.games_parsed = parsed;
    c.games_malformed = malformed;
    c.games_below_rating = below;
    c.train_games.assign(kept.begin(), kept.begin() + static_cast<std::ptrdiff_t>(n_train));
    c.val_games.assign(kept.begin() + static_cast<std::ptrdiff_t>(n_train),
                       kept.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    c.test_games.assign(kept.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), kept.end());

    std::vector<std::vector<std::string>> train_moves;
    for (const auto& g : c.train_games) train_moves.push_back(g.moves);
    c.vocab = Vocabulary::build(train_moves);
    c.train = encode_split("train", c.train_games, c.vocab);
    c.val = encode_split("val", c.val_games, c.vocab);
    c.test = encode_split("test", c.test_games, c.vocab);
    return c;
}

void collect(const pgn::ParseResult& parsed, int min_rating, std::uint64_t& next_id, std::vector<ChessGame>& kept,
             std::size_t& below) {
    for (const auto& g : parsed.games) {
        const std::uint64_t id = next_id++;
        const auto white = parse_elo(g.tags, "WhiteElo");
        const auto black = parse_elo(g.tags, "BlackElo");
        if (!white || !black || *white < min_rating || *black < min_rating) {
            ++below;
            continue;
        }
        kept.push_back({id, g.tags, g.moves});
    }
}

}  // namespace

ChessCorpus ingest_chess_text(std::string_view pgn_text, int min_rating, const SplitSpec& split,
                              const WarningSink& warn) {
    const auto parsed = pgn::parse(pgn_text, warn);
    std::vector<ChessGame> kept;
    std::size_t below = 0;
    std::uint64_t next_id = 0;
    collect(parsed, min_rating, next_id, kept, below);
    return build_corpus(std::move(kept), parsed.games.size() + parsed.malformed, parsed.malformed, below, split);
}

ChessCorpus ingest_chess(const std::vector<std::string>& pgn_paths, int min_rating, const SplitSpec& split,
                         const WarningSink& warn) {
    namespace fs = std::filesystem;
    std::vector<fs::path> files;
    for (const auto& p : pgn_paths) {
        if (fs::is_directory(p)) {
            for (const auto& e : fs::recursive_directory_iterator(p))
                if (e.is_regular_file() && e.path().extension() == ".pgn") files.push_back(e.path());
        } else if (fs::is_regular_file(p)) {
            files.emplace_back(p);
        } else {
            throw Error(ErrorKind::missing_prerequisite, "PGN path not found: " + p);
        }
    }
    std::sort(files.begin(), files.end());

    std::vector<ChessGame> kept;
    std::size_t below = 0, total = 0, malformed = 0;
    std::uint64_t next_id = 0;
    for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        if (!in) throw Error(ErrorKind::missing_prerequisite, "cannot read " + f.string());
        std::ostringstream buf;
        buf << in.rdbuf();
        const auto parsed = pgn::parse(buf.str(), warn);
        total += parsed.games.size() + parsed.malformed;
        malformed += parsed.malformed;
        collect(parsed, min_rating, next_id, kept, below);
    }
    return build_corpus(std::move(kept), total, malformed, below, split);
}

}  // namespace ecalab::datagen
