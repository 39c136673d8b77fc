#include "ecalab/datagen.hpp"
#include "ecalab/pgn.hpp"

#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

using namespace ecalab;
using namespace ecalab::datagen;

namespace {

std::string fixture() {
    std::ifstream in(std::string(ECALAB_TEST_DATA) + "/fixture.pgn");
    REQUIRE(in.good());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

const char* tricky = R"([Event "Test"]
[White "A"]
[Black "B"]
[WhiteElo "2300"]
[BlackElo "2250"]
[Result "1-0"]

% escaped line that is ignored
1. e4 {open; the king pawn} e5 2.Nf3 Nc6 (2... d6 3. d4 (3. Bc4 Be7) exd4) 3. Bb5!? a6 $1
4. Ba4 Nf6 5. 0-0 Be7 ; rest of line comment 6. h3
6. Re1 b5 7. Bb3 d6 8. c3 O-O 9. h3 Nb8 10. d4 Nbd7 11. c4 c6 12. cxb5 axb5
13. Nc3 Bb7 14. Bg5 b4 15. Nb1 h6 16. Bh4 c5 17. dxe5 Nxe4 18. Bxe7 Qxe7
19. exd6 Qf6 20. Nbd2 Nxd6 21. Nc4 Nxc4 22. Bxc4 Nb6 23. Ne5 Rae8 24. Bxf7+ Rxf7
25. Nxf7 Rxe1+ 26. Qxe1 Kxf7 27. Qe3 Qg5 28. Qxg5 hxg5 29. b3 Ke6 30. a3 Kd6
31. axb4 cxb4 32. Ra5 Nd5 33. f3 Bc8 34. Kf2 Bf5 35. Ra7 g6 36. Ra6+ Kc5
37. Ke1 Nf4 38. g3 Nxh3 39. Kd2 Kb5 40. Rd6 Kc5 41. Ra6 Nf2 42. g4 Bd3 43. Re6 e8=Q 1-0

[Event "Broken"]
[WhiteElo "2400"]
[BlackElo "2400"]

1. e4 e5 2. Nf3 {unclosed comment 1-0
)";

}  // namespace

TEST_CASE("PGN parser handles comments, variations, NAGs and escapes") {
    std::vector<std::string> warnings;
    const auto res = pgn::parse(tricky, [&](const std::string& w) { warnings.push_back(w); });
    REQUIRE(res.games.size() == 1);
    CHECK(res.malformed == 1);
    CHECK(!warnings.empty());
    const auto& g = res.games[0];
    CHECK(g.result == "1-0");
    CHECK(g.tags.at("WhiteElo") == "2300");
    REQUIRE(g.moves.size() >= 10);
    CHECK(g.moves[0] == "e4");
    CHECK(g.moves[2] == "Nf3");
    CHECK(g.moves[3] == "Nc6");
    CHECK(g.moves[4] == "Bb5");
    CHECK(g.moves[5] == "a6");
    CHECK(g.moves[8] == "O-O");
    CHECK(g.moves[9] == "Be7");
    CHECK(g.moves[10] == "Re1");
    CHECK(g.moves.back() == "e8=Q");
    for (const auto& m : g.moves) CHECK(pgn::is_san(m));
}

TEST_CASE("SAN normalisation and validation") {
    CHECK(pgn::normalize_san("Nf3!?") == "Nf3");
    CHECK(pgn::normalize_san("0-0-0") == "O-O-O");
    CHECK(pgn::normalize_san("exd5??") == "exd5");
    for (const char* ok : {"e4", "exd5", "Nbd7", "R1e2", "Qh4e1", "O-O", "O-O-O+", "e8=Q#", "Kxf7", "bxa8=N+"})
        CHECK_MESSAGE(pgn::is_san(ok), ok);
    for (const char* bad : {"Zz9", "e9", "", "Nx", "O-O-O-O", "1-0", "i4", "Ke"})
        CHECK_MESSAGE(!pgn::is_san(bad), bad);
}

TEST_CASE("vocabulary: frequency order, reserved ids, unknown tokens") {
    const auto v = Vocabulary::build({{"e4", "e5", "Nf3"}, {"e4", "c5", "Nf3"}, {"d4"}});
    CHECK(v.decode(pad_id) == "<pad>");
    CHECK(v.decode(unk_id) == "<unk>");
    CHECK(v.encode("Nf3") == 2);  // tie with e4, byte order: uppercase first
    CHECK(v.encode("e4") == 3);
    CHECK(v.encode("c5") == 4);  // ties lexicographic: c5 < d4 < e5
    CHECK(v.encode("d4") == 5);
    CHECK(v.encode("e5") == 6);
    CHECK(v.encode("Qh5") == unk_id);
    CHECK(v.size() == 7);
    CHECK(Vocabulary::from_tokens(v.tokens()) == v);
}

TEST_CASE("segmentation pads the tail and reconstructs the game") {
    std::vector<std::int32_t> ids(137);
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::int32_t>(2 + i % 50);
    const auto segs = segment_game(5, ids);
    REQUIRE(segs.size() == 3);
    std::vector<std::int32_t> back;
    for (const auto& s : segs) {
        CHECK(s.tokens.size() == chess_context);
        CHECK(s.game_id == 5);
        for (std::size_t i = 0; i < chess_context; ++i) {
            if (i < s.length) back.push_back(s.tokens[i]);
            else CHECK(s.tokens[i] == pad_id);
        }
    }
    CHECK(segs[2].length == 17);
    CHECK(back == ids);
}

TEST_CASE("fixture corpus: rating filter, split and reconstruction") {
    const auto text = fixture();
    const auto parsed = pgn::parse(text);
    const auto corpus = ingest_chess_text(text, 2200, {0.8, 0.1, 0.1, 3});
    CHECK(corpus.games_parsed == parsed.games.size() + parsed.malformed);
    CHECK(corpus.games_malformed == parsed.malformed);
    CHECK(corpus.games_malformed > 0);
    CHECK(corpus.games_below_rating > 0);

    std::size_t expected_kept = 0;
    for (const auto& g : parsed.games) {
        auto w = g.tags.find("WhiteElo"), b = g.tags.find("BlackElo");
        if (w != g.tags.end() && b != g.tags.end() && std::stoi(w->second) >= 2200 && std::stoi(b->second) >= 2200)
            ++expected_kept;
    }
    const std::size_t kept = corpus.train_games.size() + corpus.val_games.size() + corpus.test_games.size();
    CHECK(kept == expected_kept);
    CHECK(kept + corpus.games_below_rating == parsed.games.size());
    CHECK(corpus.train_games.size() == static_cast<std::size_t>(std::llround(0.8 * kept)));

    std::set<std::uint64_t> ids;
    for (const auto* split : {&corpus.train_games, &corpus.val_games, &corpus.test_games})
        for (const auto& g : *split) {
            CHECK(ids.insert(g.id).second);
            CHECK(std::stoi(g.tags.at("WhiteElo")) >= 2200);
            CHECK(std::stoi(g.tags.at("BlackElo")) >= 2200);
        }

    // every training game is recoverable from its padded chunks
    std::map<std::uint64_t, std::vector<std::string>> rebuilt;
    for (const auto& s : corpus.train.sequences)
        for (std::size_t i = 0; i < s.length; ++i) rebuilt[s.game_id].push_back(corpus.vocab.decode(s.tokens[i]));
    CHECK(rebuilt.size() == corpus.train_games.size());
    for (const auto& g : corpus.train_games) CHECK(rebuilt[g.id] == g.moves);

    CHECK(corpus.train.vocab == corpus.vocab);
    CHECK(corpus.test.vocab == corpus.vocab);
    const auto again = ingest_chess_text(text, 2200, {0.8, 0.1, 0.1, 3});
    CHECK(again.train == corpus.train);
    CHECK_THROWS_AS(ingest_chess_text(text, 4000), Error);
}
