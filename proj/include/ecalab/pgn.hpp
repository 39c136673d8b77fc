#pragma once

// PGN reader for the subset needed to recover SAN move lists: tag pairs,
// movetext with move numbers, {} and ; comments, nested (...) variations,
// $n NAGs, !/? suffix glyphs, % escape lines and game termination markers.

#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace ecalab::pgn {

struct Game {
    std::map<std::string, std::string> tags;
    std::vector<std::string> moves;  // mainline SAN, normalized
    std::string result;              // "1-0", "0-1", "1/2-1/2", "*" or empty
};

struct ParseResult {
    std::vector<Game> games;
    std::size_t malformed = 0;
};

// Malformed games are skipped and reported through `warn`.
ParseResult parse(std::string_view text, const std::function<void(const std::string&)>& warn = {});

// Strips !/? glyphs and maps zero-castling ("0-0") to "O-O".
std::string normalize_san(std::string_view token);
bool is_san(std::string_view token);

}  // namespace ecalab::pgn
