#include "ecalab/pgn.hpp"

#include <cctype>

namespace ecalab::pgn {

namespace {

bool is_file(char c) { return c >= 'a' && c <= 'h'; }
bool is_rank(char c) { return c >= '1' && c <= '8'; }
bool is_piece(char c) { return c == 'K' || c == 'Q' || c == 'R' || c == 'B' || c == 'N'; }
bool is_promo(char c) { return c == 'Q' || c == 'R' || c == 'B' || c == 'N'; }

bool is_result(std::string_view t) { return t == "1-0" || t == "0-1" || t == "1/2-1/2" || t == "*"; }

bool is_delimiter(char c) {
    return std::isspace(static_cast<unsigned char>(c)) || c == '{' || c == '}' || c == '(' || c == ')' ||
           c == '[' || c == ']' || c == ';';
}

class Parser {
public:
    Parser(std::string_view text, const std::function<void(const std::string&)>& warn)
        : text_(text), warn_(warn) {}

    ParseResult run() {
        while (pos_ < text_.size()) {
            const char c = text_[pos_];
            if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else if (c == '%' && at_line_start()) {
                skip_line();
            } else if (c == '[') {
                if (in_moves_) finish();  // movetext without a termination marker
                tag_pair();
            } else if (c == '{') {
                const auto end = text_.find('}', pos_);
                if (end == std::string_view::npos) {
                    fail("unterminated comment");
                    pos_ = text_.size();
                } else {
                    pos_ = end + 1;
                }
            } else if (c == ';') {
                skip_line();
            } else if (c == '(') {
                ++depth_;
                in_moves_ = true;
                ++pos_;
            } else if (c == ')') {
                if (depth_ == 0) fail("unbalanced ')'");
                else --depth_;
                ++pos_;
            } else if (c == '}' || c == ']') {
                fail(std::string("stray '") + c + "'");
                ++pos_;
            } else {
                token();
            }
        }
        if (in_moves_ || !game_.tags.empty()) finish();
        return std::move(result_);
    }

private:
    bool at_line_start() const { return pos_ == 0 || text_[pos_ - 1] == '\n'; }

    void skip_line() {
        const auto end = text_.find('\n', pos_);
        pos_ = end == std::string_view::npos ? text_.size() : end + 1;
    }

    void fail(const std::string& why) {
        if (!bad_) reason_ = why;
        bad_ = true;
    }

    void tag_pair() {
        const auto end_line = text_.find('\n', pos_);
        const std::string_view line =
            text_.substr(pos_, end_line == std::string_view::npos ? std::string_view::npos : end_line - pos_);
        pos_ = end_line == std::string_view::npos ? text_.size() : end_line + 1;
        // [Name "Value"]
        std::size_t i = 1;
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        const std::size_t name_start = i;
        while (i < line.size() && (std::isalnum(static_cast<unsigned char>(line[i])) || line[i] == '_')) ++i;
        const std::string name(line.substr(name_start, i - name_start));
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (name.empty() || i >= line.size() || line[i] != '"') {
            fail("malformed tag pair");
            return;
        }
        ++i;
        std::string value;
        bool closed = false;
        for (; i < line.size(); ++i) {
            if (line[i] == '\\' && i + 1 < line.size()) {
                value.push_back(line[++i]);
            } else if (line[i] == '"') {
                closed = true;
                ++i;
                break;
            } else {
                value.push_back(line[i]);
            }
        }
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (!closed || i >= line.size() || line[i] != ']') {
            fail("malformed tag pair");
            return;
        }
        game_.tags[name] = value;
    }

    void token() {
        const std::size_t start = pos_;
        while (pos_ < text_.size() && !is_delimiter(text_[pos_])) ++pos_;
        std::string_view tok = text_.substr(start, pos_ - start);
        in_moves_ = true;
        if (depth_ > 0) return;  // variations are not part of the mainline
        if (is_result(tok)) {
            game_.result = std::string(tok);
            finish();
            return;
        }
        if (tok.front() == '$') return;
        // Move number, possibly glued to the move: "12." "12..." "12.e4"
        std::size_t k = 0;
        while (k < tok.size() && std::isdigit(static_cast<unsigned char>(tok[k]))) ++k;
        if (k > 0 && k < tok.size() && tok[k] == '.') {
            while (k < tok.size() && tok[k] == '.') ++k;
            tok.remove_prefix(k);
            if (tok.empty()) return;
        } else if (k == tok.size()) {
            return;  // bare move number without dot
        }
        if (tok.find_first_not_of("!?") == std::string_view::npos) return;  // standalone glyph
        const std::string san = normalize_san(tok);
        if (!is_san(san)) {
            fail("invalid SAN token '" + std::string(tok) + "'");
            return;
        }
        game_.moves.push_back(san);
    }

    void finish() {
        if (depth_ != 0) fail("unterminated variation");
        ++games_seen_;
        if (bad_) {
            ++result_.malformed;
            if (warn_) warn_("skipping game " + std::to_string(games_seen_) + ": " + reason_);
        } else {
            result_.games.push_back(std::move(game_));
        }
        game_ = Game{};
        bad_ = false;
        reason_.clear();
        depth_ = 0;
        in_moves_ = false;
    }

    std::string_view text_;
    const std::function<void(const std::string&)>& warn_;
    std::size_t pos_ = 0;
    Game game_;
    bool in_moves_ = false;
    bool bad_ = false;
    std::string reason_;
    int depth_ = 0;
    std::size_t games_seen_ = 0;
    ParseResult result_;
};

}  // namespace

std::string normalize_san(std::string_view token) {
    while (!token.empty() && (token.back() == '!' || token.back() == '?')) token.remove_suffix(1);
    std::string out(token);
    if (out.rfind("0-0-0", 0) == 0) out.replace(0, 5, "O-O-O");
    else if (out.rfind("0-0", 0) == 0) out.replace(0, 3, "O-O");
    return out;
}

bool is_san(std::string_view t) {
    if (!t.empty() && (t.back() == '+' || t.back() == '#')) t.remove_suffix(1);
    if (t == "O-O" || t == "O-O-O") return true;
    if (t.size() < 2) return false;
    if (is_piece(t[0])) {
        // Piece move: P [file] [rank] [x] file rank
        std::string_view rest = t.substr(1);
        if (rest.size() < 2 || !is_file(rest[rest.size() - 2]) || !is_rank(rest.back())) return false;
        rest.remove_suffix(2);
        if (!rest.empty() && rest.back() == 'x') rest.remove_suffix(1);
        if (rest.size() > 2) return false;
        if (rest.size() == 2) return is_file(rest[0]) && is_rank(rest[1]);
        if (rest.size() == 1) return is_file(rest[0]) || is_rank(rest[0]);
        return true;
    }
    // Pawn move: file [x file] rank [=promo]
    if (!is_file(t[0])) return false;
    std::size_t i = 1;
    if (i < t.size() && t[i] == 'x') {
        if (i + 1 >= t.size() || !is_file(t[i + 1])) return false;
        i += 2;
    }
    if (i >= t.size() || !is_rank(t[i])) return false;
    ++i;
    if (i == t.size()) return true;
    if (t[i] == '=') ++i;
    return i + 1 == t.size() && is_promo(t[i]);
}

ParseResult parse(std::string_view text, const std::function<void(const std::string&)>& warn) {
    return Parser(text, warn).run();
}

}  // namespace ecalab::pgn
