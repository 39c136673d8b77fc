#include "ecalab/complexity.hpp"

#include <array>

namespace ecalab::complexity {

namespace {

// Online suffix automaton over an alphabet of arbitrary bytes, kept small by
// mapping only the symbols seen (two for bit sequences).
class SuffixAutomaton {
public:
    explicit SuffixAutomaton(std::size_t capacity) {
        states_.reserve(2 * capacity + 2);
        states_.push_back({});
    }

    // Appends `c`.  If the state `tracked` is split, returns the clone and the
    // split threshold so callers can relocate strings of length <= threshold.
    struct Split {
        int original = -1;
        int clone = -1;
        int threshold = 0;
    };

    Split extend(unsigned c) {
        Split split;
        const int cur = add_state(states_[last_].len + 1, -1);
        int p = last_;
        while (p != -1 && states_[p].next[c] == -1) {
            states_[p].next[c] = cur;
            p = states_[p].link;
        }
        if (p == -1) {
            states_[cur].link = 0;
        } else {
            const int q = states_[p].next[c];
            if (states_[p].len + 1 == states_[q].len) {
                states_[cur].link = q;
            } else {
                const int clone = add_state(states_[p].len + 1, states_[q].link);
                states_[clone].next = states_[q].next;
                while (p != -1 && states_[p].next[c] == q) {
                    states_[p].next[c] = clone;
                    p = states_[p].link;
                }
                states_[q].link = clone;
                states_[cur].link = clone;
                split = {q, clone, states_[clone].len};
            }
        }
        last_ = cur;
        return split;
    }

    int next(int state, unsigned c) const { return states_[state].next[c]; }

private:
    struct Node {
        int len = 0;
        int link = -1;
        std::array<int, 2> next{-1, -1};
    };

    int add_state(int len, int link) {
        states_.push_back({len, link, {-1, -1}});
        return static_cast<int>(states_.size()) - 1;
    }

    std::vector<Node> states_;
    int last_ = 0;
};

}  // namespace

std::size_t lz76(std::span<const std::uint8_t> bits) {
    const std::size_t n = bits.size();
    if (n == 0) throw Error(ErrorKind::invalid_input, "lz76 of an empty sequence");
    for (auto b : bits)
        if (b > 1) throw Error(ErrorKind::invalid_input, "lz76 expects a 0/1 sequence");

    // Invariant at the top of each phrase: the automaton holds bits[0, i).
    // Extending the copy s[i, i+len) by one symbol is legal iff the longer
    // string occurs in bits[0, i+len); the automaton is grown one symbol per
    // accepted extension to keep that window exact.
    SuffixAutomaton sam(n);
    std::size_t phrases = 0;
    std::size_t i = 0;
    std::size_t added = 0;
    while (i < n) {
        int state = 0;
        std::size_t len = 0;
        while (i + len < n) {
            const int nxt = sam.next(state, bits[i + len]);
            if (nxt == -1) break;
            state = nxt;
            ++len;
            const auto split = sam.extend(bits[added++]);
            if (split.original == state && static_cast<int>(len) <= split.threshold) state = split.clone;
        }
        ++phrases;
        if (i + len >= n) break;
        // The phrase ends with the innovative symbol at i + len.
        const std::size_t end = i + len + 1;
        while (added < end) sam.extend(bits[added++]);
        i = end;
    }
    return phrases;
}

}  // namespace ecalab::complexity
