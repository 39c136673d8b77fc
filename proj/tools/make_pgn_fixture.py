"""Writes the small PGN corpus used by the chess tests.

Games are legal random playouts with a bias towards captures, checks and a
few common openings, so the move distribution is far from uniform.  A share
of games carries sub-2200 or missing ratings, and a handful are malformed on
purpose.  Requires python-chess; output is deterministic for a given seed.
"""

import argparse
import random

import chess

OPENINGS = [
    ["e4", "e5", "Nf3", "Nc6", "Bb5", "a6"],
    ["e4", "c5", "Nf3", "d6", "d4", "cxd4", "Nxd4", "Nf6"],
    ["d4", "d5", "c4", "e6", "Nc3", "Nf6"],
    ["d4", "Nf6", "c4", "g6", "Nc3", "Bg7", "e4", "d6"],
    ["c4", "e5", "Nc3", "Nf6"],
    ["e4", "e6", "d4", "d5"],
]


def pick(board, rng):
    moves = list(board.legal_moves)
    weights = []
    for m in moves:
        w = 1.0
        if board.is_capture(m):
            w += 4.0
        if board.gives_check(m):
            w += 2.0
        if board.piece_at(m.from_square).piece_type == chess.PAWN and board.fullmove_number < 10:
            w += 1.5
        weights.append(w)
    return rng.choices(moves, weights)[0]


def playout(rng, max_plies):
    board = chess.Board()
    sans = []
    for san in rng.choice(OPENINGS):
        sans.append(san)
        board.push_san(san)
    while not board.is_game_over() and len(sans) < max_plies:
        m = pick(board, rng)
        sans.append(board.san(m))
        board.push(m)
    return sans, board.result(claim_draw=True) if board.is_game_over() else "*"


def movetext(sans, result, rng, decorate):
    out = []
    for i, san in enumerate(sans):
        if i % 2 == 0:
            out.append(f"{i // 2 + 1}.")
        out.append(san)
        if decorate and rng.random() < 0.05:
            out.append(rng.choice(["{a comment}", "$1", "(1... a6 2. a3)", "{ ; not a comment end }"]))
    out.append(result)
    lines, line = [], ""
    for tok in out:
        if len(line) + len(tok) + 1 > 78:
            lines.append(line)
            line = tok
        else:
            line = f"{line} {tok}" if line else tok
    lines.append(line)
    return "\n".join(lines)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--games", type=int, default=240)
    ap.add_argument("--seed", type=int, default=2016)
    ap.add_argument("--out", required=True)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    chunks = []
    for g in range(args.games):
        sans, result = playout(rng, rng.randint(16, 150))
        roll = rng.random()
        if roll < 0.70:
            white, black = rng.randint(2200, 2800), rng.randint(2200, 2800)
        elif roll < 0.85:
            white, black = rng.randint(1500, 2199), rng.randint(2200, 2800)
        elif roll < 0.95:
            white, black = rng.randint(1200, 2199), rng.randint(1200, 2199)
        else:
            white, black = None, rng.randint(2200, 2800)
        tags = [("Event", "Fixture"), ("Site", "local"), ("Round", str(g + 1)), ("White", f"W{g}"),
                ("Black", f"B{g}"), ("Result", result)]
        if white is not None:
            tags.append(("WhiteElo", str(white)))
        tags.append(("BlackElo", str(black)))
        head = "\n".join(f'[{k} "{v}"]' for k, v in tags)
        body = movetext(sans, result, rng, decorate=g % 7 == 0)
        if g % 53 == 17:
            body = body.replace(sans[3], "Zz9", 1)
        chunks.append(f"{head}\n\n{body}\n")
    with open(args.out, "w") as f:
        f.write("\n".join(chunks))


if __name__ == "__main__":
    main()
