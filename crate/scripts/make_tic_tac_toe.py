#!/usr/bin/env python3
"""Regenerate data/tic-tac-toe.csv.

The UCI tic-tac-toe endgame database is the complete set of board
configurations at the end of games where "x" moves first. Enumerating the
game tree reproduces it exactly (958 boards, 626 wins for "x").
"""
import csv
import sys

NAMES = ["tl", "tm", "tr", "ml", "mm", "mr", "bl", "bm", "br"]
LINES = [(0, 1, 2), (3, 4, 5), (6, 7, 8), (0, 3, 6), (1, 4, 7), (2, 5, 8), (0, 4, 8), (2, 4, 6)]


def winner(board):
    for a, b, c in LINES:
        if board[a] != "b" and board[a] == board[b] == board[c]:
            return board[a]
    return None


def walk(board, player, out):
    w = winner(board)
    if w is not None or "b" not in board:
        out.add((tuple(board), w == "x"))
        return
    for i in range(9):
        if board[i] == "b":
            board[i] = player
            walk(board, "o" if player == "x" else "x", out)
            board[i] = "b"


def main(path):
    boards = set()
    walk(["b"] * 9, "x", boards)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(NAMES + ["class"])
        for board, xwins in sorted(boards):
            writer.writerow(list(board) + ["positive" if xwins else "negative"])
    print(len(boards), sum(1 for _, x in boards if x))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/tic-tac-toe.csv")
