#!/usr/bin/env python3
# Copyright 2026 The BHyT Authors
# SPDX-License-Identifier: Apache-2.0
"""Writes the bundled byte-level toy corpus (about 1 MB of templated English).

The output is a pure function of the seed, so regenerating it reproduces
data/toy_corpus.txt byte for byte.
"""

import argparse
import pathlib
import random

SUBJECTS = [
    "the engineer", "a small robot", "the old farmer", "my neighbour", "the river",
    "a tired student", "the committee", "our teacher", "the quiet cat", "a young painter",
    "the city council", "the baker", "a curious child", "the north wind", "the captain",
    "the orchestra", "a stray dog", "the library", "the gardener", "a lonely sailor",
]
VERBS = [
    "builds", "watches", "carries", "remembers", "describes", "follows", "repairs",
    "finds", "paints", "measures", "counts", "questions", "feeds", "visits", "answers",
    "collects", "explains", "ignores", "protects", "sells",
]
OBJECTS = [
    "a wooden bridge", "the morning train", "seven green apples", "the broken clock",
    "an old map", "the village square", "a long letter", "the harbour lights",
    "a basket of bread", "the stone wall", "three silver coins", "the empty field",
    "a paper boat", "the winter coat", "the tall lighthouse", "a box of nails",
    "the school garden", "a quiet song", "the last page", "the red kite",
]
ADVERBS = [
    "slowly", "carefully", "every morning", "before noon", "without a word", "again",
    "with great care", "after the storm", "in the evening", "once a week", "quietly",
    "at dawn", "for an hour", "near the market", "by the sea",
]
CONNECTIVES = ["and then", "because", "while", "although", "so", "but", "until", "after"]
NUMBERS = ["one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"]


def clause(rng: random.Random) -> str:
    parts = [rng.choice(SUBJECTS), rng.choice(VERBS), rng.choice(OBJECTS)]
    if rng.random() < 0.6:
        parts.append(rng.choice(ADVERBS))
    return " ".join(parts)


def sentence(rng: random.Random) -> str:
    roll = rng.random()
    if roll < 0.55:
        text = clause(rng)
    elif roll < 0.85:
        text = f"{clause(rng)} {rng.choice(CONNECTIVES)} {clause(rng)}"
    else:
        a, b = rng.randrange(10), rng.randrange(10)
        text = (f"{NUMBERS[a]} plus {NUMBERS[b]} is "
                f"{NUMBERS[a + b + 1] if a + b + 1 < 10 else 'more than ten'}")
    end = "?" if rng.random() < 0.08 else "."
    return text[0].upper() + text[1:] + end


def paragraph(rng: random.Random) -> str:
    return " ".join(sentence(rng) for _ in range(rng.randint(3, 8)))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=pathlib.Path,
                        default=pathlib.Path(__file__).resolve().parent.parent / "data" /
                        "toy_corpus.txt")
    parser.add_argument("--bytes", type=int, default=1_000_000)
    parser.add_argument("--seed", type=int, default=20260101)
    args = parser.parse_args()

    rng = random.Random(args.seed)
    chunks = []
    size = 0
    while size < args.bytes:
        p = paragraph(rng) + "\n\n"
        chunks.append(p)
        size += len(p.encode("ascii"))
    text = "".join(chunks).encode("ascii")[: args.bytes]
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_bytes(text)


if __name__ == "__main__":
    main()
