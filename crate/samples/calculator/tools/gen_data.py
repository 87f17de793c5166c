"""Regenerates the sample datasets. Output is deterministic."""

import csv
import pathlib

import numpy as np
from sklearn.datasets import load_digits

HERE = pathlib.Path(__file__).resolve().parent.parent / "data"
PIXELS = [f"pixel_{i}" for i in range(64)]

GLYPHS = {
    "plus": ["...##...", "...##...", "...##...", "########", "########", "...##...", "...##...", "...##..."],
    "minus": ["........", "........", "........", "########", "########", "........", "........", "........"],
    "times": ["##....##", ".##..##.", "..####..", "...##...", "..####..", ".##..##.", "##....##", "........"],
    "divide": ["...##...", "...##...", "........", "########", "########", "........", "...##...", "...##..."],
}


def scaled(row):
    return [int(round(v * 255 / 16)) for v in row]


def write(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def glyph(name, rng):
    g = np.array([[255.0 if c == "#" else 0.0 for c in line] for line in GLYPHS[name]])
    g = np.roll(g, rng.integers(-1, 2), axis=1)
    g = g * rng.uniform(0.7, 1.0) + rng.normal(0, 20, g.shape)
    return [int(v) for v in np.clip(np.round(g), 0, 255).ravel()]


def main():
    digits = load_digits()
    write(HERE / "digits.csv", PIXELS + ["digit"],
          [scaled(x) + [int(y)] for x, y in zip(digits.data[:1000], digits.target[:1000])])

    rng = np.random.default_rng(7)
    ops = list(GLYPHS)
    write(HERE / "operators.csv", PIXELS + ["op"],
          [glyph(ops[i % 4], rng) + [ops[i % 4]] for i in range(200)])

    # held-out images for scenarios: ten digits not in the training rows
    samples = []
    seen = set()
    for x, y in zip(digits.data[1000:], digits.target[1000:]):
        if int(y) not in seen:
            seen.add(int(y))
            samples.append([f"digit_{int(y)}", int(y)] + scaled(x))
    for name in ops:
        samples.append([f"op_{name}", ops.index(name)] + glyph(name, rng))
    samples.sort(key=lambda r: r[0])
    write(HERE / "samples.csv", ["id", "label"] + PIXELS, samples)


if __name__ == "__main__":
    main()
