#!/usr/bin/env python3
"""Build a 10k-image MNIST subset in IDX format from the npm `mnist` package.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_subset.py package/src/digits data/mnist10k

Writes train-images-idx3-ubyte / train-labels-idx1-ubyte (9000 samples) and
t10k-images-idx3-ubyte / t10k-labels-idx1-ubyte (1000 samples).
"""
import json
import random
import struct
import sys
from pathlib import Path

SIDE = 28
TEST = 1000
SEED = 20240


def load(digits):
    samples = []
    for label in range(10):
        data = json.loads((digits / f"{label}.json").read_text())["data"]
        for start in range(0, len(data), SIDE * SIDE):
            pixels = data[start : start + SIDE * SIDE]
            samples.append((bytes(min(255, round(v * 255)) for v in pixels), label))
    return samples


def write(out, stem, samples):
    with open(out / f"{stem}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(samples), SIDE, SIDE))
        for pixels, _ in samples:
            f.write(pixels)
    with open(out / f"{stem}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x801, len(samples)))
        f.write(bytes(label for _, label in samples))


def main():
    digits, out = Path(sys.argv[1]), Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    samples = load(digits)
    random.Random(SEED).shuffle(samples)
    write(out, "train", samples[TEST:])
    write(out, "t10k", samples[:TEST])
    print(f"{len(samples) - TEST} train, {TEST} test -> {out}")


if __name__ == "__main__":
    main()
