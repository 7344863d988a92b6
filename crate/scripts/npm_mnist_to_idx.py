#!/usr/bin/env python3
"""Convert the 10,000 MNIST digits bundled in the npm `mnist` package into IDX files.

Usage:
    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python3 scripts/npm_mnist_to_idx.py package/src/digits data/desk

The package stores each 28x28 digit as 784 grey levels in [0, 1] rounded to three
decimals; round(v * 255) recovers the original byte exactly. Samples are shuffled
with a fixed seed and split 8000 / 2000 into train / t10k files.
"""
import json
import random
import struct
import sys
from pathlib import Path

TRAIN_COUNT = 8000
SHUFFLE_SEED = 20240917


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    src, out = Path(sys.argv[1]), Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    samples = []
    for digit in range(10):
        data = json.loads((src / f"{digit}.json").read_text())["data"]
        assert len(data) % 784 == 0
        for k in range(len(data) // 784):
            pixels = [int(round(v * 255)) for v in data[k * 784:(k + 1) * 784]]
            assert all(0 <= p <= 255 for p in pixels)
            samples.append((pixels, digit))
    random.Random(SHUFFLE_SEED).shuffle(samples)
    train, test = samples[:TRAIN_COUNT], samples[TRAIN_COUNT:]
    write_images(out / "train-images-idx3-ubyte", [s[0] for s in train])
    write_labels(out / "train-labels-idx1-ubyte", [s[1] for s in train])
    write_images(out / "t10k-images-idx3-ubyte", [s[0] for s in test])
    write_labels(out / "t10k-labels-idx1-ubyte", [s[1] for s in test])
    print(f"wrote {len(train)} train / {len(test)} test samples to {out}")


if __name__ == "__main__":
    main()
