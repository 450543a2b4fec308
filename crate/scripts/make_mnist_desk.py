#!/usr/bin/env python3
"""Build the desk-scale MNIST subset used by the acceptance suite.

Source: the `mnist` npm package (1.1.0), which ships ~1000 MNIST digits per
class as JSON arrays of grey levels divided by 255 and rounded to 3 places.
Rounding error is below half a grey level, so the original bytes are
recovered exactly.

Usage: npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
       python3 scripts/make_mnist_desk.py package/src/digits data/mnist-desk
"""
import json
import random
import struct
import sys
from pathlib import Path

TRAIN_PER_CLASS = 200
TEST_PER_CLASS = 100
SIDE = 28


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), SIDE, SIDE))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main(src, dst):
    rng = random.Random(20170801)
    train, test = [], []
    for digit in range(10):
        raw = json.loads(Path(src, f"{digit}.json").read_text())["data"]
        n = len(raw) // (SIDE * SIDE)
        images = [
            [int(round(v * 255)) for v in raw[i * SIDE * SIDE:(i + 1) * SIDE * SIDE]]
            for i in range(n)
        ]
        order = list(range(n))
        rng.shuffle(order)
        train += [(images[i], digit) for i in order[:TRAIN_PER_CLASS]]
        test += [(images[i], digit) for i in order[TRAIN_PER_CLASS:TRAIN_PER_CLASS + TEST_PER_CLASS]]
    rng.shuffle(train)
    rng.shuffle(test)
    out = Path(dst)
    out.mkdir(parents=True, exist_ok=True)
    write_images(out / "train-images-idx3-ubyte", [x for x, _ in train])
    write_labels(out / "train-labels-idx1-ubyte", [y for _, y in train])
    write_images(out / "t10k-images-idx3-ubyte", [x for x, _ in test])
    write_labels(out / "t10k-labels-idx1-ubyte", [y for _, y in test])


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
