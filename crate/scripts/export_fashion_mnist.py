#!/usr/bin/env python3
"""Convert the `fashion-mnist` npm package (per-class JSON rasters) to IDX files.

The npm package ships 7000 images per class (class 0 carries two empty
rows, which are dropped) with the official train/test
partition merged. The first 6000 rasters of each class are written to the
`train-*` files and the remainder to the `t10k-*` files, classes interleaved
so that any prefix is roughly balanced.

Optionally writes a small gzipped fixture for a four-class split.

    npm pack fashion-mnist && tar xzf fashion-mnist-*.tgz
    python3 scripts/export_fashion_mnist.py package/src/clothes out/ \
        --fixture crates/core/tests/fixtures --classes 1,2,8,9 \
        --fixture-train 1000 --fixture-test 500
"""

import argparse
import gzip
import json
import os
import random
import struct

TRAIN_PER_CLASS = 6000


def write_idx(prefix, images, labels, compress=False):
    opener = gzip.open if compress else open
    suffix = ".gz" if compress else ""
    with opener(f"{prefix}-images-idx3-ubyte{suffix}", "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))
    with opener(f"{prefix}-labels-idx1-ubyte{suffix}", "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(bytes(labels))


def interleave(per_class):
    out = []
    longest = max(len(v) for v in per_class.values())
    for i in range(longest):
        for c in sorted(per_class):
            if i < len(per_class[c]):
                out.append((per_class[c][i], c))
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("clothes_dir")
    ap.add_argument("out_dir")
    ap.add_argument("--fixture")
    ap.add_argument("--classes", default="1,2,8,9")
    ap.add_argument("--fixture-train", type=int, default=1000)
    ap.add_argument("--fixture-test", type=int, default=500)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    train, test = {}, {}
    for c in range(10):
        with open(os.path.join(args.clothes_dir, f"{c}.json")) as f:
            rasters = [r for r in json.load(f)["data"] if len(r) == 784]
        for r in rasters:
            assert all(0 <= p <= 255 for p in r)
        train[c] = rasters[:TRAIN_PER_CLASS]
        test[c] = rasters[TRAIN_PER_CLASS:]

    os.makedirs(args.out_dir, exist_ok=True)
    for name, part in (("train", train), ("t10k", test)):
        rows = interleave(part)
        write_idx(
            os.path.join(args.out_dir, name),
            [r for r, _ in rows],
            [c for _, c in rows],
        )
        print(f"{name}: {len(rows)} samples")

    if args.fixture:
        classes = [int(c) for c in args.classes.split(",")]
        rng = random.Random(args.seed)
        tag = "".join(str(c) for c in classes)
        os.makedirs(args.fixture, exist_ok=True)
        for name, part, total in (
            ("train", train, args.fixture_train),
            ("test", test, args.fixture_test),
        ):
            per = total // len(classes)
            chosen = {c: rng.sample(part[c], per) for c in classes}
            rows = interleave(chosen)
            write_idx(
                os.path.join(args.fixture, f"fashion{tag}-{name}"),
                [r for r, _ in rows],
                [c for _, c in rows],
                compress=True,
            )
            print(f"fixture {name}: {len(rows)} samples")


if __name__ == "__main__":
    main()
