#!/usr/bin/env python3
"""Convert a CSV of MNIST digits (784 pixel columns then the label) into the
standard IDX file quartet expected by `wdro mnist --mnist-dir`.

The CSV may be plain, gzip-compressed, or read straight out of a wheel/zip
archive with --member. Rows are shuffled with a fixed seed and split into a
training and a test part.

    python3 tools/mnist_csv_to_idx.py --archive mlxtend-0.24.0-py3-none-any.whl \
        --member mlxtend/data/data/mnist_5k.csv.gz --out data/mnist
"""

import argparse
import gzip
import io
import os
import random
import struct
import sys
import zipfile


def read_rows(path, member):
    if member:
        with zipfile.ZipFile(path) as z:
            raw = z.read(member)
    else:
        with open(path, "rb") as f:
            raw = f.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    rows = []
    for lineno, line in enumerate(io.StringIO(raw.decode("ascii")), 1):
        line = line.strip()
        if not line:
            continue
        vals = [int(float(v)) for v in line.split(",")]
        if len(vals) != 785:
            sys.exit(f"line {lineno}: expected 785 values, got {len(vals)}")
        if not all(0 <= v <= 255 for v in vals[:-1]) or not 0 <= vals[-1] <= 9:
            sys.exit(f"line {lineno}: value out of range")
        rows.append(vals)
    return rows


def write_idx(rows, images_path, labels_path):
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", 2051, len(rows), 28, 28))
        for r in rows:
            f.write(bytes(r[:-1]))
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", 2049, len(rows)))
        f.write(bytes(r[-1] for r in rows))


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    src = ap.add_mutually_exclusive_group(required=True)
    src.add_argument("--csv", help="CSV or CSV.gz file")
    src.add_argument("--archive", help="zip/wheel archive containing the CSV")
    ap.add_argument("--member", help="path of the CSV inside --archive")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--test-count", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if args.archive and not args.member:
        ap.error("--archive needs --member")

    rows = read_rows(args.csv or args.archive, args.member)
    if args.test_count >= len(rows):
        sys.exit(f"test count {args.test_count} leaves no training rows out of {len(rows)}")
    random.Random(args.seed).shuffle(rows)
    test, train = rows[: args.test_count], rows[args.test_count :]

    os.makedirs(args.out, exist_ok=True)
    write_idx(train, os.path.join(args.out, "train-images-idx3-ubyte"), os.path.join(args.out, "train-labels-idx1-ubyte"))
    write_idx(test, os.path.join(args.out, "t10k-images-idx3-ubyte"), os.path.join(args.out, "t10k-labels-idx1-ubyte"))
    print(f"wrote {len(train)} training and {len(test)} test images to {args.out}")


if __name__ == "__main__":
    main()
