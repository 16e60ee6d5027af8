#!/usr/bin/env python3
"""Download the four standard MNIST IDX files into data/mnist/.

The library itself never touches the network; run this once (or drop the
files in place yourself), then point ASNI_MNIST_DIR or --out at the
directory.
"""

import argparse
import gzip
import shutil
import struct
import sys
import urllib.request
from pathlib import Path

MIRRORS = [
    "https://ossci-datasets.s3.amazonaws.com/mnist/",
    "https://storage.googleapis.com/cvdf-datasets/mnist/",
]
FILES = {
    "train-images-idx3-ubyte.gz": (2051, 60000),
    "train-labels-idx1-ubyte.gz": (2049, 60000),
    "t10k-images-idx3-ubyte.gz": (2051, 10000),
    "t10k-labels-idx1-ubyte.gz": (2049, 10000),
}


def fetch(name, magic, count, out_dir):
    target = out_dir / name
    if not target.exists():
        last_error = None
        for mirror in MIRRORS:
            try:
                print(f"downloading {mirror}{name}")
                urllib.request.urlretrieve(mirror + name, target)
                break
            except OSError as exc:
                last_error = exc
        else:
            raise SystemExit(f"could not download {name}: {last_error}")
    plain = out_dir / name[:-3]
    if not plain.exists():
        with gzip.open(target, "rb") as src, open(plain, "wb") as dst:
            shutil.copyfileobj(src, dst)
    with open(plain, "rb") as fh:
        got_magic, got_count = struct.unpack(">ii", fh.read(8))
    if (got_magic, got_count) != (magic, count):
        raise SystemExit(f"{plain}: expected magic/count {(magic, count)}, "
                         f"got {(got_magic, got_count)}")
    print(f"ok {plain}")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data/mnist")
    args = parser.parse_args()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, (magic, count) in FILES.items():
        fetch(name, magic, count, out_dir)
    print(f"done; export ASNI_MNIST_DIR={out_dir.resolve()}")


if __name__ == "__main__":
    sys.exit(main())
