"""Build the bundled desk-scale MNIST subset from the npm ``mnist`` package.

The npm package (MIT, github.com/cazala/mnist) ships 10,000 MNIST digits as
JSON arrays of intensities in [0, 1]. This script requantizes them to bytes,
shuffles with a fixed seed and writes an 8,000 / 2,000 train/test split in
gzipped IDX format.

    npm pack mnist && tar xzf mnist-*.tgz
    python scripts/make_mnist_subset.py package/src/digits data/mnist-subset
"""

import gzip
import json
import struct
import sys
from pathlib import Path

import numpy as np

N_TEST = 2000
SEED = 20211


def write_idx(path, array, magic):
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(struct.pack(">I", magic))
        for extent in array.shape:
            f.write(struct.pack(">I", extent))
        f.write(np.ascontiguousarray(array, dtype=np.uint8).tobytes())


def main(digits_dir, out_dir):
    images, labels = [], []
    for digit in range(10):
        with open(Path(digits_dir) / f"{digit}.json") as f:
            raw = np.asarray(json.load(f)["data"], dtype=np.float64).reshape(-1, 28, 28)
        images.append(np.rint(raw * 255).astype(np.uint8))
        labels.append(np.full(len(raw), digit, dtype=np.uint8))
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    order = np.random.default_rng(SEED).permutation(len(labels))
    images, labels = images[order], labels[order]

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(out / "train-images-idx3-ubyte.gz", images[N_TEST:], 2051)
    write_idx(out / "train-labels-idx1-ubyte.gz", labels[N_TEST:], 2049)
    write_idx(out / "t10k-images-idx3-ubyte.gz", images[:N_TEST], 2051)
    write_idx(out / "t10k-labels-idx1-ubyte.gz", labels[:N_TEST], 2049)


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
