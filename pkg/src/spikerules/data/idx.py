"""Big-endian IDX files (the MNIST distribution format), optionally gzipped."""

from __future__ import annotations

import gzip
import hashlib
import logging
import shutil
import struct
import urllib.request
from pathlib import Path

import numpy as np

from .datasets import Dataset

log = logging.getLogger(__name__)

IMAGES_MAGIC = 2051
LABELS_MAGIC = 2049

MNIST_MIRROR = "https://ossci-datasets.s3.amazonaws.com/mnist/"
MNIST_FILES = {
    "train-images-idx3-ubyte.gz": "f68b3c2dcbeaaa9fbdd348bbdeb94873",
    "train-labels-idx1-ubyte.gz": "d53e105ee54ea40749a09fcbcd1e9432",
    "t10k-images-idx3-ubyte.gz": "9fb629c4189551a2d022fa330f9573f3",
    "t10k-labels-idx1-ubyte.gz": "ec29112dd5afa0611ce80d1b7f02629c",
}


class IdxFormatError(ValueError):
    pass


def _open(path):
    path = Path(path)
    with open(path, "rb") as f:
        gz = f.read(2) == b"\x1f\x8b"
    return gzip.open(path, "rb") if gz else open(path, "rb")


def read_idx(path, expected_magic: int) -> np.ndarray:
    with _open(path) as f:
        raw = f.read()
    if len(raw) < 4:
        raise IdxFormatError(f"{path}: truncated header")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic != expected_magic:
        raise IdxFormatError(f"{path}: bad magic number {magic}, expected {expected_magic}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxFormatError(f"{path}: truncated header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    count = int(np.prod(dims))
    if len(raw) - header < count:
        raise IdxFormatError(f"{path}: truncated data ({len(raw) - header} of {count} bytes)")
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=header).reshape(dims)


def write_idx(path, array: np.ndarray, magic: int, compress: bool | None = None) -> None:
    array = np.ascontiguousarray(array, dtype=np.uint8)
    if (magic & 0xFF) != array.ndim:
        raise ValueError(f"magic {magic} implies {magic & 0xFF} dims, array has {array.ndim}")
    payload = struct.pack(">I", magic) + struct.pack(f">{array.ndim}I", *array.shape) + array.tobytes()
    compress = str(path).endswith(".gz") if compress is None else compress
    if compress:
        with gzip.GzipFile(path, "wb", mtime=0) as f:
            f.write(payload)
    else:
        Path(path).write_bytes(payload)


def load_idx(images_path, labels_path, limit: int | None = None) -> Dataset:
    """Images flattened to [N, rows*cols] and scaled to [0, 1]."""
    images = read_idx(images_path, IMAGES_MAGIC)
    labels = read_idx(labels_path, LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    if limit is not None:
        images, labels = images[:limit], labels[:limit]
    flat = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(flat, labels.astype(np.int64), 10)


def load_mnist(directory, n_train: int | None = None, n_test: int | None = None):
    d = Path(directory)

    def pick(stem):
        for name in (stem, stem + ".gz"):
            if (d / name).exists():
                return d / name
        raise FileNotFoundError(f"{stem}[.gz] not found in {d}")

    train = load_idx(pick("train-images-idx3-ubyte"), pick("train-labels-idx1-ubyte"), n_train)
    test = load_idx(pick("t10k-images-idx3-ubyte"), pick("t10k-labels-idx1-ubyte"), n_test)
    return train, test


def md5(path) -> str:
    h = hashlib.md5()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def fetch_mnist(directory, mirror: str = MNIST_MIRROR, files=None) -> list[Path]:
    """Download the four MNIST files into ``directory`` and verify checksums.

    Existing files with a matching checksum are kept. A mismatch removes the
    download and raises.
    """
    files = MNIST_FILES if files is None else files
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    out = []
    for name, checksum in files.items():
        target = d / name
        if target.exists() and md5(target) == checksum:
            out.append(target)
            continue
        tmp = target.with_suffix(target.suffix + ".part")
        log.info("fetching %s", mirror + name)
        with urllib.request.urlopen(mirror + name, timeout=60) as resp, open(tmp, "wb") as f:
            shutil.copyfileobj(resp, f)
        got = md5(tmp)
        if got != checksum:
            tmp.unlink()
            raise IdxFormatError(f"{name}: checksum {got} does not match {checksum}")
        tmp.replace(target)
        out.append(target)
    return out
