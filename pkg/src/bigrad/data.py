"""Dataset loading: MNIST IDX files, sparse bag-of-words text, synthetic problems."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DataFileError, FormatError, LabelRangeError, LengthError, ParseError
from .tensor import RngState, rng_normal, rng_permutation, rng_uniform

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
IMAGE_SIDE = 28

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "validation": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass
class Dataset:
    X: np.ndarray | sp.csr_matrix
    y: np.ndarray
    split: str = "train"

    def __post_init__(self):
        if self.X.shape[0] != len(self.y):
            raise LengthError(f"{self.X.shape[0]} rows but {len(self.y)} labels")
        if self.split not in ("train", "validation"):
            raise ConfigError(f"unknown split {self.split!r}")

    def __len__(self):
        return len(self.y)

    def take(self, indices) -> "Dataset":
        return Dataset(self.X[indices], self.y[indices], self.split)


# -- IDX ---------------------------------------------------------------------------


def _read_bytes(path) -> bytes:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataFileError(f"cannot read {path}: {exc}") from exc
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _parse_header(raw: bytes, magic: int, ndims: int, path) -> tuple[int, ...]:
    header_len = 4 * (1 + ndims)
    if len(raw) < header_len:
        raise LengthError(f"{path}: header truncated ({len(raw)} bytes)")
    found = struct.unpack(">I", raw[:4])[0]
    if found != magic:
        raise FormatError(f"{path}: magic 0x{found:08x}, expected 0x{magic:08x}")
    return struct.unpack(f">{ndims}I", raw[4:header_len])


def load_idx_images(path) -> np.ndarray:
    """Images as an ``[N, 784]`` float64 array with pixels scaled to [0, 1]."""
    raw = _read_bytes(path)
    count, rows, cols = _parse_header(raw, IMAGE_MAGIC, 3, path)
    if rows != IMAGE_SIDE or cols != IMAGE_SIDE:
        raise FormatError(f"{path}: images are {rows}x{cols}, expected {IMAGE_SIDE}x{IMAGE_SIDE}")
    expected = count * rows * cols
    pixels = np.frombuffer(raw, dtype=np.uint8, offset=16)
    if pixels.size < expected:
        raise LengthError(f"{path}: {pixels.size} pixel bytes, header declares {expected}")
    if pixels.size > expected:
        raise LengthError(f"{path}: {pixels.size - expected} trailing bytes after {count} images")
    return pixels.reshape(count, rows * cols).astype(np.float64) / 255.0


def load_idx_labels(path) -> np.ndarray:
    raw = _read_bytes(path)
    (count,) = _parse_header(raw, LABEL_MAGIC, 1, path)
    labels = np.frombuffer(raw, dtype=np.uint8, offset=8)
    if labels.size != count:
        raise LengthError(f"{path}: {labels.size} label bytes, header declares {count}")
    if labels.size and labels.max() > 9:
        bad = int(np.argmax(labels > 9))
        raise LabelRangeError(f"{path}: label {labels[bad]} at index {bad} is outside 0-9")
    return labels.astype(np.int64)


def write_idx_images(path, images) -> None:
    """Write ``[N, 784]`` values in [0, 1] (or uint8 pixels) as an IDX image file."""
    images = np.asarray(images)
    if images.dtype != np.uint8:
        images = np.clip(np.rint(images * 255.0), 0, 255).astype(np.uint8)
    images = images.reshape(-1, IMAGE_SIDE * IMAGE_SIDE)
    header = struct.pack(">4I", IMAGE_MAGIC, images.shape[0], IMAGE_SIDE, IMAGE_SIDE)
    Path(path).write_bytes(header + images.tobytes())


def write_idx_labels(path, labels) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    Path(path).write_bytes(struct.pack(">2I", LABEL_MAGIC, labels.size) + labels.tobytes())


def _find(directory: Path, stem: str) -> Path:
    for candidate in (directory / stem, directory / (stem + ".gz")):
        if candidate.exists():
            return candidate
    raise DataFileError(f"missing MNIST file {stem}[.gz] in {directory}")


def load_mnist(directory, split: str = "train") -> Dataset:
    """Load the standard MNIST file pair for ``split`` (``train`` or ``validation``/t10k)."""
    directory = Path(directory)
    if split not in MNIST_FILES:
        raise ConfigError(f"unknown split {split!r}")
    images, labels = MNIST_FILES[split]
    X = load_idx_images(_find(directory, images))
    y = load_idx_labels(_find(directory, labels))
    return Dataset(X, y, split)


def write_mnist_sample(directory, n_validation: int = 1000, seed: int = 0) -> dict[str, int]:
    """Write the 5,000-digit MNIST sample shipped with mlxtend as IDX train/t10k files.

    Used when the full MNIST files are not available; returns split sizes.
    """
    try:
        from mlxtend.data import mnist_data
    except ImportError as exc:
        raise DataFileError("writing the MNIST sample needs the optional 'mlxtend' package") from exc
    X, y = mnist_data()
    order = rng_permutation(RngState(seed), len(y))
    X, y = X[order].astype(np.uint8), y[order]
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    parts = {"train": slice(n_validation, None), "validation": slice(0, n_validation)}
    sizes = {}
    for split, rows in parts.items():
        images, labels = MNIST_FILES[split]
        write_idx_images(directory / images, X[rows])
        write_idx_labels(directory / labels, y[rows])
        sizes[split] = len(y[rows])
    return sizes


# -- sparse bag-of-words text --------------------------------------------------


def _validated_csr(indptr, indices, values, n_cols) -> sp.csr_matrix:
    X = sp.csr_matrix(
        (np.asarray(values, dtype=np.float64), np.asarray(indices, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
        shape=(len(indptr) - 1, n_cols),
    )
    X.has_sorted_indices = True
    return X


def check_sparse(X: sp.csr_matrix) -> None:
    """Raise unless every row has strictly increasing in-range indices and finite values."""
    for row in range(X.shape[0]):
        idx = X.indices[X.indptr[row]:X.indptr[row + 1]]
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[-1] >= X.shape[1] or idx[0] < 0):
            raise FormatError(f"row {row}: indices must be strictly increasing and < {X.shape[1]}")
    if not np.all(np.isfinite(X.data)):
        raise FormatError("sparse matrix holds non-finite values")


def load_sparse_text(path, d: int = 10_000) -> tuple[sp.csr_matrix, np.ndarray]:
    """Parse ``label idx:val idx:val ...`` lines (0-based indices) into CSR rows."""
    indptr, indices, values, labels = [0], [], [], []
    try:
        fh = open(path)
    except OSError as exc:
        raise DataFileError(f"cannot read {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            try:
                label = int(tokens[0])
            except ValueError:
                raise ParseError(f"bad label {tokens[0]!r}", lineno) from None
            if label not in (0, 1):
                raise LabelRangeError(f"line {lineno}: label {label} is not 0 or 1")
            row = {}
            for tok in tokens[1:]:
                key, sep, val = tok.partition(":")
                try:
                    if not sep:
                        raise ValueError
                    j, v = int(key), float(val)
                except ValueError:
                    raise ParseError(f"malformed token {tok!r}", lineno) from None
                if not 0 <= j < d:
                    raise LabelRangeError(f"line {lineno}: index {j} outside [0, {d})")
                if not np.isfinite(v):
                    raise ParseError(f"non-finite value in {tok!r}", lineno)
                if j in row:
                    raise ParseError(f"duplicate index {j}", lineno)
                row[j] = v
            for j in sorted(row):
                indices.append(j)
                values.append(row[j])
            indptr.append(len(indices))
            labels.append(label)
    return _validated_csr(indptr, indices, values, d), np.asarray(labels, dtype=np.int64)


def write_sparse_text(path, X: sp.csr_matrix, y) -> None:
    X = sp.csr_matrix(X)
    X.sort_indices()
    with open(path, "w") as fh:
        for row, label in enumerate(y):
            lo, hi = X.indptr[row], X.indptr[row + 1]
            pairs = " ".join(f"{j}:{float(v)!r}" for j, v in zip(X.indices[lo:hi], X.data[lo:hi]))
            fh.write(f"{int(label)} {pairs}".rstrip() + "\n")


def synth_sparse_binary(seed: int, n: int, d: int = 10_000, nnz: int = 50, informative: int = 500):
    """Bag-of-words-like binary task with balanced labels from a planted linear rule.

    Each row holds ``nnz`` distinct words (value 1.0) drawn from a Zipf-like
    vocabulary distribution. The ``informative`` most frequent words carry
    Gaussian weights; rows are labelled 1 when their planted score is above
    the median. Returns ``(csr_matrix, labels)``.
    """
    if n < 1 or d < 1 or not 1 <= nnz <= d or not 1 <= informative <= d:
        raise ConfigError("need n >= 1, d >= 1, 1 <= nnz <= d and 1 <= informative <= d")
    rng = RngState(seed)
    rank = rng_permutation(rng, d)  # rank[j] = frequency rank of word j
    freq = 1.0 / (1.0 + rank)
    freq /= freq.sum()
    planted = np.where(rank < informative, rng_normal(rng, (d,)), 0.0)
    gen = rng.generator()
    indptr, indices = [0], []
    for _ in range(n):
        row = np.sort(gen.choice(d, size=nnz, replace=False, p=freq))
        indices.extend(row.tolist())
        indptr.append(len(indices))
    jitter = gen.normal(0.0, 1e-9, size=n)  # breaks score ties so the median split is balanced
    rng._advance(gen)
    X = _validated_csr(indptr, indices, np.ones(len(indices)), d)
    score = X @ planted + jitter
    y = (score > np.median(score)).astype(np.int64)
    return X, y


# -- synthetic quadratics -----------------------------------------------------


@dataclass
class QuadraticProblem:
    """``L(x) = 0.5 (x - c)^T diag(D) (x - c)``."""

    diag: np.ndarray
    center: np.ndarray

    def loss(self, x) -> float:
        r = np.asarray(x) - self.center
        return 0.5 * float(np.sum(self.diag * r * r))

    def grad(self, x) -> np.ndarray:
        return self.diag * (np.asarray(x) - self.center)

    @property
    def optimum(self) -> np.ndarray:
        return self.center


def synth_quadratic(seed: int, dim: int, cond: float = 1.0, spread: float = 1.0) -> QuadraticProblem:
    """Diagonal quadratic with eigenvalues log-spaced over ``[1, cond]`` and center uniform in ``[-spread, spread)``."""
    if dim < 1:
        raise ConfigError(f"dim must be >= 1, got {dim}")
    if not cond >= 1:
        raise ConfigError(f"cond must be >= 1, got {cond}")
    rng = RngState(seed)
    diag = np.logspace(0.0, np.log10(cond), dim) if dim > 1 else np.ones(1)
    center = rng_uniform(rng, (dim,), -spread, spread)
    return QuadraticProblem(diag=diag, center=center)
