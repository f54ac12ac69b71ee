"""Dense float64 tensors and a counter-based, splittable RNG.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 in C (row-major)
order; this module only adds the constructors and guards the rest of the
package relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidRangeError, InvalidShapeError, NonFiniteError, ShapeMismatchError

DTYPE = np.float64


def _validate_shape(shape) -> tuple[int, ...]:
    shape = tuple(int(s) for s in shape)
    if not shape or any(s < 1 for s in shape):
        raise InvalidShapeError(f"invalid shape {shape}: need at least one dimension, all >= 1")
    return shape


def tensor_new(shape, fill: float = 0.0) -> np.ndarray:
    """Tensor of ``shape`` with every element equal to ``fill``."""
    shape = _validate_shape(shape)
    if not np.isfinite(fill):
        raise NonFiniteError(f"fill value {fill!r} is not finite")
    return np.full(shape, fill, dtype=DTYPE)


def as_tensor(values) -> np.ndarray:
    t = np.ascontiguousarray(values, dtype=DTYPE)
    if t.ndim == 0:
        t = t.reshape(1)
    check_finite(t)
    return t


def check_finite(t: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(t)):
        raise NonFiniteError(f"{what} contains NaN or Inf")
    return t


def check_same_shape(*arrays: np.ndarray, names=None) -> None:
    shapes = [np.shape(a) for a in arrays]
    if any(s != shapes[0] for s in shapes[1:]):
        label = ", ".join(names) if names else "operands"
        raise ShapeMismatchError(f"shape mismatch between {label}: {shapes}")


@dataclass
class RngState:
    """Seed plus position in a Philox counter stream.

    Every draw starts a fresh Philox generator at ``counter`` and writes back
    the counter the generator stopped at, so the stream depends only on the
    seed and the sequence of calls.
    """

    seed: int
    counter: int = 0

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise InvalidRangeError(f"seed must fit in 64 unsigned bits, got {self.seed}")

    def generator(self) -> np.random.Generator:
        bits = np.random.Philox(key=self.seed, counter=[self.counter, 0, 0, 0])
        return np.random.Generator(bits)

    def _advance(self, gen: np.random.Generator) -> None:
        # Partially consumed Philox blocks are discarded; the next call starts on a fresh block.
        counter = gen.bit_generator.state["state"]["counter"]
        self.counter = int(counter[0]) + 1

    def split(self, *path: int | str) -> "RngState":
        """Independent child stream keyed by ``path``; the parent is not advanced."""
        words = [self.seed & 0xFFFFFFFF, self.seed >> 32]
        for item in path:
            if isinstance(item, str):
                words.extend(item.encode())
            else:
                words.extend([int(item) & 0xFFFFFFFF, int(item) >> 32])
        child = np.random.SeedSequence(words).generate_state(1, dtype=np.uint64)[0]
        return RngState(int(child))


def rng_uniform(rng: RngState, shape, lo: float, hi: float) -> np.ndarray:
    """I.i.d. uniform samples in ``[lo, hi)``."""
    if not lo < hi:
        raise InvalidRangeError(f"empty interval [{lo}, {hi})")
    shape = _validate_shape(shape)
    gen = rng.generator()
    out = gen.uniform(lo, hi, size=shape)
    rng._advance(gen)
    return out


def rng_permutation(rng: RngState, n: int) -> np.ndarray:
    gen = rng.generator()
    out = gen.permutation(n)
    rng._advance(gen)
    return out


def rng_bernoulli(rng: RngState, shape, keep: float) -> np.ndarray:
    """Boolean mask with each entry True with probability ``keep``."""
    if not 0.0 < keep <= 1.0:
        raise InvalidRangeError(f"keep probability must be in (0, 1], got {keep}")
    gen = rng.generator()
    out = gen.random(size=shape) < keep
    rng._advance(gen)
    return out


def rng_normal(rng: RngState, shape, scale: float = 1.0) -> np.ndarray:
    shape = _validate_shape(shape)
    gen = rng.generator()
    out = gen.normal(0.0, scale, size=shape)
    rng._advance(gen)
    return out
