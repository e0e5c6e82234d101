"""
Numerical substrate shared by the channel, geometry, classifier and attack code.

Matrices are plain 2-D float64 numpy arrays. Random draws come from numpy's
counter-based Philox bit generator keyed by (seed, stream_id), so any task can
derive its own reproducible stream without coordinating with other tasks.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ghostflare.exceptions import DimMismatch, RankDeficient

PIVOT_TOLERANCE = 1e-10
_MASK64 = (1 << 64) - 1


def as_matrix(values, name: str = "matrix") -> np.ndarray:
    """Return `values` as a finite 2-D float64 array."""
    matrix = np.asarray(values, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix[:, np.newaxis]
    if matrix.ndim != 2:
        raise DimMismatch(f"{name} must be 2-D (got shape {matrix.shape})")
    if not np.all(np.isfinite(matrix)):
        raise ValueError(f"{name} has non-finite entries")
    return matrix


def lstsq(x, y) -> np.ndarray:
    """
    Solve min_B ||Y - X B||_F.

    Parameters:
    - x: n x k design matrix with n >= k.
    - y: n x m targets.

    Returns:
    The k x m minimiser. Raises RankDeficient when n < k or when the smallest
    singular value of X falls below PIVOT_TOLERANCE relative to the largest.
    """
    x = as_matrix(x, "X")
    y = as_matrix(y, "Y")
    n, k = x.shape
    if y.shape[0] != n:
        raise DimMismatch(f"X has {n} rows but Y has {y.shape[0]}")
    if n < k:
        raise RankDeficient(f"Underdetermined system: {n} rows for {k} unknowns")

    solution, _, rank, singular = np.linalg.lstsq(x, y, rcond=None)
    if rank < k or singular[0] == 0.0 or singular[-1] / singular[0] <= PIVOT_TOLERANCE:
        raise RankDeficient(f"Design matrix has numerical rank {rank} < {k}")
    return solution


def sigmoid(t):
    """Logistic function, evaluated without overflow for large |t|."""
    t = np.asarray(t, dtype=np.float64)
    positive = t >= 0
    # exp(-|t|) never overflows
    z = np.exp(-np.abs(t))
    out = np.where(positive, 1.0 / (1.0 + z), z / (1.0 + z))
    return out if out.ndim else float(out)


@dataclass
class RngStream:
    """
    A reproducible stream of random draws.

    Identical (seed, stream_id) pairs produce identical sequences. A stream is
    single-owner state: parallel work must call `substream` rather than share.
    """

    seed: int
    stream_id: int = 0
    _generator: Optional[np.random.Generator] = field(default=None, init=False, repr=False)

    @property
    def generator(self) -> np.random.Generator:
        if self._generator is None:
            key = np.array([self.seed & _MASK64, self.stream_id & _MASK64], dtype=np.uint64)
            self._generator = np.random.Generator(np.random.Philox(key=key))
        return self._generator

    def substream(self, *path: int) -> "RngStream":
        """Derive an independent stream addressed by an integer path."""
        entropy = [self.seed & _MASK64, self.stream_id & _MASK64, *[int(p) & _MASK64 for p in path]]
        derived = np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0]
        return RngStream(self.seed, int(derived))

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)


def randn(stream: RngStream, n) -> np.ndarray:
    """
    Draw standard normal samples from `stream`.

    The transform is numpy's ziggurat `standard_normal` over Philox bits; `n`
    may be a count or a shape tuple.
    """
    return stream.generator.standard_normal(n)
