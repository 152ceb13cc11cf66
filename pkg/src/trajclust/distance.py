"""Condensed pairwise distance matrix: computation, layout, file cache.

The matrix stores the strict upper triangle row by row. The layout is
frozen because the binary cache format depends on it:

    idx(i, j) = i*n - i*(i+1)//2 + (j - i - 1)    for i < j

Work is data-parallel over disjoint row blocks. Every entry depends only
on its own pair of timelines, so results are bitwise independent of the
worker count and of how rows are split into blocks.
"""

from __future__ import annotations

import multiprocessing
import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cohort import Cohort
from .errors import SchemaError, ValidationError
from .timelines import TimelineArrays, _pair_block, encode_timelines

MAGIC = b"TJD1"


def pair_index(n: int, i, j):
    """Condensed index of pair (i, j), i < j, under the frozen layout.

    Accepts scalars or arrays; arrays must already satisfy i < j.
    """
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    if np.any(i >= j) or np.any(i < 0) or np.any(j >= n):
        raise ValidationError("pair_index requires 0 <= i < j < n")
    out = i * n - (i * (i + 1)) // 2 + (j - i - 1)
    if out.ndim == 0:
        return int(out)
    return out


def pair_index_any(n: int, a, b):
    """Condensed indices for pairs in either order (a != b elementwise)."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    i = np.minimum(a, b)
    j = np.maximum(a, b)
    return i * n - (i * (i + 1)) // 2 + (j - i - 1)


@dataclass
class CondensedDistanceMatrix:
    """n and the n*(n-1)/2 distances in frozen pair order."""

    n: int
    values: np.ndarray
    empty_union_pairs: int = 0  # diagnostic: pairs scored 0 by the empty-union convention

    def __post_init__(self):
        if self.n < 2:
            raise ValidationError("a distance matrix needs at least two patients")
        expected = self.n * (self.n - 1) // 2
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != (expected,):
            raise ValidationError(
                f"expected {expected} condensed values for n={self.n}, "
                f"got shape {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("distances must be finite")
        lo, hi = float(self.values.min()), float(self.values.max())
        if lo < 0.0 or hi > 1.0:
            raise ValidationError(f"distances must lie in [0, 1], found [{lo}, {hi}]")

    def pair(self, i: int, j: int) -> float:
        if i == j:
            return 0.0
        return float(self.values[pair_index_any(self.n, i, j)])

    def square(self) -> np.ndarray:
        """Full symmetric matrix with a zero diagonal."""
        out = np.zeros((self.n, self.n))
        i, j = np.triu_indices(self.n, k=1)
        out[i, j] = self.values
        out[j, i] = self.values
        return out


def _row_block(arrays: TimelineArrays, start: int, stop: int):
    n = arrays.n
    counts = [n - i - 1 for i in range(start, stop)]
    out = np.empty(sum(counts))
    empty_pairs = 0
    pos = 0
    for i in range(start, stop):
        d, empty = _pair_block(
            arrays.onsets[i],
            arrays.onsets[i + 1 :],
            arrays.horizons[i],
            arrays.horizons[i + 1 :],
        )
        out[pos : pos + d.size] = d
        empty_pairs += int(empty.sum())
        pos += d.size
    return out, empty_pairs


_WORKER_ARRAYS: TimelineArrays | None = None


def _worker_init(arrays):
    global _WORKER_ARRAYS
    _WORKER_ARRAYS = arrays


def _worker_block(args):
    start, stop = args
    return _row_block(_WORKER_ARRAYS, start, stop)


def _block_bounds(n: int, blocks: int) -> list[tuple[int, int]]:
    """Split rows 0..n-2 into contiguous blocks of roughly equal pair count."""
    pairs_before = np.array([i * n - (i * (i + 1)) // 2 for i in range(n)], dtype=np.int64)
    total = n * (n - 1) // 2
    targets = [total * b // blocks for b in range(1, blocks)]
    cuts = np.searchsorted(pairs_before, targets)
    bounds = []
    prev = 0
    for c in list(cuts) + [n - 1]:
        c = int(min(max(c, prev), n - 1))
        if c > prev:
            bounds.append((prev, c))
            prev = c
    if not bounds:
        bounds = [(0, n - 1)]
    return bounds


def condensed_matrix(data, workers: int = 1) -> CondensedDistanceMatrix:
    """Pairwise censoring-aware Jaccard distances for a whole cohort.

    Args:
        data: a Cohort or pre-encoded TimelineArrays.
        workers: number of worker processes; 0 or 1 computes in-process.

    The result is identical, byte for byte, for any worker count.
    """
    arrays = encode_timelines(data) if isinstance(data, Cohort) else data
    n = arrays.n
    if n < 2:
        raise ValidationError("a distance matrix needs at least two patients")

    if workers is None or workers <= 1:
        values, empty_pairs = _row_block(arrays, 0, n - 1)
        return CondensedDistanceMatrix(n=n, values=values, empty_union_pairs=empty_pairs)

    bounds = _block_bounds(n, blocks=workers * 4)
    values = np.empty(n * (n - 1) // 2)
    empty_pairs = 0
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(
        max_workers=workers, mp_context=ctx, initializer=_worker_init, initargs=(arrays,)
    ) as pool:
        offsets = [pair_index(n, b[0], b[0] + 1) for b in bounds]
        for (start, stop), offset, (block, block_empty) in zip(
            bounds, offsets, pool.map(_worker_block, bounds)
        ):
            values[offset : offset + block.size] = block
            empty_pairs += block_empty
    return CondensedDistanceMatrix(n=n, values=values, empty_union_pairs=empty_pairs)


def write_matrix(matrix: CondensedDistanceMatrix, path) -> None:
    """Binary cache: magic 'TJD1', little-endian uint64 n, then the condensed
    values as little-endian float32 in frozen pair order."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", matrix.n))
        fh.write(matrix.values.astype("<f4").tobytes())


def read_matrix(path) -> CondensedDistanceMatrix:
    """Read a matrix cache written by :func:`write_matrix`.

    Values come back as float64 upcast from the stored float32.
    """
    size = os.path.getsize(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise SchemaError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        raw_n = fh.read(8)
        if len(raw_n) != 8:
            raise SchemaError(f"{path}: truncated header")
        (n,) = struct.unpack("<Q", raw_n)
        if n < 2:
            raise SchemaError(f"{path}: invalid n={n}")
        expected = n * (n - 1) // 2
        if size != 12 + 4 * expected:
            raise SchemaError(
                f"{path}: expected {12 + 4 * expected} bytes for n={n}, found {size}"
            )
        values = np.frombuffer(fh.read(4 * expected), dtype="<f4").astype(np.float64)
    return CondensedDistanceMatrix(n=int(n), values=values)
