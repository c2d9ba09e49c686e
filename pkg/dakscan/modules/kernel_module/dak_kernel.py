#!/usr/bin/env python3
"""
DAKScan Kernel Engine - pooled-anchor angular kernel and per-coordinate split statistics
Computes rho_hat^(k)(Z_i, Z_j) by strict-interval anchor counting and sweeps every split t
to produce xi_k(t) for each coordinate.

Row indices are 0-based. Split values t are counts of pre-split rows, so the admissible
split set for N rows is (2, ..., N-2).
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from dakscan.errors import ConfigurationError, DomainError, InputError
from dakscan.runtime import calculate_optimal_cpus, get_available_ram, setup_logging

logger = logging.getLogger(__name__)

MIN_OBS = 4

# Soft cap on the bytes of one coordinate chunk's (chunk, N, N) count tensor.
CHUNK_BYTES = 64 * 1024 ** 2


def split_set(n_obs: int) -> np.ndarray:
    """Admissible splits (2, ..., N-2)"""
    return np.arange(2, n_obs - 1, dtype=np.int64)


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class SampleMatrix:
    """N x d observation block; row = time, column = coordinate"""
    values: np.ndarray

    def __post_init__(self):
        try:
            values = np.array(self.values, dtype=np.float64, copy=True)
        except (TypeError, ValueError) as e:
            raise InputError(f"Sample values are not numeric: {e}") from e
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if values.ndim != 2:
            raise InputError(f"Sample must be a 2-D matrix, got {values.ndim} dimensions")
        if values.shape[1] < 1:
            raise InputError("Sample has no coordinates")
        if not np.all(np.isfinite(values)):
            bad = int(np.count_nonzero(~np.isfinite(values)))
            raise InputError(f"Sample contains {bad} non-finite entries (NaN/Inf)")
        if values.shape[0] < MIN_OBS:
            raise ConfigurationError(
                f"Need at least {MIN_OBS} observations for a nonempty split set, got N={values.shape[0]}")
        object.__setattr__(self, 'values', _frozen(values))

    @property
    def n_obs(self) -> int:
        return self.values.shape[0]

    @property
    def n_dims(self) -> int:
        return self.values.shape[1]

    def column(self, k: int) -> 'CoordinateSlice':
        return CoordinateSlice.from_values(self.values[:, k])

    def permuted(self, order: np.ndarray) -> 'SampleMatrix':
        return SampleMatrix(self.values[np.asarray(order)])


@dataclass(frozen=True, eq=False)
class CoordinateSlice:
    """One coordinate trajectory and its sorted copy"""
    values: np.ndarray
    sorted_copy: np.ndarray

    @classmethod
    def from_values(cls, values) -> 'CoordinateSlice':
        values = np.array(values, dtype=np.float64, copy=True).ravel()
        if not np.all(np.isfinite(values)):
            raise InputError("Coordinate contains non-finite entries (NaN/Inf)")
        return cls(values=_frozen(values), sorted_copy=_frozen(np.sort(values)))

    @property
    def n_obs(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class PairKernelMatrix:
    """Symmetric kernel matrix stored as anchor counts; entries = counts / n_anchors"""
    counts: np.ndarray
    n_anchors: int

    @classmethod
    def from_entries(cls, entries) -> 'PairKernelMatrix':
        """Wrap an arbitrary symmetric, zero-diagonal real matrix (n_anchors = 1)"""
        entries = np.array(entries, dtype=np.float64, copy=True)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise InputError(f"Pair kernel must be square, got shape {entries.shape}")
        if not np.array_equal(entries, entries.T):
            raise InputError("Pair kernel must be symmetric")
        if np.any(np.diag(entries) != 0):
            raise InputError("Pair kernel diagonal must be 0")
        return cls(counts=_frozen(entries), n_anchors=1)

    @property
    def n_obs(self) -> int:
        return self.counts.shape[0]

    @property
    def entries(self) -> np.ndarray:
        return self.counts / self.n_anchors


@dataclass(frozen=True, eq=False)
class XiMatrix:
    """d x |T| matrix of per-coordinate split statistics"""
    entries: np.ndarray
    split_set: np.ndarray
    n_obs: int

    @property
    def n_dims(self) -> int:
        return self.entries.shape[0]


def angular_indicator(p: float, q: float, r: float) -> int:
    """rho_0(p, q; r): 1 iff the anchor r lies strictly between p and q"""
    return 1 if min(p, q) < r < max(p, q) else 0


def pooled_pair_kernel(coordinate: CoordinateSlice, i: int, j: int) -> float:
    """(1/N) * number of pooled anchors strictly inside (min(Z_i, Z_j), max(Z_i, Z_j))"""
    n = coordinate.n_obs
    if i == j:
        raise DomainError(f"pooled_pair_kernel needs two distinct rows, got i = j = {i}")
    if not (0 <= i < n and 0 <= j < n):
        raise DomainError(f"Row indices ({i}, {j}) outside [0, {n})")
    lo, hi = sorted((coordinate.values[i], coordinate.values[j]))
    below_hi = np.searchsorted(coordinate.sorted_copy, hi, side='left')
    upto_lo = np.searchsorted(coordinate.sorted_copy, lo, side='right')
    return max(0, int(below_hi) - int(upto_lo)) / n


def _interval_counts(less: np.ndarray, leq: np.ndarray) -> np.ndarray:
    """Strict-interior anchor counts from per-row bounds; shapes (..., N) -> (..., N, N)"""
    gap = less[..., :, None] - leq[..., None, :]
    return np.maximum(np.maximum(gap, np.swapaxes(gap, -1, -2)), 0)


def build_pair_kernel(coordinate: CoordinateSlice) -> PairKernelMatrix:
    """Full pooled-anchor kernel matrix of one coordinate, diagonal 0"""
    less = np.searchsorted(coordinate.sorted_copy, coordinate.values, side='left').astype(np.int64)
    leq = np.searchsorted(coordinate.sorted_copy, coordinate.values, side='right').astype(np.int64)
    return PairKernelMatrix(counts=_frozen(_interval_counts(less, leq)), n_anchors=coordinate.n_obs)


def _batched_counts(block: np.ndarray) -> np.ndarray:
    """Anchor counts for every column of an (N, c) block, shape (c, N, N)"""
    columns = block.T
    # Lower and upper insertion points of each value in its own column.
    less = (columns[:, None, :] < columns[:, :, None]).sum(axis=2, dtype=np.int64)
    leq = (columns[:, None, :] <= columns[:, :, None]).sum(axis=2, dtype=np.int64)
    return _interval_counts(less, leq)


def xi_from_block_sums(s_xy, s_xx, s_yy, t: int, n: int, n_anchors: int):
    """xi(t) from unordered block sums of the count matrix"""
    return (2.0 * s_xy / (t * (n - t))
            - 2.0 * s_xx / (t * (t - 1))
            - 2.0 * s_yy / ((n - t) * (n - t - 1))) / n_anchors


def _sweep_splits(counts: np.ndarray, n_anchors: int) -> np.ndarray:
    """Incremental block sums over t for a (..., N, N) stack; returns (..., |T|)"""
    n = counts.shape[-1]
    s_xx = np.zeros(counts.shape[:-2], dtype=counts.dtype)
    s_xy = np.zeros_like(s_xx)
    s_yy = np.triu(counts, k=1).sum(axis=(-2, -1))
    profile = np.empty(counts.shape[:-2] + (max(n - 3, 0),), dtype=np.float64)
    for m in range(n - 2):
        into_x = counts[..., m, :m].sum(axis=-1)
        into_y = counts[..., m, m + 1:].sum(axis=-1)
        s_xx = s_xx + into_x
        s_yy = s_yy - into_y
        s_xy = s_xy - into_x + into_y
        t = m + 1
        if t >= 2:
            profile[..., t - 2] = xi_from_block_sums(s_xy, s_xx, s_yy, t, n, n_anchors)
    return profile


def _exact_block_profile(entries: np.ndarray, n_anchors: int) -> np.ndarray:
    """Real-valued kernels: each block sum is summed exactly and rounded once"""
    n = entries.shape[0]
    rows, cols = np.triu_indices(n, k=1)
    values = entries[rows, cols]
    profile = np.empty(max(n - 3, 0), dtype=np.float64)
    for t in range(2, n - 1):
        in_x = cols < t
        in_y = rows >= t
        cross = ~(in_x | in_y)
        profile[t - 2] = xi_from_block_sums(math.fsum(values[cross]), math.fsum(values[in_x]),
                                            math.fsum(values[in_y]), t, n, n_anchors)
    return profile


def xi_profile(pair_kernel: PairKernelMatrix) -> np.ndarray:
    """xi_k(t) for t in (2, ..., N-2)

    Integer counts use the O(N^2) incremental sweep, which is exact. Real-valued
    kernels from PairKernelMatrix.from_entries take the exact-summation path so the
    result does not depend on summation order.
    """
    if pair_kernel.n_obs < MIN_OBS:
        raise ConfigurationError(f"xi_profile needs N >= {MIN_OBS}, got N={pair_kernel.n_obs}")
    if np.issubdtype(pair_kernel.counts.dtype, np.integer):
        return _sweep_splits(pair_kernel.counts, pair_kernel.n_anchors)
    return _exact_block_profile(pair_kernel.counts, pair_kernel.n_anchors)


def _xi_chunk(block: np.ndarray) -> np.ndarray:
    return _sweep_splits(_batched_counts(block), block.shape[0])


def coordinate_chunks(n_obs: int, n_dims: int, chunk_size: Optional[int] = None) -> List[Tuple[int, int]]:
    """Fixed column ranges; independent of thread count"""
    if chunk_size is None:
        budget = min(CHUNK_BYTES, get_available_ram() * 1024 ** 3 / 16)
        chunk_size = max(1, int(budget // (3 * 8 * n_obs * n_obs)))
    return [(start, min(start + chunk_size, n_dims)) for start in range(0, n_dims, chunk_size)]


def xi_matrix(sample: SampleMatrix, cpus: int = 1, chunk_size: Optional[int] = None) -> XiMatrix:
    """Row k = xi_profile of coordinate k; identical output for any cpus"""
    n, d = sample.n_obs, sample.n_dims
    chunks = coordinate_chunks(n, d, chunk_size)
    entries = np.empty((d, n - 3), dtype=np.float64)

    if cpus <= 1 or len(chunks) == 1:
        for start, stop in chunks:
            entries[start:stop] = _xi_chunk(sample.values[:, start:stop])
    else:
        with ThreadPoolExecutor(max_workers=min(cpus, len(chunks))) as executor:
            future_to_chunk = {
                executor.submit(_xi_chunk, sample.values[:, start:stop]): (start, stop)
                for start, stop in chunks
            }
            for future in as_completed(future_to_chunk):
                start, stop = future_to_chunk[future]
                entries[start:stop] = future.result()

    logger.debug("xi matrix: N=%d, d=%d, %d chunks", n, d, len(chunks))
    return XiMatrix(entries=_frozen(entries), split_set=_frozen(split_set(n)), n_obs=n)


class DakKernelEngine:
    """Kernel engine with resource-aware coordinate parallelism"""

    def __init__(self, cpus: Optional[int] = None, chunk_size: Optional[int] = None):
        self.logger = setup_logging(__name__)
        self.cpus = calculate_optimal_cpus(cpus, self.logger)
        self.chunk_size = chunk_size

    def xi_matrix(self, sample: SampleMatrix) -> XiMatrix:
        xi = xi_matrix(sample, cpus=self.cpus, chunk_size=self.chunk_size)
        self.logger.debug("✓ xi matrix %d x %d on %d threads", xi.n_dims, xi.split_set.size, self.cpus)
        return xi

    def column_profile(self, sample: SampleMatrix, k: int) -> np.ndarray:
        if not 0 <= k < sample.n_dims:
            raise DomainError(f"Coordinate {k} outside [0, {sample.n_dims})")
        return xi_profile(build_pair_kernel(sample.column(k)))


def rank_shortcut(coordinate: CoordinateSlice) -> np.ndarray:
    """(|rank_i - rank_j| - 1)/N with diagonal 0; valid only for distinct values"""
    if np.unique(coordinate.values).size != coordinate.n_obs:
        raise DomainError("rank shortcut requires all-distinct values")
    ranks = np.argsort(np.argsort(coordinate.values, kind='stable'), kind='stable')
    gap = np.abs(ranks[:, None] - ranks[None, :]) - 1
    np.fill_diagonal(gap, 0)
    return gap / coordinate.n_obs


__all__ = [
    'SampleMatrix', 'CoordinateSlice', 'PairKernelMatrix', 'XiMatrix', 'DakKernelEngine',
    'angular_indicator', 'pooled_pair_kernel', 'build_pair_kernel', 'xi_profile', 'xi_matrix',
    'xi_from_block_sums', 'rank_shortcut', 'split_set', 'coordinate_chunks', 'MIN_OBS',
]
