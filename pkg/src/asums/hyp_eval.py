"""Exact pmf evaluation and sampling for kernel hypotheses.

``Pr[H = x]`` is the average over atoms V of the number of lattice points
y with ``sum_a p_a y_a = x - V`` and ``|y_a| <= c_a``, divided by the box
size. The lattice counts come from a dynamic program over partial
weighted sums, built once per (weights, radii) pair and cached.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .dist_core import DEFAULT_MAX_CELLS, Dist, IntDist, ResourceError, canonical
from .kernel import KernelHypothesis

# Dense DP is used while the range of reachable sums stays below this.
DENSE_RANGE = 8_000_000
# Materialise the full hypothesis pmf when atoms x smoother cells is below this.
MATERIALIZE_CELLS = 30_000_000
# Evaluators keep a materialised law only below this; pools hold many evaluators at once.
CACHE_CELLS = 2_000_000
# Below this many (atom, smoother) pairs the sparse outer sum beats a dense FFT.
SPARSE_PAIRS = 5_000_000
# Scatter beats an FFT while pairs per dense cell stay below this.
SCATTER_PER_CELL = 4
# Count tables up to this many cells stay cached.
TABLE_CACHE_CELLS = 1_000_000
# Largest dense span handled by the scatter and FFT routes.
DENSE_SPAN = 1 << 24
_INT_LIMIT = 2**62


@dataclass(frozen=True)
class CountTable:
    """Lattice counts indexed by weighted sum s, stored sparsely."""

    sums: np.ndarray
    counts: np.ndarray  # int64 when exact, float64 beyond 2**62

    def lookup(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=np.int64)
        i = np.searchsorted(self.sums, s)
        i = np.minimum(i, len(self.sums) - 1)
        return np.where(self.sums[i] == s, self.counts[i], 0)


def _window_sum(table: np.ndarray, step: int, c: int) -> np.ndarray:
    """out[i] = sum of table[i + y * step] over |y| <= c, zero outside the array."""
    size = len(table)
    if 2 * c + 1 <= 16:
        out = np.zeros_like(table)
        for y in range(-c, c + 1):
            d = y * step
            if abs(d) >= size:
                continue
            if d >= 0:
                out[: size - d] += table[d:]
            else:
                out[-d:] += table[: size + d]
        return out
    # One column per residue, cumulative sums down the rows.
    pad = (-size) % step
    grid = np.concatenate([table, np.zeros(pad, dtype=table.dtype)]).reshape(-1, step)
    cs = np.vstack([np.zeros((1, step), dtype=table.dtype), np.cumsum(grid, axis=0)])
    idx = np.arange(grid.shape[0])
    hi = np.minimum(idx + c, grid.shape[0] - 1) + 1
    lo = np.maximum(idx - c, 0)
    return (cs[hi] - cs[lo]).ravel()[:size]


def _dense_table(weights: tuple[int, ...], radii: tuple[int, ...], dtype) -> CountTable:
    reach = sum(abs(p) * c for p, c in zip(weights, radii))
    table = np.zeros(2 * reach + 1, dtype=dtype)
    table[reach] = 1
    for p, c in zip(weights, radii):
        if c > 0:
            table = _window_sum(table, abs(p), c)
    nz = np.flatnonzero(table)
    return CountTable(nz.astype(np.int64) - reach, table[nz])


def _sparse_table(weights: tuple[int, ...], radii: tuple[int, ...], dtype, max_cells: int) -> CountTable:
    sums = np.zeros(1, dtype=np.int64)
    counts = np.ones(1, dtype=dtype)
    for p, c in zip(weights, radii):
        ys = np.arange(-c, c + 1, dtype=np.int64) * p
        if len(sums) * len(ys) > max_cells:
            raise ResourceError("lattice count table exceeds cap")
        s = (sums[:, None] + ys[None, :]).ravel()
        w = np.repeat(counts, len(ys))
        sums, inv = np.unique(s, return_inverse=True)
        counts = np.zeros(len(sums), dtype=dtype)
        np.add.at(counts, inv, w)
    return CountTable(sums, counts)


def count_table(weights: tuple[int, ...], radii: tuple[int, ...], max_cells: int = DEFAULT_MAX_CELLS) -> CountTable:
    """All lattice counts for one (weights, radii) pair; small tables are cached."""
    reach = sum(abs(p) * c for p, c in zip(weights, radii))
    if min(2 * reach + 1, math.prod(2 * c + 1 for c in radii)) <= TABLE_CACHE_CELLS:
        return _cached_table(weights, radii, max_cells)
    return _build_table(weights, radii, max_cells)


@lru_cache(maxsize=256)
def _cached_table(weights: tuple[int, ...], radii: tuple[int, ...], max_cells: int) -> CountTable:
    # lru_cache may build a table twice under a race; both results are identical.
    return _build_table(weights, radii, max_cells)


def _build_table(weights: tuple[int, ...], radii: tuple[int, ...], max_cells: int) -> CountTable:
    box = math.prod(2 * c + 1 for c in radii)
    dtype = np.int64 if box < _INT_LIMIT else np.float64
    reach = sum(abs(p) * c for p, c in zip(weights, radii))
    if 2 * reach + 1 <= min(DENSE_RANGE, max_cells):
        return _dense_table(weights, radii, dtype)
    return _sparse_table(weights, radii, dtype, max_cells)


def count_weighted_box(p, gamma, s: int) -> int:
    """Number of integer y with sum_a p_a y_a = s and |y_a| <= gamma_a."""
    p = tuple(int(x) for x in p)
    gamma = tuple(int(x) for x in gamma)
    if len(p) != len(gamma) or not p:
        raise ValueError("p and gamma must be non-empty and of equal length")
    if any(x == 0 for x in p) or any(g < 0 for g in gamma):
        raise ValueError("need nonzero weights and non-negative radii")
    v = count_table(p, gamma).lookup(np.array([s]))[0]
    return int(v)


def _atom_groups(h: KernelHypothesis) -> tuple[np.ndarray, np.ndarray]:
    vals, mult = np.unique(h.atoms, return_counts=True)
    return vals, mult / len(h.atoms)


def eval_pmf(h: KernelHypothesis, x) -> np.ndarray | float:
    """Pr[H = x] for a scalar or an array of integers."""
    scalar = np.ndim(x) == 0
    xs = np.atleast_1d(np.asarray(x, dtype=np.int64))
    sm = h.smoother
    table = count_table(sm.weights, sm.radii)
    box = float(sm.box_size)
    vals, w = _atom_groups(h)
    out = np.zeros(len(xs))
    # Chunk over x to bound the (x, atom) difference matrix.
    step = max(1, 4_000_000 // max(len(vals), 1))
    for i in range(0, len(xs), step):
        d = xs[i : i + step, None] - vals[None, :]
        out[i : i + step] = (table.lookup(d) / box) @ w
    return float(out[0]) if scalar else out


def _plan(h: KernelHypothesis, max_cells: int, table: CountTable | None = None) -> tuple[str, int]:
    """(route, cells held by the result) for materialising H; raises ResourceError when no route fits."""
    if table is None:
        table = count_table(h.smoother.weights, h.smoother.radii, max_cells)
    vals, _ = _atom_groups(h)
    pairs_n = len(vals) * len(table.sums)
    span = int(vals[-1] - vals[0]) + int(table.sums[-1] - table.sums[0]) + 1
    dense_ok = span <= min(DENSE_SPAN, max_cells)
    if dense_ok and pairs_n <= min(SCATTER_PER_CELL * span, max_cells):
        return "scatter", span
    if pairs_n <= min(SPARSE_PAIRS, max_cells) or (not dense_ok and pairs_n <= max_cells):
        return "sparse", pairs_n
    if dense_ok:
        return "fft", span
    raise ResourceError("hypothesis law exceeds the materialisation cap")


def materialised_cells(h: KernelHypothesis, max_cells: int = MATERIALIZE_CELLS) -> int:
    """Upper bound on the cells `hypothesis_dist` would hold, without building it."""
    return _plan(h, max_cells)[1]


def hypothesis_dist(h: KernelHypothesis, max_cells: int = MATERIALIZE_CELLS) -> Dist:
    """Full law of H: the atom frequencies convolved with the smoother.

    Picks the cheapest of three routes: scatter all (atom, offset) pairs into
    a dense grid, a sparse outer sum, or a dense FFT. Raises ResourceError
    when none fits under `max_cells`.
    """
    sm = h.smoother
    table = count_table(sm.weights, sm.radii, max_cells)
    route, _ = _plan(h, max_cells, table)
    vals, w = _atom_groups(h)
    zs = table.sums
    zp = table.counts.astype(np.float64) / float(sm.box_size)
    span = int(vals[-1] - vals[0]) + int(zs[-1] - zs[0]) + 1
    lo = int(vals[0] + zs[0])
    if route == "scatter":
        raw = np.zeros(span)
        chunk = max(1, SPARSE_PAIRS // len(zs))
        for i in range(0, len(vals), chunk):
            idx = (vals[i : i + chunk, None] + zs[None, :] - lo).ravel()
            raw += np.bincount(idx, weights=(w[i : i + chunk, None] * zp[None, :]).ravel(), minlength=span)
        return IntDist(lo, raw / raw.sum())
    if route == "sparse":
        return canonical((vals[:, None] + zs[None, :]).ravel(), (w[:, None] * zp[None, :]).ravel())
    # Smooth the dense atom histogram one uniform component at a time.
    reach = sm.reach
    raw = np.zeros(span)
    raw[vals - vals[0] + reach] = w
    for p, c in zip(sm.weights, sm.radii):
        if c > 0:
            raw = _window_sum(raw, abs(p), c) / (2 * c + 1)
    raw = np.clip(raw, 0.0, None)
    # Cumulative-sum round-off leaves tiny values where the exact pmf is zero.
    raw[raw < 1e-15 * raw.max()] = 0.0
    return IntDist(int(vals[0]) - reach, raw / raw.sum())


class HypothesisEvaluator:
    """Vectorised pmf for a hypothesis.

    Small laws are materialised once and kept. Larger ones up to
    `max_cells` are rebuilt for each call and dropped afterwards, so a pool
    of evaluators never holds more than one large law. Beyond that the
    pointwise DP count is used.
    """

    def __init__(self, h: KernelHypothesis, cache_cells: int = CACHE_CELLS, max_cells: int = MATERIALIZE_CELLS):
        self.h = h
        self._dist: Dist | None = None
        try:
            self._cells: int | None = materialised_cells(h, max_cells)
        except ResourceError:
            self._cells = None
        if self._cells is not None and self._cells <= cache_cells:
            self._dist = hypothesis_dist(h, max_cells)
        self._max_cells = max_cells

    def __call__(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.int64)
        if self._dist is not None:
            return self._dist.probs_at(xs)
        if self._cells is not None:
            return hypothesis_dist(self.h, self._max_cells).probs_at(xs)
        return np.asarray(eval_pmf(self.h, xs))

    @property
    def dist(self) -> Dist:
        if self._dist is None:
            self._dist = hypothesis_dist(self.h, DEFAULT_MAX_CELLS)
        return self._dist


def sample_hypothesis(h: KernelHypothesis, rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform atom plus sum_a p_a * Uniform[-c_a, c_a]."""
    n = int(n)
    out = h.atoms[rng.integers(len(h.atoms), size=n)].astype(np.int64)
    for p, c in zip(h.smoother.weights, h.smoother.radii):
        if c > 0:
            out = out + p * rng.integers(-c, c + 1, size=n)
    return out
