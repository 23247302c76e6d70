"""Ground truth for sums of independent variables on a common small support.

An `ASumSpec` fixes the support ``a_1 < ... < a_k`` and one pmf row per
summand. This module computes the exact law of the sum, draws samples,
generates random specs, and performs the zero-mode decomposition used by
the learners (mode shift, pairwise differences and their weights).
"""

from __future__ import annotations

import itertools
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dist_core import (
    DEFAULT_MAX_CELLS,
    Dist,
    IntDist,
    ResourceError,
    canonical,
    convolve,
    convolve_many,
    pairs,
    shift,
)

ROW_TOL = 1e-12
# Sequential exact convolution is used while N * k * span stays below this.
SEQUENTIAL_WORK = 60_000_000
# Dense spans above this switch to the count-lattice Fourier method.
DENSE_SPAN = 8_000_000
LATTICE_MAX_CELLS = 1 << 24
PROFILES = ("uniform", "sparse-heavy", "two-cluster")


@dataclass(frozen=True, eq=False)
class ASumSpec:
    support: tuple[int, ...]
    rows: np.ndarray  # shape (N, k)

    def __post_init__(self) -> None:
        sup = tuple(int(a) for a in self.support)
        if len(sup) < 1:
            raise ValueError("support must be non-empty")
        if any(b <= a for a, b in zip(sup, sup[1:])):
            raise ValueError("support must be strictly increasing")
        if sup[0] < 0:
            raise ValueError("support must be non-negative")
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.size == 0:
            rows = np.zeros((0, len(sup)))
        if rows.ndim != 2 or rows.shape[1] != len(sup):
            raise ValueError("rows must be an N x k array")
        if np.any(rows < 0) or not np.all(np.isfinite(rows)):
            raise ValueError("row entries must be finite and >= 0")
        if rows.shape[0] and np.max(np.abs(rows.sum(axis=1) - 1.0)) > ROW_TOL:
            raise ValueError("each row must sum to 1")
        rows = rows.copy()
        rows.setflags(write=False)
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "rows", rows)

    @property
    def k(self) -> int:
        return len(self.support)

    @property
    def n(self) -> int:
        return int(self.rows.shape[0])

    def row_dist(self, i: int) -> IntDist:
        a = np.asarray(self.support)
        return canonical(a, self.rows[i])

    def to_json_obj(self) -> dict:
        return {"support": list(self.support), "rows": [[float(v) for v in r] for r in self.rows]}

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())

    @classmethod
    def from_json_obj(cls, obj: dict) -> "ASumSpec":
        rows = obj.get("rows", [])
        return cls(tuple(obj["support"]), np.asarray(rows, dtype=np.float64).reshape(len(rows), len(obj["support"])))

    @classmethod
    def from_json(cls, text: str) -> "ASumSpec":
        return cls.from_json_obj(json.loads(text))


# -- exact pmf ----------------------------------------------------------------


def _sequential(spec: ASumSpec, max_cells: int) -> IntDist:
    a = np.asarray(spec.support, dtype=np.int64)
    rel = a - a[0]
    span = spec.n * int(rel[-1]) + 1
    if span > max_cells:
        raise ResourceError(f"dense pmf needs {span} cells, cap is {max_cells}")
    acc = np.zeros(span)
    acc[0] = 1.0
    length = 1
    for row in spec.rows:
        nxt = np.zeros(span)
        for r, d in zip(row, rel):
            if r > 0:
                nxt[d : d + length] += r * acc[:length]
        length += int(rel[-1])
        acc = nxt
    return IntDist(spec.n * int(a[0]), acc / acc.sum())


def _row_groups(rows: np.ndarray) -> list[tuple[np.ndarray, int]]:
    counts = Counter(tuple(r) for r in rows)
    return [(np.asarray(r), m) for r, m in counts.items()]


def _lattice(spec: ASumSpec, max_cells: int) -> Dist:
    """Law of the sum via the joint law of how many summands hit each a_j.

    The count vector (C_2, ..., C_k) is recovered from its characteristic
    function on a window around its mean that is wide enough for aliasing
    to be negligible. Identical rows are grouped, so the cost is
    (#distinct rows) x (window cells).
    """
    k, n = spec.k, spec.n
    rows = spec.rows
    means = rows[:, 1:].sum(axis=0)
    sds = np.sqrt((rows[:, 1:] * (1 - rows[:, 1:])).sum(axis=0))
    sizes, starts = [], []
    for m, s in zip(means, sds):
        need = int(28 * s + 64)
        size = n + 1 if need >= n + 1 else 1 << (need - 1).bit_length()
        size = min(size, n + 1)
        start = int(min(max(round(m) - size // 2, 0), n + 1 - size))
        sizes.append(size)
        starts.append(start)
    cells = math.prod(sizes)
    if cells > min(max_cells, LATTICE_MAX_CELLS):
        raise ResourceError(f"count lattice needs {cells} cells")
    grids = np.meshgrid(*[np.exp(-2j * np.pi * np.arange(L) / L) for L in sizes], indexing="ij", sparse=True)
    log_g = np.zeros(tuple(sizes), dtype=np.complex128)
    for row, mult in _row_groups(rows):
        f = row[0] + sum(row[j + 1] * grids[j] for j in range(k - 1))
        with np.errstate(divide="ignore"):
            log_g = log_g + mult * np.log(f)
    probs = np.fft.ifftn(np.exp(log_g)).real
    probs[probs < 1e-15 * probs.max()] = 0.0
    # Index m on axis j holds the count start_j + ((m - start_j) mod L_j).
    a = np.asarray(spec.support, dtype=np.int64)
    x = np.full(tuple(sizes), n * int(a[0]), dtype=np.int64)
    for j, (L, st) in enumerate(zip(sizes, starts)):
        counts = st + np.mod(np.arange(L) - st, L)
        shape = [1] * (k - 1)
        shape[j] = L
        x = x + (int(a[j + 1] - a[0]) * counts).reshape(shape)
    keep = probs > 0
    return canonical(x[keep], probs[keep])


def asum_exact_pmf(spec: ASumSpec, max_cells: int = DEFAULT_MAX_CELLS) -> Dist:
    """Law of the sum of the N independent summands described by `spec`.

    Small instances use sequential convolution, which is exact up to float
    rounding. Mid-size spans use balanced FFT convolution. Very wide
    spans (large a_k) go through the count lattice.
    """
    if spec.n == 0:
        return IntDist.point(0)
    if spec.k == 1:
        return IntDist.point(spec.n * spec.support[0])
    span = spec.n * (spec.support[-1] - spec.support[0]) + 1
    if span * spec.k * spec.n <= SEQUENTIAL_WORK:
        return _sequential(spec, max_cells)
    if span <= min(DENSE_SPAN, max_cells):
        return convolve_many([spec.row_dist(i) for i in range(spec.n)], max_cells)
    return _lattice(spec, max_cells)


def brute_force_pmf(spec: ASumSpec) -> IntDist:
    """Full enumeration over all k^N outcomes; only for tiny N."""
    masses: dict[int, float] = {}
    for combo in itertools.product(range(spec.k), repeat=spec.n):
        p = 1.0
        for i, j in enumerate(combo):
            p *= spec.rows[i, j]
        if p > 0:
            x = sum(spec.support[j] for j in combo)
            masses[x] = masses.get(x, 0.0) + p
    if not masses:
        return IntDist.point(0)
    return IntDist.from_dict(masses)


def sample_asum(spec: ASumSpec, rng: np.random.Generator, n: int) -> np.ndarray:
    """n i.i.d. draws of the sum, drawing each group of equal rows as a multinomial."""
    a = np.asarray(spec.support, dtype=np.int64)
    out = np.zeros(int(n), dtype=np.int64)
    for row, mult in _row_groups(spec.rows):
        counts = rng.multinomial(mult, row / row.sum(), size=int(n))
        out += counts @ a
    return out


# -- generators ---------------------------------------------------------------


def random_support(k: int, a_max: int, rng: np.random.Generator) -> tuple[int, ...]:
    if k < 1 or a_max < k - 1:
        raise ValueError("need 1 <= k <= a_max + 1")
    rest = rng.choice(np.arange(1, a_max + 1), size=k - 1, replace=False) if k > 1 else []
    return tuple(sorted([0, *[int(x) for x in rest]]))


def random_spec(
    k: int,
    n: int,
    a_max: int,
    profile: str = "uniform",
    rng: np.random.Generator | None = None,
    support: Sequence[int] | None = None,
    templates: int | None = None,
) -> ASumSpec:
    """Random spec under one of the named row profiles.

    uniform: rows are flat Dirichlet draws.
    sparse-heavy: most rows put >= 95% of their mass on one point.
    two-cluster: rows scatter around one of two Dirichlet centres.
    With `templates`, rows are drawn from that many distinct patterns.
    """
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}")
    rng = rng if rng is not None else np.random.default_rng(0)
    sup = tuple(support) if support is not None else random_support(k, a_max, rng)
    k = len(sup)
    m = n if templates is None else max(1, min(templates, max(n, 1)))

    if profile == "uniform":
        pats = rng.dirichlet(np.ones(k), size=m)
    elif profile == "sparse-heavy":
        pats = np.empty((m, k))
        for i in range(m):
            if rng.random() < 0.8:
                eta = rng.uniform(0, 0.05)
                row = eta * rng.dirichlet(np.ones(k))
                row[rng.integers(k)] += 1 - eta
            else:
                row = rng.dirichlet(np.ones(k))
            pats[i] = row
    else:
        centres = rng.dirichlet(0.5 * np.ones(k) + 0.1, size=2)
        which = rng.integers(2, size=m)
        pats = np.array([rng.dirichlet(30 * centres[w] + 0.1) for w in which])
    pats = pats / pats.sum(axis=1, keepdims=True)
    rows = pats if templates is None else pats[rng.integers(m, size=n)]
    return ASumSpec(sup, rows.reshape(n, k))


# -- zero-mode decomposition ------------------------------------------------------


def doubly_exponential_schedule(eps: float, count: int) -> np.ndarray:
    """Thresholds (1/eps)^(2^a) for a = 1..count."""
    with np.errstate(over="ignore"):
        return np.power(1.0 / eps, np.power(2.0, np.arange(1, count + 1)))


def power_schedule(eps: float, count: int, c: float = 8.0) -> np.ndarray:
    """Thresholds (1/eps)^(c^l) for l = 1..count."""
    with np.errstate(over="ignore"):
        return np.power(1.0 / eps, np.power(float(c), np.arange(1, count + 1)))


def largeness_index(weights: Sequence[float], thresholds: Sequence[float]) -> int:
    """1-based first position where weights[l] > thresholds[l], else K + 1."""
    if len(weights) != len(thresholds):
        raise ValueError("weights and thresholds differ in length")
    for i, (c, t) in enumerate(zip(weights, thresholds)):
        if c > t:
            return i + 1
    return len(weights) + 1


@dataclass(frozen=True)
class ZeroModeDecomposition:
    offset: int
    q_values: tuple[int, ...]
    weights: dict[int, float]
    largeness_index: int
    # q-values listed by ascending weight (ties by value); the index refers to this order.
    order: tuple[int, ...] = ()
    modes: tuple[int, ...] = ()
    zero_moded: tuple[IntDist, ...] = field(default=(), repr=False)

    def sorted_weights(self) -> list[float]:
        return [self.weights[q] for q in self.order]


def zero_mode_decompose(spec: ASumSpec, eps: float = 0.1, thresholds: Sequence[float] | None = None) -> ZeroModeDecomposition:
    """Shift every summand by its mode and tabulate the difference weights.

    Mode ties go to the smallest support value. The weight of a difference
    q is the expected number of zero-moded summands landing on +q or -q.
    Without explicit thresholds the doubly exponential schedule in `eps`
    is used for the largeness index.
    """
    a = np.asarray(spec.support, dtype=np.int64)
    qs = sorted({int(abs(x - y)) for x in a for y in a if x != y})
    weights = {q: 0.0 for q in qs}
    modes = []
    shifted = []
    for row in spec.rows:
        j = int(np.argmax(row))  # argmax returns the first maximiser
        mode = int(a[j])
        modes.append(mode)
        rel = a - mode
        for d, r in zip(rel, row):
            if d != 0:
                weights[int(abs(d))] += float(r)
        shifted.append(canonical(rel, row))
    order = tuple(sorted(qs, key=lambda q: (weights[q], q)))
    cs = [weights[q] for q in order]
    t = doubly_exponential_schedule(eps, len(cs)) if thresholds is None else thresholds
    return ZeroModeDecomposition(
        offset=int(sum(modes)),
        q_values=tuple(qs),
        weights=weights,
        largeness_index=largeness_index(cs, t),
        order=order,
        modes=tuple(modes),
        zero_moded=tuple(shifted),
    )


def light_heavy_split(dec: ZeroModeDecomposition, ell0: int) -> tuple[Dist, Dist]:
    """Independent (light, heavy) pair approximating the zero-moded sum.

    Differences before position `ell0` in the weight order are light. Each
    summand contributes its light-conditioned value with the probability
    of landing in the light set, and its heavy-conditioned value to the
    heavy part.
    """
    light_qs = set(dec.order[: ell0 - 1])
    lights, heavies = [], []
    for d in dec.zero_moded:
        v, p = pairs(d)
        is_light = np.array([abs(int(x)) in light_qs for x in v])
        pl = float(p[is_light].sum())
        heavy_p = np.where(is_light, 0.0, p)
        heavies.append(canonical(v, heavy_p) if heavy_p.sum() > 0 else IntDist.point(0))
        light_p = np.where(is_light, p, 0.0)
        light_p[v == 0] += 1 - pl
        lights.append(canonical(v, light_p))
    return convolve_many(lights), convolve_many(heavies)


def zero_moded_sum(dec: ZeroModeDecomposition) -> Dist:
    return convolve_many(list(dec.zero_moded))


def reassemble(dec: ZeroModeDecomposition) -> Dist:
    """The zero-moded sum shifted back by the total mode offset."""
    return shift(zero_moded_sum(dec), dec.offset)


__all__ = [
    "ASumSpec",
    "ZeroModeDecomposition",
    "asum_exact_pmf",
    "brute_force_pmf",
    "convolve",
    "doubly_exponential_schedule",
    "largeness_index",
    "light_heavy_split",
    "power_schedule",
    "random_spec",
    "random_support",
    "reassemble",
    "sample_asum",
    "zero_mode_decompose",
]
