"""Exact arithmetic on finitely supported integer distributions.

`IntDist` is the common currency of the package: an integer offset plus a
dense probability vector covering ``[offset, offset + len(pmf) - 1]``.
Instances are immutable and canonically trimmed so both end cells carry
positive mass.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np
from scipy import signal, special, stats

SUM_TOL = 1e-9
DEFAULT_MAX_CELLS = 10**8
DEFAULT_TAIL_SDS = 12.0
# Above this many multiply-adds convolve() switches to FFT.
FFT_THRESHOLD = 4_000_000
KL_INFINITE = math.inf


class ResourceError(RuntimeError):
    """Raised when an operation would exceed a configured size cap."""


def _check_cells(n: int, max_cells: int) -> None:
    if n > max_cells:
        raise ResourceError(f"result needs {n} cells, cap is {max_cells}")


@dataclass(frozen=True, eq=False)
class IntDist:
    offset: int
    pmf: np.ndarray

    def __post_init__(self) -> None:
        p = np.array(self.pmf, dtype=np.float64).ravel()
        if p.size == 0:
            raise ValueError("pmf must be non-empty")
        if not np.all(np.isfinite(p)):
            raise ValueError("pmf entries must be finite")
        if np.any(p < 0):
            raise ValueError("pmf entries must be >= 0")
        total = float(p.sum())
        if abs(total - 1.0) > SUM_TOL:
            raise ValueError(f"pmf sums to {total!r}, expected 1")
        nz = np.flatnonzero(p > 0)
        lo, hi = int(nz[0]), int(nz[-1])
        p = p[lo : hi + 1].copy()
        p.setflags(write=False)
        object.__setattr__(self, "offset", int(self.offset) + lo)
        object.__setattr__(self, "pmf", p)

    # -- constructors -----------------------------------------------------

    @classmethod
    def from_weights(cls, offset: int, weights: Sequence[float] | np.ndarray) -> "IntDist":
        """Build from non-negative weights, normalising them to sum one."""
        w = np.clip(np.asarray(weights, dtype=np.float64), 0.0, None)
        total = w.sum()
        if not total > 0:
            raise ValueError("weights must have positive total")
        return cls(offset, w / total)

    @classmethod
    def from_dict(cls, masses: dict[int, float]) -> "IntDist":
        if not masses:
            raise ValueError("empty mass map")
        lo, hi = min(masses), max(masses)
        p = np.zeros(hi - lo + 1)
        for x, v in masses.items():
            p[x - lo] += v
        return cls(lo, p)

    @classmethod
    def point(cls, x: int) -> "IntDist":
        return cls(int(x), np.ones(1))

    @classmethod
    def uniform(cls, lo: int, hi: int) -> "IntDist":
        if hi < lo:
            raise ValueError("empty range")
        n = hi - lo + 1
        return cls(lo, np.full(n, 1.0 / n))

    # -- accessors --------------------------------------------------------

    @property
    def lo(self) -> int:
        return self.offset

    @property
    def hi(self) -> int:
        return self.offset + len(self.pmf) - 1

    def support(self) -> np.ndarray:
        return self.offset + np.flatnonzero(self.pmf > 0)

    def values(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)

    def prob(self, x: int) -> float:
        i = int(x) - self.offset
        if 0 <= i < len(self.pmf):
            return float(self.pmf[i])
        return 0.0

    def probs_at(self, xs: np.ndarray) -> np.ndarray:
        idx = np.asarray(xs, dtype=np.int64) - self.offset
        out = np.zeros(idx.shape)
        ok = (idx >= 0) & (idx < len(self.pmf))
        out[ok] = self.pmf[idx[ok]]
        return out

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.pmf)

    def mean(self) -> float:
        return float(np.dot(self.values(), self.pmf))

    def variance(self) -> float:
        # Centre first to keep precision for large offsets.
        x = np.arange(len(self.pmf), dtype=np.float64)
        m = float(np.dot(x, self.pmf))
        return float(np.dot((x - m) ** 2, self.pmf))

    def as_dict(self) -> dict[int, float]:
        return {int(self.offset + i): float(v) for i, v in enumerate(self.pmf) if v > 0}

    # -- serialisation ----------------------------------------------------

    def to_json_obj(self) -> dict:
        return {"offset": int(self.offset), "pmf": [float(v) for v in self.pmf]}

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())

    @classmethod
    def from_json_obj(cls, obj: dict) -> "IntDist":
        return cls(int(obj["offset"]), np.asarray(obj["pmf"], dtype=np.float64))

    @classmethod
    def from_json(cls, text: str) -> "IntDist":
        return cls.from_json_obj(json.loads(text))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IntDist):
            return NotImplemented
        return self.offset == other.offset and np.array_equal(self.pmf, other.pmf)

    def __hash__(self) -> int:
        return hash((self.offset, self.pmf.tobytes()))

    def __repr__(self) -> str:
        return f"IntDist(offset={self.offset}, len={len(self.pmf)})"


@dataclass(frozen=True, eq=False)
class SparseDist:
    """Distribution stored as sorted support points and their masses.

    Used automatically when fewer than 1% of the cells in the support's
    span carry mass, e.g. after scaling by a large factor.
    """

    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.int64).ravel()
        p = np.asarray(self.probs, dtype=np.float64).ravel()
        if v.size == 0 or v.shape != p.shape:
            raise ValueError("values and probs must be non-empty and equal length")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValueError("probs must be finite and >= 0")
        total = float(p.sum())
        if abs(total - 1.0) > SUM_TOL:
            raise ValueError(f"probs sum to {total!r}, expected 1")
        order = np.argsort(v, kind="stable")
        v, p = v[order], p[order]
        if np.any(np.diff(v) == 0):
            v, inv = np.unique(v, return_inverse=True)
            p = np.bincount(inv, weights=p)
        keep = p > 0
        v, p = v[keep].copy(), p[keep].copy()
        v.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)

    @property
    def lo(self) -> int:
        return int(self.values[0])

    @property
    def hi(self) -> int:
        return int(self.values[-1])

    def support(self) -> np.ndarray:
        return self.values.copy()

    def prob(self, x: int) -> float:
        return float(self.probs_at(np.array([x]))[0])

    def probs_at(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.int64)
        i = np.searchsorted(self.values, xs)
        i = np.minimum(i, len(self.values) - 1)
        return np.where(self.values[i] == xs, self.probs[i], 0.0)

    def mean(self) -> float:
        return float(self.lo + np.dot(self.values - self.lo, self.probs))

    def variance(self) -> float:
        x = (self.values - self.lo).astype(np.float64)
        m = float(np.dot(x, self.probs))
        return float(np.dot((x - m) ** 2, self.probs))

    def as_dict(self) -> dict[int, float]:
        return {int(x): float(v) for x, v in zip(self.values, self.probs)}

    def to_dense(self, max_cells: int = DEFAULT_MAX_CELLS) -> IntDist:
        _check_cells(self.hi - self.lo + 1, max_cells)
        out = np.zeros(self.hi - self.lo + 1)
        out[self.values - self.lo] = self.probs
        return IntDist(self.lo, out)

    def to_json_obj(self) -> dict:
        return {"values": [int(x) for x in self.values], "probs": [float(v) for v in self.probs]}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SparseDist):
            return NotImplemented
        return np.array_equal(self.values, other.values) and np.array_equal(self.probs, other.probs)

    def __hash__(self) -> int:
        return hash((self.values.tobytes(), self.probs.tobytes()))

    def __repr__(self) -> str:
        return f"SparseDist(nnz={len(self.values)}, lo={self.lo}, hi={self.hi})"


Dist = Union[IntDist, SparseDist]


def dist_from_json_obj(obj: dict) -> Dist:
    if "values" in obj:
        return SparseDist(np.asarray(obj["values"], dtype=np.int64), np.asarray(obj["probs"], dtype=np.float64))
    return IntDist.from_json_obj(obj)


def pairs(d: Dist) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(d, SparseDist):
        return d.values, d.probs
    nz = np.flatnonzero(d.pmf > 0)
    return d.offset + nz, d.pmf[nz]


def canonical(values: np.ndarray, probs: np.ndarray) -> Dist:
    """Pick the dense or sparse form for a (values, masses) list."""
    values = np.asarray(values, dtype=np.int64)
    probs = np.clip(np.asarray(probs, dtype=np.float64), 0.0, None)
    probs = probs / probs.sum()
    keep = probs > 0
    values, probs = values[keep], probs[keep]
    lo, hi = int(values.min()), int(values.max())
    span = hi - lo + 1
    if span <= 100 * len(values) and span <= DEFAULT_MAX_CELLS:
        out = np.bincount(values - lo, weights=probs, minlength=span)
        return IntDist(lo, out)
    return SparseDist(values, probs)


def as_sparse(d: Dist) -> SparseDist:
    if isinstance(d, SparseDist):
        return d
    v, p = pairs(d)
    return SparseDist(v, p)


@dataclass(frozen=True)
class PbdSpec:
    """Signed Poisson binomial: summand i is ``signs[i]`` w.p. ``probs[i]``, else 0."""

    probs: tuple[float, ...]
    signs: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        probs = tuple(float(p) for p in self.probs)
        signs = tuple(int(s) for s in self.signs) if self.signs else (1,) * len(probs)
        if len(signs) != len(probs):
            raise ValueError("probs and signs differ in length")
        if any(not (0.0 <= p <= 1.0) for p in probs):
            raise ValueError("probabilities must lie in [0, 1]")
        if any(s not in (1, -1) for s in signs):
            raise ValueError("signs must be +1 or -1")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "signs", signs)

    def mean(self) -> float:
        return float(sum(s * p for s, p in zip(self.signs, self.probs)))

    def variance(self) -> float:
        return float(sum(p * (1 - p) for p in self.probs))


# -- arithmetic ---------------------------------------------------------------


def _finish(offset: int, raw: np.ndarray) -> IntDist:
    raw = np.clip(raw, 0.0, None)
    return IntDist(offset, raw / raw.sum())


def convolve(a: Dist, b: Dist, max_cells: int = DEFAULT_MAX_CELLS) -> Dist:
    """Distribution of X + Y for independent X ~ a, Y ~ b."""
    if isinstance(a, IntDist) and isinstance(b, IntDist):
        n = len(a.pmf) + len(b.pmf) - 1
        _check_cells(n, max_cells)
        if len(a.pmf) * len(b.pmf) <= FFT_THRESHOLD:
            raw = np.convolve(a.pmf, b.pmf)
        else:
            raw = signal.fftconvolve(a.pmf, b.pmf)
            # FFT leaves round-off noise where the exact answer is tiny.
            raw[raw < 1e-16 * raw.max()] = 0.0
        return _finish(a.offset + b.offset, raw)
    va, pa = pairs(a)
    vb, pb = pairs(b)
    _check_cells(len(va) * len(vb), max_cells)
    vals = (va[:, None] + vb[None, :]).ravel()
    probs = (pa[:, None] * pb[None, :]).ravel()
    return canonical(vals, probs)


def convolve_many(dists: Iterable[Dist], max_cells: int = DEFAULT_MAX_CELLS) -> Dist:
    """Balanced pairwise convolution of a sequence of distributions."""
    items = list(dists)
    if not items:
        return IntDist.point(0)
    while len(items) > 1:
        nxt = [convolve(items[i], items[i + 1], max_cells) for i in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            nxt.append(items[-1])
        items = nxt
    return items[0]


def scale(d: Dist, c: int, max_cells: int = DEFAULT_MAX_CELLS) -> Dist:
    """Distribution of c * X."""
    c = int(c)
    if c == 0:
        raise ValueError("scale factor must be nonzero")
    if isinstance(d, IntDist) and abs(c) <= 100:
        n = (len(d.pmf) - 1) * abs(c) + 1
        _check_cells(n, max_cells)
        out = np.zeros(n)
        out[:: abs(c)] = d.pmf
        if c > 0:
            return IntDist(d.offset * c, out)
        return IntDist(d.hi * c, out[::-1])
    v, p = pairs(d)
    return canonical(v * c, p)


def shift(d: Dist, v: int) -> Dist:
    if isinstance(d, SparseDist):
        return SparseDist(d.values + int(v), d.probs)
    return IntDist(d.offset + int(v), d.pmf)


def negate(d: Dist) -> Dist:
    return scale(d, -1)


def mod_reduce(d: Dist, m: int) -> IntDist:
    """Distribution of X mod m over {0, ..., m-1}."""
    m = int(m)
    if m < 2:
        raise ValueError("modulus must be >= 2")
    v, p = pairs(d)
    out = np.bincount(np.mod(v, m), weights=p, minlength=m)
    return IntDist(0, out / out.sum())


def mixture(dists: Sequence[Dist], weights: Sequence[float]) -> Dist:
    w = np.asarray(weights, dtype=np.float64)
    if len(dists) != len(w) or len(dists) == 0:
        raise ValueError("need matching non-empty dists and weights")
    if np.any(w < 0) or not w.sum() > 0:
        raise ValueError("weights must be non-negative with positive sum")
    vals, probs = [], []
    for d, wi in zip(dists, w):
        v, p = pairs(d)
        vals.append(v)
        probs.append(wi * p)
    return canonical(np.concatenate(vals), np.concatenate(probs))


# -- distances ----------------------------------------------------------------


def _aligned(a: Dist, b: Dist) -> tuple[np.ndarray, np.ndarray]:
    """Masses of a and b on a common sorted grid covering both supports."""
    if isinstance(a, IntDist) and isinstance(b, IntDist):
        lo = min(a.lo, b.lo)
        hi = max(a.hi, b.hi)
        pa = np.zeros(hi - lo + 1)
        pb = np.zeros(hi - lo + 1)
        pa[a.lo - lo : a.hi - lo + 1] = a.pmf
        pb[b.lo - lo : b.hi - lo + 1] = b.pmf
        return pa, pb
    xs = np.union1d(pairs(a)[0], pairs(b)[0])
    return a.probs_at(xs), b.probs_at(xs)


def tv_distance(a: Dist, b: Dist) -> float:
    pa, pb = _aligned(a, b)
    return float(min(1.0, 0.5 * math.fsum(np.abs(pa - pb))))


def kolmogorov_distance(a: Dist, b: Dist) -> float:
    pa, pb = _aligned(a, b)
    return float(min(1.0, np.max(np.abs(np.cumsum(pa) - np.cumsum(pb)))))


def kl_divergence(a: Dist, b: Dist) -> float:
    """KL(a || b) in nats; `KL_INFINITE` when a puts mass outside supp(b)."""
    pa, pb = _aligned(a, b)
    on = pa > 0
    if np.any(pb[on] <= 0):
        return KL_INFINITE
    return max(0.0, math.fsum(special.rel_entr(pa[on], pb[on])))


def shift_distance(d: Dist, k: int) -> float:
    """TV distance between X and X + k."""
    return tv_distance(d, shift(d, k))


# -- families -----------------------------------------------------------------


def pbd_pmf(spec: PbdSpec) -> IntDist:
    """Exact pmf of a signed PBD by sequential convolution."""
    plus = [p for p, s in zip(spec.probs, spec.signs) if s > 0]
    minus = [p for p, s in zip(spec.probs, spec.signs) if s < 0]

    def one_sided(ps: list[float]) -> np.ndarray:
        out = np.ones(1)
        for p in ps:
            nxt = np.zeros(len(out) + 1)
            nxt[:-1] = out * (1 - p)
            nxt[1:] += out * p
            out = nxt
        return out

    pos = one_sided(plus)
    neg = one_sided(minus)[::-1]
    raw = np.convolve(neg, pos)
    return _finish(-len(minus), raw)


def binomial(n: int, p: float) -> IntDist:
    if n < 0 or not 0.0 <= p <= 1.0:
        raise ValueError("need n >= 0 and p in [0, 1]")
    if p == 0.0 or n == 0:
        return IntDist.point(0)
    if p == 1.0:
        return IntDist.point(n)
    k = np.arange(n + 1)
    return _finish(0, stats.binom.pmf(k, n, p))


def _check_var(var: float) -> float:
    if not (math.isfinite(var) and var > 0):
        raise ValueError("variance must be finite and > 0")
    return math.sqrt(var)


def discretized_gaussian(mu: float, var: float, tail_sds: float = DEFAULT_TAIL_SDS,
                         max_cells: int = DEFAULT_MAX_CELLS) -> IntDist:
    """N(mu, var) rounded to the nearest integer, truncated at +-tail_sds sds."""
    sd = _check_var(var)
    lo = math.floor(mu - tail_sds * sd)
    hi = math.ceil(mu + tail_sds * sd)
    _check_cells(hi - lo + 1, max_cells)
    j = np.arange(lo, hi + 1, dtype=np.float64)
    zl = (j - 0.5 - mu) / sd
    zh = (j + 0.5 - mu) / sd
    # Use the upper tail on the right half to avoid cancellation near 1.
    right = zl > 0
    cells = np.where(right, special.ndtr(-zl) - special.ndtr(-zh), special.ndtr(zh) - special.ndtr(zl))
    return _finish(lo, cells)


def translated_poisson(mu: float, var: float, tail_sds: float = DEFAULT_TAIL_SDS,
                       max_cells: int = DEFAULT_MAX_CELLS) -> IntDist:
    """floor(mu - var) + Poisson(var + frac(mu - var))."""
    _check_var(var)
    base = math.floor(mu - var)
    lam = var + (mu - var - base)
    sd = math.sqrt(lam)
    kmin = max(0, math.floor(lam - tail_sds * sd))
    # The tail_sds**2 slack keeps the truncation loss negligible for small lam.
    kmax = math.ceil(lam + tail_sds * sd + tail_sds**2)
    _check_cells(kmax - kmin + 1, max_cells)
    k = np.arange(kmin, kmax + 1)
    return _finish(base + kmin, stats.poisson.pmf(k, lam))


# -- sampling -----------------------------------------------------------------


def sample(d: Dist, rng: np.random.Generator, n: int) -> np.ndarray:
    """n i.i.d. draws by inverse-cdf lookup."""
    if n < 0:
        raise ValueError("n must be >= 0")
    v, p = pairs(d)
    cdf = np.cumsum(p)
    cdf[-1] = 1.0
    idx = np.searchsorted(cdf, rng.random(int(n)), side="right")
    return v[np.minimum(idx, len(cdf) - 1)]


def empirical(samples: Iterable[int] | np.ndarray) -> Dist:
    """Frequency distribution of a non-empty sample."""
    xs = np.asarray(samples if isinstance(samples, np.ndarray) else list(samples), dtype=np.int64)
    if xs.size == 0:
        raise ValueError("no samples")
    vals, counts = np.unique(xs, return_counts=True)
    return canonical(vals, counts / xs.size)
