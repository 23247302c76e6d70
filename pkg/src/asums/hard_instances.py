"""Lower-bound families and their exact diagnostics.

Two families of distributions on Z_q that are pairwise far in total
variation yet pairwise close in KL divergence:

* ``FibFamily``: ``S_t = (U_t + p * V_t) mod q`` with consecutive
  Fibonacci numbers p, q and centred binomials U_t, V_t.
* ``ModFamily``: ``S'_r = (r * S_2) mod a3`` for a shifted binomial S_2
  and random multipliers r modulo a prime a3.

Everything here is exact: members are built by convolution and modular
folding, and diagnostics compare full pmfs over the residue domain.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .dist_core import (
    DEFAULT_MAX_CELLS,
    IntDist,
    ResourceError,
    binomial,
    convolve,
    kl_divergence,
    mod_reduce,
    scale,
    shift,
    tv_distance,
)

DEFAULT_C5 = 8
DEFAULT_K_CONST = 20
DEFAULT_C = 10


def fibonacci(n: int) -> int:
    """f_n with f_0 = f_1 = 1, as an exact Python int."""
    if n < 0:
        raise ValueError("n must be >= 0")
    a, b = 1, 1
    for _ in range(n):
        a, b = b, a + b
    return a


def w_dist(a: int, max_cells: int = DEFAULT_MAX_CELLS) -> IntDist:
    """Centred binomial Bin(2a^2, 1/2) - a^2."""
    a = int(a)
    if a < 1:
        raise ValueError("a must be a positive integer")
    n = 2 * a * a
    if n + 1 > max_cells:
        raise ResourceError(f"W({a}) needs {n + 1} cells")
    d = binomial(n, 0.5)
    return shift(d, -a * a)  # type: ignore[return-value]


# -- Fibonacci family ----------------------------------------------------------


@dataclass
class FibFamily:
    L: int
    p: int
    q: int
    t_range: tuple[int, int]
    c5: int
    t_values: list[int]
    members: list[IntDist]
    invalid: list[int] = field(default_factory=list)

    @property
    def domain_size(self) -> int:
        return self.q

    def params(self) -> dict:
        return {"family": "fib", "L": self.L, "t_lo": self.t_range[0], "t_hi": self.t_range[1], "c5": self.c5}

    def to_json_obj(self) -> dict:
        return {
            **self.params(),
            "p": self.p,
            "q": self.q,
            "t_values": self.t_values,
            "invalid": self.invalid,
            "members": [m.to_json_obj() for m in self.members],
        }


def fib_member(L: int, t: int, c5: int = DEFAULT_C5, max_cells: int = DEFAULT_MAX_CELLS) -> IntDist | None:
    """S_t over {0..q-1}, or None when the U_t size rounds down to 0."""
    p, q = fibonacci(L), fibonacci(L + 1)
    ft = fibonacci(t)
    a_u = p // (c5 * ft)
    if a_u == 0:
        return None
    u = w_dist(a_u, max_cells)
    v = w_dist(ft, max_cells)
    return mod_reduce(convolve(u, scale(v, p, max_cells), max_cells), q)


def build_fib_family(L: int, t_lo: int, t_hi: int, c5: int = DEFAULT_C5,
                     max_cells: int = DEFAULT_MAX_CELLS) -> FibFamily:
    if not 1 <= t_lo <= t_hi <= L:
        raise ValueError("need 1 <= t_lo <= t_hi <= L")
    if c5 < 1:
        raise ValueError("c5 must be >= 1")
    p, q = fibonacci(L), fibonacci(L + 1)
    ts, members, bad = [], [], []
    for t in range(t_lo, t_hi + 1):
        m = fib_member(L, t, c5, max_cells)
        if m is None:
            bad.append(t)
        else:
            ts.append(t)
            members.append(m)
    return FibFamily(L, p, q, (t_lo, t_hi), c5, ts, members, bad)


def default_t_range(L: int) -> tuple[int, int]:
    """(floor(L^{1/4}), floor(L^{1/2})); degenerate for small L."""
    lo = max(1, math.floor(L**0.25))
    hi = max(lo, math.isqrt(L))
    return lo, hi


def build_fib_family_default(L: int, c5: int = DEFAULT_C5) -> FibFamily:
    return build_fib_family(L, *default_t_range(L), c5=c5)


def mid_range(L: int, c5: int = DEFAULT_C5) -> list[int]:
    """Indices t >= 2 whose U_t size floor(p / (c5 f_t)) is at least 2."""
    p = fibonacci(L)
    return [t for t in range(2, L + 1) if p // (c5 * fibonacci(t)) >= 2]


def lee_distance(a: int, b: int, q: int) -> int:
    """Smallest |j| with a = b + j mod q."""
    d = (a - b) % q
    return min(d, q - d)


def spacing_constant(L: int, c2: float = 0.5) -> float:
    """min over v != v' in (-c2 q, c2 q) of rho_q(pv, pv') * max(|v|, |v'|) / q.

    For a fixed difference d = v - v' the smallest max(|v|, |v'|) is
    ceil(|d| / 2), so one pass over d suffices.
    """
    p, q = fibonacci(L), fibonacci(L + 1)
    bound = math.ceil(c2 * q)  # |v| < bound
    d = np.arange(1, 2 * bound - 1, dtype=np.int64)
    r = (p * d) % q
    rho = np.minimum(r, q - r)
    return float(np.min(rho * ((d + 1) // 2)) / q)


def covering_radius(L: int, t: int) -> int:
    """max over i in Z_q of min over |v| <= f_t of rho_q(i, pv)."""
    p, q = fibonacci(L), fibonacci(L + 1)
    ft = fibonacci(t)
    pts = np.unique((p * np.arange(-ft, ft + 1, dtype=np.int64)) % q)
    gaps = np.diff(np.concatenate([pts, [pts[0] + q]]))
    return int(np.max(gaps) // 2)


# -- modular family ------------------------------------------------------------


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    return all(n % f for f in range(3, math.isqrt(n) + 1, 2))


def largest_prime_at_most(n: int) -> int:
    for m in range(int(n), 1, -1):
        if is_prime(m):
            return m
    raise ValueError(f"no prime <= {n}")


@dataclass
class ModFamily:
    a3: int
    K_const: int
    c: float
    n_prime: int
    X: int
    base_shift: int
    base: IntDist
    multipliers: list[int]
    members: list[IntDist]
    seed: int | None = None

    @property
    def domain_size(self) -> int:
        return self.a3

    def params(self) -> dict:
        return {"family": "mod", "a3": self.a3, "K_const": self.K_const, "c": self.c, "seed": self.seed,
                "count": len(self.multipliers)}

    def to_json_obj(self) -> dict:
        return {
            **self.params(),
            "n_prime": self.n_prime,
            "X": self.X,
            "base_shift": self.base_shift,
            "multipliers": self.multipliers,
            "members": [m.to_json_obj() for m in self.members],
        }


def mod_family_sizes(a3: int, K_const: int = DEFAULT_K_CONST, c: float = DEFAULT_C) -> tuple[int, int]:
    """(N', X) = (ceil((a3 / (c K))^2), ceil(c sqrt(N')))."""
    n_prime = max(1, math.ceil((a3 / (c * K_const)) ** 2))
    return n_prime, math.ceil(c * math.sqrt(n_prime))


def mod_base(a3: int, n_prime: int, c: float) -> tuple[int, IntDist]:
    """Bin(N', 1/2) shifted by a3 - round(N'/2 - c sqrt(N')/2).

    Rounding the shift to the nearest integer keeps the mean within 1/2
    of a3 + c sqrt(N')/2.
    """
    s = a3 - math.floor(n_prime / 2 - c * math.sqrt(n_prime) / 2 + 0.5)
    return s, shift(binomial(n_prime, 0.5), s)  # type: ignore[return-value]


def build_mod_family(a_max: int, K_const: int = DEFAULT_K_CONST, c: float = DEFAULT_C, count: int = 8,
                     seed: int | None = 0, multipliers: Sequence[int] | None = None,
                     max_cells: int = DEFAULT_MAX_CELLS) -> ModFamily:
    a3 = largest_prime_at_most(a_max)
    if K_const < 1 or c <= 0:
        raise ValueError("K_const must be >= 1 and c > 0")
    n_prime, X = mod_family_sizes(a3, K_const, c)
    if n_prime + 1 > max_cells:
        raise ResourceError(f"N' = {n_prime} exceeds the cell cap")
    if multipliers is None:
        if count >= a3:
            raise ValueError(f"count must be < a3 = {a3}")
        if count < 1:
            raise ValueError("count must be >= 1")
        rng = np.random.default_rng(seed)
        rs = sorted(int(r) for r in rng.choice(np.arange(1, a3), size=count, replace=False))
    else:
        rs = [int(r) for r in multipliers]
        if any(not 1 <= r < a3 for r in rs) or len(set(rs)) != len(rs):
            raise ValueError("multipliers must be distinct and lie in [1, a3 - 1]")
    s, base = mod_base(a3, n_prime, c)
    members = [mod_reduce(scale(base, r, max_cells), a3) for r in rs]
    return ModFamily(a3, K_const, c, n_prime, X, s, base, rs, members, seed)


def n_rp_count(r: int, p: int, X_set: Iterable[int], Y: int, Z: int) -> int:
    """|{(x, y) in X_set x [Z+1, Z+Y] : r x = y mod p}| by direct loop."""
    if p < 2:
        raise ValueError("p must be >= 2")
    n = 0
    for x in X_set:
        for y in range(Z + 1, Z + Y + 1):
            if (r * x - y) % p == 0:
                n += 1
    return n


def n_rx_all(p: int, X: int) -> np.ndarray:
    """N_{r,X} for every r in [0, p-1], with X_set = {1..X}, Y = X, Z = 0.

    Counts x in {1..X} with (r x mod p) in {1..X}; assumes X < p so each x
    meets at most one y.
    """
    if not 0 < X < p:
        raise ValueError("need 0 < X < p")
    xs = np.arange(1, X + 1, dtype=np.int64)
    rs = np.arange(p, dtype=np.int64)
    res = (rs[:, None] * xs[None, :]) % p
    return np.count_nonzero((res >= 1) & (res <= X), axis=1)


def violating_fraction(p: int, X: int) -> tuple[int, float]:
    """(count, fraction) of r in [1, p-1] with N_{r,X} >= 2 X^2 / p."""
    n = n_rx_all(p, X)[1:]
    bad = int(np.count_nonzero(n >= 2 * X * X / p))
    return bad, bad / p


def idealized_tv(a3: int, X: int, r1: int, r2: int) -> float:
    """Exact TV between r1 * U and r2 * U mod a3, U uniform on {1..X}."""
    xs = np.arange(1, X + 1, dtype=np.int64)
    a = set(((r1 * xs) % a3).tolist())
    b = set(((r2 * xs) % a3).tolist())
    return 1.0 - len(a & b) / X


# -- diagnostics ---------------------------------------------------------------


@dataclass
class FamilyReport:
    tv: np.ndarray
    kl: np.ndarray
    min_pmf: list[float]
    max_pmf: list[float]
    domain_size: int
    zero_cells: list[tuple[int, int]] = field(default_factory=list)
    params: dict = field(default_factory=dict)

    @property
    def flatness_ratio(self) -> float:
        lo = min(self.min_pmf)
        return math.inf if lo <= 0 else max(self.max_pmf) / lo

    @property
    def fitted_c(self) -> float:
        """Smallest c with every cell in [1/(c q), c/q]."""
        lo = min(self.min_pmf)
        if lo <= 0:
            return math.inf
        q = self.domain_size
        return max(q * max(self.max_pmf), 1.0 / (q * lo))

    @property
    def kl_bound(self) -> float:
        """ln of the flatness ratio, a pointwise bound on log pmf ratios."""
        return math.log(self.flatness_ratio) if self.flatness_ratio < math.inf else math.inf

    def off_diagonal(self, m: np.ndarray) -> np.ndarray:
        n = len(m)
        return m[~np.eye(n, dtype=bool)] if n else np.zeros(0)

    def rows(self) -> list[tuple[str, float, float]]:
        n = len(self.tv)
        return [(f"{i}-{j}", float(self.tv[i, j]), float(self.kl[i, j])) for i in range(n) for j in range(n) if i != j]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["pair", "tv", "kl"])
        for pair, tv, kl in self.rows():
            w.writerow([pair, repr(tv), "inf" if math.isinf(kl) else repr(kl)])
        return buf.getvalue()

    def summary(self) -> dict:
        tv = self.off_diagonal(self.tv)
        kl = self.off_diagonal(self.kl)
        finite = kl[np.isfinite(kl)]
        return {
            "params": self.params,
            "members": len(self.tv),
            "domain_size": self.domain_size,
            "tv_min": float(tv.min()) if tv.size else None,
            "kl_max": float(finite.max()) if finite.size else None,
            "flatness_ratio": _finite_or_none(self.flatness_ratio),
            "fitted_c": _finite_or_none(self.fitted_c),
            "kl_bound": _finite_or_none(self.kl_bound),
            "zero_cells": [list(z) for z in self.zero_cells],
            "min_pmf": self.min_pmf,
            "max_pmf": self.max_pmf,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)


def _finite_or_none(x: float) -> float | None:
    return float(x) if math.isfinite(x) else None


def _members_and_domain(family) -> tuple[list[IntDist], int, dict]:
    if isinstance(family, (FibFamily, ModFamily)):
        return family.members, family.domain_size, family.params()
    members = list(family)
    q = max((m.hi + 1 for m in members), default=1)
    return members, q, {}


def _on_domain(d: IntDist, q: int) -> np.ndarray:
    out = np.zeros(q)
    out[d.lo : d.hi + 1] = d.pmf
    return out


def family_diagnostics(family) -> FamilyReport:
    """Pairwise exact TV and KL plus per-member pmf extremes over {0..q-1}."""
    members, q, params = _members_and_domain(family)
    n = len(members)
    tv = np.zeros((n, n))
    kl = np.zeros((n, n))
    zeros: list[tuple[int, int]] = []
    dense = [_on_domain(m, q) for m in members]
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if j > i:
                tv[i, j] = tv[j, i] = tv_distance(members[i], members[j])
            kl[i, j] = kl_divergence(members[i], members[j])
            if math.isinf(kl[i, j]):
                zeros.append((i, j))
    if n < 2:
        tv = np.zeros((0, 0))
        kl = np.zeros((0, 0))
    return FamilyReport(
        tv=tv,
        kl=kl,
        min_pmf=[float(d.min()) for d in dense],
        max_pmf=[float(d.max()) for d in dense],
        domain_size=q,
        zero_cells=zeros,
        params=params,
    )


def distinguishing_experiment(family, ms: Sequence[int], trials: int,
                              rng: np.random.Generator) -> list[dict]:
    """Error rate of the maximum-likelihood member classifier.

    Each trial picks a member uniformly, draws m samples from it and
    guesses the member with the largest log-likelihood, breaking ties
    uniformly. Returns one row per m.
    """
    members, q, _ = _members_and_domain(family)
    if len(members) < 2:
        raise ValueError("need at least two members")
    dense = np.vstack([_on_domain(m, q) for m in members])
    with np.errstate(divide="ignore"):
        logp = np.log(dense)
    cdfs = np.cumsum(dense, axis=1)
    out = []
    for m in ms:
        wrong = 0
        for _ in range(trials):
            k = int(rng.integers(len(members)))
            xs = np.minimum(np.searchsorted(cdfs[k], rng.random(int(m)) * cdfs[k, -1], side="right"), q - 1)
            ll = logp[:, xs].sum(axis=1)
            best = np.flatnonzero(ll == ll.max())
            guess = int(best[rng.integers(len(best))])
            wrong += guess != k
        out.append({"m": int(m), "trials": int(trials), "error": wrong / trials})
    return out
