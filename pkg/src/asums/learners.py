"""Learning algorithms for sums of independent integer variables with a known
or unknown small support.

Every learner follows the same pattern: draw a few cheap probes to estimate
spreads, turn each plausible guess into a candidate hypothesis (kernel
hypotheses, moment-matched surrogates, the plain empirical law), and let the
Scheffe tournament in :mod:`asums.select` pick one. All target draws go
through a :class:`SampleSource`, so the accounting is exact. Draw counts
depend on the configuration only and never on the support values.
"""

from __future__ import annotations

import dataclasses
import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from .dist_core import (
    DEFAULT_MAX_CELLS,
    Dist,
    IntDist,
    ResourceError,
    binomial,
    convolve,
    dist_from_json_obj,
    discretized_gaussian,
    empirical,
    mod_reduce,
    pairs,
    sample,
    scale,
    shift,
    translated_poisson,
    tv_distance,
)
from .asum_oracle import power_schedule
from .hyp_eval import MATERIALIZE_CELLS, HypothesisEvaluator, hypothesis_dist, materialised_cells, sample_hypothesis
from .kernel import KernelHypothesis, SmootherSpec, kernel_radius
from .select import sample_budget, select

log = logging.getLogger(__name__)

FAMILIES = ("empirical", "kernel", "translated-poisson", "discretized-gaussian", "point-mixture")
# Largest N* for which numpy can draw Bin(N*, 1/2).
MAX_BINOMIAL_N = 2**62


class BudgetError(ResourceError):
    """A sample source ran out of draws."""


# -- sample accounting ------------------------------------------------------------


class SampleSource:
    """Callable ``source(n) -> n draws`` that counts every draw it hands out."""

    def __init__(self, draw: Callable[[int], np.ndarray], max_draws: int | None = None):
        self._draw = draw
        self.max_draws = max_draws
        self.draws = 0
        self.calls = 0

    def __call__(self, n: int) -> np.ndarray:
        n = int(n)
        if n < 0:
            raise ValueError("n must be >= 0")
        if self.max_draws is not None and self.draws + n > self.max_draws:
            raise BudgetError(f"sample budget of {self.max_draws} draws exhausted")
        out = np.asarray(self._draw(n), dtype=np.int64)
        if len(out) != n:
            raise BudgetError("sample source returned too few draws")
        self.draws += n
        self.calls += 1
        return out

    @classmethod
    def from_dist(cls, d: Dist, rng: np.random.Generator, max_draws: int | None = None) -> "SampleSource":
        return cls(lambda n: sample(d, rng, n), max_draws)

    @classmethod
    def from_array(cls, xs: Sequence[int] | np.ndarray, max_draws: int | None = None) -> "SampleSource":
        """Replay a fixed sample in order; running past its end raises BudgetError."""
        data = np.asarray(xs, dtype=np.int64)
        pos = [0]

        def draw(n: int) -> np.ndarray:
            if pos[0] + n > len(data):
                raise BudgetError(f"sample file exhausted after {len(data)} draws")
            out = data[pos[0] : pos[0] + n]
            pos[0] += n
            return out

        return cls(draw, max_draws)


class RecordingSource(SampleSource):
    """Wraps another source and keeps every draw for later replay."""

    def __init__(self, inner: Callable[[int], np.ndarray]):
        self.recorded: list[np.ndarray] = []

        def draw(n: int) -> np.ndarray:
            out = np.asarray(inner(n), dtype=np.int64)
            self.recorded.append(out)
            return out

        super().__init__(draw)

    def data(self) -> np.ndarray:
        return np.concatenate(self.recorded) if self.recorded else np.zeros(0, dtype=np.int64)


# -- hypotheses ---------------------------------------------------------------------


class Hypothesis:
    """A learner output: a sampleable, evaluable law with a family tag."""

    def __init__(self, family: str, *, law: Dist | None = None, kernel: KernelHypothesis | None = None,
                 params: dict | None = None):
        if family not in FAMILIES:
            raise ValueError(f"unknown family {family!r}")
        if (law is None) == (kernel is None):
            raise ValueError("give exactly one of law or kernel")
        self.family = family
        self.kernel = kernel
        self.params = dict(params or {})
        self._law = law
        self._evaluator: HypothesisEvaluator | None = None

    @classmethod
    def from_kernel(cls, kh: KernelHypothesis) -> "Hypothesis":
        return cls("kernel", kernel=kh)

    @classmethod
    def from_law(cls, d: Dist, family: str = "point-mixture", params: dict | None = None) -> "Hypothesis":
        return cls(family, law=d, params=params)

    @classmethod
    def moment_fit(cls, family: str, mu: float, var: float, step: int = 1, offset: int = 0,
                   max_cells: int = DEFAULT_MAX_CELLS) -> "Hypothesis":
        """offset + step * W with W a discretised Gaussian or translated Poisson."""
        if family == "discretized-gaussian":
            base = discretized_gaussian(mu, var, max_cells=max_cells)
        elif family == "translated-poisson":
            base = translated_poisson(mu, var, max_cells=max_cells)
        else:
            raise ValueError(f"{family!r} is not a moment-fit family")
        law = shift(scale(base, step, max_cells), offset) if step != 1 else shift(base, offset)
        params = {"mu": float(mu), "var": float(var), "step": int(step), "offset": int(offset)}
        return cls(family, law=law, params=params)

    def _eval(self) -> HypothesisEvaluator:
        if self._evaluator is None:
            self._evaluator = HypothesisEvaluator(self.kernel)
        return self._evaluator

    def prepare(self, max_cells: int = MATERIALIZE_CELLS) -> "Hypothesis":
        """Materialise the law now; raises ResourceError when it exceeds `max_cells`."""
        if self.kernel is not None and self._law is None:
            self._law = hypothesis_dist(self.kernel, max_cells)
        return self

    def law(self) -> Dist:
        if self._law is None:
            self._law = self._eval().dist
        return self._law

    def pmf(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.int64)
        if self._law is not None:
            return self._law.probs_at(xs)
        if self.kernel is not None:
            return self._eval()(xs)
        return self._law.probs_at(xs)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kernel is not None:
            return sample_hypothesis(self.kernel, rng, n)
        return sample(self._law, rng, n)

    def to_json_obj(self) -> dict:
        obj: dict[str, Any] = {"family": self.family}
        if self.kernel is not None:
            obj["kernel"] = self.kernel.to_json_obj()
        else:
            obj["law"] = self._law.to_json_obj()
        if self.params:
            obj["params"] = self.params
        return obj

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), sort_keys=True)

    @classmethod
    def from_json_obj(cls, obj: dict) -> "Hypothesis":
        if "kernel" in obj:
            return cls(obj["family"], kernel=KernelHypothesis.from_json_obj(obj["kernel"]), params=obj.get("params"))
        return cls(obj["family"], law=dist_from_json_obj(obj["law"]), params=obj.get("params"))

    def __repr__(self) -> str:
        if self.kernel is not None:
            sm = self.kernel.smoother
            return f"Hypothesis(kernel, atoms={len(self.kernel.atoms)}, weights={sm.weights}, radii={sm.radii})"
        return f"Hypothesis({self.family}, params={self.params})"


def audit_tv(truth: Dist, h: Hypothesis) -> float:
    """Exact TV between a known law and a hypothesis.

    Uses TV = sum over supp(truth) of (truth - h)^+, which needs h only on
    the truth's support; valid because both laws sum to one.
    """
    xs, p = pairs(truth)
    q = h.pmf(xs)
    return float(math.fsum(np.clip(p - q, 0.0, None)))


# -- configuration ------------------------------------------------------------------


@dataclass
class LearnerConfig:
    eps: float = 0.1
    delta: float = 0.1
    schedule_c: float = 8.0
    c1: float = 6.0
    heaviness: float | None = None  # None: K**25 / eps**32
    probe_repeats: int = 64
    max_probe_bins: int = 4
    grid_budget: int = 8
    max_guesses: int = 48
    general_max_guesses: int = 96
    max_heavy: int = 2
    kernel_samples: int | None = None  # None: ceil(80 / eps**2)
    kernel_const: float = 1.0
    sparse_support: int = 16
    select_c: float = 32.0
    mix_exponent: float = 2.0
    max_cells: int = DEFAULT_MAX_CELLS
    max_draws: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if not (0 < self.eps < 0.5):
            raise ValueError("eps must lie in (0, 1/2)")
        if not (0 < self.delta < 1):
            raise ValueError("delta must lie in (0, 1)")
        for name in ("probe_repeats", "max_probe_bins", "grid_budget", "max_guesses", "general_max_guesses",
                     "max_heavy", "sparse_support", "max_cells"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.kernel_samples is not None and self.kernel_samples < 1:
            raise ValueError("kernel_samples must be >= 1")

    @property
    def n_kernel(self) -> int:
        return self.kernel_samples if self.kernel_samples is not None else math.ceil(80 / self.eps**2)

    def heaviness_for(self, k_values: int) -> float:
        """The heaviness parameter R; default K^25 / eps^32."""
        if self.heaviness is not None:
            return float(self.heaviness)
        return k_values**25 / self.eps**32

    def to_json_obj(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json_obj(cls, obj: dict) -> "LearnerConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(obj) - known
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        return cls(**obj)


@dataclass
class Trace:
    """Run log for one learner call: guess counts, grid sizes, degradations."""

    events: list[dict] = field(default_factory=list)
    grid_sizes: dict[str, int] = field(default_factory=dict)
    degraded: list[str] = field(default_factory=list)
    info: dict[str, Any] = field(default_factory=dict)

    def note(self, **kw: Any) -> None:
        self.events.append(kw)

    def degrade(self, msg: str) -> None:
        log.info("degraded: %s", msg)
        self.degraded.append(msg)

    def to_json_obj(self) -> dict:
        return {"events": self.events, "grid_sizes": self.grid_sizes, "degraded": self.degraded, "info": self.info}


def _rng(cfg: LearnerConfig, rng: np.random.Generator | None) -> np.random.Generator:
    return rng if rng is not None else np.random.default_rng(cfg.seed)


# -- building blocks ----------------------------------------------------------------


def learn_sparse(target: Callable[[int], np.ndarray], s: int, eps: float, delta: float) -> Dist:
    """Empirical law of ceil(8 s / eps^2 * ln(2 s / delta)) draws."""
    if s < 1:
        raise ValueError("support bound must be >= 1")
    m = sparse_sample_size(s, eps, delta)
    return empirical(target(m))


def sparse_sample_size(s: int, eps: float, delta: float) -> int:
    return math.ceil(8 * s / eps**2 * math.log(2 * s / delta))


def bezout_decompose(u: int, r1: int, r2: int) -> tuple[int, int]:
    """(v1, v2) with u = v1 r1 + v2 r2, |v1| < r2 and |v2| < r1."""
    u, r1, r2 = int(u), int(r1), int(r2)
    if r1 < 1 or r2 < 1 or math.gcd(r1, r2) != 1:
        raise ValueError("r1, r2 must be coprime positive integers")
    if not (0 <= u < r1 * r2):
        raise ValueError("u must lie in [0, r1 * r2)")
    if r2 == 1:
        return 0, u
    v1 = u * pow(r1, -1, r2) % r2
    v2 = (u - v1 * r1) // r2
    return v1, v2


def difference_probes(target: Callable[[int], np.ndarray], repeats: int) -> np.ndarray:
    """|s1 - s2| over `repeats` fresh pairs; each is a constant-factor spread guess w.p. Omega(1)."""
    x = target(2 * repeats).reshape(repeats, 2)
    return np.abs(x[:, 0] - x[:, 1])


def modular_probes(diffs: np.ndarray, p: int, q: int) -> np.ndarray:
    """|q^{-1} * d mod p| taken as the symmetric residue, for each difference d."""
    if p < 2 or math.gcd(p, q) != 1:
        return np.zeros(0, dtype=np.int64)
    inv = pow(q % p, -1, p)
    r = np.mod(np.asarray(diffs, dtype=object) * inv, p).astype(np.int64)
    return np.minimum(r, p - r)


def spread_bins(values: Iterable[float], max_bins: int) -> list[float]:
    """Distinct guesses on a sqrt(2) grid from the middle half of the probes.

    At most `max_bins` bins are kept, the ones nearest the median.
    """
    v = np.sort(np.asarray([x for x in values if x > 0], dtype=np.float64))
    if v.size == 0:
        return []
    lo, hi = np.quantile(v, [0.25, 0.75])
    mid = v[(v >= lo) & (v <= hi)]
    expo = np.unique(np.round(2 * np.log2(mid)).astype(int))
    med = round(2 * math.log2(float(np.median(v))))
    expo = sorted(expo, key=lambda e: (abs(e - med), e))[:max_bins]
    return [2.0 ** (e / 2) for e in sorted(expo)]


def geometric_grid(center: float, ratio: float, half_width: int, budget: int) -> tuple[list[float], int]:
    """center * ratio^i for |i| <= half_width, thinned by doubling the step until it fits.

    Returns the grid and the step that was used.
    """
    step = 1
    while math.ceil((2 * half_width + 1) / step) > budget and step < 2 * half_width + 1:
        step *= 2
    return [center * ratio**i for i in range(-half_width, half_width + 1, step)], step


def dyadic_grid(base: float, j_lo: int, j_hi: int, step: int = 1) -> list[float]:
    return [base * 2.0**j for j in range(j_lo, j_hi + 1, step)]


def _smoother_key(weights: Sequence[int], radii: Sequence[int]) -> tuple[tuple[int, int], ...]:
    """Canonical (weight, radius) pairs with zero radii dropped."""
    return tuple(sorted((abs(int(w)), int(r)) for w, r in zip(weights, radii) if r > 0))


def _guess_key(weights: Sequence[int], gammas: Sequence[float], eps: float, cfg: LearnerConfig):
    k = len(weights)
    radii = [kernel_radius(eps, g, k, cfg.kernel_const) for g in gammas]
    return _smoother_key(weights, radii)


def _kernel_from_key(atoms: np.ndarray, key) -> Hypothesis:
    if not key:
        return Hypothesis.from_law(empirical(atoms), "empirical")
    w, r = zip(*key)
    return Hypothesis.from_kernel(KernelHypothesis(atoms, SmootherSpec(w, r)))


def lattice_of(samples: np.ndarray, step: int) -> tuple[int, np.ndarray] | None:
    """(offset, y) with samples = offset + step * y, or None when not on one lattice."""
    r = int(samples[0]) % step
    if np.any(np.mod(samples - r, step) != 0):
        return None
    return r, (samples - r) // step


def _pool_cells(cfg: LearnerConfig) -> int:
    # candidate laws share the kernel candidates' materialisation cap
    return min(cfg.max_cells, MATERIALIZE_CELLS)


def moment_candidates(samples: np.ndarray, step: int, max_cells: int) -> list[Hypothesis]:
    """Discretised Gaussian and translated Poisson fits on the lattice offset + step * Z."""
    step = max(1, int(step))
    lat = lattice_of(samples, step)
    if lat is None:
        lat = lattice_of(samples, 1)
        step = 1
    offset, y = lat
    var = float(np.var(y))
    if var < 1e-9:
        return []
    out = []
    for fam in ("discretized-gaussian", "translated-poisson"):
        try:
            out.append(Hypothesis.moment_fit(fam, float(np.mean(y)), var, step, offset, max_cells))
        except (ResourceError, ValueError) as exc:
            log.debug("skipping %s fit: %s", fam, exc)
    return out


def _build(keys: Iterable, atoms: np.ndarray, trace: Trace | None) -> list[Hypothesis]:
    out = []
    for key in keys:
        try:
            h = _kernel_from_key(atoms, key)
            materialised_cells(h.kernel)  # raises when the law could never be audited
            out.append(h)
        except ResourceError as exc:
            if trace is not None:
                trace.degrade(f"kernel {key} skipped: {exc}")
    return out


def arbitrate(target: Callable[[int], np.ndarray], hyps: Sequence[Hypothesis], cfg: LearnerConfig,
              rng: np.random.Generator, declared: int, trace: Trace | None = None, label: str = "") -> Hypothesis:
    """Run the tournament with a draw budget fixed by `declared`."""
    if not hyps:
        raise ValueError("no candidate hypotheses")
    if len(hyps) > declared:
        raise ValueError(f"{len(hyps)} candidates exceed the declared budget {declared}")
    res = select(target, [(h.sample, h.pmf) for h in hyps], cfg.eps, cfg.delta, rng, cfg.select_c, budget_m=declared)
    if trace is not None:
        trace.note(stage=label, candidates=len(hyps), declared=declared, select_draws=res.target_draws,
                   winner=repr(hyps[res.index]))
    return hyps[res.index]


def _fit_keys(make_keys: Callable[[int], list], budget: int, trace: Trace | None, label: str) -> list:
    """Coarsen a guess grid (step 1, 2, 4, ...) until its distinct keys fit the budget."""
    step = 1
    keys = list(dict.fromkeys(make_keys(step)))
    while len(keys) > budget:
        coarser = list(dict.fromkeys(make_keys(2 * step)))
        if coarser == keys:
            break
        step, keys = 2 * step, coarser
    if step > 1 and trace is not None:
        trace.degrade(f"{label}: grid step coarsened to x{step} to fit {budget} guesses")
    if len(keys) > budget:
        if trace is not None:
            trace.degrade(f"{label}: {len(keys)} guesses truncated to {budget}")
        keys = keys[:budget]
    return keys


# -- two and three scaled PBDs ---------------------------------------------------


def _two_pbd_keys(p: int, q: int, tot_bins: list[float], mod_bins: dict, eps: float, cfg: LearnerConfig,
                  step: int, trace: Trace | None) -> list:
    keys = []
    half = math.ceil(math.log(1 / eps) / math.log1p(eps / 10))
    for big, small in ((p, q), (q, p)):
        sig_big = [g / big for g in tot_bins]
        # (i) the small-weight spread read off modulo the large weight
        for gb in sig_big:
            for gs in mod_bins.get((big, small), []):
                keys.append(_guess_key((big, small), (gb, gs), eps, cfg))
        # (ii) geometric grid around the large weight
        grid, used = geometric_grid(float(big), 1 + eps / 10, half, max(1, cfg.grid_budget // step))
        if trace is not None:
            trace.grid_sizes[f"two_pbd_grid_{big}_{small}"] = len(grid)
        for gb in sig_big:
            for gs in grid:
                keys.append(_guess_key((big, small), (gb, gs), eps, cfg))
    # (iii) collapse onto the gcd lattice
    g = math.gcd(p, q)
    for gt in tot_bins:
        keys.append(_guess_key((g,), (gt / g,), eps, cfg))
    return keys


def learn_two_scaled_pbds(target: Callable[[int], np.ndarray], p: int, q: int, eps: float | None = None,
                          cfg: LearnerConfig | None = None, rng: np.random.Generator | None = None,
                          trace: Trace | None = None) -> Hypothesis:
    """Learn p * S_p + q * S_q + V for PBDs S_p, S_q and an integer shift V.

    Both orientations are tried. The small-weight spread comes from a
    modular probe, a geometric grid, or a collapse onto one lattice, and
    the tournament picks among the resulting kernels and moment fits.
    """
    cfg = cfg or LearnerConfig()
    eps = cfg.eps if eps is None else eps
    p, q = int(p), int(q)
    if p < 1 or q < 1:
        raise ValueError("p and q must be positive")
    rng = _rng(cfg, rng)
    tot = difference_probes(target, cfg.probe_repeats)
    mdiff = difference_probes_signed(target, cfg.probe_repeats)
    atoms = target(cfg.n_kernel)
    tot_bins = spread_bins(tot, cfg.max_probe_bins)
    mod_bins = {}
    for big, small in ((p, q), (q, p)):
        g = math.gcd(big, small)
        if np.all(mdiff % g == 0):
            mod_bins[(big, small)] = spread_bins(modular_probes(mdiff // g, big // g, small // g), cfg.max_probe_bins)
    keys = _fit_keys(lambda st: _two_pbd_keys(p, q, tot_bins, mod_bins, eps, cfg, st, trace),
                     cfg.max_guesses, trace, f"two_pbd({p},{q})")
    hyps = _build(keys, atoms, trace)
    return arbitrate(target, hyps, cfg, rng, cfg.max_guesses, trace, f"two_pbd({p},{q})")


def difference_probes_signed(target: Callable[[int], np.ndarray], repeats: int) -> np.ndarray:
    """s3 - s4 over `repeats` fresh pairs."""
    x = target(2 * repeats).reshape(repeats, 2)
    return x[:, 0] - x[:, 1]


def learn_three_scaled_pbds(target: Callable[[int], np.ndarray], p: int, q: int, r: int,
                            eps: float | None = None, cfg: LearnerConfig | None = None,
                            rng: np.random.Generator | None = None, trace: Trace | None = None) -> Hypothesis:
    """Learn p * S_p + q * S_q + r * S_r + V with r = p + q.

    Candidates come from a full grid over the three spreads and from
    folding the r-term into the q-term, which hands off to the two-PBD
    learner; the tournament arbitrates between both branches.
    """
    cfg = cfg or LearnerConfig()
    eps = cfg.eps if eps is None else eps
    p, q, r = int(p), int(q), int(r)
    if min(p, q, r) < 1:
        raise ValueError("p, q, r must be positive")
    if r != p + q:
        raise ValueError("need r == p + q")
    rng = _rng(cfg, rng)
    folded = learn_two_scaled_pbds(target, p, q, eps, cfg, rng, trace)
    tot = difference_probes(target, cfg.probe_repeats)
    atoms = target(cfg.n_kernel)
    tot_bins = spread_bins(tot, cfg.max_probe_bins)
    # Each spread ranges over [eps^5, 1] times its share of the total, on a sqrt(2) grid.
    depth = math.ceil(2 * 5 * math.log2(1 / eps))

    def make(step: int) -> list:
        ks = []
        js = range(-depth, 1, step)
        if trace is not None:
            trace.grid_sizes[f"three_pbd_grid_{p}_{q}_{r}"] = len(js)
        for gt in tot_bins:
            for jp, jq, jr in itertools.product(js, repeat=3):
                gam = (gt / p * 2 ** (jp / 2), gt / q * 2 ** (jq / 2), gt / r * 2 ** (jr / 2))
                ks.append(_guess_key((p, q, r), gam, eps, cfg))
        return ks

    # Skip steps that would enumerate far more raw triples than the budget.
    s0 = 1
    while math.ceil((depth + 1) / s0) ** 3 * max(1, len(tot_bins)) > 8 * cfg.max_guesses:
        s0 *= 2
    keys = _fit_keys(lambda st: make(st * s0), cfg.max_guesses - 1, trace, f"three_pbd({p},{q},{r})")
    if s0 > 1 and trace is not None:
        trace.degrade(f"three_pbd({p},{q},{r}): grid step starts at x{s0}")
    hyps = [folded] + _build(keys, atoms, trace)
    return arbitrate(target, hyps, cfg, rng, cfg.max_guesses, trace, f"three_pbd({p},{q},{r})")


# -- known support -------------------------------------------------------------------


def q_values(support: Sequence[int]) -> list[int]:
    """Positive differences between support points, i.e. the values zero-moding can produce."""
    a = sorted(set(int(x) for x in support))
    return sorted({b - c for b, c in itertools.combinations(a[::-1], 2)})


def _check_support(support: Sequence[int], k: int | None = None) -> list[int]:
    a = [int(x) for x in support]
    if len(set(a)) != len(a) or a != sorted(a):
        raise ValueError("support must be strictly increasing")
    if k is not None and len(a) != k:
        raise ValueError(f"expected {k} support points")
    return a


def learn_k3(target: Callable[[int], np.ndarray], N: int, support: Sequence[int], cfg: LearnerConfig | None = None,
             rng: np.random.Generator | None = None, trace: Trace | None = None) -> Hypothesis:
    """Learn a sum of N independent variables supported on three known points.

    The candidate pool covers every largeness case: the sparse empirical
    law (no heavy value), one heavy difference value with the others
    light, two heavy values through the two-PBD learner, and all three
    heavy through the three-PBD learner, plus moment fits for the regime
    where everything collapses onto one lattice. N only sizes nothing;
    it is accepted for interface symmetry with the oracle.
    """
    cfg = cfg or LearnerConfig()
    a = _check_support(support, 3)
    rng = _rng(cfg, rng)
    qs = q_values(a)
    K = len(qs)
    if trace is not None:
        sched = power_schedule(cfg.eps, K, cfg.schedule_c)
        trace.info.update(q_values=qs, schedule=[float(min(t, 1e300)) for t in sched])

    pool: list[Hypothesis] = []
    # no heavy value: the law is essentially sparse
    pool.append(Hypothesis.from_law(learn_sparse(target, cfg.sparse_support, cfg.eps, cfg.delta), "empirical"))
    atoms = target(cfg.n_kernel)
    tot_bins = spread_bins(difference_probes(target, cfg.probe_repeats), cfg.max_probe_bins)
    pool += moment_candidates(atoms, math.gcd(*qs), _pool_cells(cfg))
    # one heavy value
    single = list(dict.fromkeys(_guess_key((qv,), (g / qv,), cfg.eps, cfg) for qv in qs for g in tot_bins))
    pool += _build(single, atoms, trace)
    # two heavy values
    for i, j in itertools.combinations(range(K), 2):
        pool.append(learn_two_scaled_pbds(target, qs[i], qs[j], cfg.eps, cfg, rng, trace))
    # three heavy values; the largest difference is the sum of the other two
    if K == 3 and qs[0] + qs[1] == qs[2]:
        pool.append(learn_three_scaled_pbds(target, qs[0], qs[1], qs[2], cfg.eps, cfg, rng, trace))
    else:
        # duplicate differences (equally spaced support) leave only two values
        pool.append(learn_two_scaled_pbds(target, qs[0], qs[-1], cfg.eps, cfg, rng, trace))
    declared = k3_outer_budget(cfg)
    return arbitrate(target, pool, cfg, rng, declared, trace, "k3")


def k3_outer_budget(cfg: LearnerConfig) -> int:
    # sparse + 2 moment fits + single-heavy kernels + 3 pairs + 1 triple
    return 1 + 2 + 3 * cfg.max_probe_bins + 3 + 1


def _general_keys(qs: list[int], tot_bins: list[float], eps: float, cfg: LearnerConfig, step: int,
                  trace: Trace | None) -> list:
    K = len(qs)
    r = max(qs)
    j_hi = 1 + math.ceil(math.log2(K)) if K > 1 else 1
    jq_hi = jq_top(r, eps, cfg.mix_exponent)
    keys = []
    for size in range(1, min(cfg.max_heavy, K) + 1):
        for B in itertools.combinations(qs, size):
            for a_star in B:
                rest_pool = [b for b in B if b != a_star]
                for extra in range(len(rest_pool) + 1):
                    for more in itertools.combinations(rest_pool, extra):
                        mix = (a_star,) + more
                        q_mix = math.gcd(*mix)
                        rest = [b for b in B if b not in mix]
                        for gp in tot_bins:
                            J = dyadic_grid(gp / q_mix, -1, j_hi, 1 if not rest else step)
                            Jqs = [dyadic_grid(1.0, -1, jq_hi, step) for _ in rest]
                            for combo in itertools.product(J, *Jqs):
                                keys.append(_guess_key((q_mix, *rest), combo, eps, cfg))
    if trace is not None:
        trace.grid_sizes["J"] = j_hi + 2
        trace.grid_sizes["J_q"] = jq_hi + 2
        trace.grid_sizes["J_q_used"] = len(range(-1, jq_hi + 1, step))
    return keys


def jq_top(r: int, eps: float, mix_exponent: float) -> int:
    """Top exponent of the dyadic spread grid for a non-mixing heavy value."""
    return 1 + math.ceil(math.log2(math.sqrt(max(eps**-mix_exponent, r / eps))))


def general_grid_sizes(support: Sequence[int], eps: float, mix_exponent: float = 2.0) -> dict[str, int]:
    """Sizes of the spread grids J and J_q for a support, before any coarsening."""
    qs = q_values(support)
    K = len(qs)
    j_hi = 1 + math.ceil(math.log2(K)) if K > 1 else 1
    return {"J": j_hi + 2, "J_q": jq_top(max(qs), eps, mix_exponent) + 2}


def learn_general_k(target: Callable[[int], np.ndarray], N: int, support: Sequence[int],
                    cfg: LearnerConfig | None = None, rng: np.random.Generator | None = None,
                    trace: Trace | None = None) -> Hypothesis:
    """Learn a sum of N independent variables on k known points.

    Guesses a heavy set B of difference values, a mixing subset that
    collapses onto its gcd, and spreads from dyadic grids (J around the
    probed total spread, J_q for the remaining heavy values). Every guess
    becomes a kernel hypothesis; the sparse law and moment fits join the
    pool, and one tournament picks the output.
    """
    cfg = cfg or LearnerConfig()
    a = _check_support(support)
    if len(a) < 2:
        raise ValueError("need at least two support points")
    rng = _rng(cfg, rng)
    qs = q_values(a)
    sparse = Hypothesis.from_law(learn_sparse(target, cfg.sparse_support, cfg.eps, cfg.delta), "empirical")
    atoms = target(cfg.n_kernel)
    tot_bins = spread_bins(difference_probes(target, cfg.probe_repeats), cfg.max_probe_bins)
    moments = moment_candidates(atoms, math.gcd(*qs), _pool_cells(cfg))
    budget = cfg.general_max_guesses - 1 - 2
    keys = _fit_keys(lambda st: _general_keys(qs, tot_bins, cfg.eps, cfg, st, trace), budget, trace, "general_k")
    if trace is not None:
        trace.info.update(q_values=qs, guesses=len(keys))
    pool = [sparse] + moments + _build(keys, atoms, trace)
    return arbitrate(target, pool, cfg, rng, cfg.general_max_guesses, trace, "general_k")


# -- reduction modulo the largest weight -------------------------------------------


def reduction_n_star(a_max: int, N: int, m_prime: int, delta: float, const: float = 1.0) -> int:
    """Even N* = const * (a_max * N * m' / delta)^2, rounded up."""
    n = math.ceil(const * (a_max * N * m_prime / delta) ** 2)
    return n + (n % 2)


def reduction_tv_bound(a_max: int, N: int, m_prime: int, n_star: int) -> float:
    """Union bound on the TV between the synthetic and the ideal m'-sample."""
    return a_max * N * m_prime * math.sqrt(2 / (math.pi * n_star))


def hypothesis_mod(h: Hypothesis, m: int, max_cells: int = DEFAULT_MAX_CELLS) -> Hypothesis:
    """The law of (H mod m) as a point-mixture hypothesis on {0, ..., m-1}."""
    m = int(m)
    if m < 2:
        raise ValueError("modulus must be >= 2")
    if h.kernel is not None:
        kh = h.kernel
        out = mod_reduce(empirical(kh.atoms), m).pmf
        full = np.zeros(m)
        full[: len(out)] = out
        for w, c in zip(kh.smoother.weights, kh.smoother.radii):
            if c == 0 or w % m == 0:
                continue
            comp = np.bincount(np.mod(np.arange(-c, c + 1, dtype=np.int64) * w, m), minlength=m) / (2 * c + 1)
            full = np.real(np.fft.ifft(np.fft.fft(full) * np.fft.fft(comp)))
            full = np.clip(full, 0.0, None)
        return Hypothesis.from_law(IntDist(0, full / full.sum()))
    if h.family in ("discretized-gaussian", "translated-poisson") and "var" in h.params:
        sd = math.sqrt(h.params["var"]) * abs(h.params["step"])
        if sd >= 10 * m and h.params["step"] % m != 0:
            # The Fourier coefficients of the fold decay like exp(-2 pi^2 sd^2 / m^2); at
            # sd >= 10 m they vanish in double precision, so the fold is uniform.
            return Hypothesis.from_law(IntDist(0, np.full(m, 1.0 / m)))
    return Hypothesis.from_law(mod_reduce(h.law(), m))


def mod_reduction_learner(base: Callable[[SampleSource], Hypothesis], a_k: int, N: int, m_prime: int,
                          cfg: LearnerConfig | None = None, a_max: int | None = None,
                          rng: np.random.Generator | None = None, trace: Trace | None = None,
                          n_star_cap: int = MAX_BINOMIAL_N) -> Callable[[Callable[[int], np.ndarray]], Hypothesis]:
    """Turn a learner for weights {0, a_2, ..., a_k} into one for (. mod a_k).

    Each mod-a_k draw v' becomes u = v' + a_k * Bin(N*, 1/2); the base
    learner sees only u-values (at most m' of them), and its hypothesis
    is reduced mod a_k.
    """
    cfg = cfg or LearnerConfig()
    a_k = int(a_k)
    if a_k < 2:
        raise ValueError("a_k must be >= 2")
    a_max = a_k if a_max is None else int(a_max)
    n_star = reduction_n_star(a_max, N, m_prime, cfg.delta / 2)
    if n_star > n_star_cap:
        n_star = n_star_cap - (n_star_cap % 2)
        if trace is not None:
            trace.degrade(f"N* capped at {n_star}; TV penalty bound {reduction_tv_bound(a_max, N, m_prime, n_star):.3g}")
    if trace is not None:
        trace.info.update(n_star=n_star, tv_penalty_bound=reduction_tv_bound(a_max, N, m_prime, n_star))
    rng = _rng(cfg, rng)

    def learner(target: Callable[[int], np.ndarray]) -> Hypothesis:
        def synth(n: int) -> np.ndarray:
            v = np.mod(np.asarray(target(n), dtype=np.int64), a_k)
            return v + a_k * rng.binomial(n_star, 0.5, size=n).astype(np.int64)

        h = base(SampleSource(synth, max_draws=m_prime))
        return hypothesis_mod(h, a_k)

    return learner


def _central_binomial_window(n: int, lo: int, hi: int) -> np.ndarray:
    """Bin(n, 1/2) pmf at n/2 + j for j in [lo, hi], for even n of any size.

    Starts from the central term (Stirling with two correction terms) and
    walks outward by exact pmf ratios, so no huge log-factorials appear.
    """
    if n % 2:
        raise ValueError("n must be even")
    h = n // 2
    if n <= 10**6:
        return stats.binom.pmf(np.arange(h + lo, h + hi + 1), n, 0.5)
    center = math.sqrt(2 / (math.pi * n)) * (1 - 1 / (4 * n) + 1 / (32 * n * n))
    out = np.zeros(hi - lo + 1)
    vals = {0: center}
    for j in range(1, max(abs(lo), abs(hi)) + 1):
        # b(h + j) / b(h + j - 1) = (h - j + 1) / (h + j)
        vals[j] = vals[j - 1] * (h - j + 1) / (h + j)
    for j in range(lo, hi + 1):
        out[j - lo] = vals[abs(j)]
    return out


def reduction_shift_tv(s_law: Dist, a_k: int, n_star: int) -> float:
    """Exact TV between (S mod a_k) + a_k B and S + a_k B with B ~ Bin(n_star, 1/2).

    Splitting by residue rho, S = rho + a_k C_rho, and the TV is
    sum_rho P(rho) * TV(B, B + C_rho). For a symmetric unimodal B and
    C_rho >= 0, (b - mix)^+ vanishes above n/2 + max C / 2 and equals the
    signed difference below n/2, so only a window near the centre is needed.
    """
    vals, probs = pairs(s_law)
    if np.any(vals < 0):
        raise ValueError("S must be non-negative")
    n_star = int(n_star)
    if n_star % 2:
        raise ValueError("n_star must be even")
    rho = np.mod(vals, a_k)
    c = vals // a_k
    cmax = int(c.max())
    win = _central_binomial_window(n_star, -cmax, cmax + 1)  # b(n/2 + j), j in [-cmax, cmax+1]

    def b(j: np.ndarray) -> np.ndarray:
        return win[j + cmax]

    total = 0.0
    for r in np.unique(rho):
        sel = rho == r
        pr = probs[sel].sum()
        cs, ps = c[sel], probs[sel] / pr
        # below the centre: sum_c P(c) * P(n/2 - c < B <= n/2)
        below = sum(p * b(np.arange(-ci + 1, 1)).sum() for ci, p in zip(cs, ps) if ci > 0)
        # the window just above the centre
        js = np.arange(1, cmax // 2 + 2)
        mix = np.zeros(len(js))
        for ci, p in zip(cs, ps):
            mix += p * b(js - ci)
        above = np.clip(b(js) - mix, 0.0, None).sum()
        total += pr * (below + above)
    return float(total)


# -- unknown support -----------------------------------------------------------------


def gcd_of_differences(samples: np.ndarray) -> int:
    """gcd of |x - samples[0]| over the rest; 0 when all draws are equal."""
    d = np.abs(np.asarray(samples[1:], dtype=np.int64) - int(samples[0]))
    return int(np.gcd.reduce(d)) if d.size else 0


def gcd_probe_size(eps: float) -> int:
    return math.ceil(4 / math.sqrt(eps))


def learn_unknown_support_k2(target: Callable[[int], np.ndarray], a_max: int, eps: float | None = None,
                             cfg: LearnerConfig | None = None, rng: np.random.Generator | None = None,
                             trace: Trace | None = None) -> Hypothesis:
    """Learn a sum of variables on two unknown points {a1, a2} with a2 <= a_max.

    The gap a2 - a1 is recovered as the gcd of differences to a reference
    draw; dividing it out leaves a shifted PBD, learned by moment fits
    and its empirical law. The sparse learner runs alongside, and the
    tournament picks. Draw counts do not depend on a_max.
    """
    cfg = cfg or LearnerConfig()
    eps = cfg.eps if eps is None else eps
    rng = _rng(cfg, rng)
    pool = [Hypothesis.from_law(learn_sparse(target, cfg.sparse_support, eps, cfg.delta), "empirical")]
    probe = target(1 + gcd_probe_size(eps))
    g = gcd_of_differences(probe)
    if trace is not None:
        trace.info["gcd"] = g
    atoms = target(cfg.n_kernel)
    if g > 0 and g <= max(1, a_max):
        r = int(probe[0]) % g
        on_lattice = atoms[np.mod(atoms - r, g) == 0]
        if len(on_lattice):
            y = (on_lattice - r) // g
            pool.append(Hypothesis.from_law(shift(scale(empirical(y), g, cfg.max_cells), r), "empirical"))
            pool += moment_candidates(on_lattice, g, _pool_cells(cfg))
    elif trace is not None:
        trace.degrade("gcd path unavailable; sparse path only")
    return arbitrate(target, pool, cfg, rng, 4, trace, "unknown_k2")


def support_guesses(a_max: int, k: int) -> list[tuple[int, ...]]:
    """All k-point supports inside {0, ..., a_max}."""
    if k < 1 or a_max < k - 1:
        return []
    return list(itertools.combinations(range(a_max + 1), k))


def enum_select_draws(n_guesses: int, eps: float, delta: float, c: float = 32.0) -> int:
    """Extra draws of the final tournament: ceil(c / eps^2 * (ln M + ln 1/delta))."""
    return sample_budget(n_guesses, eps, delta, c)


def learn_unknown_support_enum(target: Callable[[int], np.ndarray], a_max: int, k: int,
                               eps: float | None = None, delta: float | None = None,
                               cfg: LearnerConfig | None = None, rng: np.random.Generator | None = None,
                               trace: Trace | None = None,
                               base: Callable[..., Hypothesis] | None = None,
                               max_supports: int = 10_000) -> Hypothesis:
    """Try every k-point support in {0..a_max} on one shared sample, then select.

    The first support's run draws fresh samples and records them; every
    later support replays exactly that sample, so only the final
    tournament costs extra draws.
    """
    cfg = cfg or LearnerConfig()
    eps = cfg.eps if eps is None else eps
    delta = cfg.delta if delta is None else delta
    rng = _rng(cfg, rng)
    guesses = support_guesses(a_max, k)
    if not guesses:
        raise ValueError("no supports to enumerate")
    if len(guesses) > max_supports:
        raise ResourceError(f"{len(guesses)} support guesses exceed the cap {max_supports}")
    base = base or learn_general_k
    rec = RecordingSource(target)
    hyps = []
    for i, sup in enumerate(guesses):
        src = rec if i == 0 else SampleSource.from_array(rec.data())
        sub_rng = np.random.default_rng([cfg.seed, i])
        hyps.append(base(src, 0, sup, cfg, sub_rng))
    if trace is not None:
        trace.info.update(supports=len(guesses), shared_draws=rec.draws,
                          extra_draws=enum_select_draws(len(guesses), eps, delta, cfg.select_c))
    sel_cfg = dataclasses.replace(cfg, eps=eps, delta=delta)
    return arbitrate(target, hyps, sel_cfg, rng, len(guesses), trace, "unknown_enum")


# -- limit theorem and local shift bound -----------------------------------------------


def matched_signed_pbd(mean: float, var: float) -> IntDist:
    """Bin(4 var, 1/2) shifted to the given mean; exact when 4 var and the shift are integers."""
    n = round(4 * var)
    if n < 1:
        raise ValueError("variance too small")
    return shift(binomial(n, 0.5), round(mean - n / 2))


def limit_theorem_tv(r1: int, r2: int, var1: float, var2: float, max_cells: int = DEFAULT_MAX_CELLS) -> float:
    """Exact TV between r1 T1 + r2 T2 (central binomials) and the moment-matched signed PBD on the gcd lattice."""
    t1 = binomial(round(4 * var1), 0.5)
    t2 = binomial(round(4 * var2), 0.5)
    t = convolve(scale(t1, r1, max_cells), scale(t2, r2, max_cells), max_cells)
    g = math.gcd(r1, r2)
    mu = (r1 * t1.mean() + r2 * t2.mean()) / g
    var = (r1 * r1 * t1.variance() + r2 * r2 * t2.variance()) / (g * g)
    return tv_distance(t, scale(matched_signed_pbd(mu, var), g, max_cells))


def local_shift_bound(r1: int, r2: int, alpha: float, beta: float, d: int) -> float:
    """r2 alpha + r1 beta + min(d/r1 alpha, d/r2 beta) bound on dtv(Z, Z + d)."""
    return r2 * alpha + r1 * beta + min(d / r1 * alpha, d / r2 * beta)
