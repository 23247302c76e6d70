"""Hypothesis selection by a pairwise Scheffe tournament.

For candidates i < j the Scheffe set is ``W = {x : D_i(x) > D_j(x)}``.
Each candidate's mass on W is estimated from its own draws, and the
target's mass from target draws. Whichever candidate's estimate is
closer to the target's wins the match. Membership in W is decided
pointwise from the two evaluators, so W is never materialised.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

log = logging.getLogger(__name__)

Sampler = Callable[[np.random.Generator, int], np.ndarray]
Evaluator = Callable[[np.ndarray], np.ndarray]
TargetSampler = Callable[[int], np.ndarray]

DEFAULT_C = 32.0


@dataclass
class SelectResult:
    index: int
    target_draws: int
    wins: list[int] = field(default_factory=list)
    evaluator_calls: int = 0


def sample_budget(m_candidates: int, eps: float, delta: float, c: float = DEFAULT_C) -> int:
    """Target draws used for M candidates: ceil(C / eps^2 * (ln M + ln 1/delta))."""
    if m_candidates <= 1:
        return 0
    if not (0 < eps < 1) or not (0 < delta < 1):
        raise ValueError("eps and delta must lie in (0, 1)")
    return int(math.ceil(c / eps**2 * (math.log(m_candidates) + math.log(1.0 / delta))))


def _checked(values: np.ndarray, who: int) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(v)) or np.any(v < 0):
        raise ValueError(f"evaluator {who} returned a negative or non-finite probability")
    return v


def select(
    target: TargetSampler,
    candidates: Sequence[tuple[Sampler, Evaluator]],
    eps: float,
    delta: float,
    rng: np.random.Generator,
    c: float = DEFAULT_C,
    budget_m: int | None = None,
) -> SelectResult:
    """Index of the tournament winner among `candidates`.

    `target(n)` returns n fresh target draws. Each candidate is a pair
    (sampler(rng, n), evaluator(xs)). Ties go to the lowest index.
    `budget_m` fixes the M used in the draw budget, so callers whose
    candidate count varies with the data can keep draw counts fixed; a
    single candidate then still consumes the budget.
    """
    m_c = len(candidates)
    if m_c == 0:
        raise ValueError("no candidates to select from")
    if budget_m is not None and budget_m < m_c:
        raise ValueError("budget_m is smaller than the number of candidates")
    if m_c == 1 and budget_m is None:
        return SelectResult(0, 0, [0])
    m = sample_budget(budget_m if budget_m is not None else m_c, eps, delta, c)
    if m == 0:
        return SelectResult(0, 0, [0])
    tx = np.asarray(target(m), dtype=np.int64)
    if len(tx) != m:
        raise ValueError("target sampler returned the wrong number of draws")
    own = [np.asarray(s(rng, m), dtype=np.int64) for s, _ in candidates]

    # Evaluate every candidate once on the pooled distinct points.
    pool, inv = np.unique(np.concatenate([tx, *own]), return_inverse=True)
    table = np.vstack([_checked(ev(pool), i) for i, (_, ev) in enumerate(candidates)])
    t_idx = inv[:m]
    own_idx = [inv[m * (i + 1) : m * (i + 2)] for i in range(m_c)]

    # Per match only the target draws and the two candidates' own draws matter.
    wins = [0] * m_c
    for i in range(m_c):
        for j in range(i + 1, m_c):
            ti, tj = table[i], table[j]
            tau = np.count_nonzero(ti[t_idx] > tj[t_idx]) / m
            oi, oj = own_idx[i], own_idx[j]
            pi = np.count_nonzero(ti[oi] > tj[oi]) / m
            pj = np.count_nonzero(ti[oj] > tj[oj]) / m
            if abs(pi - tau) <= abs(pj - tau):
                wins[i] += 1
            else:
                wins[j] += 1
    best = max(range(m_c), key=lambda i: (wins[i], -i))
    log.debug("select: m=%d wins=%s winner=%d", m, wins, best)
    return SelectResult(best, m, wins, evaluator_calls=m_c * len(pool))
