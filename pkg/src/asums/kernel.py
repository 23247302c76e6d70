"""Kernel hypotheses: a uniform draw from retained samples plus integer smoothing noise.

The smoother is ``Z = sum_a p_a * Z_a`` with ``Z_a`` uniform on
``[-c_a, c_a]``. A hypothesis outputs a uniformly chosen retained sample
plus an independent draw of Z.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dist_core import DEFAULT_MAX_CELLS, Dist, IntDist, convolve, empirical, scale


@dataclass(frozen=True)
class SmootherSpec:
    weights: tuple[int, ...]
    radii: tuple[int, ...]

    def __post_init__(self) -> None:
        w = tuple(int(x) for x in self.weights)
        r = tuple(int(x) for x in self.radii)
        if len(w) < 1 or len(w) != len(r):
            raise ValueError("need K >= 1 weights and as many radii")
        if any(x == 0 for x in w):
            raise ValueError("weights must be nonzero")
        if any(x < 0 for x in r):
            raise ValueError("radii must be >= 0")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "radii", r)

    @property
    def reach(self) -> int:
        """Largest |z| the smoother can produce."""
        return sum(abs(p) * c for p, c in zip(self.weights, self.radii))

    @property
    def box_size(self) -> int:
        return math.prod(2 * c + 1 for c in self.radii)

    @classmethod
    def trivial(cls) -> "SmootherSpec":
        return cls((1,), (0,))


@dataclass(frozen=True, eq=False)
class KernelHypothesis:
    atoms: np.ndarray
    smoother: SmootherSpec

    def __post_init__(self) -> None:
        a = np.asarray(self.atoms, dtype=np.int64).ravel().copy()
        if a.size == 0:
            raise ValueError("a kernel hypothesis needs at least one atom")
        a.setflags(write=False)
        object.__setattr__(self, "atoms", a)

    def to_json_obj(self) -> dict:
        return {
            "atoms": [int(x) for x in self.atoms],
            "weights": list(self.smoother.weights),
            "radii": list(self.smoother.radii),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())

    @classmethod
    def from_json_obj(cls, obj: dict) -> "KernelHypothesis":
        return cls(np.asarray(obj["atoms"], dtype=np.int64), SmootherSpec(tuple(obj["weights"]), tuple(obj["radii"])))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KernelHypothesis):
            return NotImplemented
        return self.smoother == other.smoother and np.array_equal(self.atoms, other.atoms)

    __hash__ = None  # type: ignore[assignment]


def empirical_dist(samples: Sequence[int] | np.ndarray) -> Dist:
    """Frequency distribution of the samples; raises on empty input."""
    return empirical(samples)


def smoother_pmf(spec: SmootherSpec, max_cells: int = DEFAULT_MAX_CELLS) -> Dist:
    """Exact law of sum_a p_a * Uniform[-c_a, c_a]."""
    out: Dist = IntDist.point(0)
    for p, c in zip(spec.weights, spec.radii):
        if c == 0:
            continue
        out = convolve(out, scale(IntDist.uniform(-c, c), p, max_cells), max_cells)
    return out


def build_kernel_hypothesis(samples: Sequence[int] | np.ndarray, spec: SmootherSpec) -> KernelHypothesis:
    """Keep the samples verbatim as atoms; no fitting happens here."""
    return KernelHypothesis(np.asarray(samples, dtype=np.int64), spec)


def kernel_radius(eps: float, scale_est: float, k: int, const: float = 1.0) -> int:
    """Smoothing radius ceil(const * eps * scale_est / k), floored at 0."""
    if not math.isfinite(scale_est) or scale_est <= 0:
        return 0
    return max(0, math.ceil(const * eps * scale_est / max(k, 1)))
