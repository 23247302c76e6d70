"""Learning sums of independent integer random variables with sparse collective support."""

from .dist_core import (
    Dist,
    IntDist,
    PbdSpec,
    ResourceError,
    SparseDist,
    convolve,
    kl_divergence,
    kolmogorov_distance,
    shift_distance,
    tv_distance,
)

__all__ = [
    "Dist",
    "IntDist",
    "PbdSpec",
    "ResourceError",
    "SparseDist",
    "convolve",
    "kl_divergence",
    "kolmogorov_distance",
    "shift_distance",
    "tv_distance",
]
