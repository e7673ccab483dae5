"""Useful-rank estimation from singular-value gaps of tensor matricizations.

For each mode the candidate rank is the first index at which the descending
singular-value sequence of that unfolding flattens out (first-order
difference smaller than epsilon, applied to raw unnormalized values); the
overall estimate is the maximum over modes.  Note the literal gap rule rates
a clean rank-1 tensor as 2: the first sub-epsilon gap sits just after the
single large drop.  When no gap falls below epsilon the full singular-value
count is used and the mode is reported in ``fallback_modes``.
"""

import dataclasses
import math

import numpy as np

from .errors import DegenerateInputError, ShapeError
from .linalg import singular_values
from .tensor import as_array, matricize

__all__ = ["RankEstimate", "RankBounds", "estimate_rank", "rank_bounds"]

DEFAULT_EPSILON = 0.15


@dataclasses.dataclass(frozen=True)
class RankEstimate:
    per_mode: tuple
    overall: int
    epsilon: float
    fallback_modes: tuple = ()


@dataclasses.dataclass(frozen=True)
class RankBounds:
    """Dimension-only sanity caps for order-3 rank estimates.

    ``mode_caps[i]`` bounds the mode-(i+1) rank by min(N_i, prod of the other
    dims); ``upper`` is the generic cap min(N1*N2, N1*N3, N2*N3).
    """

    mode_caps: tuple
    upper: int


def estimate_rank(t, epsilon=DEFAULT_EPSILON):
    """Estimate the useful rank of an order-3/4 tensor.

    Raises DegenerateInputError for an all-zero tensor, whose matricizations
    carry no gap information.
    """
    if epsilon <= 0:
        raise ShapeError("epsilon must be positive")
    arr = as_array(t)
    if arr.ndim not in (3, 4):
        raise ShapeError(f"expected an order-3/4 tensor, got shape {arr.shape}")
    if not arr.any():
        raise DegenerateInputError("cannot estimate the rank of a zero tensor")
    per_mode = []
    fallback = []
    for mode in range(1, arr.ndim + 1):
        s = singular_values(matricize(arr, mode).data).singular_values
        gaps = np.abs(s[:-1] - s[1:])
        below = np.where(gaps < epsilon)[0]
        if below.size:
            per_mode.append(int(below[0]) + 1)
        else:
            per_mode.append(int(s.size))
            fallback.append(mode)
    return RankEstimate(
        per_mode=tuple(per_mode),
        overall=max(per_mode),
        epsilon=float(epsilon),
        fallback_modes=tuple(fallback),
    )


def rank_bounds(dims):
    """Dimension-only caps on the rank of an order-3 tensor of shape ``dims``."""
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise ShapeError(f"expected positive order-3 dims, got {dims}")
    n1, n2, n3 = (int(d) for d in dims)
    total = n1 * n2 * n3
    caps = tuple(min(d, total // d) for d in (n1, n2, n3))
    upper = min(n1 * n2, n1 * n3, n2 * n3)
    return RankBounds(mode_caps=caps, upper=upper)
