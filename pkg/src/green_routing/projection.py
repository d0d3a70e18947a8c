"""Exact Euclidean projection onto a scaled simplex.

Used by every iterative solver to keep iterates feasible: each player's
vector must stay nonnegative and sum to her demand.  The projection is
computed by the sort-then-threshold method: sort the coordinates, find
the pivot ``t`` with ``sum(max(v_j - t, 0)) = total``, and clip.  It is
exact up to floating point, runs in O(n log n) and needs no tuning.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["SimplexSpec", "project", "project_rows"]


@dataclass(frozen=True)
class SimplexSpec:
    """The set {v >= 0 : sum(v) = total} in ``dimension`` coordinates."""

    dimension: int
    total: float

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be at least 1")
        if self.total < 0:
            raise ValueError("total must be nonnegative")


def _pivot(v: np.ndarray, total: float) -> float:
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - total
    j = np.arange(1, len(v) + 1)
    rho = np.nonzero(u > css / j)[0][-1]
    return css[rho] / (rho + 1.0)


def project(spec: SimplexSpec, point) -> np.ndarray:
    """Euclidean projection of ``point`` onto the simplex.

    Raises ValueError for a negative total or non-finite coordinates.
    A zero total degenerates to the single point at the origin.
    """
    v = np.asarray(point, dtype=float)
    if v.shape != (spec.dimension,):
        raise ValueError(f"point has shape {v.shape}, expected ({spec.dimension},)")
    if not np.all(np.isfinite(v)):
        raise ValueError("point has non-finite coordinates")
    if spec.total == 0.0:
        return np.zeros_like(v)
    return np.maximum(v - _pivot(v, spec.total), 0.0)


def project_rows(totals: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Project each row of ``points`` onto its own simplex.

    Vectorised over rows; row i is projected onto the simplex with total
    ``totals[i]``.  This is the hot path of the iterative solvers, so
    unlike :func:`project` it does not validate its input; callers detect
    non-finite iterates from the returned step norm.
    """
    n, d = points.shape
    u = np.sort(points, axis=1)[:, ::-1]
    css = np.cumsum(u, axis=1)
    css -= totals[:, None]
    mask = u * _RANGES[d] > css
    rho = d - 1 - np.argmax(mask[:, ::-1], axis=1)
    theta = css[np.arange(n), rho] / (rho + 1.0)
    out = np.maximum(points - theta[:, None], 0.0)
    if (totals == 0.0).any():
        out[totals == 0.0] = 0.0
    return out


# j-ranges per dimension, cached; mask uses u*j > css instead of u > css/j
# (j > 0, so equivalent) to avoid a per-call division.
class _RangeCache(dict):
    def __missing__(self, d):
        self[d] = np.arange(1.0, d + 1.0)[None, :]
        return self[d]


_RANGES = _RangeCache()
