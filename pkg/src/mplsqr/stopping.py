"""Early-stopping rules for semi-convergent iterations.

All iteration indices are 1-based: position ``i`` of a history sequence
belongs to iteration ``k = i + 1``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Rule",
    "StopDecision",
    "NoCornerError",
    "dp_check",
    "discrepancy_index",
    "lcurve_corner",
    "curvature_corner",
    "CORNER_DETECTORS",
    "oracle_optimal",
]


class Rule(str, enum.Enum):
    DP = "DP"
    LCURVE = "LCurve"
    OPTIMAL = "OptimalOracle"

    @classmethod
    def _missing_(cls, value):
        aliases = {"dp": cls.DP, "lcurve": cls.LCURVE, "optimal": cls.OPTIMAL}
        return aliases.get(str(value).lower())


@dataclass(frozen=True)
class StopDecision:
    rule: Rule
    k1: int
    fired_at: int
    tau: float | None = None

    def __post_init__(self):
        if self.k1 < 1:
            raise ValueError("k1 must be >= 1")


class NoCornerError(ValueError):
    """The L-curve has no detectable corner."""


def dp_check(phi_bar_next: float, norm_e: float | None, tau: float) -> bool:
    """Discrepancy principle test ``phi_bar_{k+1} <= tau ||e||``."""
    if norm_e is None or not norm_e > 0:
        raise ValueError("discrepancy principle needs a known noise norm > 0")
    if not tau > 1:
        raise ValueError("tau must exceed 1")
    return phi_bar_next <= tau * norm_e


def discrepancy_index(phi_bars, norm_e: float, tau: float = 1.001) -> int | None:
    """First ``k`` with ``phi_bar_{k+1} <= tau ||e||``, or ``None``."""
    for i, r in enumerate(phi_bars):
        if dp_check(r, norm_e, tau):
            return i + 1
    return None


# points closer than this fraction of the curve's diameter to the last kept
# point are dropped; stagnating tails otherwise produce spurious tiny circles
MIN_STEP = 1e-3


def _monotone_subset(points: np.ndarray, min_step: float = MIN_STEP) -> np.ndarray:
    # keep points that continue the decrease of the residual and the
    # increase of the solution norm relative to the last kept point
    diam = float(np.linalg.norm(points.max(axis=0) - points.min(axis=0)))
    tol = min_step * diam
    keep = [0]
    for i in range(1, len(points)):
        last = points[keep[-1]]
        d = points[i] - last
        if d[0] < 0 and d[1] > 0 and np.hypot(d[0], d[1]) > tol:
            keep.append(i)
    return np.asarray(keep)


def curvature_corner(points: np.ndarray) -> int:
    """Index (0-based) of the sharpest corner of an L-curve.

    The curve is first thinned to points that move the residual down and
    the solution norm up by a non-negligible step.  The curvature at each
    interior point is that of the circle through it and its two neighbours
    (signed, so that the corner of an L traversed from the flat branch to
    the steep branch is positive).
    """
    keep = _monotone_subset(points)
    if len(keep) < 3:
        raise NoCornerError("fewer than 3 monotone L-curve points")
    P = points[keep]
    d1 = P[1:-1] - P[:-2]
    d2 = P[2:] - P[1:-1]
    d3 = P[2:] - P[:-2]
    cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    denom = np.linalg.norm(d1, axis=1) * np.linalg.norm(d2, axis=1) * np.linalg.norm(d3, axis=1)
    kappa = -2.0 * cross / denom
    if not np.any(kappa > 0):
        raise NoCornerError("L-curve never bends towards a corner")
    return int(keep[1 + int(np.argmax(kappa))])


CORNER_DETECTORS = {"curvature": curvature_corner}


def lcurve_corner(points, method: str = "curvature") -> int:
    """Corner of the L-curve ``(log phi_bar_{k+1}, log ||x_k||)``.

    Parameters
    ----------
    points : array_like, shape (K, 2)
        One row per iteration ``k = 1..K``.
    method : str
        Key of :data:`CORNER_DETECTORS`.

    Returns
    -------
    int
        The iteration ``k1`` at the corner.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must have shape (K, 2)")
    if len(pts) < 5:
        raise NoCornerError("need at least 5 points")
    if not np.all(np.isfinite(pts)):
        raise ValueError("non-finite L-curve point")
    return CORNER_DETECTORS[method](pts) + 1


def oracle_optimal(re) -> int:
    """``argmin_k RE(k)`` with ties going to the smaller ``k``."""
    re = np.asarray(re, dtype=np.float64)
    if re.size == 0 or np.all(np.isnan(re)):
        raise ValueError("no relative errors recorded")
    return int(np.nanargmin(re)) + 1
