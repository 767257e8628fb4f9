"""Correlation-dimension estimation and the shared log-log power-law fitter.

The correlation sum over M points is C2(s) = #{(k, l): |q_k - q_l| < s} / M^2
with the double sum running over all ordered pairs including k = l, so
C2 <= 1 and the M self-pairs contribute M/M^2.  The dimension d2 is the
slope of ln C2 vs ln s over a configured scale range.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import linregress

# exact all-pairs counting up to this many points; uniform pair subsampling above
EXACT_COUNT_LIMIT = 50_000
DEFAULT_FIT_RANGE = (1e-2, 1e-1)


class InsufficientPointsError(ValueError):
    """Too few usable scales inside the fit range."""


@dataclass
class CorrelationCurve:
    """Correlation sum C2 over a set of scales, with fit results."""

    scales: np.ndarray
    values: np.ndarray
    n_points: int
    n_pairs_sampled: int | None = None  # None: exact counting
    fit_range: tuple = DEFAULT_FIT_RANGE
    d2: float | None = None
    d2_err: float | None = None
    meta: dict = field(default_factory=dict)


def loglog_fit(x, y):
    """Least-squares slope of ln y vs ln x with its standard error.

    Returns (slope, stderr, intercept).  Shared by the dimension and the
    resonance-counting fits.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise InsufficientPointsError("need at least 2 points for a line fit")
    res = linregress(np.log(x), np.log(y))
    return float(res.slope), float(res.stderr), float(res.intercept)


def correlation_sum(
    points,
    scales,
    n_pairs: int = 20_000_000,
    seed: int = 0,
) -> CorrelationCurve:
    """Correlation sum C2(s) over the given scales.

    Exact ordered-pair counting (strict inequality |q_k - q_l| < s) for up to
    EXACT_COUNT_LIMIT points; above that the M^2 pair ensemble is subsampled
    uniformly with `n_pairs` draws and the subsample size is recorded on the
    curve.
    """
    q = np.asarray(points, dtype=float)
    if q.ndim == 1:
        q = q[:, None]
    M = q.shape[0]
    if M < 2:
        raise ValueError("need at least 2 points")
    s = np.asarray(scales, dtype=float)
    if s.size == 0:
        raise ValueError("scale list must not be empty")
    if np.any(s <= 0):
        raise ValueError("scales must be positive")
    if np.any(np.diff(s) < 0):
        raise ValueError("scales must be sorted ascending")

    if M <= EXACT_COUNT_LIMIT:
        tree = cKDTree(q)
        # count_neighbors uses <=; shift each radius down one ulp to get < s
        counts = tree.count_neighbors(tree, np.nextafter(s, -np.inf), cumulative=True)
        values = counts.astype(float) / (float(M) * float(M))
        n_sampled = None
    else:
        rng = np.random.default_rng(seed)
        hits = np.zeros(s.size, dtype=np.int64)
        chunk = 2_000_000
        remaining = int(n_pairs)
        while remaining > 0:
            m = min(chunk, remaining)
            k = rng.integers(0, M, m)
            l = rng.integers(0, M, m)
            d = np.linalg.norm(q[k] - q[l], axis=1)
            hits += (d[None, :] < s[:, None]).sum(axis=1)
            remaining -= m
        values = hits / float(n_pairs)
        n_sampled = int(n_pairs)
    return CorrelationCurve(
        scales=s.copy(), values=values, n_points=M, n_pairs_sampled=n_sampled
    )


def fit_dimension(curve: CorrelationCurve, fit_range=None):
    """Fit d2 as the log-log slope of the curve inside fit_range.

    Requires at least 5 scales with C2 > 0 inside the range.  Updates the
    curve in place and returns (d2, d2_err).
    """
    if fit_range is None:
        fit_range = curve.fit_range
    s_min, s_max = fit_range
    sel = (curve.scales >= s_min) & (curve.scales <= s_max) & (curve.values > 0)
    if sel.sum() < 5:
        raise InsufficientPointsError(
            f"only {int(sel.sum())} usable scales inside fit range {fit_range}"
        )
    slope, err, _ = loglog_fit(curve.scales[sel], curve.values[sel])
    curve.fit_range = (float(s_min), float(s_max))
    curve.d2 = slope
    curve.d2_err = err
    return slope, err


def default_scales(s_min: float = 3e-3, s_max: float = 0.3, n: int = 25) -> np.ndarray:
    """Geometric scale ladder wide enough to expose the fit window."""
    return np.geomspace(s_min, s_max, n)


def cantor_points(level: int) -> np.ndarray:
    """Left endpoints of the middle-third Cantor iterate at the given level.

    2^level points of the form sum_i a_i 3^-i with a_i in {0, 2}; a
    deterministic oracle set with correlation dimension ln 2 / ln 3.
    """
    pts = np.array([0.0])
    for i in range(1, level + 1):
        pts = np.concatenate([pts, pts + 2.0 * 3.0 ** (-i)])
    return np.sort(pts)
