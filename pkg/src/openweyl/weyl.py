"""Resonance box counting over an hbar sweep and the Weyl-exponent fit.

N(hbar) is the mean number of accepted resonances inside a set of
rectangular boxes in the (E_r/E_s, Gamma/E_s) plane centered around a scaled
energy, with the width window capped proportionally to hbar.  The exponent d
in N ~ hbar^{-d} is the log-log slope against 1/hbar, fitted with the same
machinery as the correlation dimension.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dimension import loglog_fit
from .quantum import SpectrumCatalog

DEFAULT_OFFSETS = tuple(np.linspace(-0.2, 0.2, 8))


@dataclass(frozen=True)
class CountingBoxes:
    """Box family in scaled (energy, width) coordinates.

    Each box b covers E_r/E_s in [center + offset_b - width/2,
    center + offset_b + width/2] and Gamma/E_s in [0, gamma_cap_factor*hbar].
    With `gamma_cap_absolute` the width cap is read in absolute units instead,
    i.e. Gamma <= gamma_cap_factor*hbar.
    """

    center_E: float = 1.8
    width_E: float = 1.0
    gamma_cap_factor: float = 1.24
    n_boxes: int = 8
    placement_offsets: tuple = DEFAULT_OFFSETS
    gamma_cap_absolute: bool = False

    def __post_init__(self):
        if self.n_boxes < 1:
            raise ValueError("n_boxes must be >= 1")
        if self.width_E <= 0:
            raise ValueError("width_E must be > 0")
        if len(self.placement_offsets) != self.n_boxes:
            raise ValueError("placement_offsets must have n_boxes entries")

    def to_dict(self) -> dict:
        return {
            "center_E": self.center_E,
            "width_E": self.width_E,
            "gamma_cap_factor": self.gamma_cap_factor,
            "n_boxes": self.n_boxes,
            "placement_offsets": list(self.placement_offsets),
            "gamma_cap_absolute": self.gamma_cap_absolute,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CountingBoxes":
        d = dict(d)
        d["placement_offsets"] = tuple(d["placement_offsets"])
        return cls(**d)


def count_box(catalog: SpectrumCatalog, boxes: CountingBoxes, E_s: float):
    """Mean accepted-resonance count over the box family.

    Returns (mean_count, per_box_counts).  An empty catalog yields zero with
    the empty flag left to the caller (the counts array is all zero).
    """
    table = catalog.scaled_table(E_s)
    e = table[:, 0]
    g = table[:, 1]
    hbar = catalog.hbar
    if boxes.gamma_cap_absolute:
        gamma_cap = boxes.gamma_cap_factor * hbar / E_s
    else:
        gamma_cap = boxes.gamma_cap_factor * hbar
    counts = []
    for off in boxes.placement_offsets:
        lo = boxes.center_E + off - boxes.width_E / 2.0
        hi = boxes.center_E + off + boxes.width_E / 2.0
        inside = (e >= lo) & (e <= hi) & (g >= 0.0) & (g <= gamma_cap)
        counts.append(int(inside.sum()))
    counts = np.array(counts)
    return float(counts.mean()), counts


@dataclass
class WeylFit:
    """Fitted exponent of N(hbar) ~ hbar^{-d}."""

    hbars: np.ndarray
    counts: np.ndarray
    d: float
    d_err: float
    intercept: float
    per_box: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "hbars": list(map(float, self.hbars)),
            "counts": list(map(float, self.counts)),
            "d": self.d,
            "d_err": self.d_err,
            "intercept": self.intercept,
        }


def fit_weyl(points) -> WeylFit:
    """Least-squares slope of ln N vs ln(1/hbar) with standard error.

    `points` is a sequence of (hbar, N) pairs with N > 0; at least 4 distinct
    hbar values are required.
    """
    pts = np.asarray([(float(h), float(n)) for h, n in points], dtype=float)
    if np.unique(pts[:, 0]).size < 4:
        raise ValueError("need at least 4 distinct hbar values")
    if np.any(pts[:, 1] <= 0):
        raise ValueError("counts must be positive for the log-log fit")
    slope, err, intercept = loglog_fit(1.0 / pts[:, 0], pts[:, 1])
    return WeylFit(
        hbars=pts[:, 0], counts=pts[:, 1], d=slope, d_err=err, intercept=intercept
    )
