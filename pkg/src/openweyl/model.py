"""Rotating Henon-Heiles model: Hamiltonian, equations of motion, SOS geometry.

The Hamiltonian is

    H = (px^2 + py^2)/2 + (x^2 + y^2)/2 + lam*(x^2*y - y^3/3) - om*(x*py - y*px)

in dimensionless units.  The Coriolis-like term breaks time reversal and
prevents defining a potential energy surface; the effective zero-velocity
surface is U_eff = (1 - om^2)*(x^2 + y^2)/2 + lam*(x^2*y - y^3/3), whose three
saddle points sit at distance (1 - om^2)/lam from the origin and share the
energy (1 - om^2)^3 / (6*lam^2).

All classical and quantum modules share the Poincare section x = 0, xdot < 0,
handled here by `sos_momentum` and the `SosDomain` geometry helper.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq


@dataclass(frozen=True)
class ModelParams:
    """Model parameters: cubic coupling, rotation frequency, effective hbar."""

    lam: float = 0.1
    omega: float = 0.1
    hbar: float = 1.0

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be > 0")
        if self.omega < 0:
            raise ValueError("omega must be >= 0")
        if self.hbar <= 0:
            raise ValueError("hbar must be > 0")

    @property
    def saddle_energy(self) -> float:
        """Energy of the three zero-velocity-surface saddle points."""
        return (1.0 - self.omega**2) ** 3 / (6.0 * self.lam**2)

    @property
    def saddle_distance(self) -> float:
        """Distance of the saddles from the origin."""
        return (1.0 - self.omega**2) / self.lam

    def to_dict(self) -> dict:
        return {"lam": self.lam, "omega": self.omega, "hbar": self.hbar}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        return cls(**d)


@dataclass
class PhaseState:
    """A point (x, y, px, py) in phase space at time t."""

    x: float
    y: float
    px: float
    py: float
    t: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.px, self.py], dtype=float)

    @classmethod
    def from_array(cls, z, t: float = 0.0) -> "PhaseState":
        return cls(float(z[0]), float(z[1]), float(z[2]), float(z[3]), t)


@dataclass
class SosPoint:
    """An intersection with the section x = 0, xdot < 0 at fixed energy.

    `branch` records which survivor set produced the point: "K+" for
    future-trapped (forward survivors), "K-" for past-trapped.
    """

    y: float
    py: float
    t_cross: float
    branch: str


def energy(state, params: ModelParams):
    """Total energy of a phase-space state.

    Accepts a PhaseState or an array of shape (..., 4); vectorized in the
    latter case.
    """
    if isinstance(state, PhaseState):
        z = state.as_array()
        x, y, px, py = z
    else:
        z = np.asarray(state, dtype=float)
        x, y, px, py = z[..., 0], z[..., 1], z[..., 2], z[..., 3]
    lam, om = params.lam, params.omega
    return (
        0.5 * (px**2 + py**2)
        + 0.5 * (x**2 + y**2)
        + lam * (x**2 * y - y**3 / 3.0)
        - om * (x * py - y * px)
    )


def eom(state, params: ModelParams):
    """Hamiltonian phase velocity (xdot, ydot, pxdot, pydot).

    Derived from H: xdot = px + om*y, ydot = py - om*x,
    pxdot = -x - 2*lam*x*y + om*py, pydot = -y - lam*(x^2 - y^2) - om*px.
    Accepts a PhaseState, a length-4 array, or an (n, 4) batch.
    """
    if isinstance(state, PhaseState):
        z = state.as_array()
    else:
        z = np.asarray(state, dtype=float)
    return eom_array(z, params.lam, params.omega)


def eom_array(z: np.ndarray, lam: float, om: float) -> np.ndarray:
    """Vectorized equations of motion on an array of shape (..., 4)."""
    x, y, px, py = z[..., 0], z[..., 1], z[..., 2], z[..., 3]
    out = np.empty_like(z)
    out[..., 0] = px + om * y
    out[..., 1] = py - om * x
    out[..., 2] = -x - 2.0 * lam * x * y + om * py
    out[..., 3] = -y - lam * (x**2 - y**2) - om * px
    return out


def effective_potential_on_axis(y, params: ModelParams):
    """Zero-velocity-surface value U_eff(0, y) along the section plane x = 0."""
    y = np.asarray(y, dtype=float)
    return 0.5 * (1.0 - params.omega**2) * y**2 - params.lam * y**3 / 3.0


def sos_discriminant(y, py, E: float, params: ModelParams):
    """Discriminant of the px quadratic on the section; >= 0 inside the SOS.

    Equals 2*(E - U_eff(0, y)) - py^2; its zero locus is the bounding curve
    of the section.
    """
    y = np.asarray(y, dtype=float)
    py = np.asarray(py, dtype=float)
    return 2.0 * (E - effective_potential_on_axis(y, params)) - py**2


def sos_momentum(y, py, E: float, params: ModelParams):
    """Solve px on the section x = 0 at energy E, orientation xdot < 0.

    Returns px (float or array) with NaN marking out-of-bounds points (negative
    discriminant).  Out-of-bounds is a value, not an error.  The returned root
    always satisfies px + om*y = -sqrt(disc) <= 0.
    """
    disc = sos_discriminant(y, py, E, params)
    y = np.asarray(y, dtype=float)
    with np.errstate(invalid="ignore"):
        px = -params.omega * y - np.sqrt(disc)
    if np.ndim(px) == 0:
        return float(px)
    return px


def _axis_turning_point(E: float, params: ModelParams) -> float:
    """Inner (negative-y) turning point of U_eff(0, y) = E."""
    f = lambda y: effective_potential_on_axis(y, params) - E
    lo = -1.0
    while f(lo) < 0:
        lo *= 2.0
        if lo < -1e6:
            raise RuntimeError("failed to bracket the inner turning point")
    return brentq(f, lo, 0.0, xtol=1e-14, rtol=1e-15)


def _axis_outer_limit(E: float, params: ModelParams) -> float:
    """Positive-y end of the section window.

    Below the saddle energy the window closes at the outer turning point of
    U_eff(0, y) = E; at and above it the escape channel is open and the
    window is capped at the on-section saddle coordinate.
    """
    y_sad = params.saddle_distance
    if E >= params.saddle_energy:
        return y_sad
    f = lambda y: effective_potential_on_axis(y, params) - E
    return brentq(f, 0.0, y_sad, xtol=1e-14, rtol=1e-15)


@dataclass(frozen=True)
class SosDomain:
    """Bounded window of the section used for sampling and axis scaling.

    The section's energetically allowed region at E > E_s opens into the
    escape channel along +y, so a finite window is fixed by capping y at the
    on-section saddle coordinate y = (1 - om^2)/lam.  Within the window the
    allowed band is |py| <= sqrt(2*(E - U_eff(0, y))).  Axis scaling maps
    y in [y_min, y_max] and py in [-py_max, py_max] to (0, 1) for comparison
    between classical and quantum sections.
    """

    E: float
    y_min: float
    y_max: float
    py_max: float

    @classmethod
    def for_energy(cls, E: float, params: ModelParams) -> "SosDomain":
        y_min = _axis_turning_point(E, params)
        y_max = _axis_outer_limit(E, params)
        py_max = math.sqrt(2.0 * E)
        return cls(E=E, y_min=y_min, y_max=y_max, py_max=py_max)

    def contains(self, y, py, params: ModelParams):
        inside = sos_discriminant(y, py, self.E, params) > 0.0
        return inside & (np.asarray(y) <= self.y_max)

    def scale(self, y, py):
        """Map (y, py) to the (0, 1) x (0, 1) plot frame."""
        u = (np.asarray(y, dtype=float) - self.y_min) / (self.y_max - self.y_min)
        v = (np.asarray(py, dtype=float) + self.py_max) / (2.0 * self.py_max)
        return u, v

    def unscale(self, u, v):
        """Inverse of `scale`."""
        y = self.y_min + np.asarray(u, dtype=float) * (self.y_max - self.y_min)
        py = -self.py_max + np.asarray(v, dtype=float) * (2.0 * self.py_max)
        return y, py

    def to_dict(self) -> dict:
        return {
            "E": self.E,
            "y_min": self.y_min,
            "y_max": self.y_max,
            "py_max": self.py_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SosDomain":
        return cls(E=d["E"], y_min=d["y_min"], y_max=d["y_max"], py_max=d["py_max"])


def sos_bounding_curve(E: float, params: ModelParams, n: int = 512):
    """Bounding curve of the section window at energy E.

    Returns (y, py_upper, py_lower) arrays over the domain's y range; the
    curve is the zero locus of the discriminant, py = +-sqrt(2*(E - U_eff)).
    """
    dom = SosDomain.for_energy(E, params)
    y = np.linspace(dom.y_min, dom.y_max, n)
    band = np.sqrt(np.maximum(2.0 * (E - effective_potential_on_axis(y, params)), 0.0))
    return y, band, -band
