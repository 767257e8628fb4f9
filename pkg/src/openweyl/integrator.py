"""Fixed-step 8th-order Runge-Kutta integration of the model flow.

A single stepper drives both the scalar `integrate` operation and the
vectorized trajectory-ensemble machinery in `repeller`.  The step size is
fixed (no rejection/adaptation); accuracy is certified a posteriori through
the per-step energy-drift bound of `IntegratorConfig.tolerance`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _rk8_tableau as rk8
from .model import ModelParams, PhaseState, energy, eom_array


class StepRejectionError(RuntimeError):
    """Energy drift exceeded the configured tolerance at the given step size."""


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed step size, per-step energy-drift tolerance, scheme order."""

    step: float = 0.02
    tolerance: float = 1e-10
    scheme_order: int = 8

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("step must be > 0")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "tolerance": self.tolerance,
            "scheme_order": self.scheme_order,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IntegratorConfig":
        return cls(**d)


def rk8_step(z: np.ndarray, h, lam: float, om: float) -> np.ndarray:
    """One RK8 step of (signed) size h on states of shape (..., 4).

    h may be a scalar or an array broadcastable against the batch axis,
    which lets crossing refinement advance each trajectory by its own
    substep.
    """
    h = np.asarray(h, dtype=float)
    if h.ndim > 0:
        h = h[..., None]
    k = [None] * rk8.N_STAGES
    k[0] = eom_array(z, lam, om)
    for i in range(1, rk8.N_STAGES):
        acc = rk8.A[i, 0] * k[0]
        for j in range(1, i):
            a = rk8.A[i, j]
            if a != 0.0:
                acc = acc + a * k[j]
        k[i] = eom_array(z + h * acc, lam, om)
    acc = rk8.B[0] * k[0]
    for i in range(1, rk8.N_STAGES):
        acc = acc + rk8.B[i] * k[i]
    return z + h * acc


def integrate(
    s0: PhaseState,
    params: ModelParams,
    cfg: IntegratorConfig,
    T: float,
    direction: str = "forward",
    r_escape: float | None = None,
):
    """Integrate one trajectory for duration T, returning states at step multiples.

    Returns (times, states) with states of shape (n, 4); the initial state is
    included.  Stops early if `r_escape` is given and x^2 + y^2 exceeds it
    squared.  Raises StepRejectionError when the per-step energy drift exceeds
    cfg.tolerance, which signals that the configured step is too coarse.
    """
    if T <= 0:
        raise ValueError("T must be > 0")
    if direction not in ("forward", "backward"):
        raise ValueError("direction must be 'forward' or 'backward'")
    h = cfg.step if direction == "forward" else -cfg.step
    n_steps = int(np.ceil(T / cfg.step - 1e-12))
    z = s0.as_array()
    lam, om = params.lam, params.omega
    e_prev = energy(z, params)
    scale = max(1.0, abs(e_prev))
    times = [s0.t]
    states = [z.copy()]
    r2_cap = None if r_escape is None else float(r_escape) ** 2
    for i in range(n_steps):
        z_new = rk8_step(z, h, lam, om)
        e_new = energy(z_new, params)
        if abs(e_new - e_prev) > cfg.tolerance * scale:
            raise StepRejectionError(
                f"per-step energy drift {abs(e_new - e_prev):.3e} at step "
                f"{i + 1} of size {cfg.step} exceeds tolerance; reduce the step"
            )
        e_prev = e_new
        z = z_new
        times.append(s0.t + (i + 1) * h)
        states.append(z.copy())
        if r2_cap is not None and z[0] ** 2 + z[1] ** 2 > r2_cap:
            break
    return np.array(times), np.array(states)


def propagate_linear(s0: PhaseState, params: ModelParams, t) -> np.ndarray:
    """Closed-form propagation of the lam = 0 flow (oscillator + Coriolis).

    Oracle for the integrator: at lam = 0 the equations of motion are linear,
    zdot = M z, and the exact flow is the matrix exponential expm(M t).
    Returns states of shape (len(t), 4).
    """
    from scipy.linalg import expm

    om = params.omega
    M = np.array(
        [
            [0.0, om, 1.0, 0.0],
            [-om, 0.0, 0.0, 1.0],
            [-1.0, 0.0, 0.0, om],
            [0.0, -1.0, -om, 0.0],
        ]
    )
    z0 = s0.as_array()
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return np.array([expm(M * ti) @ z0 for ti in t])
