"""Classical repeller extraction on the Poincare section.

Procedure: sample initial conditions uniformly on the section at fixed
energy, keep the ones whose trajectory stays inside the escape radius for a
survival time tau0 (forward survivors approximate the future-trapped set K+,
backward survivors the past-trapped set K-), reintegrate the survivors for
stretch*tau0 and record every crossing of x = 0 with xdot < 0.  Trajectories
that never escape during the long reintegration window are dominated by KAM
island orbits, which are not part of the repeller, and are excluded from the
recorded set by default.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .integrator import IntegratorConfig, rk8_step
from .model import ModelParams, PhaseState, SosDomain, SosPoint, sos_discriminant


@dataclass(frozen=True)
class SurvivalConfig:
    """Ensemble parameters for the survival filtering stage.

    `trapped_margin` keeps only crossings whose trajectory stays inside the
    escape radius for at least that long both before and after the crossing,
    which concentrates the recorded measure on the chaotic saddle instead of
    its stable/unstable branches; 0 records every crossing.
    """

    E: float
    tau0: float = 50.0
    stretch: float = 20.0
    r_escape: float = 20.0
    n_samples: int = 200_000
    seed: int = 20260809
    exclude_nonescaping: bool = True
    trapped_margin: float = 12.0

    def __post_init__(self):
        if self.stretch < 1:
            raise ValueError("stretch must be >= 1")
        if self.tau0 <= 0:
            raise ValueError("tau0 must be > 0")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.trapped_margin < 0:
            raise ValueError("trapped_margin must be >= 0")

    def validate(self, params: ModelParams):
        if self.r_escape <= params.saddle_distance:
            raise ValueError(
                f"r_escape={self.r_escape} must exceed the saddle distance "
                f"{params.saddle_distance:.3f}"
            )

    def to_dict(self) -> dict:
        return {
            "E": self.E,
            "tau0": self.tau0,
            "stretch": self.stretch,
            "r_escape": self.r_escape,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "exclude_nonescaping": self.exclude_nonescaping,
            "trapped_margin": self.trapped_margin,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SurvivalConfig":
        return cls(**d)


@dataclass
class RepellerSet:
    """SOS representation of the repeller, axes scaled to (0, 1).

    `points` carries SosPoint records in scaled coordinates; `domain` holds
    the affine window used for scaling so unscaled coordinates can be
    recovered.  `stats` records survivor counts and exclusions.
    """

    points: list
    E: float
    provenance: SurvivalConfig
    domain: SosDomain = None
    stats: dict = field(default_factory=dict)

    def scaled_array(self) -> np.ndarray:
        """Points as an (n, 2) array of scaled (y, py)."""
        return np.array([[p.y, p.py] for p in self.points], dtype=float).reshape(-1, 2)

    def unscaled_array(self) -> np.ndarray:
        """Points as an (n, 2) array in physical (y, py) coordinates."""
        a = self.scaled_array()
        y, py = self.domain.unscale(a[:, 0], a[:, 1])
        return np.column_stack([y, py])


def _sample_ics_array(cfg: SurvivalConfig, params: ModelParams) -> np.ndarray:
    """Uniform (y, py) samples inside the SOS window, as an (n, 4) state array."""
    dom = SosDomain.for_energy(cfg.E, params)
    rng = np.random.default_rng(cfg.seed)
    out = np.empty((cfg.n_samples, 4), dtype=float)
    filled = 0
    while filled < cfg.n_samples:
        m = max(4096, 2 * (cfg.n_samples - filled))
        y = rng.uniform(dom.y_min, dom.y_max, m)
        py = rng.uniform(-dom.py_max, dom.py_max, m)
        disc = sos_discriminant(y, py, cfg.E, params)
        ok = disc > 0.0
        k = min(int(ok.sum()), cfg.n_samples - filled)
        yk = y[ok][:k]
        pyk = py[ok][:k]
        px = -params.omega * yk - np.sqrt(disc[ok][:k])
        out[filled : filled + k, 0] = 0.0
        out[filled : filled + k, 1] = yk
        out[filled : filled + k, 2] = px
        out[filled : filled + k, 3] = pyk
        filled += k
    return out


def sample_sos_initial_conditions(cfg: SurvivalConfig, params: ModelParams):
    """Uniform random initial conditions on the section at energy cfg.E.

    Deterministic per cfg.seed.  Every returned state has x = 0, energy
    exactly cfg.E up to rounding, and xdot < 0.
    """
    z = _sample_ics_array(cfg, params)
    return [PhaseState.from_array(z[i]) for i in range(z.shape[0])]


def _survive_mask(
    z0: np.ndarray,
    tau: float,
    direction: str,
    r_escape: float,
    icfg: IntegratorConfig,
    lam: float,
    om: float,
) -> np.ndarray:
    """Boolean mask of trajectories staying inside r_escape for time tau."""
    h = icfg.step if direction == "forward" else -icfg.step
    n_steps = int(np.ceil(tau / icfg.step - 1e-12))
    n = z0.shape[0]
    alive = np.ones(n, dtype=bool)
    idx = np.arange(n)
    z = z0.copy()
    r2_cap = r_escape**2
    for _ in range(n_steps):
        z = rk8_step(z, h, lam, om)
        r2 = z[:, 0] ** 2 + z[:, 1] ** 2
        esc = r2 > r2_cap
        if esc.any():
            alive[idx[esc]] = False
            keep = ~esc
            z = z[keep]
            idx = idx[keep]
        if idx.size == 0:
            break
    return alive


def survivors(
    ics,
    direction: str,
    cfg: SurvivalConfig,
    params: ModelParams,
    icfg: IntegratorConfig,
):
    """Subset of `ics` whose trajectory stays within r_escape for time tau0."""
    if isinstance(ics, np.ndarray):
        z0 = ics.reshape(-1, 4).astype(float)
        mask = _survive_mask(
            z0, cfg.tau0, direction, cfg.r_escape, icfg, params.lam, params.omega
        )
        return z0[mask]
    z0 = np.array([s.as_array() for s in ics], dtype=float).reshape(-1, 4)
    mask = _survive_mask(
        z0, cfg.tau0, direction, cfg.r_escape, icfg, params.lam, params.omega
    )
    return [s for s, ok in zip(ics, mask) if ok]


def _refine_crossings(
    z_pre: np.ndarray, h: float, lam: float, om: float, atol: float = 1e-12
):
    """Locate x = 0 within one step from the pre-step states, vectorized.

    z_pre rows bracket a sign change of x over the step h.  Returns
    (tau, z_cross) with tau the substep offsets.  Safeguarded Newton in the
    normalized substep u = tau/h, with bisection fallback; the refined states
    satisfy |x| < 1e-10 by a wide margin.
    """
    m = z_pre.shape[0]
    x0 = z_pre[:, 0]
    z_end = rk8_step(z_pre, h, lam, om)
    x1 = z_end[:, 0]
    u_lo = np.zeros(m)
    u_hi = np.ones(m)
    f_lo = x0.copy()
    u = x0 / (x0 - x1)
    u = np.clip(u, 1e-6, 1.0 - 1e-6)
    z_u = None
    for _ in range(80):
        z_u = rk8_step(z_pre, u * h, lam, om)
        f = z_u[:, 0]
        done = np.abs(f) < atol
        if done.all():
            break
        same = (f > 0) == (f_lo > 0)
        u_lo = np.where(same, u, u_lo)
        u_hi = np.where(same, u_hi, u)
        xdot = z_u[:, 2] + om * z_u[:, 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            u_newton = u - f / (xdot * h)
        inside = np.isfinite(u_newton) & (u_newton > u_lo) & (u_newton < u_hi)
        u_next = np.where(inside, u_newton, 0.5 * (u_lo + u_hi))
        u = np.where(done, u, u_next)
    return u * h, z_u


def _record_crossings(
    z0: np.ndarray,
    total_time: float,
    direction: str,
    r_escape: float,
    icfg: IntegratorConfig,
    lam: float,
    om: float,
):
    """Advance survivors, recording section crossings until escape.

    Returns (ys, pys, ts, traj_idx, t_escape): crossing coordinates with
    xdot < 0, the signed crossing times, the source trajectory of each
    crossing, and per-trajectory escape times (inf if still inside when the
    window closed).
    """
    h = icfg.step if direction == "forward" else -icfg.step
    n_steps = int(np.ceil(total_time / icfg.step - 1e-12))
    n = z0.shape[0]
    t_escape = np.full(n, np.inf)
    idx = np.arange(n)
    z = z0.copy()
    r2_cap = r_escape**2
    ys, pys, ts, owners = [], [], [], []
    t = 0.0
    for k in range(n_steps):
        z_new = rk8_step(z, h, lam, om)
        crossed = z[:, 0] * z_new[:, 0] < 0.0
        if crossed.any():
            sub = np.nonzero(crossed)[0]
            tau, z_c = _refine_crossings(z[sub], h, lam, om)
            xdot_c = z_c[:, 2] + om * z_c[:, 1]
            neg = xdot_c < 0.0
            if neg.any():
                ys.append(z_c[neg, 1])
                pys.append(z_c[neg, 3])
                ts.append(t + tau[neg])
                owners.append(idx[sub[neg]])
        z = z_new
        t = (k + 1) * h
        r2 = z[:, 0] ** 2 + z[:, 1] ** 2
        esc = r2 > r2_cap
        if esc.any():
            t_escape[idx[esc]] = abs(t)
            keep = ~esc
            z = z[keep]
            idx = idx[keep]
        if idx.size == 0:
            break
    if ys:
        ys = np.concatenate(ys)
        pys = np.concatenate(pys)
        ts = np.concatenate(ts)
        owners = np.concatenate(owners)
    else:
        ys = np.empty(0)
        pys = np.empty(0)
        ts = np.empty(0)
        owners = np.empty(0, dtype=int)
    return ys, pys, ts, owners, t_escape


def build_repeller(
    cfg: SurvivalConfig, params: ModelParams, icfg: IntegratorConfig
) -> RepellerSet:
    """Run the full survival procedure and assemble the repeller's SOS set.

    Crossings are kept when (i) the trajectory escapes within the
    reintegration window (never-escaping orbits are island-trapped, not part
    of the repeller), (ii) both trapped-time margins are met, and (iii) the
    point lies inside the bounded section window.  Output coordinates are
    scaled to (0, 1).
    """
    cfg.validate(params)
    dom = SosDomain.for_energy(cfg.E, params)
    lam, om = params.lam, params.omega
    ics = _sample_ics_array(cfg, params)
    points = []
    stats = {"n_samples": cfg.n_samples}
    for direction, branch in (("forward", "K+"), ("backward", "K-")):
        mask = _survive_mask(
            ics, cfg.tau0, direction, cfg.r_escape, icfg, lam, om
        )
        surv = ics[mask]
        stats[f"survivors_{branch}"] = int(mask.sum())
        if surv.shape[0] == 0:
            continue
        ys, pys, ts, owners, t_escape = _record_crossings(
            surv, cfg.stretch * cfg.tau0, direction, cfg.r_escape, icfg, lam, om
        )
        stats[f"nonescaping_{branch}"] = int(np.isinf(t_escape).sum())
        keep = np.ones(ys.shape[0], dtype=bool)
        if cfg.exclude_nonescaping:
            keep &= np.isfinite(t_escape[owners])
        if cfg.trapped_margin > 0:
            t_abs = np.abs(ts)
            life = t_escape[owners]
            keep &= t_abs >= cfg.trapped_margin
            keep &= np.where(
                np.isfinite(life), t_abs <= life - cfg.trapped_margin, True
            )
        ys, pys, ts = ys[keep], pys[keep], ts[keep]
        u, v = dom.scale(ys, pys)
        inside = (u >= 0.0) & (u <= 1.0) & (v >= 0.0) & (v <= 1.0)
        stats[f"clipped_{branch}"] = int((~inside).sum())
        points.extend(
            SosPoint(float(ui), float(vi), float(ti), branch)
            for ui, vi, ti in zip(u[inside], v[inside], ts[inside])
        )
    stats["n_points"] = len(points)
    if not points:
        warnings.warn(
            "empty repeller set: tau0 may be too large or n_samples too small",
            stacklevel=2,
        )
    return RepellerSet(points=points, E=cfg.E, provenance=cfg, domain=dom, stats=stats)
