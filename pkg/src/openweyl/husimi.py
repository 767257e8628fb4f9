"""Energy-averaged Husimi function on the Poincare section (quantum SOS).

Each section point (y, p_y) is completed to a 4D phase-space point by fixing
x = 0 and solving p_x from the classical Hamiltonian at the reference energy
(points outside the allowed region are masked).  A coherent state |Omega> is
planted there and the averaged Husimi value is the resolvent sum over the
selected resonance states,

    -(1/pi) * Im sum_i  <Omega|Psi_R^(i)> <Psi_L^(i)|Omega>
                        ------------------------------------ ,
                          (E - E_i) <Psi_L^(i)|Psi_R^(i)>

with the complex rotation operator in its lowest-order (diagonal)
approximation.  The expression is exactly invariant under independent
rescalings of the left and right eigenvectors; in the time-reversal-symmetric
limit it reduces to the bilinear left-state pairing of the complex-scaling
literature (the left eigenvectors here satisfy Psi_L = P conj(Psi_R) with P
the x-parity, so both forms coincide up to that symmetry's breaking), and at
zero coupling it reduces term by term to Lorentzian-weighted oscillator
Husimi densities.  A "bilinear" pairing mode is kept as a sensitivity knob.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .model import ModelParams, SosDomain, sos_momentum
from .quantum import BasisSpec


@dataclass(frozen=True)
class HusimiConfig:
    """Selection and mesh parameters for the averaged-Husimi section."""

    E0: float = 1.8  # reference energy in units of the saddle energy
    n_each_side: int = 20
    gamma_cut: float | None = None  # scaled width cutoff; None -> 3x median
    grid_shape: tuple = (200, 200)  # (n_y, n_py) mesh over the scaled window
    theta: float = 0.12  # matches the top of the default source-spectra grid
    r_theta_mode: str = "identity"  # or "diagonal-phase" (sensitivity knob)
    pairing: str = "resolvent"  # or "bilinear" (sensitivity knob)

    def __post_init__(self):
        if self.n_each_side < 1:
            raise ValueError("n_each_side must be >= 1")
        if self.gamma_cut is not None and self.gamma_cut <= 0:
            raise ValueError("gamma_cut must be > 0")
        if self.r_theta_mode not in ("identity", "diagonal-phase"):
            raise ValueError("unknown r_theta_mode")
        if self.pairing not in ("resolvent", "bilinear"):
            raise ValueError("unknown pairing")

    def to_dict(self) -> dict:
        return {
            "E0": self.E0,
            "n_each_side": self.n_each_side,
            "gamma_cut": self.gamma_cut,
            "grid_shape": list(self.grid_shape),
            "theta": self.theta,
            "r_theta_mode": self.r_theta_mode,
            "pairing": self.pairing,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HusimiConfig":
        d = dict(d)
        d["grid_shape"] = tuple(d["grid_shape"])
        return cls(**d)


@dataclass
class ResonanceStates:
    """Selected resonance eigenvalues with left/right eigenvector columns."""

    eigenvalues: np.ndarray  # complex, absolute units
    left_vectors: np.ndarray  # (basis.size, k)
    right_vectors: np.ndarray  # (basis.size, k)
    basis: BasisSpec
    theta: float
    meta: dict = field(default_factory=dict)


@dataclass
class HusimiGrid:
    """Averaged Husimi values on the scaled section mesh.

    `values` has shape grid_shape = (n_y, n_py) indexed [i, j] for the cell
    centered at (u_i, v_j) in the (0,1)^2 frame; `mask` is True outside the
    energetically allowed region, where values are undefined (NaN).
    """

    values: np.ndarray
    mask: np.ndarray
    u_centers: np.ndarray
    v_centers: np.ndarray
    domain: SosDomain
    config: HusimiConfig
    meta: dict = field(default_factory=dict)


def coherent_amplitudes_1d(alpha: np.ndarray, n_top: int) -> np.ndarray:
    """<n|alpha> for n = 0..n_top, including the e^{-|alpha|^2/2} factor.

    Stable recurrence <n+1|alpha> = alpha <n|alpha> / sqrt(n+1); magnitudes
    stay below 1 throughout.  alpha may be any shape; output appends an axis.
    """
    alpha = np.asarray(alpha, dtype=complex)
    out = np.empty(alpha.shape + (n_top + 1,), dtype=complex)
    out[..., 0] = np.exp(-0.5 * np.abs(alpha) ** 2)
    for n in range(n_top):
        out[..., n + 1] = out[..., n] * alpha / np.sqrt(n + 1.0)
    return out


def coherent_overlap(n_pair, omega_point, hbar: float) -> complex:
    """<n_x, n_y | Omega> for a 4D coherent state at (x, y, px, py).

    Product of 1D overlaps with alpha_x = (x + i px)/sqrt(2 hbar) and
    alpha_y = (y + i py)/sqrt(2 hbar).
    """
    nx, ny = n_pair
    x, y, px, py = omega_point
    ax = (x + 1j * px) / np.sqrt(2.0 * hbar)
    ay = (y + 1j * py) / np.sqrt(2.0 * hbar)
    cx = coherent_amplitudes_1d(np.array(ax), nx)[..., -1]
    cy = coherent_amplitudes_1d(np.array(ay), ny)[..., -1]
    return complex(cx * cy)


def coherent_matrix(basis: BasisSpec, x, y, px, py) -> np.ndarray:
    """Coherent-state coefficient vectors for a batch of phase-space points.

    Returns (m, basis.size) with rows <n|Omega_j> over the flat basis order.
    """
    hbar = basis.hbar
    x = np.atleast_1d(np.asarray(x, dtype=float))
    ax = (x + 1j * np.atleast_1d(px)) / np.sqrt(2.0 * hbar)
    ay = (np.atleast_1d(y) + 1j * np.atleast_1d(py)) / np.sqrt(2.0 * hbar)
    Ax = coherent_amplitudes_1d(ax, basis.n_max)
    Ay = coherent_amplitudes_1d(ay, basis.n_max)
    nx, ny = basis.index_arrays()
    return Ax[:, nx] * Ay[:, ny]


def select_resonances(resonances, E0_abs: float, E_s: float, cfg: HusimiConfig):
    """Pick n_each_side closest accepted resonances per side of E0, width-capped.

    `resonances` is a list with E_r and gamma attributes in absolute units.
    The width cutoff is cfg.gamma_cut (scaled by E_s); when None it defaults
    to 3x the median scaled width of the uncapped closest-2n selection.
    Returns (selected list, gamma_cut_used, warn_flag).
    """
    res = sorted(resonances, key=lambda r: r.E_r)
    if not res:
        return [], None, True

    def closest(pool):
        below = [r for r in pool if r.E_r < E0_abs]
        above = [r for r in pool if r.E_r >= E0_abs]
        below = sorted(below, key=lambda r: E0_abs - r.E_r)[: cfg.n_each_side]
        above = sorted(above, key=lambda r: r.E_r - E0_abs)[: cfg.n_each_side]
        return below + above

    gamma_cut = cfg.gamma_cut
    if gamma_cut is None:
        first = closest(res)
        med = float(np.median([r.gamma / E_s for r in first])) if first else 0.0
        gamma_cut = 3.0 * med if med > 0 else None
    pool = res if gamma_cut is None else [r for r in res if r.gamma / E_s < gamma_cut]
    sel = closest(pool)
    warn = len(sel) < 2 * cfg.n_each_side
    if warn:
        warnings.warn(
            f"only {len(sel)} of {2 * cfg.n_each_side} requested resonances "
            "available for the Husimi average",
            stacklevel=2,
        )
    return sel, gamma_cut, warn


def _r_theta_diagonal(basis: BasisSpec, theta: float, mode: str) -> np.ndarray | None:
    """Diagonal lowest-order treatment of the rotation operator.

    "identity" treats R(theta) as 1 on the truncated basis; "diagonal-phase"
    applies the heuristic per-state phase e^{i (n_x + n_y + 1) theta} for
    sensitivity checks.
    """
    if mode == "identity":
        return None
    nx, ny = basis.index_arrays()
    return np.exp(1j * theta * (nx + ny + 1.0))


def averaged_husimi(
    states: ResonanceStates,
    cfg: HusimiConfig,
    params: ModelParams,
    chunk: int = 2048,
) -> HusimiGrid:
    """Evaluate the energy-averaged Husimi function on the section mesh."""
    E_s = params.saddle_energy
    E_ref = cfg.E0 * E_s
    basis = states.basis
    dom = SosDomain.for_energy(E_ref, params)
    n_u, n_v = cfg.grid_shape
    u = (np.arange(n_u) + 0.5) / n_u
    v = (np.arange(n_v) + 0.5) / n_v
    U, V = np.meshgrid(u, v, indexing="ij")
    Y, PY = dom.unscale(U, V)
    PX = sos_momentum(Y, PY, E_ref, params)
    over_cap = Y > dom.y_max
    mask = ~np.isfinite(PX) | over_cap

    W = states.left_vectors
    V = states.right_vectors
    diag = _r_theta_diagonal(basis, states.theta, cfg.r_theta_mode)
    if diag is not None:
        W = W * diag[:, None]
        V = V * diag[:, None]
    pairing_norm = np.einsum("ij,ij->j", W.conj(), V)
    if np.any(np.abs(pairing_norm) < 1e-300):
        raise ValueError("defective left/right pairing in the selected states")

    values = np.full(U.shape, np.nan)
    flat_idx = np.nonzero(~mask.ravel())[0]
    yf = Y.ravel()[flat_idx]
    pyf = PY.ravel()[flat_idx]
    pxf = PX.ravel()[flat_idx]
    out = np.empty(flat_idx.size)
    if cfg.pairing == "resolvent":
        denom = -1.0 / ((E_ref - states.eigenvalues) * pairing_norm)
    else:
        denom = 1.0 / (states.eigenvalues - E_ref)
    for start in range(0, flat_idx.size, chunk):
        sl = slice(start, start + chunk)
        om = coherent_matrix(basis, 0.0, yf[sl], pxf[sl], pyf[sl])
        if cfg.pairing == "resolvent":
            A = om.conj() @ V  # <Omega|Psi_R>
            B = om @ W.conj()  # <Psi_L|Omega>
        else:
            A = om @ W  # bilinear legacy pairing: w^T Omega
            B = om.conj() @ W  # w^T Omega_bar
        out[start : start + om.shape[0]] = (1.0 / np.pi) * ((A * B) @ denom).imag
    values.ravel()[flat_idx] = out
    return HusimiGrid(
        values=values,
        mask=mask,
        u_centers=u,
        v_centers=v,
        domain=dom,
        config=cfg,
        meta={
            "n_states": int(states.eigenvalues.size),
            "theta": states.theta,
            **states.meta,
        },
    )


def repeller_overlap_score(
    grid: HusimiGrid, repeller_points: np.ndarray, epsilon_cells: float = 2.0
):
    """Fraction of Husimi mass within epsilon of any repeller point.

    `repeller_points` are scaled (0,1)^2 coordinates.  Mass is the
    positive part of the grid values (tiny negative residuals of the finite
    state sum carry no mass).  Returns (score, baseline) where baseline is
    the same fraction for a uniform density over the unmasked cells, so
    score/baseline > 1 quantifies localization on the repeller.
    """
    pts = np.asarray(repeller_points, dtype=float).reshape(-1, 2)
    if pts.shape[0] == 0:
        raise ValueError("empty repeller point set")
    cell = 1.0 / max(grid.values.shape)
    eps = epsilon_cells * cell
    uu, vv = np.meshgrid(grid.u_centers, grid.v_centers, indexing="ij")
    unmasked = ~grid.mask
    centers = np.column_stack([uu[unmasked], vv[unmasked]])
    tree = cKDTree(pts)
    d, _ = tree.query(centers, k=1)
    near = d <= eps
    mass = np.clip(grid.values[unmasked], 0.0, None)
    total = mass.sum()
    if total <= 0:
        raise ValueError("grid carries no positive mass")
    score = float(mass[near].sum() / total)
    baseline = float(near.mean())
    return score, baseline
