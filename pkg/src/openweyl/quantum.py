"""Complex-rotated Hamiltonian in a 2D oscillator basis and its eigensolvers.

Under the coordinate rotation q -> q e^{i theta} the Hamiltonian splits into
four fixed matrices with theta-dependent prefactors,

    H(theta) = e^{-2i theta} T + e^{2i theta} V2 + e^{3i theta} V3 - omega L,

where T (kinetic), V2 (harmonic) and V3 (cubic, carries lam) are real
symmetric and L (angular momentum) is Hermitian with purely imaginary
entries.  All four are assembled from ladder-operator matrix elements in the
Cartesian product basis |n_x, n_y> truncated to polyads n_x + n_y <= n_max.

The cubic term is invariant under rotation by 120 degrees, so H(theta)
commutes with the threefold rotation generated by L.  Transforming to the
angular-momentum eigenbasis within each polyad block-diagonalizes H(theta)
into three sectors (l mod 3), which cuts the dense-eigensolve cost by an
order of magnitude; the sector solver and the plain full-matrix solver agree
to solver precision and both are exposed.

Resonances are identified by theta-trajectories: eigenvalues stationary
under changes of theta are resonances, eigenvalues rotating with the
continuum are discarded.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .model import ModelParams

DENSE_BUDGET_DEFAULT = 6000


@dataclass(frozen=True)
class BasisSpec:
    """Polyad-truncated 2D oscillator basis: states with n_x + n_y <= n_max."""

    n_max: int
    hbar: float = 1.0

    def __post_init__(self):
        if self.n_max < 0:
            raise ValueError("n_max must be >= 0")
        if self.hbar <= 0:
            raise ValueError("hbar must be > 0")

    @property
    def size(self) -> int:
        return (self.n_max + 1) * (self.n_max + 2) // 2

    def index_arrays(self):
        """(n_x, n_y) quantum numbers per flat index, polyad-major order."""
        nx, ny = [], []
        for N in range(self.n_max + 1):
            for i in range(N + 1):
                nx.append(i)
                ny.append(N - i)
        return np.array(nx), np.array(ny)

    def lookup_table(self) -> np.ndarray:
        """Map (n_x, n_y) -> flat index, -1 outside the triangle."""
        tab = -np.ones((self.n_max + 1, self.n_max + 1), dtype=np.int64)
        nx, ny = self.index_arrays()
        tab[nx, ny] = np.arange(nx.size)
        return tab

    def to_dict(self) -> dict:
        return {"n_max": self.n_max, "hbar": self.hbar}

    @classmethod
    def from_dict(cls, d: dict) -> "BasisSpec":
        return cls(**d)


def _pattern_matrix(basis: BasisSpec, patterns) -> sp.csr_matrix:
    """Assemble a sparse operator from (dx, dy, coeff(nx, ny)) patterns.

    Each pattern contributes entries <nx+dx, ny+dy| Op |nx, ny> = coeff(nx, ny)
    wherever the target state stays inside the polyad triangle.
    """
    nx, ny = basis.index_arrays()
    tab = basis.lookup_table()
    rows, cols, vals = [], [], []
    n = basis.size
    col_idx = np.arange(n)
    for dx, dy, coeff in patterns:
        tx, ty = nx + dx, ny + dy
        ok = (tx >= 0) & (ty >= 0) & (tx + ty <= basis.n_max)
        tgt = tab[tx[ok], ty[ok]]
        c = coeff(nx[ok].astype(float), ny[ok].astype(float))
        rows.append(tgt)
        cols.append(col_idx[ok])
        vals.append(np.asarray(c, dtype=complex))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def kinetic_matrix(basis: BasisSpec) -> sp.csr_matrix:
    """T = (p_x^2 + p_y^2)/2 in ladder form; real symmetric."""
    h = basis.hbar
    pat = [
        (0, 0, lambda nx, ny: (h / 2.0) * (nx + ny + 1.0)),
        (2, 0, lambda nx, ny: -(h / 4.0) * np.sqrt((nx + 1) * (nx + 2))),
        (-2, 0, lambda nx, ny: -(h / 4.0) * np.sqrt(nx * (nx - 1))),
        (0, 2, lambda nx, ny: -(h / 4.0) * np.sqrt((ny + 1) * (ny + 2))),
        (0, -2, lambda nx, ny: -(h / 4.0) * np.sqrt(ny * (ny - 1))),
    ]
    return _pattern_matrix(basis, pat)


def harmonic_matrix(basis: BasisSpec) -> sp.csr_matrix:
    """V2 = (x^2 + y^2)/2 in ladder form; real symmetric."""
    h = basis.hbar
    pat = [
        (0, 0, lambda nx, ny: (h / 2.0) * (nx + ny + 1.0)),
        (2, 0, lambda nx, ny: (h / 4.0) * np.sqrt((nx + 1) * (nx + 2))),
        (-2, 0, lambda nx, ny: (h / 4.0) * np.sqrt(nx * (nx - 1))),
        (0, 2, lambda nx, ny: (h / 4.0) * np.sqrt((ny + 1) * (ny + 2))),
        (0, -2, lambda nx, ny: (h / 4.0) * np.sqrt(ny * (ny - 1))),
    ]
    return _pattern_matrix(basis, pat)


def cubic_matrix(basis: BasisSpec, lam: float) -> sp.csr_matrix:
    """V3 = lam*(x^2 y - y^3/3); real symmetric, scales as hbar^(3/2).

    x^2 couples dn_x in {0, +-2}, y couples dn_y = +-1 and y^3 couples
    dn_y in {+-1, +-3}; matrix elements are products of the 1D ladder factors.
    """
    h = basis.hbar
    u = h / 2.0
    u32 = u**1.5

    # 1D x^2 factors including the hbar/2 scale
    def x2_0(n):
        return u * (2 * n + 1)

    def x2_p2(n):
        return u * np.sqrt((n + 1) * (n + 2))

    def x2_m2(n):
        return u * np.sqrt(n * (n - 1))

    # 1D y factors: sqrt(hbar/2) each
    su = np.sqrt(u)

    def y_p1(n):
        return su * np.sqrt(n + 1)

    def y_m1(n):
        return su * np.sqrt(n)

    # 1D y^3 factors including (hbar/2)^(3/2)
    def y3_p3(n):
        return u32 * np.sqrt((n + 1) * (n + 2) * (n + 3))

    def y3_m3(n):
        return u32 * np.sqrt(n * (n - 1) * (n - 2))

    def y3_p1(n):
        return u32 * 3.0 * (n + 1) ** 1.5

    def y3_m1(n):
        return u32 * 3.0 * n**1.5

    pat = []
    for dx, fx in ((0, x2_0), (2, x2_p2), (-2, x2_m2)):
        for dy, fy in ((1, y_p1), (-1, y_m1)):
            pat.append(
                (dx, dy, lambda nx, ny, fx=fx, fy=fy: lam * fx(nx) * fy(ny))
            )
    for dy, fy in ((3, y3_p3), (-3, y3_m3), (1, y3_p1), (-1, y3_m1)):
        pat.append((0, dy, lambda nx, ny, fy=fy: -(lam / 3.0) * fy(ny)))
    return _pattern_matrix(basis, pat)


def angular_momentum_matrix(basis: BasisSpec) -> sp.csr_matrix:
    """L = x p_y - y p_x = i hbar (a_x a_y^dag - a_x^dag a_y); Hermitian, imaginary."""
    h = basis.hbar
    pat = [
        (-1, 1, lambda nx, ny: 1j * h * np.sqrt(nx * (ny + 1))),
        (1, -1, lambda nx, ny: -1j * h * np.sqrt((nx + 1) * ny)),
    ]
    return _pattern_matrix(basis, pat)


@dataclass
class RotatedHamiltonian:
    """H(theta) with its four component matrices and parameters."""

    theta: float
    basis: BasisSpec
    params: ModelParams
    T: sp.csr_matrix
    V2: sp.csr_matrix
    V3: sp.csr_matrix
    L: sp.csr_matrix
    matrix: sp.csr_matrix

    def rotate(self, theta: float) -> "RotatedHamiltonian":
        """Re-rotate to a different angle without re-assembling components."""
        m = combine_components(self.T, self.V2, self.V3, self.L, theta, self.params.omega)
        return RotatedHamiltonian(
            theta=theta,
            basis=self.basis,
            params=self.params,
            T=self.T,
            V2=self.V2,
            V3=self.V3,
            L=self.L,
            matrix=m,
        )


def combine_components(T, V2, V3, L, theta: float, omega: float) -> sp.csr_matrix:
    """The defining combination e^{-2it}T + e^{2it}V2 + e^{3it}V3 - omega L."""
    return (
        np.exp(-2j * theta) * T
        + np.exp(2j * theta) * V2
        + np.exp(3j * theta) * V3
        - omega * L
    ).tocsr()


def assemble(theta: float, basis: BasisSpec, params: ModelParams) -> RotatedHamiltonian:
    """Build the complex-rotated Hamiltonian matrix at angle theta."""
    if not (0 <= theta < np.pi / 4):
        raise ValueError("theta must lie in [0, pi/4)")
    T = kinetic_matrix(basis)
    V2 = harmonic_matrix(basis)
    V3 = cubic_matrix(basis, params.lam)
    L = angular_momentum_matrix(basis)
    m = combine_components(T, V2, V3, L, theta, params.omega)
    return RotatedHamiltonian(
        theta=theta, basis=basis, params=params, T=T, V2=V2, V3=V3, L=L, matrix=m
    )


def lambda0_spectrum(basis: BasisSpec, params: ModelParams) -> np.ndarray:
    """Analytic spectrum at lam = 0: hbar*(N + 1) - omega*hbar*l, sorted.

    N runs over polyads 0..n_max and l over {-N, -N+2, ..., N}; equivalently
    hbar*(2 n_r + |l| + 1) - omega*hbar*l in radial labels.
    """
    vals = []
    for N in range(basis.n_max + 1):
        for l in range(-N, N + 1, 2):
            vals.append(basis.hbar * (N + 1.0) - params.omega * basis.hbar * l)
    return np.sort(np.array(vals))


# ---------------------------------------------------------------------------
# threefold-symmetry sector machinery


@dataclass
class SectorBasis:
    """Angular-momentum eigenbasis grouped into the three l mod 3 sectors."""

    transform: sp.csr_matrix  # columns: |N, l> states expressed in |n_x, n_y>
    l_values: np.ndarray  # integer l per column
    sectors: list  # three index arrays into the columns


def sector_basis(basis: BasisSpec) -> SectorBasis:
    """Diagonalize L within each polyad and group columns by l mod 3."""
    L = angular_momentum_matrix(basis)
    h = basis.hbar
    blocks = []
    l_values = []
    offset = 0
    for N in range(basis.n_max + 1):
        dim = N + 1
        sl = slice(offset, offset + dim)
        block = L[sl, sl].toarray()
        w, U = np.linalg.eigh(block)
        l_int = np.rint(w / h).astype(int)
        if not np.array_equal(np.sort(l_int), np.arange(-N, N + 1, 2)):
            raise RuntimeError(f"unexpected angular momentum ladder in polyad {N}")
        blocks.append(U)
        l_values.append(l_int)
        offset += dim
    transform = sp.block_diag(blocks, format="csr")
    l_values = np.concatenate(l_values)
    sectors = [np.nonzero(l_values % 3 == s)[0] for s in range(3)]
    return SectorBasis(transform=transform, l_values=l_values, sectors=sectors)


def sector_blocks(H: RotatedHamiltonian, sb: SectorBasis | None = None):
    """H(theta) transformed to the angular-momentum basis, split by sector.

    Returns (sb, blocks) with blocks a list of three dense complex matrices.
    """
    if sb is None:
        sb = sector_basis(H.basis)
    C = sb.transform
    Hc = (C.conj().T @ (H.matrix @ C)).tocsc()
    blocks = []
    for idx in sb.sectors:
        blocks.append(Hc[np.ix_(idx, idx)].toarray())
    return sb, blocks


def sector_leakage(H: RotatedHamiltonian, sb: SectorBasis | None = None) -> float:
    """Largest off-sector matrix element; ~0 certifies the symmetry split."""
    if sb is None:
        sb = sector_basis(H.basis)
    C = sb.transform
    Hc = (C.conj().T @ (H.matrix @ C)).tocsr()
    leak = 0.0
    sector_of = np.empty(H.basis.size, dtype=int)
    for s, idx in enumerate(sb.sectors):
        sector_of[idx] = s
    coo = Hc.tocoo()
    off = sector_of[coo.row] != sector_of[coo.col]
    if off.any():
        leak = float(np.abs(coo.data[off]).max())
    return leak


# ---------------------------------------------------------------------------
# eigensolvers


@dataclass
class DenseSolution:
    """Eigenvalues (and optional bi-orthonormalized vector pairs)."""

    eigenvalues: np.ndarray
    right_vectors: np.ndarray | None = None
    left_vectors: np.ndarray | None = None
    residual_bound: float | None = None


def _gauge_fix_pairs(vals, vr, vl):
    """Normalize ||v_R|| = 1, <Psi_L|Psi_R> = 1, largest |Psi_L| entry real > 0."""
    vr = vr / np.linalg.norm(vr, axis=0, keepdims=True)
    d = np.einsum("ij,ij->j", vl.conj(), vr)
    if np.any(np.abs(d) < 1e-300):
        raise RuntimeError("defective left/right pairing in bi-orthonormalization")
    vl = vl / d.conj()
    k = np.argmax(np.abs(vl), axis=0)
    phase = vl[k, np.arange(vl.shape[1])]
    c = phase.conj() / np.abs(phase)
    return vals, vr * c, vl * c


def eigensolve_dense(
    H: RotatedHamiltonian,
    want_vectors: bool = False,
    use_symmetry: bool = True,
    dense_budget: int = DENSE_BUDGET_DEFAULT,
    vector_window=None,
):
    """All eigenvalues of H(theta) by dense diagonalization.

    With `use_symmetry` the solve runs per threefold-symmetry sector and the
    vectors are mapped back to the Cartesian basis.  With `want_vectors`,
    right and left eigenvectors are returned bi-orthonormalized
    (<Psi_L|Psi_R> = 1) and gauge-fixed; `vector_window=(a, b)` restricts the
    stored vectors to eigenvalues with real part inside the window to bound
    memory.
    """
    n = H.basis.size
    if n > dense_budget:
        raise ValueError(
            f"basis size {n} exceeds the dense budget {dense_budget}; "
            "use eigensolve_iterative or raise the budget"
        )
    if not use_symmetry:
        if want_vectors:
            from scipy.linalg import eig as dense_eig

            vals, vl, vr = dense_eig(H.matrix.toarray(), left=True, right=True)
            vals, vr, vl = _gauge_fix_pairs(vals, vr, vl)
            sol = DenseSolution(vals, vr, vl)
        else:
            sol = DenseSolution(np.linalg.eigvals(H.matrix.toarray()))
    else:
        sb, blocks = sector_blocks(H)
        kept_vals = []
        tail_vals = []
        all_vr = []
        all_vl = []
        for idx, block in zip(sb.sectors, blocks):
            if want_vectors:
                from scipy.linalg import eig as dense_eig

                vals, vl, vr = dense_eig(block, left=True, right=True)
                if vector_window is not None:
                    keep = (vals.real >= vector_window[0]) & (
                        vals.real <= vector_window[1]
                    )
                    tail_vals.append(vals[~keep])
                    vals, vl, vr = vals[keep], vl[:, keep], vr[:, keep]
                cols = sb.transform[:, idx]
                all_vr.append(np.asarray(cols @ vr))
                all_vl.append(np.asarray(cols @ vl))
                kept_vals.append(vals)
            else:
                kept_vals.append(np.linalg.eigvals(block))
        if want_vectors:
            vals_vec = np.concatenate(kept_vals)
            vr = np.concatenate(all_vr, axis=1)
            vl = np.concatenate(all_vl, axis=1)
            vals_vec, vr, vl = _gauge_fix_pairs(vals_vec, vr, vl)
            tail = np.concatenate(tail_vals) if tail_vals else np.empty(0, complex)
            # vector-paired eigenvalues first; out-of-window values follow
            sol = DenseSolution(np.concatenate([vals_vec, tail]), vr, vl)
        else:
            sol = DenseSolution(np.concatenate(kept_vals))
    scale = abs(H.matrix).max()
    sol.residual_bound = float(1e3 * np.finfo(float).eps * scale * np.sqrt(n))
    return sol


@dataclass
class IterativeSolution:
    """Shift-invert Arnoldi result with convergence diagnostics."""

    eigenvalues: np.ndarray
    converged: np.ndarray
    center: complex
    distances: np.ndarray = None

    def __post_init__(self):
        self.distances = np.abs(self.eigenvalues - self.center)


def eigensolve_iterative(
    H: RotatedHamiltonian, center: complex, k: int, maxiter: int | None = None
) -> IterativeSolution:
    """k eigenvalues nearest `center` via sparse shift-invert Arnoldi.

    Non-convergence returns the partial result with per-eigenvalue converged
    flags instead of raising.  The `distances` diagnostic exposes
    converged-but-distant results when the shift sits in a spectral void.
    """
    from scipy.sparse.linalg import ArpackNoConvergence, eigs

    n = H.basis.size
    if k >= n - 1:
        raise ValueError("k must be well below the basis size")
    A = H.matrix.tocsc()
    try:
        vals = eigs(
            A,
            k=k,
            sigma=complex(center),
            which="LM",
            return_eigenvectors=False,
            maxiter=maxiter,
        )
        conv = np.ones(vals.size, dtype=bool)
    except ArpackNoConvergence as exc:
        vals = np.asarray(exc.eigenvalues)
        conv = np.ones(vals.size, dtype=bool)
        warnings.warn(
            f"Arnoldi converged only {vals.size} of {k} eigenvalues", stacklevel=2
        )
    order = np.argsort(np.abs(vals - center))
    return IterativeSolution(eigenvalues=vals[order], converged=conv[order], center=center)


# ---------------------------------------------------------------------------
# theta-trajectory filtering


@dataclass
class Resonance:
    """Converged resonance E_r - i Gamma/2 with theta-trajectory metadata."""

    E_r: float
    gamma: float
    theta_stability: float
    hbar: float

    @property
    def eigenvalue(self) -> complex:
        return self.E_r - 0.5j * self.gamma

    def to_dict(self) -> dict:
        return {
            "E_r": self.E_r,
            "gamma": self.gamma,
            "theta_stability": self.theta_stability,
            "hbar": self.hbar,
        }


@dataclass
class SpectrumCatalog:
    """Accepted resonances of one (hbar, theta-grid, basis) computation."""

    resonances: list
    basis: BasisSpec
    theta_grid: list
    solver: str = "dense"
    meta: dict = field(default_factory=dict)

    @property
    def hbar(self) -> float:
        return self.basis.hbar

    def eigenvalues(self) -> np.ndarray:
        return np.array([r.eigenvalue for r in self.resonances], dtype=complex)

    def scaled_table(self, E_s: float) -> np.ndarray:
        """(E_r/E_s, Gamma/E_s, theta_stability, hbar) rows."""
        return np.array(
            [
                [r.E_r / E_s, r.gamma / E_s, r.theta_stability, r.hbar]
                for r in self.resonances
            ]
        ).reshape(-1, 4)


def theta_filter(
    spectra,
    tol: float,
    basis: BasisSpec,
    match_radius: float | None = None,
    positive_im_tol: float = 1e-10,
    solver: str = "dense",
) -> SpectrumCatalog:
    """Select eigenvalues stationary across the theta grid.

    `spectra` is a sequence of (theta, eigenvalue-array) pairs, at least 3,
    sorted by theta.  Eigenvalues are chained through the grid by
    nearest-neighbor matching in the complex plane; a chain is accepted when
    its total displacement stays below `tol`.  Chains with an ambiguous hop
    (two candidates within the matching radius) are flagged and excluded, as
    are chains ending with positive imaginary part beyond solver tolerance
    (with a warning) and duplicate chains landing on one eigenvalue.
    Rotated-continuum states move with theta and fail the displacement test.
    """
    spectra = sorted(((float(t), np.asarray(v)) for t, v in spectra), key=lambda p: p[0])
    if len(spectra) < 3:
        raise ValueError("theta grid must have at least 3 values")
    thetas = [t for t, _ in spectra]
    if match_radius is None:
        match_radius = tol
    current = spectra[0][1].copy()
    displacement = np.zeros(current.size)
    ambiguous = np.zeros(current.size, dtype=bool)
    for _, nxt in spectra[1:]:
        pts = np.column_stack([nxt.real, nxt.imag])
        tree = cKDTree(pts)
        q = np.column_stack([current.real, current.imag])
        kq = min(2, nxt.size)
        dist, idx = tree.query(q, k=kq)
        if kq == 2:
            d1, d2 = dist[:, 0], dist[:, 1]
            nearest = idx[:, 0]
            ambiguous |= (d1 < match_radius) & (d2 < match_radius)
        else:
            d1 = dist.ravel()
            nearest = idx.ravel()
        displacement += d1
        current = nxt[nearest]
    accepted = (displacement < tol) & ~ambiguous
    n_ambiguous = int((ambiguous & (displacement < tol)).sum())

    # positive-imaginary artifacts
    pos_im = current.imag > positive_im_tol
    n_pos = int((accepted & pos_im).sum())
    if n_pos:
        warnings.warn(
            f"discarding {n_pos} eigenvalues with positive imaginary part",
            stacklevel=2,
        )
    accepted &= ~pos_im

    # deduplicate chains that merged onto the same final eigenvalue
    order = np.nonzero(accepted)[0]
    order = order[np.argsort(displacement[order])]
    seen = []
    resonances = []
    dedupe_tol = match_radius
    for i in order:
        e = current[i]
        if any(abs(e - s) < dedupe_tol for s in seen):
            continue
        seen.append(e)
        resonances.append(
            Resonance(
                E_r=float(e.real),
                gamma=float(max(0.0, -2.0 * e.imag)),
                theta_stability=float(displacement[i]),
                hbar=basis.hbar,
            )
        )
    resonances.sort(key=lambda r: r.E_r)
    return SpectrumCatalog(
        resonances=resonances,
        basis=basis,
        theta_grid=thetas,
        solver=solver,
        meta={
            "tol": tol,
            "match_radius": match_radius,
            "n_chains": int(spectra[0][1].size),
            "n_ambiguous": n_ambiguous,
            "n_positive_im": n_pos,
        },
    )


def compute_catalog(
    params: ModelParams,
    basis: BasisSpec,
    theta_grid,
    tol: float | None = None,
    match_radius: float | None = None,
    use_symmetry: bool = True,
    dense_budget: int = DENSE_BUDGET_DEFAULT,
) -> SpectrumCatalog:
    """Dense spectra over the theta grid followed by theta-trajectory filtering.

    The default acceptance tolerance (0.02 * E_s total displacement) keeps
    eigenvalues whose theta-trajectories have stalled, while
    rotated-continuum branches sweep ~0.1 E_s per grid hop and are rejected;
    the ambiguity radius stays at the resonance-spacing scale (1e-3 * E_s).
    """
    if tol is None:
        tol = 0.02 * params.saddle_energy
    if match_radius is None:
        match_radius = 1e-3 * params.saddle_energy
    sb = sector_basis(basis) if use_symmetry else None
    spectra = []
    for theta in theta_grid:
        H = assemble(theta, basis, params)
        if use_symmetry:
            _, blocks = sector_blocks(H, sb)
            vals = np.concatenate([np.linalg.eigvals(b) for b in blocks])
        else:
            vals = eigensolve_dense(
                H, use_symmetry=False, dense_budget=dense_budget
            ).eigenvalues
        spectra.append((theta, vals))
    return theta_filter(
        spectra, tol=tol, basis=basis, match_radius=match_radius, solver="dense"
    )
