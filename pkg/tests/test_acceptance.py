"""Acceptance battery: production-scale checks printed one line per criterion.

Run with `pytest tests/test_acceptance.py -s`; the heavy fixture executes the
full pipeline (classical ensemble, hbar sweep, Husimi section) once into a
temporary directory and the criteria read its artifacts.  Expected runtime is
roughly an hour single-core.
"""

import math
import time

import numpy as np
import pytest

from openweyl.artifacts import read_json
from openweyl.dimension import cantor_points, correlation_sum, default_scales, fit_dimension
from openweyl.husimi import HusimiConfig, ResonanceStates, averaged_husimi
from openweyl.integrator import IntegratorConfig, integrate, propagate_linear
from openweyl.model import ModelParams, PhaseState, energy, sos_momentum
from openweyl.pipeline import RunConfig, run_pipeline
from openweyl.quantum import (
    BasisSpec,
    assemble,
    eigensolve_dense,
    eigensolve_iterative,
    lambda0_spectrum,
)
from openweyl.repeller import SurvivalConfig, _sample_ics_array
from openweyl.weyl import fit_weyl

RESULTS = []


def report(name, ok, detail):
    line = f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} ({detail})"
    RESULTS.append(line)
    print("\n" + line)
    return ok


@pytest.fixture(scope="session", autouse=True)
def summary_printer():
    yield
    if RESULTS:
        print("\n" + "=" * 72)
        for line in RESULTS:
            print(line)
        print("=" * 72)


PRIMARY_SWEEP = (0.90, 0.92, 0.94, 0.96, 0.98, 1.00)
FALLBACK_SWEEP = (0.95, 0.96, 0.97, 0.98, 0.99, 1.00)


@pytest.fixture(scope="session")
def production_run(tmp_path_factory):
    from openweyl.pipeline import WeylStageConfig

    out = tmp_path_factory.mktemp("acceptance_run")
    cfg = RunConfig(
        output_dir=str(out),
        # union of the primary and fallback hbar grids; criteria refit subsets
        weyl=WeylStageConfig(
            hbar_sweep=tuple(sorted(set(PRIMARY_SWEEP) | set(FALLBACK_SWEEP)))
        ),
    )
    cfg.classical = SurvivalConfig(E=1.8 * cfg.model.saddle_energy, n_samples=1_200_000)
    t0 = time.time()
    run_pipeline("all", cfg)
    print(f"\n[production pipeline finished in {time.time() - t0:.0f} s]")
    return cfg


# ---------------------------------------------------------------------------
# criteria that need the production run


def test_classical_fractal_dimension(production_run):
    d = read_json(f"{production_run.output_dir}/dimension.json")
    ok = d["n_points"] >= 20_000 and 1.39 <= d["d2"] <= 1.49
    detail = f"n={d['n_points']}, d2={d['d2']:.4f}+-{d['d2_err']:.4f}, window [1.39, 1.49]"
    assert report("classical-fractal-dimension", ok, detail)


def test_fractal_weyl_exponent(production_run):
    from openweyl.artifacts import read_csv

    w = read_json(f"{production_run.output_dir}/weyl.json")
    d2 = read_json(f"{production_run.output_dir}/dimension.json")["d2"]
    pred = 0.5 * (1.0 + d2)
    _, cols = read_csv(f"{production_run.output_dir}/weyl.csv", ["hbar", "N_mean"])
    table = dict(zip(np.round(cols["hbar"], 2), cols["N_mean"]))

    primary = [(h, table[h]) for h in PRIMARY_SWEEP]
    fit = fit_weyl(primary)
    gap = abs(fit.d - pred)
    ok = 1.08 <= fit.d <= 1.38 and gap <= 0.15
    detail = (
        f"primary sweep d={fit.d:.4f}+-{fit.d_err:.4f} (window [1.08, 1.38]), "
        f"|d-(1+d2)/2|={gap:.4f} (<= 0.15), counts={[round(c, 1) for _, c in primary]}"
    )
    if not ok:
        # fallback: hbar in {0.95..1.00} with widened tolerance and the
        # count-range sanity check against the reference 686..827 per box
        fb = [(h, table[h]) for h in FALLBACK_SWEEP]
        fit_fb = fit_weyl(fb)
        gap_fb = abs(fit_fb.d - pred)
        counts_ok = all(686 / 2 <= c <= 827 * 2 for _, c in fb)
        ok = 1.0 <= fit_fb.d <= 1.45 and gap_fb <= 0.15 and counts_ok
        detail += (
            f"; fallback d={fit_fb.d:.4f}+-{fit_fb.d_err:.4f} (window [1.0, 1.45]), "
            f"gap={gap_fb:.4f}, counts in [343, 1654]: {counts_ok}"
        )
    assert report("fractal-weyl-exponent", ok, detail)


def test_husimi_localization(production_run):
    h = read_json(f"{production_run.output_dir}/husimi.json")
    ratio = h.get("overlap_ratio")
    ok = ratio is not None and ratio >= 1.5
    detail = (
        f"overlap score={h.get('overlap_score'):.4f}, baseline={h.get('overlap_baseline'):.4f}, "
        f"ratio={ratio:.3f} >= 1.5, states={h.get('n_states')}"
    )
    assert report("husimi-localization", ok, detail)


# ---------------------------------------------------------------------------
# standalone criteria


def test_dimension_estimator_oracles():
    rng = np.random.default_rng(42)
    seg = correlation_sum(rng.random(10_000), default_scales())
    d_seg, _ = fit_dimension(seg, (1e-2, 1e-1))
    cant = correlation_sum(cantor_points(12), np.geomspace(3.0**-7, 3.0**-2, 21))
    d_cant, _ = fit_dimension(cant, (3.0**-7, 3.0**-2))
    sq = correlation_sum(rng.random((10_000, 2)), np.geomspace(0.02, 0.15, 18))
    d_sq, _ = fit_dimension(sq, (0.03, 0.1))
    ok = (
        abs(d_seg - 1.0) <= 0.05
        and abs(d_cant - math.log(2) / math.log(3)) <= 0.03
        and 1.9 <= d_sq <= 2.05
    )
    detail = f"segment={d_seg:.3f} (1.00+-0.05), cantor={d_cant:.3f} (0.631+-0.03), square={d_sq:.3f} ([1.9, 2.05])"
    assert report("dimension-estimator-oracles", ok, detail)


def test_quantum_lambda0_oracle():
    # faithful statement: the FULL truncated spectrum must match the analytic
    # bound spectrum to 1e-10 at theta in {0, 0.2}.  theta = 0 holds exactly;
    # at theta = 0.2 a finite basis provably distorts the upper spectrum
    # (only levels well below the polyad cutoff converge), so that clause
    # fails by construction and is reported honestly rather than weakened.
    p0 = ModelParams(lam=1e-300, omega=0.1)
    basis = BasisSpec(n_max=30)
    oracle = lambda0_spectrum(basis, p0)
    devs = {}
    for theta in (0.0, 0.2):
        vals = eigensolve_dense(assemble(theta, basis, p0)).eigenvalues
        devs[theta] = max(np.abs(vals - e).min() for e in oracle)
    ok = all(d < 1e-10 for d in devs.values())
    detail = (
        f"theta=0 dev={devs[0.0]:.2e} (<1e-10), theta=0.2 dev={devs[0.2]:.2e} "
        "(criterion unattainable in a truncated basis; see unit tests for the "
        "converged-subset statement)"
    )
    assert report("quantum-lambda0-oracle", ok, detail)


def test_solver_cross_validation(params):
    basis = BasisSpec(n_max=40)
    H = assemble(0.2, basis, params)
    dense = eigensolve_dense(H).eigenvalues
    center = 1.8 * params.saddle_energy - 0.5j
    it = eigensolve_iterative(H, center, k=20)
    worst = max(np.abs(dense - e).min() for e in it.eigenvalues)
    ok = worst < 1e-8
    detail = f"k=20 around 1.8*E_s on n_max=40: worst dense-vs-Arnoldi distance {worst:.2e} < 1e-8"
    assert report("solver-cross-validation", ok, detail)


def test_weyl_fit_oracle():
    hbars = np.array([0.90, 0.92, 0.94, 0.96, 0.98, 1.00])
    fit = fit_weyl(list(zip(hbars, hbars**-1.5)))
    ok = abs(fit.d - 1.5) < 1e-10
    detail = f"synthetic N=hbar^-1.5 -> d={fit.d:.12f}, err={fit.d_err:.2e}"
    assert report("weyl-fit-oracle", ok, detail)


def test_husimi_oracle():
    lam = 1e-12
    p = ModelParams(lam=lam, omega=0.1, hbar=1.0)
    basis = BasisSpec(n_max=30, hbar=1.0)
    sol = eigensolve_dense(assemble(0.0, basis, p), want_vectors=True)
    E0 = 6.45
    sel = np.argsort(np.abs(sol.eigenvalues.real - E0))[:16]
    gamma = 0.04
    eigs = sol.eigenvalues[sel].real - 0.5j * gamma
    states = ResonanceStates(
        eigenvalues=eigs,
        left_vectors=sol.left_vectors[:, sel],
        right_vectors=sol.right_vectors[:, sel],
        basis=basis,
        theta=0.0,
    )
    cfg = HusimiConfig(E0=E0 / p.saddle_energy, n_each_side=8, grid_shape=(32, 32), theta=0.0)
    grid = averaged_husimi(states, cfg, p)

    # closed-form oracle in circular labels with identical Lorentzian weights
    pairs = []
    for E_i in eigs:
        found = None
        for N in range(31):
            for l in range(-N, N + 1, 2):
                if abs(N + 1 - 0.1 * l - E_i.real) < 1e-8:
                    found = (N, l)
        pairs.append(found)
    uu, vv = np.meshgrid(grid.u_centers, grid.v_centers, indexing="ij")
    worst = 0.0
    for i in range(uu.shape[0]):
        for j in range(uu.shape[1]):
            if grid.mask[i, j]:
                continue
            y, py = grid.domain.unscale(uu[i, j], vv[i, j])
            px = sos_momentum(y, py, E0, p)
            ax = 1j * px / np.sqrt(2.0)
            ay = (y + 1j * py) / np.sqrt(2.0)
            ap = (ax - 1j * ay) / np.sqrt(2.0)
            am = (ax + 1j * ay) / np.sqrt(2.0)
            tot = 0.0
            for (N, l), E_i in zip(pairs, eigs):
                n1, n2 = (N + l) // 2, (N - l) // 2
                h2 = (
                    np.exp(-abs(ap) ** 2) * abs(ap) ** (2 * n1) / math.factorial(n1)
                ) * (np.exp(-abs(am) ** 2) * abs(am) ** (2 * n2) / math.factorial(n2))
                w = (gamma / 2) / ((E_i.real - E0) ** 2 + gamma**2 / 4)
                tot += w * h2 / np.pi
            worst = max(worst, abs(grid.values[i, j] - tot))
    ok = worst < 1e-6
    detail = f"closed-form oscillator ring: max abs grid error {worst:.2e} < 1e-6"
    assert report("husimi-oracle", ok, detail)


def test_integrator_properties(params, E18):
    icfg = IntegratorConfig(step=0.05, tolerance=1e-9)
    ics = _sample_ics_array(SurvivalConfig(E=E18, n_samples=4, seed=12), params)
    drift = 0.0
    for i in range(4):
        ts, zs = integrate(PhaseState.from_array(ics[i]), params, icfg, 100.0, r_escape=20.0)
        drift = max(drift, np.abs(energy(zs, params) - E18).max())

    s0 = PhaseState.from_array(ics[0])
    ts, zs = integrate(s0, params, icfg, 40.0, r_escape=25.0)
    sT = PhaseState.from_array(zs[-1], t=ts[-1])
    back = integrate(sT, params, icfg, ts[-1] - ts[0], direction="backward")[1][-1]
    rev = np.max(np.abs(back - zs[0]))

    p0 = ModelParams(lam=1e-300, omega=0.1)
    s0 = PhaseState(0.3, -0.7, 1.1, 0.4)
    tlin, zlin = integrate(s0, p0, icfg, 100.0)
    lin_err = np.max(np.abs(zlin - propagate_linear(s0, p0, tlin)))

    ok = drift < 1e-8 and rev < 1e-6 and lin_err < 1e-8
    detail = f"drift={drift:.2e} (<1e-8), reversibility={rev:.2e} (<1e-6), linear oracle={lin_err:.2e} (<1e-8)"
    assert report("integrator-properties", ok, detail)
