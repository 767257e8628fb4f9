"""Run configuration and stage orchestration.

A RunConfig bundles every stage's parameters, serializes to JSON, and
re-runs deterministically: classical and counting stages are bitwise
reproducible under a fixed seed, eigensolves to solver tolerance.  Stages
write flat-file artifacts plus a manifest (hashes, versions, timings);
`all` chains repeller -> dimension -> spectrum -> weyl -> husimi and emits a
summary.
"""

from __future__ import annotations

import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import artifacts as art
from .dimension import correlation_sum, fit_dimension
from .husimi import HusimiConfig, ResonanceStates, averaged_husimi, repeller_overlap_score, select_resonances
from .integrator import IntegratorConfig
from .model import ModelParams, SosDomain
from .quantum import BasisSpec, Resonance, SpectrumCatalog, assemble, compute_catalog, eigensolve_dense
from .repeller import SurvivalConfig, build_repeller
from .weyl import CountingBoxes, WeylFit, count_box, fit_weyl

STAGES = ("repeller", "dimension", "spectrum", "weyl", "husimi", "all")


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


@dataclass
class DimensionConfig:
    """Inputs for the correlation-dimension stage."""

    input_csv: str | None = None  # None: the repeller artifact of this run
    s_min: float = 3e-3
    s_max: float = 0.3
    n_scales: int = 25
    fit_min: float = 1e-2
    fit_max: float = 1e-1
    n_pairs: int = 20_000_000
    seed: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "DimensionConfig":
        return cls(**d)


@dataclass
class QuantumConfig:
    """Basis, theta grid and filter settings for the spectrum stage.

    The basis cutoff scales as round(n_max/hbar) across the sweep so the
    truncation geometry stays hbar-invariant in the exact-rescaling frame.
    The default rotation angles stay small: they expose every resonance
    narrower than the counting caps (opening angles ~0.03 rad) while keeping
    the enumeration basis-converged, which large angles destroy.
    """

    n_max: int = 120  # at hbar = 1; scaled as round(n_max/hbar) when scale_n_max
    scale_n_max: bool = True
    theta_grid: tuple = (0.06, 0.09, 0.12)
    tol_scaled: float = 0.02  # theta-trajectory acceptance, units of E_s
    match_radius_scaled: float = 1e-3  # ambiguity radius, units of E_s
    dense_budget: int = 6000
    use_symmetry: bool = True

    def n_max_at(self, hbar: float) -> int:
        return int(round(self.n_max / hbar)) if self.scale_n_max else self.n_max

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["theta_grid"] = list(self.theta_grid)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "QuantumConfig":
        d = dict(d)
        d["theta_grid"] = tuple(d["theta_grid"])
        return cls(**d)


@dataclass
class WeylStageConfig:
    """Counting boxes and the hbar sweep."""

    boxes: CountingBoxes = field(default_factory=CountingBoxes)
    hbar_sweep: tuple = (0.90, 0.92, 0.94, 0.96, 0.98, 1.00)

    def to_dict(self) -> dict:
        return {"boxes": self.boxes.to_dict(), "hbar_sweep": list(self.hbar_sweep)}

    @classmethod
    def from_dict(cls, d: dict) -> "WeylStageConfig":
        return cls(
            boxes=CountingBoxes.from_dict(d["boxes"]),
            hbar_sweep=tuple(d["hbar_sweep"]),
        )


@dataclass
class RunConfig:
    """Full pipeline configuration; see module docstring for reproducibility."""

    model: ModelParams = field(default_factory=ModelParams)
    integrator: IntegratorConfig = field(default_factory=lambda: IntegratorConfig(step=0.05, tolerance=1e-9))
    classical: SurvivalConfig | None = None  # None: E = 1.8 * saddle energy
    dimension: DimensionConfig = field(default_factory=DimensionConfig)
    quantum: QuantumConfig = field(default_factory=QuantumConfig)
    weyl: WeylStageConfig = field(default_factory=WeylStageConfig)
    husimi: HusimiConfig = field(default_factory=HusimiConfig)
    husimi_hbar: float = 1.0
    husimi_store_vectors: bool = False
    output_dir: str = "runs/default"
    seed: int | None = None  # global override for stage seeds
    workers: int = 1

    def __post_init__(self):
        if self.classical is None:
            self.classical = SurvivalConfig(E=1.8 * self.model.saddle_energy)
        if self.seed is not None:
            self.classical = SurvivalConfig.from_dict(
                {**self.classical.to_dict(), "seed": int(self.seed)}
            )
            self.dimension.seed = int(self.seed)
        if self.workers < 1:
            raise ConfigError("workers: must be >= 1")

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "integrator": self.integrator.to_dict(),
            "classical": self.classical.to_dict(),
            "dimension": self.dimension.to_dict(),
            "quantum": self.quantum.to_dict(),
            "weyl": self.weyl.to_dict(),
            "husimi": self.husimi.to_dict(),
            "husimi_hbar": self.husimi_hbar,
            "husimi_store_vectors": self.husimi_store_vectors,
            "output_dir": str(self.output_dir),
            "seed": self.seed,
            "workers": self.workers,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        sections = {
            "model": ModelParams.from_dict,
            "integrator": IntegratorConfig.from_dict,
            "classical": SurvivalConfig.from_dict,
            "dimension": DimensionConfig.from_dict,
            "quantum": QuantumConfig.from_dict,
            "weyl": WeylStageConfig.from_dict,
            "husimi": HusimiConfig.from_dict,
        }
        kwargs = {}
        for key, parser in sections.items():
            if key in d and d[key] is not None:
                try:
                    kwargs[key] = parser(d.pop(key))
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"{key}: {exc}") from exc
        try:
            return cls(**kwargs, **d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def save(self, path) -> Path:
        return art.write_json(path, self.to_dict())

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_dict(art.read_json(path))


def _spectrum_filename(hbar: float) -> str:
    return f"spectrum_hbar{hbar:.2f}"


def _catalog_job(args):
    """Worker for one hbar point of the sweep; returns rows + metadata."""
    model_d, quantum_d, hbar = args
    params = ModelParams.from_dict(model_d)
    qc = QuantumConfig.from_dict(quantum_d)
    basis = BasisSpec(n_max=qc.n_max_at(hbar), hbar=hbar)
    E_s = params.saddle_energy
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cat = compute_catalog(
            params,
            basis,
            qc.theta_grid,
            tol=qc.tol_scaled * E_s,
            match_radius=qc.match_radius_scaled * E_s,
            use_symmetry=qc.use_symmetry,
            dense_budget=qc.dense_budget,
        )
    return hbar, basis.to_dict(), cat.scaled_table(E_s), cat.meta


def stage_repeller(cfg: RunConfig, manifest: art.Manifest) -> dict:
    rep = build_repeller(cfg.classical, cfg.model, cfg.integrator)
    out = Path(cfg.output_dir)
    pts = rep.points
    art.write_csv(
        out / "repeller.csv",
        art.SCHEMA["repeller"],
        [
            np.array([p.y for p in pts]),
            np.array([p.py for p in pts]),
            np.array([p.t_cross for p in pts]),
            np.array([p.branch for p in pts]),
        ],
    )
    art.write_json(
        out / "repeller.json",
        {
            "model": cfg.model.to_dict(),
            "integrator": cfg.integrator.to_dict(),
            "survival": cfg.classical.to_dict(),
            "domain": rep.domain.to_dict(),
            "stats": rep.stats,
        },
    )
    manifest.register("repeller_csv", out / "repeller.csv")
    manifest.register("repeller_json", out / "repeller.json")
    return dict(rep.stats)


def _load_points_csv(path) -> np.ndarray:
    header, cols = art.read_csv(path)
    if "y" in cols and "py" in cols:
        return np.column_stack([cols["y"], cols["py"]])
    numeric = [c for c in header if cols[c].dtype.kind == "f"]
    if not numeric:
        raise art.SchemaError(f"{path}: no numeric point columns found")
    return np.column_stack([cols[c] for c in numeric])


def stage_dimension(cfg: RunConfig, manifest: art.Manifest) -> dict:
    out = Path(cfg.output_dir)
    dc = cfg.dimension
    src = Path(dc.input_csv) if dc.input_csv else manifest.artifact_path("repeller_csv")
    points = _load_points_csv(src)
    scales = np.geomspace(dc.s_min, dc.s_max, dc.n_scales)
    curve = correlation_sum(points, scales, n_pairs=dc.n_pairs, seed=dc.seed)
    d2, d2_err = fit_dimension(curve, (dc.fit_min, dc.fit_max))
    art.write_csv(out / "correlation.csv", art.SCHEMA["correlation"], [curve.scales, curve.values])
    payload = {
        "d2": d2,
        "d2_err": d2_err,
        "m_flow": 1.0 + d2,
        "fit_range": list(curve.fit_range),
        "n_points": curve.n_points,
        "n_pairs_sampled": curve.n_pairs_sampled,
        "source": str(src),
    }
    art.write_json(out / "dimension.json", payload)
    manifest.register("correlation_csv", out / "correlation.csv")
    manifest.register("dimension_json", out / "dimension.json")
    return payload


def stage_spectrum(cfg: RunConfig, manifest: art.Manifest) -> dict:
    out = Path(cfg.output_dir)
    hbars = list(cfg.weyl.hbar_sweep)
    jobs = [(cfg.model.to_dict(), cfg.quantum.to_dict(), h) for h in hbars]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_catalog_job, jobs))
    else:
        results = [_catalog_job(j) for j in jobs]
    summary = {}
    for hbar, basis_d, table, meta in results:
        name = _spectrum_filename(hbar)
        art.write_csv(
            out / f"{name}.csv",
            art.SCHEMA["spectrum"],
            [table[:, 0], table[:, 1], table[:, 2], table[:, 3]],
        )
        art.write_json(
            out / f"{name}.json",
            {
                "model": cfg.model.to_dict(),
                "basis": basis_d,
                "theta_grid": list(cfg.quantum.theta_grid),
                "solver": "dense",
                "filter": meta,
                "E_s": cfg.model.saddle_energy,
            },
        )
        manifest.register(f"{name}_csv", out / f"{name}.csv")
        manifest.register(f"{name}_json", out / f"{name}.json")
        summary[f"{hbar:.2f}"] = {"n_resonances": int(table.shape[0]), **{k: v for k, v in meta.items() if k != "tol"}}
    return summary


def load_catalog(output_dir, hbar: float, model: ModelParams) -> SpectrumCatalog:
    """Rebuild a SpectrumCatalog from its persisted artifacts."""
    out = Path(output_dir)
    name = _spectrum_filename(hbar)
    meta = art.read_json(out / f"{name}.json")
    _, cols = art.read_csv(out / f"{name}.csv", art.SCHEMA["spectrum"])
    E_s = meta["E_s"]
    basis = BasisSpec.from_dict(meta["basis"])
    resonances = [
        Resonance(
            E_r=float(e * E_s),
            gamma=float(g * E_s),
            theta_stability=float(t),
            hbar=float(h),
        )
        for e, g, t, h in zip(
            cols["E_r_scaled"], cols["gamma_scaled"], cols["theta_stability"], cols["hbar"]
        )
    ]
    return SpectrumCatalog(
        resonances=resonances,
        basis=basis,
        theta_grid=meta["theta_grid"],
        solver=meta.get("solver", "dense"),
        meta=meta.get("filter", {}),
    )


def stage_weyl(cfg: RunConfig, manifest: art.Manifest) -> dict:
    out = Path(cfg.output_dir)
    E_s = cfg.model.saddle_energy
    rows = []
    per_box = {}
    for hbar in cfg.weyl.hbar_sweep:
        cat = load_catalog(out, hbar, cfg.model)
        mean, per = count_box(cat, cfg.weyl.boxes, E_s)
        if mean <= 0:
            warnings.warn(f"empty box counts at hbar={hbar}", stacklevel=2)
        rows.append((hbar, mean))
        per_box[f"{hbar:.2f}"] = per.tolist()
    fit = fit_weyl(rows)
    art.write_csv(out / "weyl.csv", art.SCHEMA["weyl"], [fit.hbars, fit.counts])
    payload = {
        **fit.to_dict(),
        "per_box": per_box,
        "boxes": cfg.weyl.boxes.to_dict(),
    }
    try:
        d2 = art.read_json(out / "dimension.json")["d2"]
        payload["classical_prediction"] = 0.5 * (1.0 + d2)
        payload["prediction_gap"] = abs(fit.d - 0.5 * (1.0 + d2))
    except art.MissingDependencyError:
        pass
    art.write_json(out / "weyl.json", payload)
    manifest.register("weyl_csv", out / "weyl.csv")
    manifest.register("weyl_json", out / "weyl.json")
    return {k: payload[k] for k in ("d", "d_err") if k in payload} | {
        "counts": {f"{h:.2f}": c for h, c in rows}
    }


def stage_husimi(cfg: RunConfig, manifest: art.Manifest) -> dict:
    out = Path(cfg.output_dir)
    params = cfg.model
    E_s = params.saddle_energy
    hbar = cfg.husimi_hbar
    catalog = load_catalog(out, hbar, params)  # raises MissingDependencyError
    hc = cfg.husimi
    E0_abs = hc.E0 * E_s
    selected, gamma_cut, short = select_resonances(catalog.resonances, E0_abs, E_s, hc)
    if not selected:
        raise ValueError("no resonances available for the Husimi average")

    basis = BasisSpec(n_max=cfg.quantum.n_max_at(hbar), hbar=hbar)
    H = assemble(hc.theta, basis, params)
    span = max(0.6 * E_s, 3.0 * max(abs(r.E_r - E0_abs) for r in selected))
    sol = eigensolve_dense(
        H,
        want_vectors=True,
        use_symmetry=cfg.quantum.use_symmetry,
        dense_budget=cfg.quantum.dense_budget,
        vector_window=(E0_abs - span, E0_abs + span),
    )
    nvec = sol.left_vectors.shape[1]
    evals = sol.eigenvalues[:nvec]
    targets = np.array([r.eigenvalue for r in selected])
    match_idx = np.array([np.argmin(np.abs(evals - t)) for t in targets])
    match_dist = np.abs(evals[match_idx] - targets)
    if np.any(match_dist > 2e-2 * E_s):
        warnings.warn(
            f"largest catalog-to-solve eigenvalue distance {match_dist.max():.3e}",
            stacklevel=2,
        )
    states = ResonanceStates(
        eigenvalues=evals[match_idx],
        left_vectors=sol.left_vectors[:, match_idx],
        right_vectors=sol.right_vectors[:, match_idx],
        basis=basis,
        theta=hc.theta,
        meta={"gamma_cut_scaled": gamma_cut, "short_selection": bool(short)},
    )
    grid = averaged_husimi(states, hc, params)
    uu, vv = np.meshgrid(grid.u_centers, grid.v_centers, indexing="ij")
    art.write_csv(
        out / "husimi.csv",
        art.SCHEMA["husimi"],
        [
            uu.ravel(),
            vv.ravel(),
            grid.values.ravel(),
            grid.mask.ravel().astype(int),
        ],
    )
    payload = {
        "config": hc.to_dict(),
        "hbar": hbar,
        "domain": grid.domain.to_dict(),
        "n_states": int(states.eigenvalues.size),
        "gamma_cut_scaled": gamma_cut,
        "match_distance_max": float(match_dist.max()),
        "grid_shape": list(grid.values.shape),
    }
    try:
        rep_path = manifest.artifact_path("repeller_csv")
        _, cols = art.read_csv(rep_path, art.SCHEMA["repeller"])
        pts = np.column_stack([cols["y"], cols["py"]])
        score, baseline = repeller_overlap_score(grid, pts)
        payload["overlap_score"] = score
        payload["overlap_baseline"] = baseline
        payload["overlap_ratio"] = score / baseline if baseline > 0 else None
    except art.MissingDependencyError:
        pass
    art.write_json(out / "husimi.json", payload)
    manifest.register("husimi_csv", out / "husimi.csv")
    manifest.register("husimi_json", out / "husimi.json")
    if cfg.husimi_store_vectors:
        np.savez_compressed(
            out / "husimi_states.npz",
            eigenvalues=states.eigenvalues,
            left_vectors=states.left_vectors,
            right_vectors=states.right_vectors,
            basis_n_max=basis.n_max,
            hbar=hbar,
            theta=hc.theta,
        )
        manifest.register("husimi_states_npz", out / "husimi_states.npz")
    return {
        k: payload[k]
        for k in ("n_states", "overlap_score", "overlap_baseline", "overlap_ratio")
        if k in payload
    }


_STAGE_FUNCS = {
    "repeller": stage_repeller,
    "dimension": stage_dimension,
    "spectrum": stage_spectrum,
    "weyl": stage_weyl,
    "husimi": stage_husimi,
}


def run_pipeline(stage: str, cfg: RunConfig) -> dict:
    """Execute one stage (or `all`); returns the accumulated summary."""
    if stage not in STAGES:
        raise ConfigError(f"stage: unknown stage '{stage}'")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "run_config.json")
    manifest = art.Manifest(out)
    stages = ["repeller", "dimension", "spectrum", "weyl", "husimi"] if stage == "all" else [stage]
    summary = {}
    for name in stages:
        t0 = time.time()
        result = _STAGE_FUNCS[name](cfg, manifest)
        manifest.record_stage(name, time.time() - t0, result)
        manifest.save()
        summary[name] = result
    art.write_json(out / "summary.json", _flat_summary(manifest))
    return summary


def _flat_summary(manifest: art.Manifest) -> dict:
    flat = {}
    stages = manifest.data.get("stages", {})
    if "dimension" in stages:
        s = stages["dimension"].get("summary", {})
        flat["d2"] = s.get("d2")
        flat["d2_err"] = s.get("d2_err")
    if "weyl" in stages:
        s = stages["weyl"].get("summary", {})
        flat["d"] = s.get("d")
        flat["d_err"] = s.get("d_err")
        flat["counts"] = s.get("counts")
    if "husimi" in stages:
        s = stages["husimi"].get("summary", {})
        flat["repeller_overlap_score"] = s.get("overlap_score")
        flat["overlap_baseline"] = s.get("overlap_baseline")
        flat["overlap_ratio"] = s.get("overlap_ratio")
    if "repeller" in stages:
        flat["repeller_points"] = stages["repeller"].get("summary", {}).get("n_points")
    flat["timings"] = {k: v.get("seconds") for k, v in stages.items()}
    return flat


def plot_data_index(output_dir) -> dict:
    """Validate artifacts and emit the figure-input index for the renderer."""
    out = Path(output_dir)
    problems = art.verify_manifest(out)
    if problems:
        raise art.SchemaError("manifest verification failed: " + "; ".join(problems))
    manifest = art.Manifest(out)
    arts = manifest.data["artifacts"]

    def have(*names):
        return all(n in arts for n in names)

    index = {}
    if have("repeller_csv", "repeller_json"):
        index["fig1"] = {
            "repeller_csv": arts["repeller_csv"]["path"],
            "repeller_json": arts["repeller_json"]["path"],
        }
    if have("correlation_csv", "dimension_json", "weyl_csv", "weyl_json"):
        index["fig2"] = {
            "correlation_csv": arts["correlation_csv"]["path"],
            "dimension_json": arts["dimension_json"]["path"],
            "weyl_csv": arts["weyl_csv"]["path"],
            "weyl_json": arts["weyl_json"]["path"],
        }
    if have("husimi_csv", "husimi_json", "repeller_csv"):
        index["fig3"] = {
            "husimi_csv": arts["husimi_csv"]["path"],
            "husimi_json": arts["husimi_json"]["path"],
            "repeller_csv": arts["repeller_csv"]["path"],
        }
    art.write_json(out / "plot_index.json", index)
    return index
