"""Render the three figure analogues from an openweyl artifact directory.

Consumes only the documented flat-file interfaces:

    fig1  repeller.csv + repeller.json      section scatter + bounding curve
    fig2  correlation.csv + dimension.json  log-log correlation fit, and
          weyl.csv + weyl.json              log-log resonance-count fit
    fig3  husimi.csv + husimi.json          Husimi contours over the
          + repeller.csv                    kernel-smoothed repeller density

Fitted slopes shown in fig2 legends come from the JSON artifacts; nothing is
refitted here.  Usage: `plotkit <artifact-dir> <fig1|fig2|fig3> [--out FILE]`.
"""

from __future__ import annotations

import argparse
import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from scipy.stats import gaussian_kde

FIGURES = ("fig1", "fig2", "fig3")


class ArtifactError(ValueError):
    """Missing, empty or malformed artifact; the message names the offender."""


def read_table(path, expected):
    """Minimal CSV reader with schema checking by column name."""
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"missing artifact: {path}")
    with open(path) as f:
        header = f.readline().strip().split(",")
        for want, got in zip(expected, header + [None] * len(expected)):
            if want != got:
                raise ArtifactError(f"{path.name}: expected column '{want}', found '{got}'")
        rows = [line.rstrip("\n").split(",") for line in f if line.strip()]
    cols = {}
    for j, name in enumerate(header):
        vals = [r[j] for r in rows]
        try:
            cols[name] = np.array([float(v) for v in vals])
        except ValueError:
            cols[name] = np.array(vals)
    return cols


def read_meta(path):
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"missing artifact: {path}")
    with open(path) as f:
        return json.load(f)


@dataclass
class PlotSpec:
    """Figure request: which analogue, where the artifacts live, styling."""

    figure: str
    inputs: dict
    style: dict = field(default_factory=dict)

    @classmethod
    def for_directory(cls, directory, figure, style=None) -> "PlotSpec":
        d = Path(directory)
        index_file = d / "plot_index.json"
        if index_file.exists():
            index = json.loads(index_file.read_text())
            if figure not in index:
                raise ArtifactError(f"plot_index.json has no inputs for '{figure}'")
            inputs = {k: str(d / v) for k, v in index[figure].items()}
        else:
            named = {
                "fig1": ("repeller_csv", "repeller_json"),
                "fig2": ("correlation_csv", "dimension_json", "weyl_csv", "weyl_json"),
                "fig3": ("husimi_csv", "husimi_json", "repeller_csv"),
            }[figure]
            inputs = {k: str(d / (k.rsplit("_", 1)[0] + "." + k.rsplit("_", 1)[1])) for k in named}
        return cls(figure=figure, inputs=inputs, style=style or {})


def _scaled_bounding_curve(meta, n=400):
    """Bounding curve of the section window in the scaled (0,1) frame.

    Reconstructed from the sidecar's model parameters and window: the band is
    |py| = sqrt(2*(E - U_eff(0, y))) with U_eff = (1-om^2) y^2/2 - lam y^3/3.
    """
    model = meta["model"]
    dom = meta["domain"]
    lam, om, E = model["lam"], model["omega"], dom["E"]
    y = np.linspace(dom["y_min"], dom["y_max"], n)
    band2 = 2.0 * (E - (0.5 * (1 - om**2) * y**2 - lam * y**3 / 3.0))
    band = np.sqrt(np.maximum(band2, 0.0))
    u = (y - dom["y_min"]) / (dom["y_max"] - dom["y_min"])
    v_hi = (band + dom["py_max"]) / (2.0 * dom["py_max"])
    v_lo = (-band + dom["py_max"]) / (2.0 * dom["py_max"])
    return u, v_hi, v_lo


def render_fig1(spec: PlotSpec, out_path):
    cols = read_table(spec.inputs["repeller_csv"], ["y", "py", "t_cross", "branch"])
    if cols["y"].size == 0:
        raise ArtifactError(f"{spec.inputs['repeller_csv']}: empty repeller point set")
    meta = read_meta(spec.inputs["repeller_json"])
    fig, ax = plt.subplots(figsize=(6, 6))
    size = spec.style.get("marker_size", 0.4)
    for branch, color in (("K+", "#1f77b4"), ("K-", "#2ca02c")):
        m = cols["branch"] == branch
        ax.plot(cols["y"][m], cols["py"][m], ".", ms=size, color=color, label=branch)
    u, v_hi, v_lo = _scaled_bounding_curve(meta)
    ax.plot(u, v_hi, "r-", lw=1.2)
    ax.plot(u, v_lo, "r-", lw=1.2)
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_xlabel("y (scaled)")
    ax.set_ylabel("p_y (scaled)")
    ax.set_title("repeller on the section x = 0, xdot < 0")
    ax.legend(markerscale=12, loc="upper right")
    fig.savefig(out_path, dpi=spec.style.get("dpi", 150))
    plt.close(fig)
    return out_path


def render_fig2(spec: PlotSpec, out_path):
    corr = read_table(spec.inputs["correlation_csv"], ["s", "C2"])
    dim = read_meta(spec.inputs["dimension_json"])
    weyl = read_table(spec.inputs["weyl_csv"], ["hbar", "N_mean"])
    wfit = read_meta(spec.inputs["weyl_json"])
    if corr["s"].size == 0:
        raise ArtifactError(f"{spec.inputs['correlation_csv']}: empty correlation curve")

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4.2))
    pos = corr["C2"] > 0
    ax1.plot(np.log(corr["s"][pos]), np.log(corr["C2"][pos]), "o", ms=4, label="C2(s)")
    lo, hi = dim["fit_range"]
    s_fit = np.geomspace(lo, hi, 50)
    # anchor the displayed line to the artifact's fitted slope
    anchor = np.argmin(np.abs(corr["s"] - lo))
    c0 = np.log(corr["C2"][anchor]) if corr["C2"][anchor] > 0 else 0.0
    ax1.plot(
        np.log(s_fit),
        c0 + dim["d2"] * (np.log(s_fit) - np.log(corr["s"][anchor])),
        "r-",
        label=f"fit: d2 = {dim['d2']:.3f} +- {dim['d2_err']:.3f}",
    )
    ax1.set_xlabel("ln s")
    ax1.set_ylabel("ln C2")
    ax1.legend()
    ax1.set_title("correlation sum")

    x = np.log(1.0 / weyl["hbar"])
    ax2.plot(x, np.log(weyl["N_mean"]), "s", ms=5, label="mean box count")
    xs = np.linspace(x.min(), x.max(), 20)
    ax2.plot(
        xs,
        wfit["intercept"] + wfit["d"] * xs,
        "r-",
        label=f"fit: d = {wfit['d']:.3f} +- {wfit['d_err']:.3f}",
    )
    ax2.set_xlabel("ln (1/hbar)")
    ax2.set_ylabel("ln N")
    ax2.legend()
    ax2.set_title("resonance counts")
    fig.tight_layout()
    fig.savefig(out_path, dpi=spec.style.get("dpi", 150))
    plt.close(fig)
    return out_path


def render_fig3(spec: PlotSpec, out_path):
    hus = read_table(spec.inputs["husimi_csv"], ["y", "py", "value", "masked"])
    meta = read_meta(spec.inputs["husimi_json"])
    rep = read_table(spec.inputs["repeller_csv"], ["y", "py", "t_cross", "branch"])
    if rep["y"].size == 0:
        raise ArtifactError(f"{spec.inputs['repeller_csv']}: empty repeller point set")
    shape = tuple(meta["grid_shape"])
    values = hus["value"].reshape(shape)
    uu = hus["y"].reshape(shape)
    vv = hus["py"].reshape(shape)

    pts = np.column_stack([rep["y"], rep["py"]])
    bw = spec.style.get("kde_bandwidth", "silverman")
    kde = gaussian_kde(pts.T, bw_method=bw)
    density = kde(np.vstack([uu.ravel(), vv.ravel()])).reshape(shape)

    fig, ax = plt.subplots(figsize=(6.4, 6))
    im = ax.imshow(
        density.T,
        origin="lower",
        extent=(0, 1, 0, 1),
        cmap=spec.style.get("cmap", "Blues"),
        aspect="auto",
    )
    fig.colorbar(im, ax=ax, label="repeller density (kernel smoothed)")
    masked = np.ma.masked_invalid(values)
    levels = spec.style.get("contour_levels", 8)
    ax.contour(uu, vv, masked, levels=levels, colors="k", linewidths=0.7)
    ax.set_xlabel("y (scaled)")
    ax.set_ylabel("p_y (scaled)")
    ax.set_title("averaged Husimi contours over the classical repeller")
    fig.savefig(out_path, dpi=spec.style.get("dpi", 150))
    plt.close(fig)
    return out_path


RENDERERS = {"fig1": render_fig1, "fig2": render_fig2, "fig3": render_fig3}


def render(spec: PlotSpec, out_path=None):
    """Render one figure analogue; returns the written image path."""
    if spec.figure not in RENDERERS:
        raise ArtifactError(f"unknown figure '{spec.figure}'")
    if out_path is None:
        first = Path(next(iter(spec.inputs.values())))
        out_path = first.parent / f"{spec.figure}.png"
    return RENDERERS[spec.figure](spec, Path(out_path))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="plotkit", description="Render figure analogues from an artifact directory."
    )
    ap.add_argument("directory", help="openweyl output directory")
    ap.add_argument("figure", choices=FIGURES)
    ap.add_argument("--out", help="output image path (default: <dir>/<figure>.png)")
    ap.add_argument("--dpi", type=int, default=150)
    ap.add_argument("--bandwidth", default="silverman",
                    help="KDE bandwidth rule or float factor for fig3")
    args = ap.parse_args(argv)
    style = {"dpi": args.dpi}
    try:
        style["kde_bandwidth"] = float(args.bandwidth)
    except ValueError:
        style["kde_bandwidth"] = args.bandwidth
    spec = PlotSpec.for_directory(args.directory, args.figure, style)
    out = render(spec, args.out)
    print(out)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
