"""Artifact schemas, persistence and the run manifest.

Flat-file contract consumed by downstream tooling (including the figure
renderer): CSV for point sets and catalogs, JSON sidecars for configuration
and fit results, and an optional NumPy archive for eigenvector payloads.

Schemas (column order is part of the contract):

    repeller.csv      y,py,t_cross,branch          scaled (0,1) section coords
    correlation.csv   s,C2                         correlation sum per scale
    spectrum_*.csv    E_r_scaled,gamma_scaled,theta_stability,hbar
    weyl.csv          hbar,N_mean                  mean box count per hbar
    husimi.csv        y,py,value,masked            scaled coords, masked=0/1

Every write is registered in manifest.json with a SHA-256 content hash;
`verify_manifest` re-hashes the files and reports mismatches.
"""

from __future__ import annotations

import hashlib
import json
import platform
import time
from pathlib import Path

import numpy as np

SCHEMA = {
    "repeller": ["y", "py", "t_cross", "branch"],
    "correlation": ["s", "C2"],
    "spectrum": ["E_r_scaled", "gamma_scaled", "theta_stability", "hbar"],
    "weyl": ["hbar", "N_mean"],
    "husimi": ["y", "py", "value", "masked"],
}


class MissingDependencyError(FileNotFoundError):
    """A stage input artifact is absent; the message names it."""


class SchemaError(ValueError):
    """An artifact does not match its documented schema."""


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_csv(path, header, columns, fmt="%.17g"):
    """Write named columns (equal length) as a simple comma-separated table."""
    path = Path(path)
    cols = [np.asarray(c) for c in columns]
    n = cols[0].shape[0]
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        if n == 0:
            return path
        texts = []
        for c in cols:
            if c.dtype.kind in "fc":
                texts.append([fmt % v for v in c])
            else:
                texts.append([str(v) for v in c])
        for row in zip(*texts):
            f.write(",".join(row) + "\n")
    return path


def read_csv(path, expected_header=None):
    """Read a CSV written by write_csv; returns (header, dict of columns).

    Numeric columns come back as float arrays, everything else as string
    arrays.  With `expected_header`, a mismatch raises SchemaError naming the
    offending column.
    """
    path = Path(path)
    if not path.exists():
        raise MissingDependencyError(f"missing artifact: {path}")
    with open(path) as f:
        header = f.readline().strip().split(",")
        rows = [line.rstrip("\n").split(",") for line in f if line.strip()]
    if expected_header is not None:
        for want, got in zip(expected_header, header + [None] * len(expected_header)):
            if want != got:
                raise SchemaError(
                    f"{path.name}: expected column '{want}', found '{got}'"
                )
    cols = {}
    for j, name in enumerate(header):
        vals = [r[j] for r in rows]
        try:
            cols[name] = np.array([float(v) for v in vals])
        except ValueError:
            cols[name] = np.array(vals)
    return header, cols


def write_json(path, payload) -> Path:
    path = Path(path)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")
    return path


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def read_json(path):
    path = Path(path)
    if not path.exists():
        raise MissingDependencyError(f"missing artifact: {path}")
    with open(path) as f:
        return json.load(f)


class Manifest:
    """Accumulating record of artifacts, hashes, versions and timings."""

    def __init__(self, output_dir):
        self.output_dir = Path(output_dir)
        self.path = self.output_dir / "manifest.json"
        if self.path.exists():
            self.data = read_json(self.path)
        else:
            self.data = {
                "versions": {
                    "python": platform.python_version(),
                    "numpy": np.__version__,
                    "scipy": __import__("scipy").__version__,
                },
                "artifacts": {},
                "stages": {},
            }

    def register(self, name, path):
        path = Path(path)
        self.data["artifacts"][name] = {
            "path": path.name,
            "sha256": sha256_file(path),
            "bytes": path.stat().st_size,
        }

    def record_stage(self, stage, seconds, summary=None):
        self.data["stages"][stage] = {
            "seconds": round(seconds, 3),
            "finished": time.strftime("%Y-%m-%dT%H:%M:%S"),
        }
        if summary:
            self.data["stages"][stage]["summary"] = summary

    def save(self):
        write_json(self.path, self.data)

    def artifact_path(self, name) -> Path:
        info = self.data["artifacts"].get(name)
        if info is None:
            raise MissingDependencyError(
                f"artifact '{name}' not found in manifest at {self.path}"
            )
        return self.output_dir / info["path"]


def verify_manifest(output_dir):
    """Check that every registered artifact exists with a matching hash.

    Returns a list of problem strings; empty means the manifest is complete.
    """
    output_dir = Path(output_dir)
    manifest = read_json(output_dir / "manifest.json")
    problems = []
    for name, info in manifest.get("artifacts", {}).items():
        p = output_dir / info["path"]
        if not p.exists():
            problems.append(f"{name}: file {info['path']} missing")
            continue
        digest = sha256_file(p)
        if digest != info["sha256"]:
            problems.append(f"{name}: hash mismatch for {info['path']}")
    return problems
