"""CSV/JSON writers with fixed float formatting and partial-file staging."""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

PARTIAL = ".partial"


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not np.isfinite(x):
            return None if np.isnan(x) else ("inf" if x > 0 else "-inf")
        return float(f"{x:.17g}")
    if hasattr(obj, "value") and not isinstance(obj, str):
        return obj.value
    return obj


class OutputDir:
    """Stages every file as ``name.partial`` and renames them all on :meth:`commit`."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self.staged: list[Path] = []

    def _stage(self, name) -> Path:
        p = self.path / (name + PARTIAL)
        self.staged.append(p)
        return p

    def write_csv(self, name, header, rows):
        p = self._stage(name)
        with open(p, "w", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(fmt(v) for v in row) + "\n")

    def write_matrix(self, name, M):
        p = self._stage(name)
        with open(p, "w", newline="\n") as fh:
            for row in np.asarray(M):
                fh.write(",".join(fmt(v) for v in row) + "\n")

    def write_json(self, name, data):
        p = self._stage(name)
        with open(p, "w") as fh:
            json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def commit(self):
        for p in self.staged:
            os.replace(p, p.with_name(p.name[: -len(PARTIAL)]))
        self.staged = []


def export_basis(out: OutputDir, basis, kernel=None, prefix=""):
    out.write_csv(prefix + "mu.csv", ["k", "mu"], ((k + 1, mu) for k, mu in enumerate(basis.mu)))
    x = basis.domain.nodes
    for k in range(basis.size):
        if basis.domain.dim == 1:
            rows = ((i, x[i], v) for i, v in enumerate(basis.phi[k]))
            out.write_csv(f"{prefix}phi_{k + 1}.csv", ["i", "x", "value"], rows)
        else:
            rows = ((i, x[i, 0], x[i, 1], v) for i, v in enumerate(basis.phi[k]))
            out.write_csv(f"{prefix}phi_{k + 1}.csv", ["i", "x", "y", "value"], rows)
    if kernel is not None:
        out.write_matrix(prefix + "kernel.csv", kernel.entries)


def export_trace(out: OutputDir, trace, name="trace.csv"):
    d = trace.diagnostics
    cols = ["sup_norm", "hstar_norm", "L1_Phi1", "lyapunov", "newton_iters"]
    rows = zip(trace.times, *(d[c] for c in cols))
    out.write_csv(name, ["time"] + cols, rows)
