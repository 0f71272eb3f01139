"""Deterministic CSV/JSON rendering and atomic output directories."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import shutil
import tempfile
from pathlib import Path

import numpy as np


class OutputExistsError(FileExistsError):
    """Target directory already exists and overwriting was not requested."""


def fmt(x) -> str:
    """Shortest round-trip text for a number; empty for None."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return buf.getvalue()


def json_text(data) -> str:
    return json.dumps(_plain(data), indent=2, sort_keys=True) + "\n"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    return obj


def matrix_csv(M) -> str:
    """``i,j,re,im`` rows in row-major order."""
    M = np.asarray(M)
    rows = ((i, j, float(np.real(M[i, j])), float(np.imag(M[i, j])))
            for i in range(M.shape[0]) for j in range(M.shape[1]))
    return csv_text(("i", "j", "re", "im"), rows)


def spectrum_csv(vals) -> str:
    return csv_text(("i", "eigenvalue"), ((i, float(v)) for i, v in enumerate(vals)))


def quadrature_csv(quad) -> str:
    names = ("px", "py", "pz")[: quad.dim] + ("weight", "gradnorm")
    rows = ((*map(float, p), float(w), float(g))
            for p, w, g in zip(quad.nodes, quad.weights, quad.gradnorms))
    return csv_text(names, rows)


def potential_table_csv(V, radii) -> str:
    radii = np.asarray(radii, dtype=float)
    vals = V.fourier_radial(radii)
    if V.kind == "tabulated" and V.table_im is not None:
        im = np.interp(radii, V.table_p, V.table_im)
        return csv_text(("p_radius", "re_vhat", "im_vhat"), zip(radii, vals, im))
    return csv_text(("p_radius", "re_vhat"), zip(radii, vals))


def solve_records_csv(records, r: float) -> str:
    from .surface_ops import f_of_e
    rows = ((rec.lam, rec.index, rec.e, f_of_e(rec.e, r), rec.bs_eigenvalue_residual, rec.grid_id)
            for rec in records)
    return csv_text(("lambda", "index", "e", "f_of_e", "residual", "grid_id"), rows)


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename over ``path``."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class OutputDir:
    """Files are staged in a hidden sibling directory and moved into place on commit."""

    def __init__(self, target: str | Path, force: bool = False):
        self.target = Path(target)
        if self.target.exists() and not force:
            raise OutputExistsError(f"output directory {self.target} exists (use --force to replace it)")
        self.force = force
        self.files: dict[str, str] = {}
        self._staging: Path | None = None

    def _stage(self) -> Path:
        if self._staging is None:
            parent = self.target.resolve().parent
            parent.mkdir(parents=True, exist_ok=True)
            self._staging = Path(tempfile.mkdtemp(prefix=f".{self.target.name}.", dir=parent))
        return self._staging

    def write(self, name: str, text: str) -> None:
        atomic_write_text(self._stage() / name, text)
        self.files[name] = hashlib.sha256(text.encode("utf-8")).hexdigest()

    def commit(self) -> None:
        staging = self._stage()
        if self.target.exists():
            if not self.force:
                self.abort()
                raise OutputExistsError(f"output directory {self.target} appeared during the run")
            shutil.rmtree(self.target)
        os.replace(staging, self.target)
        self._staging = None

    def abort(self) -> None:
        if self._staging is not None:
            shutil.rmtree(self._staging, ignore_errors=True)
            self._staging = None
