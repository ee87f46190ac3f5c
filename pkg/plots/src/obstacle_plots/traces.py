"""Parsing and schema validation for obstacle-lab report files.

Documented schemas (all floats printed with 17 significant digits by the
producer, so parsed values round-trip exactly):

  trace_*.csv        r,E,H,phi,phi_adjusted,monneau,config_hash
                     (phi_adjusted / monneau may be empty per row)
  decay_*.csv        r,d,envelope,config_hash
  convergence.csv    h,nodes,linf_error,fb_radius_error,order,config_hash
  boundary.csv       x,y,label,nu_x,nu_y,config_hash
  solution.csv       i,j[,k],x,y[,z],u,active

Trace files carry a JSON sidecar with center, constants and
schema_version; version 1 is supported.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1

TRACE_COLUMNS = ["r", "E", "H", "phi", "phi_adjusted", "monneau", "config_hash"]
DECAY_COLUMNS = ["r", "d", "envelope", "config_hash"]
CONVERGENCE_COLUMNS = ["h", "nodes", "linf_error", "fb_radius_error", "order",
                       "config_hash"]
BOUNDARY_COLUMNS = ["x", "y", "label", "nu_x", "nu_y", "config_hash"]


class SchemaError(ValueError):
    """A report file does not match its documented schema."""


def _read_rows(path: Path, expected: list[str]) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if header != expected:
            offending = [c for c in expected if c not in header] or header
            raise SchemaError(f"{path}: header mismatch, offending column(s) "
                              f"{offending}; expected {expected}")
        rows = [dict(zip(header, row)) for row in reader]
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def _column(rows: list[dict], name: str, path: Path,
            allow_empty: bool = False) -> np.ndarray:
    raw = [row[name] for row in rows]
    if allow_empty:
        return np.array([float(v) if v != "" else np.nan for v in raw])
    try:
        return np.array([float(v) for v in raw])
    except ValueError:
        raise SchemaError(f"{path}: non-numeric value in column {name!r}") from None


@dataclass
class TraceFile:
    """One parsed energy-trace CSV plus its sidecar metadata."""

    path: Path
    r: np.ndarray
    E: np.ndarray
    H: np.ndarray
    phi: np.ndarray
    phi_adjusted: np.ndarray
    monneau: np.ndarray
    raw: list[dict] = field(repr=False, default_factory=list)
    meta: dict = field(default_factory=dict)

    def has(self, column: str) -> bool:
        return bool(np.any(np.isfinite(getattr(self, column))))

    def cell(self, index: int, column: str) -> str:
        """The exact CSV string of a cell (for annotations that must match
        the file byte for byte)."""
        return self.raw[index][column]


def load_trace(path) -> TraceFile:
    path = Path(path)
    rows = _read_rows(path, TRACE_COLUMNS)
    r = _column(rows, "r", path)
    if np.any(np.diff(r) <= 0.0):
        raise SchemaError(f"{path}: column 'r' must be strictly increasing")
    meta = {}
    sidecar = path.with_suffix(".json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
        version = meta.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaError(f"{sidecar}: schema_version {version!r} not supported")
    return TraceFile(
        path=path, r=r,
        E=_column(rows, "E", path), H=_column(rows, "H", path),
        phi=_column(rows, "phi", path),
        phi_adjusted=_column(rows, "phi_adjusted", path, allow_empty=True),
        monneau=_column(rows, "monneau", path, allow_empty=True),
        raw=rows, meta=meta)


@dataclass
class DecayFile:
    path: Path
    r: np.ndarray
    d: np.ndarray
    envelope: np.ndarray
    raw: list[dict] = field(repr=False, default_factory=list)


def load_decay(path) -> DecayFile:
    path = Path(path)
    rows = _read_rows(path, DECAY_COLUMNS)
    r = _column(rows, "r", path)
    if np.any(np.diff(r) <= 0.0):
        raise SchemaError(f"{path}: column 'r' must be strictly increasing")
    return DecayFile(path=path, r=r, d=_column(rows, "d", path),
                     envelope=_column(rows, "envelope", path), raw=rows)


@dataclass
class ConvergenceFile:
    path: Path
    h: np.ndarray
    nodes: np.ndarray
    linf_error: np.ndarray
    order: np.ndarray
    raw: list[dict] = field(repr=False, default_factory=list)


def load_convergence(path) -> ConvergenceFile:
    path = Path(path)
    rows = _read_rows(path, CONVERGENCE_COLUMNS)
    return ConvergenceFile(
        path=path, h=_column(rows, "h", path),
        nodes=_column(rows, "nodes", path),
        linf_error=_column(rows, "linf_error", path),
        order=_column(rows, "order", path, allow_empty=True), raw=rows)


@dataclass
class BoundaryFile:
    path: Path
    points: np.ndarray
    labels: list[str]
    normals: np.ndarray


def load_boundary(path) -> BoundaryFile:
    path = Path(path)
    rows = _read_rows(path, BOUNDARY_COLUMNS)
    pts = np.column_stack([_column(rows, "x", path), _column(rows, "y", path)])
    normals = np.column_stack([_column(rows, "nu_x", path, allow_empty=True),
                               _column(rows, "nu_y", path, allow_empty=True)])
    return BoundaryFile(path=path, points=pts,
                        labels=[row["label"] for row in rows], normals=normals)


@dataclass
class SolutionFile:
    path: Path
    x: np.ndarray
    y: np.ndarray
    u: np.ndarray
    active: np.ndarray


def load_solution(path) -> SolutionFile:
    path = Path(path)
    with open(path, newline="") as fh:
        header = fh.readline().strip().split(",")
    if header not in (["i", "j", "x", "y", "u", "active"],
                      ["i", "j", "k", "x", "y", "z", "u", "active"]):
        raise SchemaError(f"{path}: unrecognized solution header {header}")
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    if data.ndim == 1:
        data = data[None, :]
    xi, yi = header.index("x"), header.index("y")
    return SolutionFile(path=path, x=data[:, xi], y=data[:, yi],
                        u=data[:, header.index("u")],
                        active=data[:, header.index("active")].astype(bool))


def discover(run_dir) -> dict[str, list[Path]]:
    """Locate report files of each kind under a run directory."""
    run = Path(run_dir)
    return {
        "trace": sorted(run.rglob("trace_*.csv")),
        "decay": sorted(run.rglob("decay_*.csv")),
        "convergence": sorted(run.rglob("convergence*.csv")),
        "boundary": sorted(run.rglob("boundary*.csv")),
    }
