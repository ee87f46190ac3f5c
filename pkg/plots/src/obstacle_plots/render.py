"""Figure rendering (headless, PNG + SVG, text kept as text in SVG).

One image per requested kind and input file.  Monotone traces are annotated
with their minimum forward difference; level-style annotations reuse the
exact cell strings from the CSV so rendered numbers match the files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt   # noqa: E402  (backend must be set first)
import numpy as np                # noqa: E402

from . import traces as tr        # noqa: E402

plt.rcParams.update({
    "svg.fonttype": "none",       # keep numbers greppable in the SVG
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
})

KINDS = ("phi", "adjusted", "monneau", "decay", "convergence", "boundary")
FORMATS = ("png", "svg")


def _save(fig, out_dir: Path, stem: str, formats=FORMATS) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for ext in formats:
        target = out_dir / f"{stem}.{ext}"
        fig.savefig(target, bbox_inches="tight")
        written.append(target)
    plt.close(fig)
    return written


def _slug(path: Path, run_dir: Path) -> str:
    rel = path.relative_to(run_dir)
    return "_".join(rel.with_suffix("").parts)


def _min_forward_difference(values: np.ndarray) -> float:
    finite = values[np.isfinite(values)]
    return float(np.min(np.diff(finite))) if finite.size > 1 else 0.0


def _trace_figure(trace: tr.TraceFile, column: str, title: str, ylabel: str):
    fig, ax = plt.subplots()
    vals = getattr(trace, column)
    mask = np.isfinite(vals)
    ax.plot(trace.r[mask], vals[mask], "o-", ms=3, lw=1.0)
    ax.set_xlabel("r")
    ax.set_ylabel(ylabel)
    mfd = _min_forward_difference(vals)
    last = int(np.nonzero(mask)[0][-1])
    ax.set_title(title)
    ax.annotate(f"min forward difference = {mfd:.3e}\n"
                f"{ylabel}(r={trace.cell(last, 'r')}) = {trace.cell(last, column)}",
                xy=(0.02, 0.02), xycoords="axes fraction", fontsize=7,
                family="monospace")
    return fig


def plot_phi(trace: tr.TraceFile, out_dir: Path, run_dir: Path, formats=FORMATS):
    fig = _trace_figure(trace, "phi", f"Weiss energy, {trace.path.name}", "phi")
    return _save(fig, out_dir, _slug(trace.path, run_dir) + "_phi", formats)


def plot_adjusted(trace: tr.TraceFile, out_dir: Path, run_dir: Path,
                  formats=FORMATS):
    constants = trace.meta.get("constants", {})
    title = (f"adjusted Weiss energy, {trace.path.name} "
             f"(C3={constants.get('c3bar', '?')}, C4={constants.get('c4', '?')})")
    fig = _trace_figure(trace, "phi_adjusted", title, "phi_adjusted")
    return _save(fig, out_dir, _slug(trace.path, run_dir) + "_adjusted", formats)


def plot_monneau(trace: tr.TraceFile, out_dir: Path, run_dir: Path,
                 formats=FORMATS):
    fig = _trace_figure(trace, "monneau",
                        f"singular-center functional, {trace.path.name}",
                        "monneau")
    return _save(fig, out_dir, _slug(trace.path, run_dir) + "_monneau", formats)


def plot_decay(decay: tr.DecayFile, out_dir: Path, run_dir: Path,
               formats=FORMATS):
    fig, ax = plt.subplots()
    ax.loglog(decay.r, decay.d, "o-", ms=3, lw=1.0, label="d(r)")
    ax.loglog(decay.r, decay.envelope, "--", lw=1.0, label="C7 rho(r)")
    ax.set_xlabel("r")
    ax.set_ylabel("boundary distance to blow-up")
    ax.set_title(f"uniqueness decay, {decay.path.name}")
    ax.legend(fontsize=7)
    ax.annotate(f"d(r={decay.raw[-1]['r']}) = {decay.raw[-1]['d']}",
                xy=(0.02, 0.02), xycoords="axes fraction", fontsize=7,
                family="monospace")
    return _save(fig, out_dir, _slug(decay.path, run_dir) + "_decay", formats)


def plot_convergence(conv: tr.ConvergenceFile, out_dir: Path, run_dir: Path,
                     formats=FORMATS):
    fig, ax = plt.subplots()
    ax.loglog(conv.h, conv.linf_error, "o-", ms=4, lw=1.0)
    ax.set_xlabel("h")
    ax.set_ylabel("L-inf error")
    ax.set_title(f"grid convergence, {conv.path.name}")
    # slope annotations come from the file's own order column
    orders = [row["order"] for row in conv.raw if row["order"] != ""]
    text = "observed order: " + ", ".join(orders) if orders else "single level"
    ax.annotate(text, xy=(0.02, 0.02), xycoords="axes fraction",
                fontsize=7, family="monospace")
    return _save(fig, out_dir, _slug(conv.path, run_dir) + "_convergence", formats)


def plot_boundary(boundary: tr.BoundaryFile, out_dir: Path, run_dir: Path,
                  formats=FORMATS):
    fig, ax = plt.subplots(figsize=(5.0, 5.0))
    solution_csv = boundary.path.parent / "solution.csv"
    if solution_csv.exists():
        sol = tr.load_solution(solution_csv)
        ax.scatter(sol.x[sol.active], sol.y[sol.active], s=0.3, c="#c8d8f0",
                   marker="s", label="active set", rasterized=True)
    pts = boundary.points
    labels = np.array(boundary.labels)
    gamma = labels == "gamma"
    ax.plot(pts[gamma, 0], pts[gamma, 1], ".", ms=1.5, c="#1f3b70",
            label="free boundary")
    for kind, color in (("center_A", "#c02020"), ("center_B", "#108040")):
        sel = labels == kind
        if np.any(sel):
            ax.plot(pts[sel, 0], pts[sel, 1], "o", ms=6, mfc="none", c=color,
                    label=kind)
    for k in np.nonzero(labels == "center_A")[0]:
        nu = boundary.normals[k]
        if np.all(np.isfinite(nu)):
            ax.annotate("", xy=pts[k] + 0.12 * nu, xytext=pts[k],
                        arrowprops={"arrowstyle": "->", "color": "#c02020"})
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title(f"free boundary and classified centers, {boundary.path.name}")
    ax.legend(fontsize=7, loc="upper right")
    return _save(fig, out_dir, _slug(boundary.path, run_dir) + "_boundary", formats)


def render(run_dir, out_dir=None, kinds=KINDS, formats=FORMATS) -> dict[str, list[Path]]:
    """Render the requested kinds for every matching file under run_dir.

    Raises SchemaError on malformed inputs and FileNotFoundError when a
    requested kind has no inputs at all.
    """
    run_dir = Path(run_dir)
    out = Path(out_dir) if out_dir else run_dir / "figures"
    found = tr.discover(run_dir)
    written: dict[str, list[Path]] = {k: [] for k in kinds}
    parsed_traces = [tr.load_trace(p) for p in found["trace"]]
    for kind in kinds:
        if kind == "phi":
            for trace in parsed_traces:
                written[kind] += plot_phi(trace, out, run_dir, formats)
        elif kind == "adjusted":
            for trace in parsed_traces:
                if trace.has("phi_adjusted"):
                    written[kind] += plot_adjusted(trace, out, run_dir, formats)
        elif kind == "monneau":
            for trace in parsed_traces:
                if trace.has("monneau"):
                    written[kind] += plot_monneau(trace, out, run_dir, formats)
        elif kind == "decay":
            for path in found["decay"]:
                written[kind] += plot_decay(tr.load_decay(path), out, run_dir,
                                            formats)
        elif kind == "convergence":
            for path in found["convergence"]:
                written[kind] += plot_convergence(tr.load_convergence(path), out,
                                                  run_dir, formats)
        elif kind == "boundary":
            for path in found["boundary"]:
                written[kind] += plot_boundary(tr.load_boundary(path), out,
                                               run_dir, formats)
        else:
            raise ValueError(f"unknown figure kind {kind!r}")
        if not written[kind]:
            raise FileNotFoundError(f"no inputs for figure kind {kind!r} "
                                    f"under {run_dir}")
    return written
