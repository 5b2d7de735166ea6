"""Trajectory export: delimited tables, event records, and figures.

Everything here writes deterministic bytes for a fixed trajectory: rows
in evolution order, floats through repr-faithful %.17g, JSON with sorted
keys.  The figures are rendered headlessly next to the data files so a
run can be inspected without re-loading anything.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .dynamics import Trajectory
from .fields import ExternalField
from .state import EquilibriumState, density_at

TRAJECTORY_SCHEMA = "eqflow-trajectory-v1"


def _fmt(x: float) -> str:
    return "%.17g" % x


def trajectory_csv(traj: Trajectory) -> str:
    """Render every stored state as one CSV row.

    Columns hold the endpoints and double-zero coordinates padded to the
    widest configuration on the trajectory; a state with fewer cuts
    leaves its extra cells empty.  The first line carries the schema
    tag as a comment.
    """
    n_end = max(len(s.endpoints) for s in traj.states)
    n_real = max(len(s.b_real) for s in traj.states)
    n_pair = max(len(s.b_pairs) for s in traj.states)
    cols = ["t"]
    cols += [f"a_{i + 1}" for i in range(n_end)]
    cols += [f"b_real_{i + 1}" for i in range(n_real)]
    for i in range(n_pair):
        cols += [f"b_re_{i + 1}", f"b_im_{i + 1}"]
    cols += ["c_t", "rho", "energy", "p"]
    lines = [f"# schema: {TRAJECTORY_SCHEMA}", ",".join(cols)]
    for s in traj.states:
        row = [_fmt(s.t)]
        row += [_fmt(a) for a in s.endpoints]
        row += [""] * (n_end - len(s.endpoints))
        row += [_fmt(b) for b in s.b_real]
        row += [""] * (n_real - len(s.b_real))
        for re, im in s.b_pairs:
            row += [_fmt(re), _fmt(im)]
        row += [""] * (2 * (n_pair - len(s.b_pairs)))
        row += [_fmt(s.c_t), _fmt(s.rho), _fmt(s.energy), str(s.cfg.p)]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def events_json(traj: Trajectory) -> str:
    return json.dumps([e.as_dict() for e in traj.events],
                      indent=2, sort_keys=True) + "\n"


def field_json(field: ExternalField) -> str:
    return json.dumps({"m": field.m, "couplings": list(field.couplings)},
                      indent=2, sort_keys=True) + "\n"


def field_from_json(text: str) -> ExternalField:
    doc = json.loads(text)
    return ExternalField(m=int(doc["m"]),
                         couplings=tuple(float(c) for c in doc["couplings"]))


# ----------------------------------------------------------------------
# figures


def _event_markers(ax, traj: Trajectory):
    for e in traj.events:
        ax.axvline(e.time, color="0.6", lw=0.8, ls="--")
        ax.annotate(e.kind, (e.time, 1.0), xycoords=("data", "axes fraction"),
                    rotation=90, fontsize=7, va="top", ha="right")


def support_figure(traj: Trajectory, path: Path):
    """Endpoints against mass, cuts shaded, events marked."""
    fig, ax = plt.subplots(figsize=(7.0, 4.0), dpi=130)
    n_end = max(len(s.endpoints) for s in traj.states)
    for i in range(n_end):
        xs = [s.t for s in traj.states if len(s.endpoints) > i]
        ys = [s.endpoints[i] for s in traj.states if len(s.endpoints) > i]
        ax.plot(xs, ys, lw=1.2, color="C0")
    for s in traj.states[:: max(1, len(traj.states) // 160)]:
        for u, v in s.cfg.cuts():
            ax.plot([s.t, s.t], [u, v], color="C0", alpha=0.12, lw=2.5)
    for s in traj.states:
        for re, _ in s.b_pairs:
            ax.plot([s.t], [re], ",", color="C3", alpha=0.6)
        for b in s.b_real:
            ax.plot([s.t], [b], ",", color="C2", alpha=0.8)
    _event_markers(ax, traj)
    ax.set_xlabel("mass t")
    ax.set_ylabel("support")
    ax.set_title("support evolution")
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": "eqflow"})
    plt.close(fig)


def density_figure(traj: Trajectory, path: Path, n_snapshots: int = 6):
    """Density profiles at evenly spaced masses along the run."""
    fig, ax = plt.subplots(figsize=(7.0, 4.0), dpi=130)
    idx = np.unique(np.linspace(0, len(traj.states) - 1,
                                n_snapshots).astype(int))
    lo = min(s.endpoints[0] for s in traj.states)
    hi = max(s.endpoints[-1] for s in traj.states)
    pad = 0.05 * (hi - lo)
    grid = np.linspace(lo - pad, hi + pad, 900)
    for j, i in enumerate(idx):
        s = traj.states[i]
        ax.plot(grid, density_at(s, grid), lw=1.0,
                color=plt.cm.viridis(j / max(1, len(idx) - 1)),
                label=f"t = {s.t:.4g}")
    ax.set_xlabel("x")
    ax.set_ylabel("density")
    ax.set_title("density snapshots")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": "eqflow"})
    plt.close(fig)


def scalars_figure(traj: Trajectory, path: Path):
    """Equilibrium constant, Robin constant, and energy against mass."""
    fig, axes = plt.subplots(3, 1, figsize=(7.0, 6.0), dpi=130, sharex=True)
    ts = [s.t for s in traj.states]
    for ax, vals, label in zip(
            axes,
            ([s.c_t for s in traj.states], [s.rho for s in traj.states],
             [s.energy for s in traj.states]),
            ("equilibrium constant", "Robin constant", "energy")):
        ax.plot(ts, vals, lw=1.2)
        ax.set_ylabel(label, fontsize=8)
        _event_markers(ax, traj)
    axes[-1].set_xlabel("mass t")
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": "eqflow"})
    plt.close(fig)


def write_run(traj: Trajectory, out_dir: str | Path,
              figures: bool = True) -> dict:
    """Write the CSV, events, field, and figures for one run.

    Returns a manifest mapping artifact names to paths.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {}
    (out / "trajectory.csv").write_text(trajectory_csv(traj))
    manifest["trajectory"] = str(out / "trajectory.csv")
    (out / "events.json").write_text(events_json(traj))
    manifest["events"] = str(out / "events.json")
    (out / "field.json").write_text(field_json(traj.field))
    manifest["field"] = str(out / "field.json")
    if figures:
        support_figure(traj, out / "support.png")
        density_figure(traj, out / "densities.png")
        scalars_figure(traj, out / "scalars.png")
        manifest["figures"] = [str(out / "support.png"),
                               str(out / "densities.png"),
                               str(out / "scalars.png")]
    return manifest
