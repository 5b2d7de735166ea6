"""Command-line front end: field parsing, runs, reports, and export.

Subcommands:

    evolve    run a family across a mass range, write table + events
    classify  scenario of a quartic field from its critical points
    probe     scaling fit or derivative limits at one detected event
    fekete    discrete-minimizer comparison against the continuum
    sweep     classification over a grid of upper critical points

Any domain error exits nonzero after printing a machine-readable JSON
object with the error type and message.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path

from .dynamics import EvolveOptions, evolve
from .errors import EqflowError
from .fekete import compare_to_equilibrium, fekete_points
from .fields import ExternalField
from .probes import robin_derivative_jump, scaling_probe
from .quartic import QuarticField, classify
from .reporting import field_from_json, field_json, write_run
from .state import state_to_json


def _parse_complex(text: str) -> complex:
    try:
        return complex(text.replace("i", "j").replace(" ", ""))
    except ValueError as exc:
        raise EqflowError(f"cannot parse {text!r} as a complex number") from exc


def _field_from_args(args) -> ExternalField:
    if getattr(args, "field", None):
        raw = args.field
        path = Path(raw)
        try:
            if path.exists():
                return field_from_json(path.read_text())
            return field_from_json(raw)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise EqflowError(
                f"cannot parse field spec {raw!r}: {exc}") from exc
    if getattr(args, "alpha", None):
        alpha = _parse_complex(args.alpha)
        beta = _parse_complex(args.beta) if getattr(args, "beta", None) \
            else alpha.conjugate()
        return ExternalField.quartic_from_critical_points(alpha, beta)
    raise EqflowError("no field given: pass --field or --alpha")


def _quartic_from_args(args) -> QuarticField:
    if getattr(args, "alpha", None):
        alpha = _parse_complex(args.alpha)
        beta = _parse_complex(args.beta) if getattr(args, "beta", None) \
            else None
        return QuarticField.from_critical_points(alpha, beta)
    return QuarticField.from_external(_field_from_args(args))


def _emit(doc: dict, args) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n"
    out = getattr(args, "out", None)
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / "report.json").write_text(text)
    sys.stdout.write(text)


def _jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return dataclasses.asdict(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not serializable: {type(obj)!r}")


def _run_trajectory(args):
    field = _field_from_args(args)
    opts = EvolveOptions(rtol=args.rtol) if args.rtol else EvolveOptions()
    return field, evolve(field, args.t_start, args.t_end, opts)


def cmd_evolve(args) -> int:
    field, traj = _run_trajectory(args)
    out = Path(args.out or "run")
    manifest = write_run(traj, out, figures=not args.no_figures)
    (out / "final_state.json").write_text(state_to_json(traj.states[-1]))
    manifest["final_state"] = str(out / "final_state.json")
    summary = {
        "schema": "eqflow-run-v1",
        "field": {"m": field.m, "couplings": list(field.couplings)},
        "t_range": list(traj.t_range),
        "n_states": len(traj.states),
        "events": [e.as_dict() for e in traj.events],
        "artifacts": manifest,
    }
    sys.stdout.write(json.dumps(summary, indent=2, sort_keys=True,
                                default=_jsonable) + "\n")
    return 0


def cmd_classify(args) -> int:
    qf = _quartic_from_args(args)
    cls = classify(qf)
    _emit({
        "schema": "eqflow-classify-v1",
        "scenario": cls.scenario,
        "slope_sq": cls.slope_sq,
        "boundary_slope_sq": cls.boundary_slope_sq,
        "birth_time": cls.birth_time,
        "fusion_time": cls.fusion_time,
        "normalization": dataclasses.asdict(qf.norm),
    }, args)
    return 0


def cmd_probe(args) -> int:
    _, traj = _run_trajectory(args)
    if not traj.events:
        event = None
    elif args.event_index >= len(traj.events):
        raise EqflowError(
            f"event index {args.event_index} out of range: "
            f"{len(traj.events)} events detected")
    else:
        event = traj.events[args.event_index]
    doc = {"schema": "eqflow-probe-v1",
           "events": [e.as_dict() for e in traj.events]}
    if args.mode in ("scaling", "both"):
        doc["scaling"] = dataclasses.asdict(scaling_probe(traj, event))
    if args.mode in ("jump", "both"):
        doc["jump"] = dataclasses.asdict(robin_derivative_jump(traj, event))
    _emit(doc, args)
    return 0


def cmd_fekete(args) -> int:
    field, traj = _run_trajectory(args)
    state = traj.states[-1]
    pc = fekete_points(field, state.t, args.n, state=state)
    dist = compare_to_equilibrium(pc, state)
    doc = {
        "schema": "eqflow-fekete-v1",
        "n": pc.n,
        "t": state.t,
        "distance": dist,
        "energy": pc.energy,
        "gradient_norm": pc.gradient_norm,
        "points": list(pc.points),
    }
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "points.csv").write_text(pc.csv())
        doc["points_csv"] = str(Path(args.out) / "points.csv")
    _emit(doc, args)
    return 0


def _classify_cell(re_im: tuple[float, float]) -> dict:
    re, im = re_im
    try:
        cls = classify(QuarticField.from_critical_points(complex(re, im)))
        return {"alpha_re": re, "alpha_im": im, "scenario": cls.scenario,
                "slope_sq": cls.slope_sq, "birth_time": cls.birth_time,
                "fusion_time": cls.fusion_time}
    except EqflowError as exc:
        return {"alpha_re": re, "alpha_im": im, "scenario": "Error",
                "error": f"{type(exc).__name__}: {exc}"}


def cmd_sweep(args) -> int:
    res = args.grid
    res_re = [args.re_min + i * (args.re_max - args.re_min) / (res - 1)
              for i in range(res)] if res > 1 else [args.re_min]
    res_im = [args.im_min + i * (args.im_max - args.im_min) / (res - 1)
              for i in range(res)] if res > 1 else [args.im_min]
    cells = [(re, im) for re in res_re for im in res_im]
    if args.workers > 1:
        from multiprocessing import Pool

        with Pool(args.workers) as pool:
            rows = pool.map(_classify_cell, cells)
    else:
        rows = [_classify_cell(c) for c in cells]
    doc = {"schema": "eqflow-sweep-v1", "grid": res, "rows": rows}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        lines = ["alpha_re,alpha_im,scenario,slope_sq"]
        lines += [f"{r['alpha_re']:.17g},{r['alpha_im']:.17g},"
                  f"{r['scenario']},{r.get('slope_sq', float('nan')):.17g}"
                  for r in rows]
        (out / "sweep.csv").write_text("\n".join(lines) + "\n")
        doc["sweep_csv"] = str(out / "sweep.csv")
    sys.stdout.write(json.dumps(doc, indent=2, sort_keys=True,
                                default=_jsonable) + "\n")
    return 0


def _add_field_args(p: argparse.ArgumentParser):
    p.add_argument("--field", help="field JSON: inline text or a file path "
                   "with schema {m, couplings[]}")
    p.add_argument("--alpha", help="upper critical point of a quartic field, "
                   "e.g. 1+0.2i")
    p.add_argument("--beta", help="second critical point (defaults to the "
                   "conjugate of alpha)")


def _add_run_args(p: argparse.ArgumentParser):
    _add_field_args(p)
    p.add_argument("--t-start", type=float, default=1e-3)
    p.add_argument("--t-end", type=float, default=1.0)
    p.add_argument("--rtol", type=float, default=None,
                   help="integrator relative tolerance (default 1e-9)")
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="eqflow",
        description="equilibrium-measure families in polynomial fields")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evolve", help="run a family across a mass range")
    _add_run_args(p)
    p.add_argument("--no-figures", action="store_true",
                   help="skip the rendered figures")
    p.set_defaults(fn=cmd_evolve)

    p = sub.add_parser("classify", help="scenario of a quartic field")
    _add_field_args(p)
    p.add_argument("--out", help="output directory")
    p.set_defaults(fn=cmd_classify)

    p = sub.add_parser("probe", help="scaling and jump reports at an event")
    _add_run_args(p)
    p.add_argument("--event-index", type=int, default=0)
    p.add_argument("--mode", choices=("scaling", "jump", "both"),
                   default="both")
    p.set_defaults(fn=cmd_probe)

    p = sub.add_parser("fekete", help="discrete-minimizer comparison")
    _add_run_args(p)
    p.add_argument("--n", type=int, default=64)
    p.set_defaults(fn=cmd_fekete)

    p = sub.add_parser("sweep", help="classify over a grid of critical points")
    p.add_argument("--re-min", type=float, default=0.2)
    p.add_argument("--re-max", type=float, default=1.6)
    p.add_argument("--im-min", type=float, default=0.05)
    p.add_argument("--im-max", type=float, default=0.8)
    p.add_argument("--grid", type=int, default=9)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="output directory")
    p.set_defaults(fn=cmd_sweep)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except EqflowError as exc:
        sys.stdout.write(json.dumps(
            {"error": type(exc).__name__, "message": str(exc)},
            indent=2, sort_keys=True) + "\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
