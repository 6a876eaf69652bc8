"""Command-line entry point: ``vtolftc run|tune|analyze|compare``.

Failures print a single JSON line on stderr (``{"error": kind, ...}``) and
exit nonzero: 2 for invalid input, 3 for a diverged run, 4 for I/O.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from .config import ConfigError, parse_section
from .control import WeightingParams
from .scenario import (
    Scenario, canonical_document, compare_runs, compute_metrics, dump_gains, export_csv,
    load_gains, load_scenario, read_csv, run_scenario,
)
from .synthesis import CHANNELS, LoopDefinition, StructuredHinfTuner, default_loops, robust_stability_grid
from .vehicle import FaultEvent

EXIT_INVALID, EXIT_DIVERGED, EXIT_IO = 2, 3, 4


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str, **extra):
        super().__init__(message)
        self.code, self.kind, self.extra = code, kind, extra


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(EXIT_IO, "io", str(exc), path=str(out)) from None
    return out


def _load(ref: str, args) -> Scenario:
    s = load_scenario(ref)
    if args.seed is not None:
        s = s.with_(seed=args.seed)
    if args.no_realloc:
        s = s.with_(reallocation=False)
    return s


def _run_label(s: Scenario) -> str:
    return s.name if s.reallocation else f"{s.name}-noca"


def _write_echo(s: Scenario, path: Path) -> None:
    path.write_text(yaml.safe_dump(canonical_document(s), sort_keys=False))


def cmd_run(args) -> int:
    s = _load(args.scenario, args)
    out = _out_dir(args)
    label = _run_label(s)
    trace = run_scenario(s)
    _write_echo(s, out / f"{label}.scenario.yaml")
    if args.csv:
        export_csv(trace, out / f"{label}.csv")
    m = compute_metrics(trace, s)
    row = m.as_row()
    (out / f"{label}.metrics.yaml").write_text(
        yaml.safe_dump({k: (float(v) if isinstance(v, (float, np.floating)) else v)
                        for k, v in row.items()}, sort_keys=False))
    for k, v in row.items():
        print(f"{k:24s} {v}")
    if trace.failed:
        raise CliError(EXIT_DIVERGED, "divergence", trace.failure, scenario=s.name)
    return 0


_LOOP_SCHEMA = {
    "plant_gain": "dimensionless", "M": "dimensionless", "A": "dimensionless",
    "omega_b": "rate", "r_max": "dimensionless", "u_max": "dimensionless", "omega_a": "rate",
}


def _load_loopset(ref: str):
    loops = default_loops()
    if ref == "default":
        return loops
    doc = yaml.safe_load(Path(ref).read_text())
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "loop set must map channel names to weight overrides")
    for name, section in doc.items():
        if name not in CHANNELS:
            raise ConfigError(name, f"unknown channel (expected one of {list(CHANNELS)})")
        vals = parse_section(section, _LOOP_SCHEMA, name)
        base = loops[name]
        gain = vals.pop("plant_gain", base.plant_gain)
        w = base.weights
        weights = WeightingParams(**{**{f: getattr(w, f) for f in
                                        ("M", "A", "omega_b", "r_max", "u_max", "omega_a")}, **vals})
        loops[name] = LoopDefinition(name, gain, weights, base.grid, base.N)
    return loops


def cmd_tune(args) -> int:
    loops = _load_loopset(args.loopset)
    tuner = StructuredHinfTuner(seed=args.seed or 0).fit(loops)
    out = _out_dir(args)
    (out / "gains.yaml").write_text(dump_gains(tuner.gains_))
    for name in loops:
        print(f"{name:9s} cost={tuner.costs_[name]:.4f} gains={np.round(tuner.gains_[name], 6).tolist()}")
    return 0


def cmd_analyze(args) -> int:
    if args.gains == "default":
        gains = load_scenario({}).gains
    else:
        gains = load_gains(Path(args.gains).read_text())
    report = robust_stability_grid(gains, gamma_steps=args.steps)
    out = _out_dir(args)
    with (out / "stability.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["gamma_T", "gamma_L", "gamma_M", "gamma_N", "max_re_eig"])
        for row in report.rows():
            w.writerow([format(float(v), ".17g") for v in row])
    point, worst = report.worst_case
    print(f"points={len(report.points)} worst_max_re={worst:.6g} "
          f"at {np.round(point, 4).tolist()} verdict={report.verdict}")
    return 0


def _scenario_for_trace(path: Path, trace) -> Scenario:
    echo = path.with_suffix(".scenario.yaml")
    if echo.exists():
        return load_scenario(echo.read_text())
    # no echo: recover the first fault time from the effectiveness columns
    w = trace.data[:, [i for i, c in enumerate(trace.columns) if c.startswith("w_")]]
    changed = np.flatnonzero(np.any(w != w[0], axis=1))
    faults = ()
    if len(changed):
        i = int(np.argmax(np.abs(w[changed[0]] - w[0]))) + 1
        faults = (FaultEvent(float(trace.t[changed[0]]), i, float(w[changed[0], i - 1])),)
    return Scenario(name=path.stem, faults=faults, duration=float(trace.t[-1]) or 1.0,
                    dt_control=trace.dt_control or 0.01, dt_physics=(trace.dt_control or 0.01) / 5)


def _run_one(s: Scenario):
    return run_scenario(s)


def cmd_compare(args) -> int:
    items = []
    pending = []
    for ref in args.traces:
        path = Path(ref)
        if path.suffix == ".csv":
            trace = read_csv(path)
            items.append((path.stem, trace, _scenario_for_trace(path, trace)))
        else:
            s = _load(ref, args)
            if args.triplet:
                pending += [s.with_(name=f"{s.name}-nofault", faults=()),
                            s.with_(reallocation=False), s.with_(reallocation=True)]
            else:
                pending.append(s)
    if pending:
        with ProcessPoolExecutor(max_workers=min(len(pending), 4)) as pool:
            traces = list(pool.map(_run_one, pending))
        items += [(_run_label(s), tr, s) for s, tr in zip(pending, traces)]
    report = compare_runs(items)
    print(report.to_text())
    out = _out_dir(args)
    (out / "comparison.txt").write_text(report.to_text() + "\n")
    if args.csv:
        report.to_csv(out / "comparison.csv")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", default="out", help="directory for outputs (default: out)")
    common.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    common.add_argument("--no-realloc", action="store_true",
                        help="give the allocator the identity instead of the true effectiveness")
    common.add_argument("--csv", action="store_true", help="also write CSV outputs")

    p = argparse.ArgumentParser(prog="vtolftc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="simulate one scenario")
    r.add_argument("scenario", help="scenario YAML file or shipped name")
    r.set_defaults(func=cmd_run)
    t = sub.add_parser("tune", parents=[common], help="tune the four P-PID cascades")
    t.add_argument("loopset", nargs="?", default="default",
                   help="'default' or a YAML file of per-channel weight overrides")
    t.set_defaults(func=cmd_tune)
    a = sub.add_parser("analyze", parents=[common], help="robust-stability grid over actuator loss")
    a.add_argument("gains", nargs="?", default="default", help="'default' or a gains YAML file")
    a.add_argument("--steps", type=int, default=5, help="grid points per loss axis")
    a.set_defaults(func=cmd_analyze)
    c = sub.add_parser("compare", parents=[common], help="compare traces or scenario runs")
    c.add_argument("traces", nargs="+", help="trace CSV files or scenarios to run")
    c.add_argument("--triplet", action="store_true",
                   help="for each scenario run no-fault, without and with reallocation")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        err = {"error": exc.kind, "message": str(exc), **exc.extra}
        code = exc.code
    except ConfigError as exc:
        err = {"error": "validation", "path": exc.path, "message": str(exc)}
        code = EXIT_INVALID
    except (ValueError, KeyError) as exc:
        err = {"error": "validation", "message": str(exc)}
        code = EXIT_INVALID
    except OSError as exc:
        err = {"error": "io", "message": str(exc)}
        code = EXIT_IO
    print(json.dumps(err), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
