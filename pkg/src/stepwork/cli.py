"""Command-line front end: runs pipelines and writes machine-readable tables.

Subcommands
-----------
run-center   work distributions + free-energy profile for the trap-center pull
run-spring   the same for the spring-constant pull
sweep        endpoint free energy versus a, n_max, or dlambda (CSV + line fit)
pathways     transition scan and pathway decomposition in the enumeration regime

Exit codes: 0 success, 1 numerical failure, 2 configuration or I/O error.
Identical configurations produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import export
from .errors import EnumerationCap, GridTooNarrow, MassLeak, NonPositiveAverage
from .free_energy import (
    delta_f_target_center,
    free_energy_profile,
    ground_state_closed_form_center,
)
from .pathways import decompose_free_energy, find_optimal_transitions, overlap_measure
from .protocol import build_center_schedule, build_spring_schedule, default_temperature_sweep
from .spectra import analytic_target_spring
from .workdist import fluctuation_density

_CENTER_DEFAULTS = {"protocol": "center", "lambda_s": 1.0, "s": 11, "a": 1.0,
                    "n_max": 10, "x_points": None, "w_points": None,
                    "out": ".", "jobs": 1}
_SPRING_DEFAULTS = {"protocol": "spring", "omega_ratio": 1.3, "s": 11, "a": 0.1,
                    "n_max": 100, "x_points": None, "w_points": None,
                    "out": ".", "jobs": 1}
_PATHWAY_DEFAULTS = {"protocol": "center", "lambda_s": 1.0, "s": 3, "a": 1.0,
                     "n_max": 3, "tol": 0.05, "eps": 1e-12, "out": ".", "jobs": 1}


class _ConfigError(Exception):
    pass


def _fail(token, detail, code):
    print(f"error: {token}: {detail}", file=sys.stderr)
    return code


def _load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise _ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise _ConfigError("config file must hold a JSON object")
    return cfg


def _resolve(args, defaults, flag_names):
    """defaults < config file < command-line flags."""
    cfg = dict(defaults)
    if args.config:
        file_cfg = _load_config(args.config)
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise _ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    for flag, key in flag_names.items():
        value = getattr(args, flag)
        if value is not None:
            cfg[key] = value
    return cfg


def _ensure_outdir(out):
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise PermissionError(str(exc)) from exc
    if not os.access(out, os.W_OK):
        raise PermissionError(f"{out} is not writable")
    return out


def _center_schedule_from(cfg):
    if cfg.get("dlambda") is not None:
        cfg = dict(cfg)
        cfg["lambda_s"] = cfg.pop("dlambda") * (cfg["s"] - 1)
    return build_center_schedule(cfg["lambda_s"], cfg["s"], cfg["a"], cfg["n_max"],
                                 x_points=cfg.get("x_points"),
                                 w_points=cfg.get("w_points"))


def _schedule_meta(cfg, schedule):
    meta = {k: v for k, v in cfg.items() if v is not None}
    meta["increment"] = schedule.increment
    meta["x_points_resolved"] = schedule.x_grid.points
    meta["w_points_resolved"] = schedule.w_grid.points
    return meta


def _write_run_outputs(profile, out, meta):
    schedule = profile.schedule
    header, rows = export.profile_rows(profile)
    export.write_csv(os.path.join(out, "profile.csv"), header, rows, meta)
    for i in range(2, schedule.s + 1):
        header, rows = export.density_rows(profile.ledger.rho(i))
        export.write_csv(os.path.join(out, f"workdist_step_{i}.csv"), header, rows, meta)


def cmd_run_center(args):
    cfg = _resolve(args, {**_CENTER_DEFAULTS, "dlambda": None},
                   {"s": "s", "a": "a", "nmax": "n_max", "dlambda": "dlambda",
                    "lambda_s": "lambda_s", "out": "out", "jobs": "jobs",
                    "x_points": "x_points", "w_points": "w_points"})
    out = _ensure_outdir(cfg["out"])
    schedule = _center_schedule_from(cfg)
    profile = free_energy_profile(schedule)
    _write_run_outputs(profile, out, _schedule_meta(cfg, schedule))
    print(f"run-center: s={schedule.s} a={schedule.a} n_max={schedule.n_max} "
          f"dF={export.format_number(profile.endpoint)}")
    return 0


def cmd_run_spring(args):
    cfg = _resolve(args, _SPRING_DEFAULTS,
                   {"s": "s", "a": "a", "nmax": "n_max", "omega_ratio": "omega_ratio",
                    "out": "out", "jobs": "jobs",
                    "x_points": "x_points", "w_points": "w_points"})
    out = _ensure_outdir(cfg["out"])
    schedule = build_spring_schedule(cfg["omega_ratio"], cfg["s"], cfg["a"], cfg["n_max"],
                                     x_points=cfg.get("x_points"),
                                     w_points=cfg.get("w_points"))
    profile = free_energy_profile(schedule)
    meta = _schedule_meta(cfg, schedule)
    meta["delta"] = schedule.increment
    _write_run_outputs(profile, out, meta)
    print(f"run-spring: s={schedule.s} a0={schedule.a} n_max={schedule.n_max} "
          f"dF={export.format_number(profile.endpoint)}")
    return 0


def _sweep_point(cfg, param, value):
    """One sweep evaluation; module-level so worker processes can pickle it."""
    point = dict(cfg)
    if param == "a":
        point["a"] = float(value)
    elif param == "nmax":
        point["n_max"] = int(value)
    elif param == "dlambda":
        n_steps = 1.0 / value
        if abs(n_steps - round(n_steps)) > 1e-9:
            raise _ConfigError(f"dlambda {value} does not divide lambda_s = 1 evenly")
        point["s"] = int(round(n_steps)) + 1
        point["lambda_s"] = float(value) * (point["s"] - 1)
    if point["protocol"] == "center":
        schedule = _center_schedule_from(point)
        oracle = (ground_state_closed_form_center(schedule.a, schedule.increment, schedule.s)
                  if schedule.n_max == 0 else delta_f_target_center(schedule.lambda_s))
    else:
        schedule = build_spring_schedule(point["omega_ratio"], point["s"], point["a"],
                                         point["n_max"], x_points=point.get("x_points"),
                                         w_points=point.get("w_points"))
        oracle = analytic_target_spring(schedule.a, schedule.controls[-1])
    profile = free_energy_profile(schedule)
    mean_w = float(profile.mean_work[-1])
    std_w = float(profile.std_work[-1])
    return (float(value), profile.endpoint, mean_w, std_w, float(oracle))


def cmd_sweep(args):
    defaults = {**_CENTER_DEFAULTS, "omega_ratio": 1.3,
                "sweep_param": "a", "sweep_values": None, "dlambda": None}
    cfg = _resolve(args, defaults,
                   {"s": "s", "a": "a", "nmax": "n_max", "out": "out", "jobs": "jobs",
                    "protocol": "protocol", "param": "sweep_param",
                    "values": "sweep_values", "omega_ratio": "omega_ratio",
                    "x_points": "x_points", "w_points": "w_points"})
    if cfg["protocol"] not in ("center", "spring"):
        raise _ConfigError(f"unknown protocol {cfg['protocol']}")
    param = cfg["sweep_param"]
    if param not in ("a", "nmax", "dlambda"):
        raise _ConfigError(f"sweep parameter must be a, nmax, or dlambda, not {param}")
    if param == "dlambda" and cfg["protocol"] != "center":
        raise _ConfigError("the dlambda sweep applies to the center protocol")
    if not cfg["sweep_values"]:
        if param != "a":
            raise _ConfigError("sweep needs a non-empty --values list")
        cfg["sweep_values"] = default_temperature_sweep()
    values = [float(v) for v in cfg["sweep_values"]]
    out = _ensure_outdir(cfg["out"])

    jobs = int(cfg["jobs"])
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_point, [cfg] * len(values),
                                 [param] * len(values), values))
    else:
        rows = [_sweep_point(cfg, param, v) for v in values]

    meta = {k: v for k, v in cfg.items() if v is not None}
    path = os.path.join(out, "sweep.csv")
    header = [param, "delta_F", "mean_W", "std_W", "oracle"]
    lines = ["# config: " + json.dumps(meta, sort_keys=True, separators=(",", ":"))]
    if param == "dlambda":
        slope, intercept = np.polyfit([r[0] for r in rows], [r[1] for r in rows], 1)
        lines.append(f"# fit: slope={export.format_number(float(slope))} "
                     f"intercept={export.format_number(float(intercept))}")
        print(f"sweep fit: slope={export.format_number(float(slope))} "
              f"intercept={export.format_number(float(intercept))}")
    lines.append(",".join(header))
    lines.extend(",".join(export.format_number(v) for v in row) for row in rows)
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"sweep: wrote {len(rows)} points to {path}")
    return 0


def cmd_pathways(args):
    cfg = _resolve(args, _PATHWAY_DEFAULTS,
                   {"s": "s", "a": "a", "nmax": "n_max", "tol": "tol", "eps": "eps",
                    "lambda_s": "lambda_s", "out": "out", "jobs": "jobs"})
    out = _ensure_outdir(cfg["out"])
    schedule = build_center_schedule(cfg["lambda_s"], cfg["s"], cfg["a"], cfg["n_max"])
    tol, eps = float(cfg["tol"]), float(cfg["eps"])

    records = []
    for i in range(2, schedule.s + 1):
        scan = find_optimal_transitions(schedule, i, tol=tol, eps_rel=eps)
        records.extend(scan.records)
    header = ["step", "n_prev", "n_next", "x_prev", "x_next",
              "e_prev", "e_next", "r12a", "r12b", "r13", "class"]
    rows = [(r.step, r.n_prev, r.n_next, r.x_prev, r.x_next, r.e_prev, r.e_next,
             r.r12a, r.r12b, r.r13, r.label.value) for r in records]
    meta = {k: v for k, v in cfg.items() if v is not None}
    export.write_csv(os.path.join(out, "transitions.csv"), header, rows, meta)

    decomp = decompose_free_energy(schedule, tol=tol, eps_rel=eps)
    overlaps = []
    for i in range(1, schedule.s - 1):
        f_prev = fluctuation_density(schedule.spectrum(i), schedule.a, schedule.x_grid)
        f_next = fluctuation_density(schedule.spectrum(i + 1), schedule.a, schedule.x_grid)
        dx, mass = overlap_measure(f_prev, f_next)
        overlaps.append({"steps": [i, i + 1], "dx": dx, "mass": mass})
    payload = {
        "config": meta,
        "delta_F": {"total": decomp.df_total, "stochastic": decomp.df_stochastic,
                    "deterministic": decomp.df_deterministic,
                    "optimal": decomp.df_optimal, "biased": decomp.df_biased},
        "contributions": decomp.contributions,
        "counts": decomp.counts,
        "reconstruction_error": decomp.reconstruction_error,
        "overlaps": overlaps,
    }
    export.write_json(os.path.join(out, "decomposition.json"), payload)
    print(f"pathways: {len(records)} optimal transitions, "
          f"reconstruction error {export.format_number(decomp.reconstruction_error)}")
    return 0


def _add_common(parser):
    parser.add_argument("--config", help="JSON config file; flags override it")
    parser.add_argument("--out", help="output directory (default: current)")
    parser.add_argument("--jobs", type=int, help="worker processes for sweeps")
    parser.add_argument("--s", type=int, help="number of pulling steps")
    parser.add_argument("--a", type=float, help="reduced temperature")
    parser.add_argument("--nmax", type=int, help="eigenbasis truncation")
    parser.add_argument("--x-points", type=int, dest="x_points",
                        help="override position-grid point count")
    parser.add_argument("--w-points", type=int, dest="w_points",
                        help="override work-grid point count")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stepwork",
        description="Free-energy changes from step-wise pulling work distributions.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run-center", help="trap-center pulling run")
    _add_common(p)
    p.add_argument("--dlambda", type=float, help="pull increment (sets lambda_s = dlambda*(s-1))")
    p.add_argument("--lambda-s", type=float, dest="lambda_s", help="total pull distance")
    p.set_defaults(func=cmd_run_center)

    p = sub.add_parser("run-spring", help="spring-constant pulling run")
    _add_common(p)
    p.add_argument("--omega-ratio", type=float, dest="omega_ratio",
                   help="final over initial frequency")
    p.set_defaults(func=cmd_run_spring)

    p = sub.add_parser("sweep", help="endpoint free energy versus one parameter")
    _add_common(p)
    p.add_argument("--protocol", choices=["center", "spring"])
    p.add_argument("--param", choices=["a", "nmax", "dlambda"])
    p.add_argument("--values", type=lambda s: [float(v) for v in s.split(",")],
                   help="comma-separated sweep values")
    p.add_argument("--omega-ratio", type=float, dest="omega_ratio")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("pathways", help="transition scan and pathway decomposition")
    _add_common(p)
    p.add_argument("--lambda-s", type=float, dest="lambda_s")
    p.add_argument("--tol", type=float, help="residual tolerance (log-ratio units)")
    p.add_argument("--eps", type=float, help="relative density floor")
    p.set_defaults(func=cmd_pathways)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _ConfigError as exc:
        return _fail("config", str(exc), 2)
    except PermissionError as exc:
        return _fail("output-unwritable", str(exc), 2)
    except EnumerationCap as exc:
        return _fail("enumeration-cap", str(exc), 2)
    except MassLeak as exc:
        return _fail("mass-leak", str(exc), 1)
    except NonPositiveAverage as exc:
        return _fail("non-positive-average", str(exc), 1)
    except GridTooNarrow as exc:
        return _fail("grid-too-narrow", str(exc), 1)
    except (ValueError, OSError) as exc:
        return _fail("config", str(exc), 2)


if __name__ == "__main__":
    sys.exit(main())
