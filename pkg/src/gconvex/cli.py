"""Command-line front end.

Subcommands: check, solve, suite, envelope, classify. Exit codes: 0 on
success, 1 when an --expect or batch expectation fails, 2 on input errors.
Stdout carries only the summary JSON (6 significant digits); files written
via --out carry full precision (17 significant digits in CSV).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import characterization as char
from .catalog import generator
from .convexity import ScanGrid, check_shape, g_convex_envelope
from .errors import GConvexError
from .functions import SymbolicFunction, TabulatedFunction, compose
from .generators import GeneratorSpec
from .jensen import Scenario, verify_jensen, viability_check
from .mc import solve_mc
from .pde import PayoffSpec, SolverConfig, solve_pde

DEFAULT_SEED = 42


def _seed_from_env():
    raw = os.environ.get("GCONVEX_SEED")
    if raw is None:
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError as exc:
        raise SystemExit(f"GCONVEX_SEED must be an integer, got {raw!r}") from exc


def _round6(obj):
    if isinstance(obj, float):
        return float(f"{obj:.6g}")
    if isinstance(obj, dict):
        return {k: _round6(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round6(v) for v in obj]
    return obj


def _print_summary(payload):
    print(json.dumps(_round6(payload), sort_keys=True))


def _flatten(payload, prefix=""):
    rows = {}
    for key, value in payload.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            rows.update(_flatten(value, prefix=f"{name}."))
        elif isinstance(value, (list, tuple)):
            rows[name] = ";".join(_csv_cell(v) for v in value)
        else:
            rows[name] = _csv_cell(value)
    return rows


def _csv_cell(value):
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _write_report(path, payload, fmt, rows_key=None):
    """Write the report artifact; json keeps structure, csv flattens keys
    (one row per record when rows_key points at a list)."""
    if fmt == "json":
        with open(path, "w") as fh:
            json.dump(payload, fh, sort_keys=True, indent=2)
            fh.write("\n")
        return
    if rows_key is not None:
        records = [_flatten(rec) for rec in payload[rows_key]]
    else:
        records = [_flatten(payload)]
    keys = sorted(set().union(*records)) if records else []
    with open(path, "w") as fh:
        fh.write(",".join(keys) + "\n")
        for rec in records:
            fh.write(",".join(rec.get(k, "") for k in keys) + "\n")


def _load_h(args):
    if args.h is not None:
        return SymbolicFunction.from_source(args.h, var="y")
    data = np.loadtxt(args.h_table, delimiter=",", skiprows=_csv_header_rows(args.h_table))
    if data.ndim != 2 or data.shape[1] < 2:
        raise GConvexError(f"{args.h_table}: expected two CSV columns y,value")
    return TabulatedFunction(grid=data[:, 0], values=data[:, 1])


def _csv_header_rows(path):
    with open(path) as fh:
        first = fh.readline().split(",")[0].strip()
    try:
        float(first)
        return 0
    except ValueError:
        return 1


def _scan_from_args(args):
    kw = {}
    if args.T is not None:
        kw["t_values"] = (0.0, args.T / 2.0, args.T)
    if args.y_range is not None:
        kw["y_min"], kw["y_max"] = args.y_range
    if args.z_range is not None:
        kw["z_min"], kw["z_max"] = args.z_range
    if args.ny is not None:
        kw["n_y"] = args.ny
    if args.nz is not None:
        kw["n_z"] = args.nz
    return ScanGrid(**kw)


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------

def cmd_check(args):
    gen = GeneratorSpec.from_source(args.gen, dim_z=args.dim)
    h = _load_h(args)
    verdict = check_shape(gen, h, args.mode, scan=_scan_from_args(args))
    payload = verdict.to_json_dict()
    payload["gen"] = args.gen
    payload["mode"] = args.mode
    if args.out:
        _write_report(args.out, payload, args.format)
    _print_summary(payload)
    if args.expect is not None and verdict.decision != args.expect:
        return 1
    return 0


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------

def cmd_solve(args):
    gen = GeneratorSpec.from_source(args.gen, dim_z=1)
    payoff = PayoffSpec.from_source(args.payoff)
    config = SolverConfig(n_x=args.nx, half_width=args.half_width)
    payload = {"gen": args.gen, "payoff": args.payoff, "T": args.T,
               "method": args.method}
    exit_code = 0
    if args.method in ("pde", "both"):
        res = solve_pde(gen, payoff, args.T, config=config)
        payload["pde"] = {"y0": res.value_at(0.0, config.center),
                          "dt": res.time.dt, "dx": res.space.dx,
                          "n_steps": res.time.n_steps, "n_x": res.space.n}
        if args.out and args.format == "csv":
            res.to_csv(args.out)
    if args.method in ("mc", "both"):
        mc = solve_mc(gen, payoff, args.T, paths=args.paths, steps=args.steps,
                      basis_degree=args.degree, seed=args.seed)
        payload["mc"] = {"y0": mc.y0, "stderr": mc.stderr,
                         "paths": args.paths, "steps": args.steps,
                         "seed": args.seed}
    if args.method == "both":
        delta = abs(payload["pde"]["y0"] - payload["mc"]["y0"])
        tol = max(3.0 * payload["mc"]["stderr"], 2e-2)
        payload["cross_check"] = {"delta": delta, "tol": tol,
                                  "agree": delta <= tol}
        if not payload["cross_check"]["agree"]:
            exit_code = 1
    if args.out and args.format == "json":
        _write_report(args.out, payload, "json")
    _print_summary(payload)
    return exit_code


# ---------------------------------------------------------------------------
# suite
# ---------------------------------------------------------------------------

_SCENARIO_KEYS = {"name", "gen", "payoff", "h", "T", "times", "tol",
                  "solver", "expect"}
_SOLVER_KEYS = {"nx", "nt", "domain"}
_EXPECT_KEYS = {"jensen", "shape", "viability", "closed_form", "closed_form_tol"}


def _validate_keys(table, allowed, where):
    unknown = set(table) - allowed
    if unknown:
        raise GConvexError(f"{where}: unknown keys {sorted(unknown)}")


def _scenario_from_table(table, index):
    where = f"scenario #{index + 1}"
    _validate_keys(table, _SCENARIO_KEYS, where)
    for key in ("gen", "payoff", "h"):
        if key not in table:
            raise GConvexError(f"{where}: missing required key {key!r}")
    T = float(table.get("T", 1.0))
    solver = table.get("solver", {})
    _validate_keys(solver, _SOLVER_KEYS, f"{where}.solver")
    kw = {}
    if "nx" in solver:
        kw["n_x"] = int(solver["nx"])
    if "nt" in solver:
        kw["n_t"] = int(solver["nt"])
    if "domain" in solver:
        lo, hi = solver["domain"]
        kw["half_width"] = (float(hi) - float(lo)) / 2.0
        kw["center"] = (float(hi) + float(lo)) / 2.0
    config = SolverConfig(**kw)
    expect = table.get("expect", {})
    _validate_keys(expect, _EXPECT_KEYS, f"{where}.expect")
    scenario = Scenario(
        name=str(table.get("name", f"scenario-{index + 1}")),
        gen=generator(table["gen"]),
        payoff=PayoffSpec.from_source(table["payoff"]),
        h=SymbolicFunction.from_source(table["h"]),
        T=T,
        eval_times=tuple(float(t) for t in table.get("times", (0.0, T / 2))),
        config=config,
        tol=float(table["tol"]) if "tol" in table else None,
    )
    return scenario, expect


def _run_scenario(job):
    scenario, expect = job
    record = {"name": scenario.name, "gen": scenario.gen.expr.source,
              "failures": []}
    jensen = verify_jensen(scenario)
    record["jensen"] = jensen.to_json_dict()
    if "jensen" in expect and jensen.verdict != expect["jensen"]:
        record["failures"].append(
            f"jensen: expected {expect['jensen']}, got {jensen.verdict}")

    if "shape" in expect:
        verdict = check_shape(scenario.gen, scenario.h, "convex",
                              scan=ScanGrid.for_horizon(scenario.T))
        record["shape"] = verdict.to_json_dict()
        if verdict.decision != expect["shape"]:
            record["failures"].append(
                f"shape: expected {expect['shape']}, got {verdict.decision}")

    if "viability" in expect:
        viab = viability_check(
            scenario.gen, scenario.h, scenario.payoff,
            PayoffSpec(phi=compose(scenario.h, scenario.payoff.phi)),
            T=scenario.T, config=scenario.config, name=scenario.name)
        record["viability"] = viab.to_json_dict()
        if viab.viable != bool(expect["viability"]):
            record["failures"].append(
                f"viability: expected {expect['viability']}, got {viab.viable}")

    if "closed_form" in expect:
        want = float(expect["closed_form"])
        res = solve_pde(scenario.gen, scenario.payoff, scenario.T,
                        config=scenario.config)
        got = res.value_at(0.0, scenario.config.center)
        tol = float(expect.get("closed_form_tol", 5e-3))
        record["closed_form"] = {"want": want, "got": got, "tol": tol}
        if abs(got - want) > tol:
            record["failures"].append(
                f"closed_form: |{got:.6g} - {want:.6g}| > {tol:.1g}")
    return record


def cmd_suite(args):
    path = args.batch
    if path is None:
        from importlib.resources import files
        path = files("gconvex.data").joinpath("catalog.toml")
        raw = path.read_bytes()
    else:
        with open(path, "rb") as fh:
            raw = fh.read()
    batch = tomllib.loads(raw.decode())
    _validate_keys(batch, {"scenario"}, "batch file")
    tables = batch.get("scenario", [])
    if not tables:
        print("no scenarios", file=sys.stderr)
        return 2
    jobs = [_scenario_from_table(t, i) for i, t in enumerate(tables)]

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            records = list(pool.map(_run_scenario, jobs))
    else:
        records = [_run_scenario(job) for job in jobs]

    failed = [r["name"] for r in records if r["failures"]]
    payload = {"scenarios": records, "failed": failed,
               "passed": len(records) - len(failed), "total": len(records)}
    if args.out:
        _write_report(args.out, payload, args.format, rows_key="scenarios")
    _print_summary(payload)
    return 1 if failed else 0


# ---------------------------------------------------------------------------
# envelope
# ---------------------------------------------------------------------------

def cmd_envelope(args):
    gen = GeneratorSpec.from_source(args.gen, dim_z=args.dim)
    phi = SymbolicFunction.from_source(args.phi, var="y")
    lo, hi = args.y_range if args.y_range else (-5.0, 5.0)
    y_grid = np.linspace(lo, hi, args.ny)
    res = g_convex_envelope(gen, phi, y_grid=y_grid)
    payload = {"gen": args.gen, "phi": args.phi,
               "verdict": res.verdict.to_json_dict(),
               "support_pairs": len(res.support_pairs),
               "f_min": float(res.function.values.min()),
               "f_max": float(res.function.values.max())}
    if args.out and args.format == "csv":
        with open(args.out, "w") as fh:
            fh.write("y,phi,f\n")
            for y, p, f in zip(y_grid, res.phi_values, res.function.values):
                fh.write(f"{y:.17g},{p:.17g},{f:.17g}\n")
    elif args.out:
        _write_report(args.out, payload, "json")
    _print_summary(payload)
    return 0


# ---------------------------------------------------------------------------
# classify
# ---------------------------------------------------------------------------

def cmd_classify(args):
    gen = GeneratorSpec.from_source(args.gen, dim_z=args.dim)
    scan = ScanGrid()
    payload = {
        "gen": args.gen,
        "mu_hat": gen.mu_hat,
        "flags": gen.flags,
        "super_homogeneity": char.super_homogeneity_test(gen, scan=scan).to_json_dict(),
        "jensen_all_convex": char.jensen_all_convex_predictor(gen, scan=scan),
        "self_financing": char.self_financing_test(gen, scan=scan).to_json_dict(),
        "zero_interest": char.zero_interest_test(gen, scan=scan).to_json_dict(),
        "translation_invariance":
            char.translation_invariance_test(gen, scan=scan).to_json_dict(),
        "periodicity": {str(c): char.periodicity_test(gen, c, scan=scan).to_json_dict()
                        for c in char.DEFAULT_SHIFTS},
    }
    if args.out:
        _write_report(args.out, payload, args.format)
    _print_summary(payload)
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="gconvex",
        description="g-expectation lab: BSDE solvers and g-convexity checks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check", help="decide g-convexity/concavity/affinity")
    p.add_argument("--gen", required=True)
    p.add_argument("--dim", type=int, default=1)
    grp = p.add_mutually_exclusive_group(required=True)
    grp.add_argument("--h", help="candidate expression in y")
    grp.add_argument("--h-table", help="CSV file with columns y,value")
    p.add_argument("--mode", choices=("convex", "concave", "affine"),
                   default="convex")
    p.add_argument("--expect",
                   choices=("g_convex", "g_concave", "g_affine", "neither"))
    p.add_argument("--T", type=float)
    p.add_argument("--y-range", nargs=2, type=float, metavar=("LO", "HI"))
    p.add_argument("--z-range", nargs=2, type=float, metavar=("LO", "HI"))
    p.add_argument("--ny", type=int)
    p.add_argument("--nz", type=int)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("solve", help="compute E^g_{0,T}[phi(W_T)]")
    p.add_argument("--gen", required=True)
    p.add_argument("--payoff", required=True, help="terminal expression in x")
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--method", choices=("pde", "mc", "both"), default="pde")
    p.add_argument("--nx", type=int, default=401)
    p.add_argument("--half-width", type=float)
    p.add_argument("--paths", type=int, default=20000)
    p.add_argument("--steps", type=int, default=160)
    p.add_argument("--degree", type=int, default=4)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--format", choices=("json", "csv"), default="csv",
                   help="--out artifact: csv surface or json summary")
    p.add_argument("--out", help="artifact path")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("suite", help="run a scenario batch (TOML)")
    p.add_argument("batch", nargs="?", default=None,
                   help="batch file; bundled catalog when omitted")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_suite)

    p = sub.add_parser("envelope", help="g-convex envelope of phi")
    p.add_argument("--gen", required=True)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--phi", required=True, help="expression in y")
    p.add_argument("--y-range", nargs=2, type=float, metavar=("LO", "HI"))
    p.add_argument("--ny", type=int, default=401)
    p.add_argument("--format", choices=("json", "csv"), default="csv",
                   help="--out artifact: csv table or json report")
    p.add_argument("--out", help="artifact path")
    p.set_defaults(func=cmd_envelope)

    p = sub.add_parser("classify", help="generator flags and structure tests")
    p.add_argument("--gen", required=True)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_classify)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", None) is None and hasattr(args, "seed"):
        args.seed = _seed_from_env()
    try:
        return args.func(args)
    except GConvexError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, tomllib.TOMLDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
