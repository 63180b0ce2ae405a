"""Command-line entry point.

Every subcommand writes plain JSON/CSV/OBJ.  Exit status is 0 on success,
1 when a numerical stage fails (whatever diagnostics exist are still
written) and 2 for usage or configuration errors, in which case nothing is
written.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from contextlib import nullcontext
from dataclasses import asdict, fields
from pathlib import Path

import jsonschema
import numpy as np
from threadpoolctl import threadpool_limits

from . import diagnostics as dg
from . import geometry as ge
from . import spheregrid as sg
from .errors import CMKError, NotApplicable, SolverError
from .problem import CLOSED_FORMS, ProblemSpec, check_f_convexity, closed_form_f, prop53_example, residual
from .solver import (
    SolveOptions,
    continuation_solve,
    epsilon_continuation,
    random_admissible_starts,
)

_SOLVER_FIELDS = {f.name for f in fields(SolveOptions)}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["problem"],
    "additionalProperties": False,
    "properties": {
        "problem": {
            "type": "object",
            "required": ["n", "k", "p0"],
            "additionalProperties": False,
            "properties": {
                "n": {"type": "integer", "enum": [2, 3]},
                "k": {"type": "integer", "minimum": 1},
                "p0": {"type": "number", "exclusiveMinimum": 0},
                "eps": {"type": "number", "minimum": 0},
                "f": {
                    "type": "object",
                    "required": ["kind"],
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"type": "string", "minLength": 1},
                        "params": {"type": "object"},
                    },
                },
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"type": "string", "enum": ["axisym", "full2d"]},
                "resolution": {
                    "oneOf": [
                        {"type": "integer", "minimum": 8},
                        {"type": "array", "items": {"type": "integer", "minimum": 8}, "minItems": 1, "maxItems": 2},
                    ]
                },
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "newton_tol": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "max_newton_iters": {"type": "integer", "minimum": 1},
                "line_search_shrink": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "max_backtracks": {"type": "integer", "minimum": 1},
                "t_step_init": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "t_step_min": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "eps_start": {"type": "number", "minimum": 0},
                "eps_ratio": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "eps_count": {"type": "integer", "minimum": 1},
                "enforce_even": {"type": "boolean"},
                "eps_schedule": {"type": ["array", "null"], "items": {"type": "number", "minimum": 0}},
            },
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "solution_csv": {"type": "string"},
                "report_json": {"type": "string"},
                "mesh_obj": {"type": ["string", "null"]},
                "profile_csv": {"type": ["string", "null"]},
            },
        },
        "seed": {"type": "integer", "minimum": 0},
    },
}


class ConfigError(Exception):
    """Bad configuration; mapped to exit status 2."""


# -- config handling ----------------------------------------------------------------


def _pointer(path) -> str:
    return "/" + "/".join(str(p) for p in path)


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    return validate_config(cfg)


def validate_config(cfg: dict) -> dict:
    """Validate against :data:`CONFIG_SCHEMA` and return a copy with all defaults filled in."""
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(f"config error at {_pointer(e.absolute_path)}: {e.message}")
    prob = dict(cfg["problem"])
    prob.setdefault("eps", 0.0)
    f = dict(prob.get("f", {"kind": "constant"}))
    f.setdefault("params", {})
    prob["f"] = f
    grid = {"kind": sg.AXISYM, "resolution": 128}
    grid.update(cfg.get("grid", {}))
    solver = asdict(SolveOptions())
    solver["eps_schedule"] = None
    solver.update(cfg.get("solver", {}))
    outputs = {"solution_csv": None, "report_json": None, "mesh_obj": None, "profile_csv": None}
    outputs.update(cfg.get("outputs", {}))
    return {"problem": prob, "grid": grid, "solver": solver, "outputs": outputs, "seed": cfg.get("seed", 0)}


def _field_from_config(fcfg: dict, grid: sg.SphereGrid, k: int, p0: float, eps: float) -> sg.ScalarField:
    kind = fcfg["kind"]
    if kind in CLOSED_FORMS:
        return closed_form_f(kind, grid, k, p0, eps, **fcfg["params"])
    try:
        f = sg.read_field_csv(kind, n=grid.n)
    except OSError as exc:
        raise ConfigError(f"config error at /problem/f/kind: {kind!r} is neither one of "
                          f"{list(CLOSED_FORMS)} nor a readable CSV ({exc.strerror})") from None
    except ValueError as exc:
        raise ConfigError(f"config error at /problem/f/kind: {exc}") from None
    if f.grid.resolution != grid.resolution or f.grid.kind != grid.kind:
        raise ConfigError("config error at /grid: f CSV was sampled on a different grid")
    return f


def build_problem(cfg: dict, grid: sg.SphereGrid | None = None) -> ProblemSpec:
    p = cfg["problem"]
    try:
        if grid is None:
            grid = sg.build_grid(p["n"], cfg["grid"]["kind"], cfg["grid"]["resolution"])
        f = _field_from_config(p["f"], grid, p["k"], p["p0"], p["eps"])
        return ProblemSpec(n=p["n"], k=p["k"], p0=p["p0"], f=f, eps=p["eps"])
    except ConfigError:
        raise
    except (CMKError, ValueError, TypeError) as exc:
        raise ConfigError(f"config error at /problem: {exc}") from None


def build_options(cfg: dict) -> SolveOptions:
    kw = {k: v for k, v in cfg["solver"].items() if k in _SOLVER_FIELDS}
    try:
        return SolveOptions(**kw)
    except (CMKError, ValueError) as exc:
        raise ConfigError(f"config error at /solver: {exc}") from None


def _check_writable(*paths) -> None:
    for p in paths:
        if p is None:
            continue
        parent = Path(p).resolve().parent
        if not parent.is_dir() or not os.access(parent, os.W_OK):
            raise ConfigError(f"output directory {parent} does not exist or is not writable")


# -- output helpers ---------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else None
    return obj


def dump_json(obj, path=None) -> str:
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)
    return text


def _monitor(fn, *args):
    try:
        return fn(*args).to_dict()
    except NotApplicable as exc:
        return {"not_applicable": str(exc)}


def full_diagnostics(u: sg.ScalarField, spec: ProblemSpec) -> dict:
    """Every monitor that applies to ``u``, keyed by name."""
    out = {"apriori": _monitor(dg.apriori_monitors, u, spec)}
    out["integral_identities"] = (
        _monitor(dg.integral_identities, u, spec) if spec.k < spec.n else {"not_applicable": "k = n"}
    )
    out["gll"] = _monitor(dg.gll_check, u, spec)
    _, flags = dg.convexity_rank_report(u, spec.eps, spec.k)
    out["convexity"] = flags
    if u.grid.kind == sg.AXISYM:
        out["ode_repr"] = _monitor(dg.ode_repr_check, u, spec)
    return out


# -- subcommands --------------------------------------------------------------------


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    spec = build_problem(cfg)
    opts = build_options(cfg)
    out = cfg["outputs"]
    if out["report_json"] is None or out["solution_csv"] is None:
        raise ConfigError("config error at /outputs: solution_csv and report_json are required for solve")
    _check_writable(out["solution_csv"], out["report_json"], out["mesh_obj"], out["profile_csv"])
    schedule = cfg["solver"]["eps_schedule"]
    report = {"config": cfg}
    u = None
    status = 0
    if schedule:
        try:
            steps = epsilon_continuation(spec, opts, schedule=schedule)
        except CMKError as exc:
            raise ConfigError(f"config error at /solver/eps_schedule: {exc}") from None
        report["eps_steps"] = [
            {"eps": e, "converged": v is not None, **({} if v is None else {
                "min_u": float(v.values.min()), "max_u": float(v.values.max()),
                "lower_bound": r.extra["lower_bound"], "lower_bound_holds": r.extra["lower_bound_holds"]})}
            for e, v, r in steps
        ]
        good = [(e, v, r) for e, v, r in steps if v is not None]
        if good:
            e, u, rep = good[-1]
            spec = spec.with_(eps=e)
        else:
            rep = steps[-1][2]
        if len(good) != len(steps):
            status = 1
    else:
        try:
            u, rep = continuation_solve(spec, opts)
        except SolverError as exc:
            status = 1
            rep = exc.report
            if exc.u is not None:
                u = exc.u if isinstance(exc.u, sg.ScalarField) else spec.grid.field(exc.u)
            if rep is None:
                from .solver import SolveReport

                rep = SolveReport(eps=spec.eps, message=str(exc))
            rep.message = rep.message or str(exc)
    report.update(rep.to_dict())
    report["converged"] = bool(rep.converged and status == 0)
    if u is not None:
        report["u_minus_1_sup"] = float(np.max(np.abs(u.values - 1.0)))
        try:
            report["diagnostics"] = full_diagnostics(u, spec.with_(t=min(1.0, rep.t_final or 0.0)))
        except CMKError as exc:
            report["diagnostics"] = {"error": str(exc)}
        sg.write_field_csv(u, out["solution_csv"])
        if out["mesh_obj"] or out["profile_csv"]:
            mesh = ge.export_mesh(u, out["mesh_obj"], out["profile_csv"])
            report["mesh"] = {"non_convex": mesh.non_convex, "vertices": int(mesh.vertices.shape[0])}
    dump_json(report, out["report_json"])
    print(f"{'converged' if status == 0 else 'FAILED'}: t={rep.t_final:.6g} eps={rep.eps:.3g} "
          f"min_u={rep.min_u:.6g} max_u={rep.max_u:.6g}")
    return status


def cmd_verify_example(args) -> int:
    rows = []
    for J in args.resolutions:
        grid = sg.build_grid(args.n, sg.AXISYM, J)
        u, f, alpha = prop53_example(args.n, args.k, args.p0, grid)
        spec = ProblemSpec(n=args.n, k=args.k, p0=args.p0, f=f)
        R = residual(u, spec).values
        rows.append({"J": J, "residual_sup": float(np.abs(R).max()), "residual_l2": float(np.sqrt(np.dot(grid.weights, R * R)))})
    for a, b in zip(rows, rows[1:]):
        b["ratio_sup"] = a["residual_sup"] / b["residual_sup"]
        b["ratio_l2"] = a["residual_l2"] / b["residual_l2"]
    print(f"alpha = {alpha:.12g}")
    print(f"{'J':>6} {'sup residual':>14} {'ratio':>8} {'L2 residual':>14} {'ratio':>8}")
    for r in rows:
        print(f"{r['J']:>6} {r['residual_sup']:>14.6e} {r.get('ratio_sup', float('nan')):>8.3f} "
              f"{r['residual_l2']:>14.6e} {r.get('ratio_l2', float('nan')):>8.3f}")
    if args.out:
        dump_json({"n": args.n, "k": args.k, "p0": args.p0, "alpha": alpha, "rows": rows}, args.out)
    return 0


def _problem_from_flags(args) -> ProblemSpec:
    cfg = validate_config({
        "problem": {"n": args.n, "k": args.k, "p0": args.p0, "f": {"kind": args.f, "params": dict(args.param)}},
        "grid": {"kind": args.grid_kind, "resolution": args.resolution},
    })
    return build_problem(cfg)


def cmd_check_f_convexity(args) -> int:
    spec = _problem_from_flags(args)
    cert = check_f_convexity(spec.f, spec.k, spec.p0)
    dump_json(cert.as_dict(), args.out)
    if args.out:
        print(f"passes={cert.passes} min_eigenvalue={cert.min_eigenvalue_of_W_gtilde:.6g}")
    return 0


def cmd_diagnose(args) -> int:
    cfg = load_config(args.config)
    _check_writable(args.out)
    try:
        u = sg.read_field_csv(args.solution, n=cfg["problem"]["n"])
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load solution {args.solution}: {exc}") from None
    spec = build_problem(cfg, grid=u.grid)
    try:
        diag = full_diagnostics(u, spec)
    except CMKError as exc:
        dump_json({"diagnostics": {"error": str(exc)}}, args.out)
        return 1
    dump_json({"config": cfg, "solution": args.solution, "diagnostics": diag}, args.out)
    return 0


def cmd_export_mesh(args) -> int:
    if not (args.obj or args.profile):
        raise ConfigError("give --obj and/or --profile")
    _check_writable(args.obj, args.profile)
    try:
        u = sg.read_field_csv(args.solution, n=args.n)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load solution {args.solution}: {exc}") from None
    if args.profile and u.grid.kind != sg.AXISYM:
        raise ConfigError("--profile needs an axisymmetric solution")
    mesh = ge.export_mesh(u, args.obj, args.profile, args.longitudes)
    print(f"vertices={mesh.vertices.shape[0]} non_convex={mesh.non_convex}")
    return 0


def cmd_convergence_study(args) -> int:
    _check_writable(args.out)
    try:
        table = dg.manufactured_convergence(args.n, args.k, args.p0, args.grid_kind, args.resolutions, args.amplitude)
    except SolverError as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return 1
    print(f"{'resolution':>12} {'error':>12} {'ratio':>8} {'richardson':>12}")
    for r in table["rows"]:
        ratio = r["observed_ratio"]
        est = r["richardson_estimate"]
        print(f"{'x'.join(map(str, r['resolution'])):>12} {r['error']:>12.4e} "
              f"{'' if ratio is None else f'{ratio:.3f}':>8} {'' if est is None else f'{est:.4e}':>12}")
    if args.out:
        dump_json(table, args.out)
    return 0


def cmd_uniqueness(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    spec = build_problem(cfg)
    opts = build_options(cfg)
    _check_writable(args.out)
    starts = random_admissible_starts(spec.grid, spec.k, args.starts, seed=cfg["seed"], eps=spec.eps)
    res = dg.uniqueness_experiment(spec, starts, opts, continuation=args.continuation)
    res.pop("solutions")
    res["config"] = cfg
    res["seed"] = cfg["seed"]
    dump_json(res, args.out)
    if args.out:
        print(f"converged {len(res['converged'])}/{args.starts}; max pairwise {res['max_pairwise']:.3e}")
    return 0 if not res["failures"] else 1


# -- parser ---------------------------------------------------------------------------


def _int_list(text: str) -> list:
    try:
        return [int(t) for t in text.split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _res_list(text: str) -> list:
    # "16,48" or "16x32,48x96"
    out = []
    for t in text.split(","):
        try:
            out.append([int(p) for p in t.split("x")] if "x" in t else int(t))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad resolution {t!r}") from None
    return out


def _param(text: str):
    key, sep, val = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return key, json.loads(val)
    except json.JSONDecodeError:
        return key, val


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cmk", description="L^p Christoffel-Minkowski solver and checks")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("solve", help="solve the equation described by a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("verify-example", help="residual of the closed-form degenerate pair under refinement")
    s.add_argument("--n", type=int, default=3)
    s.add_argument("--k", type=int, default=2)
    s.add_argument("--p0", type=float, default=0.2)
    s.add_argument("--resolutions", type=_int_list, default=[128, 256])
    s.add_argument("--out")
    s.set_defaults(func=cmd_verify_example)

    s = sub.add_parser("check-f-convexity", help="certificate for convexity of f^(-1/(k+p0))")
    for name, typ in (("--n", int), ("--k", int), ("--p0", float)):
        s.add_argument(name, type=typ, required=True)
    s.add_argument("--f", default="constant", help="closed-form name or CSV path")
    s.add_argument("--param", type=_param, action="append", default=[], metavar="KEY=VALUE")
    s.add_argument("--grid-kind", default=sg.AXISYM, choices=[sg.AXISYM, "full2d"])
    s.add_argument("--resolution", type=int, default=128)
    s.add_argument("--out")
    s.set_defaults(func=cmd_check_f_convexity)

    s = sub.add_parser("diagnose", help="run every monitor on a stored solution")
    s.add_argument("--config", required=True)
    s.add_argument("--solution", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("export-mesh", help="embed a stored solution and write OBJ/CSV")
    s.add_argument("--solution", required=True)
    s.add_argument("--n", type=int, default=2, help="sphere dimension for axisymmetric CSVs")
    s.add_argument("--obj")
    s.add_argument("--profile")
    s.add_argument("--longitudes", type=int, default=64)
    s.set_defaults(func=cmd_export_mesh)

    s = sub.add_parser("convergence-study", help="manufactured-solution refinement table")
    s.add_argument("--n", type=int, default=3)
    s.add_argument("--k", type=int, default=2)
    s.add_argument("--p0", type=float, default=0.5)
    s.add_argument("--grid-kind", default=sg.AXISYM, choices=[sg.AXISYM, "full2d"])
    s.add_argument("--resolutions", type=_res_list, default=[32, 96])
    s.add_argument("--amplitude", type=float, default=0.1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_convergence_study)

    s = sub.add_parser("uniqueness", help="solve from seeded random starts and compare")
    s.add_argument("--config", required=True)
    s.add_argument("--starts", type=int, default=5)
    s.add_argument("--seed", type=int)
    s.add_argument("--continuation", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=cmd_uniqueness)
    return p


def _thread_limit():
    raw = os.environ.get("CMK_THREADS")
    if not raw:
        return nullcontext()
    try:
        n = int(raw)
        if n < 1:
            raise ValueError
    except ValueError:
        raise ConfigError(f"CMK_THREADS must be a positive integer, got {raw!r}") from None
    return threadpool_limits(limits=n)


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        with _thread_limit():
            return args.func(args)
    except ConfigError as exc:
        print(f"cmk {args.command}: {exc}", file=sys.stderr)
        return 2
    except (CMKError, ValueError) as exc:
        # input that passed the schema but is mathematically out of range
        print(f"cmk {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
