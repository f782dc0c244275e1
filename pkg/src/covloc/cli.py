"""``covloc`` command line: generate, solve, exact, export, evaluate, reduce, report.

Failures print one line ``covloc: error code=<code> msg=<text>`` on stderr
and exit nonzero (1 generic, 3 budget or time limit exceeded, 4 invalid input).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import re
import sys
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exact import DEFAULT_BUDGET, BudgetExceeded, solve_exact, value_of_modeling
from .export import lp_text, mps_text
from .instance import (
    GeneratorConfig, InstanceFormatError, InstanceValidationError, dumps_instance, generate,
    read_instance,
)
from .lagrangian import CSV_FIELDS, VARIANTS, HeuristicConfig, report_row, run_heuristic
from .lp import solve_lp
from .model import (
    FirstStageSolution, ModelVariant, SecondStageSolution, SolutionError, build_lb0,
    build_lp_relaxation, build_milp, evaluate, evaluate_first_stage,
)
from .reductions import CaseError, read_case, reduce

EXIT_ERROR, EXIT_BUDGET, EXIT_INPUT = 1, 3, 4
VMS_FIELDS = ("instance", "instance_hash", "sp", "ws", "evpi", "mps", "one_ps", "vms", "sp_minus_mps")
REPORT_FIELDS = ("n", "variant", "runs", "lb", "ub", "gap_lb_ub", "gap_lp_lb", "gap_ub_opt", "iters", "secs")


class CliError(Exception):
    def __init__(self, code: str, message: str, status: int = EXIT_ERROR):
        super().__init__(message)
        self.code, self.status = code, status


@dataclass
class ExperimentSpec:
    """What one ``solve`` invocation runs: instances x variants, plus the optional reference values."""

    instances: list = field(default_factory=list)  # GeneratorConfig or path
    variants: list[str] = field(default_factory=lambda: ["1.iii"])
    exact: bool = False
    budget: int = DEFAULT_BUDGET
    time_limit: float = 600.0
    out: str | None = None
    jobs: int = 1

    def __post_init__(self):
        if not self.instances:
            raise CliError("no_instances", "give instance files or --n to generate", EXIT_INPUT)
        if not self.variants:
            raise CliError("no_variants", "at least one --variant is required", EXIT_INPUT)
        for v in self.variants:
            if v not in VARIANTS:
                raise CliError("bad_variant", f"unknown variant {v} (choose from {','.join(VARIANTS)})",
                               EXIT_INPUT)


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _seeds(args) -> list[int]:
    env = os.environ.get("COVLOC_SEED")
    if env is not None:
        try:
            return [int(env)]
        except ValueError:
            raise CliError("bad_seed", f"COVLOC_SEED={env!r} is not an integer", EXIT_INPUT) from None
    return args.seed or [0]


def _load(source):
    if isinstance(source, GeneratorConfig):
        return generate(source)
    return read_instance(source)


def _emit(text: str, out: str | None, append: bool = False) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a" if append else "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _csv(rows: list[dict], fields, header: bool = True) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\r\n", extrasaction="ignore")
    if header:
        writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def _append_csv(rows: list[dict], fields, out: str | None) -> None:
    """Append rows, writing the header only when starting a new file."""
    fresh = out is None or out == "-" or not Path(out).exists() or Path(out).stat().st_size == 0
    _emit(_csv(rows, fields, header=fresh), out, append=not fresh)


def _lp_value(lp, time_limit: float) -> float:
    sol = solve_lp(lp, time_limit=time_limit)
    if not sol.optimal:
        raise CliError("lp_" + sol.status.replace("-", "_"), f"LP relaxation ended with status {sol.status}",
                       EXIT_BUDGET if sol.status == "iteration-limit" else EXIT_ERROR)
    return sol.objective


# ---------------------------------------------------------------------------
# Worker tasks (top level so they pickle)
# ---------------------------------------------------------------------------

def _bounds_task(source, spec: ExperimentSpec) -> dict:
    inst = _load(source)
    out = {"lp": _lp_value(build_lp_relaxation(inst), spec.time_limit),
           "lb0": _lp_value(build_lb0(inst), spec.time_limit), "opt": None}
    if spec.exact:
        try:
            out["opt"] = solve_exact(inst, spec.budget, time_limit=spec.time_limit).opt
        except BudgetExceeded:
            out["opt"] = None  # the row is still useful without UB/OPT
    return out


def _run_task(source, variant: str, bounds: dict) -> tuple[dict, dict]:
    inst = _load(source)
    report = run_heuristic(inst, HeuristicConfig.variant(variant))
    return report_row(inst, report, bounds["lb0"], bounds["lp"], bounds["opt"]), report.to_dict()


def _pool_map(fn, tasks: list[tuple], jobs: int) -> list:
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, *zip(*tasks)))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_generate(args) -> None:
    if args.n is None:
        raise CliError("missing_n", "generate needs --n", EXIT_INPUT)
    for seed in _seeds(args):
        cfg = GeneratorConfig(n=args.n, T=args.T, S=args.S, seed=seed)
        inst = generate(cfg)
        out = Path(args.out or ".")
        path = out if out.suffix == ".json" else out / f"{inst.name}.inst.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dumps_instance(inst), encoding="utf-8")
        print(path)


def _solve_spec(args) -> ExperimentSpec:
    sources: list = list(args.instances)
    if args.n is not None:
        sources += [GeneratorConfig(n=args.n, T=args.T, S=args.S, seed=s) for s in _seeds(args)]
    variants = []
    for v in args.variant or ["1.iii"]:
        variants += list(VARIANTS) if v == "all" else v.split(",")
    return ExperimentSpec(sources, variants, args.exact, args.budget, args.time_limit, args.out, args.jobs)


def cmd_solve(args) -> None:
    spec = _solve_spec(args)
    bounds = _pool_map(_bounds_task, [(src, spec) for src in spec.instances], spec.jobs)
    tasks = [(src, v, b) for src, b in zip(spec.instances, bounds) for v in spec.variants]
    results = _pool_map(_run_task, tasks, spec.jobs)
    rows = [row for row, _ in results]
    if args.no_timing:
        for row in rows:
            row["secs"] = ""
    if args.format == "json":
        reports = [rep for _, rep in results]
        if args.no_timing:
            for rep in reports:
                rep.pop("seconds", None)
        _emit(json.dumps(reports, indent=1) + "\n", spec.out)
    else:
        _append_csv(rows, CSV_FIELDS, spec.out)


def cmd_exact(args) -> None:
    inst = read_instance(args.instance)
    try:
        if args.vms:
            vm = value_of_modeling(inst, args.budget, time_limit=args.time_limit)
            row = {"instance": inst.name, "instance_hash": inst.content_hash, **vm.to_dict()}
            if args.format == "csv":
                _append_csv([row], VMS_FIELDS, args.out)
            else:
                _emit(json.dumps(row, indent=1) + "\n", args.out)
            return
        res = solve_exact(inst, args.budget, time_limit=args.time_limit)
    except BudgetExceeded as exc:
        raise CliError("budget_exceeded", f"{exc}; export the model with 'covloc export --format mps'",
                       EXIT_BUDGET) from exc
    d = {"instance": inst.name, "instance_hash": inst.content_hash, **res.to_dict(timing=not args.no_timing)}
    _emit(json.dumps(d, indent=1) + "\n", args.out)


def cmd_export(args) -> None:
    inst = read_instance(args.instance)
    lp, _ = build_milp(inst, ModelVariant(args.linking, args.formulation))
    name = inst.name or "GMSCLP"
    text = mps_text(lp, name) if args.format == "mps" else lp_text(lp, name)
    _emit(text, args.out)


def cmd_evaluate(args) -> None:
    inst = read_instance(args.instance)
    try:
        data = json.loads(Path(args.solution).read_text(encoding="utf-8"))
        fs = FirstStageSolution.from_dict(data.get("first_stage", data), inst)
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        raise CliError("bad_solution", f"cannot read solution file: {exc}", EXIT_INPUT) from exc
    if "second_stage" in data:
        ev = evaluate(inst, fs, SecondStageSolution.from_dict(data["second_stage"]))
        out = {"instance_hash": inst.content_hash, **ev.to_dict()}
    else:
        value, _ = evaluate_first_stage(inst, fs)
        out = {"instance_hash": inst.content_hash, "objective": value}
    _emit(json.dumps(out, indent=1) + "\n", args.out)


def cmd_reduce(args) -> None:
    case = read_case(args.case)
    inst, offset = reduce(case)
    out = {"kind": case.kind, "offset": offset, "instance_hash": inst.content_hash}
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(dumps_instance(inst), encoding="utf-8")
        out["instance"] = args.out
    if args.exact:
        try:
            res = solve_exact(inst, args.budget, time_limit=args.time_limit)
        except BudgetExceeded as exc:
            raise CliError("budget_exceeded", str(exc), EXIT_BUDGET) from exc
        out["opt"] = res.opt
        out["original_opt"] = res.opt + offset
    print(json.dumps(out))


def _mean(values) -> float | str:
    vals = [float(v) for v in values if v not in ("", None)]
    return float(np.mean(vals)) if vals else ""


def cmd_report(args) -> None:
    rows = []
    for path in args.csv:
        with open(path, encoding="utf-8", newline="") as fh:
            rows += list(csv.DictReader(fh))
    hashes: dict[str, set] = defaultdict(set)
    for row in rows:
        hashes[row["instance"]].add(row["instance_hash"])
    clash = sorted(name for name, hs in hashes.items() if len(hs) > 1)
    if clash:
        raise CliError("mixed_instances", f"instance names with differing content: {','.join(clash)}",
                       EXIT_INPUT)
    groups: dict[tuple, list] = defaultdict(list)
    for row in rows:
        groups[(int(row["n"]), row["variant"])].append(row)
    out = []
    for (n, variant), grp in sorted(groups.items()):
        out.append({"n": n, "variant": variant, "runs": len(grp),
                    **{k: _mean(r[k] for r in grp) for k in REPORT_FIELDS[3:]}})
    _emit(_csv(out, REPORT_FIELDS), args.out)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _common(p, *names):
    if "size" in names:
        p.add_argument("--n", type=int, help="number of locations (= demand points)")
        p.add_argument("--T", type=int, default=3, help="periods")
        p.add_argument("--S", type=int, default=3, help="scenarios")
        p.add_argument("--seed", type=int, action="append",
                       help="generator seed, repeatable (COVLOC_SEED overrides)")
    if "out" in names:
        p.add_argument("--out", help="output file (default: stdout)")
    if "budget" in names:
        p.add_argument("--budget", type=int, default=DEFAULT_BUDGET, help="exact solver size limit")
        p.add_argument("--time-limit", type=float, default=600.0, help="seconds for exact and LP phases")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="covloc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write random instances")
    _common(p, "size")
    p.add_argument("--out", help="directory or .json file (default: current directory)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="run the Lagrangian heuristic and append CSV rows")
    p.add_argument("instances", nargs="*", help="instance files")
    _common(p, "size", "out", "budget")
    p.add_argument("--variant", action="append", help="1.i..2.iv, comma list or 'all' (default 1.iii)")
    p.add_argument("--exact", action="store_true", help="also compute OPT for gap_ub_opt")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-timing", action="store_true", help="blank out timing fields")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("exact", help="optimal value, or EVPI/VMS with --vms")
    p.add_argument("instance")
    _common(p, "out", "budget")
    p.add_argument("--vms", action="store_true", help="report SP, WS, EVPI, MPS, 1PS and VMS")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--no-timing", action="store_true")
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("export", help="write the MILP as MPS or CPLEX LP")
    p.add_argument("instance")
    _common(p, "out")
    p.add_argument("--format", choices=("mps", "lp"), default="mps")
    p.add_argument("--linking", choices=("ww", "opt2", "opt3"), default="ww")
    p.add_argument("--formulation", choices=("gmsclp", "prime"), default="prime")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("evaluate", help="score a first-stage (and optional second-stage) solution")
    p.add_argument("instance")
    p.add_argument("solution")
    _common(p, "out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("reduce", help="compile a special-case file into an instance")
    p.add_argument("case")
    _common(p, "out", "budget")
    p.add_argument("--exact", action="store_true", help="also solve and report the original optimum")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("report", help="mean gaps by (n, variant) from solve CSVs")
    p.add_argument("csv", nargs="+")
    _common(p, "out")
    p.set_defaults(func=cmd_report)
    return parser


def _code(exc: Exception) -> str:
    return re.sub(r"(?<!^)(?=[A-Z])", "_", type(exc).__name__).lower()


def _one_line(text: str) -> str:
    return " ".join(str(text).split())


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except CliError as exc:
        err = (exc.code, str(exc), exc.status)
    except BudgetExceeded as exc:
        err = ("budget_exceeded", str(exc), EXIT_BUDGET)
    except (InstanceFormatError, InstanceValidationError, CaseError, SolutionError) as exc:
        err = (_code(exc), str(exc), EXIT_INPUT)
    except (OSError, ValueError) as exc:
        err = (_code(exc), str(exc), EXIT_ERROR)
    else:
        return 0
    print(f"covloc: error code={err[0]} msg={_one_line(err[1])}", file=sys.stderr)
    return err[2]


if __name__ == "__main__":
    sys.exit(main())
