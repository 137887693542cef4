"""Scenario-driven command line for design search, tables and diagnostics.

Subcommands write plot-ready CSV files (9 significant digits, header row,
scenario echoed as # comments) into --out. Exit codes: 0 success, 2
invalid input, 3 non-convergence, 4 property-check failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import robust, verify
from .design import (
    DesignMeasure,
    InvalidDesign,
    equivalence_check,
    efficiency,
    variance_closure,
)
from .models import InvalidParams
from .numerics import NonFinite, SingularMatrix
from .robust import CollidingPoints, OutOfRange, UnsupportedSize
from .scenario import Scenario, ScenarioError, parse_scenario
from .search import EmptyDesign, SearchResult, SingularThroughout, ld_design

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NO_CONVERGENCE = 3
EXIT_PROPERTY_FAILURE = 4

_INVALID_INPUT_ERRORS = (
    ScenarioError,
    InvalidParams,
    InvalidDesign,
    CollidingPoints,
    OutOfRange,
    UnsupportedSize,
    EmptyDesign,
    NonFinite,
    ValueError,
)


def _fmt(x) -> str:
    return format(float(x), ".9g")


def _write_csv(path: Path, header, rows, comments) -> None:
    with path.open("w", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scenario(args) -> Scenario:
    return parse_scenario(args.scenario, seed_override=args.seed)


def _support_str(xi: DesignMeasure) -> str:
    return ";".join(_fmt(t) for t in xi.times)


def _run_ld(scn: Scenario) -> SearchResult:
    t0 = time.perf_counter()
    result = ld_design(scn.model, scn.params, scn.space, scn.cfg)
    print(f"ld search took {time.perf_counter() - t0:.2f}s", file=sys.stderr)
    return result


def _lri_columns(scn: Scenario) -> list[str]:
    return [f"lri_{name}" for name in scn.model.param_names[1:]]


def _lri_values(scn: Scenario, xi: DesignMeasure) -> list[str]:
    return [
        _fmt(robust.lri(scn.model, xi, scn.params, i))
        for i in range(1, scn.model.k)
    ]


def cmd_ld(args) -> int:
    scn = _scenario(args)
    out = _outdir(args)
    result = _run_ld(scn)
    comments = scn.provenance()

    result.design.to_csv(out / "design.csv", comments=comments)

    d = variance_closure(scn.model, result.design, scn.params)
    ts = np.linspace(scn.space.lo, scn.space.hi, scn.cfg.grid_n)
    _write_csv(
        out / "equivalence.csv",
        ("t_hours", "d"),
        [(_fmt(t), _fmt(v)) for t, v in zip(ts, d(ts))],
        comments,
    )

    summary = {
        "criterion": result.criterion,
        "sup_d": result.report.sup_d,
        "argmax_t": result.report.argmax_t,
        "converged": result.converged,
        "iterations": result.iterations,
        "support": list(result.design.times),
        "weights": list(result.design.weights),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")

    return EXIT_OK if result.converged else EXIT_NO_CONVERGENCE


def _parse_sizes(spec: str) -> list[int]:
    sizes: list[int] = []
    for chunk in spec.split(","):
        chunk = chunk.strip()
        if "-" in chunk:
            lo, _, hi = chunk.partition("-")
            sizes.extend(range(int(lo), int(hi) + 1))
        elif chunk:
            sizes.append(int(chunk))
    if not sizes:
        raise ValueError(f"no sizes in {spec!r}")
    return sizes


def cmd_esuld(args) -> int:
    scn = _scenario(args)
    out = _outdir(args)
    sizes = _parse_sizes(args.sizes)
    if min(sizes) < scn.model.k:
        raise ValueError(
            f"size {min(sizes)} below the parameter count {scn.model.k}"
        )
    ld = _run_ld(scn)
    if not ld.converged:
        return EXIT_NO_CONVERGENCE

    rows = []
    for s in sizes:
        if s == scn.model.k:
            # The s = k row is the optimal design itself, not an
            # equal-spacing one; listed for comparison.
            xi, eff, spacing = ld.design, 1.0, ""
        else:
            spec, eff = robust.esuld(scn.model, scn.params, scn.space, s, ld.design)
            xi, spacing = spec.design, _fmt(spec.h)
        rows.append(
            [str(s), spacing, _support_str(xi), _fmt(eff), *_lri_values(scn, xi)]
        )
    _write_csv(
        out / "esuld.csv",
        ["size", "spacing_hours", "support", "efficiency", *_lri_columns(scn)],
        rows,
        scn.provenance(),
    )
    return EXIT_OK


def cmd_eseuld(args) -> int:
    scn = _scenario(args)
    out = _outdir(args)
    sizes = _parse_sizes(args.sizes)
    k = scn.model.k
    ld = _run_ld(scn)
    if not ld.converged:
        return EXIT_NO_CONVERGENCE

    rows = []
    for s in sizes:
        sched = robust.default_schedule(scn.model.model_id, k, s)
        try:
            xi = robust.eseuld(ld.design, args.r, sched)
            eff = efficiency(scn.model, xi, ld.design, scn.params)
        except (CollidingPoints, OutOfRange, SingularMatrix):
            rows.append([str(s), "", "", "0"] + [""] * (k - 1))
            continue
        rows.append(
            [str(s), _support_str(xi), _fmt(eff), "1", *_lri_values(scn, xi)]
        )
    _write_csv(
        out / "eseuld.csv",
        ["size", "support", "efficiency", "feasible", *_lri_columns(scn)],
        rows,
        scn.provenance(),
    )
    return EXIT_OK


def cmd_dcurve(args) -> int:
    scn = _scenario(args)
    out = _outdir(args)
    if args.step <= 0 or args.t_hi <= args.t_lo:
        raise ValueError(
            f"empty evaluation range [{args.t_lo}, {args.t_hi}] step {args.step}"
        )
    xi = DesignMeasure.from_csv(args.design, scn.space)
    d = variance_closure(scn.model, xi, scn.params)
    ts = np.arange(args.t_lo, args.t_hi + args.step * 0.5, args.step)
    _write_csv(
        out / "dcurve.csv",
        ("t_hours", "d"),
        [(_fmt(t), _fmt(v)) for t, v in zip(ts, d(ts))],
        scn.provenance(),
    )
    return EXIT_OK


def cmd_rcurve(args) -> int:
    scn = _scenario(args)
    out = _outdir(args)
    if args.step <= 0 or args.r_hi <= args.r_lo:
        raise ValueError(f"empty r range [{args.r_lo}, {args.r_hi}] step {args.step}")
    ld = _run_ld(scn)
    if not ld.converged:
        return EXIT_NO_CONVERGENCE
    sched = robust.default_schedule(scn.model.model_id, scn.model.k, args.size)
    r_grid = np.arange(args.r_lo, args.r_hi + args.step * 0.5, args.step)
    curve = robust.efficiency_vs_r(
        scn.model, scn.params, ld.design, sched, r_grid, reference=ld.design
    )
    rows = [
        (_fmt(p.r), _fmt(p.efficiency) if p.feasible else "", "1" if p.feasible else "0")
        for p in curve
    ]
    _write_csv(out / "rcurve.csv", ("r", "efficiency", "feasible"), rows, scn.provenance())
    return EXIT_OK


def cmd_eff(args) -> int:
    scn = _scenario(args)
    out = _outdir(args)
    xi = DesignMeasure.from_csv(args.design, scn.space)
    if args.ref is not None:
        ref = DesignMeasure.from_csv(args.ref, scn.space)
    else:
        ld = _run_ld(scn)
        if not ld.converged:
            return EXIT_NO_CONVERGENCE
        ref = ld.design
    value = efficiency(scn.model, xi, ref, scn.params)
    _write_csv(out / "eff.csv", ("efficiency",), [(_fmt(value),)], scn.provenance())
    print(_fmt(value))
    return EXIT_OK


def cmd_lri(args) -> int:
    scn = _scenario(args)
    out = _outdir(args)
    if args.design is not None:
        xi = DesignMeasure.from_csv(args.design, scn.space)
    else:
        ld = _run_ld(scn)
        if not ld.converged:
            return EXIT_NO_CONVERGENCE
        xi = ld.design
    values = robust.lri_all(scn.model, xi, scn.params)
    rows = [(name, _fmt(v)) for name, v in values.items()]
    _write_csv(out / "lri.csv", ("parameter", "lri"), rows, scn.provenance())
    return EXIT_OK


def cmd_verify(args) -> int:
    scn = _scenario(args)
    out = _outdir(args)
    if args.trials <= 0:
        raise ValueError(f"trials must be positive, got {args.trials}")
    outcomes = verify.run_all(trials=args.trials, seed=scn.seed)
    rows = [
        (o.name, str(o.trials), str(o.failures), "1" if o.ok else "0")
        for o in outcomes
    ]
    _write_csv(
        out / "verify.csv", ("name", "trials", "failures", "ok"), rows, scn.provenance()
    )
    for o in outcomes:
        status = "ok" if o.ok else "FAIL"
        print(f"{o.name}: {status} ({o.failures}/{o.trials} failures)")
        if not o.ok:
            print(f"  witness: {o.witnesses[0]!r}", file=sys.stderr)
    return EXIT_OK if all(o.ok for o in outcomes) else EXIT_PROPERTY_FAILURE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emaxdesign",
        description="Optimal and robust sampling-time designs for Emax response models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", required=True, help="scenario file (key = value lines)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")

    p = sub.add_parser("ld", help="search and certify the optimal design")
    common(p)
    p.set_defaults(func=cmd_ld)

    p = sub.add_parser("esuld", help="equal-spacing designs table")
    common(p)
    p.add_argument("--sizes", default="4-12", help="sizes, e.g. 4-12 or 5,6,8")
    p.set_defaults(func=cmd_esuld)

    p = sub.add_parser("eseuld", help="expanded designs table")
    common(p)
    p.add_argument("--r", type=float, required=True, help="expansion step length, hours")
    p.add_argument("--sizes", default=None, help="sizes, e.g. 4-10")
    p.set_defaults(func=cmd_eseuld)

    p = sub.add_parser("dcurve", help="variance function d(t) of a stored design")
    common(p)
    p.add_argument("--design", required=True, help="design CSV (t_hours,weight)")
    p.add_argument("--t-lo", type=float, required=True)
    p.add_argument("--t-hi", type=float, required=True)
    p.add_argument("--step", type=float, required=True)
    p.set_defaults(func=cmd_dcurve)

    p = sub.add_parser("rcurve", help="efficiency vs expansion step length")
    common(p)
    p.add_argument("--size", type=int, required=True, help="expanded design size")
    p.add_argument("--r-lo", type=float, required=True)
    p.add_argument("--r-hi", type=float, required=True)
    p.add_argument("--step", type=float, required=True)
    p.set_defaults(func=cmd_rcurve)

    p = sub.add_parser("eff", help="efficiency of a design vs a reference")
    common(p)
    p.add_argument("--design", required=True, help="design CSV to evaluate")
    p.add_argument("--ref", default=None, help="reference CSV (default: the optimal design)")
    p.set_defaults(func=cmd_eff)

    p = sub.add_parser("lri", help="per-parameter robustness indices")
    common(p)
    p.add_argument("--design", default=None, help="design CSV (default: the optimal design)")
    p.set_defaults(func=cmd_lri)

    p = sub.add_parser("verify", help="run the property-check suite")
    common(p)
    p.add_argument("--trials", type=int, default=1000)
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _INVALID_INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SingularMatrix, SingularThroughout) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
