"""Command-line front end.

    wirtflow solve --grid data/ieee69 --model cp --tol 1e-4
    wirtflow check --grid data/ieee69
    wirtflow check --random 20 --seed 7

Exit codes: 0 success, 1 input error, 2 non-convergence, 3 oracle
disagreement.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .grid import GridError, GridModel, IngestOptions, load_grid_dir
from .newton import SolveResult, SolverConfig, SolverError, solve
from .oracle import (
    OracleConfig,
    OracleDivergenceError,
    fixed_point_solve,
    power_balance_error,
    residual_certificate,
)
from .randgrid import random_grids

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED, EXIT_DISAGREE = 0, 1, 2, 3

AGREEMENT_TOL = 1e-8
BALANCE_TOL = 1e-10
CHECK_TOL = 1e-10
VOLTAGE_SANITY = (0.0, 2.0)


def _cplx(z: complex) -> dict:
    return {"re": float(z.real), "im": float(z.imag)}


def _angle_deg(v: complex) -> float:
    a = math.degrees(math.atan2(v.imag, v.real))
    return 180.0 if a <= -180.0 else a


@dataclass
class RunReport:
    grid: dict
    config: dict
    converged: bool
    iterations: list[dict]
    voltages: list[dict]
    s_loss: dict
    slack_injection: dict
    warnings: list[str] = field(default_factory=list)
    solve_time_s: float | None = None

    @classmethod
    def build(
        cls, grid: GridModel, cfg: SolverConfig, result: SolveResult, ties: str, source: str,
        elapsed: float | None,
    ) -> "RunReport":
        voltages = []
        warnings = []
        lo, hi = VOLTAGE_SANITY
        for k, v in enumerate(result.V_N, start=1):
            mag = float(abs(v))
            entry = {"node": grid.labels[k], "magnitude_pu": mag, "angle_deg": _angle_deg(complex(v))}
            if result.converged and not lo <= mag <= hi:
                entry["flag"] = "out-of-range"
                warnings.append(f"node {grid.labels[k]}: |v| = {mag:.4f} pu outside [{lo}, {hi}]")
            voltages.append(entry)
        if result.quadratic_tail is False:
            warnings.append("convergence tail is not quadratic")
        return cls(
            grid={
                "source": source,
                "nodes": grid.node_count,
                "branches": len(grid.in_service_branches),
                "ties": ties,
                "topology": "radial" if grid.is_radial else "meshed",
            },
            config={
                "model": cfg.model,
                "tolerance": cfg.tolerance,
                "max_iterations": cfg.max_iterations,
                "norm": cfg.norm,
            },
            converged=result.converged,
            iterations=[
                {"index": r.index, "mismatch_l2": r.mismatch_l2, "mismatch_inf": r.mismatch_inf,
                 "step_norm": r.step_norm}
                for r in result.iterations
            ],
            voltages=voltages,
            s_loss=_cplx(result.S_loss),
            slack_injection=_cplx(result.slack_injection),
            warnings=warnings,
            solve_time_s=elapsed,
        )

    @property
    def iteration_count(self) -> int:
        return len(self.iterations) - 1

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["solve_time_s"] is None:
            del d["solve_time_s"]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls(**d)

    def render(self) -> str:
        g = self.grid
        out = [
            f"grid {g['source']}: {g['nodes']} nodes, {g['branches']} branches "
            f"({g['topology']}, ties {g['ties']})",
            f"model {self.config['model']}, tol {self.config['tolerance']:g} ({self.config['norm']} norm)",
            "",
            f"{'iter':>4}  {'|mismatch|_2':>13}  {'|mismatch|_inf':>14}  {'|step|_inf':>11}",
        ]
        for r in self.iterations:
            out.append(
                f"{r['index']:>4}  {r['mismatch_l2']:>13.4e}  {r['mismatch_inf']:>14.4e}  {r['step_norm']:>11.4e}"
            )
        status = "converged" if self.converged else "NOT converged"
        out += ["", f"{status} after {self.iteration_count} iterations", ""]
        out.append(f"{'node':>5}  {'|v| pu':>9}  {'angle deg':>10}")
        for v in self.voltages:
            flag = "  !" if "flag" in v else ""
            out.append(f"{v['node']:>5}  {v['magnitude_pu']:>9.6f}  {v['angle_deg']:>10.5f}{flag}")
        sl, si = self.s_loss, self.slack_injection
        out += [
            "",
            f"losses           {sl['re']:.6e} {sl['im']:+.6e}j pu",
            f"slack injection  {si['re']:.6e} {si['im']:+.6e}j pu",
        ]
        if self.solve_time_s is not None:
            out.append(f"solve time       {self.solve_time_s * 1e3:.3f} ms")
        out += [f"warning: {w}" for w in self.warnings]
        return "\n".join(out)


def _ingest(args) -> IngestOptions:
    return IngestOptions(ties=args.ties, alpha_override=args.alpha_override)


def cmd_solve(args) -> int:
    try:
        grid = load_grid_dir(args.grid, _ingest(args))
        cfg = SolverConfig(
            tolerance=args.tol, max_iterations=args.max_iter, model=args.model, norm=args.norm
        )
    except (GridError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    t0 = time.perf_counter()
    try:
        result = solve(grid, cfg)
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    elapsed = time.perf_counter() - t0

    report = RunReport.build(
        grid, cfg, result, args.ties, str(args.grid), None if args.deterministic else elapsed
    )
    if args.output:
        Path(args.output).write_text(report.to_json() + "\n")
    print(report.render())
    return EXIT_OK if result.converged else EXIT_NONCONVERGED


@dataclass
class CheckOutcome:
    label: str
    model: str
    status: int
    deviation: float = float("nan")
    detail: str = ""


def check_grid(grid: GridModel, label: str, model: str, tol: float, max_iter: int) -> CheckOutcome:
    """Newton against the fixed-point oracle plus residual and balance certificates."""
    cfg = SolverConfig(tolerance=tol, max_iterations=max_iter, model=model)
    try:
        newton = solve(grid, cfg)
    except SolverError as exc:
        return CheckOutcome(label, model, EXIT_NONCONVERGED, detail=f"newton failed: {exc}")
    if not newton.converged:
        return CheckOutcome(
            label, model, EXIT_NONCONVERGED,
            detail=f"newton not converged, mismatch {newton.final_mismatch:.3e}",
        )
    try:
        fp = fixed_point_solve(grid, OracleConfig(tolerance=min(tol, 1e-12)), model)
    except OracleDivergenceError as exc:
        return CheckOutcome(label, model, EXIT_NONCONVERGED, detail=f"oracle diverged: {exc}")
    if not fp.converged:
        return CheckOutcome(label, model, EXIT_NONCONVERGED, detail="oracle not converged")

    dev = float(np.max(np.abs(newton.V_N - fp.V_N), initial=0.0))
    cert = residual_certificate(grid, newton.V_N, model)
    balance = power_balance_error(grid, newton.V_N, newton.S_loss, newton.slack_injection)
    problems = []
    if dev >= AGREEMENT_TOL:
        problems.append(f"max deviation {dev:.3e} >= {AGREEMENT_TOL:g}")
    if cert > tol:
        problems.append(f"residual certificate {cert:.3e} > {tol:g}")
    if balance >= BALANCE_TOL:
        problems.append(f"power balance error {balance:.3e}")
    status = EXIT_DISAGREE if problems else EXIT_OK
    return CheckOutcome(label, model, status, dev, "; ".join(problems) or f"{newton.iteration_count} iterations")


def cmd_check(args) -> int:
    items: list[tuple[str, GridModel]] = []
    try:
        if args.random:
            grids = random_grids(args.random, args.seed, exponents=(0.0, 1.0, 2.0))
            items = [(f"random[{i}]", g) for i, g in enumerate(grids)]
        elif args.grid:
            items = [(str(args.grid), load_grid_dir(args.grid, _ingest(args)))]
        else:
            print("error: check needs --grid or --random", file=sys.stderr)
            return EXIT_INPUT
    except (GridError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    outcomes = [
        check_grid(g, label, model, args.tol, args.max_iter)
        for label, g in items
        for model in ("cp", "zip")
    ]
    print(f"{'grid':<16} {'model':<5} {'max |dV|':>11}  result")
    for o in outcomes:
        verdict = "ok" if o.status == EXIT_OK else "FAIL"
        print(f"{o.label:<16} {o.model:<5} {o.deviation:>11.3e}  {verdict} {o.detail}")
    worst = max((o.status for o in outcomes), default=EXIT_OK)
    devs = [o.deviation for o in outcomes if not math.isnan(o.deviation)]
    if devs:
        print(f"max per-node deviation {max(devs):.3e}")
    return worst


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wirtflow", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, tol):
        p.add_argument("--grid", help="directory with branches.csv, loads.csv[, ties.csv]")
        p.add_argument("--ties", choices=["open", "closed"], default="open")
        p.add_argument("--tol", type=float, default=tol)
        p.add_argument("--max-iter", type=int, default=20)
        p.add_argument("--alpha-override", type=float, default=None)

    ps = sub.add_parser("solve", help="run a load flow and report it")
    common(ps, 1e-4)
    ps.add_argument("--model", choices=["cp", "zip"], default="cp")
    ps.add_argument("--norm", choices=["inf", "l2"], default="l2")
    ps.add_argument("--output", help="write the JSON report here")
    ps.add_argument("--deterministic", action="store_true", help="omit wall-clock timing")
    ps.set_defaults(func=cmd_solve)

    pc = sub.add_parser("check", help="cross-check Newton against the fixed-point oracle")
    common(pc, CHECK_TOL)
    pc.add_argument("--random", type=int, default=0, metavar="N")
    pc.add_argument("--seed", type=int, default=0)
    pc.set_defaults(func=cmd_check)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "solve" and not args.grid:
        print("error: solve needs --grid", file=sys.stderr)
        return EXIT_INPUT
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
