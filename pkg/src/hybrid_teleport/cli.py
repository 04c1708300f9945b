"""Command-line front end.

    hybrid-teleport dv2cv --alpha2 5 --theta 1.0472 --phi 0 --format json
    hybrid-teleport cv2dv --alpha2 3 --theta 0 --phi 0
    hybrid-teleport sweep --grid 1:8:0.5 --format csv
    hybrid-teleport sample --protocol dv2cv --alpha2 2 --trials 100000 --seed 1
    hybrid-teleport verify --alpha2 2 --seed 7

Exit codes: 0 success, 1 usage or I/O error, 2 engine disagreement in ``verify``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Any

import numpy as np

from . import analytics
from .fock import FockError
from .protocols import (
    ConfigurationError,
    Direction,
    ProtocolConfig,
    ProtocolReport,
    QubitParams,
    run,
    run_monte_carlo,
)

VERIFY_TOL = 1e-8


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def num(v: float | None) -> float | None:
    """Round to 15 significant digits for serialization."""
    if v is None:
        return None
    v = float(v)
    if not math.isfinite(v):
        return None
    return float(f"{v:.15g}")


def report_to_dict(report: ProtocolReport, seed: int) -> dict[str, Any]:
    cfg = report.config
    delta = None
    if cfg.direction is Direction.DV2CV:
        delta = {"re": num(cfg.correction_delta.real), "im": num(cfg.correction_delta.imag)}
    out = {
        "protocol": cfg.direction.value,
        "alpha2": num(cfg.alpha2),
        "qubit": {"theta": num(report.qubit.theta), "phi": num(report.qubit.phi)},
        "delta": delta,
        "x2": num(analytics.overlap_x(cfg.alpha) ** 2),
        "branches": [
            {
                "case": b.case,
                "outcome": b.outcome,
                "probability": num(b.probability),
                "fidelity": num(b.fidelity),
                "fidelity_displaced_ref": num(b.fidelity_displaced_ref),
                "correction": b.correction.value,
            }
            for b in report.branches
        ],
        "f_avg": num(report.f_avg),
        "reconciliation": [
            {
                "formula_id": r.formula_id,
                "value_formula": num(r.value_formula),
                "value_oracle": num(r.value_oracle),
                "abs_dev": num(r.abs_dev),
            }
            for r in report.reconciliation
        ],
        "engine": None,
        "seed": seed,
        "wiring": list(report.wiring),
        "notes": list(report.notes),
    }
    if report.engine is not None:
        out["engine"] = {
            "cutoffs": {str(k): v for k, v in sorted(report.engine.cutoffs.items())},
            "max_crosscheck_dev": num(report.engine.max_crosscheck_dev),
        }
    return out


def flatten(obj: Any, prefix: str = "") -> list[tuple[str, Any]]:
    if isinstance(obj, dict):
        rows = []
        for k, v in obj.items():
            rows += flatten(v, f"{prefix}.{k}" if prefix else str(k))
        return rows
    if isinstance(obj, list):
        rows = []
        for i, v in enumerate(obj):
            rows += flatten(v, f"{prefix}.{i}")
        return rows
    return [(prefix, obj)]


def _csv_cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.15g}"
    return str(v)


def encode(obj: dict, fmt: str, table: list[dict] | None = None, columns=None) -> str:
    if fmt == "json":
        return json.dumps(obj, indent=2) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if table is not None:
        writer.writerow(columns)
        for row in table:
            writer.writerow([_csv_cell(row[c]) for c in columns])
    else:
        writer.writerow(["field", "value"])
        for key, value in flatten(obj):
            writer.writerow([key, _csv_cell(value)])
    return buf.getvalue()


def _add_common(p: argparse.ArgumentParser, qubit: bool = True) -> None:
    p.add_argument("--alpha2", type=float, default=2.0, help="mean photon number |alpha|^2")
    if qubit:
        p.add_argument("--theta", type=float, default=0.0, help="Bloch polar angle (rad)")
        p.add_argument("--phi", type=float, default=0.0, help="Bloch azimuth (rad)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cutoff", type=int, default=None, help="override every CV photon cutoff")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out", type=Path, default=None, help="artifact path (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hybrid-teleport", description="Hybrid DV/CV teleportation simulator.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for name in ("cv2dv", "dv2cv"):
        p = sub.add_parser(name, help=f"run the {name} protocol over all branches")
        _add_common(p)
        p.add_argument("--no-crosscheck", action="store_true", help="skip the Fock-engine comparison")
    p = sub.add_parser("sweep", help="Bloch-averaged DV->CV fidelity over an |alpha|^2 grid")
    _add_common(p, qubit=False)
    p.add_argument("--grid", default="1:8:0.5", help="start:stop:step or comma list of |alpha|^2")
    p.add_argument("--engine", choices=("Formula", "Oracle", "Both"), default="Both")
    p.add_argument("--quadrature", type=int, default=64, help="nodes per Bloch axis")
    p = sub.add_parser("sample", help="Monte-Carlo measurement records")
    _add_common(p)
    p.add_argument("--protocol", choices=("cv2dv", "dv2cv"), default="dv2cv")
    p.add_argument("--trials", type=int, default=10000)
    p = sub.add_parser("verify", help="cross-check the exact and Fock engines")
    _add_common(p, qubit=False)
    p.add_argument("--qubits", type=int, default=5, help="number of Haar-random qubits")
    return parser


def _config(args, direction: Direction) -> ProtocolConfig:
    if not (math.isfinite(args.alpha2) and args.alpha2 > 0):
        raise UsageError("--alpha2 must be positive")
    return ProtocolConfig(alpha=math.sqrt(args.alpha2), direction=direction)


def _qubit(args) -> QubitParams:
    return QubitParams(args.theta, args.phi)


def _cmd_protocol(args) -> tuple[dict, str, int]:
    direction = Direction(args.command)
    report = run(_qubit(args), _config(args, direction), crosscheck=not args.no_crosscheck, cutoff=args.cutoff)
    obj = report_to_dict(report, args.seed)
    lines = [f"{direction.value} |alpha|^2={args.alpha2:g}: total probability {report.total_probability:.12f}"]
    for b in report.branches:
        f = "-" if b.fidelity is None else f"{b.fidelity:.6f}"
        lines.append(f"  ({b.case}) {b.outcome:<9} P={b.probability:.6f} F={f} {b.correction.value}")
    lines.append(f"  f_avg={report.f_avg:.6f}")
    if report.engine is not None:
        lines.append(f"  engine max deviation {report.engine.max_crosscheck_dev:.3e}")
    return obj, "\n".join(lines), 0


def _cmd_sweep(args) -> tuple[dict, str, int, list]:
    grid = analytics.parse_grid(args.grid)
    spec = analytics.SweepSpec(grid, analytics.Quadrature(args.quadrature, args.quadrature))
    rows = analytics.sweep(spec, args.engine)
    clean = [{k: num(v) for k, v in row.items()} for row in rows]
    obj = {
        "protocol": "dv2cv",
        "quadrature": {"n_theta": args.quadrature, "n_phi": args.quadrature},
        "bloch_avg": clean,
        "quoted_fbar_alpha2_5": analytics.QUOTED_FBAR_AT_5,
        "seed": args.seed,
    }
    lines = ["alpha2   fbar_formula_eq21   fbar_oracle"]
    for r in rows:
        fo = "-" if r["fbar_oracle"] is None else f"{r['fbar_oracle']:.6f}"
        ff = "-" if r["fbar_formula_eq21"] is None else f"{r['fbar_formula_eq21']:.6f}"
        lines.append(f"{r['alpha2']:<8g} {ff:<19} {fo}")
    return obj, "\n".join(lines), 0, clean


def _cmd_sample(args) -> tuple[dict, str, int]:
    direction = Direction(args.protocol)
    mc = run_monte_carlo(_qubit(args), _config(args, direction), args.trials, args.seed)
    z = mc.z_scores()
    obj = {
        "protocol": direction.value,
        "alpha2": num(args.alpha2),
        "qubit": {"theta": num(args.theta), "phi": num(args.phi)},
        "trials": mc.trials,
        "seed": mc.seed,
        "branches": [
            {
                "case": k,
                "count": mc.counts.get(k, 0),
                "frequency": num(mc.frequencies.get(k, 0.0)),
                "probability": num(p),
                "z": num(z[k]),
            }
            for k, p in mc.expected.items()
        ],
        "mean_fidelity": num(mc.mean_fidelity),
        "f_avg": num(mc.expected_f_avg),
    }
    lines = [f"{mc.trials} trials, seed {mc.seed}: mean fidelity {mc.mean_fidelity:.6f} (exact {mc.expected_f_avg:.6f})"]
    lines += [f"  ({k}) n={mc.counts.get(k, 0)} p={p:.6f} z={z[k]:+.2f}" for k, p in mc.expected.items()]
    return obj, "\n".join(lines), 0


def _cmd_verify(args) -> tuple[dict, str, int]:
    rng = np.random.default_rng(args.seed)
    if args.qubits < 1:
        raise UsageError("--qubits must be >= 1")
    qubits = [QubitParams.haar(rng) for _ in range(args.qubits)]
    rows, worst, cutoffs = [], 0.0, {}
    for q in qubits:
        row = {"theta": num(q.theta), "phi": num(q.phi)}
        for direction in Direction:
            rep = run(q, _config(args, direction), crosscheck=True, cutoff=args.cutoff)
            row[f"{direction.value}_dev"] = num(rep.engine.max_crosscheck_dev)
            worst = max(worst, rep.engine.max_crosscheck_dev)
            cutoffs[direction.value] = {str(k): v for k, v in sorted(rep.engine.cutoffs.items())}
        rows.append(row)
    code = 0 if worst <= VERIFY_TOL else 2
    obj = {
        "protocol": "verify",
        "alpha2": num(args.alpha2),
        "seed": args.seed,
        "tol": VERIFY_TOL,
        "qubits": rows,
        "engine": {"cutoffs": cutoffs, "max_crosscheck_dev": num(worst)},
        "passed": code == 0,
    }
    status = "OK" if code == 0 else "FAIL"
    return obj, f"engine max deviation {worst:.3e} (tol {VERIFY_TOL:g}) {status}", code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        table = None
        if args.command in ("cv2dv", "dv2cv"):
            obj, summary, code = _cmd_protocol(args)
        elif args.command == "sweep":
            obj, summary, code, table = _cmd_sweep(args)
        elif args.command == "sample":
            obj, summary, code = _cmd_sample(args)
        else:
            obj, summary, code = _cmd_verify(args)
        text = encode(obj, args.format, table, analytics.SWEEP_COLUMNS if table is not None else None)
    except (UsageError, ConfigurationError, analytics.AnalyticsError, FockError) as err:
        print(f"hybrid-teleport: error: {err}", file=sys.stderr)
        return 1
    if args.out is None:
        sys.stdout.write(text)
        print(summary, file=sys.stderr)
    else:
        try:
            args.out.write_text(text)
        except OSError as err:
            print(f"hybrid-teleport: cannot write {args.out}: {err}", file=sys.stderr)
            return 1
        print(summary)
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
