"""Command-line front end: ``analyze``, ``simulate``, ``sweep`` and ``validate``.

Exit codes: 0 success, 2 input error, 3 invariant violation, 4 validation failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .report import AIRTIME_MODES, AnalysisInputs, analyze
from .sim.engine import InvariantViolation, run_scenario
from .sim.metrics import MetricsReport, aggregate_rows
from .sim.scenario import SWEEPABLE, ScenarioConfig, ScenarioError, apply_param, load_scenario

EXIT_OK, EXIT_INPUT, EXIT_INVARIANT, EXIT_VALIDATION = 0, 2, 3, 4

log = logging.getLogger("dualmesh")


class InputError(Exception):
    pass


def _u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=_u64, help="override the scenario seed")
    p.add_argument("--airtime-mode", choices=AIRTIME_MODES,
                   help="published fixed airtimes (paper) or time-on-air formulas (formula)")
    p.add_argument("--out", type=Path, help="directory for output files")
    p.add_argument("--csv", action="store_true", help="emit CSV instead of the text report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dualmesh", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="closed-form latency, energy, capacity and battery tables")
    _common(p)
    p.add_argument("--beta", type=float, default=AnalysisInputs.beta)
    p.add_argument("--clusters", type=int, default=AnalysisInputs.clusters)
    p.add_argument("--rate", type=float, default=AnalysisInputs.rate_per_node,
                   help="messages per minute per node")
    p.add_argument("--sf", type=int, default=AnalysisInputs.spreading_factor,
                   help="backbone spreading factor")

    p = sub.add_parser("simulate", help="run one scenario file")
    _common(p)
    p.add_argument("scenario", type=Path)

    p = sub.add_parser("sweep", help="run a scenario once per parameter value")
    _common(p)
    p.add_argument("scenario", type=Path)
    p.add_argument("--param", required=True, help=f"one of: {', '.join(SWEEPABLE)}")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--workers", type=int, default=min(4, os.cpu_count() or 1))

    p = sub.add_parser("validate", help="run the theory-versus-implementation checks")
    _common(p)
    p.add_argument("--checks", help="comma-separated subset, e.g. c01,c08")
    return parser


def _emit(args, name: str, text: str) -> None:
    if args.out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        return
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / name
    path.write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
    log.info("wrote %s", path)


def _rows_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return buf.getvalue()


def _load(args) -> ScenarioConfig:
    cfg = load_scenario(args.scenario)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.airtime_mode is not None:
        changes["airtime_mode"] = args.airtime_mode
    return cfg.with_overrides(**changes) if changes else cfg


def cmd_analyze(args) -> int:
    try:
        inp = AnalysisInputs(beta=args.beta, clusters=args.clusters, rate_per_node=args.rate,
                             spreading_factor=args.sf,
                             airtime_mode=args.airtime_mode or "paper")
    except ValueError as exc:
        raise InputError(str(exc)) from None
    rep = analyze(inp)
    if args.csv:
        _emit(args, "analysis.csv", _rows_csv(rep.rows()))
    else:
        _emit(args, "analysis.txt", rep.render())
    return EXIT_OK


def cmd_simulate(args) -> int:
    rep = run_scenario(_load(args))
    if args.csv:
        _emit(args, "metrics.csv", rep.to_csv())
    else:
        _emit(args, "summary.txt", rep.summary())
        if args.out is not None:
            _emit(args, "metrics.csv", rep.to_csv())
    return EXIT_OK


def _sweep_one(cfg: ScenarioConfig, param: str, value: str) -> tuple[str, str]:
    # reports cross the process boundary as CSV text, which round-trips exactly
    return value, run_scenario(apply_param(cfg, param, value)).to_csv()


def cmd_sweep(args) -> int:
    base = _load(args)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise InputError("--values: no values given")
    for v in values:  # surface bad values before fanning out
        apply_param(base, args.param, v)
    if args.workers < 1:
        raise InputError("--workers: must be >= 1")
    if args.workers == 1 or len(values) == 1:
        results = [_sweep_one(base, args.param, v) for v in values]
    else:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            futures = [pool.submit(_sweep_one, base, args.param, v) for v in values]
            results = [f.result() for f in futures]
    reports = [(v, MetricsReport.from_csv(text)) for v, text in results]
    rows = aggregate_rows(reports)
    for row in rows:
        row["param"] = args.param
    if args.csv or args.out is not None:
        _emit(args, "sweep.csv", _rows_csv(rows))
        if args.out is not None:
            for v, text in results:
                _emit(args, f"run_{args.param}_{v}.csv", text)
    if not args.csv:
        lines = [f"sweep of {args.param} over {len(values)} values"]
        for row in rows:
            lines.append(f"  {args.param}={row['value']}: delivered {row['delivered']}/"
                         f"{row['originated']}, alpha {row['measured_alpha']:.4f}, "
                         f"kept on BLE {row['ble_carried_share']:.4f}")
        sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_validate(args) -> int:
    from .validate import CHECKS, render, run_checks

    keys = [k.strip() for k in args.checks.split(",")] if args.checks else None
    for k in keys or []:
        if k not in CHECKS:
            raise InputError(f"--checks: unknown check {k!r}; choose from {', '.join(CHECKS)}")
    kwargs = {}
    if args.seed is not None:
        kwargs["seed"] = args.seed
    if args.airtime_mode is not None:
        kwargs["airtime_mode"] = args.airtime_mode
    results = run_checks(keys, **kwargs)
    if args.csv:
        _emit(args, "validate.csv", _rows_csv([
            {"check": r.key, "title": r.title, "passed": r.passed, "detail": r.detail,
             "seconds": round(r.seconds, 3)} for r in results]))
    else:
        _emit(args, "validate.txt", render(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_VALIDATION


COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "sweep": cmd_sweep,
            "validate": cmd_validate}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, matching EXIT_INPUT
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ScenarioError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
