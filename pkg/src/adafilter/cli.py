"""Command-line front end.

Three subcommands: `test` runs one procedure on a CSV p-value matrix,
`curve` emits the estimated-V/FDP table for a matrix, and `simulate` runs a
scenario file through the Monte Carlo panel. All file outputs are TSV with
'.' decimals and LF line endings; stdout carries a short human summary that
is not part of the file contract.
"""
from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from dataclasses import dataclass, replace

import numpy as np

from .baselines import AdjustmentKind, DirectProcedureSpec, direct_adjust
from .errors import AdaFilterError, OutOfRangeEntry, ParseError, ValidationError
from .pc_core import (
    PCCombinerKind,
    PValueMatrix,
    _column_sorted,
    _pc_pvalues_from_sorted,
    validate_matrix,
)
from .procedures import adafilter_bh, adafilter_bonferroni, compute_filter_select, curves
from .simlab import (
    default_panel_procedures,
    format_float,
    load_scenarios,
    run_panel,
    write_metrics_tsv,
)

__all__ = ["RunConfig", "ingest_csv", "cmd_test", "cmd_simulate", "cmd_curve", "main"]

_METHODS = ("adafilter-bonferroni", "adafilter-bh", "direct-bonferroni", "direct-bh")
_MISSING_TOKEN = "NA"


@dataclass(frozen=True)
class RunConfig:
    """Resolved options of one CLI invocation."""

    subcommand: str
    input_path: str | None = None
    output_path: str | None = None
    method: str | None = None
    combiner: str | None = None
    r: int | None = None
    alpha: float | None = None
    scenario_path: str | None = None
    seed: int | None = None
    threads: int = 1


def ingest_csv(path: str) -> PValueMatrix:
    """Read a CSV p-value matrix: header row of study names, one row per hypothesis.

    The first column holds hypothesis identifiers; remaining cells are
    decimal p-values or the literal token NA for missing. File rows become
    columns of the internal study-by-hypothesis matrix.
    """
    ids: list[str] = []
    rows: list[list[float]] = []
    n_studies: int | None = None
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for lineno, record in enumerate(reader, start=1):
            if not record:
                continue
            if lineno == 1:
                if len(record) < 2:
                    raise ParseError("header needs an id column and at least one study", lineno)
                n_studies = len(record) - 1
                continue
            if len(record) != n_studies + 1:
                raise ParseError(
                    f"expected {n_studies + 1} cells, got {len(record)}", lineno
                )
            ids.append(record[0])
            parsed: list[float] = []
            for col, token in enumerate(record[1:], start=1):
                token = token.strip()
                if token == _MISSING_TOKEN:
                    parsed.append(math.nan)
                    continue
                try:
                    value = float(token)
                except ValueError:
                    raise ParseError(f"bad p-value token {token!r} in column {col + 1}", lineno) from None
                if math.isnan(value) or not (0.0 <= value <= 1.0):
                    raise OutOfRangeEntry(len(ids), col, value)
                parsed.append(value)
            rows.append(parsed)
    if n_studies is None or not rows:
        raise ParseError("no data rows found")
    # file rows are hypotheses; the internal layout is studies x hypotheses
    return validate_matrix(np.array(rows, dtype=np.float64).T, ids=ids)


def _open_output(path: str):
    return open(path, "w", encoding="utf-8", newline="")


def _flag(value: bool) -> str:
    return "1" if value else "0"


def _capped(value: float) -> str:
    if math.isnan(value):
        return "NA"
    return format_float(min(1.0, value))


def cmd_test(config: RunConfig) -> int:
    """Run one procedure on an input matrix and write the per-hypothesis TSV."""
    if config.method not in _METHODS:
        raise ValidationError(f"unknown method {config.method!r}")
    direct = config.method.startswith("direct-")
    if direct and config.combiner is None:
        raise ValidationError(f"method {config.method} requires --combiner")
    if not direct and config.combiner is not None:
        raise ValidationError(f"method {config.method} does not take --combiner")
    alpha = 0.05 if config.alpha is None else config.alpha

    matrix = ingest_csv(config.input_path)
    stats = compute_filter_select(matrix, config.r)

    pc = None
    if config.method == "adafilter-bonferroni":
        result = adafilter_bonferroni(stats, alpha)
    elif config.method == "adafilter-bh":
        result = adafilter_bh(stats, alpha)
    else:
        combiner = PCCombinerKind.from_string(config.combiner)
        adjustment = (
            AdjustmentKind.BONFERRONI
            if config.method == "direct-bonferroni"
            else AdjustmentKind.BH
        )
        result = direct_adjust(
            matrix, config.r, DirectProcedureSpec(combiner, adjustment, alpha)
        )
        pc = _pc_pvalues_from_sorted(
            _column_sorted(matrix.values), matrix.n_per_hyp, config.r, combiner
        )

    header = ["id", "filter_p", "select_p"]
    if pc is not None:
        header.append("pc_pvalue")
    header += ["rejected", "untestable"]
    with _open_output(config.output_path) as fh:
        fh.write("\t".join(header) + "\n")
        for j in range(matrix.n_hypotheses):
            row = [
                matrix.ids[j],
                _capped(float(stats.filter_p[j])),
                _capped(float(stats.select_p[j])),
            ]
            if pc is not None:
                row.append(_capped(float(pc[j])))
            row += [_flag(bool(result.rejected[j])), _flag(bool(result.untestable[j]))]
            fh.write("\t".join(row) + "\n")

    print(f"gamma0 = {format_float(result.gamma0)}")
    if result.filtered_count is not None:
        print(f"filtered_m = {result.filtered_count}")
    print(f"rejections = {result.n_rejected}")
    return 0


def cmd_curve(config: RunConfig) -> int:
    """Write the estimated-V/FDP table of an input matrix over the default grid."""
    matrix = ingest_csv(config.input_path)
    stats = compute_filter_select(matrix, config.r)
    curves_table = curves(stats, grid=None, alpha=config.alpha)
    with _open_output(config.output_path) as fh:
        fh.write("gamma\tv_hat\tfdp_hat\n")
        for g, v, f in zip(curves_table.gamma, curves_table.v_hat, curves_table.fdp_hat):
            fh.write(
                "\t".join([format_float(float(g)), format_float(float(v)), format_float(float(f))])
                + "\n"
            )
    print(f"grid_points = {curves_table.gamma.shape[0]}")
    return 0


def cmd_simulate(config: RunConfig) -> int:
    """Run the scenario file through the default procedure panel, write metrics TSV."""
    scenarios = load_scenarios(config.scenario_path)
    if config.seed is not None:
        scenarios = [replace(sc, master_seed=config.seed) for sc in scenarios]
    if config.alpha is not None:
        procedures = default_panel_procedures(alpha_pfer=config.alpha, alpha_fdr=config.alpha)
    else:
        procedures = default_panel_procedures()
    reports = [run_panel(sc, procedures, threads=config.threads) for sc in scenarios]
    with _open_output(config.output_path) as fh:
        write_metrics_tsv(reports, fh)
    for seed in dict.fromkeys(sc.master_seed for sc in scenarios):
        print(f"master_seed = {seed}")
    print(f"scenarios = {len(scenarios)}")
    print(f"rows = {len(scenarios) * len(procedures)}")
    return 0


def _resolve_threads(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("ADAFILTER_THREADS")
    if env is None:
        return 1
    try:
        return int(env)
    except ValueError:
        raise ValidationError(f"ADAFILTER_THREADS must be an integer, got {env!r}") from None


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adafilter",
        description="Adaptive filtering procedures for partial-conjunction hypotheses",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_test = sub.add_parser("test", help="run one procedure on a CSV p-value matrix")
    p_test.add_argument("--input", required=True)
    p_test.add_argument("--output", required=True)
    p_test.add_argument("--method", required=True, choices=_METHODS)
    p_test.add_argument("--combiner", choices=[k.value for k in PCCombinerKind])
    p_test.add_argument("--r", required=True, type=int)
    p_test.add_argument("--alpha", type=float)

    p_sim = sub.add_parser("simulate", help="run a scenario file through the panel")
    p_sim.add_argument("--scenario", required=True)
    p_sim.add_argument("--output", required=True)
    p_sim.add_argument("--alpha", type=float)
    p_sim.add_argument("--seed", type=int)
    p_sim.add_argument("--threads", type=int)

    p_curve = sub.add_parser("curve", help="emit estimated-V/FDP curve data")
    p_curve.add_argument("--input", required=True)
    p_curve.add_argument("--output", required=True)
    p_curve.add_argument("--r", required=True, type=int)
    p_curve.add_argument("--alpha", type=float)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "test":
            config = RunConfig(
                subcommand="test",
                input_path=args.input,
                output_path=args.output,
                method=args.method,
                combiner=args.combiner,
                r=args.r,
                alpha=args.alpha,
            )
            return cmd_test(config)
        if args.command == "simulate":
            config = RunConfig(
                subcommand="simulate",
                scenario_path=args.scenario,
                output_path=args.output,
                alpha=args.alpha,
                seed=args.seed,
                threads=_resolve_threads(args.threads),
            )
            return cmd_simulate(config)
        config = RunConfig(
            subcommand="curve",
            input_path=args.input,
            output_path=args.output,
            r=args.r,
            alpha=args.alpha,
        )
        return cmd_curve(config)
    except (AdaFilterError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
