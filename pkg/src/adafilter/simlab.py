"""Monte Carlo laboratory for the multiple-testing procedures.

One scenario describes a synthetic panel: M hypotheses tested in n studies,
a truth law giving each hypothesis a per-study non-null pattern, and
block-correlated Gaussian Z-values whose non-null means are calibrated to
hit named detection powers. run_panel replays B independent replications,
runs every requested procedure on the same draws, and reports PFER, FDR and
recall with normal-approximation confidence intervals.

Randomness is counter-based (Philox) and keyed by
(master_seed, replication, stream), where stream 0 draws the truth
assignment and stream i+1 drives study i. Replications are therefore
independent and results do not depend on how work is scheduled.
"""
from __future__ import annotations

import concurrent.futures
import math
from dataclasses import dataclass, fields
from functools import lru_cache

import numpy as np
from numpy.typing import NDArray
from scipy.special import erfc, ndtr, ndtri

from .errors import NoConvergence, ParseError, ValidationError
from .pc_core import PCCombinerKind, PValueMatrix, _column_sorted, _pc_pvalues_from_sorted
from .procedures import (
    ProcedureKind,
    adafilter_bh,
    adafilter_bonferroni,
    compute_filter_select,
)
from .baselines import bh_stepup

__all__ = [
    "SimScenario",
    "TruthAssignment",
    "PanelProcedure",
    "ProcedureMetrics",
    "MetricsReport",
    "default_panel_procedures",
    "calibrate_mu",
    "sample_truth",
    "sample_pvalues",
    "run_panel",
    "load_scenarios",
    "write_metrics_tsv",
    "format_float",
]


@dataclass(frozen=True)
class SimScenario:
    """Full description of one synthetic experiment cell."""

    M: int
    n: int
    r: int
    pi0: float
    pi_rn: float
    rho: float
    block_size: int
    replications: int
    master_seed: int
    power_targets: tuple[float, float, float, float] = (0.02, 0.2, 0.5, 0.95)
    calibration_alpha: float | None = None

    def __post_init__(self) -> None:
        if self.M < 1:
            raise ValidationError(f"M must be >= 1, got {self.M}")
        if not (2 <= self.r <= self.n):
            raise ValidationError(f"need 2 <= r <= n, got r={self.r}, n={self.n}")
        for name in ("pi0", "pi_rn"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValidationError(f"{name} must be in [0, 1], got {v}")
        if self.pi0 + self.pi_rn > 1.0 + 1e-12:
            raise ValidationError("pi0 + pi_rn must not exceed 1")
        if not (0.0 <= self.rho < 1.0):
            raise ValidationError(f"rho must be in [0, 1), got {self.rho}")
        if self.block_size < 1 or self.M % self.block_size != 0:
            raise ValidationError(
                f"block_size must be >= 1 and divide M, got {self.block_size} for M={self.M}"
            )
        if self.replications < 1:
            raise ValidationError(f"replications must be >= 1, got {self.replications}")
        if not (0 <= self.master_seed < 2**64):
            raise ValidationError("master_seed must be a 64-bit nonnegative integer")
        if len(self.power_targets) != 4 or any(not (0.0 < p < 1.0) for p in self.power_targets):
            raise ValidationError("power_targets must be four values in (0, 1)")
        if self.calibration_alpha is not None and not (0.0 < self.calibration_alpha < 1.0):
            raise ValidationError("calibration_alpha must be in (0, 1)")

    @property
    def effective_calibration_alpha(self) -> float:
        """Per-test level at which the detection powers are measured (default 0.05/M)."""
        if self.calibration_alpha is not None:
            return float(self.calibration_alpha)
        return 0.05 / self.M


@dataclass(frozen=True)
class TruthAssignment:
    """Per-study non-null indicators, one column per hypothesis."""

    nonnull: NDArray[np.bool_]
    r: int

    @property
    def pc_nonnull(self) -> NDArray[np.bool_]:
        """True where at least r studies are non-null (the PC null is false)."""
        return np.count_nonzero(self.nonnull, axis=0) >= self.r


@dataclass(frozen=True)
class PanelProcedure:
    """One procedure entry of a simulation panel."""

    name: str
    kind: ProcedureKind
    alpha: float
    combiner: PCCombinerKind | None = None

    def __post_init__(self) -> None:
        direct = self.kind in (ProcedureKind.DIRECT_BONFERRONI, ProcedureKind.DIRECT_BH)
        if direct and self.combiner is None:
            raise ValidationError(f"procedure {self.name!r} needs a combiner")
        if not direct and self.combiner is not None:
            raise ValidationError(f"procedure {self.name!r} takes no combiner")
        if not (0.0 < self.alpha <= 1.0):
            raise ValidationError(f"alpha must be in (0, 1], got {self.alpha}")


@dataclass(frozen=True)
class ProcedureMetrics:
    procedure: str
    alpha: float
    pfer_mean: float
    pfer_ci95: float
    fdr_mean: float
    fdr_ci95: float
    recall_mean: float
    recall_ci95: float
    replications: int


@dataclass(frozen=True)
class MetricsReport:
    scenario: SimScenario
    metrics: tuple[ProcedureMetrics, ...]


def default_panel_procedures(
    alpha_pfer: float = 1.0, alpha_fdr: float = 0.2
) -> tuple[PanelProcedure, ...]:
    """Both adaptive procedures plus all six direct baselines.

    PFER-type procedures (Bonferroni corrections) run at alpha_pfer and
    FDR-type procedures (BH corrections) at alpha_fdr.
    """
    procs = [
        PanelProcedure("adafilter-bonferroni", ProcedureKind.ADAFILTER_BONFERRONI, alpha_pfer),
        PanelProcedure("adafilter-bh", ProcedureKind.ADAFILTER_BH, alpha_fdr),
    ]
    for comb in (PCCombinerKind.SIMES, PCCombinerKind.FISHER, PCCombinerKind.BONFERRONI):
        procs.append(
            PanelProcedure(
                f"direct-bonferroni-{comb.value}",
                ProcedureKind.DIRECT_BONFERRONI,
                alpha_pfer,
                comb,
            )
        )
        procs.append(
            PanelProcedure(f"direct-bh-{comb.value}", ProcedureKind.DIRECT_BH, alpha_fdr, comb)
        )
    return tuple(procs)


def _stream(master_seed: int, rep: int, stream_id: int) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=master_seed, spawn_key=(rep, stream_id))
    return np.random.Generator(np.random.Philox(seq))


def calibrate_mu(power: float, calibration_alpha: float) -> float:
    """Mean shift mu >= 0 whose two-sided test at calibration_alpha has the given power.

    Solves ndtr(-z - mu) + ndtr(mu - z) = power with z the upper
    calibration_alpha/2 normal quantile, by bisection to |delta power| <= 1e-10.
    """
    if not (0.0 < power < 1.0):
        raise ValidationError(f"power must be in (0, 1), got {power}")
    if not (0.0 < calibration_alpha < 1.0):
        raise ValidationError(f"calibration_alpha must be in (0, 1), got {calibration_alpha}")
    z = -float(ndtri(calibration_alpha / 2.0))

    def gap(mu: float) -> float:
        return float(ndtr(-z - mu) + ndtr(mu - z)) - power

    g0 = gap(0.0)
    if abs(g0) <= 1e-10:
        return 0.0
    if g0 > 0:
        raise NoConvergence(
            f"target power {power} is below the level {calibration_alpha} of the test"
        )
    hi = 1.0
    for _ in range(60):
        if gap(hi) >= 0.0:
            break
        hi *= 2.0
    else:
        raise NoConvergence("failed to bracket the power equation root")
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = gap(mid)
        if abs(val) <= 1e-10:
            return mid
        if val < 0.0:
            lo = mid
        else:
            hi = mid
    raise NoConvergence("bisection did not reach the power tolerance")


@lru_cache(maxsize=None)
def _calibrated_mus(powers: tuple[float, ...], calibration_alpha: float) -> tuple[float, ...]:
    return tuple(calibrate_mu(p, calibration_alpha) for p in powers)


def sample_truth(scenario: SimScenario, rep: int) -> TruthAssignment:
    """Draw the per-hypothesis truth vectors for one replication.

    The all-null vector has probability pi0; the vectors with >= r non-null
    studies share pi_rn equally; the remaining vectors share what is left
    equally. Columns are i.i.d.
    """
    g = _stream(scenario.master_seed, rep, 0)
    n, r, m = scenario.n, scenario.r, scenario.M
    p_mid = max(0.0, 1.0 - scenario.pi0 - scenario.pi_rn)
    cat = g.choice(3, size=m, p=np.array([scenario.pi0, p_mid, scenario.pi_rn]))

    k_counts = np.zeros(m, dtype=np.int64)
    mid_idx = np.flatnonzero(cat == 1)
    if mid_idx.size:
        ks = np.arange(1, r)
        w = np.array([math.comb(n, int(k)) for k in ks], dtype=np.float64)
        k_counts[mid_idx] = g.choice(ks, size=mid_idx.size, p=w / w.sum())
    top_idx = np.flatnonzero(cat == 2)
    if top_idx.size:
        ks = np.arange(r, n + 1)
        w = np.array([math.comb(n, int(k)) for k in ks], dtype=np.float64)
        k_counts[top_idx] = g.choice(ks, size=top_idx.size, p=w / w.sum())

    # a uniformly random subset of k_j studies per column, via uniform ranks
    u = g.random((n, m))
    ranks = np.argsort(np.argsort(u, axis=0, kind="stable"), axis=0, kind="stable")
    nonnull = ranks < k_counts[None, :]
    nonnull.setflags(write=False)
    return TruthAssignment(nonnull=nonnull, r=r)


def sample_pvalues(truth: TruthAssignment, scenario: SimScenario, rep: int) -> PValueMatrix:
    """Draw the p-value matrix for one replication given the truth assignment.

    Studies are independent. Within study i the Z-values are unit-variance
    Gaussians with correlation rho inside contiguous blocks of block_size
    hypotheses (Z = sqrt(rho) * W_block + sqrt(1-rho) * noise + mean). Each
    non-null (i, j) gets a mean drawn uniformly from the eight values
    +-mu_1..mu_4; p = 2 * Phi(-|Z|).
    """
    n, m, b = scenario.n, scenario.M, scenario.block_size
    mus = np.array(
        _calibrated_mus(tuple(scenario.power_targets), scenario.effective_calibration_alpha)
    )
    sq_blk = math.sqrt(scenario.rho)
    sq_own = math.sqrt(1.0 - scenario.rho)
    inv_sqrt2 = 1.0 / math.sqrt(2.0)

    values = np.empty((n, m), dtype=np.float64)
    for i in range(n):
        g = _stream(scenario.master_seed, rep, i + 1)
        w = g.standard_normal(m // b)
        eps = g.standard_normal(m)
        pick = g.integers(0, 8, size=m)
        z = sq_blk * np.repeat(w, b) + sq_own * eps
        mean = mus[pick >> 1] * np.where(pick & 1, 1.0, -1.0)
        z += np.where(truth.nonnull[i], mean, 0.0)
        values[i] = erfc(np.abs(z) * inv_sqrt2)
    values.setflags(write=False)
    return PValueMatrix(values=values, ids=None)


def _run_chunk(
    scenario: SimScenario, procedures: tuple[PanelProcedure, ...], reps: list[int]
) -> tuple[list[int], NDArray, NDArray, NDArray, NDArray]:
    """Worker: V, R, TP per procedure and the non-null PC count, per replication."""
    n_proc = len(procedures)
    v = np.zeros((len(reps), n_proc), dtype=np.int64)
    rr = np.zeros((len(reps), n_proc), dtype=np.int64)
    tp = np.zeros((len(reps), n_proc), dtype=np.int64)
    npc = np.zeros(len(reps), dtype=np.int64)

    direct_combiners = sorted(
        {p.combiner for p in procedures if p.combiner is not None}, key=lambda c: c.value
    )
    for row, rep in enumerate(reps):
        truth = sample_truth(scenario, rep)
        matrix = sample_pvalues(truth, scenario, rep)
        pc_nonnull = truth.pc_nonnull
        npc[row] = int(np.count_nonzero(pc_nonnull))

        stats = None
        pc_cache: dict[PCCombinerKind, NDArray] = {}
        if direct_combiners:
            sv = _column_sorted(matrix.values)
            n_per = matrix.n_per_hyp
            for comb in direct_combiners:
                pc_cache[comb] = _pc_pvalues_from_sorted(sv, n_per, scenario.r, comb)
            m_t = int(np.count_nonzero(n_per >= scenario.r))

        for col, proc in enumerate(procedures):
            if proc.kind is ProcedureKind.ADAFILTER_BONFERRONI:
                if stats is None:
                    stats = compute_filter_select(matrix, scenario.r)
                rejected = adafilter_bonferroni(stats, proc.alpha).rejected
            elif proc.kind is ProcedureKind.ADAFILTER_BH:
                if stats is None:
                    stats = compute_filter_select(matrix, scenario.r)
                rejected = adafilter_bh(stats, proc.alpha).rejected
            else:
                pc = pc_cache[proc.combiner]
                testable = ~np.isnan(pc)
                rejected = np.zeros(pc.shape[0], dtype=bool)
                if proc.kind is ProcedureKind.DIRECT_BONFERRONI:
                    rejected[testable] = pc[testable] <= proc.alpha / m_t
                else:
                    rejected[testable] = bh_stepup(pc[testable], proc.alpha)[0]
            v[row, col] = int(np.count_nonzero(rejected & ~pc_nonnull))
            rr[row, col] = int(np.count_nonzero(rejected))
            tp[row, col] = int(np.count_nonzero(rejected & pc_nonnull))
    return reps, v, rr, tp, npc


def run_panel(
    scenario: SimScenario,
    procedures: tuple[PanelProcedure, ...] | list[PanelProcedure],
    threads: int = 1,
) -> MetricsReport:
    """Run every procedure on B replications and summarize the error metrics.

    Replications are split into contiguous chunks executed by worker
    processes when threads > 1. Per-replication statistics land in arrays
    indexed by replication, so the report is bit-identical for any thread
    count.
    """
    procedures = tuple(procedures)
    if not procedures:
        raise ValidationError("at least one procedure is required")
    b = scenario.replications
    n_proc = len(procedures)
    v = np.zeros((b, n_proc), dtype=np.int64)
    rr = np.zeros((b, n_proc), dtype=np.int64)
    tp = np.zeros((b, n_proc), dtype=np.int64)
    npc = np.zeros(b, dtype=np.int64)

    threads = max(1, int(threads))
    if threads == 1 or b == 1:
        reps, cv, cr, ctp, cnpc = _run_chunk(scenario, procedures, list(range(b)))
        v[reps] = cv
        rr[reps] = cr
        tp[reps] = ctp
        npc[reps] = cnpc
    else:
        n_chunks = min(threads, b)
        bounds = np.linspace(0, b, n_chunks + 1).astype(int)
        chunks = [list(range(bounds[i], bounds[i + 1])) for i in range(n_chunks)]
        with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_run_chunk, scenario, procedures, ch) for ch in chunks]
            for fut in concurrent.futures.as_completed(futures):
                reps, cv, cr, ctp, cnpc = fut.result()
                v[reps] = cv
                rr[reps] = cr
                tp[reps] = ctp
                npc[reps] = cnpc

    pfer = v.astype(np.float64)
    fdr = v / np.maximum(rr, 1)
    recall = tp / np.maximum(npc, 1)[:, None]

    def mean_ci(per_rep: NDArray) -> tuple[NDArray, NDArray]:
        means = per_rep.mean(axis=0)
        if b > 1:
            half = 1.96 * per_rep.std(axis=0, ddof=1) / math.sqrt(b)
        else:
            half = np.full(n_proc, np.nan)
        return means, half

    pfer_m, pfer_h = mean_ci(pfer)
    fdr_m, fdr_h = mean_ci(fdr)
    rec_m, rec_h = mean_ci(recall)
    metrics = tuple(
        ProcedureMetrics(
            procedure=proc.name,
            alpha=proc.alpha,
            pfer_mean=float(pfer_m[i]),
            pfer_ci95=float(pfer_h[i]),
            fdr_mean=float(fdr_m[i]),
            fdr_ci95=float(fdr_h[i]),
            recall_mean=float(rec_m[i]),
            recall_ci95=float(rec_h[i]),
            replications=b,
        )
        for i, proc in enumerate(procedures)
    )
    return MetricsReport(scenario=scenario, metrics=metrics)


# scenario files: flat "key = value" lines, # comments, keys matching SimScenario
# fields; n and r accept comma lists of equal length (paired), pi0 and
# block_size accept comma lists (crossed); power_targets is a 4-value list

_LIST_KEYS = {"n", "r", "pi0", "block_size"}
_INT_KEYS = {"M", "n", "r", "block_size", "replications", "master_seed"}
_FLOAT_KEYS = {"pi0", "pi_rn", "rho", "calibration_alpha"}
_REQUIRED_KEYS = {"M", "n", "r", "pi0", "pi_rn", "rho", "block_size", "replications", "master_seed"}
_ALL_KEYS = {f.name for f in fields(SimScenario)}


def load_scenarios(path: str) -> list[SimScenario]:
    """Parse a scenario file, expanding list-valued keys into a scenario grid."""
    raw: dict[str, str] = {}
    lines: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ParseError(f"expected 'key = value', got {text!r}", lineno)
            key, _, value = text.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in _ALL_KEYS:
                raise ParseError(f"unknown scenario key {key!r}", lineno)
            if key in raw:
                raise ParseError(f"duplicate scenario key {key!r}", lineno)
            if not value:
                raise ParseError(f"empty value for {key!r}", lineno)
            raw[key] = value
            lines[key] = lineno

    missing = sorted(_REQUIRED_KEYS - raw.keys())
    if missing:
        raise ParseError(f"missing scenario keys: {', '.join(missing)}")

    def parse_one(key: str, token: str) -> object:
        try:
            return int(token) if key in _INT_KEYS else float(token)
        except ValueError:
            raise ParseError(f"bad value {token!r} for {key!r}", lines.get(key)) from None

    values: dict[str, object] = {}
    for key, text in raw.items():
        if key == "power_targets":
            parts = [p.strip() for p in text.split(",")]
            if len(parts) != 4:
                raise ParseError("power_targets needs exactly 4 values", lines[key])
            values[key] = tuple(float(p) for p in parts)
        elif key in _LIST_KEYS:
            values[key] = [parse_one(key, p.strip()) for p in text.split(",")]
        else:
            values[key] = parse_one(key, text)

    n_list = values["n"]
    r_list = values["r"]
    if len(n_list) != len(r_list):
        raise ParseError(
            f"n and r lists must pair up, got {len(n_list)} and {len(r_list)} entries",
            lines["n"],
        )
    pi0_list = values["pi0"]
    block_list = values["block_size"]

    fixed = {
        k: v
        for k, v in values.items()
        if k not in ("n", "r", "pi0", "block_size")
    }
    scenarios = []
    for n_val, r_val in zip(n_list, r_list):
        for pi0_val in pi0_list:
            for b_val in block_list:
                scenarios.append(
                    SimScenario(n=n_val, r=r_val, pi0=pi0_val, block_size=b_val, **fixed)
                )
    return scenarios


def format_float(x: float) -> str:
    """TSV float formatting: 12 significant digits, NaN as NA."""
    if isinstance(x, float) and math.isnan(x):
        return "NA"
    return format(float(x), ".12g")


_METRIC_COLUMNS = (
    "M",
    "n",
    "r",
    "pi0",
    "pi_rn",
    "rho",
    "block_size",
    "replications",
    "master_seed",
    "procedure",
    "alpha",
    "pfer_mean",
    "pfer_ci95",
    "fdr_mean",
    "fdr_ci95",
    "recall_mean",
    "recall_ci95",
)


def write_metrics_tsv(reports: list[MetricsReport], fh) -> None:
    """One row per (scenario, procedure); tab-separated, '.' decimals, LF endings."""
    fh.write("\t".join(_METRIC_COLUMNS) + "\n")
    for report in reports:
        sc = report.scenario
        prefix = [
            str(sc.M),
            str(sc.n),
            str(sc.r),
            format_float(sc.pi0),
            format_float(sc.pi_rn),
            format_float(sc.rho),
            str(sc.block_size),
            str(sc.replications),
            str(sc.master_seed),
        ]
        for pm in report.metrics:
            row = prefix + [
                pm.procedure,
                format_float(pm.alpha),
                format_float(pm.pfer_mean),
                format_float(pm.pfer_ci95),
                format_float(pm.fdr_mean),
                format_float(pm.fdr_ci95),
                format_float(pm.recall_mean),
                format_float(pm.recall_ci95),
            ]
            fh.write("\t".join(row) + "\n")
