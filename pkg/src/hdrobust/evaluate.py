"""Replication protocol: zero-one loss, apparent error, average test error over
seeded splits, and multi-method comparison reports."""

from __future__ import annotations

import csv
import hashlib
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataset import LabeledDataset, SplitPlan, split_indices
from .methods import METHOD_NAMES, MethodConfig, fit_method, method_seed
from .seeds import derive_seed
from .synth import SimDesign, generate

REPORT_COLUMNS = (
    "source,method,n,p,G,epsilon,kappa,rho,R,avte_mean,avte_sd,apparent_mean,"
    "failure_count,runtime_ms,avte_mean_raw,avte_sd_raw,apparent_mean_raw,rank_note"
)


@dataclass(frozen=True)
class EvalConfig:
    R: int = 200
    train_fraction: float = 2.0 / 3.0
    master_seed: int = 0
    methods: tuple[str, ...] = METHOD_NAMES
    fixed_dataset: bool = False

    def __post_init__(self):
        if self.R < 1:
            raise ValueError("R must be >= 1")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0,1)")


@dataclass(frozen=True)
class ReplicationResult:
    replication_index: int
    test_error: float | None
    apparent_error: float | None
    status: str
    split_sha: str

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass(frozen=True)
class AvteResult:
    mean: float
    sd: float
    trace: tuple[ReplicationResult, ...]
    failure_count: int
    sd_undefined: bool  # fewer than two successful replications


@dataclass(frozen=True)
class BenchmarkReport:
    """One (source, method) comparison row."""

    source: str
    method: str
    n: int
    p: int
    G: int
    epsilon: float | None
    kappa: float | None
    rho: float | None
    R: int
    avte_mean: float | None
    avte_sd: float | None
    apparent_mean: float | None
    failure_count: int
    runtime_ms: float
    rank_note: str = ""
    trace: tuple[ReplicationResult, ...] = ()


def zero_one_loss(y: int, yhat: int) -> int:
    """1 iff the labels disagree."""
    return int(int(y) != int(yhat))


def _error_rate(y: np.ndarray, yhat: np.ndarray) -> float:
    return float(np.mean(np.asarray(y) != np.asarray(yhat)))


def _split_sha(train_idx: np.ndarray, test_idx: np.ndarray) -> str:
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(train_idx, dtype=np.int64).tobytes())
    digest.update(b"|")
    digest.update(np.ascontiguousarray(test_idx, dtype=np.int64).tobytes())
    return digest.hexdigest()


def _replication_splits(source, cfg: EvalConfig):
    """Materialize the (train, test, sha) triple for every replication.

    Simulated sources get a fresh dataset per replication (seed decoupled from
    the split stream); fixed datasets and `fixed_dataset` mode are re-split.
    """
    out = []
    base_ds = None
    if isinstance(source, LabeledDataset) or cfg.fixed_dataset:
        base_ds = generate(source) if isinstance(source, SimDesign) else source
    for r in range(cfg.R):
        if base_ds is not None:
            ds = base_ds
        else:
            sim_seed = derive_seed(derive_seed(cfg.master_seed, r), 0)
            ds = generate(replace(source, seed=sim_seed))
        plan = SplitPlan(cfg.train_fraction, cfg.master_seed, r)
        train_idx, test_idx = split_indices(ds, plan)
        out.append(
            (
                ds.take(train_idx, name=f"{ds.name}-train"),
                ds.take(test_idx, name=f"{ds.name}-test"),
                _split_sha(train_idx, test_idx),
            )
        )
    return out


def _fit(method, train, method_cfg: MethodConfig, seed: int):
    if callable(method):
        return method(train, method_cfg, seed)
    return fit_method(method, train, method_cfg, seed)


def _method_trace(method, splits, cfg: EvalConfig, method_cfg: MethodConfig):
    name = method if isinstance(method, str) else getattr(method, "__name__", "custom")
    trace = []
    for r, (train, test, sha) in enumerate(splits):
        base = derive_seed(cfg.master_seed, r)
        seed = method_seed(name, base)
        try:
            model = _fit(method, train, method_cfg, seed)
            test_err = _error_rate(test.labels, model.predict(test.features))
            train_err = _error_rate(train.labels, model.predict(train.features))
            trace.append(ReplicationResult(r, test_err, train_err, "ok", sha))
        except Exception as exc:  # recorded as NA, mirroring failed-fit table entries
            trace.append(ReplicationResult(r, None, None, f"error: {exc}", sha))
    return trace


def _summarize(trace) -> AvteResult:
    errors = [t.test_error for t in trace if t.ok]
    failures = len(trace) - len(errors)
    if not errors:
        raise RuntimeError(f"all {len(trace)} replications failed: {trace[0].status}")
    mean = float(np.mean(errors))
    if len(errors) >= 2:
        sd = float(np.std(errors, ddof=1))
        flag = False
    else:
        sd = 0.0
        flag = True
    return AvteResult(mean, sd, tuple(trace), failures, flag)


def apparent_error(method, train: LabeledDataset, method_cfg: MethodConfig = MethodConfig(), seed: int = 0) -> float:
    """Training (apparent) misclassification rate of the fitted model."""
    model = _fit(method, train, method_cfg, seed)
    return _error_rate(train.labels, model.predict(train.features))


def avte(
    method,
    source,
    cfg: EvalConfig,
    method_cfg: MethodConfig = MethodConfig(),
) -> AvteResult:
    """Average test error over R seeded replications, with its sample sd and trace.

    Failed replications are excluded from the mean and counted; raises only
    when every replication fails.
    """
    splits = _replication_splits(source, cfg)
    return _summarize(_method_trace(method, splits, cfg, method_cfg))


def source_descriptor(source) -> tuple[str, int, int, int, float | None, float | None, float | None]:
    if isinstance(source, SimDesign):
        return (
            source.name,
            source.n,
            source.p,
            source.G,
            source.contamination.epsilon,
            source.contamination.kappa,
            source.cov.rho,
        )
    return (source.name, source.n, source.p, source.n_classes, None, None, None)


def compare(
    sources,
    methods,
    cfg: EvalConfig,
    method_cfg: MethodConfig = MethodConfig(),
) -> list[BenchmarkReport]:
    """One report row per (source, method), every method facing identical splits.

    Rows appear in deterministic (source, method) input order; best, second
    best and worst finite AVTE per source are annotated in `rank_note`.
    """
    for m in methods:
        if isinstance(m, str) and m not in METHOD_NAMES:
            raise ValueError(f"unknown method {m!r}; known: {', '.join(METHOD_NAMES)}")
    reports: list[BenchmarkReport] = []
    for source in sources:
        name, n, p, g, eps, kappa, rho = source_descriptor(source)
        splits = _replication_splits(source, cfg)
        rows: list[BenchmarkReport] = []
        for method in methods:
            started = time.perf_counter()
            trace = _method_trace(method, splits, cfg, method_cfg)
            elapsed_ms = (time.perf_counter() - started) * 1000.0
            errors = [t.test_error for t in trace if t.ok]
            apparents = [t.apparent_error for t in trace if t.ok]
            failures = len(trace) - len(errors)
            rows.append(
                BenchmarkReport(
                    source=name,
                    method=method if isinstance(method, str) else getattr(method, "__name__", "custom"),
                    n=n,
                    p=p,
                    G=g,
                    epsilon=eps,
                    kappa=kappa,
                    rho=rho,
                    R=cfg.R,
                    avte_mean=float(np.mean(errors)) if errors else None,
                    avte_sd=float(np.std(errors, ddof=1)) if len(errors) >= 2 else (0.0 if errors else None),
                    apparent_mean=float(np.mean(apparents)) if apparents else None,
                    failure_count=failures,
                    runtime_ms=elapsed_ms,
                    trace=tuple(trace),
                )
            )
        reports.extend(_annotate_ranks(rows))
    return reports


def _annotate_ranks(rows: list[BenchmarkReport]) -> list[BenchmarkReport]:
    finite = [(i, r.avte_mean) for i, r in enumerate(rows) if r.avte_mean is not None]
    if not finite:
        return rows
    order = sorted(finite, key=lambda t: (t[1], t[0]))
    notes = {order[0][0]: "best"}
    if len(order) >= 2 and order[-1][0] not in notes:
        notes[order[-1][0]] = "worst"
    if len(order) >= 3 and order[1][0] not in notes:
        notes[order[1][0]] = "second_best"
    return [
        replace(r, rank_note=notes.get(i, "")) if i in notes else r
        for i, r in enumerate(rows)
    ]


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------

def _pct(v: float | None) -> str:
    return "NA" if v is None else f"{100.0 * v:.2f}"


def _raw(v: float | None) -> str:
    return "NA" if v is None else repr(float(v))


def write_report_csv(
    reports: list[BenchmarkReport], path: str | Path, include_timings: bool = False
) -> None:
    """Write comparison rows; percentages with 2 decimals plus raw-fraction columns.

    runtime_ms is NA unless `include_timings` so that identical configurations
    produce byte-identical files; measured timings live in the timings sidecar.
    """
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS.split(","))
        for r in reports:
            writer.writerow(
                [
                    r.source,
                    r.method,
                    r.n,
                    r.p,
                    r.G,
                    _raw(r.epsilon),
                    _raw(r.kappa),
                    _raw(r.rho),
                    r.R,
                    _pct(r.avte_mean),
                    _pct(r.avte_sd),
                    _pct(r.apparent_mean),
                    r.failure_count,
                    f"{r.runtime_ms:.1f}" if include_timings else "NA",
                    _raw(r.avte_mean),
                    _raw(r.avte_sd),
                    _raw(r.apparent_mean),
                    r.rank_note,
                ]
            )


def write_plot_csv(reports: list[BenchmarkReport], path: str | Path) -> None:
    """Long-format per-replication test errors for external plotting tools."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source", "method", "replication", "test_error"])
        for r in reports:
            for t in r.trace:
                if t.ok:
                    writer.writerow([r.source, r.method, t.replication_index, repr(t.test_error)])


def write_timings_csv(reports: list[BenchmarkReport], path: str | Path) -> None:
    """Measured wall-clock per (source, method); outside the determinism contract."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source", "method", "runtime_ms"])
        for r in reports:
            writer.writerow([r.source, r.method, f"{r.runtime_ms:.1f}"])
