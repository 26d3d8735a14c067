"""Backtest metrics, windowed error rates, downsampling and configuration sweeps."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .clustering import FeatureSpec
from .errors import ConfigurationError, PIError
from .estimator import DEFAULT_ALPHAS, Estimator, EstimatorConfig
from .histogram import ForgettingConfig
from .timeseries import TimeSeries

__all__ = [
    "BacktestRecords", "EvaluationReport", "pinaw", "picp", "cwc", "windowed_error_rates",
    "downsample", "backtest", "SweepGrid", "SweepRow", "sweep", "rank_rows", "DEFAULT_MU",
    "DEFAULT_L_SET", "DEFAULT_TPHI_SET",
]

DEFAULT_MU = math.log(10.0) / 10.0
DEFAULT_WINDOW_S = 21600.0
DEFAULT_L_SET = (1, 8, 64, 256, 512, 1024)
DEFAULT_TPHI_SET = (1.0, 60.0, 3600.0, 21600.0, 86400.0, 604800.0)


@dataclass
class BacktestRecords:
    """Realizations and the intervals emitted for them, one row per step.

    ``lower`` and ``upper`` have shape ``(N, len(alphas))``.
    """

    timestamps: np.ndarray
    realized: np.ndarray
    alphas: tuple[float, ...]
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        self.realized = np.asarray(self.realized, dtype=float)
        self.alphas = tuple(float(a) for a in self.alphas)
        self.lower = np.asarray(self.lower, dtype=float).reshape(len(self.realized), -1)
        self.upper = np.asarray(self.upper, dtype=float).reshape(len(self.realized), -1)
        if self.lower.shape[1] != len(self.alphas) or self.upper.shape != self.lower.shape:
            raise ConfigurationError("bounds must have one column per alpha")

    def __len__(self) -> int:
        return len(self.realized)

    def column(self, alpha: float) -> int:
        for j, a in enumerate(self.alphas):
            if a == alpha:
                return j
        raise ConfigurationError(f"alpha {alpha} not present in records {self.alphas}")

    def bounds(self, alpha: float) -> tuple[np.ndarray, np.ndarray]:
        j = self.column(alpha)
        return self.lower[:, j], self.upper[:, j]

    def covered(self, alpha: float) -> np.ndarray:
        lo, hi = self.bounds(alpha)
        return (lo <= self.realized) & (self.realized <= hi)

    def write_trace(self, path_or_file) -> None:
        """Per-step CSV: timestamp_ms, power_w, then lower/upper per alpha."""
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh)
            header = ["timestamp_ms", "power_w"]
            for a in self.alphas:
                header += [f"lower_{a:g}", f"upper_{a:g}"]
            w.writerow(header)
            for i in range(len(self.realized)):
                row = [int(self.timestamps[i]), repr(float(self.realized[i]))]
                for j in range(len(self.alphas)):
                    row += [repr(float(self.lower[i, j])), repr(float(self.upper[i, j]))]
                w.writerow(row)
        finally:
            if own:
                fh.close()


def pinaw(records: BacktestRecords, alpha: float, p_nom: float) -> float:
    """Mean interval width divided by the nominal power."""
    if not p_nom > 0:
        raise ConfigurationError(f"p_nom must be positive, got {p_nom}")
    if len(records) == 0:
        raise ConfigurationError("no records")
    lo, hi = records.bounds(alpha)
    return float(np.mean((hi - lo) / p_nom))


def picp(records: BacktestRecords, alpha: float) -> float:
    """Fraction of realizations inside their closed interval."""
    if len(records) == 0:
        raise ConfigurationError("no records")
    return float(np.mean(records.covered(alpha)))


def cwc(pinaw_value: float, picp_value: float, alpha: float, mu: float = DEFAULT_MU) -> float:
    """Width penalized exponentially when coverage falls short of ``alpha``."""
    if not 0.0 < alpha < 1.0:
        raise ConfigurationError(f"alpha must lie in (0, 1), got {alpha}")
    exponent = -mu * (picp_value - alpha) / (1.0 - alpha)
    if exponent <= 0.0 or pinaw_value == 0.0:
        return pinaw_value
    if exponent > 700.0:
        return math.inf
    return pinaw_value * math.exp(exponent)


def window_index(records: BacktestRecords, window_s: float = DEFAULT_WINDOW_S) -> np.ndarray:
    if not window_s > 0:
        raise ConfigurationError("window length must be positive")
    if len(records) == 0:
        return np.zeros(0, dtype=np.int64)
    window_ms = window_s * 1000.0
    return ((records.timestamps - records.timestamps[0]) // window_ms).astype(np.int64)


def windowed_error_rates(records: BacktestRecords, alpha: float,
                         window_s: float = DEFAULT_WINDOW_S) -> list[float]:
    """``1 - PICP`` within consecutive windows of ``window_s`` seconds.

    Windows are aligned to the first record; a trailing partial window is kept.
    Windows without records (possible only with gaps) are skipped.
    """
    idx = window_index(records, window_s)
    if idx.size == 0:
        return []
    miss = (~records.covered(alpha)).astype(float)
    counts = np.bincount(idx)
    misses = np.bincount(idx, weights=miss)
    keep = counts > 0
    return (misses[keep] / counts[keep]).tolist()


def downsample(series: TimeSeries | Sequence[float], source_period_ms: int | None = None,
               target_period_ms: int | None = None):
    """Non-overlapping block means from one sampling period to a coarser one.

    Accepts a :class:`TimeSeries` (then ``source_period_ms`` may be omitted)
    or a plain sequence of values. The trailing incomplete block is dropped.
    """
    if isinstance(series, TimeSeries):
        source_period_ms = series.period_ms if source_period_ms is None else source_period_ms
        values = series.values
    else:
        values = np.asarray(series, dtype=float)
    if source_period_ms is None or target_period_ms is None:
        raise ConfigurationError("source and target periods are required")
    if source_period_ms <= 0 or target_period_ms <= 0 or target_period_ms % source_period_ms:
        raise ConfigurationError(
            f"target period {target_period_ms} ms is not a multiple of {source_period_ms} ms")
    k = target_period_ms // source_period_ms
    m = len(values) // k
    out = values[:m * k].reshape(m, k).mean(axis=1)
    if isinstance(series, TimeSeries):
        return TimeSeries(series.start_timestamp, target_period_ms, out)
    return out


@dataclass
class EvaluationReport:
    alphas: tuple[float, ...]
    pinaw: dict[float, float]
    picp: dict[float, float]
    cwc: dict[float, float]
    p_nom: float
    n: int
    window_s: float = DEFAULT_WINDOW_S
    windowed_error_rates: dict[float, list[float]] = field(default_factory=dict)

    def rows(self) -> list[dict]:
        return [{"alpha": a, "pinaw": self.pinaw[a], "picp": self.picp[a], "cwc": self.cwc[a],
                 "p_nom": self.p_nom, "n": self.n,
                 "windows": len(self.windowed_error_rates.get(a, []))} for a in self.alphas]

    def to_dict(self) -> dict:
        return {
            "alphas": list(self.alphas), "p_nom": self.p_nom, "n": self.n,
            "window_s": self.window_s,
            "metrics": self.rows(),
            "windowed_error_rates": {repr(a): r for a, r in self.windowed_error_rates.items()},
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=["alpha", "pinaw", "picp", "cwc", "p_nom", "n", "windows"],
                           lineterminator="\n")
        w.writeheader()
        for row in self.rows():
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
        return buf.getvalue()

    def table(self) -> str:
        lines = [f"{'alpha':>9} {'PINAW':>12} {'PICP':>10} {'CWC':>12} {'windows':>8}"]
        for row in self.rows():
            lines.append(f"{row['alpha']:>9.5g} {row['pinaw']:>12.6g} {row['picp']:>10.6f} "
                         f"{row['cwc']:>12.6g} {row['windows']:>8d}")
        return "\n".join(lines)


def evaluate(records: BacktestRecords, p_nom: float, mu: float = DEFAULT_MU,
             window_s: float = DEFAULT_WINDOW_S) -> EvaluationReport:
    pw = {a: pinaw(records, a, p_nom) for a in records.alphas}
    pc = {a: picp(records, a) for a in records.alphas}
    return EvaluationReport(
        alphas=records.alphas, pinaw=pw, picp=pc,
        cwc={a: cwc(pw[a], pc[a], a, mu) for a in records.alphas},
        p_nom=float(p_nom), n=len(records), window_s=window_s,
        windowed_error_rates={a: windowed_error_rates(records, a, window_s) for a in records.alphas},
    )


def default_p_nom(train: TimeSeries) -> float:
    """Largest absolute power in the training set (falls back to 1 W for an all-zero set)."""
    p = float(np.max(np.abs(train.values))) if len(train) else 0.0
    return p if p > 0 else 1.0


def backtest(estimator: Estimator, test: TimeSeries, alphas: Sequence[float] = DEFAULT_ALPHAS,
             p_nom: float | None = None, mu: float = DEFAULT_MU,
             window_s: float = DEFAULT_WINDOW_S) -> tuple[EvaluationReport, BacktestRecords]:
    """Rolling estimate-then-observe over ``test`` with on-line training.

    Mutates ``estimator``. ``p_nom`` defaults to the largest absolute test power
    when not given; callers holding the training set should pass
    ``default_p_nom(train)``.
    """
    if estimator.period_ms is not None and test.period_ms != estimator.period_ms:
        raise ConfigurationError(
            f"test period {test.period_ms} ms differs from the trained period {estimator.period_ms} ms")
    alphas = tuple(alphas)
    lower, upper = estimator.run(test, alphas)
    records = BacktestRecords(test.timestamps, test.values, alphas, lower, upper)
    if p_nom is None:
        p_nom = default_p_nom(test)
    return evaluate(records, p_nom, mu, window_s), records


# -- configuration sweep ----------------------------------------------------

@dataclass
class SweepGrid:
    """Cartesian grid of configurations. ``periods_ms=None`` keeps the data period."""

    models: Sequence[str] = ("A", "B")
    Ls: Sequence[int] = DEFAULT_L_SET
    forgetting_times_s: Sequence[float] = DEFAULT_TPHI_SET
    alphas: Sequence[float] = DEFAULT_ALPHAS
    periods_ms: Sequence[int] | None = None
    use_time_of_day: bool = False
    domain_bins: int = 2000
    domain_margin: float = 0.2
    p_nom: float | None = None
    mu: float = DEFAULT_MU
    window_s: float = DEFAULT_WINDOW_S
    seed: int = 42

    def configurations(self, native_period_ms: int) -> list[tuple[str, int, float, int]]:
        periods = list(self.periods_ms) if self.periods_ms else [native_period_ms]
        if not (self.models and self.Ls and self.forgetting_times_s and self.alphas and periods):
            raise ConfigurationError("sweep grid is empty")
        return [(m, int(L), float(t), int(p)) for p in periods for m in self.models
                for L in self.Ls for t in self.forgetting_times_s]


@dataclass
class SweepRow:
    model: str
    L: int
    forgetting_time_s: float
    period_ms: int
    report: EvaluationReport | None = None
    error: str | None = None

    @property
    def key(self) -> tuple:
        return (self.period_ms, self.model, self.L, self.forgetting_time_s)

    def label(self) -> str:
        return f"{self.model} L={self.L} Tphi={self.forgetting_time_s:g}s T={self.period_ms}ms"


def _run_configuration(args) -> SweepRow:
    (model, L, tphi, period), grid, train, test = args
    row = SweepRow(model, L, tphi, period)
    try:
        if period != train.period_ms:
            train = downsample(train, train.period_ms, period)
            test = downsample(test, test.period_ms, period)
        cfg = EstimatorConfig(
            model=model, L=L, forgetting=ForgettingConfig(period / 1000.0, tphi),
            domain_bins=grid.domain_bins, domain_margin=grid.domain_margin,
            feature_spec=FeatureSpec(use_power=True, use_time_of_day=grid.use_time_of_day),
            seed=grid.seed)
        est = Estimator.batch_train(cfg, train)
        p_nom = grid.p_nom if grid.p_nom is not None else default_p_nom(train)
        row.report, _ = backtest(est, test, grid.alphas, p_nom, grid.mu, grid.window_s)
    except (PIError, ValueError) as exc:
        row.error = f"{type(exc).__name__}: {exc}"
    return row


def sweep(grid: SweepGrid, train: TimeSeries, test: TimeSeries,
          parallelism: int = 1) -> list[SweepRow]:
    """Independent batch-train + backtest for every configuration of ``grid``.

    Rows come back in grid order whatever ``parallelism`` is; use
    :func:`rank_rows` for the per-alpha ranking by CWC. Failing configurations
    carry an ``error`` message instead of a report.
    """
    if train.period_ms != test.period_ms:
        raise ConfigurationError("train and test series must share a sampling period")
    tasks = [(c, grid, train, test) for c in grid.configurations(train.period_ms)]
    if parallelism <= 1 or len(tasks) == 1:
        rows = [_run_configuration(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            rows = list(pool.map(_run_configuration, tasks))
    return rows


def rank_rows(rows: Sequence[SweepRow], alpha: float, top_k: int | None = 5) -> list[SweepRow]:
    """Successful rows ordered by CWC at ``alpha`` (ties by configuration key)."""
    ok = [r for r in rows if r.report is not None and alpha in r.report.cwc]
    ok.sort(key=lambda r: (r.report.cwc[alpha], r.key))
    return ok if top_k is None else ok[:top_k]


def ranking_table(rows: Sequence[SweepRow], alphas: Sequence[float], top_k: int = 5) -> str:
    out = []
    for a in alphas:
        out.append(f"alpha = {a:g}")
        out.append(f"  {'rank':>4} {'configuration':<36} {'PINAW':>12} {'PICP':>10} {'CWC':>12}")
        for i, r in enumerate(rank_rows(rows, a, top_k), 1):
            rep = r.report
            out.append(f"  {i:>4} {r.label():<36} {rep.pinaw[a]:>12.6g} "
                       f"{rep.picp[a]:>10.6f} {rep.cwc[a]:>12.6g}")
    failed = [r for r in rows if r.error]
    for r in failed:
        out.append(f"  failed: {r.label()}: {r.error}")
    return "\n".join(out)


def sweep_to_dict(rows: Sequence[SweepRow]) -> list[dict]:
    return [{"model": r.model, "L": r.L, "forgetting_time_s": r.forgetting_time_s,
             "period_ms": r.period_ms, "error": r.error,
             "report": r.report.to_dict() if r.report else None} for r in rows]


def sweep_to_json(rows: Sequence[SweepRow]) -> str:
    return json.dumps(sweep_to_dict(rows), indent=2, sort_keys=True)
