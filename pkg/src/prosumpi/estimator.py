"""Model A / Model B prediction-interval estimators.

Both models keep one forgetting histogram per cluster label. The label of the
current sample selects the histogram that predicts the next one:

* Model A histograms hold the next power value.
* Model B histograms hold the next power increment; the interval is the
  current power plus the increment quantiles.

The rolling loop is ``estimate`` (intervals for the next sample) followed by
``observe`` (on-line training with the realized sample).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .clustering import ClusterModel, FeatureSpec, fit_kmeans, DEFAULT_SEED
from .errors import ConfigurationError, IngestionError, StateError
from .histogram import ForgettingConfig, ForgettingHistogram, QuantizedDomain, pooled
from .timeseries import TimeSeries

__all__ = ["EstimatorConfig", "Estimator", "batch_train", "DEFAULT_ALPHAS"]

DEFAULT_ALPHAS = (0.99, 0.999, 0.9999, 0.99999)
MODELS = ("A", "B")


@dataclass
class EstimatorConfig:
    model: str = "B"
    L: int = 1
    forgetting: ForgettingConfig = field(default_factory=lambda: ForgettingConfig(0.02, 86400.0))
    domain_bins: int = 2000
    domain_margin: float = 0.2
    feature_spec: FeatureSpec = field(default_factory=FeatureSpec)
    training_window: int | None = None
    seed: int = DEFAULT_SEED

    def __post_init__(self) -> None:
        self.model = str(self.model).upper()
        if self.model not in MODELS:
            raise ConfigurationError(f"model must be 'A' or 'B', got {self.model!r}")
        if int(self.L) != self.L or self.L < 1:
            raise ConfigurationError(f"L must be a positive integer, got {self.L}")
        if int(self.domain_bins) != self.domain_bins or self.domain_bins < 2:
            raise ConfigurationError(f"domain_bins must be >= 2, got {self.domain_bins}")
        if not (self.domain_margin >= 0 and math.isfinite(self.domain_margin)):
            raise ConfigurationError("domain_margin must be a nonnegative number")
        if self.training_window is not None and self.training_window < 2:
            raise ConfigurationError("training_window must hold at least 2 samples")
        self.L = int(self.L)
        self.domain_bins = int(self.domain_bins)

    @property
    def phi(self) -> float:
        return self.forgetting.phi


def _domain_for(model: str, values: np.ndarray, n_bins: int, margin: float) -> QuantizedDomain:
    lo, hi = float(values.min()), float(values.max())
    span = hi - lo
    if model == "B":
        half = span * (1.0 + margin)
        if half <= 0:
            half = max(abs(lo), 1.0) * max(margin, 1e-3)
        # Zero increment must be exactly representable.
        return QuantizedDomain.anchored(0.0, -half, half, n_bins)
    pad = span * margin
    if pad <= 0:
        pad = max(abs(lo), 1.0) * max(margin, 1e-3)
    uniq, counts = np.unique(values, return_counts=True)
    mode = float(uniq[np.argmax(counts)])
    # The most frequent level sits exactly on the grid.
    return QuantizedDomain.anchored(mode, lo - pad, hi + pad, n_bins)


class Estimator:
    """Composed estimator state: domain, clusters, one histogram per label, last sample."""

    def __init__(self, config: EstimatorConfig, period_ms: int | None = None):
        self.config = config
        self.period_ms = period_ms
        self.clusters: ClusterModel | None = None
        self.domain: QuantizedDomain | None = None
        self.histograms: list[ForgettingHistogram] = []
        self.last_power: float | None = None
        self.last_timestamp: int | None = None
        self.last_label: int | None = None
        self.p_nom: float | None = None
        self._phi = config.phi

    @property
    def trained(self) -> bool:
        return self.clusters is not None and self.last_power is not None

    @property
    def phi(self) -> float:
        return self._phi

    def _require_trained(self) -> None:
        if not self.trained:
            raise StateError("estimator has not been trained")

    # -- phase 1: batch training -----------------------------------------
    @classmethod
    def batch_train(cls, config: EstimatorConfig, history) -> "Estimator":
        """Fit clusters and seed the per-label histograms from ``history``.

        ``history`` is a :class:`TimeSeries` or a ``(timestamps, values)`` pair.
        """
        if not isinstance(history, TimeSeries):
            history = TimeSeries.from_timestamps(*history)
        if config.training_window is not None:
            history = history.slice(len(history) - config.training_window)
        n = len(history)
        if n < max(config.L, 2):
            raise ConfigurationError(
                f"training history of {n} samples is shorter than max(L, 2) = {max(config.L, 2)}")
        if config.forgetting.sample_period_s * 1000.0 != history.period_ms:
            # The forgetting time constant is kept; phi follows the data period.
            config = replace(config, forgetting=config.forgetting.rescaled(history.period_ms / 1000.0))
        est = cls(config, history.period_ms)
        est._phi = config.phi
        values = history.values
        ts = history.timestamps
        est.clusters = fit_kmeans(values, ts, config.feature_spec, config.L, seed=config.seed)
        labels = est.clusters.assign_many(values, ts)
        if config.model == "A":
            targets = values[1:]
            est.domain = _domain_for("A", values, config.domain_bins, config.domain_margin)
        else:
            targets = np.diff(values)
            est.domain = _domain_for("B", values, config.domain_bins, config.domain_margin)
        prev = labels[:-1]
        order = np.argsort(prev, kind="stable")
        bounds = np.searchsorted(prev[order], np.arange(config.L + 1))
        est.histograms = []
        for l in range(config.L):
            h = ForgettingHistogram(est.domain)
            h.seed_batch(targets[order[bounds[l]:bounds[l + 1]]])
            est.histograms.append(h)
        peak = float(np.max(np.abs(values)))
        est.p_nom = peak if peak > 0 else 1.0
        est.last_power = float(values[-1])
        est.last_timestamp = int(ts[-1])
        est.last_label = int(labels[-1])
        return est

    def cluster_sizes(self) -> list[int]:
        return [h.seed_count for h in self.histograms]

    # -- phase 2: interval estimation ------------------------------------
    def _fallback(self) -> ForgettingHistogram | None:
        return pooled(self.histograms)

    def estimate(self, alpha: float) -> tuple[float, float]:
        """Interval for the next sample at confidence ``alpha``."""
        return self.estimate_many((alpha,))[0]

    def estimate_many(self, alphas: Sequence[float]) -> list[tuple[float, float]]:
        self._require_trained()
        hist = self.histograms[self.last_label]
        if hist.is_empty:
            hist = self._fallback()
        offset = self.last_power if self.config.model == "B" else 0.0
        dom = self.domain
        if hist is None:
            return [(offset + dom.p_min, offset + dom.p_max) for _ in alphas]
        out = []
        for a in alphas:
            lo, hi = hist.quantile_bins(a)
            out.append((offset + dom.bin_value(lo), offset + dom.bin_value(hi)))
        return out

    # -- phase 3: on-line training ---------------------------------------
    def observe(self, timestamp: int, power: float) -> None:
        """Feed the realized sample into the histogram of the previous label."""
        self._require_trained()
        if not math.isfinite(power):
            raise IngestionError(f"non-finite power {power!r} at timestamp {timestamp}")
        if timestamp <= self.last_timestamp:
            raise IngestionError(
                f"timestamp {timestamp} is not after the last one ({self.last_timestamp})")
        target = power if self.config.model == "A" else power - self.last_power
        self.histograms[self.last_label].decay_update(target, self._phi)
        self.last_power = float(power)
        self.last_timestamp = int(timestamp)
        self.last_label = self.clusters.assign(power, timestamp)

    def step(self, timestamp: int, power: float,
             alphas: Sequence[float] = DEFAULT_ALPHAS) -> list[tuple[float, float, float]]:
        """Intervals for ``power`` computed before it is observed, then observe it."""
        if timestamp <= (self.last_timestamp if self.last_timestamp is not None else -math.inf):
            raise IngestionError(
                f"timestamp {timestamp} is not after the last one ({self.last_timestamp})")
        pis = self.estimate_many(alphas)
        self.observe(timestamp, power)
        return [(a, lo, hi) for a, (lo, hi) in zip(alphas, pis)]

    def run(self, series, alphas: Sequence[float] = DEFAULT_ALPHAS):
        """Rolling estimate-then-observe over a whole series.

        Returns ``(lower, upper)`` arrays of shape ``(len(series), len(alphas))``.
        Produces exactly what repeated :meth:`step` calls would.
        """
        self._require_trained()
        if not isinstance(series, TimeSeries):
            series = TimeSeries.from_timestamps(*series)
        ts = series.timestamps.tolist()
        vals = series.values.tolist()
        n, k = len(vals), len(alphas)
        lower = np.empty((n, k))
        upper = np.empty((n, k))
        if n == 0:
            return lower, upper
        if ts[0] <= self.last_timestamp:
            raise IngestionError(
                f"timestamp {ts[0]} is not after the last one ({self.last_timestamp})")
        for a in alphas:
            if not 0.0 < a < 1.0:
                raise ConfigurationError(f"alpha must lie in (0, 1), got {a}")
        qlo = [(1.0 - a) * 0.5 for a in alphas]
        qhi = [(1.0 + a) * 0.5 for a in alphas]
        grid = self.domain.values().tolist()
        quantize = self.domain.quantize
        model_b = self.config.model == "B"
        hists = self.histograms
        phi = self._phi
        single = self.clusters.L == 1
        assign = self.clusters.assign
        rk = range(k)
        last_power, label = self.last_power, self.last_label
        for i in range(n):
            p = vals[i]
            h = hists[label]
            row_lo = lower[i]
            row_hi = upper[i]
            if h._raw_total > 0.0:
                off = last_power if model_b else 0.0
                total = h._raw_total
                for j in rk:
                    lo = h._first_reaching(qlo[j] * total)
                    hi = h._last_within(qhi[j] * total)
                    if hi < lo:
                        hi = lo
                    row_lo[j] = off + grid[lo]
                    row_hi[j] = off + grid[hi]
            else:
                for j, (lo, hi) in enumerate(self.estimate_many(alphas)):
                    row_lo[j] = lo
                    row_hi[j] = hi
            h.decay_update_bin(quantize(p - last_power if model_b else p), phi)
            last_power = p
            self.last_power = p
            self.last_timestamp = ts[i]
            label = 0 if single else assign(p, ts[i])
            self.last_label = label
        return lower, upper

    def __repr__(self) -> str:
        c = self.config
        return (f"Estimator(model={c.model}, L={c.L}, phi={self._phi:.8g}, "
                f"trained={self.trained})")


def batch_train(config: EstimatorConfig, history) -> Estimator:
    return Estimator.batch_train(config, history)
