"""Uniformly sampled power time series."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, IngestionError

__all__ = ["TimeSeries"]


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Samples ``values[i]`` taken at ``start_timestamp + i * period_ms`` (epoch ms)."""

    start_timestamp: int
    period_ms: int
    values: np.ndarray

    def __post_init__(self) -> None:
        if int(self.period_ms) != self.period_ms or self.period_ms <= 0:
            raise ConfigurationError(f"period_ms must be a positive integer, got {self.period_ms}")
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 1:
            raise IngestionError("values must be one-dimensional")
        if not np.all(np.isfinite(vals)):
            bad = int(np.flatnonzero(~np.isfinite(vals))[0])
            raise IngestionError(f"non-finite power value at index {bad}")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "period_ms", int(self.period_ms))
        object.__setattr__(self, "start_timestamp", int(self.start_timestamp))

    @classmethod
    def from_timestamps(cls, timestamps, values) -> "TimeSeries":
        """Build from explicit timestamps, rejecting unsorted or gapped input."""
        ts = np.asarray(timestamps, dtype=np.int64)
        vals = np.asarray(values, dtype=np.float64)
        if ts.shape != vals.shape or ts.ndim != 1:
            raise IngestionError("timestamps and values must be 1-d and of equal length")
        if len(ts) == 0:
            raise IngestionError("empty time series")
        if len(ts) == 1:
            raise IngestionError("cannot infer a sampling period from a single sample")
        steps = np.diff(ts)
        period = int(steps[0])
        if period <= 0:
            raise IngestionError(f"timestamps not strictly increasing at {int(ts[1])}")
        bad = np.flatnonzero(steps != period)
        if bad.size:
            j = int(bad[0]) + 1
            kind = "not strictly increasing" if steps[j - 1] <= 0 else "gap or irregular spacing"
            raise IngestionError(f"{kind} at timestamp {int(ts[j])} (expected {int(ts[j - 1]) + period})")
        return cls(int(ts[0]), period, vals)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def timestamps(self) -> np.ndarray:
        return self.start_timestamp + self.period_ms * np.arange(len(self.values), dtype=np.int64)

    @property
    def period_s(self) -> float:
        return self.period_ms / 1000.0

    def slice(self, start: int, stop: int | None = None) -> "TimeSeries":
        stop = len(self) if stop is None else stop
        start = max(0, start)
        return TimeSeries(self.start_timestamp + start * self.period_ms, self.period_ms,
                          self.values[start:stop])

    def split(self, n_first: int) -> tuple["TimeSeries", "TimeSeries"]:
        """Chronological split into the first ``n_first`` samples and the rest."""
        return self.slice(0, n_first), self.slice(n_first)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return (self.start_timestamp == other.start_timestamp and self.period_ms == other.period_ms
                and np.array_equal(self.values, other.values))
