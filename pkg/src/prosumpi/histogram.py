"""Quantized amplitude grid and exponentially forgetting histograms.

A :class:`ForgettingHistogram` stores raw (unnormalized) bin weights together
with a global ``scale`` multiplier, so that aging every bin by a factor
``phi`` costs one multiplication instead of a pass over the grid. The raw
weights are mirrored in a Fenwick tree which provides O(log n) prefix sums
and O(log n) inverse-CDF searches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, EmptyHistogramError, IngestionError

__all__ = [
    "QuantizedDomain",
    "ForgettingConfig",
    "ForgettingHistogram",
    "forgetting_factor",
    "quantize",
]

RENORMALIZE_BELOW = 1e-300


@dataclass(frozen=True)
class QuantizedDomain:
    """Uniform grid ``p_min, p_min + delta_p, ..., p_max`` with ``n_bins`` points.

    ``anchor`` is a value guaranteed to lie exactly on the grid, at index
    ``anchor_index``. By default the anchor is ``p_min`` itself. Use
    :meth:`anchored` to build a grid that contains a chosen value (for
    instance zero for power differentials) exactly.
    """

    p_min: float
    p_max: float
    n_bins: int
    anchor: float | None = None
    anchor_index: int = 0
    delta_p: float = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        p_min, p_max = float(self.p_min), float(self.p_max)
        if not (math.isfinite(p_min) and math.isfinite(p_max)):
            raise ConfigurationError("domain bounds must be finite")
        if not p_min < p_max:
            raise ConfigurationError(f"need p_min < p_max, got {p_min} >= {p_max}")
        if int(self.n_bins) != self.n_bins or self.n_bins < 2:
            raise ConfigurationError(f"n_bins must be an integer >= 2, got {self.n_bins}")
        object.__setattr__(self, "p_min", p_min)
        object.__setattr__(self, "p_max", p_max)
        object.__setattr__(self, "n_bins", int(self.n_bins))
        if self.anchor is None:
            object.__setattr__(self, "anchor", p_min)
            object.__setattr__(self, "anchor_index", 0)
        elif not 0 <= self.anchor_index < self.n_bins:
            raise ConfigurationError("anchor_index outside the grid")
        object.__setattr__(self, "delta_p", (p_max - p_min) / (self.n_bins - 1))

    @classmethod
    def anchored(cls, anchor: float, lo: float, hi: float, n_bins: int) -> "QuantizedDomain":
        """Grid of ``n_bins`` points covering ``[lo, hi]`` with ``anchor`` exactly on it.

        One bin of slack is spent so the anchor can be placed on a grid point;
        the resulting bounds satisfy ``p_min <= lo`` and ``p_max >= hi``.
        """
        if not lo <= anchor <= hi or not lo < hi:
            raise ConfigurationError("anchored domain needs lo <= anchor <= hi and lo < hi")
        if n_bins < 3:
            return cls(lo, hi, n_bins)
        step = (hi - lo) / (n_bins - 2)
        k0 = min(max(math.ceil((anchor - lo) / step), 0), n_bins - 1)
        p_min = min(anchor - k0 * step, lo)
        p_max = max(anchor + (n_bins - 1 - k0) * step, hi)
        return cls(p_min, p_max, n_bins, anchor=float(anchor), anchor_index=k0)

    def bin_value(self, k: int) -> float:
        if k == 0:
            return self.p_min
        if k == self.n_bins - 1:
            return self.p_max
        return self.anchor + (k - self.anchor_index) * self.delta_p

    def values(self) -> np.ndarray:
        """All grid values as an array (``bin_value`` for every index)."""
        out = self.anchor + (np.arange(self.n_bins) - self.anchor_index) * self.delta_p
        out[0] = self.p_min
        out[-1] = self.p_max
        return out

    def quantize(self, value: float) -> int:
        """Index of the nearest grid point; out-of-range values clamp to the ends.

        Exact midpoints go to the higher index.
        """
        if not math.isfinite(value):
            raise IngestionError(f"cannot quantize non-finite value {value!r}")
        k = self.anchor_index + math.floor((value - self.anchor) / self.delta_p + 0.5)
        if k < 0:
            return 0
        if k >= self.n_bins:
            return self.n_bins - 1
        return k

    def quantize_array(self, values: Sequence[float] | np.ndarray) -> np.ndarray:
        arr = np.asarray(values, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise IngestionError("cannot quantize non-finite values")
        k = self.anchor_index + np.floor((arr - self.anchor) / self.delta_p + 0.5)
        return np.clip(k, 0, self.n_bins - 1).astype(np.int64)


def quantize(domain: QuantizedDomain, value: float) -> int:
    return domain.quantize(value)


def forgetting_factor(sample_period_s: float, forgetting_time_s: float) -> float:
    """``phi = r / (r + 1)`` with ``r = forgetting_time_s / sample_period_s``."""
    if not (sample_period_s > 0 and forgetting_time_s > 0):
        raise ConfigurationError("sample period and forgetting time must be positive")
    ratio = forgetting_time_s / sample_period_s
    return ratio / (ratio + 1.0)


@dataclass(frozen=True)
class ForgettingConfig:
    sample_period_s: float
    forgetting_time_s: float

    def __post_init__(self) -> None:
        forgetting_factor(self.sample_period_s, self.forgetting_time_s)

    @property
    def phi(self) -> float:
        return forgetting_factor(self.sample_period_s, self.forgetting_time_s)

    def rescaled(self, sample_period_s: float) -> "ForgettingConfig":
        """Same forgetting time constant at a different sampling period."""
        return ForgettingConfig(sample_period_s, self.forgetting_time_s)


class ForgettingHistogram:
    """Normalized histogram over a :class:`QuantizedDomain` with exponential aging.

    The normalized mass of bin ``k`` is ``raw[k] * scale / total_weight``.
    Batch seeding stores integer counts with ``scale = 1/len(values)`` so the
    seeded distribution is represented exactly.
    """

    __slots__ = ("domain", "scale", "update_count", "seed_count",
                 "_n", "_top", "_raw", "_tree", "_raw_total")

    def __init__(self, domain: QuantizedDomain):
        self.domain = domain
        self._n = domain.n_bins
        self._top = 1 << (self._n.bit_length() - 1)
        self._reset()

    def _reset(self) -> None:
        self._raw = [0.0] * self._n
        self._tree = [0.0] * (self._n + 1)
        self._raw_total = 0.0
        self.scale = 1.0
        self.update_count = 0
        self.seed_count = 0

    # -- state -----------------------------------------------------------
    @property
    def is_empty(self) -> bool:
        return self._raw_total <= 0.0

    @property
    def weights(self) -> np.ndarray:
        """Raw per-bin weights (multiply by ``scale`` for actual weight)."""
        return np.array(self._raw)

    @property
    def total_weight(self) -> float:
        return self._raw_total * self.scale

    @property
    def n_observations(self) -> int:
        return self.seed_count + self.update_count

    def masses(self) -> np.ndarray:
        """Normalized per-bin mass; all zeros for an empty histogram."""
        raw = np.array(self._raw)
        if self._raw_total <= 0.0:
            return raw
        return raw / self._raw_total

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.masses())

    # -- construction ----------------------------------------------------
    def seed_batch(self, values: Iterable[float]) -> None:
        """Replace the contents with the empirical distribution of ``values``.

        Each value contributes weight ``1/len(values)``. An empty input leaves
        the histogram empty.
        """
        vals = np.asarray(list(values) if not isinstance(values, np.ndarray) else values,
                          dtype=float)
        self._reset()
        if vals.size == 0:
            return
        bins = self.domain.quantize_array(vals)
        counts = np.bincount(bins, minlength=self._n).astype(float)
        self._load_raw(counts, 1.0 / vals.size)
        self.seed_count = int(vals.size)

    @classmethod
    def from_masses(cls, domain: QuantizedDomain, masses: Sequence[float]) -> "ForgettingHistogram":
        """Histogram with the given per-bin masses (normalized on load)."""
        arr = np.asarray(masses, dtype=float)
        if arr.shape != (domain.n_bins,):
            raise ConfigurationError("need one mass per bin")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise ConfigurationError("masses must be finite and nonnegative")
        hist = cls(domain)
        total = float(arr.sum())
        if total > 0:
            hist._load_raw(arr, 1.0 / total)
            hist.seed_count = 1
        return hist

    def _load_raw(self, raw: np.ndarray, scale: float) -> None:
        self._raw = [float(x) for x in raw]
        tree = [0.0] * (self._n + 1)
        n = self._n
        for i in range(1, n + 1):
            tree[i] += self._raw[i - 1]
            parent = i + (i & -i)
            if parent <= n:
                tree[parent] += tree[i]
        self._tree = tree
        self._raw_total = float(sum(self._raw))
        self.scale = scale

    def _add_raw(self, k: int, w: float) -> None:
        self._raw[k] += w
        tree = self._tree
        n = self._n
        i = k + 1
        while i <= n:
            tree[i] += w
            i += i & -i

    # -- on-line training ------------------------------------------------
    def decay_update(self, value: float, phi: float) -> None:
        """Age all mass by ``phi`` and put ``1 - phi`` on the bin of ``value``."""
        self.decay_update_bin(self.domain.quantize(value), phi)

    def decay_update_bin(self, k: int, phi: float) -> None:
        if not 0.0 < phi < 1.0:
            raise ConfigurationError(f"forgetting factor must lie in (0, 1), got {phi}")
        self.update_count += 1
        if self._raw_total <= 0.0:
            self._add_raw(k, 1.0)
            self._raw_total = 1.0
            self.scale = 1.0
            return
        # Actual total weight is kept at its current value (1 after seeding).
        total = self._raw_total * self.scale
        scale = self.scale * phi
        if scale < RENORMALIZE_BELOW:
            self._load_raw(np.array(self._raw) * self.scale, 1.0)
            scale = phi
        self.scale = scale
        w = (1.0 - phi) * total / scale
        self._add_raw(k, w)
        self._raw_total += w

    # -- quantiles -------------------------------------------------------
    def _first_reaching(self, target: float) -> int:
        """Smallest bin ``k`` whose prefix weight is ``>= target``."""
        tree = self._tree
        n = self._n
        pos = 0
        acc = 0.0
        step = self._top
        while step:
            nxt = pos + step
            if nxt <= n:
                s = acc + tree[nxt]
                if s < target:
                    pos = nxt
                    acc = s
            step >>= 1
        return pos if pos < n else n - 1

    def _last_within(self, target: float) -> int:
        """Largest bin ``k`` whose prefix weight is ``<= target``; -1 if none."""
        tree = self._tree
        n = self._n
        pos = 0
        acc = 0.0
        step = self._top
        while step:
            nxt = pos + step
            if nxt <= n:
                s = acc + tree[nxt]
                if s <= target:
                    pos = nxt
                    acc = s
            step >>= 1
        return pos - 1

    def prefix_weight(self, k: int) -> float:
        """Raw weight of bins ``0..k`` inclusive."""
        tree = self._tree
        i = k + 1
        acc = 0.0
        while i > 0:
            acc += tree[i]
            i -= i & -i
        return acc

    def quantile_bins(self, alpha: float) -> tuple[int, int]:
        """Bin indices of the lower and upper bounds at confidence ``alpha``.

        lower = min{k : F(k) >= (1 - alpha)/2}, upper = max{k : F(k) <= (1 + alpha)/2},
        with upper clamped up to lower when that set is empty or below lower.
        """
        if not 0.0 < alpha < 1.0:
            raise ConfigurationError(f"alpha must lie in (0, 1), got {alpha}")
        total = self._raw_total
        if total <= 0.0:
            raise EmptyHistogramError("no data for label")
        lo = self._first_reaching((1.0 - alpha) * 0.5 * total)
        hi = self._last_within((1.0 + alpha) * 0.5 * total)
        if hi < lo:
            hi = lo
        return lo, hi

    def quantile_pair(self, alpha: float) -> tuple[float, float]:
        lo, hi = self.quantile_bins(alpha)
        return self.domain.bin_value(lo), self.domain.bin_value(hi)

    # -- persistence -----------------------------------------------------
    def state(self) -> dict:
        """Exact internal state, suitable for bit-identical restoration."""
        return {
            "raw": np.array(self._raw, dtype=np.float64),
            "tree": np.array(self._tree, dtype=np.float64),
            "raw_total": self._raw_total,
            "scale": self.scale,
            "update_count": self.update_count,
            "seed_count": self.seed_count,
        }

    @classmethod
    def from_state(cls, domain: QuantizedDomain, state: dict) -> "ForgettingHistogram":
        hist = cls(domain)
        raw = np.asarray(state["raw"], dtype=np.float64)
        tree = np.asarray(state["tree"], dtype=np.float64)
        if raw.shape != (domain.n_bins,) or tree.shape != (domain.n_bins + 1,):
            raise ConfigurationError("histogram state does not match the domain")
        hist._raw = raw.tolist()
        hist._tree = tree.tolist()
        hist._raw_total = float(state["raw_total"])
        hist.scale = float(state["scale"])
        hist.update_count = int(state["update_count"])
        hist.seed_count = int(state["seed_count"])
        return hist

    def copy(self) -> "ForgettingHistogram":
        return ForgettingHistogram.from_state(self.domain, self.state())

    def __repr__(self) -> str:
        return (f"ForgettingHistogram(n_bins={self._n}, total_weight={self.total_weight:.6g}, "
                f"observations={self.n_observations})")


def pooled(histograms: Sequence[ForgettingHistogram]) -> ForgettingHistogram | None:
    """Union of several histograms on one domain, weighted by observation count.

    Returns ``None`` when every input is empty.
    """
    nonempty = [h for h in histograms if not h.is_empty]
    if not nonempty:
        return None
    domain = nonempty[0].domain
    mix = np.zeros(domain.n_bins)
    for h in nonempty:
        mix += h.masses() * max(h.n_observations, 1)
    return ForgettingHistogram.from_masses(domain, mix)
