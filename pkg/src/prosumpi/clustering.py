"""k-means over influential variables (power level, time of day) and labeling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

__all__ = ["FeatureSpec", "ClusterModel", "fit_kmeans", "assign_label", "time_of_day"]

SECONDS_PER_DAY = 86400
DEFAULT_SEED = 42
MAX_ITER = 100
_CHUNK_ELEMS = 1 << 22


def time_of_day(timestamp_ms, utc_offset_s: float = 0.0):
    """Seconds since midnight in ``[0, 86400)``; works on scalars and arrays."""
    return np.mod(np.asarray(timestamp_ms, dtype=float) / 1000.0 + utc_offset_s, SECONDS_PER_DAY)


@dataclass
class FeatureSpec:
    """Which influential variables embed a sample, plus the fitted z-score.

    Time of day is taken linearly (no wraparound at midnight). ``utc_offset_s``
    shifts epoch timestamps to local time.
    """

    use_power: bool = True
    use_time_of_day: bool = False
    utc_offset_s: float = 0.0
    mean: np.ndarray | None = field(default=None, repr=False)
    std: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if not (self.use_power or self.use_time_of_day):
            raise ConfigurationError("at least one feature must be enabled")

    @property
    def dim(self) -> int:
        return int(self.use_power) + int(self.use_time_of_day)

    @property
    def fitted(self) -> bool:
        return self.mean is not None

    def raw_features(self, power, timestamp_ms) -> np.ndarray:
        """Un-normalized feature matrix, one row per sample."""
        power = np.atleast_1d(np.asarray(power, dtype=float))
        cols = []
        if self.use_power:
            cols.append(power)
        if self.use_time_of_day:
            cols.append(np.broadcast_to(time_of_day(timestamp_ms, self.utc_offset_s),
                                        power.shape).astype(float))
        return np.column_stack(cols)

    def fit(self, power, timestamp_ms) -> "FeatureSpec":
        raw = self.raw_features(power, timestamp_ms)
        self.mean = raw.mean(axis=0)
        self.std = raw.std(axis=0)
        return self

    def transform(self, raw: np.ndarray) -> np.ndarray:
        if not self.fitted:
            raise ConfigurationError("feature normalization has not been fitted")
        std = self.std
        safe = np.where(std > 0, std, 1.0)
        out = (raw - self.mean) / safe
        # Constant features carry no information.
        out[:, std == 0] = 0.0
        return out

    def extract(self, power, timestamp_ms) -> np.ndarray:
        return self.transform(self.raw_features(power, timestamp_ms))

    def extract_one(self, power: float, timestamp_ms: int) -> np.ndarray:
        """Scalar fast path of :meth:`extract`, bit-identical to it."""
        if not self.fitted:
            raise ConfigurationError("feature normalization has not been fitted")
        raw = []
        if self.use_power:
            raw.append(float(power))
        if self.use_time_of_day:
            raw.append((timestamp_ms / 1000.0 + self.utc_offset_s) % SECONDS_PER_DAY)
        out = np.array(raw)
        std = self.std
        return np.where(std > 0, (out - self.mean) / np.where(std > 0, std, 1.0), 0.0)


def extract_features(spec: FeatureSpec, power: float, timestamp_ms: int) -> np.ndarray:
    """Normalized feature vector of a single sample."""
    return spec.extract_one(power, timestamp_ms)


@dataclass
class ClusterModel:
    spec: FeatureSpec
    centroids: np.ndarray
    inertia_history: list[float] = field(default_factory=list, repr=False)

    def __post_init__(self) -> None:
        self.centroids = np.asarray(self.centroids, dtype=float).reshape(-1, self.spec.dim)
        if len(self.centroids) < 1 or not np.all(np.isfinite(self.centroids)):
            raise ConfigurationError("a cluster model needs at least one finite centroid")

    @property
    def L(self) -> int:
        return len(self.centroids)

    def label_features(self, x: np.ndarray) -> int:
        d = ((self.centroids - x) ** 2).sum(axis=1)
        return int(np.argmin(d))

    def assign(self, power: float, timestamp_ms: int) -> int:
        if len(self.centroids) == 1:
            return 0
        return self.label_features(self.spec.extract_one(power, timestamp_ms))

    def assign_many(self, power, timestamp_ms) -> np.ndarray:
        """Labels for many samples at once (lowest index wins ties)."""
        x = self.spec.extract(power, timestamp_ms)
        return _nearest(x, self.centroids)


def assign_label(model: ClusterModel, power: float, timestamp_ms: int) -> int:
    return model.assign(power, timestamp_ms)


def _sq_dist(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    return ((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)


def _chunk(k: int, dim: int) -> int:
    return max(1, _CHUNK_ELEMS // (k * dim))


def _nearest_1d(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    # Sorted centroids; duplicates keep their lowest label.
    order = np.argsort(c, kind="stable")
    sc = c[order]
    keep = np.concatenate(([True], sc[1:] != sc[:-1]))
    sc, labels = sc[keep], order[keep]
    m = len(sc)
    right = np.clip(np.searchsorted(sc, x, side="left"), 0, m - 1)
    left = np.clip(right - 1, 0, m - 1)
    dl = (x - sc[left]) ** 2
    dr = (x - sc[right]) ** 2
    ll, lr = labels[left], labels[right]
    pick_left = (dl < dr) | ((dl == dr) & (ll < lr))
    out = np.where(pick_left, ll, lr).astype(np.int64)
    # Rounded squares can tie beyond the two neighbours; resolve those exactly.
    best = np.minimum(dl, dr)
    far_l = (x - sc[np.clip(left - 1, 0, m - 1)]) ** 2
    far_r = (x - sc[np.clip(right + 1, 0, m - 1)]) ** 2
    amb = np.flatnonzero((far_l == best) | (far_r == best))
    if len(amb):
        out[amb] = np.argmin((x[amb, None] - c[None, :]) ** 2, axis=1)
    return out


def _nearest(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    if x.shape[1] == 1 and len(c) > 1:
        return _nearest_1d(x[:, 0], c[:, 0])
    out = np.empty(len(x), dtype=np.int64)
    step = _chunk(len(c), x.shape[1])
    for s in range(0, len(x), step):
        out[s:s + step] = np.argmin(_sq_dist(x[s:s + step], c), axis=1)
    return out


def _kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers[j] = x[idx]
        np.minimum(d2, ((x - centers[j]) ** 2).sum(axis=1), out=d2)
    return centers


def lloyd(x: np.ndarray, centers: np.ndarray, max_iter: int = MAX_ITER):
    """Plain Lloyd iterations from the given centers.

    Returns ``(centers, labels, inertia_history)``; the history holds the
    within-cluster sum of squares after each assignment step.
    """
    k = len(centers)
    centers = centers.copy()
    labels = _nearest(x, centers)
    history = [float(_inertia(x, centers, labels))]
    for _ in range(max_iter):
        counts = np.bincount(labels, minlength=k)
        sums = np.column_stack([np.bincount(labels, weights=x[:, d], minlength=k)
                                for d in range(x.shape[1])])
        nonempty = counts > 0
        centers[nonempty] = sums[nonempty] / counts[nonempty, None]
        for j in np.flatnonzero(~nonempty):
            # Re-seed an empty cluster at the point farthest from its center.
            far = int(np.argmax(((x - centers[labels]) ** 2).sum(axis=1)))
            centers[j] = x[far]
            labels[far] = j
        new_labels = _nearest(x, centers)
        history.append(float(_inertia(x, centers, new_labels)))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return centers, labels, history


def _inertia(x: np.ndarray, centers: np.ndarray, labels: np.ndarray) -> float:
    return float(((x - centers[labels]) ** 2).sum())


def fit_kmeans(power, timestamp_ms, spec: FeatureSpec, L: int,
               seed: int = DEFAULT_SEED, max_iter: int = MAX_ITER) -> ClusterModel:
    """Fit the feature normalization and ``L`` k-means centroids.

    k-means++ seeding from ``seed``, then Lloyd's iterations until no label
    changes or ``max_iter`` is reached.
    """
    power = np.asarray(power, dtype=float)
    if int(L) != L or L < 1:
        raise ConfigurationError(f"L must be a positive integer, got {L}")
    if len(power) < L:
        raise ConfigurationError(f"need at least L={L} samples, got {len(power)}")
    spec.fit(power, timestamp_ms)
    x = spec.extract(power, timestamp_ms)
    if L == 1:
        return ClusterModel(spec, x.mean(axis=0, keepdims=True), [0.0])
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp(x, int(L), rng)
    centers, _, history = lloyd(x, centers, max_iter)
    return ClusterModel(spec, centers, history)
