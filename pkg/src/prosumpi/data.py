"""CSV ingestion, synthetic prosumption profiles and estimator snapshots."""

from __future__ import annotations

import csv
import hashlib
import json
import os
import struct
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

from .clustering import ClusterModel, FeatureSpec
from .errors import ConfigurationError, IngestionError, SnapshotError
from .estimator import Estimator, EstimatorConfig
from .histogram import ForgettingConfig, ForgettingHistogram, QuantizedDomain
from .timeseries import TimeSeries

__all__ = [
    "read_csv", "write_csv", "SyntheticProfile", "generate", "save_snapshot", "load_snapshot",
    "snapshot_bytes", "snapshot_from_bytes", "SNAPSHOT_VERSION",
]

MS_PER_DAY = 86_400_000


# -- CSV --------------------------------------------------------------------

def _parse_timestamp(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        f = float(text)
        if not f.is_integer():
            raise
        return int(f)


def read_csv(path, period_ms: int | None = None) -> TimeSeries:
    """Read ``timestamp_ms,power_w`` rows into a uniformly sampled series.

    A header line is optional. ``period_ms`` is only needed for single-row files.
    """
    timestamps: list[int] = []
    values: list[float] = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise IngestionError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            try:
                ts = _parse_timestamp(row[0].strip())
                p = float(row[1].strip())
            except ValueError:
                if not timestamps and lineno == 1:
                    continue  # header
                raise IngestionError(f"{path}:{lineno}: malformed row {row!r}") from None
            if not np.isfinite(p):
                raise IngestionError(f"{path}:{lineno}: non-finite power {row[1]!r}")
            timestamps.append(ts)
            values.append(p)
    if not timestamps:
        raise IngestionError(f"{path}: no data rows")
    if len(timestamps) == 1:
        if period_ms is None:
            raise IngestionError(f"{path}: a single row needs an explicit period")
        return TimeSeries(timestamps[0], period_ms, values)
    series = TimeSeries.from_timestamps(timestamps, values)
    if period_ms is not None and series.period_ms != period_ms:
        raise IngestionError(f"{path}: sampling period {series.period_ms} ms, expected {period_ms} ms")
    return series


def write_csv(series: TimeSeries, path, header: bool = True) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(["timestamp_ms", "power_w"])
        for ts, v in zip(series.timestamps.tolist(), series.values.tolist()):
            w.writerow([ts, repr(v)])


# -- synthetic profiles -----------------------------------------------------

KINDS = ("office", "ev_station", "heat_pump", "ar1")
_DEFAULT_NOISE = {"office": 300.0, "ev_station": 0.0, "heat_pump": 2000.0, "ar1": 100.0}


@dataclass
class SyntheticProfile:
    """Parameters of a synthetic prosumption generator.

    Only the fields relevant to ``kind`` are used:

    * ``office``: ``base_w + diurnal_amplitude_w * sin(...)`` minus a PV bell of
      ``pv_peak_w`` that cloud events (``event_rate_per_h``) cut by up to
      ``pv_drop_fraction`` within ``ramp_s``; plus Gaussian ``noise_sd_w``.
    * ``ev_station``: Markov switching between 0 and ``levels_w`` with
      exponential dwell times (``mean_dwell_s``) and linear transitions of
      ``transition_s``; while charging, the level wanders as a random walk
      with ``drift_sd_w`` per square-root second; plus ``noise_sd_w``.
    * ``heat_pump``: on/off cycling at ``on_power_w`` with cycle lengths around
      ``cycle_on_s`` / ``cycle_off_s``, an inrush overshoot decaying with
      ``transient_tau_s``; plus ``noise_sd_w``.
    * ``ar1``: ``base_w`` plus an AR(1) process with coefficient ``ar_coef`` and
      Gaussian innovations of ``noise_sd_w``.

    ``noise_sd_w`` defaults per kind (zero for ``ev_station``).
    """

    kind: str = "office"
    seed: int = 0
    base_w: float = 40_000.0
    diurnal_amplitude_w: float = 20_000.0
    noise_sd_w: float | None = None
    pv_peak_w: float = 25_000.0
    event_rate_per_h: float = 6.0
    pv_drop_fraction: float = 0.6
    ramp_s: float = 0.6
    levels_w: Sequence[float] = (50_000.0, 150_000.0)
    mean_dwell_s: float = 600.0
    transition_s: float = 2.0
    drift_sd_w: float = 0.0
    on_power_w: float = 1_500_000.0
    cycle_on_s: float = 900.0
    cycle_off_s: float = 600.0
    transient_tau_s: float = 1.5
    ar_coef: float = 0.5

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown profile kind {self.kind!r}; choose from {KINDS}")
        self.levels_w = tuple(float(x) for x in self.levels_w)
        if self.noise_sd_w is None:
            self.noise_sd_w = _DEFAULT_NOISE[self.kind]

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticProfile":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown profile parameters: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "SyntheticProfile":
        text = Path(path).read_text()
        if str(path).endswith((".yaml", ".yml")):
            import yaml
            return cls.from_dict(yaml.safe_load(text))
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["levels_w"] = list(self.levels_w)
        return d


def _n_samples(duration_s: float, period_ms: int) -> int:
    if not duration_s > 0:
        raise ConfigurationError(f"duration must be positive, got {duration_s}")
    if int(period_ms) != period_ms or period_ms <= 0:
        raise ConfigurationError(f"period_ms must be a positive integer, got {period_ms}")
    total_ms = duration_s * 1000.0
    n = total_ms / period_ms
    if n != int(n):
        raise ConfigurationError(f"duration {duration_s} s is not a multiple of {period_ms} ms")
    return int(n)


def _office(p: SyntheticProfile, ts: np.ndarray, dt: float, rng) -> np.ndarray:
    tod = (ts % MS_PER_DAY) / 1000.0
    load = p.base_w + p.diurnal_amplitude_w * np.sin(2 * np.pi * (tod / 86400.0 - 0.25))
    if p.pv_peak_w:
        # Clear-sky bell between 06:00 and 18:00.
        x = (tod - 21600.0) / 43200.0
        bell = np.where((x > 0) & (x < 1), np.sin(np.pi * np.clip(x, 0, 1)) ** 2, 0.0)
        cloud = np.ones(len(ts))
        n = len(ts)
        n_events = rng.poisson(p.event_rate_per_h * n * dt / 3600.0) if p.event_rate_per_h else 0
        starts = np.sort(rng.integers(0, n, size=n_events))
        for s in starts:
            dwell = max(1, int(rng.exponential(60.0) / dt))
            cloud[s:s + dwell] = 1.0 - p.pv_drop_fraction * rng.uniform(0.3, 1.0)
        width = max(1, int(round(p.ramp_s / dt)))
        if width > 1:
            cloud = np.convolve(np.pad(cloud, (width - 1, 0), mode="edge"),
                                np.ones(width) / width, mode="valid")
        load = load - p.pv_peak_w * bell * cloud
    return load


def _ev_station(p: SyntheticProfile, n: int, dt: float, rng) -> np.ndarray:
    states = (0.0,) + tuple(p.levels_w)
    out = np.empty(n)
    ramp = max(0, int(round(p.transition_s / dt)))
    i, cur = 0, 0.0
    while i < n:
        dwell = max(1, int(rng.exponential(p.mean_dwell_s) / dt))
        seg = min(dwell, n - i)
        out[i:i + seg] = cur
        if p.drift_sd_w and cur != 0.0:
            out[i:i + seg] += np.cumsum(rng.normal(0.0, p.drift_sd_w * np.sqrt(dt), seg))
        i += dwell
        if i >= n:
            break
        nxt = cur
        while nxt == cur:
            nxt = states[rng.integers(len(states))]
        r = min(ramp, n - i)
        if r:
            frac = np.arange(1, r + 1) / (ramp + 1)
            out[i:i + r] = cur + (nxt - cur) * frac
            i += r
        cur = nxt
    return out


def _heat_pump(p: SyntheticProfile, n: int, dt: float, rng) -> np.ndarray:
    out = np.zeros(n)
    i, on = 0, False
    tau = max(p.transient_tau_s / dt, 1e-9)
    while i < n:
        mean = p.cycle_on_s if on else p.cycle_off_s
        dwell = max(1, int(rng.normal(mean, 0.2 * mean) / dt))
        seg = min(dwell, n - i)
        if on:
            k = np.arange(seg)
            overshoot = 0.3 * p.on_power_w * np.exp(-k / tau)
            out[i:i + seg] = p.on_power_w * rng.uniform(0.9, 1.0) + overshoot
        i += seg
        on = not on
    return out


def generate(profile: SyntheticProfile, duration_s: float, period_ms: int,
             start_timestamp: int = 0) -> TimeSeries:
    """Deterministic synthetic series for ``profile`` (same seed, same output)."""
    n = _n_samples(duration_s, period_ms)
    rng = np.random.default_rng(profile.seed)
    dt = period_ms / 1000.0
    ts = start_timestamp + period_ms * np.arange(n, dtype=np.int64)
    if profile.kind == "office":
        values = _office(profile, ts, dt, rng)
    elif profile.kind == "ev_station":
        values = _ev_station(profile, n, dt, rng)
    elif profile.kind == "heat_pump":
        values = _heat_pump(profile, n, dt, rng)
    else:
        eps = rng.normal(0.0, 1.0, size=n) * profile.noise_sd_w
        values = profile.base_w + lfilter([1.0], [1.0, -profile.ar_coef], eps)
        return TimeSeries(start_timestamp, period_ms, values)
    if profile.noise_sd_w:
        values = values + rng.normal(0.0, profile.noise_sd_w, size=n)
    return TimeSeries(start_timestamp, period_ms, values)


# -- snapshots --------------------------------------------------------------
#
# Layout: MAGIC | u16 version | u64 payload length | 32-byte SHA-256 of payload | payload
# payload: u32 header length | JSON header | float64 arrays (little endian)

MAGIC = b"PSPI"
SNAPSHOT_VERSION = 1
_PREFIX = struct.Struct("<4sHQ32s")
_HLEN = struct.Struct("<I")


def _hx(x: float | None):
    return None if x is None else float(x).hex()


def _unhx(s):
    return None if s is None else float.fromhex(s)


def snapshot_bytes(est: Estimator) -> bytes:
    cfg = est.config
    spec = cfg.feature_spec
    header = {
        "config": {
            "model": cfg.model, "L": cfg.L,
            "sample_period_s": _hx(cfg.forgetting.sample_period_s),
            "forgetting_time_s": _hx(cfg.forgetting.forgetting_time_s),
            "domain_bins": cfg.domain_bins, "domain_margin": _hx(cfg.domain_margin),
            "use_power": spec.use_power, "use_time_of_day": spec.use_time_of_day,
            "utc_offset_s": _hx(spec.utc_offset_s),
            "training_window": cfg.training_window, "seed": cfg.seed,
        },
        "period_ms": est.period_ms,
        "phi": _hx(est.phi),
        "p_nom": _hx(est.p_nom),
        "trained": est.clusters is not None,
    }
    arrays: list[np.ndarray] = []
    if est.clusters is not None:
        d = est.domain
        header.update({
            "domain": {"p_min": _hx(d.p_min), "p_max": _hx(d.p_max), "n_bins": d.n_bins,
                       "anchor": _hx(d.anchor), "anchor_index": d.anchor_index},
            "feature_mean": [_hx(x) for x in spec.mean],
            "feature_std": [_hx(x) for x in spec.std],
            "centroids_shape": list(est.clusters.centroids.shape),
            "last_power": _hx(est.last_power), "last_timestamp": est.last_timestamp,
            "last_label": est.last_label,
            "histograms": [],
        })
        arrays.append(est.clusters.centroids)
        for h in est.histograms:
            st = h.state()
            header["histograms"].append({
                "raw_total": _hx(st["raw_total"]), "scale": _hx(st["scale"]),
                "update_count": st["update_count"], "seed_count": st["seed_count"]})
            arrays += [st["raw"], st["tree"]]
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)
    payload = _HLEN.pack(len(head)) + head + body
    return _PREFIX.pack(MAGIC, SNAPSHOT_VERSION, len(payload), hashlib.sha256(payload).digest()) + payload


def snapshot_from_bytes(blob: bytes) -> Estimator:
    if len(blob) < _PREFIX.size:
        raise SnapshotError("snapshot truncated (incomplete prefix)")
    magic, version, length, digest = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise SnapshotError("not a snapshot file (bad magic)")
    if version != SNAPSHOT_VERSION:
        raise SnapshotError(f"snapshot version {version} unsupported (expected {SNAPSHOT_VERSION})")
    payload = blob[_PREFIX.size:]
    if len(payload) != length:
        raise SnapshotError(f"snapshot truncated: {len(payload)} of {length} payload bytes")
    if hashlib.sha256(payload).digest() != digest:
        raise SnapshotError("snapshot checksum mismatch")
    (hlen,) = _HLEN.unpack_from(payload)
    header = json.loads(payload[_HLEN.size:_HLEN.size + hlen])
    data = np.frombuffer(payload, dtype="<f8", offset=_HLEN.size + hlen)

    c = header["config"]
    spec = FeatureSpec(use_power=c["use_power"], use_time_of_day=c["use_time_of_day"],
                       utc_offset_s=_unhx(c["utc_offset_s"]))
    cfg = EstimatorConfig(
        model=c["model"], L=c["L"],
        forgetting=ForgettingConfig(_unhx(c["sample_period_s"]), _unhx(c["forgetting_time_s"])),
        domain_bins=c["domain_bins"], domain_margin=_unhx(c["domain_margin"]),
        feature_spec=spec, training_window=c["training_window"], seed=c["seed"])
    est = Estimator(cfg, header["period_ms"])
    est._phi = _unhx(header["phi"])
    est.p_nom = _unhx(header["p_nom"])
    if not header["trained"]:
        return est
    spec.mean = np.array([_unhx(x) for x in header["feature_mean"]])
    spec.std = np.array([_unhx(x) for x in header["feature_std"]])
    dm = header["domain"]
    est.domain = QuantizedDomain(_unhx(dm["p_min"]), _unhx(dm["p_max"]), dm["n_bins"],
                                 anchor=_unhx(dm["anchor"]), anchor_index=dm["anchor_index"])
    rows, cols = header["centroids_shape"]
    pos = rows * cols
    est.clusters = ClusterModel(spec, data[:pos].reshape(rows, cols).copy())
    n = est.domain.n_bins
    for hs in header["histograms"]:
        raw = data[pos:pos + n]
        tree = data[pos + n:pos + 2 * n + 1]
        pos += 2 * n + 1
        est.histograms.append(ForgettingHistogram.from_state(est.domain, {
            "raw": raw, "tree": tree, "raw_total": _unhx(hs["raw_total"]),
            "scale": _unhx(hs["scale"]), "update_count": hs["update_count"],
            "seed_count": hs["seed_count"]}))
    if pos != len(data):
        raise SnapshotError("snapshot payload size does not match its header")
    est.last_power = _unhx(header["last_power"])
    est.last_timestamp = header["last_timestamp"]
    est.last_label = header["last_label"]
    return est


def save_snapshot(est: Estimator, path) -> str:
    """Write the estimator atomically; returns the hex SHA-256 of the file."""
    blob = snapshot_bytes(est)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)
    return hashlib.sha256(blob).hexdigest()


def load_snapshot(path) -> Estimator:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise SnapshotError(f"cannot read snapshot {path}: {exc}") from exc
    return snapshot_from_bytes(blob)
