"""Acceptance checks, one group per criterion.

Run with ``pytest tests/test_acceptance.py``; a PASS/FAIL line per criterion
is printed in the terminal summary.
"""

import math
import statistics
import sys
import time

import numpy as np
import pytest

from prosumpi import (Estimator, EstimatorConfig, FeatureSpec, ForgettingConfig,
                      ForgettingHistogram, QuantizedDomain)
from prosumpi.clustering import ClusterModel, fit_kmeans
from prosumpi.data import SyntheticProfile, generate, snapshot_bytes, snapshot_from_bytes
from prosumpi.evaluation import (SweepGrid, backtest, cwc, default_p_nom, downsample, picp,
                                 rank_rows, sweep, sweep_to_json, windowed_error_rates)

from oracles import argmin_label, quantile_scan
from test_histogram import worked_example_histogram

ALPHAS = (0.99, 0.999, 0.9999, 0.99999)


def ulps(a, b):
    return abs(a - b) / math.ulp(max(abs(a), abs(b)))


# 1 -----------------------------------------------------------------------

def random_masses(rng, n):
    kind = rng.integers(4)
    if kind == 0:
        m = rng.random(n)
    elif kind == 1:
        m = rng.exponential(size=n) * (rng.random(n) < rng.uniform(0.01, 0.5))
    elif kind == 2:
        m = rng.random(n) ** 8
        m[rng.integers(n)] += rng.uniform(0, 2) * m.sum()
    else:
        m = rng.integers(0, 5, n).astype(float)
    if m.sum() == 0:
        m[rng.integers(n)] = 1.0
    return m


@pytest.mark.criterion(1, "quantile_pair equals the linear-scan oracle on 1000 random histograms")
def test_c1_quantile_oracle(record_property):
    rng = np.random.default_rng(2024)
    cases = []
    for _ in range(1000):
        n = int(rng.integers(2, 2001))
        dom = QuantizedDomain(float(rng.uniform(-1e4, 0)), float(rng.uniform(1, 1e4)), n)
        m = random_masses(rng, n)
        cases.append((dom, ForgettingHistogram.from_masses(dom, m), m))
    t0 = time.perf_counter()
    got = [[h.quantile_pair(a) for a in ALPHAS] for _, h, _ in cases]
    lib_s = time.perf_counter() - t0
    mismatches = 0
    for (dom, h, m), row in zip(cases, got):
        masses = h.masses().tolist()
        for a, pair in zip(ALPHAS, row):
            lo, hi = quantile_scan(masses, a)
            mismatches += pair != (dom.bin_value(lo), dom.bin_value(hi))
    total_s = time.perf_counter() - t0
    record_property("detail", f"4000 comparisons, {mismatches} mismatches; "
                              f"library {lib_s:.3f} s, with oracle {total_s:.2f} s")
    assert mismatches == 0
    assert total_s < 10.0


# 2 -----------------------------------------------------------------------

@pytest.mark.criterion(2, "worked CDF example at alpha 0.80 gives (-1.3, 1.1)")
def test_c2_worked_example(record_property):
    h = worked_example_histogram()
    d = h.domain
    lo, hi = h.quantile_pair(0.80)
    record_property("detail", f"bins {h.quantile_bins(0.80)}, values ({lo!r}, {hi!r})")
    assert h.quantile_bins(0.80) == (d.quantize(-1.3), d.quantize(1.1)) == (18, 34)
    # The grid points labelled -1.3 and 1.1 are not exact binary fractions.
    assert ulps(lo, -1.3) <= 2 and ulps(hi, 1.1) <= 2


# 3 -----------------------------------------------------------------------

@pytest.mark.criterion(3, "batch mass decays as phi^m; normalized mass stays 1")
@pytest.mark.parametrize("m", [1, 10, 1000])
def test_c3_forgetting(m, record_property):
    dom = QuantizedDomain(-50.0, 50.0, 2000)
    rng = np.random.default_rng(m)
    h = ForgettingHistogram(dom)
    h.seed_batch(rng.normal(0, 10, 5000))
    phi = ForgettingConfig(0.02, 60.0).phi
    batch_raw = h.weights.copy()
    worst_sum = 0.0
    for v in rng.normal(0, 10, m):
        h.decay_update(float(v), phi)
        worst_sum = max(worst_sum, abs(h.masses().sum() - 1.0))
    surviving = float((batch_raw * h.scale).sum() / h.total_weight)
    rel = abs(surviving - phi ** m) / phi ** m
    record_property("detail", f"m={m}: relative error {rel:.2e}, worst |sum-1| {worst_sum:.2e}")
    assert rel <= 1e-9
    assert worst_sum <= 1e-9


# 4 -----------------------------------------------------------------------

@pytest.mark.criterion(4, "CWC anchor points")
def test_c4_cwc(record_property):
    for a in ALPHAS:
        for w in (0.0, 0.05, 0.3):
            assert cwc(w, a, a) == w
    v = cwc(0.05, 0.89, 0.99)
    record_property("detail", f"cwc(0.05, 0.89, 0.99) = {v!r}")
    assert abs(v - 0.5) <= 1e-12


# 5 and 6 -------------------------------------------------------------------

N_STEPS = 1_000_000


@pytest.fixture(scope="module")
def long_run():
    """Model B, L=1, 60 s forgetting, one million 20 ms steps on AR(1) data."""
    n_train = 100_000
    profile = SyntheticProfile(kind="ar1", seed=7, ar_coef=0.5, noise_sd_w=100.0, base_w=5_000.0)
    series = generate(profile, (n_train + N_STEPS) * 0.02, 20)
    train, test = series.split(n_train)
    est = Estimator.batch_train(
        EstimatorConfig(model="B", L=1, forgetting=ForgettingConfig(0.02, 60.0)), train)
    alphas = (0.99, 0.999)
    ts = test.timestamps.tolist()
    vals = test.values.tolist()
    hits = [0, 0]
    lat = [0] * N_STEPS
    clock = time.perf_counter_ns
    step = est.step
    t0 = time.perf_counter()
    for i in range(N_STEPS):
        s = clock()
        (_, lo0, hi0), (_, lo1, hi1) = step(ts[i], vals[i], alphas)
        lat[i] = clock() - s
        p = vals[i]
        hits[0] += lo0 <= p <= hi0
        hits[1] += lo1 <= p <= hi1
    elapsed = time.perf_counter() - t0
    return {"picp": {a: h / N_STEPS for a, h in zip(alphas, hits)}, "elapsed": elapsed, "lat": lat}


@pytest.mark.slow
@pytest.mark.criterion(5, "coverage on 10^6 AR(1) steps within 4 binomial sd of alpha; < 60 s")
@pytest.mark.parametrize("alpha", [0.99, 0.999])
def test_c5_coverage(long_run, alpha, record_property):
    floor = alpha - 4 * math.sqrt(alpha * (1 - alpha) / N_STEPS)
    got = long_run["picp"][alpha]
    record_property("detail", f"alpha={alpha}: PICP {got:.6f}, floor {floor:.6f}, "
                              f"run {long_run['elapsed']:.1f} s")
    assert got >= floor
    assert long_run["elapsed"] < 60.0


@pytest.mark.slow
@pytest.mark.criterion(6, "per-step latency flat from 10^4 to 10^6 steps; median <= 500 us")
def test_c6_latency(long_run, record_property):
    lat = long_run["lat"]
    early = statistics.median(lat[9_000:10_000]) / 1000.0
    late = statistics.median(lat[990_000:1_000_000]) / 1000.0
    record_property("detail", f"median {early:.1f} us at 9k-10k, {late:.1f} us at 990k-1M")
    assert late <= 2 * early
    assert late <= 500.0


# 7 -----------------------------------------------------------------------

@pytest.mark.criterion(7, "nearest-centroid assignment equals exhaustive argmin; blobs separate")
def test_c7_assignment(record_property):
    rng = np.random.default_rng(77)
    checked = wrong = 0
    while checked < 100_000:
        tod = bool(rng.integers(2))
        spec = FeatureSpec(use_time_of_day=tod)
        spec.mean = rng.normal(0, 100, spec.dim)
        spec.std = rng.uniform(0.1, 50, spec.dim)
        L = int(rng.integers(1, 65))
        c = rng.normal(size=(L, spec.dim))
        if rng.random() < 0.3:
            c[rng.integers(L)] = c[0]  # duplicate centroid: ties to the lower label
        model = ClusterModel(spec, c)
        p = rng.normal(spec.mean[0], spec.std[0] * 2, 2000)
        t = rng.integers(0, 7 * 86_400_000, 2000)
        batch = model.assign_many(p, t)
        cents = model.centroids.tolist()
        for i in range(len(p)):
            want = argmin_label(cents, spec.extract_one(p[i], int(t[i])).tolist())
            wrong += (model.assign(p[i], int(t[i])) != want) + (batch[i] != want)
        checked += len(p)
    record_property("detail", f"{checked} queries, {wrong} disagreements")
    assert wrong == 0


@pytest.mark.criterion(7, "nearest-centroid assignment equals exhaustive argmin; blobs separate")
def test_c7_blobs(record_property):
    rng = np.random.default_rng(78)
    spread = 1.0
    truth = np.repeat(np.arange(3), 2000)
    p = rng.normal(truth * 100.0 * spread, spread)
    ts = np.zeros(len(p), dtype=np.int64)
    model = fit_kmeans(p, ts, FeatureSpec(), 3)
    labels = model.assign_many(p, ts)
    mapping = {int(np.bincount(labels[truth == k]).argmax()): k for k in range(3)}
    mis = int(sum(mapping.get(int(l), -1) != k for l, k in zip(labels, truth)))
    record_property("detail", f"three blobs, {mis} misassignments")
    assert len(mapping) == 3 and mis == 0


# 8 -----------------------------------------------------------------------

@pytest.mark.criterion(8, "block averaging: worked example and exact composition")
def test_c8_example(record_property):
    assert downsample([0.0, 2.0, 4.0, 6.0, 8.0], 20, 100).tolist() == [4.0]


@pytest.mark.criterion(8, "block averaging: worked example and exact composition")
def test_c8_composition(record_property):
    rng = np.random.default_rng(8)
    x = rng.normal(0, 1000, 25 * 4000)
    two = downsample(downsample(x, 20, 100), 100, 500)
    one = downsample(x, 20, 500)
    diff = two != one
    worst = float(np.max(np.abs(two - one) / downsample(np.abs(x), 20, 500)))
    record_property("detail", f"{int(diff.sum())}/{len(one)} blocks differ, worst error "
                              f"{worst:.1e} of the block's mean magnitude")
    assert np.array_equal(two, one)


# 9 -----------------------------------------------------------------------

@pytest.mark.criterion(9, "EV-like data at 20 ms: best Model B CWC below best Model A (alpha 0.99)")
def test_c9_model_b_wins(record_property):
    profile = SyntheticProfile(kind="ev_station", seed=9, mean_dwell_s=300.0,
                               drift_sd_w=200.0, noise_sd_w=200.0)
    series = generate(profile, 3600, 20)
    train, test = series.split(len(series) // 2)
    grid = SweepGrid(models=("A", "B"), Ls=(1, 8), forgetting_times_s=(60.0, 3600.0),
                     alphas=(0.99,))
    rows = sweep(grid, train, test)
    best = {m: rank_rows([r for r in rows if r.model == m], 0.99, 1)[0] for m in "AB"}
    record_property("detail", "; ".join(
        f"best {m}: {r.label()} CWC {r.report.cwc[0.99]:.4g} PICP {r.report.picp[0.99]:.4f}"
        for m, r in best.items()))
    assert best["B"].report.cwc[0.99] < best["A"].report.cwc[0.99]


# 10 ----------------------------------------------------------------------

@pytest.mark.criterion(10, "sweep independent of parallelism; snapshot resume is bit-exact")
def test_c10_sweep_parallelism(record_property):
    series = generate(SyntheticProfile(kind="office", seed=10), 240, 20)
    train, test = series.split(6000)
    grid = SweepGrid(models=("A", "B"), Ls=(1, 8), forgetting_times_s=(60.0, 3600.0),
                     alphas=(0.99, 0.999), use_time_of_day=True)
    a = sweep_to_json(sweep(grid, train, test, parallelism=1))
    b = sweep_to_json(sweep(grid, train, test, parallelism=8))
    record_property("detail", f"8 configurations, identical JSON: {a == b}")
    assert a == b


@pytest.mark.criterion(10, "sweep independent of parallelism; snapshot resume is bit-exact")
def test_c10_snapshot_resume(record_property):
    series = generate(SyntheticProfile(kind="office", seed=11), (20_000 + 105_000) * 0.02, 20)
    train, test = series.split(20_000)
    head, tail = test.split(5_000)
    cfg = EstimatorConfig(model="B", L=8, forgetting=ForgettingConfig(0.02, 60.0),
                          feature_spec=FeatureSpec(use_time_of_day=True))
    straight = Estimator.batch_train(cfg, train)
    straight.run(head, ALPHAS)
    resumed = snapshot_from_bytes(snapshot_bytes(straight))
    lo1, hi1 = straight.run(tail, ALPHAS)
    lo2, hi2 = resumed.run(tail, ALPHAS)
    same = np.array_equal(lo1, lo2) and np.array_equal(hi1, hi2)
    record_property("detail", f"{len(tail)} steps after reload, bit-identical: {same}")
    assert len(tail) == 100_000 and same


# 11 ----------------------------------------------------------------------

@pytest.mark.criterion(11, "one month at 6 h windows: 120 windows, weighted mean = 1 - PICP")
def test_c11_windows(record_property):
    period_ms = 60_000
    week, month = 7 * 1440, 30 * 1440
    series = generate(SyntheticProfile(kind="office", seed=12), (week + month) * 60, period_ms)
    train, test = series.split(week)
    est = Estimator.batch_train(
        EstimatorConfig(model="B", L=8, forgetting=ForgettingConfig(60.0, 86400.0),
                        feature_spec=FeatureSpec(use_time_of_day=True)), train)
    report, recs = backtest(est, test, (0.99,), default_p_nom(train))
    rates = windowed_error_rates(recs, 0.99, 21600)
    sizes = np.bincount((recs.timestamps - recs.timestamps[0]) // 21_600_000)
    weighted = float(np.dot(sizes, rates) / sizes.sum())
    gap = abs(weighted - (1 - picp(recs, 0.99)))
    record_property("detail", f"{len(rates)} windows, PICP {report.picp[0.99]:.5f}, |gap| {gap:.1e}")
    assert len(rates) == 120
    assert gap <= 1e-12


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-rN"]))
