"""Brute-force reference computations used as test oracles.

Nothing here shares code with the fast paths in ``prosumpi``: scans are linear,
sums are naive, distances are computed one centroid at a time.
"""

import math


def nearest_bin(grid_values, value):
    """Index of the closest grid value; ties go to the higher index."""
    best, best_d = 0, math.inf
    for k, g in enumerate(grid_values):
        d = abs(value - g)
        if d <= best_d:
            best, best_d = k, d
    return best


def cdf_scan(masses):
    acc, out = 0.0, []
    for m in masses:
        acc += m
        out.append(acc)
    return out


def quantile_scan(masses, alpha):
    """Lower = inf{k: F(k) >= (1-a)/2}, upper = sup{k: F(k) <= (1+a)/2}, by linear scan."""
    F = cdf_scan(masses)
    lo_t, hi_t = (1.0 - alpha) / 2.0, (1.0 + alpha) / 2.0
    lower = None
    for k, f in enumerate(F):
        if f >= lo_t:
            lower = k
            break
    if lower is None:
        lower = len(F) - 1
    upper = None
    for k, f in enumerate(F):
        if f <= hi_t:
            upper = k
    if upper is None or upper < lower:
        upper = lower
    return lower, upper


def dense_forgetting(masses, k, phi):
    """One forgetting update on an explicit normalized mass vector."""
    out = [phi * m for m in masses]
    out[k] += 1.0 - phi
    return out


def argmin_label(centroids, x):
    best, best_d = 0, math.inf
    for l, c in enumerate(centroids):
        d = sum((xi - ci) ** 2 for xi, ci in zip(x, c))
        if d < best_d:
            best, best_d = l, d
    return best


def naive_pinaw(lower, upper, p_nom):
    total = 0.0
    for lo, hi in zip(lower, upper):
        total += (hi - lo) / p_nom
    return total / len(lower)


def naive_picp(realized, lower, upper):
    hits = 0
    for p, lo, hi in zip(realized, lower, upper):
        if lo <= p <= hi:
            hits += 1
    return hits / len(realized)
