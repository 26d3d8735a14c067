"""Splitting the history by operating regime.

k-means on (power, time of day) picks which histogram predicts the next
sample. An EV charger idles at 0 W and charges at a few plateaus, so each
regime gets its own successor distribution.
"""

import numpy as np

from prosumpi import FeatureSpec, fit_kmeans
from prosumpi.data import SyntheticProfile, generate

series = generate(SyntheticProfile(kind="ev_station", seed=3), 6 * 3600, 1000)
spec = FeatureSpec(use_power=True, use_time_of_day=True)
model = fit_kmeans(series.values, series.timestamps, spec, L=6)

labels = model.assign_many(series.values, series.timestamps)
print(f"{model.L} clusters, inertia {model.inertia_history[0]:.1f} -> {model.inertia_history[-1]:.1f}")
for l in range(model.L):
    members = series.values[labels == l]
    print(f"  label {l}: {len(members):6d} samples, power {members.min():9.0f} .. {members.max():9.0f} W")

# Single-sample assignment is what the real-time loop uses.
print("150 kW at 10:00 ->", model.assign(150_000.0, 10 * 3_600_000))
