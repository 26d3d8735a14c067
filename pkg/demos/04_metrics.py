"""Scoring intervals: width, coverage, the combined criterion, error windows.

CWC equals the normalized width when coverage reaches alpha and grows
exponentially as coverage falls short.
"""

import numpy as np

from prosumpi import Estimator, EstimatorConfig, ForgettingConfig
from prosumpi.data import SyntheticProfile, generate
from prosumpi.evaluation import backtest, cwc, default_p_nom, downsample, windowed_error_rates

print("cwc at full coverage:", cwc(0.05, 0.99, 0.99))
print("cwc when misses are 11x the target:", round(cwc(0.05, 0.89, 0.99), 12))

# Block averaging to a coarser resolution; phi is recomputed from the new period.
series = generate(SyntheticProfile(kind="heat_pump", seed=5), 3 * 86400, 1000)
coarse = downsample(series, target_period_ms=60_000)
print(f"{len(series)} one-second samples -> {len(coarse)} one-minute samples")

train, test = coarse.split(1440)
est = Estimator.batch_train(EstimatorConfig(model="B", forgetting=ForgettingConfig(60.0, 21600.0)), train)
report, records = backtest(est, test, (0.99,), default_p_nom(train))
rates = windowed_error_rates(records, 0.99, window_s=6 * 3600)
print(report.table())
print("error rate per 6 h window:", np.round(rates, 4).tolist())
