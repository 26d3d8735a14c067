"""Model A versus Model B on a synthetic office feeder.

Model A predicts the next power value directly. Model B predicts the next
increment and adds it to the latest measurement, which tracks slow drifts.
"""

from prosumpi import Estimator, EstimatorConfig, FeatureSpec, ForgettingConfig
from prosumpi.data import SyntheticProfile, generate
from prosumpi.evaluation import backtest, default_p_nom

# One hour to train, the next hour to test. The load keeps rising through the
# test hour, which a value histogram (Model A) cannot anticipate.
series = generate(SyntheticProfile(kind="office", seed=4), 2 * 3600, 100)
train, test = series.split(len(series) // 2)

for model in ("A", "B"):
    cfg = EstimatorConfig(model=model, L=8, forgetting=ForgettingConfig(0.1, 600.0),
                          feature_spec=FeatureSpec(use_time_of_day=True))
    est = Estimator.batch_train(cfg, train)
    lo, hi = est.estimate(0.99)
    print(f"Model {model}: next-sample 99% interval [{lo:.0f}, {hi:.0f}] W "
          f"(last measured {est.last_power:.0f} W)")
    report, _ = backtest(est, test, (0.99, 0.999), default_p_nom(train))
    print(report.table())
    print()

# Step by step: the interval is always produced before the sample arrives.
est = Estimator.batch_train(EstimatorConfig(model="B", forgetting=ForgettingConfig(0.1, 600.0)), train)
for t, p in zip(test.timestamps[:3].tolist(), test.values[:3].tolist()):
    (_, lo, hi), = est.step(t, p, (0.99,))
    print(f"t={t} ms  interval [{lo:.0f}, {hi:.0f}]  realized {p:.0f}")
