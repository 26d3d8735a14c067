"""Quantized domains and forgetting histograms.

A histogram lives on a fixed grid of power values. Each update shrinks the
old mass by phi and puts 1 - phi on the newest sample's bin, so old samples
fade out with a chosen time constant.
"""

import numpy as np

from prosumpi import ForgettingConfig, ForgettingHistogram, QuantizedDomain

# A 2000-point grid from -10 kW to 10 kW.
domain = QuantizedDomain(-10_000.0, 10_000.0, 2000)
print(f"grid step {domain.delta_p:.3f} W; 1234.5 W falls in bin {domain.quantize(1234.5)}")

# Seed from a batch of past increments, then keep learning on-line.
rng = np.random.default_rng(0)
hist = ForgettingHistogram(domain)
hist.seed_batch(rng.normal(0.0, 500.0, 50_000))

forgetting = ForgettingConfig(sample_period_s=0.02, forgetting_time_s=60.0)
print(f"phi for 20 ms samples and a 60 s memory: {forgetting.phi:.8f}")

for alpha in (0.99, 0.999):
    lo, hi = hist.quantile_pair(alpha)
    print(f"  before drift, alpha={alpha}: [{lo:8.1f}, {hi:8.1f}] W")

# The process gets noisier. Three minutes of new data (three time constants)
# mostly replace the batch.
for v in rng.normal(0.0, 1500.0, 9000):
    hist.decay_update(float(v), forgetting.phi)
for alpha in (0.99, 0.999):
    lo, hi = hist.quantile_pair(alpha)
    print(f"  after drift,  alpha={alpha}: [{lo:8.1f}, {hi:8.1f}] W")
print(f"batch weight left: {forgetting.phi ** 9000:.3%}")
