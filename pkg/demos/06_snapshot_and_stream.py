"""Persisting state and serving intervals over a pipe.

A snapshot captures the whole estimator, so a restarted process continues
bit-for-bit. The ``prosumpi stream`` command reads ``timestamp_ms,power_w``
lines and answers each with one interval line per alpha.
"""

import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from prosumpi import Estimator, EstimatorConfig, ForgettingConfig
from prosumpi.data import SyntheticProfile, generate, load_snapshot, save_snapshot

series = generate(SyntheticProfile(kind="office", seed=7), 600, 20)
train, test = series.split(20_000)
est = Estimator.batch_train(EstimatorConfig(model="B", L=4, forgetting=ForgettingConfig(0.02, 60.0)), train)

with tempfile.TemporaryDirectory() as tmp:
    snap = Path(tmp) / "office.bin"
    print("snapshot sha256:", save_snapshot(est, snap))

    restored = load_snapshot(snap)
    a = est.run(test, (0.99,))
    b = restored.run(test, (0.99,))
    print("restored run identical:", all(np.array_equal(x, y) for x, y in zip(a, b)))

    last = load_snapshot(snap).last_timestamp
    lines = "".join(f"{last + 20 * (i + 1)},{40000 + 50 * i}\n" for i in range(3))
    out = subprocess.run([sys.executable, "-m", "prosumpi", "stream", "--snapshot", str(snap),
                          "--alpha", "0.99", "--alpha", "0.999"],
                         input=lines, capture_output=True, text=True, check=True)
    print("stream output (timestamp_ms,alpha,lower_w,upper_w):")
    print(out.stdout, end="")
