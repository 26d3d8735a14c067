"""Searching the configuration grid.

Each (model, L, forgetting time, resolution) is trained and backtested
independently; rows are ranked by CWC per confidence level.
"""

from prosumpi.data import SyntheticProfile, generate
from prosumpi.evaluation import SweepGrid, ranking_table, sweep

series = generate(SyntheticProfile(kind="ev_station", seed=6, drift_sd_w=200.0, noise_sd_w=200.0),
                  1800, 20)
train, test = series.split(len(series) // 2)

grid = SweepGrid(models=("A", "B"), Ls=(1, 8), forgetting_times_s=(60.0, 3600.0),
                 alphas=(0.99, 0.999), periods_ms=(20, 100))
rows = sweep(grid, train, test, parallelism=2)
print(f"{len(rows)} configurations")
print(ranking_table(rows, grid.alphas, top_k=3))
