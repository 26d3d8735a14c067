"""Ultra-short-term prediction intervals of power prosumption.

Cluster-conditioned, exponentially forgetting empirical histograms (Model A on
raw power, Model B on power increments), with backtest metrics and a
configuration sweep harness.
"""

__version__ = "0.1.0"

from .errors import (ConfigurationError, EmptyHistogramError, IngestionError, PIError,
                     SnapshotError, StateError)
from .histogram import (ForgettingConfig, ForgettingHistogram, QuantizedDomain,
                        forgetting_factor, quantize)
from .clustering import ClusterModel, FeatureSpec, assign_label, extract_features, fit_kmeans
from .timeseries import TimeSeries
from .estimator import DEFAULT_ALPHAS, Estimator, EstimatorConfig, batch_train
from .evaluation import (BacktestRecords, EvaluationReport, SweepGrid, SweepRow, backtest, cwc,
                         downsample, picp, pinaw, rank_rows, sweep, windowed_error_rates)
from .data import (SyntheticProfile, generate, load_snapshot, read_csv, save_snapshot,
                   write_csv)
