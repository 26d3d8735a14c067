"""Command-line front end: gen, train, backtest, sweep, stream.

Exit codes: 0 success, 2 configuration error, 3 ingestion error, 4 runtime error.
Paths may also come from the environment: PROSUMPI_TRAIN, PROSUMPI_TEST,
PROSUMPI_SNAPSHOT and PROSUMPI_OUTPUT.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .clustering import FeatureSpec
from .data import SyntheticProfile, generate, load_snapshot, read_csv, save_snapshot, write_csv
from .errors import ConfigurationError, IngestionError, PIError
from .estimator import DEFAULT_ALPHAS, Estimator, EstimatorConfig
from .evaluation import (DEFAULT_MU, DEFAULT_WINDOW_S, DEFAULT_L_SET, DEFAULT_TPHI_SET, SweepGrid,
                         backtest, ranking_table, sweep, sweep_to_json)
from .histogram import ForgettingConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INGESTION = 3
EXIT_RUNTIME = 4


def _env(name: str) -> str | None:
    return os.environ.get(f"PROSUMPI_{name}")


def _require(value, flag: str):
    if value is None:
        raise ConfigurationError(f"missing {flag} (or the matching PROSUMPI_* variable)")
    return value


def _alphas(args) -> tuple[float, ...]:
    alphas = tuple(args.alpha) if args.alpha else DEFAULT_ALPHAS
    for a in alphas:
        if not 0.0 < a < 1.0:
            raise ConfigurationError(f"--alpha must lie in (0, 1), got {a}")
    return alphas


def cmd_gen(args) -> int:
    if args.profile:
        profile = SyntheticProfile.from_file(args.profile)
        if args.seed is not None:
            profile.seed = args.seed
    else:
        profile = SyntheticProfile(kind=args.kind, seed=args.seed or 0)
    series = generate(profile, args.duration_s, args.period_ms, args.start_ms)
    out = _require(args.output or _env("OUTPUT"), "--output")
    write_csv(series, out)
    print(f"wrote {len(series)} samples ({profile.kind}, {args.period_ms} ms) to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    train_path = _require(args.train or _env("TRAIN"), "--train")
    out = _require(args.output or _env("SNAPSHOT"), "--output")
    series = read_csv(train_path, period_ms=args.period_ms)
    if args.clusters > len(series):
        raise ConfigurationError(f"--clusters {args.clusters} exceeds the {len(series)} training samples")
    cfg = EstimatorConfig(
        model=args.model, L=args.clusters,
        forgetting=ForgettingConfig(series.period_ms / 1000.0, args.forgetting_seconds),
        domain_bins=args.bins, domain_margin=args.margin,
        feature_spec=FeatureSpec(use_power=True, use_time_of_day=args.tod),
        training_window=args.window, seed=args.seed)
    est = Estimator.batch_train(cfg, series)
    digest = save_snapshot(est, out)
    d = est.domain
    print(f"model {cfg.model}  L={cfg.L}  phi={est.phi:.10g}  period={series.period_ms} ms")
    print(f"domain [{d.p_min:.6g}, {d.p_max:.6g}] W, {d.n_bins} bins, step {d.delta_p:.6g} W")
    print("samples per cluster: " + " ".join(str(c) for c in est.cluster_sizes()))
    print(f"snapshot {out} sha256 {digest}")
    return EXIT_OK


def cmd_backtest(args) -> int:
    snap = _require(args.snapshot or _env("SNAPSHOT"), "--snapshot")
    test_path = _require(args.test or _env("TEST"), "--test")
    est = load_snapshot(snap)
    test = read_csv(test_path)
    if args.period_ms is not None and test.period_ms != args.period_ms:
        raise IngestionError(f"test data period {test.period_ms} ms, expected {args.period_ms} ms")
    p_nom = args.pnom if args.pnom is not None else est.p_nom
    if p_nom is None:
        raise ConfigurationError("snapshot holds no nominal power; pass --pnom")
    report, records = backtest(est, test, _alphas(args), p_nom, args.mu, args.window_s)
    print(report.table())
    if args.report_csv:
        Path(args.report_csv).write_text(report.to_csv())
    if args.report_json:
        Path(args.report_json).write_text(json.dumps(report.to_dict(), indent=2))
    if args.trace:
        records.write_trace(args.trace)
    if args.update_snapshot:
        save_snapshot(est, snap)
    return EXIT_OK


def cmd_sweep(args) -> int:
    train = read_csv(_require(args.train or _env("TRAIN"), "--train"))
    test = read_csv(_require(args.test or _env("TEST"), "--test"))
    if args.top_k < 1:
        raise ConfigurationError("--top-k must be at least 1")
    grid = SweepGrid(
        models=tuple(m.upper() for m in (args.model or ["A", "B"])),
        Ls=tuple(args.clusters or DEFAULT_L_SET),
        forgetting_times_s=tuple(args.forgetting_seconds or DEFAULT_TPHI_SET),
        alphas=_alphas(args), periods_ms=tuple(args.period_ms) if args.period_ms else None,
        use_time_of_day=args.tod, domain_bins=args.bins, p_nom=args.pnom, mu=args.mu,
        window_s=args.window_s, seed=args.seed)
    rows = sweep(grid, train, test, parallelism=args.jobs)
    print(ranking_table(rows, grid.alphas, args.top_k))
    if args.output_json:
        Path(args.output_json).write_text(sweep_to_json(rows))
    if args.output_csv:
        with open(args.output_csv, "w") as fh:
            fh.write("model,L,forgetting_time_s,period_ms,alpha,pinaw,picp,cwc,error\n")
            for r in rows:
                if r.report is None:
                    fh.write(f"{r.model},{r.L},{r.forgetting_time_s:g},{r.period_ms},,,,,{r.error}\n")
                    continue
                for a in r.report.alphas:
                    rep = r.report
                    fh.write(f"{r.model},{r.L},{r.forgetting_time_s:g},{r.period_ms},{a!r},"
                             f"{rep.pinaw[a]!r},{rep.picp[a]!r},{rep.cwc[a]!r},\n")
    return EXIT_OK if any(r.report for r in rows) else EXIT_RUNTIME


def cmd_stream(args) -> int:
    """Line protocol: read ``timestamp_ms,power_w``; after each sample is
    absorbed, write ``timestamp_ms,alpha,lower_w,upper_w`` for the next sample."""
    snap = _require(args.snapshot or _env("SNAPSHOT"), "--snapshot")
    est = load_snapshot(snap)
    alphas = _alphas(args)
    period = est.period_ms
    out, err = sys.stdout, sys.stderr
    try:
        for lineno, line in enumerate(sys.stdin, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                ts_text, p_text = line.split(",")
                ts, p = int(ts_text), float(p_text)
                est.observe(ts, p)
            except (ValueError, PIError) as exc:
                print(f"line {lineno}: skipped ({exc})", file=err, flush=True)
                continue
            nxt = ts + period
            out.write("".join(f"{nxt},{a!r},{lo!r},{hi!r}\n"
                              for a, (lo, hi) in zip(alphas, est.estimate_many(alphas))))
            out.flush()
    finally:
        save_snapshot(est, args.output or snap)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="prosumpi", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def alpha_opt(sp):
        sp.add_argument("--alpha", type=float, action="append",
                        help="confidence level, repeatable (default 0.99 0.999 0.9999 0.99999)")

    g = sub.add_parser("gen", help="generate a synthetic prosumption CSV")
    g.add_argument("--kind", choices=["office", "ev_station", "heat_pump", "ar1"], default="office")
    g.add_argument("--profile", help="JSON or YAML file with SyntheticProfile parameters")
    g.add_argument("--duration-s", type=float, default=3600.0)
    g.add_argument("--period-ms", type=int, default=20)
    g.add_argument("--start-ms", type=int, default=0)
    g.add_argument("--seed", type=int)
    g.add_argument("-o", "--output")
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="batch-train an estimator and write a snapshot")
    t.add_argument("--train", help="training CSV (timestamp_ms,power_w)")
    t.add_argument("--model", choices=["A", "B", "a", "b"], default="B")
    t.add_argument("--clusters", type=int, default=1)
    t.add_argument("--forgetting-seconds", type=float, default=86400.0)
    t.add_argument("--bins", type=int, default=2000)
    t.add_argument("--margin", type=float, default=0.2)
    t.add_argument("--period-ms", type=int, help="expected sampling period of the CSV")
    t.add_argument("--window", type=int, help="use only the last N training samples")
    t.add_argument("--tod", action="store_true", help="cluster on time of day as well")
    t.add_argument("--seed", type=int, default=42)
    t.add_argument("-o", "--output", help="snapshot path")
    t.set_defaults(func=cmd_train)

    b = sub.add_parser("backtest", help="rolling backtest with on-line training")
    b.add_argument("--snapshot")
    b.add_argument("--test", help="test CSV")
    alpha_opt(b)
    b.add_argument("--pnom", type=float, help="nominal power (default: training max |P|)")
    b.add_argument("--period-ms", type=int)
    b.add_argument("--mu", type=float, default=DEFAULT_MU)
    b.add_argument("--window-s", type=float, default=DEFAULT_WINDOW_S)
    b.add_argument("--trace", help="per-step PI trace CSV")
    b.add_argument("--report-csv")
    b.add_argument("--report-json")
    b.add_argument("--update-snapshot", action="store_true",
                   help="write the on-line trained state back to the snapshot")
    b.set_defaults(func=cmd_backtest)

    s = sub.add_parser("sweep", help="evaluate a grid of configurations")
    s.add_argument("--train")
    s.add_argument("--test")
    s.add_argument("--model", action="append", choices=["A", "B", "a", "b"])
    s.add_argument("--clusters", type=int, action="append")
    s.add_argument("--forgetting-seconds", type=float, action="append")
    alpha_opt(s)
    s.add_argument("--period-ms", type=int, action="append",
                   help="resample to this period (repeatable; default: data period)")
    s.add_argument("--bins", type=int, default=2000)
    s.add_argument("--pnom", type=float)
    s.add_argument("--mu", type=float, default=DEFAULT_MU)
    s.add_argument("--window-s", type=float, default=DEFAULT_WINDOW_S)
    s.add_argument("--tod", action="store_true")
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--top-k", type=int, default=5)
    s.add_argument("--output-json")
    s.add_argument("--output-csv")
    s.set_defaults(func=cmd_sweep)

    st = sub.add_parser("stream", help="stdin/stdout real-time PI stream")
    st.add_argument("--snapshot")
    alpha_opt(st)
    st.add_argument("-o", "--output", help="where to write the final snapshot (default: overwrite)")
    st.set_defaults(func=cmd_stream)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IngestionError as exc:
        print(f"ingestion error: {exc}", file=sys.stderr)
        return EXIT_INGESTION
    except FileNotFoundError as exc:
        print(f"ingestion error: {exc}", file=sys.stderr)
        return EXIT_INGESTION
    except (PIError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
