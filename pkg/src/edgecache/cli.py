"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure. Argument-parsing failures also exit 2 (argparse default).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiments
from .core import (ConfigError, DataError, NetworkParams, NumericalError,
                   PopularityProfile)
from .experiments import ExperimentConfig
from .placement import asp, compute_constants, optimal_placement

log = logging.getLogger(__name__)


def _load_config(args) -> ExperimentConfig:
    if getattr(args, "config", None):
        cfg = ExperimentConfig.from_toml(args.config)
    else:
        cfg = ExperimentConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "runs", None) is not None:
        overrides["runs"] = args.runs
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    return cfg


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    table = experiments.run_experiment(cfg)
    experiments.emit_outputs(table, args.out)
    print(f"wrote {Path(args.out) / 'metrics.csv'}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_config(args)
    try:
        values = [v for v in (s.strip() for s in args.values.split(",")) if v]
    except AttributeError:
        raise ConfigError("values must be a comma-separated list") from None
    try:
        results = experiments.run_sweep(cfg, args.axis, values)
    except ValueError as exc:
        raise ConfigError(f"bad sweep value: {exc}") from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for value, table in results:
        experiments.emit_outputs(table, out / f"{args.axis}-{value}")
    experiments.write_sweep_csv(results, args.axis, out / "sweep.csv")
    print(f"wrote {out / 'sweep.csv'}")
    return 0


def _cmd_movielens(args) -> int:
    cfg = _load_config(args)
    cfg = dataclasses.replace(cfg, scenario="movielens", ratings_path=args.ratings,
                              slot_days=args.slot_days, id_lo=args.id_lo,
                              id_hi=args.id_hi, runs=1,
                              n_files=args.id_hi - args.id_lo + 1)
    table = experiments.run_experiment(cfg)
    experiments.emit_outputs(table, args.out)
    print(f"wrote {Path(args.out) / 'metrics.csv'}")
    return 0


def _read_profile(path) -> PopularityProfile:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read profile: {exc}") from None
    tokens = text.replace(",", " ").split()
    if not tokens:
        raise DataError("profile file is empty")
    try:
        values = np.array([float(t) for t in tokens])
    except ValueError as exc:
        raise DataError(f"malformed profile: {exc}") from None
    if values.size < 2:
        raise DataError("profile needs at least two entries")
    if np.any(values < 0.0):
        raise DataError("profile entries must be nonnegative")
    total = values.sum()
    if abs(total - 1.0) > 1e-6:
        raise DataError(f"profile must sum to 1 (got {total:.9g})")
    return PopularityProfile.normalized(values)


def _cmd_placement(args) -> int:
    profile = _read_profile(args.profile)
    params = NetworkParams(lambda_bs=args.lambda_bs, alpha=args.alpha,
                           bandwidth=args.bandwidth, rate_threshold=args.rate_threshold,
                           cache_size=args.L)
    k = compute_constants(params)
    q = optimal_placement(profile, k)
    value = asp(profile, q, k)
    print("placement: " + " ".join(f"{x:.9g}" for x in q.q))
    print(f"asp: {value:.9g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgecache",
        description="Edge-caching placement and popularity-prediction simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML config file (flat keys)")
        p.add_argument("--seed", type=int, help="base seed override")
        p.add_argument("--runs", type=int, help="replication count override")
        p.add_argument("--out", default="edgecache-out", help="output directory")

    p_run = sub.add_parser("run", help="run one experiment")
    common(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="repeat an experiment along one axis")
    common(p_sweep)
    p_sweep.add_argument("--axis", required=True, choices=sorted(experiments.SWEEP_AXES),
                         help="tau (window), n (catalogue size) or s (skew)")
    p_sweep.add_argument("--values", required=True,
                         help="comma-separated axis values, e.g. 6,10,20")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_ml = sub.add_parser("movielens", help="replay a ratings trace")
    common(p_ml)
    p_ml.add_argument("--ratings", required=True, help="ratings file (tab or comma separated)")
    p_ml.add_argument("--slot-days", type=float, default=1.0, dest="slot_days",
                      help="slot duration in days")
    p_ml.add_argument("--id-lo", type=int, default=1, dest="id_lo")
    p_ml.add_argument("--id-hi", type=int, default=100, dest="id_hi")
    p_ml.set_defaults(func=_cmd_movielens)

    p_pl = sub.add_parser("placement", help="optimal placement for one profile")
    p_pl.add_argument("--profile", required=True,
                      help="CSV/whitespace file with one popularity value per file")
    p_pl.add_argument("--L", type=int, required=True, dest="L", help="cache size")
    p_pl.add_argument("--lambda-bs", type=float, default=200.0, dest="lambda_bs")
    p_pl.add_argument("--alpha", type=float, default=3.5)
    p_pl.add_argument("--bandwidth", type=float, default=24_000.0)
    p_pl.add_argument("--rate-threshold", type=float, default=1.0, dest="rate_threshold")
    p_pl.set_defaults(func=_cmd_placement)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
