"""Monte-Carlo experiment harness.

A run draws independent replications of a scenario stream, feeds every
enabled model slot by slot, and scores three per-slot metrics:

    mse                  squared distance between predicted and true profile
    asp_diff             ASP(true profile, its optimal placement) minus
                         ASP(predicted profile, placement from the prediction)
    asp_diff_true_eval   same first term minus ASP(true profile, placement
                         from the prediction); nonnegative by optimality

Replication seeds derive from one base seed, replications may run on a
worker pool, and results are reduced in replication order, so a (config,
seed) pair always produces byte-identical metrics.csv output.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import kwik, learners, predictors, workloads
from .core import (ConfigError, DataError, NetworkParams, PopularityProfile,
                   ZipfSpec, mse)
from .placement import AspConstants, asp, compute_constants, optimal_placement

log = logging.getLogger(__name__)

METRICS = ("mse", "asp_diff", "asp_diff_true_eval")

OP_MODELS = ("op-ppm", "op-gpm", "op-rpm", "op-ipm", "op-asp")
OL_MODELS = ("ol-ppm", "ol-gpm", "ol-rpm", "ol-ipm", "ol-asp")
KWIK_MODELS = ("kwik-ppm", "kwik-gpm", "kwik-rpm", "kwik-ipm")
ALL_MODELS = OP_MODELS + OL_MODELS + KWIK_MODELS

SCENARIOS = ("time-varying", "quasi", "movielens")

_SCENARIO_DEFAULTS = {
    "time-varying": OP_MODELS + ("ol-ppm", "ol-gpm", "ol-rpm", "ol-ipm"),
    "quasi": ("ol-ppm", "ol-gpm", "ol-rpm", "ol-ipm", "kwik-ppm"),
    "movielens": OP_MODELS + ("ol-ppm", "ol-gpm", "ol-rpm", "ol-ipm", "kwik-ppm"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat experiment configuration; every field has a usable default.

    The network constants and the N=3, L=2, d=4, tau=10, s=1.5 model
    defaults follow the reference simulation setup.
    """

    scenario: str = "time-varying"
    models: tuple = ()
    n_files: int = 3
    cache_size: int = 2
    order: int = 4
    window: int = 10
    slots: int = 50
    runs: int = 100
    seed: int = 0
    zipf_s: float = 1.5
    tv_mode: str = "sampled"
    jitter: float = 0.0
    events_per_slot: int = 2000
    batch_mean: float = 2.0
    block_len: int = 200
    count_scale: float = 10_000.0
    lambda_bs: float = 200.0
    alpha: float = 3.5
    bandwidth: float = 24_000.0
    rate_threshold: float = 1.0
    tx_power: float = 1.0
    noise: float = 0.0
    kwik_alpha1: float = 0.5
    kwik_alpha2: float = 0.5
    kwik_history_cap: int = 512
    ratings_path: str = ""
    slot_days: float = 1.0
    id_lo: int = 1
    id_hi: int = 100
    workers: int = 1

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r} (choose from {SCENARIOS})")
        if self.tv_mode not in ("sampled", "permuted"):
            raise ConfigError(f"unknown tv_mode {self.tv_mode!r}")
        for m in self.models:
            if m not in ALL_MODELS:
                raise ConfigError(f"unknown model {m!r} (choose from {ALL_MODELS})")
        if self.n_files < 2:
            raise ConfigError("n_files must be at least 2")
        if not (1 <= self.cache_size <= self.n_files):
            raise ConfigError("cache_size must lie in [1, n_files]")
        if self.slots < self.window + 2:
            raise ConfigError("slots must leave at least one slot after the warm-up window")
        if self.runs < 1:
            raise ConfigError("runs must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be positive")
        if self.count_scale <= 0:
            raise ConfigError("count_scale must be positive")
        if self.scenario == "movielens" and not self.ratings_path:
            raise ConfigError("movielens scenario needs ratings_path")
        # delegate range checks to the component configs
        self.op_config()
        self.network_params()
        self.kwik_config()
        ZipfSpec(self.n_files, self.zipf_s)

    def op_config(self) -> predictors.OpConfig:
        return predictors.OpConfig(order=self.order, window=self.window)

    def network_params(self) -> NetworkParams:
        return NetworkParams(lambda_bs=self.lambda_bs, alpha=self.alpha,
                             bandwidth=self.bandwidth, rate_threshold=self.rate_threshold,
                             tx_power=self.tx_power, noise=self.noise,
                             cache_size=self.cache_size)

    def kwik_config(self) -> kwik.KwikConfig:
        return kwik.KwikConfig(order=self.order, alpha1=self.kwik_alpha1,
                               alpha2=self.kwik_alpha2, history_cap=self.kwik_history_cap)

    def active_models(self) -> tuple:
        return self.models if self.models else _SCENARIO_DEFAULTS[self.scenario]

    @classmethod
    def from_toml(cls, path) -> "ExperimentConfig":
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "models" in raw:
            if not isinstance(raw["models"], list):
                raise ConfigError("models must be a list of model names")
            raw["models"] = tuple(raw["models"])
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def _build_stream(cfg: ExperimentConfig, rng: np.random.Generator):
    """Scenario stream as (profiles, counts). Profile-only sources get
    pseudo-counts so the count-based models stay runnable."""
    zipf = ZipfSpec(cfg.n_files, cfg.zipf_s)
    if cfg.scenario == "time-varying":
        if cfg.tv_mode == "sampled":
            return workloads.generate_sampled_stream(
                zipf, cfg.slots, cfg.events_per_slot, cfg.batch_mean, rng)
        profiles = workloads.generate_iid_stream(zipf, cfg.slots, rng, cfg.jitter)
    elif cfg.scenario == "quasi":
        profiles = workloads.generate_quasi_stream(
            zipf, cfg.slots, cfg.block_len, cfg.order, rng, cfg.jitter)
    else:
        profiles = workloads.load_movielens(
            cfg.ratings_path, cfg.slot_days * 86_400.0, cfg.id_lo, cfg.id_hi)
        if len(profiles) < cfg.window + 2:
            raise DataError(f"ratings produce only {len(profiles)} usable slots; "
                            f"need at least {cfg.window + 2}")
    return profiles, workloads.synth_counts(profiles, cfg.count_scale)


class _OpRunner:
    """Stateless sliding-window predictor; reads the stream directly."""

    def __init__(self, model: str, cfg: ExperimentConfig, k: AspConstants,
                 profiles, counts):
        self.model = model
        self.opcfg = cfg.op_config()
        self.k = k
        self.profiles = profiles
        self.counts = counts
        self._asp_cache: dict = {}

    def predict(self, t: int) -> PopularityProfile:
        w = self.opcfg.window
        sl = slice(t - 1 - w, t - 1)
        window = predictors.HistoryWindow(tuple(self.profiles[sl]),
                                          self.counts[:, sl], t - 1)
        if self.model == "op-ppm":
            return predictors.ppm_predict(window, self.opcfg)
        if self.model == "op-gpm":
            return predictors.gpm_predict(window, self.opcfg)
        if self.model == "op-rpm":
            return predictors.rpm_predict(window, self.opcfg)[1]
        if self.model == "op-ipm":
            return predictors.ipm_predict(window, self.opcfg)
        return self._asp_predict(window, t)

    def _asp_predict(self, window, t: int) -> PopularityProfile:
        # the per-slot ASP series is cached so the sliding window does not
        # recompute the same placements tau times
        series = []
        for off, p in enumerate(window.profiles):
            slot = t - 1 - window.tau + off
            if slot not in self._asp_cache:
                self._asp_cache[slot] = asp(p, optimal_placement(p, self.k), self.k)
            series.append(self._asp_cache[slot])
        return predictors.asppm_predict(window, self.opcfg, self.k, series)

    def observe(self, t: int, profile: PopularityProfile, counts: np.ndarray):
        pass


class _OlRunner:
    """Wraps one online learner; predictions precede observations."""

    def __init__(self, model: str, n_files: int):
        self.model = model
        cls = {"ol-ppm": learners.PpmOnline, "ol-asp": learners.AspOnline,
               "ol-gpm": learners.GpmOnline, "ol-rpm": learners.RpmOnline,
               "ol-ipm": learners.IpmOnline}[model]
        self.learner = cls(n_files)
        self.n = n_files

    def predict(self, t: int) -> PopularityProfile:
        out = self.learner.predict()
        return out if out is not None else PopularityProfile.uniform(self.n)

    def observe(self, t: int, profile: PopularityProfile, counts: np.ndarray):
        if self.model == "ol-rpm":
            self.learner.step(counts)
        else:
            self.learner.step(profile)


class _KwikRunner:
    """Selective per-file predictor with a running-mean fallback.

    The per-file observable depends on the variant (profile value, its
    square root, log count, negative log popularity); a slot prediction is
    assembled only when every file predicts, otherwise the slot falls back
    to the profile running mean.
    """

    def __init__(self, model: str, cfg: ExperimentConfig, n_files: int):
        self.model = model
        self.learner = kwik.KwikLearner(n_files, cfg.kwik_config())
        self.fallback = learners.PpmOnline(n_files)
        self.n = n_files
        self._next: Optional[PopularityProfile] = None

    def _observable(self, profile: PopularityProfile, counts: np.ndarray) -> np.ndarray:
        if self.model == "kwik-ppm":
            return profile.values.copy()
        if self.model == "kwik-gpm":
            return np.sqrt(profile.values)
        if self.model == "kwik-rpm":
            return np.log(np.maximum(counts.astype(float), 1.0))
        q = np.maximum(profile.values, predictors.INV_FLOOR)
        return -np.log(q / q.sum())

    def _readout(self, values: np.ndarray) -> Optional[PopularityProfile]:
        if self.model == "kwik-ppm":
            raw = np.clip(values, 0.0, None)
        elif self.model == "kwik-gpm":
            raw = np.clip(values, 0.0, None) ** 2
        elif self.model == "kwik-rpm":
            raw = np.floor(np.exp(np.clip(values, -predictors.EXP_CLAMP, predictors.EXP_CLAMP)))
        else:
            raw = np.exp(-np.clip(values, -predictors.EXP_CLAMP, predictors.EXP_CLAMP))
        if raw.sum() <= 0.0:
            return None
        return PopularityProfile.normalized(raw)

    def predict(self, t: int) -> PopularityProfile:
        return self._next if self._next is not None else self.fallback.predict()

    def observe(self, t: int, profile: PopularityProfile, counts: np.ndarray):
        preds, mask = self.learner.step(self._observable(profile, counts))
        self._next = self._readout(preds) if mask.all() else None
        self.fallback.step(profile)


def _make_runner(model: str, cfg: ExperimentConfig, k: AspConstants, profiles, counts):
    if model.startswith("op-"):
        return _OpRunner(model, cfg, k, profiles, counts)
    if model.startswith("ol-"):
        return _OlRunner(model, cfg.n_files)
    return _KwikRunner(model, cfg, cfg.n_files)


def _run_replication(cfg: ExperimentConfig, k: AspConstants, seed_seq) -> dict:
    rng = np.random.default_rng(seed_seq)
    profiles, counts = _build_stream(cfg, rng)
    models = cfg.active_models()
    runners = {m: _make_runner(m, cfg, k, profiles, counts) for m in models}
    T = len(profiles)
    start = cfg.window + 1
    out = {m: np.zeros((T - start + 1, len(METRICS))) for m in models}
    for t in range(1, T + 1):
        p_true = profiles[t - 1]
        if t >= start:
            q_star = optimal_placement(p_true, k)
            v_star = asp(p_true, q_star, k)
            for m in models:
                p_hat = runners[m].predict(t)
                q_hat = optimal_placement(p_hat, k)
                row = out[m][t - start]
                row[0] = mse(p_hat, p_true)
                row[1] = v_star - asp(p_hat, q_hat, k)
                row[2] = v_star - asp(p_true, q_hat, k)
        for m in models:
            runners[m].observe(t, p_true, counts[:, t - 1])
    return out


def _worker(args):
    cfg, k, ss = args
    return _run_replication(cfg, k, ss)


@dataclass(frozen=True)
class MetricsTable:
    """Replication means and standard errors per (model, slot, metric)."""

    scenario: str
    models: tuple
    slots: np.ndarray
    mean: dict
    stderr: dict
    runs: int

    def summary(self) -> dict:
        """Per-model slot-averaged means and pooled standard errors."""
        out = {}
        for m in self.models:
            out[m] = {
                metric: (float(self.mean[m][:, j].mean()),
                         float(np.sqrt((self.stderr[m][:, j] ** 2).mean() / self.slots.size)))
                for j, metric in enumerate(METRICS)
            }
        return out


def run_experiment(cfg: ExperimentConfig) -> MetricsTable:
    """Run every replication and reduce in replication order."""
    runs = cfg.runs
    if cfg.scenario == "movielens" and runs != 1:
        log.info("movielens trace is deterministic; forcing runs=1 (was %d)", runs)
        runs = 1
    k = compute_constants(cfg.network_params())
    seeds = np.random.SeedSequence(cfg.seed).spawn(runs)
    jobs = [(cfg, k, s) for s in seeds]
    if cfg.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            reps = list(pool.map(_worker, jobs))
    else:
        reps = [_worker(j) for j in jobs]

    models = cfg.active_models()
    stacked = {m: np.stack([r[m] for r in reps], axis=0) for m in models}
    n_slots = stacked[models[0]].shape[1]
    slots = np.arange(cfg.window + 1, cfg.window + 1 + n_slots)
    mean = {m: stacked[m].mean(axis=0) for m in models}
    if runs > 1:
        stderr = {m: stacked[m].std(axis=0, ddof=1) / np.sqrt(runs) for m in models}
    else:
        stderr = {m: np.zeros_like(mean[m]) for m in models}
    return MetricsTable(cfg.scenario, models, slots, mean, stderr, runs)


def write_metrics_csv(table: MetricsTable, path) -> None:
    """Long-format CSV, nine significant digits, fixed row order."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("scenario,model,slot,metric,value,stderr\n")
        for m in table.models:
            for i, slot in enumerate(table.slots):
                for j, metric in enumerate(METRICS):
                    fh.write(f"{table.scenario},{m},{slot},{metric},"
                             f"{table.mean[m][i, j]:.9g},{table.stderr[m][i, j]:.9g}\n")


def write_summary(table: MetricsTable, path) -> None:
    rows = table.summary()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"scenario: {table.scenario}   replications: {table.runs}   "
                 f"slots: {table.slots[0]}..{table.slots[-1]}\n\n")
        fh.write(f"{'model':<12}" + "".join(f"{m:>28}" for m in METRICS) + "\n")
        for m in table.models:
            cells = "".join(f"{rows[m][metric][0]:>17.6g} +/- {rows[m][metric][1]:<8.2g}"
                            for metric in METRICS)
            fh.write(f"{m:<12}{cells}\n")


def write_plots(table: MetricsTable, out_dir) -> list:
    """One SVG line chart per metric (slot on the x-axis)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    for j, metric in enumerate(METRICS):
        fig, ax = plt.subplots(figsize=(7, 4))
        for m in table.models:
            ax.plot(table.slots, table.mean[m][:, j], label=m)
        ax.set_xlabel("slot")
        ax.set_ylabel(metric)
        ax.set_title(f"{table.scenario}: {metric}")
        ax.legend(fontsize="small")
        fig.tight_layout()
        path = Path(out_dir) / f"{metric}.svg"
        fig.savefig(path)
        plt.close(fig)
        paths.append(path)
    return paths


def emit_outputs(table: MetricsTable, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_csv(table, out / "metrics.csv")
    write_summary(table, out / "summary.txt")
    write_plots(table, out)


SWEEP_AXES = {"tau": "window", "n": "n_files", "s": "zipf_s"}


def run_sweep(cfg: ExperimentConfig, axis: str, values) -> list:
    """Re-run the experiment for each axis value with the shared base seed.

    Returns [(value, MetricsTable)] in the given order.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r} (choose from {sorted(SWEEP_AXES)})")
    if not values:
        raise ConfigError("sweep needs at least one value")
    field = SWEEP_AXES[axis]
    out = []
    for v in values:
        coerced = int(v) if field in ("window", "n_files") else float(v)
        sub = dataclasses.replace(cfg, **{field: coerced})
        log.info("sweep %s = %s", axis, coerced)
        out.append((coerced, run_experiment(sub)))
    return out


def write_sweep_csv(results, axis: str, path) -> None:
    """Long-format sweep summary keyed by (axis value, model, metric)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("axis,value,model,metric,mean,stderr\n")
        for value, table in results:
            rows = table.summary()
            for m in table.models:
                for metric in METRICS:
                    mu, se = rows[m][metric]
                    fh.write(f"{axis},{value},{m},{metric},{mu:.9g},{se:.9g}\n")
