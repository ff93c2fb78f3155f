"""Workload generation and ingestion.

Synthetic request traffic follows a compound Poisson recipe: exponential
inter-arrival times, a Zipf-distributed file per arrival, and a Poisson
batch of requests at each arrival, bucketed into fixed-duration slots.
Profile streams for the prediction experiments come in three flavors:
per-slot resampling noise around the fixed Zipf order, per-slot random
permutations of the Zipf law, and block-stationary convex autoregressions.
A MovieLens-style ratings file can be ingested into the same profile
stream shape.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .core import (ConfigError, DataError, PopularityProfile, RequestMatrix,
                   ZipfSpec, as_generator)

log = logging.getLogger(__name__)

Seed = Union[int, np.random.Generator, None]


@dataclass(frozen=True)
class SynthConfig:
    """Compound-Poisson request generator parameters.

    n_events           arrival events to draw
    mean_interarrival  mean of the exponential inter-arrival gap (seconds)
    batch_mean         mean Poisson batch size per arrival
    slot_duration      bucket width in seconds
    """

    zipf: ZipfSpec
    n_events: int = 200_000
    mean_interarrival: float = 0.01
    batch_mean: float = 100.0
    slot_duration: float = 900.0

    def __post_init__(self):
        if self.n_events < 1:
            raise ConfigError("n_events must be positive")
        if self.mean_interarrival <= 0 or self.slot_duration <= 0:
            raise ConfigError("time scales must be positive")
        if self.batch_mean <= 0:
            raise ConfigError("batch_mean must be positive")


def _zipf_sampler(zipf: ZipfSpec):
    cdf = np.cumsum(zipf.pmf())
    cdf[-1] = 1.0

    def draw(rng: np.random.Generator, size: int) -> np.ndarray:
        return np.searchsorted(cdf, rng.random(size), side="right")

    return draw


def generate_requests(cfg: SynthConfig, seed: Seed = None) -> RequestMatrix:
    """Draw the full arrival process and bucket every request by slot.

    Each arrival lands in slot ceil(t/T); arrivals with a zero-size batch
    contribute nothing but are not redrawn.
    """
    rng = as_generator(seed)
    times = np.cumsum(rng.exponential(cfg.mean_interarrival, size=cfg.n_events))
    files = _zipf_sampler(cfg.zipf)(rng, cfg.n_events)
    batches = rng.poisson(cfg.batch_mean, size=cfg.n_events)
    slots = np.maximum(np.ceil(times / cfg.slot_duration).astype(np.int64), 1) - 1
    n_slots = int(slots.max()) + 1
    counts = np.zeros((cfg.zipf.n_files, n_slots), dtype=np.int64)
    np.add.at(counts, (files, slots), batches)
    return RequestMatrix(counts, cfg.slot_duration)


def generate_sampled_stream(zipf: ZipfSpec, n_slots: int, events_per_slot: int = 2000,
                            batch_mean: float = 2.0, seed: Seed = None):
    """Independent per-slot resampling noise around the fixed Zipf order.

    Every slot draws its own batch of compound-Poisson requests from the
    same Zipf law, so the slot profiles are independent, centered on the
    Zipf pmf, with noise that shrinks as the per-slot volume grows.

    Returns (profiles, counts) with counts shaped (n_files, n_slots).
    """
    if n_slots < 1:
        raise ConfigError("n_slots must be positive")
    rng = as_generator(seed)
    draw_files = _zipf_sampler(zipf)
    counts = np.zeros((zipf.n_files, n_slots), dtype=np.int64)
    for t in range(n_slots):
        for _ in range(100):
            files = draw_files(rng, events_per_slot)
            batches = rng.poisson(batch_mean, size=events_per_slot)
            col = np.bincount(files, weights=batches, minlength=zipf.n_files)
            if col.sum() > 0:
                break
        else:
            raise DataError(f"empty slot at index {t} after resampling")
        counts[:, t] = col.astype(np.int64)
    profiles = [PopularityProfile.normalized(counts[:, t].astype(float)) for t in range(n_slots)]
    return profiles, counts


def generate_iid_stream(zipf: ZipfSpec, n_slots: int, seed: Seed = None,
                        jitter: float = 0.0) -> list:
    """Per-slot independent random permutation of the Zipf pmf.

    With ``jitter`` > 0 each slot additionally draws from a Dirichlet
    centered on the permuted pmf with that concentration (jitter 0 returns
    the exact permuted pmf). Slot means converge to uniform.
    """
    if n_slots < 1:
        raise ConfigError("n_slots must be positive")
    if jitter < 0:
        raise ConfigError("jitter must be nonnegative")
    rng = as_generator(seed)
    pmf = zipf.pmf()
    out = []
    for _ in range(n_slots):
        p = rng.permutation(pmf)
        if jitter > 0:
            p = rng.dirichlet(jitter * p)
        out.append(PopularityProfile.normalized(p))
    return out


def generate_quasi_stream(zipf: ZipfSpec, n_slots: int, block_len: int = 200,
                          order: int = 4, seed: Seed = None, jitter: float = 0.0) -> list:
    """Block-stationary stream: within each block the profile follows a
    fixed convex autoregression of depth ``order``.

    Each block independently draws ``order`` fresh seed profiles (random
    permutations of the Zipf pmf, optionally jittered) and a flat-Dirichlet
    weight vector c; the first ``order`` slots of the block emit the seeds
    and the rest follow p_t = sum_k c_k p_{t-k}. Convexity keeps every
    slot on the simplex, and distinct blocks get distinct dynamics.
    """
    if n_slots < 1:
        raise ConfigError("n_slots must be positive")
    if block_len < order + 1:
        raise ConfigError("block_len must exceed the autoregression depth")
    rng = as_generator(seed)
    out = []
    while len(out) < n_slots:
        seeds = generate_iid_stream(zipf, order, rng, jitter)
        c = rng.dirichlet(np.ones(order))
        block = [s.values for s in seeds]
        while len(block) < block_len:
            nxt = sum(c[k] * block[-1 - k] for k in range(order))
            block.append(nxt)
        out.extend(PopularityProfile.normalized(v) for v in block)
    return out[:n_slots]


def load_movielens(path, slot_duration: float, id_lo: int = 1, id_hi: int = 100) -> list:
    """Aggregate a (user, item, rating, timestamp) ratings file into
    per-slot popularity profiles.

    Separator is auto-detected per line (tab wins over comma). Items
    outside [id_lo, id_hi] are skipped. Slot index is floor((ts - min_ts)
    / slot_duration); a slot's profile normalizes the rating sums of its
    items. Slots with no ratings are dropped with a logged gap marker.
    """
    if slot_duration <= 0:
        raise ConfigError("slot_duration must be positive")
    if id_hi < id_lo:
        raise ConfigError("empty item id range")
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t") if "\t" in line else line.split(",")
            if len(parts) < 4:
                raise DataError(f"line {lineno}: expected 4 fields, got {len(parts)}")
            try:
                item = int(parts[1])
                rating = float(parts[2])
                ts = float(parts[3])
            except ValueError as exc:
                raise DataError(f"line {lineno}: {exc}") from None
            if id_lo <= item <= id_hi:
                rows.append((item, rating, ts))
    if not rows:
        raise DataError("empty dataset: no ratings in the requested id range")

    n = id_hi - id_lo + 1
    t0 = min(r[2] for r in rows)
    n_slots = int((max(r[2] for r in rows) - t0) // slot_duration) + 1
    sums = np.zeros((n, n_slots))
    for item, rating, ts in rows:
        sums[item - id_lo, int((ts - t0) // slot_duration)] += rating

    profiles = []
    for t in range(n_slots):
        total = sums[:, t].sum()
        if total <= 0:
            log.warning("dropping empty slot %d (gap in the ratings timeline)", t)
            continue
        profiles.append(PopularityProfile.normalized(sums[:, t]))
    if not profiles:
        raise DataError("empty dataset: every slot was empty")
    return profiles


def export_stream_csv(profiles: list, path) -> None:
    """Write a profile stream as CSV: header slot,file_1..file_N, nine
    decimal digits per probability."""
    if not profiles:
        raise DataError("empty dataset: nothing to export")
    n = profiles[0].n
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("slot," + ",".join(f"file_{i + 1}" for i in range(n)) + "\n")
        for t, p in enumerate(profiles, start=1):
            fh.write(str(t) + "," + ",".join(f"{v:.9f}" for v in p.values) + "\n")


def synth_counts(profiles: list, count_scale: float = 10_000.0) -> np.ndarray:
    """Pseudo-counts for count-based models on profile-only streams:
    round(count_scale * p), clamped at one request per file."""
    cols = [np.maximum(np.round(count_scale * p.values), 1.0) for p in profiles]
    return np.stack(cols, axis=1).astype(np.int64)
