"""Shared value types and small numeric helpers.

Everything downstream (placement, predictors, the experiment harness) passes
popularity around as one of the types defined here, so the simplex and
unit-norm invariants are checked in exactly one place.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

#: Tolerance for "sums to one" / "unit norm" checks on constructed profiles.
SIMPLEX_TOL = 1e-9

#: Entries more negative than this are rejected; tiny negatives from floating
#: point arithmetic are clamped to zero.
NEG_CLAMP = 1e-12


class ConfigError(ValueError):
    """Invalid configuration (unknown key, out-of-range parameter)."""


class DataError(ValueError):
    """Invalid or unusable input data (bad row, empty dataset, empty slot)."""


class NumericalError(ArithmeticError):
    """A numeric routine failed (divergent integral, stalled solver, ...)."""


def _as_float_vector(values: Union[np.ndarray, Sequence[float]]) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError("empty vector")
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite entries in vector")
    return arr


@dataclass(frozen=True)
class PopularityProfile:
    """Probability vector over the file catalogue.

    Entries are clamped at tiny negative values and renormalized when the sum
    is within ``SIMPLEX_TOL`` of one; anything further off is rejected.
    """

    values: np.ndarray

    def __post_init__(self):
        arr = _as_float_vector(self.values)
        if arr.min() < -NEG_CLAMP:
            raise ValueError(f"negative popularity entry {arr.min():.3e}")
        arr = np.maximum(arr, 0.0)
        total = arr.sum()
        if abs(total - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"profile sums to {total!r}, not 1")
        arr = arr / total
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @classmethod
    def normalized(cls, values: Union[np.ndarray, Sequence[float]]) -> "PopularityProfile":
        """Clamp negatives to zero and divide by the sum (must be positive)."""
        arr = np.maximum(_as_float_vector(values), 0.0)
        total = arr.sum()
        if total <= 0.0:
            raise ValueError("cannot normalize a nonpositive vector")
        return cls(arr / total)

    @classmethod
    def uniform(cls, n: int) -> "PopularityProfile":
        return cls(np.full(n, 1.0 / n))

    @property
    def n(self) -> int:
        return self.values.size

    def sqrt(self) -> "SqrtProfile":
        return SqrtProfile(np.sqrt(self.values))

    def __array__(self, dtype=None):
        return np.asarray(self.values, dtype=dtype)


@dataclass(frozen=True)
class SqrtProfile:
    """Elementwise square root of a popularity profile (unit Euclidean norm)."""

    values: np.ndarray

    def __post_init__(self):
        arr = _as_float_vector(self.values)
        if arr.min() < -NEG_CLAMP:
            raise ValueError(f"negative entry {arr.min():.3e}")
        arr = np.maximum(arr, 0.0)
        norm = float(np.linalg.norm(arr))
        if abs(norm - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"norm is {norm!r}, not 1")
        arr = arr / norm
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def n(self) -> int:
        return self.values.size

    def square(self) -> PopularityProfile:
        return PopularityProfile.normalized(self.values ** 2)

    def __array__(self, dtype=None):
        return np.asarray(self.values, dtype=dtype)


@dataclass(frozen=True)
class RequestMatrix:
    """Per-file, per-slot request counts plus the slot duration in seconds."""

    counts: np.ndarray
    slot_duration: float

    def __post_init__(self):
        arr = np.asarray(self.counts)
        if arr.ndim != 2:
            raise ValueError(f"counts must be 2-D (files x slots), got {arr.shape}")
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValueError("counts must be integers")
        if arr.min() < 0:
            raise ValueError("negative request count")
        if self.slot_duration <= 0:
            raise ValueError("slot duration must be positive")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "counts", arr)

    @property
    def n_files(self) -> int:
        return self.counts.shape[0]

    @property
    def n_slots(self) -> int:
        return self.counts.shape[1]

    @property
    def empty_slots(self) -> np.ndarray:
        """Indices of slots that received no requests at all."""
        return np.flatnonzero(self.counts.sum(axis=0) == 0)

    def profiles(self) -> list[PopularityProfile]:
        """Column-normalized popularity profiles; rejects empty slots."""
        if self.empty_slots.size:
            raise DataError(f"empty slot at index {int(self.empty_slots[0])}")
        cols = self.counts / self.counts.sum(axis=0, keepdims=True)
        return [PopularityProfile(cols[:, t]) for t in range(self.n_slots)]


@dataclass(frozen=True)
class NetworkParams:
    """Downlink network geometry and radio parameters.

    lambda_bs   base-station density (per km^2)
    alpha       path-loss exponent, must exceed 2
    bandwidth   system bandwidth W in Hz
    rate_threshold  target rate R0 (bits/s/Hz scale matches bandwidth)
    tx_power    transmit power in watts
    noise       noise power sigma^2 in watts (0 = interference-limited)
    cache_size  per-station cache capacity L in files
    """

    lambda_bs: float = 200.0
    alpha: float = 3.5
    bandwidth: float = 24000.0
    rate_threshold: float = 1.0
    tx_power: float = 1.0
    noise: float = 0.0
    cache_size: int = 2

    def __post_init__(self):
        if self.lambda_bs <= 0:
            raise ConfigError("lambda_bs must be positive")
        if self.alpha <= 2:
            raise ConfigError("path-loss exponent alpha must exceed 2")
        if self.bandwidth <= 0 or self.rate_threshold <= 0:
            raise ConfigError("bandwidth and rate_threshold must be positive")
        if self.tx_power <= 0:
            raise ConfigError("tx_power must be positive")
        if self.noise < 0:
            raise ConfigError("noise must be nonnegative")
        if self.cache_size < 1:
            raise ConfigError("cache_size must be at least 1")

    @property
    def sinr_threshold(self) -> float:
        """SINR threshold implied by the rate target: 2**(R0/W) - 1."""
        return 2.0 ** (self.rate_threshold / self.bandwidth) - 1.0


@dataclass(frozen=True)
class ZipfSpec:
    """Finite Zipf popularity law over ``n_files`` files with exponent ``s``."""

    n_files: int
    exponent: float = 1.5

    def __post_init__(self):
        if self.n_files < 1:
            raise ConfigError("n_files must be at least 1")
        if self.exponent < 0:
            raise ConfigError("Zipf exponent must be nonnegative")

    def pmf(self) -> np.ndarray:
        ranks = np.arange(1, self.n_files + 1, dtype=float)
        w = ranks ** (-self.exponent)
        return w / w.sum()

    def profile(self) -> PopularityProfile:
        return PopularityProfile(self.pmf())


def mse(p: Union[PopularityProfile, np.ndarray], q: Union[PopularityProfile, np.ndarray]) -> float:
    """Squared Euclidean distance between two profiles (no 1/N factor)."""
    a = np.asarray(p, dtype=float)
    b = np.asarray(q, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    d = a - b
    return float(d @ d)


def as_generator(seed: Union[int, np.random.Generator, None]) -> np.random.Generator:
    """Coerce an integer seed (or None, or an existing Generator) to a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def spawn_generators(seed: int, n: int) -> list[np.random.Generator]:
    """Derive ``n`` independent replication generators from one base seed.

    Uses ``SeedSequence(seed).spawn(n)``, so replication i's stream depends
    only on (seed, i) and is stable across worker counts.
    """
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]
