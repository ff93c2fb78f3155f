"""Online (per-slot recursive) popularity learners and regret accounting.

Each learner keeps O(N) state and folds in one observed slot per step.
The profile learner's recursion collapses to the running mean; the
sqrt-domain learner tracks an unnormalized direction vector whose norm
carries the history weight; the count and inverse learners are the same
running-mean idea in their own domains. The ASP-driven variant shares the
profile learner's code path (the recursions coincide), so it is exposed as
an alias rather than a class of its own.
"""

from __future__ import annotations

import numpy as np

from .core import NumericalError, PopularityProfile

#: Exponent clamp for the log-domain readouts.
_EXP_CLAMP = 45.0


class PpmOnline:
    """Recursive profile estimate p_{t+1} = (1/t) p_t + (1 - 1/t) p_t-hat.

    Unrolled this is exactly the running mean of the observed profiles.
    Starts uniform.
    """

    def __init__(self, n_files: int):
        self.n = n_files
        self.t = 0
        self.estimate = np.full(n_files, 1.0 / n_files)

    def predict(self) -> PopularityProfile:
        return PopularityProfile(self.estimate.copy())

    def step(self, p: PopularityProfile) -> PopularityProfile:
        self.t += 1
        w = 1.0 / self.t
        self.estimate = w * p.values + (1.0 - w) * self.estimate
        return self.predict()


#: The ASP-driven online learner reduces to the profile recursion; one code
#: path serves both labels.
AspOnline = PpmOnline


class GpmOnline:
    """Sqrt-domain direction tracker.

    Keeps a unit vector sbar and a weight kappa; each step forms
    raw = (1 - 1/t) sqrt(p_t) + kappa * sbar, stores kappa = ||raw|| before
    normalizing. The profile readout squares sbar and renormalizes.
    """

    def __init__(self, n_files: int):
        self.n = n_files
        self.t = 0
        self.sbar = np.full(n_files, 1.0 / np.sqrt(n_files))
        self.kappa = 1.0

    def predict(self) -> PopularityProfile:
        return PopularityProfile.normalized(self.sbar ** 2)

    def predict_sqrt(self) -> np.ndarray:
        return self.sbar.copy()

    def step(self, p: PopularityProfile) -> PopularityProfile:
        self.t += 1
        z = 1.0 - 1.0 / self.t
        raw = z * np.sqrt(p.values) + self.kappa * self.sbar
        norm = float(np.linalg.norm(raw))
        if norm <= 0.0:
            raise NumericalError("degenerate state: zero-norm sqrt-domain update")
        self.kappa = norm
        self.sbar = raw / norm
        return self.predict()


class RpmOnline:
    """Geometric count blend nhat_{t+1} = nhat_t^(1/t) * n_t^(1 - 1/t).

    State lives in the log domain and is never floored; the floor happens
    only in the count readout. The first observation seeds the state, so
    the t = 1 prediction equals the first observed counts.
    """

    def __init__(self, n_files: int):
        self.n = n_files
        self.t = 0
        self.log_est = None

    def predict_counts(self):
        if self.log_est is None:
            return None
        clipped = np.clip(self.log_est, -_EXP_CLAMP, _EXP_CLAMP)
        return np.minimum(np.floor(np.exp(clipped)), 2.0 ** 62).astype(np.int64)

    def predict(self):
        counts = self.predict_counts()
        if counts is None:
            return None
        if counts.sum() == 0:
            return PopularityProfile.uniform(self.n)
        return PopularityProfile.normalized(counts.astype(float))

    def step(self, counts: np.ndarray):
        self.t += 1
        obs = np.log(np.maximum(np.asarray(counts, dtype=float), 1.0))
        if self.log_est is None:
            self.log_est = obs
        else:
            c = 1.0 / self.t
            self.log_est = c * self.log_est + (1.0 - c) * obs
        return self.predict()


class IpmOnline:
    """Running mean in the negative-log-popularity domain.

    Observations are floored at 1e-6 and renormalized before the log; the
    readout exponentiates back and renormalizes. Starts at the uniform
    profile's image (the zero vector shifted by log N, i.e. uniform).
    """

    FLOOR = 1e-6

    def __init__(self, n_files: int):
        self.n = n_files
        self.t = 0
        self.estimate = -np.log(np.full(n_files, 1.0 / n_files))

    @classmethod
    def to_domain(cls, p: PopularityProfile) -> np.ndarray:
        q = np.maximum(p.values, cls.FLOOR)
        return -np.log(q / q.sum())

    def predict(self) -> PopularityProfile:
        clipped = np.clip(self.estimate, -_EXP_CLAMP, _EXP_CLAMP)
        return PopularityProfile.normalized(np.exp(-clipped))

    def step(self, p: PopularityProfile) -> PopularityProfile:
        self.t += 1
        w = 1.0 / self.t
        self.estimate = w * self.to_domain(p) + (1.0 - w) * self.estimate
        return self.predict()


def measure_regret(predictions: np.ndarray, observations: np.ndarray,
                   weights: np.ndarray, normalize_comparator: bool = False) -> float:
    """Weighted cumulative loss of the learner minus the best fixed point.

    Loss per slot is half the squared Euclidean distance in whatever
    domain the trace was recorded in. The comparator is the weighted mean
    of the observations; with ``normalize_comparator`` it is projected to
    the unit sphere first (the sqrt-domain learner competes against unit
    vectors).
    """
    P = np.asarray(predictions, dtype=float)
    O = np.asarray(observations, dtype=float)
    w = np.asarray(weights, dtype=float)
    if P.shape != O.shape or w.shape[0] != P.shape[0]:
        raise ValueError("trace shapes disagree")
    learner = 0.5 * float(np.sum(w * np.sum((P - O) ** 2, axis=1)))
    if normalize_comparator:
        mu = (w[:, None] * O).sum(axis=0)
        nrm = np.linalg.norm(mu)
        if nrm <= 0.0:
            raise NumericalError("degenerate state: zero-norm comparator")
        comp = mu / nrm
    else:
        comp = (w[:, None] * O).sum(axis=0) / w.sum()
    best = 0.5 * float(np.sum(w * np.sum((O - comp[None, :]) ** 2, axis=1)))
    return learner - best


def inverse_weights(T: int) -> np.ndarray:
    """The 1/t weight sequence used by the mean-style learners."""
    return 1.0 / np.arange(1, T + 1, dtype=float)


def complement_weights(T: int) -> np.ndarray:
    """The (1 - 1/t) weight sequence used by the sqrt-domain learner."""
    return 1.0 - 1.0 / np.arange(1, T + 1, dtype=float)


def regret_bound_ppm(T: int) -> float:
    return 2.0 * (2.0 - 1.0 / T)


def regret_bound_gpm(T: int) -> float:
    return T - np.log(T) - 1.0


def regret_bound_rpm(T: int, n_files: int, n_max: float) -> float:
    return 2.0 * n_files * np.log(n_max) * (2.0 - 1.0 / T)


def regret_bound_ipm(T: int, n_files: int, zipf_s: float) -> float:
    return 2.0 * n_files * (zipf_s * np.log(n_files)) ** 2 * (2.0 - 1.0 / T)
