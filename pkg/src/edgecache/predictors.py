"""Window-based one-step popularity predictors.

Five models share the same sliding-window regression idea: express the next
profile as a linear combination of the last d observations, with the
combination fitted on the most recent tau slots. They differ in the domain
the regression runs in (plain profiles, square roots, log counts, negative
log popularity, achievable success probability) and in the constraints on
the combination.

The stacked design puts lag k in column k-1, so a coefficient vector c
predicts sum_k c_k x_{t+1-k}. When the lag matrix P_t = [p_t ... p_{t+1-d}]
has full column rank the profile-domain models solve in x = P_t c space
(the pseudo-inverse maps the design there); otherwise, and always for the
scalar-target model, they solve for c directly with the constraints
sum(c) = 1 and P_t c >= 0 carried explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import nnls
from .core import ConfigError, DataError, NumericalError, PopularityProfile
from .placement import AspConstants, asp, optimal_placement

#: Popularity floor applied before taking logs in the inverse model.
INV_FLOOR = 1e-6

#: Exponent clamp guarding exp() overflow in the log-domain readouts.
EXP_CLAMP = 45.0


@dataclass(frozen=True)
class OpConfig:
    """Shared knobs for the window predictors.

    order       AR depth d (lags used per prediction)
    window      history length tau; needs tau >= order + 1 so the stacked
                regression has at least one row
    rank_tol    relative singular-value cutoff deciding when the lag matrix
                counts as full column rank
    """

    order: int = 4
    window: int = 10
    rank_tol: float = 1e-8

    def __post_init__(self):
        if self.order < 1:
            raise ConfigError("order must be at least 1")
        if self.window < self.order + 1:
            raise ConfigError("window must be at least order + 1")
        if not (0.0 < self.rank_tol < 1.0):
            raise ConfigError("rank_tol must lie in (0, 1)")


@dataclass(frozen=True)
class HistoryWindow:
    """The last tau profiles (oldest first), optionally with raw counts."""

    profiles: tuple
    counts: Optional[np.ndarray] = None
    t: int = 0

    def __post_init__(self):
        if not self.profiles:
            raise ValueError("empty history window")
        n = self.profiles[0].n
        if any(p.n != n for p in self.profiles):
            raise ValueError("profiles in a window must share the catalogue size")
        if self.counts is not None:
            c = np.asarray(self.counts)
            if c.shape != (n, len(self.profiles)):
                raise ValueError(f"counts shape {c.shape} does not match window "
                                 f"({n} files x {len(self.profiles)} slots)")
            object.__setattr__(self, "counts", c)

    @property
    def tau(self) -> int:
        return len(self.profiles)

    @property
    def n(self) -> int:
        return self.profiles[0].n


def _stack_vector_design(vals: list, d: int):
    """Stacked targets/design for vector series: y has one block per
    regression slot, the design block is [lag1 ... lagd] columns."""
    tau = len(vals)
    blocks = []
    targets = []
    for i in range(d, tau):
        blocks.append(np.stack([vals[i - k] for k in range(1, d + 1)], axis=1))
        targets.append(vals[i])
    return np.concatenate(targets), np.vstack(blocks)


def _lag_matrix(vals: list, d: int) -> np.ndarray:
    """P_t = [x_t, x_{t-1}, ..., x_{t-d+1}] as columns (lag k in column k-1)."""
    return np.stack([vals[-k] for k in range(1, d + 1)], axis=1)


def _full_column_rank(P: np.ndarray, rank_tol: float) -> bool:
    if P.shape[0] < P.shape[1]:
        return False
    sv = np.linalg.svd(P, compute_uv=False)
    return sv[-1] > rank_tol * sv[0]


def ppm_predict(window: HistoryWindow, cfg: OpConfig) -> PopularityProfile:
    """Profile-domain prediction with simplex-constrained combination.

    Full-rank lag matrices let the simplex NNLS solver work on
    x = P_t c directly; rank-deficient ones (always the case when d exceeds
    the catalogue size) fall back to the coefficient-space QP, which keeps
    sum(c) = 1 and P_t c >= 0 explicit.
    """
    d = cfg.order
    vals = [p.values for p in window.profiles]
    y, Hp = _stack_vector_design(vals, d)
    Pt = _lag_matrix(vals, d)
    if _full_column_rank(Pt, cfg.rank_tol):
        H = Hp @ np.linalg.pinv(Pt)
        x = nnls.solve_simplex_nnls(H, y).x
    else:
        c = nnls.solve_sum_one_nnls(Hp, y, Pt)
        x = Pt @ c
    return PopularityProfile.normalized(np.clip(x, 0.0, 1.0))


def gpm_predict(window: HistoryWindow, cfg: OpConfig) -> PopularityProfile:
    """Square-root-domain prediction inside the unit ball; the readout
    squares the fitted vector and renormalizes."""
    d = cfg.order
    vals = [np.sqrt(p.values) for p in window.profiles]
    y, Hp = _stack_vector_design(vals, d)
    Pt = _lag_matrix(vals, d)
    if _full_column_rank(Pt, cfg.rank_tol):
        H = Hp @ np.linalg.pinv(Pt)
        x = nnls.solve_ball_nnls(H, y).x
    else:
        c = nnls.solve_map_ball_nnls(Hp, y, Pt)
        x = Pt @ c
    x = np.clip(x, 0.0, None)
    if x.sum() <= 0.0:
        raise NumericalError("degenerate sqrt-domain solution (all zero)")
    return PopularityProfile.normalized(x * x)


def rpm_predict(window: HistoryWindow, cfg: OpConfig):
    """Per-file log-count autoregression on raw request counts.

    Counts are clamped at 1, scaled by the window maximum n_max (>= 2
    enforced), and each file gets its own unconstrained least-squares fit.
    The prediction is floor(n_max * exp(.)) per file; the profile readout
    normalizes the predicted counts, or goes uniform if they are all zero.

    Returns (predicted_counts, profile).
    """
    if window.counts is None:
        raise DataError("count model needs raw request counts in the window")
    d = cfg.order
    counts = np.maximum(np.asarray(window.counts, dtype=float), 1.0)
    n_max = max(2.0, float(counts.max()))
    nbar = np.log(counts / n_max)
    n, tau = nbar.shape
    pred_log = np.empty(n)
    for l in range(n):
        series = [nbar[l, i] for i in range(tau)]
        y = np.array(series[d:])
        H = np.array([[series[i - k] for k in range(1, d + 1)] for i in range(d, tau)])
        c = nnls.solve_ls(H, y)
        lags = np.array([series[tau - k] for k in range(1, d + 1)])
        pred_log[l] = float(c @ lags)
    pred_log = np.clip(pred_log, -EXP_CLAMP, EXP_CLAMP)
    # cap inside the int64 range; only relative magnitudes survive the
    # profile readout anyway
    pred_counts = np.minimum(np.floor(n_max * np.exp(pred_log)), 2.0 ** 62).astype(np.int64)
    if pred_counts.sum() == 0:
        return pred_counts, PopularityProfile.uniform(n)
    return pred_counts, PopularityProfile.normalized(pred_counts.astype(float))


def _inverse_domain(p: np.ndarray) -> np.ndarray:
    q = np.maximum(p, INV_FLOOR)
    return -np.log(q / q.sum())


def ipm_predict(window: HistoryWindow, cfg: OpConfig) -> PopularityProfile:
    """Shared-coefficient autoregression on negative log popularity.

    Plain least squares (no constraints); the readout exponentiates back
    and renormalizes.
    """
    d = cfg.order
    vals = [_inverse_domain(p.values) for p in window.profiles]
    y, Hp = _stack_vector_design(vals, d)
    c = nnls.solve_ls(Hp, y)
    pred = np.clip(_lag_matrix(vals, d) @ c, -EXP_CLAMP, EXP_CLAMP)
    return PopularityProfile.normalized(np.exp(-pred))


def asppm_predict(window: HistoryWindow, cfg: OpConfig, k: AspConstants,
                  series=None) -> PopularityProfile:
    """Autoregression on the achievable success-probability scalar.

    Each window slot contributes one scalar: the ASP of that slot's
    optimal placement. Coefficients are fitted on that series under
    sum(c) = 1 and P_t c >= 0, always in coefficient space (a scalar
    target cannot pin the sum constraint through any x-space relaxation),
    and the profile readout is P_t c renormalized. With d = 1 the
    constraint forces c = (1), so the prediction is the newest profile.

    Callers that already track the per-slot ASP values can pass them as
    `series` (one scalar per window slot) to skip the placement solves.
    """
    d = cfg.order
    if series is None:
        series = [asp(p, optimal_placement(p, k), k) for p in window.profiles]
    elif len(series) != window.tau:
        raise ValueError("series length must match the window")
    y = np.array(series[d:])
    H = np.array([[series[i - k_] for k_ in range(1, d + 1)] for i in range(d, window.tau)])
    Pt = _lag_matrix([p.values for p in window.profiles], d)
    c = nnls.solve_sum_one_nnls(H, y, Pt)
    return PopularityProfile.normalized(np.clip(Pt @ c, 0.0, None))
