"""Knows-what-it-knows style selective predictor.

Each file keeps its own history of (lag vector, next value) pairs. A query
lag vector x is answered only when the history covers it: the Gram matrix
H'H is eigendecomposed, eigenvalues split at 1, and the two accuracy
vectors

    q = H U_big diag(1/lambda_big) U_big' x      (well-covered part)
    v = U_small' x                               (poorly-covered part)

must satisfy ||q|| <= alpha1 and ||v|| <= alpha2. Covered queries get a
sum-to-one constrained least-squares fit on the history (coefficients may
be negative); uncovered ones abstain, and the pair (x, next value) joins
the history once the next value arrives, so histories grow only on
abstention.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import ConfigError
from .nnls import solve_sum_one_ls


@dataclass(frozen=True)
class KwikConfig:
    order: int = 4
    alpha1: float = 0.5
    alpha2: float = 0.5
    history_cap: int = 512

    def __post_init__(self):
        if self.order < 1:
            raise ConfigError("order must be at least 1")
        if self.alpha1 <= 0 or self.alpha2 <= 0:
            raise ConfigError("accuracy thresholds must be positive")
        if self.history_cap < 1:
            raise ConfigError("history_cap must be positive")


def accuracy_vectors(H: np.ndarray, x: np.ndarray):
    """Split the query x against the history H (rows are lag vectors).

    Returns (q, v): q lives in sample space and shrinks as covered
    directions accumulate rows; v collects the components of x in the
    eigenspace with eigenvalues below 1 (zero rows of history mean all of
    x lands in v).
    """
    H = np.asarray(H, dtype=float)
    x = np.asarray(x, dtype=float)
    if H.ndim != 2 or H.shape[1] != x.size:
        raise ValueError("history/query dimension mismatch")
    lam, U = np.linalg.eigh(H.T @ H)
    lam = lam[::-1]
    U = U[:, ::-1]
    big = lam >= 1.0
    k = int(big.sum())
    if k:
        q = H @ (U[:, :k] @ ((U[:, :k].T @ x) / lam[:k]))
    else:
        q = np.zeros(H.shape[0])
    v = U[:, k:].T @ x
    return q, v


class KwikLearner:
    """Per-file selective one-step predictor over a vector time series.

    ``step(values)`` observes the slot-t vector and returns
    (predictions, predicted_mask) for slot t+1, with NaN at abstaining
    files. Pending abstention pairs are completed on the next step, and
    histories are capped FIFO.
    """

    def __init__(self, n_files: int, cfg: KwikConfig = KwikConfig()):
        self.n = n_files
        self.cfg = cfg
        self.t = 0
        self._hist_x = [[] for _ in range(n_files)]   # lag rows
        self._hist_y = [[] for _ in range(n_files)]   # realized next values
        self._pending: list = [None] * n_files
        self._recent: list = []                        # last `order` observed vectors
        self.abstentions: list = []                    # (slot, file) event log

    def history(self, l: int) -> np.ndarray:
        return np.array(self._hist_x[l]).reshape(-1, self.cfg.order)

    def step(self, values: np.ndarray):
        d = self.cfg.order
        v_t = np.asarray(values, dtype=float)
        if v_t.shape != (self.n,):
            raise ValueError(f"expected {self.n} per-file values, got shape {v_t.shape}")
        self.t += 1

        # complete pending (lag, target) pairs now that the target arrived
        for l in range(self.n):
            if self._pending[l] is not None:
                self._hist_x[l].append(self._pending[l])
                self._hist_y[l].append(v_t[l])
                if len(self._hist_x[l]) > self.cfg.history_cap:
                    del self._hist_x[l][0]
                    del self._hist_y[l][0]
                self._pending[l] = None

        self._recent.append(v_t)
        if len(self._recent) > d:
            del self._recent[0]

        preds = np.full(self.n, np.nan)
        mask = np.zeros(self.n, dtype=bool)
        if len(self._recent) < d:
            for l in range(self.n):
                self.abstentions.append((self.t, l))
            return preds, mask

        window = np.stack(self._recent, axis=0)        # oldest ... newest
        for l in range(self.n):
            x = window[::-1, l]                        # lag 1 first
            if not self._hist_x[l]:
                self._abstain(l, x)
                continue
            H = np.array(self._hist_x[l])
            q, vv = accuracy_vectors(H, x)
            if np.linalg.norm(q) <= self.cfg.alpha1 and np.linalg.norm(vv) <= self.cfg.alpha2:
                c = solve_sum_one_ls(H, np.array(self._hist_y[l]))
                preds[l] = float(c @ x)
                mask[l] = True
            else:
                self._abstain(l, x)
        return preds, mask

    def _abstain(self, l: int, x: np.ndarray):
        self._pending[l] = x.copy()
        self.abstentions.append((self.t, l))
