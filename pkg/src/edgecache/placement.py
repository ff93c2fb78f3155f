"""Cache hit / coverage analysis and optimal probabilistic placement.

A Poisson field of base stations with density lambda_bs caches file l
independently with probability q_l. The success probability of a typical
user requesting file l reduces to a ratio of three geometry constants
(A, B, C); the placement that maximizes the popularity-weighted success
probability has a closed form driven by a threshold partition of the
catalogue into always-cache (R), fractional (P) and never-cache (Z) sets.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy import integrate

from .core import ConfigError, NetworkParams, NumericalError, PopularityProfile, as_generator


@dataclass(frozen=True)
class AspConstants:
    """Geometry constants A, B, C for a fixed network parameter set.

    0 < A < B and A + C > B always hold for alpha > 2; both are checked at
    construction because the placement formulas divide by (A + C - B).
    """

    A: float
    B: float
    C: float
    params: NetworkParams
    quad_tol: float = 1e-10

    def __post_init__(self):
        if not (0.0 < self.A < self.B):
            raise NumericalError(f"degenerate geometry: need 0 < A < B, got A={self.A}, B={self.B}")
        if self.A + self.C <= self.B:
            raise NumericalError("degenerate geometry: A + C <= B")


def compute_constants(params: NetworkParams, quad_tol: float = 1e-10) -> AspConstants:
    """Evaluate the coverage constants A, B, C by adaptive quadrature.

    The defining integrals run over u in [1/s0, inf) and [0, inf) with
    integrand u^(2/alpha - 1) / (1 + u). The substitution v = 1/(1 + u)
    maps them to the finite interval with an algebraic endpoint weight
    v^(-2/alpha) (1 - v)^(2/alpha - 1), which QUADPACK's QAWS rule handles
    to near machine precision. B is cross-checked against its closed form
    2*pi*lambda * s0^(2/alpha) * (pi/alpha) / sin(2*pi/alpha).
    """
    alpha = params.alpha
    if alpha <= 2.0:
        raise NumericalError(f"divergent integral: path-loss exponent {alpha} <= 2")
    s0 = params.sinr_threshold
    if s0 <= 0.0:
        raise NumericalError("degenerate geometry: SINR threshold is not positive")

    a_w = -2.0 / alpha          # weight exponent at the left endpoint
    b_w = 2.0 / alpha - 1.0     # weight exponent at the right endpoint
    coef = 2.0 * np.pi * params.lambda_bs * s0 ** (2.0 / alpha) / alpha

    def _quad(func, lo, hi, wvar):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            out = integrate.quad(func, lo, hi, weight="alg", wvar=wvar,
                                 epsabs=0.0, epsrel=quad_tol, limit=200, full_output=1)
        if len(out) > 3:
            raise NumericalError(f"quadrature failure: {out[3]}")
        val, abserr = out[0], out[1]
        if abs(val) > 0 and abserr / abs(val) > 1e3 * quad_tol:
            raise NumericalError(f"quadrature failure: error estimate {abserr:.2e} for value {val:.6e}")
        return val

    # A: upper limit u = 1/s0 maps to v0 = s0/(1+s0); the (1-v) factor is
    # smooth on [0, v0] so only the left-endpoint weight goes to QAWS.
    v0 = s0 / (1.0 + s0)
    a_int = _quad(lambda v: (1.0 - v) ** b_w, 0.0, v0, (a_w, 0.0))
    b_int = _quad(lambda v: 1.0, 0.0, 1.0, (a_w, b_w))

    A = coef * a_int
    B = coef * b_int
    C = np.pi * params.lambda_bs

    b_closed = coef * np.pi / np.sin(2.0 * np.pi / alpha)
    if abs(B - b_closed) > 1e-8 * abs(b_closed):
        raise NumericalError(f"quadrature failure: B={B!r} disagrees with closed form {b_closed!r}")

    return AspConstants(A=A, B=B, C=C, params=params, quad_tol=quad_tol)


def g0(q: Union[float, np.ndarray], k: AspConstants) -> Union[float, np.ndarray]:
    """Per-file success probability at caching probability q, no noise."""
    qa = np.asarray(q, dtype=float)
    out = qa * k.C / (qa * k.A + (1.0 - qa) * k.B + qa * k.C)
    if np.ndim(q) == 0:
        return float(out)
    return out


def g_noisy(q: float, k: AspConstants) -> float:
    """Per-file success probability with thermal noise sigma^2 > 0.

    Evaluates q*C * int_0^inf exp(-s0 t^(alpha/2) sigma^2 / P) exp(-D t) dt
    with D = qA + (1-q)B + qC, rescaled by w = D*t so the exponential decay
    has unit scale. Collapses to g0 when the noise power is zero.
    """
    p = k.params
    if p.noise == 0.0 or q == 0.0:
        return g0(q, k)
    D = q * k.A + (1.0 - q) * k.B + q * k.C
    s0 = p.sinr_threshold
    damp = s0 * p.noise / p.tx_power
    half_alpha = p.alpha / 2.0

    def integrand(w):
        return np.exp(-damp * (w / D) ** half_alpha - w)

    val, abserr = integrate.quad(integrand, 0.0, np.inf, epsabs=0.0, epsrel=k.quad_tol, limit=200)
    if not np.isfinite(val) or (val > 0 and abserr / val > 1e3 * k.quad_tol):
        raise NumericalError("quadrature failure in noisy coverage integral")
    return float(q * k.C / D * val)


@dataclass(frozen=True)
class CachePolicy:
    """Caching probability vector with its threshold partition.

    always_cache / fractional / never_cache index the files with q = 1,
    0 < q < 1 and q = 0 respectively. The expected cache occupancy sum(q)
    never exceeds the cache size.
    """

    q: np.ndarray
    always_cache: tuple
    fractional: tuple
    never_cache: tuple
    cache_size: int

    def __post_init__(self):
        arr = np.asarray(self.q, dtype=float)
        if arr.ndim != 1:
            raise ValueError("q must be a vector")
        if arr.min() < -1e-9 or arr.max() > 1.0 + 1e-9:
            raise ValueError(f"caching probabilities outside [0, 1]: [{arr.min()}, {arr.max()}]")
        arr = np.clip(arr, 0.0, 1.0)
        if arr.sum() > self.cache_size + 1e-7:
            raise ValueError(f"expected cache occupancy {arr.sum()} exceeds capacity {self.cache_size}")
        seen = sorted(self.always_cache) + sorted(self.fractional) + sorted(self.never_cache)
        if sorted(seen) != list(range(arr.size)):
            raise ValueError("partition does not cover all files exactly once")
        arr.flags.writeable = False
        object.__setattr__(self, "q", arr)

    @property
    def n(self) -> int:
        return self.q.size


def asp(p: PopularityProfile, policy: Union[CachePolicy, np.ndarray], k: AspConstants) -> float:
    """Average success probability sum_l p_l g0(q_l) of a placement."""
    q = policy.q if isinstance(policy, CachePolicy) else np.asarray(policy, dtype=float)
    if q.size != p.n:
        raise ValueError(f"placement covers {q.size} files, profile has {p.n}")
    return float(p.values @ g0(q, k))


def _partition(pbar: np.ndarray, L: int, k: AspConstants):
    """Threshold partition (R, P, Z) plus the final (eta, S) pair.

    Files enter R from the top of the sqrt-popularity order while
    (B/(A+C)) pbar_i strictly exceeds S/eta, and enter Z from the bottom
    while pbar_i falls strictly below S/eta; eta and S are recomputed after
    every move. Ties stay in P, where the closed form lands exactly on the
    boundary value 0 or 1. Ranking ties break toward the lower index.

    Exact zeros go straight to Z: that is their limit under the strict
    threshold test, and it keeps S positive for the fractional formula.
    """
    n = pbar.size
    ratio = (k.A + k.C - k.B) / k.B
    rho = k.B / (k.A + k.C)
    order = sorted(range(n), key=lambda i: (-pbar[i], i))
    lo, hi = 0, n           # P = order[lo:hi]
    while hi > 0 and pbar[order[hi - 1]] == 0.0:
        hi -= 1
    while lo < hi:
        n_p = hi - lo
        eta = n_p + (L - lo) * ratio
        if eta <= 0:
            raise NumericalError("degenerate geometry: nonpositive eta in partition")
        S = float(pbar[order[lo:hi]].sum())
        T = S / eta
        if lo < L and rho * pbar[order[lo]] > T:
            lo += 1
            continue
        if pbar[order[hi - 1]] < T:
            hi -= 1
            continue
        break
    R = tuple(sorted(order[:lo]))
    P = tuple(sorted(order[lo:hi]))
    Z = tuple(sorted(order[hi:]))
    if P:
        eta = (hi - lo) + (L - lo) * ratio
        S = float(pbar[list(P)].sum())
    else:
        eta, S = 0.0, 0.0
    return R, P, Z, eta, S


def optimal_placement(p: PopularityProfile, k: AspConstants, L: Optional[int] = None) -> CachePolicy:
    """Closed-form placement maximizing the average success probability.

    Parameters
    ----------
    p : PopularityProfile
        Current popularity estimate.
    k : AspConstants
        Geometry constants from :func:`compute_constants`.
    L : int, optional
        Cache size override; defaults to ``k.params.cache_size``.

    Returns
    -------
    CachePolicy
        q = 1 on R, 0 on Z and (B/(A+C-B)) (eta pbar_i / S - 1) on the
        fractional set, where S sums sqrt-popularity over the fractional
        set. The expected occupancy equals min(L, n) exactly.
    """
    L = k.params.cache_size if L is None else int(L)
    if L < 1:
        raise ConfigError("cache size must be at least 1")
    n = p.n
    if L >= n:
        return CachePolicy(np.ones(n), tuple(range(n)), (), (), L)

    pbar = np.sqrt(p.values)
    R, P, Z, eta, S = _partition(pbar, L, k)
    q = np.zeros(n)
    q[list(R)] = 1.0
    if P:
        idx = list(P)
        q[idx] = (k.B / (k.A + k.C - k.B)) * (eta * pbar[idx] / S - 1.0)
        bad = (q[idx] < -1e-9) | (q[idx] > 1.0 + 1e-9)
        if bad.any():
            raise NumericalError("placement KKT partition produced q outside [0, 1]")
        q[idx] = np.clip(q[idx], 0.0, 1.0)
    return CachePolicy(q, R, P, Z, L)


def optimal_asp_value(p: PopularityProfile, policy: CachePolicy, k: AspConstants) -> float:
    """Closed-form value of the optimum; agrees with asp(p, policy, k).

    Only valid for a policy produced by :func:`optimal_placement` for the
    same profile; the partition is checked against q for consistency.
    """
    q = policy.q
    ok = (np.allclose(q[list(policy.always_cache)], 1.0, atol=1e-9) if policy.always_cache else True) \
        and (np.allclose(q[list(policy.never_cache)], 0.0, atol=1e-9) if policy.never_cache else True)
    if not ok:
        raise ValueError("partition inconsistent with caching probabilities")
    pv = p.values
    total = k.C / (k.A + k.C) * float(pv[list(policy.always_cache)].sum()) if policy.always_cache else 0.0
    if policy.fractional:
        idx = list(policy.fractional)
        pbar = np.sqrt(pv[idx])
        n_p = len(idx)
        eta = n_p + (policy.cache_size - len(policy.always_cache)) * (k.A + k.C - k.B) / k.B
        S = float(pbar.sum())
        total += k.C / (k.A + k.C - k.B) * (float(pv[idx].sum()) - S * S / eta)
    return total


def asp_difference_bound(p: PopularityProfile, k: AspConstants, L: Optional[int] = None) -> float:
    """Worst-case ASP loss bound for placements built from a predicted profile.

    Uses the optimal partition of the true profile; requires a nonempty
    fractional set with strictly positive sqrt-popularity.
    """
    L = k.params.cache_size if L is None else int(L)
    policy = optimal_placement(p, k, L)
    if not policy.fractional:
        raise ValueError("degenerate profile: fractional set is empty")
    idx = list(policy.fractional)
    pbar = np.sqrt(p.values[idx])
    if pbar.min() <= 0.0:
        raise ValueError("degenerate profile: zero popularity in the fractional set")
    n_p = len(idx)
    eta = n_p + (L - len(policy.always_cache)) * (k.A + k.C - k.B) / k.B
    S = float(pbar.sum())
    term = k.C / (k.A + k.C - k.B) / eta * (S / float(pbar.min()) - n_p)
    head = k.B / (k.A + k.C) * float(p.values[list(policy.always_cache)].sum()) if policy.always_cache else 0.0
    return term - head


def _project_box_budget(Y: np.ndarray, L: float) -> np.ndarray:
    """Euclidean projection of each row of Y onto {q: 0 <= q <= 1, sum q <= L}."""
    X = np.clip(Y, 0.0, 1.0)
    over = X.sum(axis=1) > L
    if not np.any(over):
        return X
    Yo = Y[over]
    lo = np.zeros(Yo.shape[0])
    hi = Yo.max(axis=1)  # clip(Y - hi) <= 0 elementwise, so the sum is 0 <= L
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        s = np.clip(Yo - mid[:, None], 0.0, 1.0).sum(axis=1)
        too_big = s > L
        lo = np.where(too_big, mid, lo)
        hi = np.where(too_big, hi, mid)
    X[over] = np.clip(Yo - hi[:, None], 0.0, 1.0)
    return X


def oracle_placement(p: PopularityProfile, k: AspConstants, L: Optional[int] = None,
                     tol: float = 1e-14, n_starts: int = 10, max_iter: int = 4000,
                     seed: Union[int, np.random.Generator] = 0) -> np.ndarray:
    """First-order reference solver for the placement problem.

    Accelerated projected gradient ascent (Nesterov momentum with monotone
    restart, per-start adaptive step by backtracking) on the concave
    objective sum_l p_l g0(q_l) over {0 <= q <= 1, sum q <= L}, run from
    ``n_starts`` random interior points. A start counts as converged when
    its successive objective change drops below ``tol``. Returns the best
    q found; independent of the closed form in :func:`optimal_placement`.
    """
    L = k.params.cache_size if L is None else int(L)
    n = p.n
    if L >= n:
        return np.ones(n)
    rng = as_generator(seed)
    pv = p.values
    span = k.A + k.C - k.B

    def fval(X):
        return (pv * (X * k.C / (k.B + X * span))).sum(axis=1)

    def grad(X):
        return pv * k.B * k.C / (k.B + X * span) ** 2

    X = _project_box_budget(rng.uniform(0.0, 1.0, size=(n_starts, n)), L)
    V = X.copy()                        # extrapolated point
    X_prev = X.copy()
    theta = np.ones(n_starts)
    # initial step ~ 1 / (worst-case curvature p_max |g0''(0)|); backtracking adapts it
    step = np.full(n_starts, k.B ** 2 / (2.0 * k.C * span * pv.max() + 1e-300))
    f_cur = fval(X)
    done = np.zeros(n_starts, dtype=bool)

    for _ in range(max_iter):
        G = grad(V)
        f_v = fval(V)
        cand = _project_box_budget(V + step[:, None] * G, L)
        diff = cand - V
        # prox-style sufficient increase test for the concave objective
        lin = (G * diff).sum(axis=1) - (diff * diff).sum(axis=1) / (2.0 * step)
        f_cand = fval(cand)
        ok = f_cand >= f_v + lin - 1e-18
        step = np.where(ok, step * 1.5, step * 0.5)
        accept = ok & ~done

        X_new = np.where(accept[:, None], cand, X)
        f_new = np.where(accept, f_cand, f_cur)
        # monotone restart: if momentum hurt the objective, drop it
        worse = accept & (f_new < f_cur - 1e-18)
        theta_new = np.where(accept, 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * theta ** 2)), theta)
        theta_new = np.where(worse, 1.0, theta_new)
        mom = np.where(worse, 0.0, (theta - 1.0) / theta_new)
        V_next = np.clip(X_new + mom[:, None] * (X_new - X_prev), 0.0, 1.0)
        # rejected rows retry from their current iterate with a shorter step
        V = np.where(accept[:, None], V_next, X)
        done |= accept & (np.abs(f_new - f_cur) < tol)
        X_prev, X, f_cur, theta = X, X_new, f_new, theta_new
        if done.all():
            break

    best = int(np.argmax(fval(X)))
    return X[best]
