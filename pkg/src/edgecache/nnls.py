"""Constrained least-squares solvers for the popularity predictors.

Two active-set solvers in the unknowns' own space (sum-to-one simplex and
unit-ball constraints, both with nonnegativity), a plain least-squares
wrapper, and a small primal active-set QP for problems posed in coefficient
space with a linear map in the constraints. All problems here are tiny
(dimension <= a few dozen), so dense factorizations throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import NumericalError

#: Dual feasibility / termination tolerance for the active-set loops.
DUAL_EPS = 1e-10

#: Relative ridge added to a near-singular restricted Gram matrix.
RIDGE_SCALE = 1e-10


@dataclass(frozen=True)
class LsSolution:
    """Solution bundle: iterate, passive set, constraint multiplier, dual, work."""

    x: np.ndarray
    passive: np.ndarray
    multiplier: float
    dual: np.ndarray
    iterations: int


def solve_ls(H: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Unconstrained least squares.

    Overdetermined (and square) systems go through lstsq. Underdetermined
    systems return the pivoted-QR basic solution (at most rank(H) nonzero
    coefficients) rather than the minimum-norm one: the argmin set is not
    unique there, and the minimum-norm choice silently adds a smoothing
    bias to short-window autoregressive fits.
    """
    H = np.asarray(H, dtype=float)
    y = np.asarray(y, dtype=float)
    m, n = H.shape
    if m >= n:
        x, *_ = np.linalg.lstsq(H, y, rcond=None)
        return x
    Q, R, piv = scipy.linalg.qr(H, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    tol = max(m, n) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    x = np.zeros(n)
    if rank:
        z = scipy.linalg.solve_triangular(R[:rank, :rank], (Q.T @ y)[:rank])
        x[piv[:rank]] = z
    return x


def _ridge_for(G: np.ndarray) -> float:
    n = G.shape[0]
    return RIDGE_SCALE * float(np.trace(G)) / n + 1e-300


def _solve_maybe_ridge(K: np.ndarray, rhs: np.ndarray, gram_slice) -> np.ndarray:
    """Solve K z = rhs; on singularity or conditioning failure, add a ridge
    to the Gram block of K (indexed by gram_slice) and fall back to lstsq."""
    try:
        cond_bad = np.linalg.cond(K) > 1e12
    except np.linalg.LinAlgError:
        cond_bad = True
    if cond_bad:
        K = K.copy()
        diag = np.arange(gram_slice.start, gram_slice.stop)
        K[diag, diag] += _ridge_for(K[gram_slice, gram_slice])
    try:
        z = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        z, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    if not np.all(np.isfinite(z)):
        z, *_ = np.linalg.lstsq(K, rhs, rcond=None)
        if not np.all(np.isfinite(z)):
            raise NumericalError("stalled: singular restricted system")
    return z


def _restricted_sum_one(G: np.ndarray, b: np.ndarray, mask: np.ndarray):
    """Minimize 1/2 s'Gs - b's subject to 1's = 1 on the passive coordinates."""
    idx = np.flatnonzero(mask)
    m = idx.size
    K = np.zeros((m + 1, m + 1))
    K[:m, :m] = G[np.ix_(idx, idx)]
    K[:m, m] = 1.0
    K[m, :m] = 1.0
    rhs = np.concatenate([b[idx], [1.0]])
    z = _solve_maybe_ridge(K, rhs, slice(0, m))
    return z[:m], float(z[m])


def _restricted_ball(G: np.ndarray, b: np.ndarray, mask: np.ndarray, ball_tol: float):
    """Minimize 1/2 s'Gs - b's subject to ||s|| <= 1 on the passive coordinates.

    The unconstrained restricted solution is kept when it fits in the ball;
    otherwise the multiplier of the active norm constraint is found by
    bisection on lambda in (G + lambda I) s = b.
    """
    idx = np.flatnonzero(mask)
    Gp = G[np.ix_(idx, idx)]
    bp = b[idx]
    m = idx.size

    def solve_at(lam):
        K = Gp + lam * np.eye(m)
        return _solve_maybe_ridge(K, bp, slice(0, m))

    s = solve_at(0.0)
    if np.linalg.norm(s) <= 1.0 + ball_tol:
        return s, 0.0
    hi = max(1.0, float(np.trace(Gp)) / m)
    for _ in range(200):
        if np.linalg.norm(solve_at(hi)) < 1.0:
            break
        hi *= 2.0
    else:
        raise NumericalError("stalled: ball multiplier bracket failure")
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        s = solve_at(mid)
        nrm = np.linalg.norm(s)
        if abs(nrm - 1.0) <= ball_tol:
            return s, mid
        if nrm > 1.0:
            lo = mid
        else:
            hi = mid
    raise NumericalError("stalled: ball multiplier bisection did not converge")


def _step_back(x: np.ndarray, s_full: np.ndarray, passive: np.ndarray):
    """One Lawson-Hanson feasibility step of the move x -> s.

    Returns None when no passive coordinate strictly blocks the move (s is
    acceptable as the next iterate). Otherwise returns (x', passive') after
    stepping by the smallest blocking ratio x_i / (x_i - s_i) and retiring
    the coordinates that reached zero. A zero ratio (the freshly entered
    coordinate) falls back to re-selection over nonzero coordinates.
    """
    blocking = passive & (s_full <= 0.0) & ((x - s_full) > 0.0)
    if not blocking.any():
        return None
    ratios = x[blocking] / (x - s_full)[blocking]
    alpha = float(ratios.min())
    if alpha == 0.0:
        nz = blocking & (x != 0.0)
        if not nz.any():
            raise NumericalError("stalled: no feasible backtracking step")
        alpha = float((x[nz] / (x - s_full)[nz]).min())
    x_new = x + alpha * (s_full - x)
    x_new[~passive] = 0.0
    dropped = passive & (x_new <= 0.0)
    x_new[dropped] = 0.0
    return x_new, passive & ~dropped


def solve_simplex_nnls(H: np.ndarray, y: np.ndarray, eps: float = DUAL_EPS,
                       max_iter: int | None = None) -> LsSolution:
    """Active-set solver for min 1/2 ||y - Hx||^2 s.t. x >= 0, sum(x) = 1.

    Parameters
    ----------
    H : (m, n) ndarray
        Design matrix; the Gram products H'H and H'y are formed once.
    y : (m,) ndarray
        Target vector.
    eps : float
        Dual feasibility tolerance; the loop stops when no active
        coordinate has dual value above eps.
    max_iter : int, optional
        Cap on restricted solves, default 10 n; exceeding it raises.

    Returns
    -------
    LsSolution
        x lies exactly on the simplex face spanned by the passive set; the
        dual is v = H'y - H'Hx - lambda with v ~ 0 on passive coordinates.

    Notes
    -----
    Restricted subproblems keep the sum-to-one constraint via a bordered
    KKT system, so the very first insertion already lands on the simplex.
    That first insertion happens even when every dual starts below eps
    (common when H'y is entirely nonpositive); without it the iterate
    would terminate infeasible at x = 0.
    """
    H = np.asarray(H, dtype=float)
    y = np.asarray(y, dtype=float)
    n = H.shape[1]
    cap = 10 * n if max_iter is None else max_iter
    G = H.T @ H
    b = H.T @ y

    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    lam = 0.0
    v = b.copy()
    iters = 0

    while (~passive).any():
        act = np.flatnonzero(~passive)
        infeasible = abs(x.sum() - 1.0) > 1e-12
        if v[act].max() <= eps and not infeasible:
            break
        j = act[int(np.argmax(v[act]))]
        passive[j] = True
        while True:
            iters += 1
            if iters > cap:
                raise NumericalError(f"stalled: simplex NNLS exceeded {cap} restricted solves")
            s, lam_s = _restricted_sum_one(G, b, passive)
            s_full = np.zeros(n)
            s_full[passive] = s
            stepped = _step_back(x, s_full, passive)
            if stepped is None:
                break
            x, passive = stepped
            if not passive.any():
                raise NumericalError("stalled: passive set emptied during backtracking")
        x = np.maximum(s_full, 0.0)
        lam = lam_s
        v = b - G @ x - lam

    if abs(x.sum() - 1.0) > 1e-6:
        raise NumericalError("infeasible: simplex constraint unmet with all duals below eps")
    return LsSolution(x=x, passive=passive, multiplier=lam, dual=v, iterations=iters)


def solve_ball_nnls(H: np.ndarray, y: np.ndarray, eps: float = DUAL_EPS,
                    ball_tol: float = 1e-8, max_iter: int | None = None) -> LsSolution:
    """Active-set solver for min 1/2 ||y - Hx||^2 s.t. x >= 0, ||x|| <= 1.

    Same skeleton as :func:`solve_simplex_nnls`; the restricted problems
    swap the sum constraint for the Euclidean ball, activating the norm
    multiplier only when the unconstrained restricted solution leaves the
    ball. The dual is v = H'y - H'Hx - lambda x.
    """
    H = np.asarray(H, dtype=float)
    y = np.asarray(y, dtype=float)
    n = H.shape[1]
    cap = 10 * n if max_iter is None else max_iter
    G = H.T @ H
    b = H.T @ y

    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    lam = 0.0
    v = b.copy()
    iters = 0

    while (~passive).any():
        act = np.flatnonzero(~passive)
        if v[act].max() <= eps:
            break
        j = act[int(np.argmax(v[act]))]
        passive[j] = True
        while True:
            iters += 1
            if iters > cap:
                raise NumericalError(f"stalled: ball NNLS exceeded {cap} restricted solves")
            s, lam_s = _restricted_ball(G, b, passive, ball_tol)
            s_full = np.zeros(n)
            s_full[passive] = s
            stepped = _step_back(x, s_full, passive)
            if stepped is None:
                break
            x, passive = stepped
            if not passive.any():
                raise NumericalError("stalled: passive set emptied during backtracking")
        x = np.maximum(s_full, 0.0)
        lam = lam_s
        v = b - G @ x - lam * x

    return LsSolution(x=x, passive=passive, multiplier=lam, dual=v, iterations=iters)


def solve_sum_one_ls(H: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least squares under the single equality constraint sum(c) = 1.

    Sign-free: used where coefficients may legitimately be negative.
    """
    H = np.asarray(H, dtype=float)
    y = np.asarray(y, dtype=float)
    G = H.T @ H
    b = H.T @ y
    c, _ = _restricted_sum_one(G, b, np.ones(H.shape[1], dtype=bool))
    return c


def _active_set_qp(G: np.ndarray, a: np.ndarray, M: np.ndarray, sum_to_one: bool,
                   c0: np.ndarray, max_iter: int | None = None) -> np.ndarray:
    """Primal active-set method for min 1/2 c'Gc - a'c s.t. Mc >= 0
    (optionally plus sum(c) = 1), started from a feasible c0."""
    n = G.shape[0]
    m = M.shape[0]
    cap = 50 * (n + m + 1) if max_iter is None else max_iter
    c = np.asarray(c0, dtype=float).copy()
    tight = np.asarray(np.abs(M @ c) <= 1e-12)
    work = set(np.flatnonzero(tight).tolist())

    for _ in range(cap):
        rows = sorted(work)
        E_parts = []
        rhs_eq = []
        if sum_to_one:
            E_parts.append(np.ones((1, n)))
            rhs_eq.append(1.0)
        if rows:
            E_parts.append(M[rows])
            rhs_eq.extend([0.0] * len(rows))
        if E_parts:
            E = np.vstack(E_parts)
        else:
            E = np.zeros((0, n))
        k = E.shape[0]
        K = np.zeros((n + k, n + k))
        K[:n, :n] = G
        K[:n, n:] = E.T
        K[n:, :n] = E
        rhs = np.concatenate([a, np.asarray(rhs_eq)])
        z = _solve_maybe_ridge(K, rhs, slice(0, n))
        c_star, nu = z[:n], z[n:]

        d = c_star - c
        if np.linalg.norm(d) <= 1e-13 * (1.0 + np.linalg.norm(c)):
            # at the working-set optimum; check inequality multipliers
            ineq_nu = nu[1:] if sum_to_one else nu
            if ineq_nu.size == 0 or ineq_nu.max() <= 1e-11:
                return c_star
            # drop the row whose multiplier most violates its sign
            worst = int(np.argmax(ineq_nu))
            work.discard(rows[worst])
            continue

        Md = M @ d
        Mc = M @ c
        alpha = 1.0
        enter = None
        for r in range(m):
            if r in work or Md[r] >= -1e-14:
                continue
            ar = max(0.0, -Mc[r] / Md[r])
            if ar < alpha:      # ascending r, so ties keep the lowest row
                alpha, enter = ar, r
        c = c + alpha * d
        if enter is not None:
            work.add(enter)
    raise NumericalError("stalled: active-set QP exceeded its iteration cap")


def solve_sum_one_nnls(H: np.ndarray, y: np.ndarray, M: np.ndarray,
                       c0: np.ndarray | None = None) -> np.ndarray:
    """min 1/2 ||y - Hc||^2 s.t. sum(c) = 1 and Mc >= 0 (coefficient space)."""
    H = np.asarray(H, dtype=float)
    y = np.asarray(y, dtype=float)
    M = np.asarray(M, dtype=float)
    n = H.shape[1]
    if c0 is None:
        c0 = np.zeros(n)
        c0[0] = 1.0
    return _active_set_qp(H.T @ H, H.T @ y, M, True, c0)


def solve_map_ball_nnls(H: np.ndarray, y: np.ndarray, M: np.ndarray,
                        ball_tol: float = 1e-8, c0: np.ndarray | None = None) -> np.ndarray:
    """min 1/2 ||y - Hc||^2 s.t. Mc >= 0 and ||Mc|| <= 1 (coefficient space).

    The ball constraint is handled by an outer bisection on its multiplier;
    each inner problem is the nonnegatively-constrained QP above with the
    Gram matrix augmented by 2 mu M'M.
    """
    H = np.asarray(H, dtype=float)
    y = np.asarray(y, dtype=float)
    M = np.asarray(M, dtype=float)
    n = H.shape[1]
    if c0 is None:
        c0 = np.zeros(n)
        c0[0] = 1.0
    G = H.T @ H
    a = H.T @ y
    MtM = M.T @ M

    def solve_at(mu):
        return _active_set_qp(G + 2.0 * mu * MtM, a, M, False, c0)

    c = solve_at(0.0)
    if np.linalg.norm(M @ c) <= 1.0 + ball_tol:
        return c
    hi = 1.0
    for _ in range(200):
        if np.linalg.norm(M @ solve_at(hi)) < 1.0:
            break
        hi *= 2.0
    else:
        raise NumericalError("stalled: map-ball multiplier bracket failure")
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        c = solve_at(mid)
        nrm = np.linalg.norm(M @ c)
        if abs(nrm - 1.0) <= ball_tol:
            return c
        if nrm > 1.0:
            lo = mid
        else:
            hi = mid
    raise NumericalError("stalled: map-ball multiplier bisection did not converge")
