"""Dual direction-finding QP over the probability simplex.

Solves

    min_lam  0.5 lam' G G' lam - f' lam   s.t.  lam >= 0, sum(lam) = 1

and recovers the primal direction ``p = -G' lam``. The Frank-Wolfe gap of the
returned ``lam`` is reported as an optimality certificate; for this problem it
coincides with the primal-dual gap ``primal_obj + dual_obj``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_DELTA = 1e-7
MAX_QP_ITERATIONS = 10_000
POWER_ITERATIONS = 50


class MaxQpIterations(RuntimeError):
    """The gap certificate was not reached within the iteration cap."""

    def __init__(self, message, gap=None, iterations=None):
        super().__init__(message)
        self.gap = gap
        self.iterations = iterations


class DimensionTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class QpSolution:
    lam: np.ndarray
    p: np.ndarray
    dual_obj: float
    gap: float
    iterations: int = 0


@dataclass(frozen=True)
class PrimalCertificate:
    a: float
    primal_obj: float


def _check_inputs(G, f):
    G = np.atleast_2d(np.asarray(G, dtype=float))
    f = np.asarray(f, dtype=float).reshape(-1)
    if G.shape[0] != f.size:
        raise ValueError(f"G has {G.shape[0]} rows but f has {f.size} entries")
    if not (np.all(np.isfinite(G)) and np.all(np.isfinite(f))):
        raise ValueError("G and f must be finite")
    return G, f


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto {lam >= 0, sum(lam) = 1} by sort and threshold."""
    v = np.asarray(v, dtype=float).reshape(-1)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def dual_objective(G, f, lam) -> float:
    q = G.T @ lam
    return float(0.5 * q @ q - f @ lam)


def fw_gap(G, f, lam) -> float:
    """Frank-Wolfe gap max_i (-g)_i - lam'(-g) with g = G G' lam - f."""
    G, f = _check_inputs(G, f)
    lam = np.asarray(lam, dtype=float).reshape(-1)
    return _fw_gap(G, f, lam)


def _fw_gap(G, f, lam) -> float:
    # -g = f + G p with p = -G' lam
    neg_g = f - G @ (G.T @ lam)
    return max(float(np.max(neg_g) - lam @ neg_g), 0.0)


def primal_from_dual(G, f, lam):
    """Direction p = -G' lam and the epigraph level a = max_j (f_j + <G_j, p>)."""
    G, f = _check_inputs(G, f)
    lam = np.asarray(lam, dtype=float).reshape(-1)
    p = -(G.T @ lam)
    a = float(np.max(f + G @ p))
    return p, PrimalCertificate(a=a, primal_obj=float(0.5 * p @ p + a))


def _largest_eigenvalue(Q: np.ndarray) -> float:
    v = np.random.default_rng(0).standard_normal(Q.shape[0])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(POWER_ITERATIONS):
        w = Q @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            break
        est = float(v @ w)
        v = w / norm
    # trace/N never exceeds the top eigenvalue of a PSD matrix
    return max(1.05 * est, float(np.trace(Q)) / Q.shape[0])


def _clean(lam: np.ndarray) -> np.ndarray:
    lam = np.where(lam < 0.0, 0.0, lam) + 0.0  # + 0.0 drops negative zeros
    return lam / lam.sum()


def _polish(Q, G, f, lam, support_tol=1e-12):
    """Solve the KKT system on the current support exactly.

    Returns a feasible candidate or None when the equality-constrained
    solution leaves the simplex.
    """
    S = np.flatnonzero(lam > support_tol)
    k = S.size
    if k == 0:
        return None
    K = np.zeros((k + 1, k + 1))
    K[:k, :k] = Q[np.ix_(S, S)]
    K[:k, k] = -1.0
    K[k, :k] = 1.0
    rhs = np.concatenate([f[S], [1.0]])
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    lam_S = sol[:k]
    if np.any(lam_S < -1e-12):
        return None
    cand = np.zeros_like(lam)
    cand[S] = np.maximum(lam_S, 0.0)
    s = cand.sum()
    if s <= 0.0 or not np.isfinite(s):
        return None
    return _clean(cand)


def solve_simplex_qp(G, f, delta: float = DEFAULT_DELTA, warm_start=None,
                     max_iter: int = MAX_QP_ITERATIONS) -> QpSolution:
    """Accelerated projected gradient with restarts, stopped on the FW gap.

    Once the gap drops below ``delta`` the support of the iterate is used for
    an exact equality-constrained solve; the polished point replaces the
    iterate when its gap is no larger.
    """
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    G, f = _check_inputs(G, f)
    N = f.size

    if N == 1:
        lam = np.ones(1)
        return QpSolution(lam=lam, p=-(G.T @ lam), dual_obj=dual_objective(G, f, lam), gap=0.0)

    if warm_start is not None and np.shape(warm_start) == (N,):
        lam = project_simplex(warm_start)
    else:
        lam = np.full(N, 1.0 / N)

    Q = G @ G.T
    L = _largest_eigenvalue(Q)
    if L <= 0.0:
        # objective is linear: the best vertex is optimal
        lam = np.zeros(N)
        lam[int(np.argmax(f))] = 1.0
        return QpSolution(lam=lam, p=-(G.T @ lam), dual_obj=dual_objective(G, f, lam),
                          gap=_fw_gap(G, f, lam))

    def value(z):
        return 0.5 * z @ Q @ z - f @ z

    step = 1.0 / L
    y = lam.copy()
    t = 1.0
    obj = value(lam)
    gap = _fw_gap(G, f, lam)
    it = 0
    while gap > delta and it < max_iter:
        it += 1
        lam_new = project_simplex(y - step * (Q @ y - f))
        obj_new = value(lam_new)
        if obj_new > obj:
            # momentum overshot; restart from the last iterate
            y = lam.copy()
            t = 1.0
            lam_new = project_simplex(lam - step * (Q @ lam - f))
            obj_new = value(lam_new)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = lam_new + ((t - 1.0) / t_new) * (lam_new - lam)
        lam, obj, t = lam_new, obj_new, t_new
        gap = _fw_gap(G, f, lam)

    lam = _clean(lam)
    gap = _fw_gap(G, f, lam)
    polished = _polish(Q, G, f, lam)
    if polished is not None:
        pgap = _fw_gap(G, f, polished)
        if pgap <= gap:
            lam, gap = polished, pgap

    if gap > delta:
        raise MaxQpIterations(
            f"simplex QP gap {gap:.3e} above tolerance {delta:.3e} after {it} iterations",
            gap=gap, iterations=it)
    logger.debug("simplex QP: %d iterations, gap %.3e", it, gap)
    return QpSolution(lam=lam, p=-(G.T @ lam), dual_obj=dual_objective(G, f, lam), gap=gap,
                      iterations=it)


def _compositions(N: int, R: int) -> np.ndarray:
    """Integer vectors of length N, entries >= 0, summing to R."""
    if N == 1:
        return np.array([[R]])
    if N == 2:
        a = np.arange(R + 1)
        return np.column_stack([a, R - a])
    blocks = []
    for first in range(R + 1):
        rest = _compositions(N - 1, R - first)
        blocks.append(np.column_stack([np.full(len(rest), first), rest]))
    return np.vstack(blocks)


def brute_force_qp(G, f, grid_resolution: float = 1e-3) -> QpSolution:
    """Exhaustive search over a regular simplex grid. Test oracle only."""
    G, f = _check_inputs(G, f)
    N = f.size
    if N > 4:
        raise DimensionTooLarge(f"brute-force QP supports N <= 4, got N={N}")
    R = max(1, int(round(1.0 / grid_resolution)))
    grid = _compositions(N, R) / R
    q = grid @ G
    values = 0.5 * np.einsum("ij,ij->i", q, q) - grid @ f
    best = int(np.argmin(values))
    lam = grid[best]
    return QpSolution(lam=lam, p=-(G.T @ lam), dual_obj=float(values[best]),
                      gap=_fw_gap(G, f, lam))
