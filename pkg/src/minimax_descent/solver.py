"""Descent method for min_x max_j f_j(x).

Each outer iteration linearizes every component at x_k, solves the simplex
QP for the direction p_k = -G' lam, normalizes it, and backtracks along it
with a strict Armijo test on the max function.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .objective import (
    EvalSnapshot,
    NonFiniteEvaluation,
    ObjectiveFamily,
    active_set,
    default_active_tol,
    directional_derivative,
    phi,
    snapshot,
)
from .simplex_qp import DEFAULT_DELTA, MaxQpIterations, QpSolution, solve_simplex_qp

logger = logging.getLogger(__name__)

# |p|^2 below this many ulps of |phi| cannot be certified by an Armijo test on phi
ROUNDOFF_FACTOR = 1e3

TRACE_FIELDS = ("k", "phi", "p_norm", "qp_gap", "alpha", "ls_steps", "dir_deriv", "active_count")


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_ITERATIONS = "MaxIterations"
    LINE_SEARCH_STALLED = "LineSearchStalled"
    QP_FAILURE = "QpFailure"

    def __str__(self):
        return self.value


class LineSearchStalled(RuntimeError):
    def __init__(self, message, steps=None):
        super().__init__(message)
        self.steps = steps


class QpFailure(RuntimeError):
    pass


@dataclass
class SolverConfig:
    """Tolerances and caps for :func:`solve`.

    ``active_tol=None`` means the relative default ``1e-9 * max(1, |phi|)``.
    ``x0=None`` starts from the origin.

    With ``roundoff_stop`` a stalled line search counts as convergence when
    ``|p|`` is already at the resolution of phi, see :func:`precision_floor`.
    """

    epsilon: float = 1e-8
    delta: float = DEFAULT_DELTA
    c: float = 0.5
    sigma: float = 0.5
    j_max: int = 60
    k_max: int = 10_000
    active_tol: Optional[float] = None
    x0: Optional[np.ndarray] = None
    roundoff_stop: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not 0.0 < self.c < 1.0:
            raise ValueError(f"c must lie in (0, 1), got {self.c}")
        if not 0.0 < self.sigma < 1.0:
            raise ValueError(f"sigma must lie in (0, 1), got {self.sigma}")
        if not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if not self.delta > 0.0:
            raise ValueError(f"delta must be > 0, got {self.delta}")
        if int(self.j_max) != self.j_max or self.j_max < 1:
            raise ValueError(f"j_max must be an integer >= 1, got {self.j_max}")
        if int(self.k_max) != self.k_max or self.k_max < 1:
            raise ValueError(f"k_max must be an integer >= 1, got {self.k_max}")
        if self.active_tol is not None and not self.active_tol >= 0.0:
            raise ValueError(f"active_tol must be >= 0, got {self.active_tol}")

    def start(self, n: int) -> np.ndarray:
        if self.x0 is None:
            return np.zeros(n)
        x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if x0.shape != (n,):
            raise ValueError(f"x0 has dimension {x0.size}, expected {n}")
        return x0.copy()


@dataclass(frozen=True)
class TraceRecord:
    k: int
    phi: float
    p_norm: float
    qp_gap: float
    alpha: float
    ls_steps: int
    dir_deriv: float
    active_count: int


@dataclass
class SolveResult:
    x_final: np.ndarray
    status: Status
    trace: list = field(default_factory=list)
    stationarity: float = math.nan
    phi_final: float = math.nan
    tolerance: float = math.nan
    message: str = ""

    @property
    def iterations(self) -> int:
        return len(self.trace)


def direction(snap: EvalSnapshot, delta: float = DEFAULT_DELTA, epsilon: float = 0.0,
              warm_start=None):
    """QP direction p, its normalization d (zero when |p| <= epsilon) and the QP solution."""
    try:
        qp = solve_simplex_qp(snap.G, snap.f, delta, warm_start=warm_start)
    except MaxQpIterations as exc:
        raise QpFailure(str(exc)) from exc
    p = qp.p
    norm = float(np.linalg.norm(p))
    if norm <= epsilon or norm == 0.0:
        d = np.zeros_like(p)
    else:
        d = p / norm
    return p, d, qp


def line_search(family: ObjectiveFamily, x, d, dir_deriv: float, c: float = 0.5,
                sigma: float = 0.5, j_max: int = 60, phi_x: Optional[float] = None):
    """First alpha = sigma**j with phi(x + alpha d) < phi(x) + c alpha dir_deriv.

    Trial points whose evaluation is not finite are rejected. Raises
    :class:`LineSearchStalled` once ``j`` reaches ``j_max``.
    """
    if not dir_deriv < 0.0:
        raise ValueError(f"line search needs a descent direction, got dir_deriv={dir_deriv}")
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    if phi_x is None:
        phi_x = phi(family, x)
    for j in range(j_max):
        alpha = sigma ** j
        try:
            trial = phi(family, x + alpha * d)
        except NonFiniteEvaluation:
            continue
        if trial < phi_x + c * alpha * dir_deriv:
            return alpha, j
    raise LineSearchStalled(
        f"no Armijo step within {j_max} backtracks (dir_deriv={dir_deriv:.3e})", steps=j_max)


def precision_floor(phi_value: float, qp_gap: float = 0.0) -> float:
    """Smallest |p| whose Armijo decrease is resolvable in double precision.

    The decrease available along a normalized direction scales like |p|^2,
    while phi itself is only known to about eps * |phi|.
    """
    eps = np.finfo(float).eps
    return math.sqrt(max(ROUNDOFF_FACTOR * eps * max(1.0, abs(phi_value)), 2.0 * qp_gap))


@dataclass
class StepOutcome:
    x: np.ndarray
    record: TraceRecord
    status: Optional[Status]
    qp: QpSolution
    p: np.ndarray
    d: np.ndarray
    tolerance: float = math.nan


def step(family: ObjectiveFamily, x, config: SolverConfig, k: int = 0,
         warm_lambda=None) -> StepOutcome:
    """One outer iteration from ``x``.

    ``status`` on the outcome is ``Status.CONVERGED`` when |p| <= epsilon, or
    when the line search stalls with |p| under :func:`precision_floor` and
    ``config.roundoff_stop`` is set; ``x`` is then returned unchanged.
    Otherwise ``status`` is None and ``x`` is the accepted trial point.
    """
    snap = snapshot(family, x)
    p, d, qp = direction(snap, config.delta, config.epsilon, warm_start=warm_lambda)
    p_norm = float(np.linalg.norm(p))
    tol = config.active_tol if config.active_tol is not None else default_active_tol(snap.phi)
    # every j within tol of the max has <G_j, p> <= tol - |p|^2 (+ QP gap), so
    # tol <= |p|^2 / 2 keeps the relaxed directional derivative negative
    tol = min(tol, 0.5 * p_norm * p_norm)
    act = active_set(snap, tol)

    if p_norm <= config.epsilon:
        record = TraceRecord(k=k, phi=snap.phi, p_norm=p_norm, qp_gap=qp.gap, alpha=0.0,
                             ls_steps=0, dir_deriv=0.0, active_count=len(act))
        return StepOutcome(x=np.array(snap.x), record=record, status=Status.CONVERGED, qp=qp,
                           p=p, d=d, tolerance=config.epsilon)

    dd = directional_derivative(snap, act, d)
    try:
        if not dd < 0.0:
            raise LineSearchStalled(
                f"QP direction is not a descent direction (dir_deriv={dd:.3e})", steps=0)
        alpha, j = line_search(family, snap.x, d, dd, config.c, config.sigma, config.j_max,
                               phi_x=snap.phi)
    except LineSearchStalled as err:
        record = TraceRecord(k=k, phi=snap.phi, p_norm=p_norm, qp_gap=qp.gap, alpha=0.0,
                             ls_steps=err.steps, dir_deriv=dd, active_count=len(act))
        floor = precision_floor(snap.phi, qp.gap)
        if config.roundoff_stop and p_norm <= floor:
            return StepOutcome(x=np.array(snap.x), record=record, status=Status.CONVERGED, qp=qp,
                               p=p, d=d, tolerance=floor)
        err.record = record
        raise
    record = TraceRecord(k=k, phi=snap.phi, p_norm=p_norm, qp_gap=qp.gap, alpha=alpha,
                         ls_steps=j, dir_deriv=dd, active_count=len(act))
    return StepOutcome(x=snap.x + alpha * d, record=record, status=None, qp=qp, p=p, d=d)


def stationarity_measure(family: ObjectiveFamily, x, delta: float = DEFAULT_DELTA) -> float:
    """Norm of the QP direction at ``x``; zero exactly at stationary points."""
    p, _, _ = direction(snapshot(family, x), delta)
    return float(np.linalg.norm(p))


def solve(family: ObjectiveFamily, config: Optional[SolverConfig] = None,
          callback=None) -> SolveResult:
    """Run outer iterations until convergence, the iteration cap, or a failure.

    Failures never raise: they end the run with a non-converged status and
    the trace collected so far. ``callback(x_k, outcome)`` is called after
    every completed iteration with the iterate the step started from.
    """
    config = config or SolverConfig()
    config.validate()
    x = config.start(family.n)
    trace = []
    warm = None

    for k in range(int(config.k_max)):
        try:
            out = step(family, x, config, k=k, warm_lambda=warm)
        except LineSearchStalled as err:
            rec = getattr(err, "record", None)
            if rec is not None:
                trace.append(rec)
            logger.warning("iteration %d: %s", k, err)
            return SolveResult(x_final=x, status=Status.LINE_SEARCH_STALLED, trace=trace,
                               stationarity=rec.p_norm if rec else math.nan,
                               phi_final=_safe_phi(family, x), message=str(err))
        except (QpFailure, NonFiniteEvaluation) as err:
            logger.warning("iteration %d: %s", k, err)
            return SolveResult(x_final=x, status=Status.QP_FAILURE, trace=trace,
                               phi_final=_safe_phi(family, x), message=str(err))
        trace.append(out.record)
        if callback is not None:
            callback(x, out)
        warm = out.qp.lam
        if out.status is Status.CONVERGED:
            msg = "" if out.tolerance == config.epsilon else (
                f"stopped at working precision: |p|={out.record.p_norm:.3e} <= {out.tolerance:.3e}")
            logger.info("converged after %d iterations, phi=%.17g", k, out.record.phi)
            return SolveResult(x_final=out.x, status=Status.CONVERGED, trace=trace,
                               stationarity=out.record.p_norm, phi_final=out.record.phi,
                               tolerance=out.tolerance, message=msg)
        x = out.x

    try:
        stat = stationarity_measure(family, x, config.delta)
    except (QpFailure, NonFiniteEvaluation):
        stat = math.nan
    return SolveResult(x_final=x, status=Status.MAX_ITERATIONS, trace=trace, stationarity=stat,
                       phi_final=_safe_phi(family, x), message=f"reached k_max={config.k_max}")


def _safe_phi(family, x) -> float:
    try:
        return phi(family, x)
    except NonFiniteEvaluation:
        return math.nan


def format_float(v: float) -> str:
    return format(float(v), ".17g")


def write_trace(trace, path_or_file):
    """Write trace records as comma-separated lines with a fixed header."""
    lines = [",".join(TRACE_FIELDS)]
    for r in trace:
        lines.append(",".join([
            str(r.k), format_float(r.phi), format_float(r.p_norm), format_float(r.qp_gap),
            format_float(r.alpha), str(r.ls_steps), format_float(r.dir_deriv),
            str(r.active_count),
        ]))
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w", newline="") as fh:
            fh.write(text)


def read_trace(path) -> list:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != TRACE_FIELDS:
            raise ValueError(f"unexpected trace header {header}")
        out = []
        for line in fh:
            if not line.strip():
                continue
            k, ph, pn, gap, alpha, ls, dd, ac = line.strip().split(",")
            out.append(TraceRecord(int(k), float(ph), float(pn), float(gap), float(alpha),
                                   int(ls), float(dd), int(ac)))
    return out
