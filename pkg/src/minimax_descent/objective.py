"""Component families f_1..f_N and the max function built from them.

Indices are zero-based throughout: component ``j`` of a family with ``N``
components is addressed as ``0 <= j < N``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

DEFAULT_GRADIENT_TOL = 1e-6


class NonFiniteEvaluation(ArithmeticError):
    """A component value or gradient came back NaN or infinite."""

    def __init__(self, message, component=None):
        super().__init__(message)
        self.component = component


@dataclass(frozen=True)
class ObjectiveFamily:
    """N smooth functions of an n-vector, evaluated one component at a time.

    ``lower_bound`` and ``grad_lipschitz`` are metadata used by the test
    suite; the solver never reads them.
    """

    n: int
    N: int
    value: Callable[[int, np.ndarray], float]
    gradient: Callable[[int, np.ndarray], np.ndarray]
    lower_bound: Optional[float] = None
    grad_lipschitz: Optional[float] = None
    name: str = "family"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.n < 1 or self.N < 1:
            raise ValueError(f"need n >= 1 and N >= 1, got n={self.n}, N={self.N}")

    @classmethod
    def from_components(cls, values: Sequence[Callable], gradients: Sequence[Callable],
                        n: int, **kwargs) -> "ObjectiveFamily":
        """Build a family from per-component callables ``f(x)`` and ``grad(x)``."""
        if len(values) != len(gradients):
            raise ValueError("need one gradient per component")
        values = tuple(values)
        gradients = tuple(gradients)
        return cls(
            n=n,
            N=len(values),
            value=lambda j, x: values[j](x),
            gradient=lambda j, x: gradients[j](x),
            **kwargs,
        )

    def eval_component(self, j: int, x) -> float:
        return float(self.value(j, _as_point(x, self.n)))

    def grad_component(self, j: int, x) -> np.ndarray:
        g = np.asarray(self.gradient(j, _as_point(x, self.n)), dtype=float).reshape(-1)
        if g.shape != (self.n,):
            raise ValueError(f"gradient of component {j} has shape {g.shape}, expected ({self.n},)")
        return g


@dataclass(frozen=True)
class EvalSnapshot:
    """Values ``f`` (N,), gradients ``G`` (N, n) and ``phi = max(f)`` at ``x``."""

    x: np.ndarray
    f: np.ndarray
    G: np.ndarray
    phi: float


@dataclass(frozen=True)
class ActiveSet:
    indices: frozenset
    tol: float

    def __len__(self):
        return len(self.indices)

    def __contains__(self, j):
        return j in self.indices

    def sorted(self) -> list:
        return sorted(self.indices)


def _as_point(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (n,):
        raise ValueError(f"point has dimension {x.size}, expected {n}")
    return x


def _values(family: ObjectiveFamily, x: np.ndarray) -> np.ndarray:
    f = np.empty(family.N)
    for j in range(family.N):
        f[j] = family.eval_component(j, x)
        if not np.isfinite(f[j]):
            raise NonFiniteEvaluation(f"f_{j}(x) = {f[j]}", component=j)
    return f


def snapshot(family: ObjectiveFamily, x) -> EvalSnapshot:
    """Evaluate every component and gradient once, in ascending order."""
    x = _as_point(x, family.n).copy()
    f = _values(family, x)
    G = np.empty((family.N, family.n))
    for j in range(family.N):
        G[j] = family.grad_component(j, x)
        if not np.all(np.isfinite(G[j])):
            raise NonFiniteEvaluation(f"gradient of f_{j} is not finite", component=j)
    x.setflags(write=False)
    f.setflags(write=False)
    G.setflags(write=False)
    return EvalSnapshot(x=x, f=f, G=G, phi=float(np.max(f)))


def phi(family: ObjectiveFamily, x) -> float:
    """Pointwise maximum of the components at ``x``."""
    return float(np.max(_values(family, _as_point(x, family.n))))


def default_active_tol(phi_value: float) -> float:
    return 1e-9 * max(1.0, abs(phi_value))


def active_set(snap: EvalSnapshot, tol: Optional[float] = 0.0) -> ActiveSet:
    """Indices whose value is within ``tol`` of the maximum.

    ``tol=None`` selects the default relative tolerance. ``tol=0`` gives the
    exact argmax set.
    """
    if tol is None:
        tol = default_active_tol(snap.phi)
    if tol < 0:
        raise ValueError(f"active-set tolerance must be >= 0, got {tol}")
    idx = np.flatnonzero(snap.phi - snap.f <= tol)
    return ActiveSet(indices=frozenset(int(j) for j in idx), tol=float(tol))


def directional_derivative(snap: EvalSnapshot, active: ActiveSet, d) -> float:
    """max over the active set of <grad f_j(x), d>."""
    if len(active) == 0:
        raise ValueError("active set is empty")
    d = np.asarray(d, dtype=float).reshape(-1)
    rows = snap.G[active.sorted()]
    return float(np.max(rows @ d))


@dataclass
class GradientReport:
    """Worst mixed absolute/relative error per component.

    The error for component j is ``max_i |a_i - b_i| / max(1, |a|_inf, |b|_inf)``
    where ``a`` is the analytic gradient and ``b`` the central difference, taken
    over all checked points.
    """

    errors: np.ndarray
    tol: float = DEFAULT_GRADIENT_TOL
    worst_point: list = field(default_factory=list)

    @property
    def worst(self) -> float:
        return float(np.max(self.errors))

    @property
    def passed(self) -> bool:
        return bool(np.all(self.errors <= self.tol))

    def failing(self) -> list:
        return [int(j) for j in np.flatnonzero(self.errors > self.tol)]


def finite_difference_gradient(func: Callable[[np.ndarray], float], x: np.ndarray, h: float) -> np.ndarray:
    """Central differences (f(x + h e_i) - f(x - h e_i)) / 2h."""
    g = np.empty(x.size)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (func(xp) - func(xm)) / (2.0 * h)
    return g


def check_gradients(family: ObjectiveFamily, x, step: Optional[float] = None,
                    tol: float = DEFAULT_GRADIENT_TOL) -> GradientReport:
    """Compare analytic gradients with central differences at one or more points.

    ``x`` may be a single point or a (k, n) array of points. The default step
    is ``1e-6 * max(1, |x|_inf)`` per point.
    """
    points = np.atleast_2d(np.asarray(x, dtype=float))
    if points.shape[1] != family.n:
        raise ValueError(f"points have dimension {points.shape[1]}, expected {family.n}")
    if step is not None and step <= 0:
        raise ValueError(f"finite-difference step must be positive, got {step}")

    errors = np.zeros(family.N)
    worst_point = [None] * family.N
    for xk in points:
        h = step if step is not None else 1e-6 * max(1.0, float(np.max(np.abs(xk))))
        for j in range(family.N):
            analytic = family.grad_component(j, xk)
            numeric = finite_difference_gradient(lambda z: family.eval_component(j, z), xk, h)
            if not (np.all(np.isfinite(analytic)) and np.all(np.isfinite(numeric))):
                raise NonFiniteEvaluation(f"non-finite gradient for component {j}", component=j)
            scale = max(1.0, float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))))
            err = float(np.max(np.abs(analytic - numeric))) / scale
            if err > errors[j] or worst_point[j] is None:
                errors[j] = max(errors[j], err)
                worst_point[j] = xk.copy()
    return GradientReport(errors=errors, tol=tol, worst_point=worst_point)
