"""Built-in minimax problems and the worst-group regression objective."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .objective import ObjectiveFamily


class DimensionMismatch(ValueError):
    pass


def square() -> ObjectiveFamily:
    """Single component x**2 in one dimension."""
    return ObjectiveFamily.from_components(
        [lambda x: float(x[0] ** 2)], [lambda x: np.array([2.0 * x[0]])],
        n=1, lower_bound=0.0, grad_lipschitz=2.0, name="square")


def two_parabolas(shift: float = 1.0) -> ObjectiveFamily:
    """{(x - shift)^2, (x + shift)^2}; minimax point 0 with value shift^2."""
    return ObjectiveFamily.from_components(
        [lambda x: float((x[0] - shift) ** 2), lambda x: float((x[0] + shift) ** 2)],
        [lambda x: np.array([2.0 * (x[0] - shift)]), lambda x: np.array([2.0 * (x[0] + shift)])],
        n=1, lower_bound=0.0, grad_lipschitz=2.0, name="two_parabolas")


def demyanov_malozemov() -> ObjectiveFamily:
    """Classic nonsmooth benchmark in two variables, minimizer (0, -3), value -3.

    f1 = 5 x1 + x2,  f2 = -5 x1 + x2,  f3 = x1^2 + x2^2 + 4 x2
    """
    values = [
        lambda x: float(5.0 * x[0] + x[1]),
        lambda x: float(-5.0 * x[0] + x[1]),
        lambda x: float(x[0] ** 2 + x[1] ** 2 + 4.0 * x[1]),
    ]
    grads = [
        lambda x: np.array([5.0, 1.0]),
        lambda x: np.array([-5.0, 1.0]),
        lambda x: np.array([2.0 * x[0], 2.0 * x[1] + 4.0]),
    ]
    return ObjectiveFamily.from_components(values, grads, n=2, grad_lipschitz=2.0,
                                           name="demyanov_malozemov")


def quadratic_family(seed: int, N: int, n: int) -> ObjectiveFamily:
    """Strictly convex components 0.5 (x - b_j)' A_j (x - b_j) + c_j.

    Each A_j is a random rotation of a diagonal with entries drawn from
    [0.5, 2], so every gradient is 2-Lipschitz. Centers are drawn from
    [-2, 2]^n and offsets from [-1, 1].
    """
    if N < 1 or n < 1:
        raise ValueError(f"need N, n >= 1, got N={N}, n={n}")
    rng = np.random.default_rng(seed)
    A = np.empty((N, n, n))
    for j in range(N):
        Qm, R = np.linalg.qr(rng.standard_normal((n, n)))
        Qm = Qm * np.sign(np.diag(R))
        eig = rng.uniform(0.5, 2.0, size=n)
        A[j] = (Qm * eig) @ Qm.T
        A[j] = 0.5 * (A[j] + A[j].T)
    b = rng.uniform(-2.0, 2.0, size=(N, n))
    c = rng.uniform(-1.0, 1.0, size=N)
    return _quadratics(A, b, c, name=f"quadratic(seed={seed}, N={N}, n={n})")


def _quadratics(A, b, c, name="quadratics") -> ObjectiveFamily:
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    N, n = b.shape

    def value(j, x):
        r = x - b[j]
        return float(0.5 * r @ A[j] @ r + c[j])

    def gradient(j, x):
        return A[j] @ (x - b[j])

    lip = float(max(np.linalg.eigvalsh(A[j]).max() for j in range(N)))
    return ObjectiveFamily(n=n, N=N, value=value, gradient=gradient,
                           lower_bound=float(c.min()), grad_lipschitz=max(lip, 2.0), name=name,
                           meta={"A": A, "b": b, "c": c, "strictly_convex": True})


@dataclass(frozen=True)
class GroupedDataset:
    """Samples split into groups; ``features[j]`` is (n_j, m), ``targets[j]`` is (n_j,)."""

    features: tuple
    targets: tuple

    def __post_init__(self):
        if len(self.features) == 0 or len(self.features) != len(self.targets):
            raise ValueError("need at least one group and one target array per group")
        m = None
        for j, (X, y) in enumerate(zip(self.features, self.targets)):
            if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
                raise ValueError(f"group {j}: features must be (n_j, m) and targets (n_j,)")
            if X.shape[0] < 1:
                raise ValueError(f"group {j} is empty")
            if m is None:
                m = X.shape[1]
            elif X.shape[1] != m:
                raise DimensionMismatch(f"group {j} has {X.shape[1]} features, expected {m}")

    @classmethod
    def from_arrays(cls, groups: Sequence) -> "GroupedDataset":
        """From a sequence of ``(X, y)`` pairs."""
        feats, targs = [], []
        for X, y in groups:
            X = np.asarray(X, dtype=float)
            if X.ndim == 1:
                X = X.reshape(-1, 1)
            feats.append(X)
            targs.append(np.asarray(y, dtype=float).reshape(-1))
        return cls(tuple(feats), tuple(targs))

    @property
    def N(self) -> int:
        return len(self.features)

    @property
    def m(self) -> int:
        return self.features[0].shape[1]

    @property
    def sizes(self) -> tuple:
        return tuple(X.shape[0] for X in self.features)

    def pooled(self):
        return np.vstack(self.features), np.concatenate(self.targets)


@dataclass(frozen=True)
class RegressionModel:
    """Feature map for g(x) = theta' phi(x).

    ``linear``: phi(x) = x, no intercept.
    ``polynomial``: phi(x) = (1, x, x**2, ..., x**degree) with powers taken
    per feature, so the dimension is 1 + m * degree.
    """

    kind: str = "linear"
    degree: int = 1

    def __post_init__(self):
        if self.kind not in ("linear", "polynomial"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind == "polynomial" and (int(self.degree) != self.degree or self.degree < 1):
            raise ValueError(f"polynomial degree must be an integer >= 1, got {self.degree}")

    def dimension(self, m: int) -> int:
        return m if self.kind == "linear" else 1 + m * int(self.degree)

    def design(self, X: np.ndarray) -> np.ndarray:
        if self.kind == "linear":
            return X
        cols = [np.ones((X.shape[0], 1))]
        for k in range(1, int(self.degree) + 1):
            cols.append(X ** k)
        return np.hstack(cols)


def maxmean_objective(dataset: GroupedDataset, model: RegressionModel = RegressionModel()
                      ) -> ObjectiveFamily:
    """Worst-group mean squared residual: f_j(theta) = mean_l (g(x_jl) - y_jl)^2.

    The Lipschitz metadata is the largest eigenvalue of 2 Z_j' Z_j / n_j over
    groups, Z_j being the group design matrix.
    """
    Z = [model.design(X) for X in dataset.features]
    y = list(dataset.targets)
    n = model.dimension(dataset.m)
    if any(Zj.shape[1] != n for Zj in Z):
        raise DimensionMismatch("design width does not match model dimension")

    grams = [Zj.T @ Zj / Zj.shape[0] for Zj in Z]
    min_eigs = [float(np.linalg.eigvalsh(Gj).min()) for Gj in grams]
    lip = max(2.0 * float(np.linalg.eigvalsh(Gj).max()) for Gj in grams)
    pooled = np.vstack(Z)
    pooled_min = float(np.linalg.eigvalsh(pooled.T @ pooled).min())

    def value(j, theta):
        r = Z[j] @ theta - y[j]
        return float(r @ r / r.size)

    def gradient(j, theta):
        r = Z[j] @ theta - y[j]
        return (2.0 / r.size) * (Z[j].T @ r)

    tol = 1e-12
    return ObjectiveFamily(
        n=n, N=dataset.N, value=value, gradient=gradient, lower_bound=0.0, grad_lipschitz=lip,
        name=f"maxmean({model.kind})",
        meta={
            "designs": Z,
            "targets": y,
            "convex": True,
            "strictly_convex": all(e > tol for e in min_eigs),
            "pooled_full_rank": pooled_min > tol,
        })


def pooled_least_squares(dataset: GroupedDataset, model: RegressionModel = RegressionModel()):
    """Ordinary least squares on all samples pooled together."""
    Z = np.vstack([model.design(X) for X in dataset.features])
    y = np.concatenate(dataset.targets)
    theta, *_ = np.linalg.lstsq(Z, y, rcond=None)
    return theta


def synthetic_groups(seed: int, N: int = 3, m: int = 2, sizes=20, noise: float = 0.1,
                     slope_spread: float = 1.0) -> GroupedDataset:
    """Groups sharing a base slope plus a group-specific perturbation."""
    rng = np.random.default_rng(seed)
    if np.isscalar(sizes):
        sizes = [int(sizes)] * N
    base = rng.standard_normal(m)
    groups = []
    for j in range(N):
        w = base + slope_spread * rng.standard_normal(m)
        X = rng.uniform(-1.0, 1.0, size=(sizes[j], m))
        yv = X @ w + noise * rng.standard_normal(sizes[j])
        groups.append((X, yv))
    return GroupedDataset.from_arrays(groups)


def subgradient_oracle(family: ObjectiveFamily, x0, steps: int = 10_000,
                       step_rule: str = "sqrt", step_scale: float = 1.0):
    """Plain subgradient descent on max_j f_j, returning the best point seen.

    Uses the gradient of the first maximizing component. ``step_rule``:
    ``"sqrt"``  moves ``step_scale / sqrt(t)`` along the normalized subgradient;
    ``"sqrt_raw"`` scales the raw subgradient by ``step_scale / sqrt(t)``.
    Independent of the QP-based solver; intended as a reference in tests.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if step_rule not in ("sqrt", "sqrt_raw"):
        raise ValueError(f"unknown step rule {step_rule!r}")
    x = np.array(x0, dtype=float).reshape(-1)
    best_x = x.copy()
    best = math.inf
    for t in range(1, steps + 1):
        vals = [family.eval_component(j, x) for j in range(family.N)]
        jstar = int(np.argmax(vals))
        cur = vals[jstar]
        if cur < best:
            best, best_x = cur, x.copy()
        g = family.grad_component(jstar, x)
        gn = float(np.linalg.norm(g))
        if gn == 0.0:
            break
        a = step_scale / math.sqrt(t)
        x = x - (a / gn) * g if step_rule == "sqrt" else x - a * g
    return best_x, best


BUILTIN = {
    "square": lambda **kw: square(),
    "two_parabolas": lambda **kw: two_parabolas(float(kw.get("shift", 1.0))),
    "demyanov_malozemov": lambda **kw: demyanov_malozemov(),
    "quadratic": lambda **kw: quadratic_family(int(kw.get("seed", 0)), int(kw.get("N", 3)),
                                               int(kw.get("n", 2))),
}
