"""
Convex Surrogate Subproblems for the CSSCA optimizer.

Every cost k is modelled around the anchor theta_i by the isotropic
quadratic f_k(theta) = f_hat_k + g_hat_k . d + zeta_k |d|^2, d = theta - theta_i.
For any nonnegative weighting of these quadratics the box-constrained
minimizer is a clipped closed form, so both subproblems are solved in the
Lagrange dual: the objective update by projected Newton ascent on the
multipliers, the feasible update by projected gradient ascent over the
simplex of constraint weights.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import scipy.linalg

from ..utils.errors import ConvergenceError, ShapeError

logger = logging.getLogger(__name__)

OBJECTIVE = "objective"
FEASIBLE = "feasible"

# Armijo sufficient-increase constant
_ARMIJO = 1e-4
_MAX_HALVINGS = 60


@dataclass
class SurrogateSet:
    """Quadratic surrogates of the objective (k = 0) and the K constraints."""

    anchor: np.ndarray
    f_hat: np.ndarray
    g_hat: np.ndarray
    zeta: np.ndarray

    def __post_init__(self):
        self.anchor = np.asarray(self.anchor, dtype=float)
        self.f_hat = np.atleast_1d(np.asarray(self.f_hat, dtype=float))
        self.g_hat = np.atleast_2d(np.asarray(self.g_hat, dtype=float))
        self.zeta = np.broadcast_to(np.asarray(self.zeta, dtype=float), self.f_hat.shape).copy()
        n = self.anchor.size
        if self.g_hat.shape != (self.f_hat.size, n):
            raise ShapeError(
                f"gradient estimates of shape {self.g_hat.shape}, expected ({self.f_hat.size}, {n})"
            )
        if np.any(~(self.zeta > 0)):
            raise ValueError(f"surrogate curvatures must be positive, got {self.zeta}")
        if not np.all(np.isfinite(self.f_hat)) or not np.all(np.isfinite(self.g_hat)):
            raise ValueError("surrogate estimates must be finite")

    @property
    def num_constraints(self) -> int:
        return self.f_hat.size - 1

    def _at_offset(self, d: np.ndarray) -> np.ndarray:
        return self.f_hat + self.g_hat @ d + self.zeta * float(d @ d)

    def value(self, theta: np.ndarray) -> np.ndarray:
        """[f_0(theta), ..., f_K(theta)]."""
        return self._at_offset(np.asarray(theta, dtype=float) - self.anchor)

    def gradient(self, theta: np.ndarray) -> np.ndarray:
        """(K+1, n) gradients g_hat_k + 2 zeta_k d."""
        d = np.asarray(theta, dtype=float) - self.anchor
        return self.g_hat + 2.0 * self.zeta[:, None] * d[None, :]


def build_surrogates(anchor, f_hat, g_hat, zeta=1.0) -> SurrogateSet:
    """Surrogates anchored at theta_i from the recursive estimates."""
    return SurrogateSet(anchor=anchor, f_hat=f_hat, g_hat=g_hat, zeta=zeta)


@dataclass(frozen=True)
class ThetaBox:
    """Axis-aligned parameter box [lo, hi]."""

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def symmetric(cls, bound: float, dim: int) -> "ThetaBox":
        return cls(np.full(dim, -float(bound)), np.full(dim, float(bound)))

    def contains(self, theta: np.ndarray, atol: float = 0.0) -> bool:
        return bool(np.all(theta >= self.lo - atol) and np.all(theta <= self.hi + atol))

    def clip(self, theta: np.ndarray) -> np.ndarray:
        return np.clip(theta, self.lo, self.hi)


@dataclass
class SubproblemResult:
    """Solution of one surrogate subproblem."""

    theta: np.ndarray
    branch: str
    iterations: int
    max_violation: float        # max_k f_k(theta), k >= 1
    value: float                # f_0(theta) or the min-max value
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass
class Infeasible:
    """The objective subproblem has no feasible point; carries the feasible-update solution."""

    certificate: SubproblemResult

    @property
    def iterations(self) -> int:
        return self.certificate.iterations


@dataclass
class _DualPoint:
    weights: np.ndarray
    d: np.ndarray
    free: np.ndarray
    curvature: float
    values: np.ndarray          # constraint surrogates at d
    q: float


def _weighted_minimizer(g: np.ndarray, c: float, lo: np.ndarray, hi: np.ndarray):
    """argmin_{lo <= d <= hi} g.d + c |d|^2 (separable, so clipping is exact)."""
    u = -g / (2.0 * c)
    d = np.clip(u, lo, hi)
    return d, (u > lo) & (u < hi)


def _jacobian_gram(s: SurrogateSet, point: _DualPoint) -> np.ndarray:
    """J J^T / (2c) over the unclipped coordinates; the negated dual Hessian."""
    d_free = point.d[point.free]
    J = s.g_hat[1:, point.free] + 2.0 * s.zeta[1:, None] * d_free[None, :]
    return (J @ J.T) / (2.0 * point.curvature)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {w >= 0, sum w = 1}."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    cond = u - css / idx > 0
    rho = idx[cond][-1]
    tau = css[cond][-1] / rho
    return np.maximum(v - tau, 0.0)


def _project_orthant(v: np.ndarray) -> np.ndarray:
    return np.maximum(v, 0.0)


def _arc_search(
    point: _DualPoint,
    direction: np.ndarray,
    step: float,
    project: Callable[[np.ndarray], np.ndarray],
    evaluate: Callable[[np.ndarray], _DualPoint],
) -> Optional[_DualPoint]:
    """Armijo backtracking along the projection arc; None unless the dual strictly increases."""
    for _ in range(_MAX_HALVINGS):
        weights = project(point.weights + step * direction)
        candidate = evaluate(weights)
        if candidate.q >= point.q + _ARMIJO * float(point.values @ (weights - point.weights)):
            return candidate if candidate.q > point.q else None
        step *= 0.5
    return None


def _damped(gram: np.ndarray) -> np.ndarray:
    return gram + 1e-12 * (np.trace(gram) + 1.0) * np.eye(gram.shape[0])


def _gradient_step(gram: np.ndarray) -> float:
    lipschitz = float(np.trace(gram))
    return 1.0 / lipschitz if lipschitz > 0 else 1.0


def solve_feasible_update(
    s: SurrogateSet,
    box: ThetaBox,
    max_iter: int = 5000,
    tol: float = 1e-6,
) -> SubproblemResult:
    """
    min_theta max_{k >= 1} f_k(theta) over the box.

    Dual ascent over simplex weights w: for fixed w the minimizer of
    sum_k w_k f_k is closed form. Newton steps on the face spanned by the
    active weights, projected-gradient fallback. Stops when the best primal
    value and the best dual bound are within tol; never returns a point
    worse than the anchor.

    Raises:
        ConvergenceError: if the gap does not close within max_iter
    """
    K = s.num_constraints
    lo, hi = box.lo - s.anchor, box.hi - s.anchor
    if K == 0:
        return SubproblemResult(s.anchor.copy(), FEASIBLE, 0, -np.inf, -np.inf)

    f_c, g_c, z_c = s.f_hat[1:], s.g_hat[1:], s.zeta[1:]

    def evaluate(w: np.ndarray) -> _DualPoint:
        c = float(w @ z_c)
        d, free = _weighted_minimizer(w @ g_c, c, lo, hi)
        values = f_c + g_c @ d + z_c * float(d @ d)
        return _DualPoint(w, d, free, c, values, float(w @ values))

    best_d = np.zeros_like(s.anchor)
    best_p = float(f_c.max())
    best_q = -np.inf
    point = evaluate(np.full(K, 1.0 / K))

    for it in range(1, max_iter + 1):
        p = float(point.values.max())
        if p < best_p:
            best_p, best_d = p, point.d.copy()
        best_q = max(best_q, point.q)
        if best_p - best_q <= tol * max(1.0, abs(best_p)):
            return SubproblemResult(
                theta=s.anchor + best_d,
                branch=FEASIBLE,
                iterations=it,
                max_violation=best_p,
                value=best_p,
                multipliers=point.weights.copy(),
            )

        gram = _jacobian_gram(s, point)
        idx = np.flatnonzero((point.weights > 0) | (point.values > point.q))
        candidate = None
        if idx.size >= 2:
            m = idx.size
            kkt = np.zeros((m + 1, m + 1))
            kkt[:m, :m] = _damped(gram[np.ix_(idx, idx)])
            kkt[:m, m] = kkt[m, :m] = 1.0
            try:
                sol = scipy.linalg.solve(kkt, np.append(point.values[idx], 0.0))
            except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
                sol = None
            if sol is not None and np.all(np.isfinite(sol)):
                direction = np.zeros(K)
                direction[idx] = sol[:m]
                if point.values @ direction > 0:
                    candidate = _arc_search(point, direction, 1.0, project_simplex, evaluate)
        if candidate is None:
            candidate = _arc_search(
                point, point.values, _gradient_step(gram), project_simplex, evaluate
            )
        if candidate is None:
            break
        point = candidate

    raise ConvergenceError(
        "feasible update did not close its duality gap",
        {"iterations": max_iter, "primal": best_p, "dual": best_q, "constraints": K},
    )


def solve_objective_update(
    s: SurrogateSet,
    box: ThetaBox,
    max_iter: int = 5000,
    tol: float = 1e-6,
) -> Union[SubproblemResult, Infeasible]:
    """
    min f_0(theta) s.t. f_k(theta) <= 0 (k >= 1), theta in the box.

    The feasible update runs first as a certificate: a min-max value above
    -tol returns ``Infeasible``. Otherwise the multipliers are updated by
    projected Newton ascent on the dual (Hessian -J J^T / 2c, Armijo
    search along the projection arc, projected-gradient fallback) until
    the primal point violates no constraint by more than tol and
    complementary slackness holds within tol.

    Raises:
        ConvergenceError: if the stopping test is not met within max_iter
    """
    K = s.num_constraints
    lo, hi = box.lo - s.anchor, box.hi - s.anchor

    if K == 0:
        d, _ = _weighted_minimizer(s.g_hat[0], s.zeta[0], lo, hi)
        return SubproblemResult(
            s.anchor + d, OBJECTIVE, 0, -np.inf, float(s._at_offset(d)[0])
        )

    certificate = solve_feasible_update(s, box, max_iter, tol)
    if certificate.max_violation > -tol:
        return Infeasible(certificate)

    f_c, g_c, z_c = s.f_hat[1:], s.g_hat[1:], s.zeta[1:]

    def evaluate(lam: np.ndarray) -> _DualPoint:
        c = float(s.zeta[0] + lam @ z_c)
        d, free = _weighted_minimizer(s.g_hat[0] + lam @ g_c, c, lo, hi)
        dd = float(d @ d)
        values = f_c + g_c @ d + z_c * dd
        f0 = float(s.f_hat[0] + s.g_hat[0] @ d + s.zeta[0] * dd)
        return _DualPoint(lam, d, free, c, values, f0 + float(lam @ values))

    point = evaluate(np.zeros(K))
    for it in range(1, max_iter + 1):
        violation = float(point.values.max())
        slack = abs(float(point.weights @ point.values))
        if violation <= tol and slack <= tol:
            return SubproblemResult(
                theta=s.anchor + point.d,
                branch=OBJECTIVE,
                iterations=it,
                max_violation=violation,
                value=float(point.q - point.weights @ point.values),
                multipliers=point.weights.copy(),
            )

        gram = _jacobian_gram(s, point)
        active = (point.weights > 0) | (point.values > 0)
        candidate = None
        if np.any(active):
            direction = np.zeros(K)
            try:
                direction[active] = scipy.linalg.solve(
                    _damped(gram[np.ix_(active, active)]), point.values[active], assume_a="pos"
                )
            except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
                direction[active] = point.values[active]
            if point.values @ direction > 0:
                candidate = _arc_search(point, direction, 1.0, _project_orthant, evaluate)
        if candidate is None:
            candidate = _arc_search(
                point, point.values, _gradient_step(gram), _project_orthant, evaluate
            )
        if candidate is None:
            break
        point = candidate

    raise ConvergenceError(
        "objective update did not meet its stopping test",
        {
            "iterations": max_iter,
            "violation": float(point.values.max()),
            "slack": float(point.weights @ point.values),
            "multipliers": np.round(point.weights, 6).tolist(),
        },
    )


def mix_theta(theta_prev: np.ndarray, theta_bar: np.ndarray, mu: float) -> np.ndarray:
    """(1 - mu) theta_prev + mu theta_bar."""
    if not 0.0 <= mu <= 1.0:
        raise ValueError(f"mixing weight must lie in [0, 1], got {mu}")
    return (1.0 - mu) * np.asarray(theta_prev, dtype=float) + mu * np.asarray(theta_bar, dtype=float)
