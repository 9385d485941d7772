"""Lagrangian-side geometry on a velocity chart.

Legendre map, fibre hessian and its kernel, energy, and the Euler-Lagrange
operator.  Every evaluator accepts chart points whose coordinates are jets, so
the quantities computed here can be differentiated again further up the stack.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from .errors import DomainError, RankChangeError
from .jets import ChartPoint, Jet2, eval_gradient, eval_jet2, primal

__all__ = [
    "LagrangianModel",
    "SecondOrderField",
    "VerticalField",
    "zero_field",
    "legendre",
    "hessian_W",
    "kernel_basis",
    "kernel_rank",
    "check_constant_rank",
    "energy",
    "energy_identity_residual",
    "euler_lagrange",
    "KERNEL_TOL",
]

KERNEL_TOL = 1e-8


@dataclass(frozen=True)
class LagrangianModel:
    """A first-order autonomous Lagrangian ``L(q, v)`` on an ``n``-dimensional chart.

    ``domain(q, v)`` returns ``True`` where ``L`` is defined and smooth;
    ``oracles`` optionally maps names to closed-form reference evaluators.
    """

    n: int
    L: Callable
    name: str = "lagrangian"
    domain: Callable | None = None
    params: Mapping[str, float] = field(default_factory=dict)
    oracles: Mapping[str, Callable] = field(default_factory=dict)

    def contains(self, p: ChartPoint) -> bool:
        if p.n != self.n:
            return False
        if self.domain is None:
            return True
        pp = p.primal()
        return bool(self.domain(pp.q, pp.v))

    def check(self, p: ChartPoint) -> None:
        if p.n != self.n:
            raise ValueError(f"{self.name} has dimension {self.n}, point has {p.n}")
        if not self.contains(p):
            raise DomainError(f"{p.primal()} is outside the domain of {self.name}")

    def jet(self, p: ChartPoint) -> Jet2:
        self.check(p)
        return eval_jet2(self.L, p)


@dataclass(frozen=True)
class SecondOrderField:
    """Second-order vector field ``v ∂_q + accel(q, v) ∂_v``."""

    accel: Callable[[ChartPoint], np.ndarray]
    name: str = "X"

    def __call__(self, p: ChartPoint) -> np.ndarray:
        return self.accel(p)


@dataclass(frozen=True)
class VerticalField:
    """Vertical vector field ``comp(q, v) ∂_v``."""

    comp: Callable[[ChartPoint], np.ndarray]
    name: str = "Y"

    def __call__(self, p: ChartPoint) -> np.ndarray:
        return self.comp(p)


def zero_field(n: int) -> SecondOrderField:
    """The second-order field with zero acceleration, ``v ∂_q``."""
    return SecondOrderField(lambda p: np.zeros(n), name="X0")


def legendre(model: LagrangianModel, p: ChartPoint) -> np.ndarray:
    """Momentum ``∂L/∂v`` at ``p``."""
    model.check(p)
    _, _, grad_v = eval_gradient(model.L, p)
    return grad_v


def hessian_W(model: LagrangianModel, p: ChartPoint) -> np.ndarray:
    """Fibre hessian ``∂²L/∂v∂v`` at ``p``."""
    return model.jet(p).hess_vv


def kernel_basis(model: LagrangianModel, p: ChartPoint, tol: float = KERNEL_TOL) -> list[np.ndarray]:
    """Orthonormal basis of the numerical kernel of the fibre hessian.

    Singular vectors whose singular value is at most ``tol * σ_max`` span the
    kernel; every direction does when ``σ_max == 0``.  An empty list means the
    Lagrangian is regular at ``p``.
    """
    W = primal(hessian_W(model, p))
    _, s, vt = np.linalg.svd(W)
    smax = s[0] if s.size else 0.0
    if smax == 0.0:
        return [row.copy() for row in vt]
    return [vt[k].copy() for k in range(s.size) if s[k] <= tol * smax]


def kernel_rank(model: LagrangianModel, p: ChartPoint, tol: float = KERNEL_TOL) -> int:
    """Dimension of the kernel of the fibre hessian at ``p``."""
    return len(kernel_basis(model, p, tol))


def check_constant_rank(model: LagrangianModel, points: Iterable[ChartPoint], tol: float = KERNEL_TOL) -> int:
    """Kernel dimension shared by all ``points``; raise if it varies."""
    dims = {kernel_rank(model, p, tol) for p in points}
    if len(dims) > 1:
        raise RankChangeError(f"kernel dimension of the fibre hessian varies over samples: {sorted(dims)}")
    if not dims:
        raise ValueError("no sample points given")
    return dims.pop()


def energy(model: LagrangianModel, p: ChartPoint):
    """Lagrangian energy ``⟨∂L/∂v, v⟩ - L``."""
    model.check(p)
    val, _, grad_v = eval_gradient(model.L, p)
    return grad_v @ p.v - val


def energy_identity_residual(model: LagrangianModel, p: ChartPoint) -> float:
    """Max-norm of ``∂E/∂v - W·v``; vanishes for every smooth Lagrangian."""
    model.check(p)
    _, _, dE = eval_gradient(lambda q, v: energy(model, ChartPoint(q, v)), p)
    W = hessian_W(model, p)
    return float(np.max(np.abs(primal(dE - W @ p.v))))


def euler_lagrange(model: LagrangianModel, p: ChartPoint, accel, jet: Jet2 | None = None) -> np.ndarray:
    """Euler-Lagrange covector ``∂L/∂q - D_t(∂L/∂v)`` along a second-order vector.

    ``D_t`` is expanded by the chain rule at the point ``(q, v, accel)``::

        δL_i = ∂L/∂q^i - Σ_j ∂²L/∂q^j∂v^i v^j - Σ_j W_ij accel^j

    The map is affine in ``accel`` with linear part ``-W``.  A precomputed
    jet of ``L`` at ``p`` may be passed to avoid re-evaluation.
    """
    j = model.jet(p) if jet is None else jet
    accel = np.asarray(accel, dtype=object if np.asarray(accel).dtype == object else float)
    return j.grad_q - j.hess_qv.T @ p.v - j.hess_vv @ accel
