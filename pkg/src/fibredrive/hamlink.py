"""Hamiltonian-side data pulled back through the Legendre map.

A :class:`HamiltonianLink` supplies a Hamiltonian ``H(q, p)`` with
``H∘ℱ = E`` and primary constraints ``φ_μ(q, p)`` vanishing on the image of
the Legendre map ``ℱ``.  From them we build, at each velocity-chart point,

* ``γ_h = ∂h/∂p ∘ ℱ`` for any momentum-side function ``h``;
* the multipliers ``λ^μ`` solving ``v = γ_H + Σ_μ γ_μ λ^μ``;
* the matrix ``M = ∂²H/∂p∂p∘ℱ + Σ_μ λ^μ ∂²φ_μ/∂p∂p∘ℱ``,

which together resolve the identity: ``Id = M·W + Σ_μ γ_μ ⊗ Dλ^μ``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.linalg

from .errors import DegenerateConstraintsError, InconsistentLinkError
from .jets import ChartPoint, directional_derivative, eval_gradient, primal, solve_small, taylor
from .lagrangian import KERNEL_TOL, LagrangianModel, check_constant_rank, energy, kernel_basis

__all__ = [
    "HamiltonianLink",
    "LocalData",
    "ResolutionData",
    "local_data",
    "momentum_point",
    "gamma_field",
    "gamma_matrix",
    "upsilon_apply",
    "gamma_apply",
    "solve_lambda",
    "dlambda",
    "matrix_M",
    "resolution_check",
    "validate_link",
    "kernel_alignment",
    "LINK_TOL",
    "LAMBDA_TOL",
]

LINK_TOL = 1e-8
LAMBDA_TOL = 1e-8


@dataclass(frozen=True)
class HamiltonianLink:
    """Hamiltonian ``H(q, p)`` and primary constraints ``φ_μ(q, p)``."""

    H: Callable
    constraints: Sequence[Callable] = ()

    @property
    def m(self) -> int:
        return len(self.constraints)


@dataclass(frozen=True)
class LocalData:
    """Everything the resolution of the identity needs at one point."""

    point: ChartPoint
    momentum: np.ndarray
    W: np.ndarray
    gamma_H: np.ndarray
    gamma: np.ndarray  # n x m, column μ is γ_μ
    hess_H: np.ndarray
    hess_phi: tuple
    lam: np.ndarray
    jet: object  # Jet2 of L

    @property
    def M(self) -> np.ndarray:
        M = self.hess_H
        for lam, hess in zip(self.lam, self.hess_phi):
            M = M + hess * lam
        return M


@dataclass(frozen=True)
class ResolutionData:
    lam: np.ndarray
    dlam: np.ndarray  # m x n
    M: np.ndarray
    lam_residual: np.ndarray  # v - γ_H - Σ γ_μ λ^μ
    imw_residual: np.ndarray  # Id - M·W - Σ γ_μ ⊗ Dλ^μ

    @property
    def lam_error(self) -> float:
        return float(np.max(np.abs(self.lam_residual), initial=0.0))

    @property
    def imw_error(self) -> float:
        return float(np.max(np.abs(self.imw_residual), initial=0.0))


def _as_array(x):
    arr = np.asarray(x)
    return arr if arr.dtype == object else arr.astype(float)


def _momentum_taylor(h: Callable, q, momentum):
    return taylor(lambda z: h(q, z), momentum, order=2)


def momentum_point(model: LagrangianModel, p: ChartPoint) -> ChartPoint:
    """The momentum-chart point ``(q, ℱ(q, v))``."""
    model.check(p)
    _, _, F = eval_gradient(model.L, p)
    return ChartPoint(p.q, F)


def gamma_field(link: HamiltonianLink, model: LagrangianModel, h: Callable, p: ChartPoint) -> np.ndarray:
    """Fibre components of the vertical field ``Γ_h``: ``∂h/∂p`` at ``(q, ℱ(p))``."""
    mp = momentum_point(model, p)
    _, _, grad_p = eval_gradient(h, mp)
    return grad_p


def gamma_matrix(link: HamiltonianLink, model: LagrangianModel, p: ChartPoint) -> np.ndarray:
    """The ``n × m`` matrix whose columns are ``γ_μ(p)``."""
    cols = [gamma_field(link, model, phi, p) for phi in link.constraints]
    if not cols:
        return np.zeros((model.n, 0))
    return _as_array(np.stack(cols, axis=1))


def upsilon_apply(link: HamiltonianLink, model: LagrangianModel, g: Callable, h: Callable, p: ChartPoint):
    """``(ϒ^g·h)(p) = Σ_i ∂g/∂v^i · (∂h/∂p_i ∘ ℱ)(p)``."""
    model.check(p)
    _, _, dg = eval_gradient(g, p)
    return dg @ gamma_field(link, model, h, p)


def gamma_apply(link: HamiltonianLink, model: LagrangianModel, g: Callable, h: Callable, p: ChartPoint):
    """``(Γ_h·g)(p)``: derivative of ``g`` along the vertical field ``Γ_h``."""
    gam = gamma_field(link, model, h, p)
    return directional_derivative(g, p, np.zeros(model.n), gam)


def _solve_multipliers(G, rhs, v, tol, residual_tol):
    m = G.shape[1]
    generic = G.dtype == object or rhs.dtype == object
    Gp, rp = primal(G), primal(rhs)
    scale = 1.0 + float(np.max(np.abs(primal(v))))
    if m == 0:
        if np.max(np.abs(rp)) > residual_tol * scale:
            raise InconsistentLinkError(f"regular link: v - γ_H = {rp} does not vanish")
        return np.zeros(0)
    _, R, piv = scipy.linalg.qr(Gp, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag[0] == 0.0 or np.any(diag < tol * diag[0]):
        raise DegenerateConstraintsError(f"constraint gradients are dependent (|R_kk| = {diag})")
    if generic:
        lam = solve_small(G.T @ G, G.T @ rhs)
    else:
        lam, *_ = np.linalg.lstsq(Gp, rp, rcond=None)
    res = np.max(np.abs(Gp @ primal(lam) - rp))
    if res > residual_tol * scale:
        raise InconsistentLinkError(f"v - γ_H is not in the span of the γ_μ (residual {res:.3e})")
    return lam


def local_data(link: HamiltonianLink, model: LagrangianModel, p: ChartPoint,
               tol: float = KERNEL_TOL, residual_tol: float = LAMBDA_TOL) -> LocalData:
    """Evaluate ``ℱ``, ``W``, ``γ_H``, ``γ_μ``, ``λ^μ`` and the hessians behind ``M`` at once."""
    jet = model.jet(p)
    F = jet.grad_v
    _, gH, hH = _momentum_taylor(link.H, p.q, F)
    grads, hessians = [], []
    for phi in link.constraints:
        _, g, h = _momentum_taylor(phi, p.q, F)
        grads.append(g)
        hessians.append(h)
    G = _as_array(np.stack(grads, axis=1)) if grads else np.zeros((model.n, 0))
    gH = _as_array(gH)
    lam = _solve_multipliers(G, _as_array(p.v - gH), p.v, tol, residual_tol)
    return LocalData(p, F, jet.hess_vv, gH, G, _as_array(hH), tuple(hessians), lam, jet)


def solve_lambda(link: HamiltonianLink, model: LagrangianModel, p: ChartPoint,
                 tol: float = KERNEL_TOL, residual_tol: float = LAMBDA_TOL) -> np.ndarray:
    """Multipliers ``λ^μ(p)`` with ``v = γ_H + Σ_μ γ_μ λ^μ``.

    Solved by least squares after a column-pivoted QR rank check.  Raises
    :class:`DegenerateConstraintsError` when the ``γ_μ`` are dependent and
    :class:`InconsistentLinkError` when the system has no exact solution.
    """
    return local_data(link, model, p, tol, residual_tol).lam


def dlambda(link: HamiltonianLink, model: LagrangianModel, p: ChartPoint, step: float = 1e-5) -> np.ndarray:
    """Fibre derivative ``Dλ^μ`` (``m × n``) by central differences in ``v``."""
    p = p.primal()
    out = np.zeros((link.m, model.n))
    if link.m == 0:
        return out
    for k in range(model.n):
        dv = np.zeros(model.n)
        dv[k] = step
        lp = solve_lambda(link, model, ChartPoint(p.q, p.v + dv))
        lm = solve_lambda(link, model, ChartPoint(p.q, p.v - dv))
        out[:, k] = (lp - lm) / (2 * step)
    return out


def matrix_M(link: HamiltonianLink, model: LagrangianModel, p: ChartPoint) -> np.ndarray:
    """``M = ∂²H/∂p∂p∘ℱ + Σ_μ λ^μ ∂²φ_μ/∂p∂p∘ℱ``."""
    return local_data(link, model, p).M


def resolution_check(link: HamiltonianLink, model: LagrangianModel, p: ChartPoint,
                     step: float = 1e-5) -> ResolutionData:
    """Assemble ``λ``, ``Dλ``, ``M`` and the residuals of both identities."""
    d = local_data(link, model, p.primal())
    dlam = dlambda(link, model, p, step)
    v = d.point.v
    lam_res = v - d.gamma_H - d.gamma @ d.lam
    imw = np.eye(model.n) - d.M @ d.W - d.gamma @ dlam
    return ResolutionData(d.lam, dlam, d.M, lam_res, imw)


def validate_link(link: HamiltonianLink, model: LagrangianModel, points: Iterable[ChartPoint],
                  kernel_tol: float = KERNEL_TOL, tol: float = LINK_TOL) -> int:
    """Check a link against its Lagrangian on sample points.

    Verifies that the kernel dimension of ``W`` is constant and equals the
    number of constraints, that ``H∘ℱ = E`` and that every ``φ_μ∘ℱ = 0``.
    Returns the kernel dimension.
    """
    points = [p.primal() for p in points]
    for p in points:
        model.check(p)
    rank = check_constant_rank(model, points, kernel_tol)
    if rank != link.m:
        raise InconsistentLinkError(
            f"{model.name}: link has {link.m} constraints but the fibre hessian kernel has dimension {rank}")
    for p in points:
        mp = momentum_point(model, p)
        E = energy(model, p)
        HF = link.H(mp.q, mp.v)
        if abs(HF - E) > tol * (1.0 + abs(E)):
            raise InconsistentLinkError(f"{model.name}: H∘ℱ = {HF:.6g} differs from E = {E:.6g} at {p}")
        for mu, phi in enumerate(link.constraints):
            val = phi(mp.q, mp.v)
            if abs(val) > tol * (1.0 + float(np.max(np.abs(mp.v)))):
                raise InconsistentLinkError(f"{model.name}: φ_{mu + 1}∘ℱ = {val:.3e} does not vanish at {p}")
    return rank


def kernel_alignment(link: HamiltonianLink, model: LagrangianModel, p: ChartPoint,
                     tol: float = KERNEL_TOL) -> float:
    """Largest principal angle between ``span{γ_μ}`` and the kernel of ``W``.

    Returns ``π/2`` when the dimensions disagree and ``0`` when both are trivial.
    """
    K = kernel_basis(model, p, tol)
    G = primal(gamma_matrix(link, model, p))
    if len(K) != G.shape[1]:
        return float(np.pi / 2)
    if not K:
        return 0.0
    return float(np.max(scipy.linalg.subspace_angles(G, np.stack(K, axis=1))))
