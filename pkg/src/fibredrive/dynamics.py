"""Primary constraints, primary dynamical fields, stabilisation and integration.

Given a second-order field ``X0`` the primary Lagrangian constraints are
``χ_μ = ⟨δL∘X0, γ_μ⟩`` and ``D0 = X0 + M·(δL∘X0)`` solves the Euler-Lagrange
equation wherever the ``χ_μ`` vanish.  Every other primary field is
``D_u = D0 + Σ_μ u^μ Γ_μ``.  :func:`stabilise` studies the tangency of
``D_u`` to the successive constraint surfaces numerically, on sampled points,
producing new constraints and relations that fix some of the ``u^μ``.

All constraint functions are closures over jet-aware evaluators, so their
derivatives along ``D0`` and ``Γ_μ`` are exact and can be differentiated again
in later rounds.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import DomainError, IntegrationError, SurfaceSamplingError
from .hamlink import HamiltonianLink, dlambda, gamma_matrix, local_data
from .jets import ChartPoint, _tidy, directional_derivative, eval_gradient, primal, solve_small
from .lagrangian import LagrangianModel, SecondOrderField, energy, euler_lagrange, zero_field

__all__ = [
    "ConstraintFunction",
    "MultiplierRelation",
    "Round",
    "StabilisationReport",
    "Trajectory",
    "primary_constraints",
    "x0_independence_residual",
    "primary_field_D0",
    "d0_prim_residual",
    "field_Du",
    "project_to_surface",
    "stabilise",
    "tangency_residual",
    "integrate",
    "CLASS_TOL",
    "STATUSES",
]

log = logging.getLogger(__name__)

CLASS_TOL = 1e-7
STATUSES = ("finished", "empty_final_set", "max_rounds_exceeded", "rank_instability")


@dataclass
class ConstraintFunction:
    """A constraint ``eval(p) = 0`` produced at a given stabilisation level."""

    level: int
    eval: Callable[[ChartPoint], object]
    name: str
    provenance: str
    identically_zero: bool = False

    def __call__(self, p: ChartPoint):
        return self.eval(p)

    def of(self, q, v):
        """Scalar-field form ``f(q, v)`` for the jet evaluators."""
        return self.eval(ChartPoint(q, v))


def _field_of(fn: Callable[[ChartPoint], object]) -> Callable:
    return lambda q, v: fn(ChartPoint(q, v))


def primary_constraints(model: LagrangianModel, link: HamiltonianLink,
                        X0: SecondOrderField | None = None) -> list[ConstraintFunction]:
    """The ``m`` primary Lagrangian constraints ``χ_μ = ⟨δL∘X0, γ_μ⟩``."""
    X0 = zero_field(model.n) if X0 is None else X0

    def make(mu):
        def chi(p: ChartPoint):
            d = local_data(link, model, p)
            el = euler_lagrange(model, p, X0(p), jet=d.jet)
            return el @ d.gamma[:, mu]

        return chi

    return [ConstraintFunction(1, make(mu), f"chi_{mu + 1}", f"<dL o {X0.name}, Gamma_{mu + 1}>")
            for mu in range(link.m)]


def x0_independence_residual(model: LagrangianModel, link: HamiltonianLink,
                             X0a: SecondOrderField, X0b: SecondOrderField, p: ChartPoint) -> float:
    """``max_μ |χ_μ^(a)(p) - χ_μ^(b)(p)|`` for constraints built from two fields."""
    ca = primary_constraints(model, link, X0a)
    cb = primary_constraints(model, link, X0b)
    return max((abs(float(primal(a(p) - b(p)))) for a, b in zip(ca, cb)), default=0.0)


def primary_field_D0(model: LagrangianModel, link: HamiltonianLink,
                     X0: SecondOrderField | None = None) -> SecondOrderField:
    """The primary field ``D0 = X0 + M·(δL∘X0)``."""
    X0 = zero_field(model.n) if X0 is None else X0

    def accel(p: ChartPoint):
        d = local_data(link, model, p)
        A = X0(p)
        return A + d.M @ euler_lagrange(model, p, A, jet=d.jet)

    return SecondOrderField(accel, name="D0")


def d0_prim_residual(model: LagrangianModel, link: HamiltonianLink, X0: SecondOrderField | None,
                     p: ChartPoint, step: float = 1e-5) -> float:
    """Max-norm of ``δL∘D0 - Σ_μ χ_μ Dλ^μ`` at ``p``."""
    D0 = primary_field_D0(model, link, X0)
    lhs = euler_lagrange(model, p, D0(p))
    chis = np.array([float(c(p)) for c in primary_constraints(model, link, X0)])
    rhs = chis @ dlambda(link, model, p, step) if link.m else np.zeros(model.n)
    return float(np.max(np.abs(lhs - rhs)))


def _multiplier(u) -> Callable[[ChartPoint], object]:
    return u if callable(u) else (lambda p, c=float(u): c)


def field_Du(model: LagrangianModel, link: HamiltonianLink, D0: SecondOrderField,
             u: Sequence = ()) -> SecondOrderField:
    """``D_u = D0 + Σ_μ u^μ Γ_μ``; each ``u^μ`` is a constant or a function of the point."""
    if len(u) not in (0, link.m):
        raise ValueError(f"expected {link.m} multipliers, got {len(u)}")
    us = [_multiplier(x) for x in u]

    def accel(p: ChartPoint):
        a = D0(p)
        if not us:
            return a
        G = gamma_matrix(link, model, p)
        for mu, fn in enumerate(us):
            a = a + G[:, mu] * fn(p)
        return a

    return SecondOrderField(accel, name="Du")


# -- constraint surfaces -------------------------------------------------------

def _scale(p: ChartPoint) -> float:
    pp = p.primal()
    return 1.0 + float(max(np.max(np.abs(pp.q)), np.max(np.abs(pp.v))))


def project_to_surface(model: LagrangianModel, constraints: Sequence[ConstraintFunction], p: ChartPoint,
                       tol: float = 1e-11, max_iter: int = 50):
    """Damped Gauss-Newton projection of ``p`` onto the common zero set.

    Returns ``(point, converged, stationary)``; ``stationary`` flags a
    non-zero residual with vanishing descent direction, i.e. constraints that
    cannot be satisfied near ``p``.
    """
    z = p.primal().as_array()
    if not constraints:
        return p.primal(), True, False

    def values(zz):
        pt = ChartPoint.from_array(zz)
        return np.array([float(primal(c(pt))) for c in constraints])

    c = values(z)
    for _ in range(max_iter):
        pt = ChartPoint.from_array(z)
        if np.max(np.abs(c)) <= tol * _scale(pt):
            return pt, True, False
        J = np.array([np.concatenate(eval_gradient(cf.of, pt)[1:]).astype(float) for cf in constraints])
        step, *_ = np.linalg.lstsq(J, -c, rcond=None)
        # descent direction vanishes relative to the residual: a local minimum off the surface
        if np.linalg.norm(J.T @ c) <= 1e-12 * np.linalg.norm(c):
            return pt, False, True
        norm0 = np.linalg.norm(c)
        alpha = 1.0
        for _ in range(30):
            trial = z + alpha * step
            tp = ChartPoint.from_array(trial)
            if model.contains(tp):
                ct = values(trial)
                if np.linalg.norm(ct) < norm0:
                    z, c = trial, ct
                    break
            alpha *= 0.5
        else:
            return ChartPoint.from_array(z), False, False
    pt = ChartPoint.from_array(z)
    return pt, bool(np.max(np.abs(c)) <= tol * _scale(pt)), False


# -- stabilisation ---------------------------------------------------------------

@dataclass
class MultiplierRelation:
    """``Σ_μ coeffs(p)_μ u^μ + constant(p) = 0``, from the tangency of ``source``."""

    level: int
    source: ConstraintFunction
    coeffs: Callable[[ChartPoint], np.ndarray]
    constant: Callable[[ChartPoint], object]

    def row(self, p: ChartPoint) -> np.ndarray:
        return np.append(primal(self.coeffs(p)), float(primal(self.constant(p))))


@dataclass
class Round:
    level: int
    new_constraints: list[ConstraintFunction]
    relations: list[MultiplierRelation]
    surface: list[ChartPoint]

    def multiplier_relations(self, p: ChartPoint) -> np.ndarray:
        """Relation rows ``(c_1..c_m, c_0)`` evaluated at ``p``."""
        rows = [rel.row(p) for rel in self.relations]
        return np.array(rows) if rows else np.zeros((0, 0))


@dataclass
class StabilisationReport:
    """Outcome of :func:`stabilise`.

    ``determined_u[μ]`` is a function of the point, or ``"free"``.
    """

    model: LagrangianModel
    link: HamiltonianLink
    D0: SecondOrderField
    rounds: list[Round]
    status: str
    determined_u: dict
    relations: list[MultiplierRelation]
    message: str = ""

    @property
    def constraints(self) -> list[ConstraintFunction]:
        """Constraints that do not vanish identically on the samples."""
        return [c for r in self.rounds for c in r.new_constraints if not c.identically_zero]

    @property
    def all_constraints(self) -> list[ConstraintFunction]:
        return [c for r in self.rounds for c in r.new_constraints]

    @property
    def surface(self) -> list[ChartPoint]:
        return self.rounds[-1].surface if self.rounds else []

    @property
    def free_multipliers(self) -> list[int]:
        return [mu for mu, u in sorted(self.determined_u.items()) if isinstance(u, str)]

    def multipliers(self, p: ChartPoint, u_free: Sequence | None = None) -> np.ndarray:
        """Multipliers at ``p``: the relations fix the determined part, ``u_free`` the rest."""
        m = self.link.m
        w = np.zeros(m, dtype=object)
        if u_free is not None:
            for mu, x in enumerate(u_free):
                w[mu] = _multiplier(x)(p)
        if not self.relations:
            return w
        R = np.array([rel.coeffs(p) for rel in self.relations], dtype=object).reshape(len(self.relations), m)
        r0 = np.array([rel.constant(p) for rel in self.relations], dtype=object)
        # minimal-norm solution of R u = -r0 plus the free part projected on ker R
        y = solve_small(R @ R.T, -r0)
        u_p = R.T @ y
        Rw = R @ w
        w_perp = w - R.T @ solve_small(R @ R.T, Rw)
        return u_p + w_perp

    def final_field(self, u_free: Sequence | None = None) -> SecondOrderField:
        """``D_f = D0 + Σ_μ u^μ Γ_μ`` with the determined multipliers substituted."""
        model, link, D0 = self.model, self.link, self.D0

        def accel(p: ChartPoint):
            a = D0(p)
            if link.m == 0:
                return a
            u = self.multipliers(p, u_free)
            return _tidy(a + gamma_matrix(link, model, p) @ u)

        return SecondOrderField(accel, name="Df")


def _tangency_parts(model, link, D0, c: ConstraintFunction, p: ChartPoint):
    """``(D0·χ, [Γ_μ·χ])`` at ``p``."""
    c0 = directional_derivative(c.of, p, p.v, D0(p))
    G = gamma_matrix(link, model, p)
    zero = np.zeros(model.n)
    cvec = np.array([directional_derivative(c.of, p, zero, G[:, mu]) for mu in range(link.m)], dtype=object)
    return c0, cvec


def _effective_constant(model, link, D0, c, relations, p):
    # D0·χ minus the part absorbed by already-determined multipliers
    c0, cvec = _tangency_parts(model, link, D0, c, p)
    if not relations:
        return c0
    R = np.array([rel.coeffs(p) for rel in relations], dtype=object).reshape(len(relations), link.m)
    r0 = np.array([rel.constant(p) for rel in relations], dtype=object)
    alpha = solve_small(R @ R.T, R @ cvec)
    return c0 - alpha @ r0


def _classify(model, link, D0, c, relations, surface, tol):
    kinds = []
    for p in surface:
        c0, cvec = _tangency_parts(model, link, D0, c, p)
        c0, cvec = float(primal(c0)), primal(cvec)
        scale = 1.0 + max(abs(c0), float(np.max(np.abs(cvec), initial=0.0)))
        if relations:
            R = np.array([primal(rel.coeffs(p)) for rel in relations]).reshape(len(relations), link.m)
            r0 = np.array([float(primal(rel.constant(p))) for rel in relations])
            alpha, *_ = np.linalg.lstsq(R.T, cvec, rcond=None)
            c_perp = cvec - R.T @ alpha
            c0_eff = c0 - alpha @ r0
        else:
            c_perp, c0_eff = cvec, c0
        if np.max(np.abs(c_perp), initial=0.0) > tol * scale:
            kinds.append("relation")
        elif abs(c0_eff) > tol * scale:
            kinds.append("constraint")
        else:
            kinds.append("tangent")
    return kinds


def _vanishes_to_first_order(c: ConstraintFunction, p: ChartPoint, tol: float) -> bool:
    # value and gradient both vanish; a constraint merely passing through p does not count
    val, gq, gv = eval_gradient(c.of, p)
    size = max(abs(float(primal(val))), float(np.max(np.abs(primal(gq)))), float(np.max(np.abs(primal(gv)))))
    return size <= tol * _scale(p)


def _project_all(model, constraints, seeds):
    surface, stationary = [], 0
    for s in seeds:
        pt, ok, stat = project_to_surface(model, constraints, s)
        if ok and model.contains(pt):
            surface.append(pt)
        stationary += stat
    if len(surface) < len(seeds):
        log.info("projection kept %d of %d samples", len(surface), len(seeds))
    return surface, stationary


def stabilise(model: LagrangianModel, link: HamiltonianLink, D0: SecondOrderField,
              sample_points: Iterable[ChartPoint], tol: float = CLASS_TOL,
              max_rounds: int = 10) -> StabilisationReport:
    """Run the stabilisation algorithm on sampled points.

    Round 1 builds the primary constraints.  Round ``k+1`` studies the
    tangency of ``D_u`` to the level-``k`` constraints on points projected onto
    the current surface: for each constraint ``χ`` the coefficients
    ``c0 = D0·χ`` and ``c_μ = Γ_μ·χ`` are evaluated, and after removing the
    part already fixed by earlier relations,

    * a non-vanishing ``c`` gives a relation fixing some ``u^μ``;
    * ``c ≈ 0`` with ``c0 ≠ 0`` gives the new constraint ``χ' = c0``;
    * both ≈ 0 means ``D_u`` is already tangent.

    Classification is relative to ``1 + max |row|``.  A classification that
    mixes relation and non-relation across samples ends the run with status
    ``rank_instability``.
    """
    seeds = [p.primal() for p in sample_points]
    for p in seeds:
        model.check(p)
    if not seeds:
        raise ValueError("stabilisation needs at least one sample point")

    rounds: list[Round] = []
    active: list[ConstraintFunction] = []
    relations: list[MultiplierRelation] = []
    new = primary_constraints(model, link)
    new_relations: list[MultiplierRelation] = []
    surface = seeds
    status, message = "finished", ""
    level = 1
    while True:
        for c in new:
            c.identically_zero = all(_vanishes_to_first_order(c, p, tol) for p in surface)
        fresh = [c for c in new if not c.identically_zero]
        active += fresh
        relations += new_relations
        if fresh:
            surface, stationary = _project_all(model, active, surface)
            if not surface:
                rounds.append(Round(level, new, new_relations, []))
                if stationary:
                    status, message = "empty_final_set", "constraints admit no solution near any sample"
                    break
                raise SurfaceSamplingError(f"Newton projection failed for every sample at level {level}")
        rounds.append(Round(level, new, new_relations, list(surface)))
        if not fresh:
            break
        if level >= max_rounds:
            status, message = "max_rounds_exceeded", f"new constraints still appearing after {level} rounds"
            break

        level += 1
        new, new_relations = [], []
        unstable = False
        for c in fresh:
            kinds = _classify(model, link, D0, c, relations + new_relations, surface, tol)
            log.debug("level %d tangency of %s: %s", level, c.name, kinds)
            if "relation" in kinds:
                if any(k != "relation" for k in kinds):
                    unstable = True
                    message = f"tangency of {c.name} changes rank across samples: {kinds}"
                    break
                new_relations.append(_relation(model, link, D0, c, level))
            elif "constraint" in kinds:
                prior = list(relations + new_relations)
                new.append(ConstraintFunction(
                    level,
                    _derived_constraint(model, link, D0, c, prior),
                    f"chi_{level}_{len(new) + 1}",
                    f"D0.{c.name}" if not prior else f"D0.{c.name} (reduced by {len(prior)} relations)",
                ))
        if unstable:
            status = "rank_instability"
            break

    determined = _determined_multipliers(link, relations, surface, tol)
    return StabilisationReport(model, link, D0, rounds, status, determined, relations, message)


def tangency_residual(report: StabilisationReport, u_free: Sequence | None = None,
                      points: Sequence[ChartPoint] | None = None) -> float:
    """Max ``|D_f·χ|`` over recorded constraints and final-surface points."""
    Df = report.final_field(u_free)
    points = report.surface if points is None else points
    worst = 0.0
    for p in points:
        a = Df(p)
        for c in report.constraints:
            worst = max(worst, abs(float(primal(directional_derivative(c.of, p, p.v, a)))))
    return worst


def _relation(model, link, D0, c, level):
    def coeffs(p):
        return _tangency_parts(model, link, D0, c, p)[1]

    def constant(p):
        return directional_derivative(c.of, p, p.v, D0(p))

    return MultiplierRelation(level, c, coeffs, constant)


def _derived_constraint(model, link, D0, c, relations):
    def chi(p):
        return _effective_constant(model, link, D0, c, relations, p)

    return chi


def _determined_multipliers(link, relations, surface, tol):
    m = link.m
    if not relations or not surface:
        return {mu: "free" for mu in range(m)}
    determined = set(range(m))
    for p in surface:
        R = np.array([primal(rel.coeffs(p)) for rel in relations]).reshape(len(relations), m)
        _, s, vt = np.linalg.svd(R)
        rank = int(np.sum(s > tol * max(1.0, s[0])))
        null = vt[rank:]
        for mu in range(m):
            if null.size and np.max(np.abs(null[:, mu])) > tol:
                determined.discard(mu)
    out = {}
    for mu in range(m):
        if mu in determined:
            out[mu] = _determined_u(relations, m, mu)
        else:
            out[mu] = "free"
    return out


def _determined_u(relations, m, mu):
    def u(p):
        R = np.array([rel.coeffs(p) for rel in relations], dtype=object).reshape(len(relations), m)
        r0 = np.array([rel.constant(p) for rel in relations], dtype=object)
        y = solve_small(R @ R.T, -r0)
        return (R.T @ y)[mu]

    return u


# -- integration ----------------------------------------------------------------

@dataclass
class Trajectory:
    """Fixed-step integral curve with per-step residual log."""

    times: np.ndarray
    q: np.ndarray
    v: np.ndarray
    residual_log: dict = field(default_factory=dict)
    domain_exit: bool = False

    @property
    def states(self) -> list[ChartPoint]:
        return [ChartPoint(q, v) for q, v in zip(self.q, self.v)]

    @property
    def final(self) -> ChartPoint:
        return ChartPoint(self.q[-1], self.v[-1])

    def max_residuals(self) -> dict:
        """Largest logged value per quantity; the energy entry is its drift."""
        out = {k: float(np.max(np.abs(a), initial=0.0)) for k, a in self.residual_log.items() if k != "energy"}
        out["energy_drift"] = float(np.ptp(self.residual_log["energy"]))
        return out


def integrate(model: LagrangianModel, field_: SecondOrderField, p0: ChartPoint, t_end: float, dt: float,
              constraints: Sequence[ConstraintFunction] = ()) -> Trajectory:
    """Classical RK4 for ``q' = v, v' = accel(q, v)`` on ``[0, t_end]``.

    The last step is shortened to land on ``t_end``.  Each stored state logs
    the energy, the Euler-Lagrange residual ``‖δL(accel)‖∞`` and ``|χ|`` for
    every given constraint.  No projection is applied: drift is recorded, not
    corrected.  Integration stops early, with ``domain_exit`` set, when a
    stage leaves the model's domain.
    """
    if dt <= 0 or t_end <= 0:
        raise ValueError("dt and t_end must be positive")
    p0 = p0.primal()
    model.check(p0)
    n = model.n
    nsteps = max(1, math.ceil(t_end / dt - 1e-9))

    def rhs(z):
        pt = ChartPoint.from_array(z)
        model.check(pt)
        a = np.asarray(primal(field_(pt)), dtype=float)
        return np.concatenate([pt.v, a]), a

    names = ["energy", "el_residual"] + [c.name for c in constraints]
    logs = {k: [] for k in names}

    def record(pt, a):
        logs["energy"].append(float(energy(model, pt)))
        logs["el_residual"].append(float(np.max(np.abs(euler_lagrange(model, pt, a)))))
        for c in constraints:
            logs[c.name].append(abs(float(primal(c(pt)))))

    z = p0.as_array()
    times, zs = [0.0], [z]
    t = 0.0
    domain_exit = False
    try:
        k1, a1 = rhs(z)
    except DomainError:
        raise
    record(p0, a1)
    for i in range(nsteps):
        h = min(dt, t_end - t) if i == nsteps - 1 else dt
        try:
            k2, _ = rhs(z + 0.5 * h * k1)
            k3, _ = rhs(z + 0.5 * h * k2)
            k4, _ = rhs(z + h * k3)
            z_new = z + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(z_new)):
                raise IntegrationError(f"non-finite state at t = {t + h}")
            k1, a1 = rhs(z_new)
        except DomainError:
            domain_exit = True
            log.info("trajectory left the domain of %s at t = %.6g", model.name, t)
            break
        z, t = z_new, t + h
        times.append(t)
        zs.append(z)
        record(ChartPoint.from_array(z), a1)
    Z = np.array(zs)
    return Trajectory(np.array(times), Z[:, :n], Z[:, n:], {k: np.array(v) for k, v in logs.items()}, domain_exit)
