"""Built-in model registry.

Each entry pairs a Lagrangian with its Hamiltonian link and a deterministic
set of in-domain seed points.  Links are validated when an entry is built.
"""

from __future__ import annotations

import inspect
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import jets
from .hamlink import HamiltonianLink, validate_link
from .jets import ChartPoint
from .lagrangian import LagrangianModel

__all__ = [
    "ModelRegistryEntry",
    "harmonic",
    "toy_singular",
    "free_particle_minkowski",
    "free_particle_conformal",
    "REGISTRY",
    "get_model",
    "model_names",
    "model_defaults",
    "minkowski",
]

SEED_COUNT = 20


@dataclass
class ModelRegistryEntry:
    name: str
    model: LagrangianModel
    link: HamiltonianLink
    default_seeds: list = field(default_factory=list)
    notes: str = ""

    def __post_init__(self):
        validate_link(self.link, self.model, self.default_seeds)

    @property
    def n(self) -> int:
        return self.model.n

    @property
    def m(self) -> int:
        return self.link.m


def minkowski(dim: int) -> np.ndarray:
    """``diag(1, -1, ..., -1)``."""
    return np.diag([1.0] + [-1.0] * (dim - 1))


def _quad(eta_diag, a, b):
    return sum(e * x * y for e, x, y in zip(eta_diag, a, b))


def _timelike_seeds(rng, dim: int, count: int = SEED_COUNT, qscale: float = 1.0) -> list[ChartPoint]:
    out = []
    for _ in range(count):
        q = rng.uniform(-qscale, qscale, dim)
        s = rng.uniform(-1.0, 1.0, dim - 1)
        v0 = np.linalg.norm(s) + rng.uniform(0.5, 1.5)
        out.append(ChartPoint(q, np.concatenate([[v0], s])))
    return out


def harmonic(mass: float = 1.0, k: float = 1.0) -> ModelRegistryEntry:
    """One-dimensional oscillator ``L = ½(m v² - k q²)``; regular."""
    if mass <= 0 or k <= 0:
        raise ValueError("harmonic needs mass > 0 and k > 0")
    model = LagrangianModel(
        1, lambda q, v: 0.5 * (mass * v[0] * v[0] - k * q[0] * q[0]), "harmonic",
        params={"mass": mass, "k": k},
        oracles={"period": lambda: 2 * np.pi * np.sqrt(mass / k)},
    )
    link = HamiltonianLink(lambda q, p: 0.5 * p[0] * p[0] / mass + 0.5 * k * q[0] * q[0])
    rng = np.random.default_rng(1)
    seeds = [ChartPoint(rng.uniform(-1, 1, 1), rng.uniform(-1, 1, 1)) for _ in range(SEED_COUNT)]
    return ModelRegistryEntry("harmonic", model, link, seeds, "regular, n = 1")


def toy_singular() -> ModelRegistryEntry:
    """``L = ½v₁² + v₁q₂``: one primary constraint, two constraint levels."""
    model = LagrangianModel(
        2, lambda q, v: 0.5 * v[0] * v[0] + v[0] * q[1], "toy_singular",
        oracles={"chi_1": lambda q, v: v[0], "chi_2": lambda q, v: v[1]},
    )
    link = HamiltonianLink(lambda q, p: 0.5 * (p[0] - q[1]) ** 2, (lambda q, p: p[1],))
    rng = np.random.default_rng(2)
    seeds = [ChartPoint(rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)) for _ in range(SEED_COUNT)]
    return ModelRegistryEntry("toy_singular", model, link, seeds,
                              "constraints v1 = 0, v2 = 0; multiplier fixed to 0")


def _free_particle_oracles(eta: np.ndarray, mass: float) -> dict[str, Callable]:
    # closed forms on the flat metric
    def vnorm(v):
        return np.sqrt(v @ eta @ v)

    return {
        "legendre": lambda q, v: mass / vnorm(v) * (eta @ v),
        "hessian": lambda q, v: mass / vnorm(v) * (eta - np.outer(eta @ v, eta @ v) / vnorm(v) ** 2),
        "gamma": lambda q, v: mass / vnorm(v) * v,
        "lambda": lambda q, v: np.array([vnorm(v) / mass]),
        "dlambda": lambda q, v: (eta @ v / (mass * vnorm(v)))[None, :],
        "M": lambda q, v: vnorm(v) / mass * np.linalg.inv(eta),
    }


def free_particle_minkowski(dim: int = 2, mass: float = 1.0) -> ModelRegistryEntry:
    """Relativistic free particle ``L = m√(η(v,v))`` on timelike velocities."""
    if dim < 2:
        raise ValueError("free_particle_minkowski needs dim >= 2")
    if mass <= 0:
        raise ValueError("mass must be positive")
    eta = minkowski(dim)
    d = np.diag(eta)
    model = LagrangianModel(
        dim, lambda q, v: mass * jets.sqrt(_quad(d, v, v)), "free_particle_minkowski",
        domain=lambda q, v: _quad(d, v, v) > 0.0,
        params={"dim": dim, "mass": mass},
        oracles=_free_particle_oracles(eta, mass),
    )
    # homogeneous of degree one: E = 0, so H = 0 is admissible
    link = HamiltonianLink(lambda q, p: 0.0, (lambda q, p: 0.5 * (_quad(d, p, p) - mass**2),))
    seeds = _timelike_seeds(np.random.default_rng(3), dim)
    return ModelRegistryEntry("free_particle_minkowski", model, link, seeds,
                              "no lagrangian constraints; one free multiplier")


def free_particle_conformal(dim: int = 2, mass: float = 1.0, epsilon: float = 0.1) -> ModelRegistryEntry:
    """Free particle on ``Ω²η`` with ``Ω = 1 + ε Σ_{k≥2} q_k²`` (spatial coordinates)."""
    if dim < 2:
        raise ValueError("free_particle_conformal needs dim >= 2")
    if mass <= 0:
        raise ValueError("mass must be positive")
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    d = np.diag(minkowski(dim))

    def omega(q):
        return 1.0 + epsilon * sum(x * x for x in q[1:])

    model = LagrangianModel(
        dim, lambda q, v: mass * omega(q) * jets.sqrt(_quad(d, v, v)), "free_particle_conformal",
        domain=lambda q, v: _quad(d, v, v) > 0.0,
        params={"dim": dim, "mass": mass, "epsilon": epsilon},
        oracles={"omega": omega},
    )
    link = HamiltonianLink(
        lambda q, p: 0.0,
        (lambda q, p: 0.5 * (_quad(d, p, p) / omega(q) ** 2 - mass**2),),
    )
    seeds = _timelike_seeds(np.random.default_rng(4), dim)
    return ModelRegistryEntry("free_particle_conformal", model, link, seeds,
                              "conformally flat metric; D0 is a reparametrised geodesic spray")


REGISTRY: dict[str, Callable[..., ModelRegistryEntry]] = {
    "harmonic": harmonic,
    "toy_singular": toy_singular,
    "free_particle_minkowski": free_particle_minkowski,
    "free_particle_conformal": free_particle_conformal,
}


def model_names() -> list[str]:
    return list(REGISTRY)


def model_defaults(name: str) -> dict:
    """Parameter names and default values of a registry factory."""
    sig = inspect.signature(REGISTRY[name])
    return {k: p.default for k, p in sig.parameters.items()}


def get_model(name: str, **params) -> ModelRegistryEntry:
    """Build a registry entry; unknown parameters are rejected."""
    if name not in REGISTRY:
        raise KeyError(f"unknown model {name!r}; available: {', '.join(REGISTRY)}")
    allowed = model_defaults(name)
    bad = set(params) - set(allowed)
    if bad:
        raise ValueError(f"{name} does not take parameters {sorted(bad)}; allowed: {sorted(allowed)}")
    return REGISTRY[name](**params)
