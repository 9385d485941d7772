"""Fibre derivatives of bundle maps between trivialised affine bundles.

Bundles are only seen through charts: a bundle map is the fibre part
``(x, a) -> f(x, a)`` of a base-preserving map, and a vertical vector at
``(x, a)`` is stored as its fibre component.  The derivation rules
(product, pairing, chain) and the Liouville identities are exposed as residual
checks so they can be run as diagnostics from the command line.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from . import jets
from .jets import taylor

__all__ = [
    "BundleMap",
    "FibreDerivativeValue",
    "FibreHessianValue",
    "fibre_derivative",
    "fibre_hessian",
    "check_product_rule",
    "check_pairing_rule",
    "check_chain_rule",
    "liouville_identities",
    "random_polynomial_map",
    "default_checks",
    "run_calculus_suite",
    "RULE_TOL",
]

RULE_TOL = 1e-10


@dataclass(frozen=True)
class BundleMap:
    """Fibre part of a bundle map ``(x, a) -> (x, f(x, a))``.

    ``eval`` returns an array of length ``out_dim`` (a scalar is accepted
    when ``out_dim == 1``).
    """

    base_dim: int
    in_dim: int
    out_dim: int
    eval: Callable

    def __call__(self, x, a) -> np.ndarray:
        y = self.eval(x, a)
        if not isinstance(y, (np.ndarray, list, tuple)):
            y = [y]
        y = np.asarray(y, dtype=object) if any(isinstance(e, jets.Jet) for e in y) else np.asarray(y, dtype=float)
        if y.shape != (self.out_dim,):
            raise ValueError(f"bundle map returned shape {y.shape}, expected ({self.out_dim},)")
        return y


@dataclass(frozen=True)
class FibreDerivativeValue:
    matrix: np.ndarray  # out_dim x in_dim


@dataclass(frozen=True)
class FibreHessianValue:
    tensor: np.ndarray  # out_dim x in_dim x in_dim


def _check_dims(f: BundleMap, x, a):
    x = np.asarray(x, dtype=float).reshape(-1)
    a = np.asarray(a, dtype=float).reshape(-1)
    if x.size != f.base_dim or a.size != f.in_dim:
        raise ValueError(f"expected base/fibre dims ({f.base_dim}, {f.in_dim}), got ({x.size}, {a.size})")
    return x, a


def fibre_derivative(f: BundleMap, x, a) -> FibreDerivativeValue:
    """``matrix[k, i] = ∂f^k/∂a^i (x, a)``."""
    x, a = _check_dims(f, x, a)
    _, jac, _ = taylor(lambda z: f(x, z), a, order=1)
    jets._check_finite(jac)
    return FibreDerivativeValue(np.asarray(jac, dtype=float).reshape(f.out_dim, f.in_dim))


def fibre_hessian(f: BundleMap, x, a) -> FibreHessianValue:
    """``tensor[k, i, j] = ∂²f^k/∂a^i∂a^j (x, a)``, symmetric in ``i, j``."""
    x, a = _check_dims(f, x, a)
    _, _, hess = taylor(lambda z: f(x, z), a, order=2)
    hess = np.asarray(hess, dtype=float).reshape(f.out_dim, f.in_dim, f.in_dim)
    jets._check_finite(hess)
    return FibreHessianValue(0.5 * (hess + hess.transpose(0, 2, 1)))


def _relative(lhs, rhs) -> float:
    lhs, rhs = np.asarray(lhs, dtype=float), np.asarray(rhs, dtype=float)
    scale = 1.0 + max(np.max(np.abs(lhs), initial=0.0), np.max(np.abs(rhs), initial=0.0))
    return float(np.max(np.abs(lhs - rhs), initial=0.0) / scale)


def check_product_rule(f: BundleMap, phi: Callable, x, a) -> float:
    """Relative residual of ``D(f·φ) = (Df)·φ + f ⊗ Dφ``.

    ``phi`` is a scalar function ``phi(x, a)``.
    """
    x, a = _check_dims(f, x, a)
    prod = BundleMap(f.base_dim, f.in_dim, f.out_dim, lambda xx, aa: f(xx, aa) * phi(xx, aa))
    lhs = fibre_derivative(prod, x, a).matrix
    phi_val, dphi, _ = taylor(lambda z: phi(x, z), a, order=1)
    rhs = fibre_derivative(f, x, a).matrix * phi_val + np.outer(f(x, a), dphi)
    return _relative(lhs, rhs)


def check_pairing_rule(phi: BundleMap, f: BundleMap, x, a) -> float:
    """Relative residual of ``D⟨φ, f⟩ = φ • Df + Dφ • f``.

    ``phi`` takes values in the dual of the target fibre of ``f``.
    """
    if phi.out_dim != f.out_dim or phi.in_dim != f.in_dim:
        raise ValueError("pairing needs φ and f over the same fibres with dual targets")
    x, a = _check_dims(f, x, a)
    pairing = lambda xx, aa: np.dot(phi(xx, aa), f(xx, aa))
    _, lhs, _ = taylor(lambda z: pairing(x, z), a, order=1)
    rhs = phi(x, a) @ fibre_derivative(f, x, a).matrix + f(x, a) @ fibre_derivative(phi, x, a).matrix
    return _relative(lhs, rhs)


def check_chain_rule(g: BundleMap, f: BundleMap, x, a) -> float:
    """Relative residual of ``D(g∘f) = (Dg∘f) • Df``."""
    if g.in_dim != f.out_dim or g.base_dim != f.base_dim:
        raise ValueError("g must act on the target fibres of f")
    x, a = _check_dims(f, x, a)
    comp = BundleMap(f.base_dim, f.in_dim, g.out_dim, lambda xx, aa: g(xx, f(xx, aa)))
    lhs = fibre_derivative(comp, x, a).matrix
    rhs = fibre_derivative(g, x, f(x, a)).matrix @ fibre_derivative(f, x, a).matrix
    return _relative(lhs, rhs)


def _liouville_apply(g: Callable, x, e):
    # derivative of g along the dilation flow e -> exp(s) e at s = 0
    (s,), tag = jets.seed([0.0], order=1)
    y = g(x, e * jets.exp(s))
    _, grad, _ = jets._parts(y, tag, 1)
    return grad[0]


def liouville_identities(g: Callable, x, e) -> tuple[float, float]:
    """Residuals of the two Liouville identities for a scalar ``g(x, e)``.

    The Liouville derivative ``Δ·g`` is computed along the dilation flow,
    independently of the fibre derivative it is compared with::

        (Δ·g)(e)  = ⟨Dg(e), e⟩
        D(Δ·g)(e) = Dg(e) + D²g(e)·e
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    e = np.asarray(e, dtype=float).reshape(-1)
    _, dg, d2g = taylor(lambda z: g(x, z), e, order=2)
    lhs1 = _liouville_apply(g, x, e)
    r1 = _relative(lhs1, np.dot(dg, e))
    _, lhs2, _ = taylor(lambda z: _liouville_apply(g, x, z), e, order=1)
    r2 = _relative(lhs2, dg + d2g @ e)
    return r1, r2


def _random_polynomial(rng, nvars: int, degree: int, terms: int):
    coeffs = rng.uniform(-1.0, 1.0, size=terms)
    degrees = rng.integers(0, degree + 1, size=terms)
    powers = [rng.multinomial(d, np.full(nvars, 1.0 / nvars)) for d in degrees]

    def poly(z):
        total = 0.0
        for c, pw in zip(coeffs, powers):
            term = c
            for zi, k in zip(z, pw):
                if k:
                    term = term * zi**int(k)
            total = total + term
        return total

    return poly


def random_polynomial_map(rng, base_dim: int, in_dim: int, out_dim: int, degree: int = 3, terms: int = 6) -> BundleMap:
    """A bundle map whose components are random polynomials in ``(x, a)``."""
    polys = [_random_polynomial(rng, base_dim + in_dim, degree, terms) for _ in range(out_dim)]

    def ev(x, a):
        z = list(x) + list(a)
        return np.array([p(z) for p in polys], dtype=object)

    return BundleMap(base_dim, in_dim, out_dim, ev)


def _random_point(rng, f: BundleMap):
    return rng.uniform(-1.0, 1.0, f.base_dim), rng.uniform(-1.0, 1.0, f.in_dim)


def _product_case(rng):
    b, i, o = rng.integers(1, 4, size=3)
    f = random_polynomial_map(rng, b, i, o)
    phi = random_polynomial_map(rng, b, i, 1)
    x, a = _random_point(rng, f)
    return check_product_rule(f, lambda xx, aa: phi(xx, aa)[0], x, a)


def _pairing_case(rng):
    b, i, o = rng.integers(1, 4, size=3)
    f = random_polynomial_map(rng, b, i, o)
    phi = random_polynomial_map(rng, b, i, o)
    x, a = _random_point(rng, f)
    return check_pairing_rule(phi, f, x, a)


def _chain_case(rng):
    b, i, o, k = rng.integers(1, 4, size=4)
    f = random_polynomial_map(rng, b, i, o)
    g = random_polynomial_map(rng, b, o, k, degree=2)
    x, a = _random_point(rng, f)
    return check_chain_rule(g, f, x, a)


def _liouville_case(rng):
    b, i = rng.integers(1, 4, size=2)
    g = random_polynomial_map(rng, b, i, 1)
    x, e = rng.uniform(-1.0, 1.0, b), rng.uniform(-1.0, 1.0, i)
    return max(liouville_identities(lambda xx, aa: g(xx, aa)[0], x, e))


def default_checks() -> dict[str, Callable]:
    """Randomised rule checks, each mapping an RNG to a residual."""
    return {
        "product": _product_case,
        "pairing": _pairing_case,
        "chain": _chain_case,
        "liouville": _liouville_case,
    }


def run_calculus_suite(seed: int = 42, count: int = 100, checks: Mapping[str, Callable] | None = None,
                       tol: float = RULE_TOL) -> dict:
    """Run every check ``count`` times and collect the worst residuals.

    Returns a mapping with one entry per rule, ``{"max_residual", "passed"}``,
    plus an overall ``"passed"`` flag.  ``count == 0`` passes vacuously.
    """
    checks = default_checks() if checks is None else dict(checks)
    rng = np.random.default_rng(seed)
    results = {}
    for name, check in checks.items():
        worst = max((float(check(rng)) for _ in range(count)), default=0.0)
        results[name] = {"max_residual": worst, "passed": bool(worst <= tol)}
    results["passed"] = all(r["passed"] for r in results.values())
    return results
