"""Independent reference computations for the test suite.

Reference values never come from the package's jets: derivatives are central
finite differences of plain numpy evaluations and geometric quantities are
hand-derived closed forms.
"""

from __future__ import annotations

import numpy as np

from fibredrive import jets
from fibredrive.jets import ChartPoint

FD_STEP = 1e-5


def fd_gradient(f, z, h=FD_STEP):
    """Central-difference gradient of a scalar function of a flat vector."""
    z = np.asarray(z, dtype=float)
    g = np.zeros(z.size)
    for i in range(z.size):
        e = np.zeros(z.size)
        e[i] = h
        g[i] = (f(z + e) - f(z - e)) / (2 * h)
    return g


def fd_jacobian(F, z, h=FD_STEP):
    """Central-difference jacobian ``J[k, i] = ∂F_k/∂z_i``."""
    z = np.asarray(z, dtype=float)
    cols = []
    for i in range(z.size):
        e = np.zeros(z.size)
        e[i] = h
        cols.append((np.asarray(F(z + e), dtype=float) - np.asarray(F(z - e), dtype=float)) / (2 * h))
    return np.stack(cols, axis=-1)


def rel_error(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b), initial=0.0) / max(1.0, float(np.max(np.abs(b), initial=0.0))))


def chart_fn(f, n):
    """``f(q, v)`` as a function of the flat vector ``(q, v)``."""
    return lambda z: float(f(z[:n], z[n:]))


# -- random smooth fields ---------------------------------------------------------

_UNARY = [
    (jets.sin, np.sin),
    (jets.cos, np.cos),
    (jets.exp, np.exp),
    (jets.tanh, np.tanh),
    (jets.arctan, np.arctan),
    (lambda x: jets.sqrt(1.0 + x * x), lambda x: np.sqrt(1.0 + x * x)),
    (lambda x: jets.log(2.0 + x * x), lambda x: np.log(2.0 + x * x)),
]


def random_smooth_field(rng, n: int, terms: int = 4):
    """A random smooth ``f(q, v)``: sums of products of elementary functions of linear forms.

    Returns ``(f_generic, f_numpy)``; the first runs on jets, the second is a
    plain numpy evaluation of the same formula.
    """
    recipe = []
    for _ in range(terms):
        c = rng.uniform(-1, 1)
        k1, k2 = rng.integers(len(_UNARY), size=2)
        w1, w2 = rng.uniform(-1, 1, (2, 2 * n))
        p = int(rng.integers(0, 3))
        j = int(rng.integers(2 * n))
        recipe.append((c, k1, k2, w1, w2, p, j))

    def build(pick):
        def f(q, v):
            z = list(q) + list(v)
            total = 0.0
            for c, k1, k2, w1, w2, p, j in recipe:
                a = sum(wi * zi for wi, zi in zip(w1, z))
                b = sum(wi * zi for wi, zi in zip(w2, z))
                term = c * pick(k1)(a) * pick(k2)(b)
                if p:
                    term = term * z[j] ** p
                total = total + term
            return total

        return f

    return build(lambda k: _UNARY[k][0]), build(lambda k: _UNARY[k][1])


# -- domain samplers ----------------------------------------------------------------

def timelike_point(rng, dim: int, qscale: float = 1.0) -> ChartPoint:
    q = rng.uniform(-qscale, qscale, dim)
    s = rng.uniform(-1.0, 1.0, dim - 1)
    v0 = np.linalg.norm(s) + rng.uniform(0.3, 2.0)
    return ChartPoint(q, np.concatenate([[v0], s]))


def sample_points(entry, rng, count: int) -> list[ChartPoint]:
    """Random points in the domain of a registry model."""
    if entry.name.startswith("free_particle"):
        return [timelike_point(rng, entry.n) for _ in range(count)]
    return [ChartPoint(rng.uniform(-2, 2, entry.n), rng.uniform(-2, 2, entry.n)) for _ in range(count)]


# -- closed-form geometry ---------------------------------------------------------

def minkowski_norm(v):
    eta = np.diag([1.0] + [-1.0] * (len(v) - 1))
    return float(np.sqrt(v @ eta @ v)), eta


def conformal_christoffel_contraction(q, v, epsilon):
    """``Γ^μ_{αβ} v^α v^β`` for ``g = Ω² η`` with ``Ω = 1 + ε Σ_{k≥2} q_k²``.

    Uses ``Γ^μ_{αβ} = δ^μ_α ∂_β ω + δ^μ_β ∂_α ω - η_{αβ} η^{μν} ∂_ν ω``
    with ``ω = ln Ω``.
    """
    q, v = np.asarray(q, float), np.asarray(v, float)
    eta = np.diag([1.0] + [-1.0] * (len(v) - 1))
    omega = 1.0 + epsilon * np.sum(q[1:] ** 2)
    domega = np.concatenate([[0.0], 2 * epsilon * q[1:]]) / omega
    return 2 * v * (v @ domega) - (v @ eta @ v) * (np.linalg.inv(eta) @ domega)


def geodesic_residual(times, q, v, epsilon):
    """Max g-orthogonal part of ``a + Γ(v, v)`` along a sampled curve.

    A reparametrised geodesic has ``a + Γ(v, v)`` parallel to ``v``.  The
    acceleration is taken from central differences of the sampled velocity.
    """
    eta = np.diag([1.0] + [-1.0] * (q.shape[1] - 1))
    worst = 0.0
    for i in range(1, len(times) - 1):
        a = (v[i + 1] - v[i - 1]) / (times[i + 1] - times[i - 1])
        r = a + conformal_christoffel_contraction(q[i], v[i], epsilon)
        # the conformal factor cancels in the g-projection
        r_perp = r - (r @ eta @ v[i]) / (v[i] @ eta @ v[i]) * v[i]
        worst = max(worst, float(np.max(np.abs(r_perp))))
    return worst
