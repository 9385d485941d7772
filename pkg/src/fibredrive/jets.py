"""Forward-mode differentiation of scalar fields on velocity charts.

A :class:`Jet` carries a value together with its gradient and, optionally, its
hessian with respect to a set of seed variables.  Jets are tagged: every call
to :func:`seed` draws a fresh tag, and when two jets with different tags meet
in an arithmetic operation the one with the larger tag is the active variable
while the other is treated as a constant coefficient.  This makes jets nest,
so a function whose evaluation already differentiates (for instance a
constraint built from the Legendre map) can itself be differentiated again.

User fields are plain Python callables ``f(q, v)`` written with ordinary
arithmetic and the elementary functions exported here (``sqrt``, ``exp``,
...) or the matching numpy ufuncs, which dispatch to the jet methods on object
arrays.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, EvaluationError

__all__ = [
    "Jet",
    "ChartPoint",
    "Jet2",
    "seed",
    "primal",
    "taylor",
    "eval_jet2",
    "eval_gradient",
    "directional_derivative",
    "solve_small",
    "sqrt",
    "exp",
    "log",
    "sin",
    "cos",
    "tan",
    "tanh",
    "sinh",
    "cosh",
    "arctan",
]

_tags = itertools.count(1)


def _outer(a, b):
    return np.multiply.outer(a, b)


class Jet:
    """Truncated Taylor expansion ``val + grad·h + ½ hᵀ·hess·h``.

    ``hess`` is ``None`` for first-order jets.  Coefficients are floats or
    jets carrying a smaller tag.
    """

    __slots__ = ("val", "grad", "hess", "tag")

    def __init__(self, val, grad, hess, tag):
        self.val = val
        self.grad = grad
        self.hess = hess
        self.tag = tag

    # -- helpers -----------------------------------------------------------

    def _rank(self, other):
        # 1: same seeds, 0: constant, -1: other is the active variable
        if isinstance(other, Jet):
            if other.tag == self.tag:
                return 1
            if other.tag > self.tag:
                return -1
        return 0

    def _const(self, val):
        return Jet(val, self.grad, self.hess, self.tag)

    def _chain(self, f0, f1, f2):
        grad = self.grad * f1
        if self.hess is None:
            return Jet(f0, grad, None, self.tag)
        return Jet(f0, grad, self.hess * f1 + _outer(self.grad, self.grad) * f2, self.tag)

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, np.ndarray):
            return NotImplemented
        rank = self._rank(other)
        if rank < 0:
            return other.__radd__(self)
        if rank:
            hess = None if self.hess is None else self.hess + other.hess
            return Jet(self.val + other.val, self.grad + other.grad, hess, self.tag)
        return self._const(self.val + other)

    def __radd__(self, other):
        return self._const(other + self.val)

    def __sub__(self, other):
        if isinstance(other, np.ndarray):
            return NotImplemented
        rank = self._rank(other)
        if rank < 0:
            return other.__rsub__(self)
        if rank:
            hess = None if self.hess is None else self.hess - other.hess
            return Jet(self.val - other.val, self.grad - other.grad, hess, self.tag)
        return self._const(self.val - other)

    def __rsub__(self, other):
        hess = None if self.hess is None else -self.hess
        return Jet(other - self.val, -self.grad, hess, self.tag)

    def __neg__(self):
        hess = None if self.hess is None else -self.hess
        return Jet(-self.val, -self.grad, hess, self.tag)

    def __pos__(self):
        return self

    def __mul__(self, other):
        if isinstance(other, np.ndarray):
            return NotImplemented
        rank = self._rank(other)
        if rank < 0:
            return other.__rmul__(self)
        if rank:
            grad = self.grad * other.val + other.grad * self.val
            hess = None
            if self.hess is not None:
                cross = _outer(self.grad, other.grad)
                hess = self.hess * other.val + other.hess * self.val + cross + cross.T
            return Jet(self.val * other.val, grad, hess, self.tag)
        hess = None if self.hess is None else self.hess * other
        return Jet(self.val * other, self.grad * other, hess, self.tag)

    def __rmul__(self, other):
        hess = None if self.hess is None else self.hess * other
        return Jet(other * self.val, self.grad * other, hess, self.tag)

    def reciprocal(self):
        r = 1.0 / self.val
        return self._chain(r, -r * r, 2.0 * r * r * r)

    def __truediv__(self, other):
        if isinstance(other, np.ndarray):
            return NotImplemented
        rank = self._rank(other)
        if rank < 0:
            return other.__rtruediv__(self)
        if rank:
            return self * other.reciprocal()
        inv = 1.0 / other
        return self * inv

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, power):
        if isinstance(power, np.ndarray):
            return NotImplemented
        if isinstance(power, Jet):
            if power.tag > self.tag:
                return power.__rpow__(self)
            return exp(log(self) * power)
        if isinstance(power, (int, np.integer)) or float(power).is_integer():
            k = int(power)
            if k == 0:
                return self * 0.0 + 1.0
            if k == 1:
                return self
            if k == 2:
                return self * self
            if k < 0:
                return (self ** (-k)).reciprocal()
        x = self.val
        return self._chain(x**power, power * x ** (power - 1), power * (power - 1) * x ** (power - 2))

    def __rpow__(self, base):
        return exp(self * log(base))

    def __abs__(self):
        return self if primal(self) >= 0 else -self

    # -- elementary functions (numpy ufuncs on object arrays call these) ---

    def sqrt(self):
        s = sqrt(self.val)
        d1 = 0.5 / s
        return self._chain(s, d1, -0.5 * d1 / self.val)

    def exp(self):
        e = exp(self.val)
        return self._chain(e, e, e)

    def log(self):
        r = 1.0 / self.val
        return self._chain(log(self.val), r, -r * r)

    def sin(self):
        s, c = sin(self.val), cos(self.val)
        return self._chain(s, c, -s)

    def cos(self):
        s, c = sin(self.val), cos(self.val)
        return self._chain(c, -s, -c)

    def tan(self):
        t = tan(self.val)
        sec2 = 1.0 + t * t
        return self._chain(t, sec2, 2.0 * t * sec2)

    def tanh(self):
        t = tanh(self.val)
        d = 1.0 - t * t
        return self._chain(t, d, -2.0 * t * d)

    def sinh(self):
        sh, ch = sinh(self.val), cosh(self.val)
        return self._chain(sh, ch, sh)

    def cosh(self):
        sh, ch = sinh(self.val), cosh(self.val)
        return self._chain(ch, sh, ch)

    def arctan(self):
        d = 1.0 / (1.0 + self.val * self.val)
        return self._chain(arctan(self.val), d, -2.0 * self.val * d * d)

    # -- comparisons act on the underlying real value ------------------------

    def __lt__(self, other):
        return primal(self) < primal(other)

    def __le__(self, other):
        return primal(self) <= primal(other)

    def __gt__(self, other):
        return primal(self) > primal(other)

    def __ge__(self, other):
        return primal(self) >= primal(other)

    def __repr__(self):
        return f"Jet({self.val!r}, grad={self.grad!r}, tag={self.tag})"


def _elementary(name, fallback):
    def func(x):
        if isinstance(x, Jet):
            return getattr(x, name)()
        if isinstance(x, np.ndarray) and x.dtype == object:
            out = np.empty(x.shape, dtype=object)
            for idx, e in np.ndenumerate(x):
                out[idx] = func(e)
            return out
        return fallback(x)

    func.__name__ = name
    func.__doc__ = f"``{name}`` accepting floats, arrays and jets."
    return func


sqrt = _elementary("sqrt", np.sqrt)
exp = _elementary("exp", np.exp)
log = _elementary("log", np.log)
sin = _elementary("sin", np.sin)
cos = _elementary("cos", np.cos)
tan = _elementary("tan", np.tan)
tanh = _elementary("tanh", np.tanh)
sinh = _elementary("sinh", np.sinh)
cosh = _elementary("cosh", np.cosh)
arctan = _elementary("arctan", np.arctan)


def primal(x):
    """Strip every jet layer and return plain floats (scalar or array)."""
    if isinstance(x, Jet):
        while isinstance(x, Jet):
            x = x.val
        return float(x)
    if isinstance(x, np.ndarray):
        if x.dtype != object:
            return x
        out = np.empty(x.shape, dtype=float)
        for idx, e in np.ndenumerate(x):
            out[idx] = primal(e)
        return out
    if isinstance(x, (list, tuple)):
        return np.array([primal(e) for e in x], dtype=float)
    return float(x)


def _tidy(arr):
    """Return a float array when no entry carries derivative information."""
    arr = np.asarray(arr)
    if arr.dtype == object and not any(isinstance(e, Jet) for e in arr.flat):
        return arr.astype(float)
    return arr


def seed(values: Sequence, order: int = 2):
    """Create independent variables at ``values``.

    Returns an object array of jets and the tag that identifies them.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    values = list(values)
    k = len(values)
    tag = next(_tags)
    eye = np.eye(k)
    zero = np.zeros((k, k)) if order == 2 else None
    xs = np.empty(k, dtype=object)
    for i, x in enumerate(values):
        xs[i] = Jet(x, eye[i], zero, tag)
    return xs, tag


def _parts(y, tag, k):
    if isinstance(y, Jet) and y.tag == tag:
        hess = y.hess if y.hess is not None else np.zeros((k, k))
        return y.val, y.grad, hess
    if isinstance(y, Jet) and y.tag > tag:
        raise RuntimeError("escaped jet: result depends on variables created inside the function")
    return y, np.zeros(k), np.zeros((k, k))


def taylor(func: Callable, x: Sequence, order: int = 2):
    """Value, jacobian and hessian of ``func`` at ``x``.

    ``func`` maps a 1-d array to a scalar or a 1-d array.  For a scalar result
    the jacobian has shape ``(k,)`` and the hessian ``(k, k)``; for an array
    result of length ``m`` they have shapes ``(m, k)`` and ``(m, k, k)``.
    With ``order=1`` the hessian is returned as zeros.
    """
    xs, tag = seed(x, order)
    k = len(xs)
    out = func(xs)
    if isinstance(out, (np.ndarray, list, tuple)):
        parts = [_parts(y, tag, k) for y in out]
        val = _tidy(np.array([p[0] for p in parts], dtype=object))
        jac = _tidy(np.array([p[1] for p in parts], dtype=object).reshape(len(parts), k))
        hess = _tidy(np.array([p[2] for p in parts], dtype=object).reshape(len(parts), k, k))
        return val, jac, hess
    val, grad, hess = _parts(out, tag, k)
    if not isinstance(val, Jet):
        val = float(val)
    return val, _tidy(grad), _tidy(hess)


def _coords(x) -> np.ndarray:
    arr = np.asarray(x)
    if arr.dtype != object:
        arr = arr.astype(float)
    return arr.reshape(-1) if arr.ndim == 0 else arr


@dataclass(frozen=True, eq=False)
class ChartPoint:
    """A point ``(q, v)`` of a velocity chart.

    Entries are floats, or jets when the point is being differentiated.
    """

    q: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        q, v = _coords(self.q), _coords(self.v)
        if q.ndim != 1 or q.shape != v.shape or q.size < 1:
            raise ValueError(f"q and v must be 1-d of equal length >= 1, got {q.shape} and {v.shape}")
        if not (np.all(np.isfinite(primal(q))) and np.all(np.isfinite(primal(v)))):
            raise ValueError("chart point has non-finite coordinates")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "v", v)

    @property
    def n(self) -> int:
        return self.q.size

    @property
    def is_float(self) -> bool:
        return self.q.dtype != object and self.v.dtype != object

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.q, self.v])

    @classmethod
    def from_array(cls, z) -> "ChartPoint":
        z = _coords(z)
        n = z.size // 2
        return cls(z[:n], z[n:])

    def primal(self) -> "ChartPoint":
        return self if self.is_float else ChartPoint(primal(self.q), primal(self.v))

    def __repr__(self):
        return f"ChartPoint(q={self.q!r}, v={self.v!r})"


@dataclass(frozen=True)
class Jet2:
    """Value, gradient and hessian of a scalar field at a chart point."""

    value: object
    grad_q: np.ndarray
    grad_v: np.ndarray
    hess_qq: np.ndarray
    hess_qv: np.ndarray
    hess_vv: np.ndarray

    @property
    def grad(self) -> np.ndarray:
        return np.concatenate([self.grad_q, self.grad_v])

    @property
    def hess(self) -> np.ndarray:
        return np.block([[self.hess_qq, self.hess_qv], [self.hess_qv.T, self.hess_vv]])


def _check_domain(p, domain):
    if domain is not None:
        pp = p.primal()
        if not domain(pp.q, pp.v):
            raise DomainError(f"point {pp} is outside the domain")


def _check_finite(*blocks):
    for b in blocks:
        if not np.all(np.isfinite(primal(b))):
            raise EvaluationError("field evaluation produced non-finite values")


def eval_jet2(f: Callable, p: ChartPoint, domain: Callable | None = None) -> Jet2:
    """Exact value, gradient and hessian of ``f(q, v)`` at ``p``."""
    _check_domain(p, domain)
    n = p.n
    val, grad, hess = taylor(lambda z: f(z[:n], z[n:]), p.as_array(), order=2)
    if hess.dtype != object:
        hess = 0.5 * (hess + hess.T)
    _check_finite(val, grad, hess)
    return Jet2(val, grad[:n], grad[n:], hess[:n, :n], hess[:n, n:], hess[n:, n:])


def eval_gradient(f: Callable, p: ChartPoint, domain: Callable | None = None):
    """First-order pass: ``(value, grad_q, grad_v)`` of ``f`` at ``p``."""
    _check_domain(p, domain)
    n = p.n
    val, grad, _ = taylor(lambda z: f(z[:n], z[n:]), p.as_array(), order=1)
    _check_finite(val, grad)
    return val, grad[:n], grad[n:]


def directional_derivative(f: Callable, p: ChartPoint, dq, dv, domain: Callable | None = None):
    """Derivative of ``f`` at ``p`` along the tangent vector ``(dq, dv)``.

    A single first-order pass; ``f`` may be any scalar field on chart points
    given as ``f(q, v)``.
    """
    _check_domain(p, domain)
    (t,), tag = seed([0.0], order=1)
    dq = _coords(dq)
    dv = _coords(dv)
    y = f(p.q + dq * t, p.v + dv * t)
    _, grad, _ = _parts(y, tag, 1)
    d = grad[0]
    _check_finite(d)
    return float(d) if not isinstance(d, Jet) else d


def solve_small(a, b):
    """Solve the square system ``a x = b`` by Gaussian elimination.

    Works for any scalar type, including jets; pivots on the magnitude of the
    underlying real values.  Intended for the few-by-few systems that arise
    when differentiating through multiplier solves.
    """
    a = [list(row) for row in np.asarray(a, dtype=object)]
    b = list(np.asarray(b, dtype=object).reshape(-1))
    k = len(b)
    for col in range(k):
        piv = max(range(col, k), key=lambda r: abs(primal(a[r][col])))
        if primal(a[piv][col]) == 0.0:
            raise np.linalg.LinAlgError("singular matrix")
        a[col], a[piv] = a[piv], a[col]
        b[col], b[piv] = b[piv], b[col]
        for r in range(col + 1, k):
            f = a[r][col] / a[col][col]
            for c in range(col, k):
                a[r][c] = a[r][c] - f * a[col][c]
            b[r] = b[r] - f * b[col]
    x = [0.0] * k
    for r in reversed(range(k)):
        acc = b[r]
        for c in range(r + 1, k):
            acc = acc - a[r][c] * x[c]
        x[r] = acc / a[r][r]
    return _tidy(np.array(x, dtype=object))
