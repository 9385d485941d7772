import numpy as np
import pytest

from fibredrive import jets
from fibredrive.fibrecalc import (
    BundleMap,
    check_chain_rule,
    check_pairing_rule,
    check_product_rule,
    fibre_derivative,
    fibre_hessian,
    liouville_identities,
    random_polynomial_map,
    run_calculus_suite,
)

from oracles import fd_jacobian, rel_error


def quad_map():
    # f(x, a) = (x₁ a₁ a₂, a₁² + x₁)
    return BundleMap(1, 2, 2, lambda x, a: np.array([x[0] * a[0] * a[1], a[0] ** 2 + x[0]], dtype=object))


def test_fibre_derivative_closed_form():
    d = fibre_derivative(quad_map(), [2.0], [3.0, 5.0]).matrix
    np.testing.assert_allclose(d, [[10.0, 6.0], [6.0, 0.0]])


def test_fibre_hessian_closed_form():
    h = fibre_hessian(quad_map(), [2.0], [3.0, 5.0]).tensor
    np.testing.assert_allclose(h[0], [[0.0, 2.0], [2.0, 0.0]])
    np.testing.assert_allclose(h[1], [[2.0, 0.0], [0.0, 0.0]])


def test_linear_map_has_constant_derivative():
    A = np.array([[1.0, 2.0, 0.5], [-1.0, 0.0, 3.0]])
    f = BundleMap(1, 3, 2, lambda x, a: A @ a + x[0])
    for a in ([0.0, 0.0, 0.0], [1.0, -2.0, 4.0]):
        np.testing.assert_array_equal(fibre_derivative(f, [7.0], a).matrix, A)
        assert not np.any(fibre_hessian(f, [7.0], a).tensor)


def test_random_maps_against_differences():
    rng = np.random.default_rng(11)
    for _ in range(10):
        f = random_polynomial_map(rng, 2, 3, 2)
        x, a = rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 3)
        fd = fd_jacobian(lambda z: f(x, z), a)
        assert rel_error(fibre_derivative(f, x, a).matrix, fd) < 1e-6


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        fibre_derivative(quad_map(), [1.0, 2.0], [1.0, 1.0])
    bad = BundleMap(1, 2, 3, lambda x, a: a)
    with pytest.raises(ValueError):
        fibre_derivative(bad, [0.0], [1.0, 1.0])


def test_rules_on_random_instances():
    rng = np.random.default_rng(5)
    for _ in range(10):
        f = random_polynomial_map(rng, 2, 2, 3)
        phi = random_polynomial_map(rng, 2, 2, 3)
        g = random_polynomial_map(rng, 2, 3, 2)
        s = random_polynomial_map(rng, 2, 2, 1)
        x, a = rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 2)
        assert check_product_rule(f, lambda xx, aa: s(xx, aa)[0], x, a) <= 1e-12
        assert check_pairing_rule(phi, f, x, a) <= 1e-12
        assert check_chain_rule(g, f, x, a) <= 1e-12


def test_liouville_on_homogeneous_function():
    # degree-3 homogeneous: Δ·g = 3g, so both identities hold with exact values
    g = lambda x, e: x[0] * e[0] ** 2 * e[1] + e[1] ** 3
    r1, r2 = liouville_identities(g, [1.5], [0.4, -0.7])
    assert r1 <= 1e-14 and r2 <= 1e-14
    (s,), tag = jets.seed([0.0], order=1)
    val = g([1.5], np.array([0.4, -0.7]) * jets.exp(s))
    assert val.grad[0] == pytest.approx(3 * g([1.5], [0.4, -0.7]))


def test_liouville_on_non_polynomial():
    g = lambda x, e: jets.sin(e[0] * e[1]) + x[0] * jets.exp(e[0])
    assert max(liouville_identities(g, [0.3], [0.8, -1.1])) <= 1e-12


def test_suite_default_passes():
    res = run_calculus_suite(seed=42, count=20)
    assert res["passed"]
    assert set(res) == {"product", "pairing", "chain", "liouville", "passed"}


def test_suite_zero_count_is_vacuous():
    res = run_calculus_suite(count=0)
    assert res["passed"]
    assert all(res[k]["max_residual"] == 0.0 for k in ("product", "chain"))


def test_suite_detects_broken_rule():
    # product rule with the f ⊗ Dφ term dropped
    def broken(rng):
        f = random_polynomial_map(rng, 1, 2, 2)
        phi = random_polynomial_map(rng, 1, 2, 1)
        x, a = rng.uniform(-1, 1, 1), rng.uniform(-1, 1, 2)
        prod = BundleMap(1, 2, 2, lambda xx, aa: f(xx, aa) * phi(xx, aa)[0])
        lhs = fibre_derivative(prod, x, a).matrix
        rhs = fibre_derivative(f, x, a).matrix * phi(x, a)[0]
        return rel_error(lhs, rhs)

    res = run_calculus_suite(seed=1, count=5, checks={"broken_product": broken})
    assert not res["passed"]
    assert res["broken_product"]["max_residual"] > 1e-6
