import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kobalab.constraints import (CylinderConstraint, EllipsoidConstraint, ExpFlatConstraint, FunctionConstraint,
                                 HalfspaceConstraint, cnorm, constraint_from_dict, flat_profile,
                                 flat_profile_inverse, from_real, golden_min, lipschitz_exit, march_bisect_exit,
                                 raycast_line_gap, to_real)
from kobalab.errors import ParseError

CONSTRAINTS = [EllipsoidConstraint(np.zeros(2, complex), np.array([2.0, 1.0])),
               CylinderConstraint(1, 0.0, 1.0),
               HalfspaceConstraint(np.array([1, 0], complex), 0.5),
               ExpFlatConstraint(0.5)]


def test_real_complex_roundtrip():
    x = np.arange(8.0).reshape(2, 4)
    np.testing.assert_array_equal(to_real(from_real(x)), x)
    assert from_real(x).shape == (2, 2)


@given(a=st.floats(-3, 3), w=st.floats(0.1, 4))
@settings(max_examples=30, deadline=None)
def test_golden_min_parabola(a, w):
    x, f = golden_min(lambda t: (t - a) ** 2, a - w, a + 0.7 * w, iters=60)
    assert x == pytest.approx(a, abs=1e-8)


def test_flat_profile_inverse():
    t = np.array([1e-10, 1e-3, 0.3])
    for alpha in (0.5, 2.0):
        np.testing.assert_allclose(flat_profile(flat_profile_inverse(t, alpha), alpha), t, rtol=1e-12)
    assert flat_profile(0.0, 2.0) == 0


@pytest.mark.parametrize("c", CONSTRAINTS, ids=lambda c: c.type)
def test_exact_exit_matches_march(c):
    rng = np.random.default_rng(0)
    Z = from_real(rng.uniform(-0.3, 0.3, size=(40, 4))) + np.array([0.4, 0])
    Z = Z[c.value(Z) < 0]
    U = from_real(rng.normal(size=(len(Z), 4)))
    U /= cnorm(U)[:, None]
    exact = c.ray_exit(Z, U, 4.0)
    marched = march_bisect_exit(c.value, Z, U, 4.0)
    fin = np.isfinite(exact) & np.isfinite(marched)
    np.testing.assert_allclose(exact[fin], marched[fin], rtol=1e-6, atol=1e-9)


def test_lipschitz_exit_flat_profile():
    c = ExpFlatConstraint(2.0)
    z = np.array([[np.exp(-4.0), 0]], complex)
    t = lipschitz_exit(c.value, z, np.array([[0, 1]], complex), 2.0, c.lipschitz())
    assert t[0] == pytest.approx(0.5, rel=1e-9)


def test_lipschitz_exit_no_crossing_is_inf():
    c = HalfspaceConstraint(np.array([1, 0], complex), 0.0)
    t = lipschitz_exit(c.value, np.array([[-0.5, 0]], complex), np.array([[-1, 0]], complex), 1.0, 1.0)
    assert np.isinf(t[0])


@pytest.mark.parametrize("c", CONSTRAINTS, ids=lambda c: c.type)
def test_line_gap_matches_raycast(c):
    rng = np.random.default_rng(1)
    Z = from_real(rng.uniform(-0.2, 0.2, size=(20, 4))) + np.array([0.3, 0])
    Z = Z[c.value(Z) < 0]
    V = from_real(rng.normal(size=(len(Z), 4)))
    exact = c.line_gap(Z, V, 4.0)
    ray = raycast_line_gap(lambda A, U: c.ray_exit(A, U, 4.0), Z, V)
    fin = np.isfinite(exact)
    np.testing.assert_allclose(exact[fin], ray[fin], rtol=1e-5, atol=1e-9)
    coarse = c.line_gap(Z, V, 4.0, coarse=True)
    np.testing.assert_allclose(coarse[fin], ray[fin], rtol=1e-2)


def test_function_constraint_gradient_fd():
    f = FunctionConstraint(lambda Z: np.sum(np.abs(Z) ** 2, axis=-1) - 1)
    g = f.gradient(np.array([0.3, 0.4j]))
    np.testing.assert_allclose(g, [0.6, 0.8j], atol=1e-5)
    assert f.scaled(2.0).value(np.array([1.0, 0])) == pytest.approx(-0.75)


def test_constraint_dict_roundtrip():
    for c in CONSTRAINTS:
        back = constraint_from_dict(c.to_dict())
        assert back.to_dict() == c.to_dict()
    with pytest.raises(ParseError):
        constraint_from_dict({"type": "torus"})
    with pytest.raises(ParseError):
        constraint_from_dict({"type": "halfspace", "normal": [1, 0, 0, 0], "offset": 0, "extra": 1})


def test_exp_flat_convexity_radius():
    c = ExpFlatConstraint(2.0)
    r = c.convexity_radius()
    # the profile's second derivative changes sign there
    h = 1e-4
    second = lambda s: flat_profile(s + h, 2.0) - 2 * flat_profile(s, 2.0) + flat_profile(s - h, 2.0)
    assert second(0.9 * r) > 0 > second(1.1 * r)
