import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kobalab.constraints import cnorm, from_real
from kobalab.domains import (ball_window, bidisc, boundary_distance, contains, directional_boundary_distance,
                             domain_from_dict, domain_from_json, domain_to_json, ellipsoid, exp_model,
                             intersect_window, inward_normal, ray_exit_time, unit_ball, Window,
                             window_meets_boundary)
from kobalab.errors import EmptyIntersection, NotInterior, ParseError

BUILTINS = [unit_ball(), ellipsoid((2.0, 1.0)), bidisc(), exp_model(2.0), exp_model(0.5)]


def interior_points(domain, count, seed):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        x = rng.uniform(-1, 1, size=(4 * count, 2 * domain.n)) * domain.bounding_radius
        Z = from_real(x)
        out.extend(Z[contains(domain, Z)])
    return np.array(out[:count])


def test_contains_examples():
    assert contains(unit_ball(), [0, 0])
    assert not contains(unit_ball(), [1, 0])
    assert contains(exp_model(2.0), [0.5, 0])


def test_ray_exit_examples():
    B = unit_ball()
    assert ray_exit_time(B, [0, 0], [0.3, 0.4j]) == pytest.approx(1.0)
    assert ray_exit_time(B, [0.5, 0], [1, 0]) == pytest.approx(0.5)
    assert ray_exit_time(ellipsoid((2, 1)), [0, 0], [1, 0]) == pytest.approx(2.0)


def test_ray_exit_errors():
    with pytest.raises(NotInterior):
        ray_exit_time(unit_ball(), [1.5, 0], [1, 0])
    with pytest.raises(ValueError):
        ray_exit_time(unit_ball(), [0, 0], [1, 0], tol=0)


@pytest.mark.parametrize("domain", BUILTINS, ids=lambda d: d.kind + str(d.params.get("alpha", "")))
def test_closed_forms_match_raycast(domain):
    Z = interior_points(domain, 20, 1)
    rng = np.random.default_rng(2)
    U = from_real(rng.normal(size=(20, 2 * domain.n)))
    t_auto = ray_exit_time(domain, Z, U)
    t_ray = ray_exit_time(domain, Z, U, method="raycast")
    np.testing.assert_allclose(t_auto, t_ray, rtol=1e-5)
    d_auto = boundary_distance(domain, Z[:6])
    d_ray = boundary_distance(domain, Z[:6], method="raycast")
    # the ray-cast distance is a minimum over finitely many directions
    assert np.all(d_ray >= d_auto * (1 - 1e-5))
    np.testing.assert_allclose(d_auto, d_ray, rtol=2e-3)


def test_boundary_distance_examples():
    assert boundary_distance(unit_ball(), [0, 0]) == pytest.approx(1.0)
    assert boundary_distance(bidisc(), [0.5, 0.9]) == pytest.approx(0.1)
    # ellipsoid (2,1) at (1,0): brute force over a dense boundary sample
    th = np.linspace(0, 2 * np.pi, 200001)
    x, y = 2 * np.cos(th), np.sin(th)
    brute = np.min(np.hypot(x - 1, y))
    assert boundary_distance(ellipsoid((2, 1)), [1, 0]) == pytest.approx(brute, rel=1e-6)


def test_boundary_distance_not_interior():
    with pytest.raises(NotInterior):
        boundary_distance(unit_ball(), [1, 0])


def test_directional_examples():
    B = unit_ball()
    assert directional_boundary_distance(B, [0, 0], [0.6, 0.8j]) == pytest.approx(1.0)
    assert directional_boundary_distance(B, [0.5, 0], [1, 0]) == pytest.approx(0.5)
    E = exp_model(2.0)
    assert directional_boundary_distance(E, [np.exp(-4.0), 0], [0, 1]) == pytest.approx(0.5, rel=1e-6)


@pytest.mark.parametrize("domain", BUILTINS, ids=lambda d: d.kind + str(d.params.get("alpha", "")))
def test_gap_ordering(domain):
    Z = interior_points(domain, 30, 3)
    V = from_real(np.random.default_rng(4).normal(size=(30, 2 * domain.n)))
    d = boundary_distance(domain, Z)
    g = directional_boundary_distance(domain, Z, V)
    assert np.all(d <= g * (1 + 1e-9))
    assert np.all(g <= 2 * domain.bounding_radius)


@pytest.mark.parametrize("domain", BUILTINS[:3], ids=lambda d: d.kind)
@given(s=st.floats(0.2, 5.0))
@settings(max_examples=10, deadline=None)
def test_scaling_covariance(domain, s):
    Z = interior_points(domain, 5, 5)
    V = from_real(np.random.default_rng(6).normal(size=(5, 2 * domain.n)))
    D = domain.scaled(s)
    np.testing.assert_allclose(boundary_distance(D, s * Z), s * boundary_distance(domain, Z), rtol=1e-6)
    np.testing.assert_allclose(directional_boundary_distance(D, s * Z, V),
                               s * directional_boundary_distance(domain, Z, V), rtol=1e-6)


def test_bounding_radius_by_rejection():
    for domain in BUILTINS:
        Z = interior_points(domain, 200, 7)
        assert np.all(cnorm(Z) < domain.bounding_radius)


def test_intersection_monotone_and_transparent():
    B = unit_ball()
    U = ball_window([1, 0], 0.8)
    sub = intersect_window(B, U)
    Z = interior_points(sub, 50, 8)
    V = from_real(np.random.default_rng(9).normal(size=(50, 4)))
    assert np.all(boundary_distance(sub, Z) <= boundary_distance(B, Z) + 1e-12)
    gs, gf = directional_boundary_distance(sub, Z, V), directional_boundary_distance(B, Z, V)
    assert np.all(gs <= gf * (1 + 1e-9))
    mask = gf < U.boundary_gap(Z)
    assert mask.any()
    np.testing.assert_allclose(gs[mask], gf[mask], rtol=1e-6)


def test_empty_intersection():
    with pytest.raises(EmptyIntersection):
        intersect_window(unit_ball(), ball_window([3, 0], 0.5))


def test_window_meets_boundary():
    assert window_meets_boundary(unit_ball(), ball_window([1, 0], 0.3))
    assert not window_meets_boundary(unit_ball(), ball_window([0, 0], 0.3))


def test_inward_normal_ball():
    n = inward_normal(unit_ball(), np.array([0.6, 0.0]))
    np.testing.assert_allclose(n, [-1, 0], atol=1e-6)


def test_json_roundtrip():
    for domain in BUILTINS + [intersect_window(unit_ball(), ball_window([1, 0], 0.5))]:
        text = domain_to_json(domain)
        back = domain_from_json(text)
        assert domain_to_json(back) == text


def test_json_rejects_unknown_fields():
    with pytest.raises(ParseError) as err:
        domain_from_dict({"kind": "unit-ball", "colour": 1})
    assert err.value.errors[0][0] == "colour"
    with pytest.raises(ParseError) as err:
        domain_from_dict({"kind": "torus"})
    assert err.value.errors[0][0] == "kind"
    with pytest.raises(ParseError):
        domain_from_json("{not json")
    with pytest.raises(ParseError) as err:
        domain_from_dict({"kind": "unit-ball", "basepoint": [2, 0, 0, 0]})
    assert err.value.errors[0][0] == "basepoint"


def test_window_validation():
    with pytest.raises(ValueError):
        Window(np.zeros(2, complex), -1.0)
    box = Window(np.zeros(2, complex), shape="box", half_widths=(1, 1, 1, 1))
    assert box.contains(np.zeros((1, 2), complex))[0]
    assert json.loads(json.dumps(box.to_dict()))["shape"] == "box"
