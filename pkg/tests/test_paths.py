import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kobalab.domains import bidisc, unit_ball
from kobalab.errors import NotInterior, SegmentExitsDomain
from kobalab.metric import ball_oracle_distance, bidisc_oracle_distance
from kobalab.paths import (PathPolyline, distance_upper, distance_upper_batch, optimise_paths,
                           path_length_upper, resample, segment_costs)

B = unit_ball()


def test_polyline_invariants():
    with pytest.raises(ValueError):
        PathPolyline(np.array([[0.1, 0], [0.1, 0]], complex))
    with pytest.raises(ValueError):
        PathPolyline(np.array([[0.1, 0]], complex))
    p = PathPolyline.straight([0, 0], [0.5, 0])
    assert p.euclidean_length() == pytest.approx(0.5)
    assert np.all(p.reversed().start == p.end)


@pytest.mark.parametrize("r, expected", [(0.5, np.log(2)), (0.9, np.log(10))])
def test_segment_integral(r, expected):
    path = PathPolyline.straight([0, 0], [r, 0])
    assert path_length_upper(B, path, h=1e-5) == pytest.approx(expected, rel=1e-8)
    value, err = path_length_upper(B, path, return_error=True)
    assert abs(value - expected) <= 2 * err


def test_quadrature_converges():
    path = PathPolyline(np.array([[0, 0], [0.6, 0.3j], [0.2, -0.5]], complex))
    exact = path_length_upper(B, path, h=1e-5)
    errs = [abs(path_length_upper(B, path, h=h) - exact) for h in (2e-2, 1e-2, 5e-3)]
    # second order: halving h divides the error by about four
    assert errs[1] < 0.3 * errs[0] and errs[2] < 0.3 * errs[1]


def test_segment_exits():
    with pytest.raises(SegmentExitsDomain):
        path_length_upper(bidisc(), PathPolyline(np.array([[0.9, 0], [1.5, 0], [-0.9, 0]], complex)))


def test_distance_upper_examples():
    u = distance_upper(B, [0, 0], [0.5, 0])
    straight = path_length_upper(B, PathPolyline.straight([0, 0], [0.5, 0]))
    assert 0.549306 <= u <= straight + 1e-12
    assert u <= np.log(2) + 1e-6
    assert distance_upper(B, [0.2, 0.1j], [0.2, 0.1j]) == 0
    D = bidisc()
    k = bidisc_oracle_distance([0.9, 0], [-0.9, 0])
    u = distance_upper(D, [0.9, 0], [-0.9, 0])
    assert k <= u <= 2 * k
    with pytest.raises(NotInterior):
        distance_upper(B, [0, 0], [1.2, 0])


def test_distance_upper_symmetric():
    p, q = np.array([0.3, -0.4j]), np.array([-0.6, 0.2])
    assert distance_upper(B, p, q, vertex_budget=9) == pytest.approx(distance_upper(B, q, p, vertex_budget=9),
                                                                     abs=1e-9)


def test_triangle_inequality():
    rng = np.random.default_rng(0)
    for _ in range(5):
        P = rng.uniform(-0.5, 0.5, size=(3, 2)) + 1j * rng.uniform(-0.3, 0.3, size=(3, 2))
        up = distance_upper_batch(B, P[[0, 1, 0]], P[[1, 2, 2]], vertex_budget=9, rounds=20)
        assert up[2] <= up[0] + up[1] + 1e-6


def test_optimiser_monotone():
    V = np.linspace([-0.8, 0.5j], [0.8, 0.5j], 5)[None]
    V[0, 1:-1] += 0.05
    _, hist = optimise_paths(B, V, rounds=20)
    h = np.array(hist)[:, 0]
    assert np.all(np.diff(h) <= 1e-15)


def test_upper_bounds_oracle_batch():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(20, 2, 2)) + 1j * rng.normal(size=(20, 2, 2))
    x *= 0.95 * rng.uniform(size=(20, 2, 1)) / np.linalg.norm(x, axis=-1, keepdims=True)
    up = distance_upper_batch(B, x[:, 0], x[:, 1], vertex_budget=9, rounds=20)
    k = np.array([ball_oracle_distance(a, b) for a, b in x])
    assert np.all(k <= up + 1e-9)
    assert np.all(up <= 2 * k + 1e-6)


@given(m=st.integers(2, 40))
@settings(max_examples=20, deadline=None)
def test_resample_keeps_endpoints(m):
    V = np.array([[0, 0], [0.3, 0.1j], [0.5, 0.5]], complex)
    R = resample(V, m)
    assert len(R) == m
    assert np.all(R[0] == V[0]) and np.all(R[-1] == V[-1])


def test_segment_costs_outside_is_infinite():
    c = segment_costs(B, np.array([[0.5, 0]], complex), np.array([[1.5, 0]], complex))
    assert np.isinf(c[0])
