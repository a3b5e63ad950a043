import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kobalab.constraints import from_real
from kobalab.domains import ball_window, bidisc, directional_boundary_distance, ellipsoid, exp_model, unit_ball
from kobalab.errors import NoDiniWindow, NotCConvex, NotConvex, OutsideBall, OutsideBidisc
from kobalab.metric import (ball_oracle_distance, bidisc_oracle_distance, c_convex_lower, csv_rows,
                            distance_bracket, distance_lower_cconvex, distance_lower_convex,
                            distance_lower_projection, infinitesimal_bounds, localization_metric_check,
                            mercer_fit, nikolov_upper, oracle_distance)

B = unit_ball()


def random_ball_pairs(count, seed, radius=1.0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(count, 2, 4))
    x *= radius * rng.uniform(size=(count, 2, 1)) ** 0.25 / np.linalg.norm(x, axis=-1, keepdims=True)
    return from_real(x)


def test_infinitesimal_examples():
    b = infinitesimal_bounds(B, [0, 0], [0.6, 0.8])
    assert (b.lower, b.upper) == pytest.approx((0.5, 1.0))
    b = infinitesimal_bounds(B, [0.5, 0], [1, 0])
    assert (b.lower, b.upper) == pytest.approx((1.0, 2.0))
    b = infinitesimal_bounds(ellipsoid((2, 1)), [0, 0], [1, 0])
    assert (b.lower, b.upper) == pytest.approx((0.25, 0.5))


def test_infinitesimal_requires_convex():
    with pytest.raises(NotConvex):
        infinitesimal_bounds(exp_model(2.0, is_convex=False), [0.5, 0], [1, 0])


def test_c_convex_lower_examples():
    assert c_convex_lower(B, [0, 0], [1, 0]) == pytest.approx(0.25)
    assert c_convex_lower(bidisc(), [0, 0], [1, 0]) == pytest.approx(0.25)
    E = exp_model(0.5)
    z, v = np.array([0.05, 0.05]), np.array([0.3, 1.0])
    g = directional_boundary_distance(E, z, v)
    assert c_convex_lower(E, z, v) == pytest.approx(np.linalg.norm(v) / (4 * g))
    with pytest.raises(NotCConvex):
        c_convex_lower(exp_model(2.0, is_convex=False), [0.5, 0], [1, 0])


def test_ball_oracle_examples():
    assert ball_oracle_distance([0, 0], [0, 0]) == 0
    assert ball_oracle_distance([0, 0], [0.5, 0]) == pytest.approx(0.549306, abs=1e-6)
    assert ball_oracle_distance([0, 0], [0.9, 0]) == pytest.approx(1.472219, abs=1e-6)
    with pytest.raises(OutsideBall):
        ball_oracle_distance([0, 0], [1, 0])


def test_bidisc_oracle_examples():
    assert bidisc_oracle_distance([0.3, 0.2], [0.3, 0.2]) == 0
    # (1/2) log 361 = 2.944439; the listed 2.94494 has a transposed digit
    assert bidisc_oracle_distance([0.9, 0], [-0.9, 0]) == pytest.approx(0.5 * np.log(361), abs=1e-9)
    assert bidisc_oracle_distance([0.5, 0.5], [0.5, -0.5]) == pytest.approx(0.5 * np.log(9), abs=1e-6)
    with pytest.raises(OutsideBidisc):
        bidisc_oracle_distance([0, 0], [0, 1.2])


def test_ball_oracle_symmetric_and_invariant():
    P = random_ball_pairs(50, 0)
    for p, q in P:
        assert ball_oracle_distance(p, q) == pytest.approx(ball_oracle_distance(q, p), abs=1e-12)
        # unitary invariance
        U = np.array([[0, 1j], [1, 0]])
        assert ball_oracle_distance(U @ p, U @ q) == pytest.approx(ball_oracle_distance(p, q), abs=1e-10)


def test_ellipsoid_oracle_is_pullback():
    E = ellipsoid((2, 1))
    p, q = np.array([1.0, 0.2j]), np.array([-0.5, 0.3])
    assert oracle_distance(E, p, q) == pytest.approx(ball_oracle_distance(p / [2, 1], q / [2, 1]))
    assert oracle_distance(exp_model(0.5), [0.5, 0], [0.6, 0]) is None


def test_lower_convex_examples():
    assert distance_lower_convex(B, [0, 0], [0.9, 0]) == pytest.approx(0.5 * np.log(10), abs=1e-6)
    assert distance_lower_convex(B, [0.2, 0], [0.2, 0]) == 0
    assert distance_lower_convex(ellipsoid((2, 1)), [0, 0], [1.8, 0]) == pytest.approx(0.5 * np.log(10), abs=1e-6)


def test_lower_cconvex_examples():
    assert distance_lower_cconvex(B, [0, 0], [0.5, 0]) == pytest.approx(0.25 * np.log(2), abs=1e-6)
    assert distance_lower_cconvex(bidisc(), [0.9, 0], [-0.9, 0]) == pytest.approx(0.25 * np.log(19), abs=1e-6)
    with pytest.raises(NotCConvex):
        distance_lower_cconvex(exp_model(2.0, is_convex=False), [0.5, 0], [0.6, 0])


def test_nikolov_examples():
    assert nikolov_upper(B, [0, 0], [0.5, 0]) == pytest.approx(np.log(1 + 1 / np.sqrt(0.5)), abs=1e-6)
    assert nikolov_upper(B, [0.3, 0], [0.3, 0]) == 0
    # the formula value; the listed 1.900997 has an arithmetic slip
    assert nikolov_upper(B, [0.9, 0], [0.99, 0]) == pytest.approx(np.log(1 + 0.18 / np.sqrt(1e-3)), abs=1e-9)
    assert nikolov_upper(B, [0.9, 0], [0.99, 0]) >= ball_oracle_distance([0.9, 0], [0.99, 0])
    with pytest.raises(NoDiniWindow):
        nikolov_upper(bidisc(), [0, 0], [0.5, 0])


def test_lower_bounds_never_exceed_oracles():
    for p, q in random_ball_pairs(200, 1):
        k = ball_oracle_distance(p, q)
        assert distance_lower_convex(B, p, q) <= k + 1e-9
        assert distance_lower_cconvex(B, p, q) <= k + 1e-9
    D = bidisc()
    rng = np.random.default_rng(2)
    for _ in range(200):
        p, q = np.sqrt(rng.uniform(size=(2, 2))) * np.exp(2j * np.pi * rng.uniform(size=(2, 2)))
        k = bidisc_oracle_distance(p, q)
        assert distance_lower_convex(D, p, q) <= k + 1e-9
        assert distance_lower_cconvex(D, p, q) <= k + 1e-9


def test_projection_lower_bound_valid():
    for p, q in random_ball_pairs(20, 3):
        assert distance_lower_projection(B, p, q) <= ball_oracle_distance(p, q) + 1e-9


@given(seed=st.integers(0, 10 ** 6))
@settings(max_examples=15, deadline=None)
def test_lower_estimators_symmetric(seed):
    p, q = random_ball_pairs(1, seed)[0]
    for f in (distance_lower_convex, distance_lower_cconvex, nikolov_upper):
        assert f(B, p, q) == pytest.approx(f(B, q, p), abs=1e-9)


def test_bracket_contains_oracle():
    for p, q in random_ball_pairs(10, 4):
        est = distance_bracket(B, p, q, vertex_budget=9, rounds=20)
        k = ball_oracle_distance(p, q)
        assert est.lower <= k + 1e-9 <= est.upper + 2e-9
        assert est.rigorous_lower <= est.lower
    est = distance_bracket(B, [0.1, 0], [0.1, 0])
    assert est.lower == est.upper == 0


def test_bracket_ball_example():
    est = distance_bracket(B, [-0.5, 0], [0.5, 0])
    assert est.lower == pytest.approx(np.log(3), abs=1e-3)
    assert est.lower <= np.log(3) + 1e-9 <= est.upper


def test_mercer_ball():
    d = np.array([1e-1, 1e-2, 1e-3, 1e-4, 1e-5])
    Z = np.column_stack([1 - d, np.zeros_like(d)]).astype(complex)
    fit = mercer_fit(B, [0, 0], Z, distance=ball_oracle_distance)
    assert fit.beta_hat == 0.5
    assert fit.alpha_hat == pytest.approx(0.5 * np.log(2), abs=1e-4)
    fit = mercer_fit(B, [0, 0], np.array([[0, 0]], complex), distance=ball_oracle_distance)
    assert all(a == 0 for a in fit.alphas.values())


def test_localization_metric_example():
    rep = localization_metric_check(B, ball_window([1, 0], 0.8), np.array([[0.95, 0]]), np.array([[0, 1]]))
    r = rep["records"][0]
    assert r["gap_omega"] == pytest.approx(np.sqrt(1 - 0.95 ** 2), abs=1e-9)
    assert r["qualifies"] and rep["transparent"] and rep["monotone"]
    # at the window edge the window gap is smaller and the sample does not qualify
    rep = localization_metric_check(B, ball_window([1, 0], 0.8), np.array([[0.3, 0]]), np.array([[0, 1]]))
    r = rep["records"][0]
    assert not r["qualifies"] and r["gap_window"] < r["gap_omega"]


def test_csv_rows_format():
    text = csv_rows("s", [{"point": np.array([0.5, 0]), "direction": None, "lower": 1 / 3, "upper": 2 / 3,
                           "lower_method": "a", "upper_method": "b", "wall_ms": 1.0}], wall_time=False)
    assert text.splitlines()[1] == "s,0.5 0 0 0,,0.333333333,0.666666667,a,b"
