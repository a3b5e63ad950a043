import json

import numpy as np
import pytest

from kobalab.domains import ball_window, bidisc, ellipsoid, exp_model, intersect_window, unit_ball
from kobalab.errors import NotConvex, PathExitsWindow, UnknownMap
from kobalab.experiments import (BoundarySequenceSpec, _product, bracket_experiment, certificate_experiment,
                                 distance_interval, extension_maps, extension_probe, four_point_check,
                                 geodesic_stay_estimate, gromov_product, localization_distance_experiment,
                                 metric_localization_experiment, same_point_blowup_probe, visibility_experiment)
from kobalab.metric import ball_oracle_distance
from kobalab.paths import PathPolyline

B = unit_ball()
LEVELS = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)


def test_distance_interval_providers():
    lo, hi, how = distance_interval(B, [0, 0], [0.5, 0])
    assert lo == hi == pytest.approx(0.549306, abs=1e-6) and how == "oracle"
    lo, hi, how = distance_interval(B, [0, 0], [0.5, 0], provider="bracket", vertex_budget=5, rounds=5)
    assert lo <= 0.549307 and hi >= 0.549305 and how != "oracle"
    with pytest.raises(ValueError):
        distance_interval(exp_model(0.5), [0.5, 0], [0.6, 0], provider="oracle")
    with pytest.raises(ValueError):
        distance_interval(B, [0, 0], [0.5, 0], provider="psychic")


def test_gromov_trivial_examples():
    o, x = np.zeros(2), np.array([0.3, 0.2j])
    assert gromov_product(B, o, x, o) == (0.0, 0.0)
    lo, hi = gromov_product(B, x, x, o)
    assert lo == pytest.approx(ball_oracle_distance(x, o)) and hi == pytest.approx(lo)


def test_gromov_ball_example():
    d = 1e-3
    lo, hi = gromov_product(B, [1 - d, 0], [1 - d, 0], [0, 0])
    assert lo == pytest.approx(0.5 * np.log(2 / d), abs=1e-3)
    assert lo == pytest.approx(3.8, abs=0.05)


def test_gromov_on_geodesic_is_zero():
    lo, hi = gromov_product(B, [-0.5, 0], [0.5, 0], [0, 0])
    assert lo == 0 and hi == pytest.approx(0, abs=1e-12)


@pytest.mark.parametrize("a, b, c", [((1, 2), (0.5, 3), (0.1, 0.2)), ((0, 0.1), (2, 4), (3, 5)),
                                     ((1, 1), (1, 1), (0, 0))])
def test_product_interval_bounds(a, b, c):
    lo, hi = _product(a, b, c)
    assert 0 <= lo <= hi <= min(a[1], b[1])


def test_sequence_spec():
    s = BoundarySequenceSpec([1, 0], LEVELS)
    Z = s.points(B)
    np.testing.assert_allclose(1 - np.abs(Z[:, 0]), LEVELS)
    t = BoundarySequenceSpec([1, 0], LEVELS, tilt=30.0)
    assert np.all(np.abs(t.points(B)) < 1.0 + 0j)
    with pytest.raises(ValueError):
        BoundarySequenceSpec([1, 0], (1e-2, 1e-1))
    assert json.dumps(t.to_dict())


def test_blowup_ball():
    rep = same_point_blowup_probe(B, BoundarySequenceSpec([1, 0], LEVELS), [0, 0])
    assert rep.verdict == "pass"
    assert rep.stats["last_lower"] > 5.0
    assert rep.stats["max_relative_deviation"] < 0.1
    rep = same_point_blowup_probe(B, BoundarySequenceSpec([1, 0], LEVELS), [0, 0],
                                  seq2=BoundarySequenceSpec([-1, 0], LEVELS))
    assert rep.verdict == "pass" and rep.stats["mode"] == "distinct-points"


def test_blowup_requires_convex():
    with pytest.raises(NotConvex):
        same_point_blowup_probe(exp_model(2.0, is_convex=False), BoundarySequenceSpec([0, 0], LEVELS), [0.5, 0])


def test_four_point_ball():
    rep = four_point_check(B, tuples=50, seed=1)
    assert rep.verdict == "pass"
    assert rep.stats["delta_hat"] <= np.log(3)


def test_visibility_ball_and_bidisc():
    rep = visibility_experiment(B, [1, 0], [-1, 0], 0.3, trials=20, seed=0, node_budget=300)
    assert rep.verdict in ("pass", "inconclusive")
    assert rep.stats["m_min"] > 0.3
    rep = visibility_experiment(bidisc(), [1, 0.5], [1, -0.5], 0.3, trials=30, seed=0, node_budget=300)
    assert rep.verdict == "fail"


def test_visibility_seed_stable():
    a = visibility_experiment(B, [1, 0], [-1, 0], 0.3, trials=6, seed=3, node_budget=200)
    b = visibility_experiment(B, [1, 0], [-1, 0], 0.3, trials=6, seed=3, node_budget=200)
    assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(b.to_dict(), sort_keys=True)


def test_localization_small():
    U, V = ball_window([1, 0], 0.9), ball_window([1, 0], 0.45)
    rep = localization_distance_experiment(B, U, V, pairs=15, seed=0, vertex_budget=5, rounds=8)
    assert rep.stats["monotone_fraction"] == 1.0
    assert np.isfinite(rep.stats["K_hat"])


def test_geodesic_stay_radial():
    U, W = ball_window([1, 0], 0.9), ball_window([1, 0], 0.45)
    path = PathPolyline.straight([0.99, 0], [0.7, 0])
    rep = geodesic_stay_estimate(B, U, path, [1, 0], 0.45, pairs=20, dini_window=W)
    assert rep.verdict == "pass"
    # the Nikolov estimate exceeds the ball distance by at most log(17/8) on such pairs
    assert rep.stats["K_hat"] <= np.log(2.125) + 1e-6
    assert rep.stats["parameter"] == "oracle"
    equal = [r for r in rep.records if r["s"] == r["t"]]
    assert all(r["dt"] == 0 and r["window"] == [0.0, 0.0] for r in equal)


def test_geodesic_stay_exits():
    with pytest.raises(PathExitsWindow):
        geodesic_stay_estimate(B, ball_window([1, 0], 0.9), PathPolyline.straight([0.99, 0], [0.2, 0]),
                               [1, 0], 0.45)


def test_extension_maps():
    for name in extension_maps():
        seqs = [BoundarySequenceSpec([1, 0], LEVELS), BoundarySequenceSpec([1, 0], LEVELS, tilt=30.0)]
        if name == "bidisc-automorphism":
            seqs = [BoundarySequenceSpec([1, 0], LEVELS, approach=[-1, 0]),
                    BoundarySequenceSpec([1, 0], LEVELS, approach=[-1, 0.3])]
        rep = extension_probe(name, [1, 0], seqs, calibration=20)
        assert rep.verdict == "pass", name
        assert rep.stats["C"] < 1e-6
    with pytest.raises(UnknownMap):
        extension_probe("conformal-magic", [1, 0], [])


def test_extension_distinct_clusters():
    seqs = [BoundarySequenceSpec([1, 0], LEVELS), BoundarySequenceSpec([0, 1], LEVELS)]
    rep = extension_probe("ball-to-ellipsoid", [1, 0], seqs, calibration=20)
    assert rep.stats["cluster_count"] == 2
    assert rep.stats["transport_ok"]


def test_certificate_and_metric_localization():
    rep = certificate_experiment(B, LEVELS, samples=3)
    assert rep.verdict == "pass"
    rep = certificate_experiment(exp_model(2.0), LEVELS, samples=2, anchor=[0, 0])
    assert rep.verdict == "fail"
    rep = metric_localization_experiment(B, ball_window([1, 0], 0.8), [1, 0], 0.3, samples=10)
    assert rep.verdict == "pass"


def test_bracket_small():
    rep = bracket_experiment(ellipsoid((2, 1)), pairs=10, node_budget=300, vertex_budget=5, rounds=8)
    assert rep.stats["violations"] == 0
    assert rep.stats["pinch_ok"]
