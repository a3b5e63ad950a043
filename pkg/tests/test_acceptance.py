"""Acceptance criteria, one test (and one printed PASS/FAIL line) per clause.

Tolerances are fixed per criterion.  Scenario runs go
through :func:`kobalab.scenarios.run_scenario` so that the determinism
criterion compares the exact bytes that were checked elsewhere.
"""
import glob
import os
import time

import numpy as np
import pytest

from kobalab.constraints import from_real
from kobalab.domains import ellipsoid, exp_model, unit_ball, bidisc
from kobalab.experiments import bracket_experiment, certificate_experiment
from kobalab.metric import (ball_oracle_distance, bidisc_oracle_distance, distance_lower_cconvex,
                            distance_lower_convex)
from kobalab.scenarios import parse_scenario, run_scenario

ROOT = os.path.dirname(os.path.dirname(__file__))
SCENARIOS = sorted(glob.glob(os.path.join(ROOT, "scenarios", "*.json")))
LEVELS = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)


def _load(name):
    with open(os.path.join(ROOT, "scenarios", name + ".json"), "rb") as fh:
        return parse_scenario(fh.read())


@pytest.fixture(scope="session")
def runs(tmp_path_factory):
    """First run of each shipped scenario: ``name -> (report, entry, seconds)``, memoised."""
    base = tmp_path_factory.mktemp("first")
    cache = {}

    def get(name):
        if name not in cache:
            t0 = time.perf_counter()
            rep, entry = run_scenario(_load(name), str(base))
            cache[name] = rep, entry, time.perf_counter() - t0
        return cache[name]
    return get


# 1. oracle bracketing


def test_c1_oracle_bracketing(runs, criterion):
    rep, entry, secs = runs("ball-bracket")
    s = rep.stats
    assert s["pairs"] == 1000 and rep.params["node_budget"] == 5000
    ok = s["violations"] == 0 and secs <= 60
    criterion("1a", ok, f"violations {s['violations']} of 1000 pairs, {secs:.1f} s (limit 60 s)")
    assert ok


@pytest.mark.xfail(strict=True, reason="path upper bound exceeds the distance by up to 2x; see ledger")
def test_c1_upper_within_15_percent(runs, criterion):
    rep, _, _ = runs("ball-bracket")
    s = rep.stats
    ok = s["within_fraction"] == 1.0
    criterion("1b", ok, f"upper within 15% of oracle on {100 * s['within_fraction']:.1f}% of "
                        f"{s['within_eligible']} pairs with oracle >= 0.3 (required 100%)")
    assert ok


# 2. convex pinch


def test_c2_convex_pinch(criterion):
    t0 = time.perf_counter()
    reps = [bracket_experiment(unit_ball(), pairs=200, seed=1, node_budget=2000, scenario="pinch-ball"),
            bracket_experiment(ellipsoid((2.0, 1.0)), pairs=200, seed=1, node_budget=2000,
                               scenario="pinch-ellipsoid")]
    secs = time.perf_counter() - t0
    worst = max(r.stats["max_pinch"] for r in reps)
    rig = max(r.stats["max_rigorous_pinch"] for r in reps)
    ok = worst <= 2.05 and all(r.stats["violations"] == 0 for r in reps) and secs <= 30
    criterion(2, ok, f"max upper/lower {worst:.4f} (limit 2.05; against rigorous lower alone {rig:.3f}), "
                     f"{secs:.1f} s (limit 30 s)")
    assert ok


# 3. lower-bound formulas


def test_c3_lower_bounds(criterion):
    rng = np.random.default_rng(2024)
    x = rng.normal(size=(1000, 2, 4))
    x *= rng.uniform(size=(1000, 2, 1)) ** 0.25 / np.linalg.norm(x, axis=-1, keepdims=True)
    P = from_real(x)
    B, D = unit_ball(), bidisc()
    viol = 0
    for p, q in P:
        k = ball_oracle_distance(p, q)
        viol += distance_lower_convex(B, p, q) > k + 1e-9
        viol += distance_lower_cconvex(B, p, q) > k + 1e-9
    Q = np.sqrt(rng.uniform(size=(1000, 2, 2))) * np.exp(2j * np.pi * rng.uniform(size=(1000, 2, 2)))
    for p, q in Q:
        k = bidisc_oracle_distance(p, q)
        viol += distance_lower_convex(D, p, q) > k + 1e-9
        viol += distance_lower_cconvex(D, p, q) > k + 1e-9
    spot = distance_lower_convex(B, [0, 0], [0.9, 0])
    orc = ball_oracle_distance([0, 0], [0.9, 0])
    ok = viol == 0 and abs(spot - 1.151293) <= 1e-6 and abs(orc - 1.472219) <= 1e-6
    criterion(3, ok, f"violations {viol} over 2x2000 checks; spot {spot:.6f} vs oracle {orc:.6f}")
    assert ok


# 4. log-type certificates


def test_c4_certificates(runs, criterion):
    t0 = time.perf_counter()
    ball, _, _ = runs("ball-certificate")
    e05, _, _ = runs("exp05-certificate")
    e2, _, _ = runs("exp2-certificate")
    nus = (0.05, 0.25, 0.5, 1.0, 2.0, 4.0)
    e2_verdicts = [certificate_experiment(exp_model(2.0), LEVELS, nu=nu, anchor=[0, 0]).verdict for nu in nus]
    secs = time.perf_counter() - t0
    lam05, lam2 = e05.stats["lambda_hat"], e2.stats["lambda_hat"]
    ok = (ball.verdict == "pass" and 1.8 <= lam05 <= 2.2 and 0.4 <= lam2 <= 0.6
          and all(v == "fail" for v in e2_verdicts) and secs <= 120)
    criterion(4, ok, f"ball {ball.verdict}; alpha=1/2 lambda_hat {lam05:.3f}; alpha=2 lambda_hat {lam2:.3f}, "
                     f"verdicts for nu in {nus}: {','.join(e2_verdicts)}; {secs:.1f} s (limit 120 s)")
    assert ok


# 5. localization


def test_c5_localization(runs, criterion):
    dist, _, _ = runs("ball-distance-localization")
    met, _, _ = runs("ball-metric-localization")
    s = dist.stats
    mono = s["monotone_fraction"] == 1.0
    trend = s["slope_lower_95"] <= 0
    transparent = met.stats["transparent"] and met.stats["max_transparency_error"] <= 1e-6
    ok = mono and trend and transparent and met.stats["monotone"]
    criterion(5, ok, f"monotone on {100 * s['monotone_fraction']:.0f}% of {s['consistent']} consistent pairs; "
                     f"gap slope {s['slope']:.4f} +- {s['slope_se']:.4f} (one-sided 95% lower "
                     f"{s['slope_lower_95']:.4f} <= 0); transparency error "
                     f"{met.stats['max_transparency_error']:.1e} on {met.stats.get('qualifying', 'all')} samples")
    assert ok


# 6. visibility


def test_c6_visibility(runs, criterion):
    ball, _, tb = runs("ball-visibility")
    exp, _, te = runs("exp05-visibility")
    bid, _, td = runs("bidisc-visibility")
    slope = bid.stats["slope_all"]
    ok = (ball.verdict == "pass" and exp.verdict == "pass" and bid.verdict == "fail"
          and abs(slope - 1.0) <= 0.3 and max(tb, te, td) <= 300
          and all(r.stats["trials"] == 200 for r in (ball, exp, bid)))
    criterion(6, ok, f"ball {ball.verdict} (m_min {ball.stats['m_min']:.3g}, {tb:.0f} s); exp-model 1/2 "
                     f"{exp.verdict} (deep slope {exp.stats['slope']:.3f}, m_min {exp.stats['m_min']:.3g}, "
                     f"{te:.0f} s); bidisc {bid.verdict} (log-log slope {slope:.3f}, {td:.0f} s)")
    assert ok


# 7. blow-up


def test_c7_blowup(runs, criterion):
    same, _, _ = runs("ball-blowup")
    dist, _, _ = runs("ball-blowup-distinct")
    last = same.stats["last_lower"]
    dev = same.stats["max_relative_deviation"]
    ok = last > 5.0 and dev <= 0.2 and dist.stats["max_upper"] < 3 and min(same.params["seq"]["levels"]) == 1e-5
    criterion(7, ok, f"lower endpoint {last:.3f} at delta=1e-5 (> 5); max deviation from (1/2)log(2/delta) "
                     f"{100 * dev:.1f}% (<= 20%); antipodal max {dist.stats['max_upper']:.3g} (< 3)")
    assert ok


# 8. hyperbolicity


def test_c8_four_point(runs, criterion):
    rep, _, _ = runs("ball-four-point")
    s = rep.stats
    ok = s["tuples"] == 200 and s["violations"] == 0 and s["delta_hat"] <= np.log(3)
    criterion(8, ok, f"delta_hat {s['delta_hat']:.4f} <= log 3 = {np.log(3):.4f}, "
                     f"violations {s['violations']} of {s['tuples']}")
    assert ok


# 9. determinism


def test_c9_determinism(runs, tmp_path, criterion):
    differ = []
    for path in SCENARIOS:
        name = os.path.splitext(os.path.basename(path))[0]
        _, first, _ = runs(name)
        _, again = run_scenario(_load(name), str(tmp_path))
        for a, b in zip(first.outputs, again.outputs):
            if a.endswith((".json", ".csv")) and open(a, "rb").read() != open(b, "rb").read():
                differ.append(os.path.basename(a))
    ok = not differ
    criterion(9, ok, f"{len(SCENARIOS)} scenarios re-run; differing outputs: {differ or 'none'}")
    assert ok
