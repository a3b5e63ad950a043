"""Experiment drivers for Gromov products, visibility and localization.

Every driver returns an :class:`ExperimentReport` whose records carry the
brackets they were computed from, so verdicts can be re-derived from the
records alone.  Distances come from a *provider*: the closed-form oracle
when the domain has one (a degenerate bracket ``[K, K]``), otherwise
:func:`kobalab.metric.distance_bracket`.
"""
import time
from dataclasses import dataclass, field

import numpy as np

from .constraints import cnorm, from_real, to_real
from .domains import (ball_window, bidisc, boundary_distance, contains, ellipsoid, intersect_window,
                      inward_normal, line_gaps_unchecked, ray_exit_time, unit_ball)
from .errors import NoDiniWindow, NotConvex, NotInterior, PathExitsWindow, UnknownMap
from .geodesics import almost_geodesics, build_graph, parametrize_by_arclength
from .logtype import (NearBoundarySpec, calibrate_constant, complex_tangent_directions, log_type_certificate,
                      measure_gaps)
from .metric import (distance_bracket, distance_lower_cconvex, distance_lower_convex, localization_metric_check,
                     nikolov_upper, oracle_distance)
from .paths import PathPolyline, distance_upper_batch

VERDICTS = ("pass", "fail", "inconclusive")


def _pt(z):
    return [float(x) for x in to_real(np.asarray(z, complex))]


@dataclass
class ExperimentReport:
    """Outcome of one experiment run.

    ``wall_time`` is kept out of :meth:`to_dict` unless asked for, so that
    reruns with the same seed serialise identically.
    """

    scenario: str
    experiment: str
    seed: int
    verdict: str
    stats: dict
    records: list = field(default_factory=list)
    params: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"verdict must be one of {VERDICTS}")

    def to_dict(self, wall_time=False):
        d = {"scenario": self.scenario, "experiment": self.experiment, "seed": self.seed,
             "verdict": self.verdict, "params": self.params, "stats": self.stats,
             "records": self.records}
        if wall_time:
            d["wall_time"] = self.wall_time
        return d


def _finish(report, t0):
    report.wall_time = time.perf_counter() - t0
    return report


# distance providers


def distance_interval(domain, p, q, provider="auto", **bracket_kw):
    """``(lo, hi, method)`` bracketing ``K(p, q)``.

    ``provider="auto"`` uses the closed-form oracle when the domain has
    one and a :func:`~kobalab.metric.distance_bracket` otherwise;
    ``"oracle"`` insists on the oracle, ``"bracket"`` never uses it.
    """
    p = np.asarray(p, complex)
    q = np.asarray(q, complex)
    if provider in ("auto", "oracle"):
        k = oracle_distance(domain, p, q)
        if k is not None:
            k = float(k)
            return k, k, "oracle"
        if provider == "oracle":
            raise ValueError("domain has no closed-form distance")
    elif provider != "bracket":
        raise ValueError(f"unknown provider {provider!r}")
    est = distance_bracket(domain, p, q, **bracket_kw)
    return est.lower, est.upper, f"{est.lower_method}/{est.upper_method}"


def gromov_product(domain, x, y, o, provider="auto", **bracket_kw):
    """Interval ``[lo, hi]`` containing ``(x|y)_o = (d(x,o) + d(o,y) - d(x,y)) / 2``.

    Interval arithmetic on the three distance brackets, floored at 0 and
    capped by the smaller of the upper brackets of ``d(x,o)`` and ``d(y,o)``.

    Examples
    --------
    >>> from kobalab.domains import unit_ball
    >>> lo, hi = gromov_product(unit_ball(), [0.5, 0], [0.5, 0], [0, 0])
    >>> round(lo, 6), round(hi, 6)
    (0.549306, 0.549306)
    """
    a = distance_interval(domain, x, o, provider, **bracket_kw)
    b = distance_interval(domain, o, y, provider, **bracket_kw)
    c = distance_interval(domain, x, y, provider, **bracket_kw)
    return _product(a, b, c)


def _product(a, b, c):
    cap = min(a[1], b[1])
    hi = max(0.0, min(0.5 * (a[1] + b[1] - c[0]), cap))
    lo = min(max(0.0, 0.5 * (a[0] + b[0] - c[1])), hi)
    return lo, hi


# boundary sequences


@dataclass(frozen=True)
class BoundarySequenceSpec:
    """Points approaching the boundary point ``anchor``.

    Parameters
    ----------
    anchor : array of complex
        Boundary point.
    levels : sequence of float
        Approach distances, strictly decreasing.  Along the inward normal
        the level equals ``delta(z)`` for smooth boundaries.
    approach : "normal" or array of complex
        ``"normal"`` walks along the inner normal; a vector gives a custom
        inward direction (normalised).
    tilt : float
        Angle in degrees by which the normal is tilted towards the first
        complex tangent direction (ignored for custom directions).
    """

    anchor: tuple
    levels: tuple
    approach: object = "normal"
    tilt: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "anchor", tuple(complex(z) for z in np.asarray(self.anchor, complex)))
        lv = np.asarray(self.levels, float)
        if lv.ndim != 1 or lv.size == 0 or np.any(lv <= 0) or np.any(np.diff(lv) >= 0):
            raise ValueError("levels must be positive and strictly decreasing")
        object.__setattr__(self, "levels", tuple(float(x) for x in lv))

    def direction(self, domain):
        xi = np.asarray(self.anchor, complex)
        if not (isinstance(self.approach, str) and self.approach == "normal"):
            u = np.asarray(self.approach, complex)
            return u / cnorm(u)
        nrm = _inward_normal_at(domain, xi)
        if self.tilt == 0:
            return nrm
        tan = complex_tangent_directions(-nrm)[0]
        th = np.deg2rad(self.tilt)
        return np.cos(th) * nrm + np.sin(th) * tan

    def points(self, domain):
        """Sequence points ``anchor + level * direction``; all must be interior."""
        xi = np.asarray(self.anchor, complex)
        u = self.direction(domain)
        Z = xi[None] + np.asarray(self.levels)[:, None] * u[None]
        if not np.all(contains(domain, Z)):
            raise NotInterior("approach curve leaves the domain")
        return Z

    def to_dict(self):
        app = self.approach if isinstance(self.approach, str) else _pt(self.approach)
        return {"anchor": _pt(self.anchor), "levels": list(self.levels), "approach": app,
                "tilt": self.tilt}


def _inward_normal_at(domain, xi):
    """Inner normal at a boundary point, evaluated just inside it."""
    xi = np.asarray(xi, complex)
    n0 = inward_normal(domain, xi)
    return inward_normal(domain, xi + 1e-9 * n0)


# Gromov products


def same_point_blowup_probe(domain, seq, o, seq2=None, threshold=5.0, slack=0.2, bound=3.0,
                            provider="auto", scenario="blow-up", seed=0):
    """Gromov products ``(z_k | w_k)_o`` along two boundary sequences.

    With both sequences aimed at the same boundary point (``seq2``
    defaults to ``seq`` tilted by 30 degrees) the products must blow up:
    the lower endpoints increase up to ``slack`` and exceed ``threshold``
    at the last level.  With different anchors the products must stay
    below ``bound``.
    """
    t0 = time.perf_counter()
    if not domain.flags.is_convex:
        raise NotConvex("blow-up is only expected on convex domains")
    if domain.flags.dini_window is None:
        raise NoDiniWindow("blow-up is only expected with a Dini-smooth window")
    if seq2 is None:
        seq2 = BoundarySequenceSpec(seq.anchor, seq.levels, "normal", 30.0)
    o = np.asarray(o, complex)
    Z, W = seq.points(domain), seq2.points(domain)
    m = min(len(Z), len(W))
    same = np.allclose(seq.anchor, seq2.anchor)
    recs, lows, highs = [], [], []
    for k in range(m):
        a = distance_interval(domain, Z[k], o, provider)
        b = distance_interval(domain, o, W[k], provider)
        c = distance_interval(domain, Z[k], W[k], provider)
        lo, hi = _product(a, b, c)
        lows.append(lo)
        highs.append(hi)
        delta = float(min(boundary_distance(domain, Z[k]), boundary_distance(domain, W[k])))
        recs.append({"k": k, "level": seq.levels[k], "z": _pt(Z[k]), "w": _pt(W[k]), "delta": delta,
                     "d_zo": list(a[:2]), "d_ow": list(b[:2]), "d_zw": list(c[:2]),
                     "method": a[2], "product": [lo, hi],
                     "reference": 0.5 * float(np.log(2.0 / seq.levels[k]))})
    lows, highs = np.array(lows), np.array(highs)
    stats = {"mode": "same-point" if same else "distinct-points", "min_lower": float(lows.min()),
             "max_upper": float(highs.max()), "last_lower": float(lows[-1])}
    if same:
        monotone = bool(np.all(np.diff(lows) >= -slack))
        stats.update(monotone=monotone, threshold=threshold,
                     exceeds_threshold=bool(lows[-1] > threshold))
        ref = np.array([r["reference"] for r in recs])
        stats["max_relative_deviation"] = float(np.max(np.abs(lows / ref - 1)))
        verdict = "pass" if monotone and lows[-1] > threshold else "fail"
    else:
        stats.update(bound=bound, bounded=bool(highs.max() < bound))
        verdict = "pass" if highs.max() < bound else "fail"
    params = {"seq": seq.to_dict(), "seq2": seq2.to_dict(), "o": _pt(o), "threshold": threshold,
              "slack": slack, "bound": bound, "provider": provider}
    return _finish(ExperimentReport(scenario, "blow-up", seed, verdict, stats, recs, params), t0)


def _ball_points(rng, n, count, radius=1.0):
    x = rng.normal(size=(count, 2 * n))
    x *= radius * rng.uniform(size=(count, 1)) ** (1 / (2 * n)) / np.linalg.norm(x, axis=1, keepdims=True)
    return from_real(x)


def four_point_check(domain, tuples=200, seed=0, delta_max=float(np.log(3.0)), provider="oracle",
                     scenario="four-point"):
    """Gromov four-point condition on random tuples ``(o, x, y, z)``.

    For each tuple the defect is the median minus the minimum of
    ``(x|y)_o, (x|z)_o, (z|y)_o``; the verdict passes when the largest
    defect ``delta_hat`` is at most ``delta_max``.  Points are drawn
    uniformly in the domain by rejection from its bounding ball.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    n = domain.n
    pts = []
    while len(pts) < 4 * tuples:
        Z = _ball_points(rng, n, 4 * tuples, domain.bounding_radius)
        pts.extend(Z[contains(domain, Z)])
    P = np.array(pts[: 4 * tuples]).reshape(tuples, 4, n)
    recs, worst = [], 0.0
    for i, (o, x, y, z) in enumerate(P):
        d = {}
        for name, (a, b) in {"xo": (x, o), "yo": (y, o), "zo": (z, o), "xy": (x, y),
                             "xz": (x, z), "zy": (z, y)}.items():
            d[name] = distance_interval(domain, a, b, provider)
        xy = _product(d["xo"], d["yo"], d["xy"])
        xz = _product(d["xo"], d["zo"], d["xz"])
        zy = _product(d["zo"], d["yo"], d["zy"])
        # worst case over the brackets: large minimum, small median
        lows = sorted([xy[0], xz[0], zy[0]])
        highs = sorted([xy[1], xz[1], zy[1]])
        defect = max(0.0, highs[1] - lows[0])
        worst = max(worst, defect)
        recs.append({"i": i, "o": _pt(o), "x": _pt(x), "y": _pt(y), "z": _pt(z),
                     "xy": list(xy), "xz": list(xz), "zy": list(zy), "defect": defect})
    verdict = "pass" if worst <= delta_max else "fail"
    stats = {"delta_hat": worst, "delta_max": delta_max, "tuples": tuples,
             "violations": int(sum(r["defect"] > delta_max for r in recs))}
    return _finish(ExperimentReport(scenario, "four-point", seed, verdict, stats, recs,
                                    {"tuples": tuples, "provider": provider}), t0)


# visibility


def _sample_near(domain, xi, deltas, eps, rng, tries=20):
    """Interior points ``b + delta n(b)`` with ``b`` a boundary point near ``xi``.

    ``b`` is where the ray from the basepoint through a random point of
    ``xi + (complex tangent disc of radius eps/4)`` leaves the domain.
    """
    xi = np.asarray(xi, complex)
    n = domain.n
    nrm = _inward_normal_at(domain, xi)
    T = complex_tangent_directions(-nrm)
    base = domain.basepoint
    out = np.empty((len(deltas), n), complex)
    for i, d in enumerate(deltas):
        rho = 0.25 * eps
        for _ in range(tries):
            c = from_real(rng.normal(size=2 * len(T)))
            c = c / cnorm(c)
            y = xi + rho * np.sqrt(rng.uniform()) * (c @ T)
            u = (y - base) / cnorm(y - base)
            t = float(ray_exit_time(domain, base, u))
            b = base + t * u
            z = b + d * _inward_normal_at(domain, b)
            if contains(domain, z) and cnorm(z - xi) < eps:
                break
            rho *= 0.5
        else:
            raise NotInterior("could not sample an interior point near the anchor")
        out[i] = z
    return out


def _path_samples(path, per_segment=64):
    V = path.vertices
    s = np.arange(per_segment) / per_segment
    Z = (V[:-1, None] + s[None, :, None] * (V[1:] - V[:-1])[:, None]).reshape(-1, V.shape[1])
    return np.vstack([Z, V[-1:]])


def _slope(x, y):
    """Least-squares slope of ``y`` on ``x`` and its standard error."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if len(x) < 3 or np.ptp(x) == 0:
        return float("nan"), float("nan")
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    s2 = float(res @ res) / (len(x) - 2)
    se = np.sqrt(s2 / float(np.sum((x - x.mean()) ** 2)))
    return float(coef[0]), float(se)


def visibility_experiment(domain, xi, xi2, eps, trials=200, seed=0, levels=(1e-1, 1e-4),
                          node_budget=1000, vertex_budget=5, rounds=8, max_slope=0.25,
                          depth_factor=10.0, certificate=None, scenario="visibility", h=None):
    """Do near-geodesics between points near ``xi`` and ``xi2`` reach a fixed depth?

    Each trial draws one gap level ``delta`` log-uniformly in ``levels``
    (capped at ``eps/2``), samples ``z`` near ``xi`` and ``w`` near
    ``xi2`` at that level, builds the batch of near-geodesics and records
    the deepest point reached, ``m = max over the path of delta(sigma)``.
    Visibility means ``m`` stays bounded below as ``delta -> 0``.  The
    trend is the least-squares slope of ``log m`` on ``log delta`` over the
    deeper half of the level range (in log scale), because at the shallow
    end ``m >= delta`` holds trivially.

    Verdict: ``pass`` when the slope is at most ``max_slope`` and the
    smallest ``m`` in the deeper half is at least ``depth_factor`` times
    the smallest level; ``fail`` otherwise; ``inconclusive`` with fewer
    than five deep trials, or when a supplied log-type ``certificate`` did
    not pass (visibility is only expected on log-type windows).
    """
    t0 = time.perf_counter()
    xi = np.asarray(xi, complex)
    xi2 = np.asarray(xi2, complex)
    if not cnorm(xi - xi2) > 2 * eps:
        raise ValueError("need |xi - xi'| > 2 eps")
    rng = np.random.default_rng(seed)
    hi = min(max(levels), 0.5 * eps)
    lo = min(levels)
    deltas = np.exp(rng.uniform(np.log(lo), np.log(hi), size=trials))
    P = _sample_near(domain, xi, deltas, eps, rng)
    Q = _sample_near(domain, xi2, deltas, eps, rng)
    graph = build_graph(domain, node_budget, seed=seed)
    paths, _, lengths = almost_geodesics(domain, P, Q, graph, seed=seed, pairs=0,
                                         vertex_budget=vertex_budget, rounds=rounds, h=h)
    dz = boundary_distance(domain, P)
    dw = boundary_distance(domain, Q)
    recs, ms, ds = [], [], []
    for i, path in enumerate(paths):
        S = _path_samples(path)
        depth = boundary_distance(domain, S)
        j = int(np.argmax(depth))
        lows = []
        if domain.flags.is_convex:
            lows.append(distance_lower_convex(domain, P[i], Q[i]))
        if domain.flags.is_c_convex:
            lows.append(distance_lower_cconvex(domain, P[i], Q[i]))
        d_i = float(min(dz[i], dw[i]))
        ms.append(float(depth[j]))
        ds.append(d_i)
        recs.append({"trial": i, "level": float(deltas[i]), "z": _pt(P[i]), "w": _pt(Q[i]),
                     "delta": d_i, "m": float(depth[j]), "deepest": _pt(S[j]),
                     "vertices": int(len(path.vertices)),
                     "distance": [max(lows) if lows else 0.0, float(lengths[i])]})
    ms, ds = np.array(ms), np.array(ds)
    cut = np.sqrt(lo * hi)
    deep = deltas <= cut
    slope, se = _slope(np.log(ds[deep]), np.log(ms[deep])) if deep.sum() >= 3 else (float("nan"),) * 2
    slope_all, se_all = _slope(np.log(ds), np.log(ms))
    m_deep = float(ms[deep].min()) if deep.any() else float("nan")
    threshold = depth_factor * lo
    stats = {"trials": trials, "deep_trials": int(deep.sum()), "slope": slope, "slope_se": se,
             "slope_all": slope_all, "slope_all_se": se_all, "m_min": float(ms.min()),
             "m_min_deep": m_deep, "threshold": threshold, "max_slope": max_slope,
             "compact_set_level": float(ms.min()), "graph_nodes": int(len(graph.nodes))}
    if deep.sum() < 5 or not np.isfinite(slope):
        verdict = "inconclusive"
    elif slope <= max_slope and m_deep >= threshold:
        verdict = "pass"
    else:
        verdict = "fail"
    if certificate is not None:
        stats["log_type_certified"] = bool(certificate.passed)
        if verdict == "pass" and not certificate.passed:
            verdict = "inconclusive"
    params = {"xi": _pt(xi), "xi2": _pt(xi2), "eps": eps, "trials": trials, "levels": [lo, hi],
              "node_budget": node_budget, "vertex_budget": vertex_budget, "rounds": rounds}
    return _finish(ExperimentReport(scenario, "visibility", seed, verdict, stats, recs, params), t0)


# localization of distances


def _sample_in_window(domain, window, levels, per_level, rng, tries=50):
    """Points at gap ``level`` below boundary points of ``domain`` inside ``window``."""
    base = domain.basepoint
    out, lev = [], []
    n = domain.n
    for k, d in enumerate(levels):
        got = 0
        for _ in range(tries):
            if got >= per_level:
                break
            y = window.center + window.extent * _ball_points(rng, n, 1)[0]
            u = (y - base) / cnorm(y - base)
            t = float(ray_exit_time(domain, base, u))
            b = base + t * u
            z = b + d * _inward_normal_at(domain, b)
            if window.contains(z[None])[0] and contains(domain, z):
                out.append(z)
                lev.append(k)
                got += 1
    return np.array(out), np.array(lev, int)


def localization_distance_experiment(omega, U, V, pairs=60, seed=0, levels=(1e-1, 1e-2, 1e-3, 1e-4, 1e-5),
                                     use_nikolov=True, vertex_budget=9, rounds=20, slack_level=0.1,
                                     z=1.645, scenario="distance-localization", h=None):
    """Additive localization ``K_Omega <= K_{Omega cap U} <= K_Omega + K`` on pairs in ``V``.

    Pairs ``p, q`` share a gap level.  ``K_Omega`` is bracketed through the
    distance provider (the oracle on the ball) and ``K_{Omega cap U}`` by
    the optimised path value, improved by Nikolov's estimate when
    ``use_nikolov`` declares ``V`` a Dini-smooth window of ``Omega cap U``.

    The monotone side ``lower_Omega <= upper_{Omega cap U}`` must hold on
    every bracket-consistent pair.  The gap ``g = upper_{Omega cap U} -
    lower_Omega`` is regressed on ``|log delta|`` over pairs below
    ``slack_level``; the additive side passes unless the slope is
    significantly positive (one-sided, ``slope - z * se > 0`` fails).
    ``K_hat`` is the largest gap.
    """
    t0 = time.perf_counter()
    if not omega.flags.is_convex:
        raise NotConvex("Omega cap U must be convex")
    sub = intersect_window(omega, U, seed=seed, dini_window=V if use_nikolov else None)
    rng = np.random.default_rng(seed)
    per = max(2, int(np.ceil(2 * pairs / len(levels))))
    Z, lev = _sample_in_window(omega, V, levels, per, rng)
    P, Q, L = [], [], []
    for k in range(len(levels)):
        idx = np.flatnonzero(lev == k)
        for a, b in zip(idx[0::2], idx[1::2]):
            P.append(Z[a])
            Q.append(Z[b])
            L.append(k)
    P, Q = np.array(P)[:pairs], np.array(Q)[:pairs]
    L = np.array(L)[:pairs]
    ups = distance_upper_batch(sub, P, Q, vertex_budget=vertex_budget, rounds=rounds, seed=seed, h=h)
    recs, gaps, logs, consistent, monotone = [], [], [], [], []
    for i in range(len(P)):
        lo_o, hi_o, meth = distance_interval(omega, P[i], Q[i])
        lows = []
        if sub.flags.is_convex:
            lows.append(distance_lower_convex(sub, P[i], Q[i]))
            lows.append(0.5 * float(ups[i]))
        lo_s = max(lows + [lo_o])  # K_{Omega cap U} >= K_Omega
        hi_s, how = float(ups[i]), "path"
        if use_nikolov and V.contains(P[i][None])[0] and V.contains(Q[i][None])[0]:
            nk = nikolov_upper(sub, P[i], Q[i])
            if nk < hi_s:
                hi_s, how = nk, "nikolov"
        delta = float(min(boundary_distance(omega, P[i]), boundary_distance(omega, Q[i])))
        ok = lo_o <= hi_o + 1e-12
        mono = lo_o <= hi_s + 1e-12
        g = hi_s - lo_o
        slack = levels[L[i]] >= slack_level
        recs.append({"pair": i, "level": levels[L[i]], "p": _pt(P[i]), "q": _pt(Q[i]), "delta": delta,
                     "omega": [lo_o, hi_o], "omega_method": meth, "window": [lo_s, hi_s],
                     "window_upper_method": how, "gap": g, "monotone": bool(mono),
                     "consistent": bool(ok), "slack_dominated": bool(slack)})
        consistent.append(ok)
        monotone.append(mono)
        if not slack:
            gaps.append(g)
            logs.append(abs(np.log(delta)))
    consistent, monotone = np.array(consistent), np.array(monotone)
    slope, se = _slope(logs, gaps)
    mono_ok = bool(np.all(monotone[consistent]))
    stats = {"pairs": int(len(P)), "consistent": int(consistent.sum()),
             "monotone_fraction": float(monotone[consistent].mean()) if consistent.any() else float("nan"),
             "K_hat": float(max(r["gap"] for r in recs)), "slope": slope, "slope_se": se,
             "slope_lower_95": slope - z * se if np.isfinite(se) else float("nan"),
             "slope_upper_95": slope + z * se if np.isfinite(se) else float("nan"),
             "trend_pairs": len(gaps), "nikolov": use_nikolov}
    if not mono_ok:
        verdict = "fail"
    elif not np.isfinite(slope):
        verdict = "inconclusive"
    else:
        verdict = "pass" if slope - z * se <= 0 else "fail"
    params = {"U": U.to_dict(), "V": V.to_dict(), "pairs": pairs, "levels": list(levels),
              "use_nikolov": use_nikolov}
    return _finish(ExperimentReport(scenario, "distance-localization", seed, verdict, stats, recs, params), t0)


def geodesic_stay_estimate(omega, U, path, xi, eps, pairs=50, seed=0, slack=1e-9, dini_window=None,
                           scenario="geodesic-stay"):
    """Check that a path of ``Omega`` near ``xi`` stays almost geodesic in ``Omega cap U``.

    The path is parametrised by ``K_Omega`` distance from its start when
    ``Omega`` has an oracle (the path is then taken as an ``Omega``
    geodesic), otherwise by the upper functional of ``Omega``.  For sampled
    parameter pairs ``(s, t)`` the bracket ``[lo, up]`` of
    ``K_{Omega cap U}(sigma(s), sigma(t))`` is formed with ``up`` the
    smaller of the sub-path functional in ``Omega cap U`` and Nikolov's
    estimate on ``dini_window``.  Checks ``|t - s| <= up + slack`` and
    reports ``K_hat = max(up - |t - s|)``.
    """
    t0 = time.perf_counter()
    if not omega.flags.is_convex:
        raise NotConvex("Omega cap U must be convex")
    if not isinstance(path, PathPolyline):
        path = PathPolyline(path)
    xi = np.asarray(xi, complex)
    S = _path_samples(path, 256)
    if np.any(cnorm(S - xi) >= eps):
        raise PathExitsWindow("path leaves B_eps(xi)")
    sub = intersect_window(omega, U, seed=seed, dini_window=dini_window)
    curve = parametrize_by_arclength(sub, path)
    # parameter of the curve knots in Omega
    knots = curve.points
    if oracle_distance(omega, knots[0], knots[0]) is not None:
        param = np.array([float(oracle_distance(omega, knots[0], z)) for z in knots])
        how = "oracle"
    else:
        # knots are fine enough that the midpoint rule is accurate
        dv = np.diff(knots, axis=0)
        g = line_gaps_unchecked(omega, 0.5 * (knots[:-1] + knots[1:]), dv)
        param = np.concatenate([[0.0], np.cumsum(cnorm(dv) / g)])
        how = "upper-functional"
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.integers(0, len(knots), size=(pairs, 2)), axis=1)
    recs, k_hat, ok = [], 0.0, True
    for a, b in idx:
        dt = float(abs(param[b] - param[a]))
        if a == b:
            up = lo = 0.0
            how_up = "equal"
        else:
            up, how_up = float(abs(curve.knots[b] - curve.knots[a])), "sub-path"
            x, y = knots[a], knots[b]
            if dini_window is not None and dini_window.contains(x[None])[0] and dini_window.contains(y[None])[0]:
                nk = nikolov_upper(sub, x, y)
                if nk < up:
                    up, how_up = nk, "nikolov"
            lo = float(distance_interval(omega, x, y)[0])
        good = dt <= up + slack * max(1.0, up)
        ok &= good
        k_hat = max(k_hat, up - dt)
        recs.append({"s": float(param[a]), "t": float(param[b]), "dt": dt, "window": [lo, up],
                     "upper_method": how_up, "ok": bool(good)})
    verdict = "pass" if ok and np.isfinite(k_hat) else "fail"
    stats = {"K_hat": float(max(k_hat, 0.0)), "pairs": pairs, "parameter": how,
             "left_inequality": bool(ok), "length": float(param[-1])}
    params = {"xi": _pt(xi), "eps": eps, "U": U.to_dict(), "pairs": pairs,
              "dini_window": None if dini_window is None else dini_window.to_dict()}
    return _finish(ExperimentReport(scenario, "geodesic-stay", seed, verdict, stats, recs, params), t0)


# boundary extension


def _mobius(a):
    a = complex(a)
    return lambda z: (z - a) / (1 - np.conj(a) * z)


def extension_maps():
    """Registry ``name -> (source domain, target domain, map)`` of explicit biholomorphisms."""
    semi = np.array([2.0, 1.0])
    phi = _mobius(0.3)

    def bidisc_auto(Z):
        Z = np.asarray(Z, complex)
        out = Z.copy()
        out[..., 0] = phi(Z[..., 0])
        out[..., 1] = np.exp(0.5j) * Z[..., 1]
        return out

    return {
        "identity": (unit_ball(), unit_ball(), lambda Z: np.asarray(Z, complex)),
        "ball-to-ellipsoid": (unit_ball(), ellipsoid(tuple(semi)), lambda Z: np.asarray(Z, complex) * semi),
        "bidisc-automorphism": (bidisc(), bidisc(), bidisc_auto),
    }


def extension_probe(map_name, xi, seqs, seed=0, calibration=100, provider="auto", tol=1e-9,
                    scenario="extension-probe"):
    """Push boundary sequences through an explicit map and watch the image clusters.

    ``seqs`` approach boundary points of the source domain.  At every level
    the Euclidean diameter of the images of sequences sharing an anchor is
    measured; the verdict passes when each cluster's diameter shrinks to
    at most a tenth of its first value without increasing by more than
    ``tol`` from one level to the next.  The rough-isometry defect ``C`` is
    the largest bracket disagreement ``|K_target(f x, f y) - K_source(x, y)|``
    on ``calibration`` seeded pairs, and the transport inequality
    ``|(f x|f y)_{f o} - (x|y)_o| <= 3 C / 2`` is checked on the sequence
    pairs (``o`` the source basepoint).
    """
    t0 = time.perf_counter()
    maps = extension_maps()
    if map_name not in maps:
        raise UnknownMap(f"unknown map {map_name!r}; known: {', '.join(sorted(maps))}")
    src, tgt, f = maps[map_name]
    rng = np.random.default_rng(seed)
    # calibration of the defect
    X = []
    while len(X) < 2 * calibration:
        Z = _ball_points(rng, src.n, 2 * calibration, src.bounding_radius)
        X.extend(Z[contains(src, Z)])
    X = np.array(X[: 2 * calibration]).reshape(calibration, 2, src.n)
    C = 0.0
    for x, y in X:
        a = distance_interval(src, x, y, provider)
        b = distance_interval(tgt, f(x), f(y), provider)
        C = max(C, b[1] - a[0], a[1] - b[0])
    o = src.basepoint
    fo = f(o)
    pts = [s.points(src) for s in seqs]
    anchors = {}
    for j, s in enumerate(seqs):
        anchors.setdefault(tuple(np.round(to_real(np.asarray(s.anchor)), 12)), []).append(j)
    nlev = min(len(p) for p in pts)
    recs, ok_transport = [], True
    clusters = {}
    for key, members in anchors.items():
        diams = []
        for k in range(nlev):
            img = np.array([f(pts[j][k]) for j in members])
            diam = float(max((cnorm(a - b) for a in img for b in img), default=0.0))
            diams.append(diam)
        clusters[str(len(clusters))] = {"anchor": list(key), "members": members, "diameters": diams}
    for k in range(nlev):
        for i in range(len(seqs)):
            for j in range(i + 1, len(seqs)):
                x, y = pts[i][k], pts[j][k]
                s_lo, s_hi = gromov_product(src, x, y, o, provider)
                t_lo, t_hi = gromov_product(tgt, f(x), f(y), fo, provider)
                diff = max(t_hi - s_lo, s_hi - t_lo, 0.0)
                good = diff <= 1.5 * C + tol
                ok_transport &= good
                recs.append({"level": k, "i": i, "j": j, "x": _pt(x), "y": _pt(y), "fx": _pt(f(x)),
                             "fy": _pt(f(y)), "source_product": [s_lo, s_hi],
                             "target_product": [t_lo, t_hi], "transport_gap": diff,
                             "transport_ok": bool(good)})
    shrinks = True
    for c in clusters.values():
        d = np.array(c["diameters"])
        mono = bool(np.all(np.diff(d) <= tol))
        small = bool(d[-1] <= 0.1 * d[0] + tol)
        c["monotone"], c["shrinks"] = mono, small
        shrinks &= mono and small
    verdict = "pass" if shrinks and ok_transport else "fail"
    stats = {"C": float(C), "transport_ok": bool(ok_transport), "clusters": clusters,
             "cluster_count": len(clusters)}
    params = {"map": map_name, "xi": _pt(xi), "seqs": [s.to_dict() for s in seqs],
              "calibration": calibration, "provider": provider}
    return _finish(ExperimentReport(scenario, "extension-probe", seed, verdict, stats, recs, params), t0)


# wrappers around the metric and certificate checks


def certificate_experiment(domain, levels, samples=8, seed=0, nu=1.0, C=None, calibrate_levels=2,
                           anchor=None, anchor_radius=0.0, grid=96, scenario="certificate"):
    """Log-type certificate with ``C`` calibrated on the shallowest levels when not given.

    Calibration uses the first ``calibrate_levels`` levels (their largest
    ``gap * |log delta|^(1 + nu)``, times 1.1); the certificate is then
    checked on every level.  The verdict is the certificate's ``passed``.
    """
    t0 = time.perf_counter()
    spec = NearBoundarySpec(tuple(levels), samples, seed, anchor, anchor_radius)
    gaps = measure_gaps(domain, spec, grid)
    if C is None:
        shallow = gaps["level"] < calibrate_levels
        C = calibrate_constant({k: v[shallow] for k, v in gaps.items()}, nu)
    cert = log_type_certificate(domain, spec, nu, C, grid, gaps=gaps)
    stats = cert.to_dict()
    verdict = "pass" if cert.passed else "fail"
    params = {"levels": list(levels), "samples": samples, "nu": nu, "calibrate_levels": calibrate_levels,
              "anchor": None if anchor is None else _pt(anchor), "anchor_radius": anchor_radius}
    return _finish(ExperimentReport(scenario, "certificate", seed, verdict, stats, cert.records, params), t0)


def metric_localization_experiment(omega, window, xi, eps, levels=(1e-1, 1e-2, 1e-3, 1e-4, 1e-5),
                                   samples=40, seed=0, nu=1.0, tol=1e-6, scenario="metric-localization"):
    """Window transparency and monotonicity of directional gaps near ``xi``.

    Samples lie at the given gap levels below boundary points within
    ``eps`` of ``xi``, with random complex directions.  Passes when
    ``delta_{Omega cap U} <= delta_Omega`` everywhere and equality holds to
    ``tol`` on all samples whose gap ``delta_Omega(z; v)`` is below the
    distance to the window boundary.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    per = max(1, samples // len(levels))
    Z, lev = _sample_in_window(omega, ball_window(xi, eps), levels, per, rng)
    V = from_real(rng.normal(size=(len(Z), 2 * omega.n)))
    rep = localization_metric_check(omega, window, Z, V, nu=nu, eps=eps, xi=xi, tol=tol)
    recs = rep.pop("records")
    for r, k in zip(recs, lev):
        r["level"] = levels[k]
    verdict = "pass" if rep["monotone"] and rep["transparent"] else "fail"
    params = {"window": window.to_dict(), "xi": _pt(xi), "eps": eps, "levels": list(levels),
              "samples": samples, "nu": nu, "tol": tol}
    return _finish(ExperimentReport(scenario, "metric-localization", seed, verdict, rep, recs, params), t0)


def bracket_experiment(domain, pairs=1000, seed=0, node_budget=5000, vertex_budget=17, rounds=40,
                       projection=True, pinch_separation=0.1, pinch_max=2.05, within=0.15,
                       within_from=0.3, scenario="bracket", h=None):
    """Oracle anchoring of the distance brackets on random pairs.

    Upper bounds come from one batched optimisation warm-started on a
    geometric graph; lower bounds are the maximum over all lower methods.
    Passes when the oracle lies in every bracket.  Also reports the pinch
    ``upper / lower`` for pairs at least ``pinch_separation`` apart (and
    the same ratio against the rigorous lower bound alone) and
    the fraction of pairs with oracle at least ``within_from`` whose upper
    bound is within ``within`` of the oracle.
    """
    from .geodesics import shortest_paths

    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    pts = []
    while len(pts) < 2 * pairs:
        Z = _ball_points(rng, domain.n, 2 * pairs, domain.bounding_radius)
        pts.extend(Z[contains(domain, Z)])
    X = np.array(pts[: 2 * pairs]).reshape(pairs, 2, domain.n)
    P, Q = X[:, 0], X[:, 1]
    graph = build_graph(domain, node_budget, seed=seed)
    init = [p.vertices for p in shortest_paths(domain, graph, P, Q, smooth=True)]
    ups = distance_upper_batch(domain, P, Q, vertex_budget, rounds, seed, init, h=h)
    recs, viol, pinch, rig_pinch, close, eligible = [], 0, [], [], 0, 0
    for i in range(pairs):
        est = distance_bracket(domain, P[i], Q[i], upper=ups[i], projection=projection)
        k = oracle_distance(domain, P[i], Q[i])
        k = None if k is None else float(k)
        bad = k is not None and not (est.lower <= k + 1e-9 and k <= est.upper + 1e-9)
        viol += bad
        sep = float(cnorm(P[i] - Q[i]))
        if sep >= pinch_separation and est.lower > 0:
            pinch.append(est.upper / est.lower)
            rig_pinch.append(est.upper / est.rigorous_lower if est.rigorous_lower > 0 else float("inf"))
        if k is not None and k >= within_from:
            eligible += 1
            close += est.upper <= (1 + within) * k
        recs.append({"pair": i, "p": _pt(P[i]), "q": _pt(Q[i]), "lower": est.lower, "upper": est.upper,
                     "rigorous_lower": est.rigorous_lower, "lower_method": est.lower_method,
                     "upper_method": est.upper_method, "oracle": k, "violation": bool(bad)})
    stats = {"pairs": pairs, "violations": int(viol), "max_pinch": float(max(pinch)) if pinch else float("nan"),
             "max_rigorous_pinch": float(max(rig_pinch)) if rig_pinch else float("nan"),
             "pinch_max": pinch_max, "pinch_ok": bool(pinch and max(pinch) <= pinch_max),
             "within_fraction": close / eligible if eligible else float("nan"), "within": within,
             "within_eligible": eligible}
    verdict = "pass" if viol == 0 else "fail"
    params = {"pairs": pairs, "node_budget": node_budget, "vertex_budget": vertex_budget, "rounds": rounds,
              "projection": projection}
    return _finish(ExperimentReport(scenario, "bracket", seed, verdict, stats, recs, params), t0)
