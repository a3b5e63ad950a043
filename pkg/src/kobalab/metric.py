"""Two-sided bounds for the Kobayashi metric and distance.

Infinitesimal bounds on convex domains come from comparing the complex
line ``z + C v`` with its largest disk and its supporting half-plane:

    |v| / (2 delta(z; v)) <= k(z; v) <= |v| / delta(z; v),

with ``1/4`` replacing ``1/2`` on C-convex domains.  Distance brackets
combine several rigorous lower bounds with the best available upper bound
(an optimised path integral, and Nikolov's estimate on declared Dini
windows).  The unit ball, complex ellipsoids and polydiscs have closed-form
distances that serve as oracles.
"""
import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .constraints import EllipsoidConstraint, CylinderConstraint, cnorm, from_real, hdot, to_real
from .domains import (boundary_distance, contains, directional_boundary_distance,
                      ray_exit_time)
from .errors import (NoDiniWindow, NotCConvex, NotConvex, NotInterior, OutsideBall,
                     OutsideBidisc)


@dataclass(frozen=True)
class MetricBound:
    """``lower <= k(point; direction) <= upper``."""

    point: np.ndarray
    direction: np.ndarray
    lower: float
    upper: float

    @property
    def ratio(self):
        return self.upper / self.lower


def _check_interior(domain, *pts):
    for z in pts:
        if not np.all(contains(domain, z)):
            raise NotInterior("point is not interior to the domain")


def infinitesimal_bounds(domain, z, v):
    """Convex two-sided bound ``|v|/(2 delta(z;v)) <= k <= |v|/delta(z;v)``."""
    if not domain.flags.is_convex:
        raise NotConvex("the factor-2 metric bracket needs a convex domain")
    z = np.asarray(z, complex)
    v = np.asarray(v, complex)
    g = directional_boundary_distance(domain, z, v)
    nv = cnorm(v)
    lower, upper = nv / (2 * g), nv / g
    if np.ndim(lower) == 0:
        return MetricBound(z, v, float(lower), float(upper))
    # batched queries keep array fields
    return MetricBound(z, v, lower, upper)


def c_convex_lower(domain, z, v):
    """C-convex lower bound ``|v| / (4 delta(z; v))``."""
    if not domain.flags.is_c_convex:
        raise NotCConvex("the factor-1/4 bound needs a C-convex domain")
    return cnorm(v) / (4 * directional_boundary_distance(domain, z, v))


# closed-form distances


def _wedge2(z, w):
    """``|z|^2 |w|^2 - |<z, w>|^2`` computed without cancellation."""
    n = z.shape[-1]
    out = np.zeros(np.broadcast_shapes(z.shape, w.shape)[:-1])
    for i in range(n):
        for j in range(i + 1, n):
            out = out + np.abs(z[..., i] * w[..., j] - z[..., j] * w[..., i]) ** 2
    return out


def _artanh_from_parts(num, den, one_minus):
    """``artanh(r)`` with ``r^2 = num/den`` and ``1 - r^2 = one_minus``, stable near 0 and 1."""
    r = np.sqrt(np.maximum(num, 0.0) / den)
    return np.where(r < 0.5, np.arctanh(np.minimum(r, 0.5)), np.log1p(r) - 0.5 * np.log(one_minus))


def ball_oracle_distance(z, w):
    """Kobayashi distance of the unit ball in ``C^n``.

    Uses ``1 - |phi_z(w)|^2 = (1-|z|^2)(1-|w|^2) / |1 - <w, z>|^2`` for the
    automorphism ``phi_z`` sending ``z`` to 0, and returns ``artanh |phi_z(w)|``.

    Examples
    --------
    >>> round(float(ball_oracle_distance([0, 0], [0.5, 0])), 6)
    0.549306
    """
    z = np.asarray(z, complex)
    w = np.asarray(w, complex)
    az = 1.0 - np.sum(np.abs(z) ** 2, axis=-1)
    aw = 1.0 - np.sum(np.abs(w) ** 2, axis=-1)
    if np.any(az <= 0) or np.any(aw <= 0):
        raise OutsideBall("points must lie in the open unit ball")
    den = np.abs(1.0 - hdot(w, z)) ** 2
    num = np.sum(np.abs(z - w) ** 2, axis=-1) - _wedge2(z, w)
    return _artanh_from_parts(num, den, az * aw / den)


def disk_distance(a, b):
    """Poincare distance ``artanh |(a - b)/(1 - conj(b) a)|`` in the unit disk."""
    a = np.asarray(a, complex)
    b = np.asarray(b, complex)
    den = np.abs(1.0 - np.conj(b) * a) ** 2
    one_minus = (1 - np.abs(a) ** 2) * (1 - np.abs(b) ** 2) / den
    return _artanh_from_parts(np.abs(a - b) ** 2, den, one_minus)


def halfplane_distance(a, b):
    """Poincare distance in the right half-plane ``Re w > 0``."""
    a = np.asarray(a, complex)
    b = np.asarray(b, complex)
    den = np.abs(a + np.conj(b)) ** 2
    one_minus = 4 * a.real * b.real / den
    return _artanh_from_parts(np.abs(a - b) ** 2, den, one_minus)


def bidisc_oracle_distance(z, w):
    """Kobayashi distance of the unit polydisc: max of the coordinate Poincare distances."""
    z = np.asarray(z, complex)
    w = np.asarray(w, complex)
    if np.any(np.abs(z) >= 1) or np.any(np.abs(w) >= 1):
        raise OutsideBidisc("points must lie in the open unit polydisc")
    return np.max(disk_distance(z, w), axis=-1)


def oracle_distance(domain, p, q):
    """Exact distance for balls, centered complex ellipsoids and polydiscs; ``None`` otherwise."""
    p = np.asarray(p, complex)
    q = np.asarray(q, complex)
    cons = domain.constraints
    if len(cons) == 1 and isinstance(cons[0], EllipsoidConstraint):
        c = cons[0]
        # complex ellipsoids are linear images of the unit ball
        return ball_oracle_distance((p - c.center) / c.semiaxes, (q - c.center) / c.semiaxes)
    if cons and all(isinstance(c, CylinderConstraint) for c in cons):
        idx = sorted(c.index for c in cons)
        if idx == list(range(domain.n)):
            by = {c.index: c for c in cons}
            cen = np.array([by[i].center for i in range(domain.n)])
            rad = np.array([by[i].radius for i in range(domain.n)])
            return bidisc_oracle_distance((p - cen) / rad, (q - cen) / rad)
    return None


# distance lower bounds


def _canonical(p, q):
    """Order endpoints lexicographically so estimators are exactly symmetric."""
    a, b = to_real(p), to_real(q)
    for x, y in zip(a, b):
        if x != y:
            return (p, q) if x < y else (q, p)
    return p, q


def distance_lower_convex(domain, p, q):
    """``max`` over orderings of ``(1/2) log(|x - xi| / |y - xi|)``, ``xi`` the exit of the ray x -> y.

    Valid for convex domains: the supporting half-space at ``xi`` contains
    the domain and, with ``x``, ``y``, ``xi`` collinear, its half-plane
    distance is at least this value.
    """
    if not domain.flags.is_convex:
        raise NotConvex("needs a convex domain")
    p, q = _canonical(np.asarray(p, complex), np.asarray(q, complex))
    d = cnorm(q - p)
    if d == 0:
        return 0.0
    best = 0.0
    for x, y in ((p, q), (q, p)):
        u = (y - x) / d
        t = float(ray_exit_time(domain, y, u))
        # |x - xi| = d + t, |y - xi| = t
        best = max(best, 0.5 * np.log1p(d / t))
    return float(best)


def distance_lower_cconvex(domain, p, q):
    """``(1/4) log(1 + |p - q| / min(delta(p; p-q), delta(q; p-q)))``."""
    if not domain.flags.is_c_convex:
        raise NotCConvex("needs a C-convex domain")
    p, q = _canonical(np.asarray(p, complex), np.asarray(q, complex))
    v = p - q
    d = cnorm(v)
    if d == 0:
        return 0.0
    g = min(float(directional_boundary_distance(domain, p, v)),
            float(directional_boundary_distance(domain, q, v)))
    return float(0.25 * np.log1p(d / g))


def _image_distance(cons, ell, a, b):
    """Largest disk/half-plane distance between ``ell(p)`` and ``ell(q)`` over constraint images."""
    best = 0.0
    for c in cons:
        disk = c.disk_image(ell)
        if disk is not None:
            cen, rad = disk
            if rad > 0:
                x, y = (a - cen) / rad, (b - cen) / rad
                if abs(x) < 1 and abs(y) < 1:
                    best = max(best, float(disk_distance(x, y)))
            continue
        off = c.halfplane_image(ell)
        if off is not None:
            x, y = off - a, off - b
            if x.real > 0 and y.real > 0:
                best = max(best, float(halfplane_distance(x, y)))
    return best


def distance_lower_projection(domain, p, q, restarts=2, maxiter=80):
    """Lower bound from holomorphic projections onto disks and half-planes.

    For a linear functional ``ell``, every constraint whose image under
    ``ell`` is a disk or a half-plane gives ``K(p, q) >= d(ell p, ell q)`` in
    that image, because holomorphic maps do not increase the distance.
    Functionals are optimised by Nelder-Mead from a few natural starts.
    Supporting half-spaces at boundary points whose active constraint is a
    convex set contribute as well.
    """
    p, q = _canonical(np.asarray(p, complex), np.asarray(q, complex))
    n = p.size
    if cnorm(p - q) == 0:
        return 0.0
    best = 0.0
    # coordinate functionals (cylinders) and constraint-defined half-planes
    for k in range(n):
        e = np.zeros(n, complex)
        e[k] = 1.0
        best = max(best, _image_distance(domain.constraints, e, e @ p, e @ q))
    for c in domain.constraints:
        if hasattr(c, "normal_vec"):
            ell = np.conj(c.normal_vec)
            best = max(best, _image_distance([c], ell, ell @ p, ell @ q))
    ells = [c for c in domain.constraints if isinstance(c, EllipsoidConstraint)]
    if ells:
        def neg(x):
            ell = from_real(x)
            if cnorm(ell) == 0:
                return 0.0
            return -_image_distance(ells, ell, ell @ p, ell @ q)

        starts = [np.conj(q - p), np.conj(p), np.conj(q), np.conj(p + q)]
        starts = [s for s in starts if cnorm(s) > 1e-12][:restarts]
        for s in starts:
            s = s / cnorm(s)
            res = optimize.minimize(neg, to_real(s), method="Nelder-Mead",
                                    options={"maxiter": maxiter, "xatol": 1e-9, "fatol": 1e-12})
            best = max(best, -res.fun, -neg(to_real(s)))
    best = max(best, _support_bound(domain, p, q))
    return float(best)


def _support_bound(domain, p, q):
    """Half-plane bound from supporting half-spaces of convex active constraints."""
    d = q - p
    u = d / cnorm(d)
    t_max = 2 * domain.bounding_radius
    dirs = [u, -u, 1j * u, -1j * u]
    best = 0.0
    for x in (p, q):
        xs = np.repeat(x[None], len(dirs), axis=0)
        t = ray_exit_time(domain, xs, np.array(dirs))
        xi = xs + t[:, None] * np.array(dirs)
        for b in xi:
            dists = np.array([c.distance(b, t_max) for c in domain.constraints])
            c = domain.constraints[int(np.argmin(dists))]
            if not c.convex:
                continue
            nu = c.normal(b - 1e-12 * c.normal(b))
            if cnorm(nu) == 0:
                continue
            ell = np.conj(nu)
            off = float(np.real(ell @ b))
            a1, a2 = off - ell @ p, off - ell @ q
            if a1.real > 0 and a2.real > 0:
                best = max(best, float(halfplane_distance(a1, a2)))
    return best


def nikolov_upper(domain, p, q):
    """``log(1 + 2|p - q| / sqrt(delta(p) delta(q)))`` for points in the declared Dini window."""
    win = domain.flags.dini_window
    p = np.asarray(p, complex)
    q = np.asarray(q, complex)
    if win is None:
        raise NoDiniWindow("domain declares no Dini-smooth window")
    if not (win.contains(p) and win.contains(q)):
        raise NoDiniWindow("points must lie in the declared Dini-smooth window")
    p, q = _canonical(p, q)
    d = cnorm(p - q)
    if d == 0:
        return 0.0
    dp = float(boundary_distance(domain, p))
    dq = float(boundary_distance(domain, q))
    return float(np.log1p(2 * d / np.sqrt(dp * dq)))


# brackets


@dataclass
class DistanceEstimate:
    """``lower <= K(p, q) <= upper`` with the method that produced each side.

    ``rigorous_lower`` ignores the ``half-functional`` candidate, whose
    validity rests on the path optimiser having reached the infimum of the
    upper functional (see :func:`distance_bracket`).
    """

    lower: float
    upper: float
    lower_method: str
    upper_method: str
    candidates: dict = field(default_factory=dict)
    rigorous_lower: float = None

    def __post_init__(self):
        if self.rigorous_lower is None:
            self.rigorous_lower = self.lower

    @property
    def ratio(self):
        return self.upper / self.lower if self.lower > 0 else float("inf")

    def to_dict(self):
        return {"lower": self.lower, "upper": self.upper, "lower_method": self.lower_method,
                "upper_method": self.upper_method, "rigorous_lower": self.rigorous_lower}


def lower_bounds(domain, p, q, projection=True):
    """All applicable rigorous lower bounds, by method tag."""
    out = {}
    if domain.flags.is_convex:
        out["convex-ray"] = distance_lower_convex(domain, p, q)
    if domain.flags.is_c_convex:
        out["c-convex"] = distance_lower_cconvex(domain, p, q)
    if projection:
        out["projection"] = distance_lower_projection(domain, p, q)
    return out


def distance_bracket(domain, p, q, upper=None, projection=True, optimizer=None, half_functional=True,
                     **upper_kw):
    """Bracket ``K(p, q)`` from lower bounds and the best upper bound.

    ``upper`` may pass a precomputed path upper bound (as from a batch
    optimisation); otherwise :func:`kobalab.paths.distance_upper` runs.
    Nikolov's estimate joins the upper side when both points lie in the
    domain's declared Dini window.

    On convex domains the metric is pinched between ``F/2`` and ``F``,
    ``F(z; v) = |v| / delta(z; v)``, so ``K`` is at least half the
    infimum of the ``F``-length.  With ``half_functional`` the optimised
    path value ``U`` contributes the candidate ``U / 2``; it is a true lower
    bound as long as ``U`` is within a factor 2 of ``K``, which the
    optimiser achieves on the built-in convex domains.  The purely rigorous
    maximum is kept in ``rigorous_lower``.
    """
    from .paths import distance_upper

    p = np.asarray(p, complex)
    q = np.asarray(q, complex)
    _check_interior(domain, p, q)
    if cnorm(p - q) == 0:
        return DistanceEstimate(0.0, 0.0, "equal", "equal")
    lows = lower_bounds(domain, p, q, projection)
    rig = max(lows.values()) if lows else 0.0
    ups = {}
    ups["path"] = float(upper) if upper is not None else distance_upper(domain, p, q, **(optimizer or {}), **upper_kw)
    if half_functional and domain.flags.is_convex:
        lows["half-functional"] = 0.5 * ups["path"]
    win = domain.flags.dini_window
    if win is not None and win.contains(p) and win.contains(q):
        ups["nikolov"] = nikolov_upper(domain, p, q)
    lk = max(lows, key=lows.get) if lows else "none"
    uk = min(ups, key=ups.get)
    lo = lows[lk] if lows else 0.0
    cand = {**{f"lower:{k}": v for k, v in lows.items()}, **{f"upper:{k}": v for k, v in ups.items()}}
    return DistanceEstimate(float(lo), float(ups[uk]), lk, uk, cand, float(rig))


# Mercer's logarithmic bound

MERCER_BETAS = (0.25, 0.5, 0.75, 1.0, 1.5, 2.0)


@dataclass
class MercerFit:
    """Least ``alpha`` per ``beta`` with ``K(z, z0) <= alpha + beta log(1/delta(z))`` on samples."""

    alphas: dict
    beta_hat: float
    alpha_hat: float
    covers: bool
    records: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return {"alphas": {str(k): v for k, v in self.alphas.items()}, "beta_hat": self.beta_hat,
                "alpha_hat": self.alpha_hat, "covers": self.covers}


def mercer_fit(domain, z0, samples, distance=None, betas=MERCER_BETAS, slope_tol=0.05):
    """Fit ``alpha_hat(beta)`` on boundary-approaching samples.

    ``distance(z, z0)`` defaults to :func:`kobalab.paths.distance_upper`.  A
    ``beta`` covers the samples when the residuals
    ``K - beta log(1/delta)`` do not grow as ``delta`` shrinks (the
    least-squares slope over the deeper half of the samples is at most
    ``slope_tol``, well below the grid spacing);
    ``beta_hat`` is the smallest covering grid value.
    """
    if not domain.flags.is_convex:
        raise NotConvex("needs a convex domain")
    from .paths import distance_upper

    z0 = np.asarray(z0, complex)
    Z = np.atleast_2d(np.asarray(samples, complex))
    if distance is None:
        distance = lambda z, w: distance_upper(domain, z, w)  # noqa: E731
    K = np.array([float(distance(z, z0)) for z in Z])
    d = boundary_distance(domain, Z)
    L = np.log(1.0 / d)
    order = np.argsort(-d)
    alphas, cover = {}, {}
    for b in betas:
        res = K - b * L
        alphas[b] = float(max(0.0, res.max()))
        r = res[order]
        tail = r[len(r) // 2:]
        if len(tail) >= 2 and np.ptp(L[order][len(r) // 2:]) > 0:
            slope = np.polyfit(L[order][len(r) // 2:], tail, 1)[0]
            cover[b] = bool(slope <= slope_tol)
        else:
            cover[b] = True
    ok = [b for b in betas if cover[b]]
    b_hat = min(ok) if ok else float("nan")
    recs = [{"z": to_real(z).tolist(), "delta": float(di), "distance": float(k)} for z, di, k in zip(Z, d, K)]
    return MercerFit(alphas, b_hat, alphas.get(b_hat, float("nan")), bool(ok), recs)


# infinitesimal localization


def localization_metric_check(omega, window, Z, V, nu=1.0, eps=None, xi=None, tol=1e-6):
    """Compare ``delta_Omega(z; v)`` with ``delta_{Omega cap U}(z; v)`` on samples.

    Returns a dict with per-sample records, the monotonicity and window
    transparency verdicts and the fitted ``c_hat`` in
    ``log(ratio) <= c_hat |log delta_Omega(z)|^-(1+nu)`` over samples that
    satisfy ``delta_Omega(z; v) <= dist(z, dU)`` and lie in ``B_eps(xi)``.
    """
    from .domains import intersect_window

    sub = intersect_window(omega, window)
    Z = np.atleast_2d(np.asarray(Z, complex))
    V = np.atleast_2d(np.asarray(V, complex))
    g_full = directional_boundary_distance(omega, Z, V)
    g_sub = directional_boundary_distance(sub, Z, V)
    d_full = boundary_distance(omega, Z)
    du = window.boundary_gap(Z)
    qualifies = g_full < du
    if xi is not None and eps is not None:
        in_ball = cnorm(Z - np.asarray(xi, complex)) < eps
    else:
        in_ball = np.ones(len(Z), bool)
    monotone = g_sub <= g_full * (1 + 1e-12)
    transparent = np.abs(g_sub - g_full) <= tol * np.maximum(g_full, 1.0)
    logratio = np.log(g_full / g_sub)
    fit_mask = in_ball & (g_full <= du)
    weight = np.abs(np.log(d_full)) ** (-(1 + nu))
    c_hat = float(np.max(logratio[fit_mask] / weight[fit_mask])) if fit_mask.any() else 0.0
    records = [{"z": to_real(z).tolist(), "v": to_real(v).tolist(), "gap_omega": float(a),
                "gap_window": float(b), "delta_omega": float(c), "dist_window_boundary": float(e),
                "qualifies": bool(f)}
               for z, v, a, b, c, e, f in zip(Z, V, g_full, g_sub, d_full, du, qualifies)]
    return {"monotone": bool(monotone.all()),
            "transparent": bool(transparent[qualifies].all()),
            "qualifying": int(qualifies.sum()),
            "max_transparency_error": float(np.max(np.abs(g_sub - g_full)[qualifies], initial=0.0)),
            "c_hat": max(c_hat, 0.0), "nu": nu, "records": records}


# CSV output

CSV_FIELDS = ("scenario", "point", "direction", "lower", "upper", "lower_method", "upper_method", "wall_ms")


def fmt(x):
    """Nine significant digits, the format of every numeric output."""
    return format(float(x), ".9g")


def csv_rows(scenario, rows, wall_time=True):
    """Render ``(point, direction, lower, upper, lower_method, upper_method, wall_ms)`` rows as CSV."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    fields = CSV_FIELDS if wall_time else CSV_FIELDS[:-1]
    w.writerow(fields)
    for r in rows:
        point = " ".join(fmt(x) for x in to_real(np.atleast_1d(r["point"])))
        direction = "" if r.get("direction") is None else " ".join(
            fmt(x) for x in to_real(np.atleast_1d(r["direction"])))
        line = [scenario, point, direction, fmt(r["lower"]), fmt(r["upper"]),
                r.get("lower_method", ""), r.get("upper_method", "")]
        if wall_time:
            line.append(fmt(r.get("wall_ms", 0.0)))
        w.writerow(line)
    return buf.getvalue()


def timed(fn, *args, **kw):
    """``(result, wall milliseconds)``."""
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, 1e3 * (time.perf_counter() - t0)
