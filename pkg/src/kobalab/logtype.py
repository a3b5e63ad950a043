"""Near-boundary sampling and the log-type convexity certificate.

A convex domain is log-type convex when the directional gaps obey

    delta(z; v) <= C / |log delta(z)|^(1 + nu)

near the boundary.  :func:`log_type_certificate` checks this inequality on
sampled points and fits the empirical exponent ``lambda_hat`` in
``delta(z; v_worst) ~ C_hat / |log delta(z)|^lambda_hat``, so that the
inequality is plausible exactly when ``lambda_hat >= 1 + nu``.
"""
from dataclasses import dataclass, field

import numpy as np

from .constraints import cnorm, from_real, hdot, to_real
from .domains import (contains, directional_boundary_distance,
                      inward_normal, ray_exit_time)
from .errors import NotConvex


@dataclass(frozen=True)
class NearBoundarySpec:
    """How to place sample points near the boundary.

    Parameters
    ----------
    levels : sequence of float
        Target gaps ``delta``, strictly decreasing, all below 1/2.
    samples : int
        Points per level.
    seed : int
    anchor : array of complex, optional
        Boundary point to approach.  With ``anchor_radius == 0`` every sample
        lies on the inward normal through the anchor; otherwise boundary
        points are drawn within ``anchor_radius`` of it.  Without an anchor,
        boundary points are hit by random rays from the basepoint.
    """

    levels: tuple
    samples: int = 8
    seed: int = 0
    anchor: object = None
    anchor_radius: float = 0.0

    def __post_init__(self):
        lv = np.asarray(self.levels, float)
        if lv.ndim != 1 or lv.size == 0 or np.any(lv <= 0) or np.any(np.diff(lv) >= 0):
            raise ValueError("levels must be positive and strictly decreasing")
        object.__setattr__(self, "levels", tuple(float(x) for x in lv))


def _boundary_points(domain, spec, count, rng):
    n = domain.n
    base = domain.basepoint
    if spec.anchor is None:
        u = from_real(rng.normal(size=(count, 2 * n)))
    else:
        anchor = np.asarray(spec.anchor, complex)
        if spec.anchor_radius == 0:
            return np.repeat(anchor[None], count, axis=0)
        x = rng.normal(size=(count, 2 * n))
        x *= spec.anchor_radius * rng.uniform(size=(count, 1)) ** (1 / (2 * n)) / np.linalg.norm(x, axis=1, keepdims=True)
        u = anchor + from_real(x) - base
    u = u / cnorm(u)[:, None]
    t = ray_exit_time(domain, np.repeat(base[None], count, axis=0), u)
    return base + t[:, None] * u


def near_boundary_samples(domain, spec):
    """Interior points at the requested gap levels.

    Returns ``(Z, delta, level_index, xi)`` where ``xi`` are the boundary
    points the samples were walked in from.  Samples are rejected when they
    leave the domain, when ``delta >= 1/2`` or when the two nearest
    constraints are both within ``2 delta`` (corners of windowed domains).
    """
    rng = np.random.default_rng(spec.seed)
    t_max = 2 * domain.bounding_radius
    Zs, ds, ks, xis = [], [], [], []
    for k, lev in enumerate(spec.levels):
        got = 0
        for _ in range(8):
            need = spec.samples - got
            if need <= 0:
                break
            xi = _boundary_points(domain, spec, 2 * need, rng)
            # normal of the active constraint, evaluated just inside
            nrm = inward_normal(domain, xi)
            probe = xi + 1e-9 * nrm
            nrm = inward_normal(domain, probe)
            Z = xi + lev * nrm
            ok = contains(domain, Z)
            Z, xi = Z[ok], xi[ok]
            if len(Z) == 0:
                continue
            per = np.sort(np.array([c.distance(Z, t_max) for c in domain.constraints]), axis=0)
            d = per[0]
            ok = d < 0.5
            if len(domain.constraints) > 1:
                ok &= per[1] >= 2 * d
            Z, xi, d = Z[ok][:need], xi[ok][:need], d[ok][:need]
            Zs.append(Z)
            xis.append(xi)
            ds.append(d)
            ks.append(np.full(len(Z), k))
            got += len(Z)
    if not Zs:
        return (np.zeros((0, domain.n), complex), np.zeros(0), np.zeros(0, int),
                np.zeros((0, domain.n), complex))
    return np.concatenate(Zs), np.concatenate(ds), np.concatenate(ks), np.concatenate(xis)


def direction_grid(n, count=96, seed=0):
    """Unit directions covering ``CP^{n-1}`` (one representative per line)."""
    if n == 1:
        return np.ones((1, 1), complex)
    if n == 2:
        m = max(2, int(np.sqrt(count / 2)))
        a = np.linspace(0, np.pi / 2, m + 1)
        phi = 2 * np.pi * np.arange(2 * m) / (2 * m)
        A, P = np.meshgrid(a, phi, indexing="ij")
        V = np.stack([np.cos(A), np.sin(A) * np.exp(1j * P)], axis=-1).reshape(-1, 2)
        # drop duplicate phases at the poles
        keep = np.ones(len(V), bool)
        keep[1:2 * m] = False
        keep[-2 * m + 1:] = False
        return V[keep]
    rng = np.random.default_rng(seed)
    V = from_real(rng.normal(size=(count, 2 * n)))
    return np.vstack([np.eye(n), V / cnorm(V)[:, None]])


def complex_tangent_directions(normal):
    """Orthonormal basis of the complex tangent space ``{v : <v, normal> = 0}``."""
    nu = np.asarray(normal, complex)
    nu = nu / cnorm(nu)
    n = nu.size
    basis = []
    for e in np.eye(n, dtype=complex):
        w = e - hdot(e, nu) * nu
        for b in basis:
            w = w - hdot(w, b) * b
        if cnorm(w) > 1e-8:
            basis.append(w / cnorm(w))
    return np.array(basis[: n - 1]).reshape(-1, n)


def worst_directions(domain, Z, normals=None, grid=96):
    """For each point, the direction of the grid with the largest gap ``delta(z; v)``."""
    G = direction_grid(domain.n, grid)
    gaps = np.empty((len(Z), len(G) + domain.n - 1))
    dirs = np.empty((len(Z), gaps.shape[1], domain.n), complex)
    for i, z in enumerate(Z):
        extra = complex_tangent_directions(normals[i]) if normals is not None else np.zeros((0, domain.n))
        V = np.vstack([G, extra])
        g = directional_boundary_distance(domain, np.repeat(z[None], len(V), axis=0), V)
        gaps[i, :len(V)] = g
        gaps[i, len(V):] = -np.inf
        dirs[i, :len(V)] = V
    j = np.argmax(gaps, axis=1)
    return dirs[np.arange(len(Z)), j], gaps[np.arange(len(Z)), j]


@dataclass
class LogTypeCertificate:
    """Outcome of checking ``delta(z; v) <= C / |log delta(z)|^(1 + nu)`` on samples.

    ``passed`` holds exactly when every sample satisfies the inequality.
    ``lambda_hat`` and ``C_hat`` come from a least-squares fit of
    ``log delta(z; v)`` against ``log |log delta(z)|`` on the per-level
    worst case.
    """

    nu: float
    C: float
    lambda_hat: float
    C_hat: float
    passed: bool
    sample_count: int
    worst: dict = None
    records: list = field(default_factory=list, repr=False)

    @property
    def exponent_admissible(self):
        """Whether the fitted decay is at least as fast as the required ``1 + nu``."""
        return bool(self.lambda_hat >= 1 + self.nu)

    def to_dict(self):
        return {"nu": self.nu, "C": self.C, "lambda_hat": self.lambda_hat, "C_hat": self.C_hat,
                "passed": self.passed, "exponent_admissible": self.exponent_admissible,
                "sample_count": self.sample_count, "worst": self.worst}


def measure_gaps(domain, spec, grid=96):
    """Sample points and their worst directional gaps.

    Returns a dict of arrays: ``z``, ``delta``, ``level``, ``v``, ``gap``.
    """
    if not domain.flags.is_convex:
        raise NotConvex("log-type convexity is only defined for convex domains")
    Z, d, k, xi = near_boundary_samples(domain, spec)
    normals = None
    if len(Z):
        normals = -inward_normal(domain, xi + 1e-9 * inward_normal(domain, xi))
    V, g = worst_directions(domain, Z, normals, grid)
    return {"z": Z, "delta": d, "level": k, "v": V, "gap": g}


def calibrate_constant(gaps, nu, slack=1.1):
    """Smallest ``C`` covering the measured gaps, times ``slack``."""
    lhs = gaps["gap"] * np.abs(np.log(gaps["delta"])) ** (1 + nu)
    return float(slack * lhs.max())


def fit_exponent(gaps):
    """Least-squares ``(lambda_hat, C_hat)`` on the per-level worst gaps."""
    xs, ys = [], []
    for k in np.unique(gaps["level"]):
        m = gaps["level"] == k
        j = np.argmax(gaps["gap"][m])
        xs.append(np.log(np.abs(np.log(gaps["delta"][m][j]))))
        ys.append(np.log(gaps["gap"][m][j]))
    if len(xs) < 2:
        return float("nan"), float("nan")
    slope, icpt = np.polyfit(xs, ys, 1)
    return float(-slope), float(np.exp(icpt))


def log_type_certificate(domain, near_boundary_spec, nu, C, grid=96, gaps=None):
    """Certify log-type convexity with exponent ``nu`` and constant ``C`` on samples.

    Failures are reported in the certificate, never raised.  Pass ``gaps``
    (from :func:`measure_gaps`) to reuse an earlier measurement.
    """
    if not (nu > 0 and C > 0):
        raise ValueError("nu and C must be positive")
    if gaps is None:
        gaps = measure_gaps(domain, near_boundary_spec, grid)
    d, g = gaps["delta"], gaps["gap"]
    rhs = C / np.abs(np.log(d)) ** (1 + nu)
    ok = g <= rhs
    lam, c_hat = fit_exponent(gaps)
    worst = None
    if len(d):
        i = int(np.argmax(g / rhs))
        worst = {"z": to_real(gaps["z"][i]).tolist(), "v": to_real(gaps["v"][i]).tolist(),
                 "delta": float(d[i]), "gap": float(g[i]), "bound": float(rhs[i]),
                 "violated": bool(not ok[i])}
    records = [{"level": int(gaps["level"][i]), "z": to_real(gaps["z"][i]).tolist(),
                "delta": float(d[i]), "gap": float(g[i]), "bound": float(rhs[i]), "ok": bool(ok[i])}
               for i in range(len(d))]
    return LogTypeCertificate(float(nu), float(C), lam, c_hat, bool(ok.all()) and len(d) > 0,
                              int(len(d)), worst, records)
