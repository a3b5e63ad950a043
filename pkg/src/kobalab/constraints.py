"""Defining constraints of model domains in C^n.

Every constraint describes an open set ``{z : value(z) < 0}``.  A domain is
an intersection of constraints, and because the complement of an
intersection is the union of complements, all boundary gaps of a domain are
minima of the per-constraint gaps.  Built-in constraints implement exact
formulas; anything else falls back on ray casting.

Points are complex arrays of shape ``(..., n)``.  A real direction of
``R^{2n}`` is stored as a complex array too, its Euclidean norm being the
norm of ``R^{2n}``.
"""
import numpy as np
from scipy import optimize

from .errors import ParseError

N_MARCH = 32
N_BISECT = 44
N_GEOM = 40
GOLDEN = 0.5 * (np.sqrt(5.0) - 1.0)


def cnorm(z):
    z = np.asarray(z)
    return np.sqrt(np.sum(z.real ** 2 + z.imag ** 2, axis=-1))


def hdot(a, b):
    """Hermitian product ``sum a_i conj(b_i)`` over the last axis."""
    return np.sum(a * np.conj(b), axis=-1)


def to_real(z):
    """Interleave real and imaginary parts: ``(..., n) -> (..., 2n)``."""
    z = np.asarray(z, dtype=complex)
    return np.stack([z.real, z.imag], axis=-1).reshape(z.shape[:-1] + (2 * z.shape[-1],))


def from_real(x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] % 2:
        raise ValueError("interleaved coordinates need an even length")
    x = x.reshape(x.shape[:-1] + (x.shape[-1] // 2, 2))
    return x[..., 0] + 1j * x[..., 1]


def _unit(v):
    v = np.asarray(v, dtype=complex)
    return v / cnorm(v)[..., None]


def march_bisect_exit(value, Z, U, t_max, n_march=N_MARCH, n_bisect=N_BISECT):
    """First exit time of ``Z + t U`` from ``{value < 0}`` on ``[0, t_max]``.

    The ray is sampled at ``n_march`` equispaced times, plus geometrically
    spaced times near 0, to bracket the first crossing, which is then
    bisected.  Rays that never cross return ``inf``.
    """
    Z, U = np.broadcast_arrays(np.asarray(Z, complex), np.asarray(U, complex))
    shape = Z.shape[:-1]
    # geometric times catch exits close to the start that a linear march skips
    ts = t_max * np.union1d(np.geomspace(1e-12, 1.0, N_GEOM), np.arange(1, n_march + 1) / n_march)
    vals = value(Z[None] + ts[(slice(None),) + (None,) * Z.ndim] * U[None])
    outside = vals >= 0
    hit = outside.any(axis=0)
    first = np.argmax(outside, axis=0)
    hi = np.where(hit, ts[first], np.inf)
    lo = np.where(first > 0, ts[np.maximum(first - 1, 0)], 0.0)
    lo = np.where(hit, lo, 0.0)
    hi_b = np.where(hit, hi, 0.0)
    for _ in range(n_bisect):
        mid = 0.5 * (lo + hi_b)
        inside = value(Z + mid[..., None] * U) < 0
        lo = np.where(inside, mid, lo)
        hi_b = np.where(inside, hi_b, mid)
    out = np.where(hit, 0.5 * (lo + hi_b), np.inf)
    # a point already outside exits immediately
    out = np.where(value(Z) >= 0, 0.0, out)
    return out.reshape(shape)


def lipschitz_root(fun, f0, t_max, lip, n_trace=6, growth=0.5, n_refine=60, rtol=1e-13):
    """First crossing of ``fun(i, t) >= 0`` for rays ``i`` with ``fun(i, 0) = f0[i]``.

    ``fun`` must be ``lip``-Lipschitz in ``t``, so steps of ``-f / lip``
    cannot cross zero (sphere tracing).  After ``n_trace`` such steps the
    march also grows ``t`` by the factor ``1 + growth`` until the sign
    changes, and the crossing is then located by the Illinois variant of
    regula falsi.  Rays that never cross before ``t_max`` return ``inf``.
    """
    f0 = np.asarray(f0, float)
    t_max = np.broadcast_to(np.asarray(t_max, float), f0.shape)
    out = np.full(len(f0), np.inf)
    out[f0 >= 0] = 0.0
    idx = np.flatnonzero(f0 < 0)
    t = np.zeros(len(idx))
    f = f0[idx]
    lo_t, lo_f, hi_t, hi_f, owner = [], [], [], [], []
    k = 0
    while idx.size:
        step = -f / lip
        if k >= n_trace:
            step = np.maximum(step, growth * t)
        tn = np.minimum(t + step, t_max[idx])
        fn = fun(idx, tn)
        crossed = fn >= 0
        lo_t.append(t[crossed]), lo_f.append(f[crossed])
        hi_t.append(tn[crossed]), hi_f.append(fn[crossed]), owner.append(idx[crossed])
        # stalled at t_max, or converged onto a tangential touch
        at_end = tn >= t_max[idx]
        stop = ~crossed & (at_end | (step <= rtol * np.maximum(tn, 1e-300)))
        touch = stop & ~at_end
        out[idx[touch]] = tn[touch]
        keep = ~crossed & ~stop
        idx, t, f = idx[keep], tn[keep], fn[keep]
        k += 1
    if not owner:
        return out
    a, fa = np.concatenate(lo_t), np.concatenate(lo_f)
    b, fb = np.concatenate(hi_t), np.concatenate(hi_f)
    own = np.concatenate(owner)
    side = np.zeros(len(a), int)
    live = np.arange(len(a))
    for _ in range(n_refine):
        live = live[b[live] - a[live] > rtol * b[live]]
        if not live.size:
            break
        al, bl, fal, fbl = a[live], b[live], fa[live], fb[live]
        with np.errstate(divide="ignore", invalid="ignore"):
            c = bl - fbl * (bl - al) / (fbl - fal)
        c = np.where((c > al) & (c < bl), c, 0.5 * (al + bl))
        fc = fun(own[live], c)
        inside = fc < 0
        sd = side[live]
        # Illinois: halve the retained end's value after two moves on one side
        fbl = np.where(inside & (sd == 1), 0.5 * fbl, fbl)
        fal = np.where(~inside & (sd == -1), 0.5 * fal, fal)
        a[live], fa[live] = np.where(inside, c, al), np.where(inside, fc, fal)
        b[live], fb[live] = np.where(inside, bl, c), np.where(inside, fbl, fc)
        side[live] = np.where(inside, 1, -1)
    out[own] = b
    return out


def lipschitz_exit(value, Z, U, t_max, lip, **kw):
    """First exit time of ``Z + t U`` from ``{value < 0}`` for a ``lip``-Lipschitz ``value``.

    ``U`` must have unit norm; see :func:`lipschitz_root`.
    """
    Z, U = np.broadcast_arrays(np.asarray(Z, complex), np.asarray(U, complex))
    shape = Z.shape[:-1]
    n = Z.shape[-1]
    Zf, Uf = Z.reshape(-1, n), U.reshape(-1, n)
    t_max = np.broadcast_to(np.asarray(t_max, float), shape).reshape(-1)
    out = lipschitz_root(lambda i, t: value(Zf[i] + t[:, None] * Uf[i]), value(Zf), t_max, lip, **kw)
    return out.reshape(shape)


def golden_min(f, a, b, iters=30):
    """Vectorised golden-section search of ``f`` on ``[a, b]`` (elementwise)."""
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        left = fc < fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        d_new = np.where(left, c, a + GOLDEN * (b - a))
        c_new = np.where(left, b - GOLDEN * (b - a), d)
        f_new = f(np.where(left, c_new, d_new))
        fc, fd = np.where(left, f_new, fd), np.where(left, fc, f_new)
        c, d = c_new, d_new
    x = np.where(fc < fd, c, d)
    return x, np.minimum(fc, fd)


def raycast_line_gap(ray_exit, Z, V, phases=64, refine_iters=30):
    """Gap from ``Z`` to the complement inside the complex line ``Z + C V``.

    Minimises the ray exit time over the phase ``theta`` of ``exp(i theta) V``
    on a grid, then refines around the best grid phase by golden section.
    """
    Z, V = np.broadcast_arrays(np.asarray(Z, complex), np.asarray(V, complex))
    V = _unit(V)
    theta = 2 * np.pi * np.arange(phases) / phases
    rot = np.exp(1j * theta)
    T = ray_exit(Z[..., None, :], rot[:, None] * V[..., None, :])
    k = np.argmin(T, axis=-1)
    best = np.take_along_axis(T, k[..., None], axis=-1)[..., 0]
    if refine_iters <= 0:
        # vertex of the parabola through the best phase and its neighbours
        tl = np.take_along_axis(T, ((k - 1) % phases)[..., None], axis=-1)[..., 0]
        tr = np.take_along_axis(T, ((k + 1) % phases)[..., None], axis=-1)[..., 0]
        with np.errstate(invalid="ignore"):
            curv = tl + tr - 2 * best
        with np.errstate(divide="ignore", invalid="ignore"):
            est = best - (tr - tl) ** 2 / (8 * curv)
        ok = np.isfinite(est) & (curv > 0)
        return np.where(ok, np.clip(est, 0.5 * best, best), best)
    step = 2 * np.pi / phases
    t0 = theta[k]

    def f(th):
        return ray_exit(Z, np.exp(1j * th)[..., None] * V)

    _, fmin = golden_min(f, t0 - step, t0 + step, iters=refine_iters)
    return np.minimum(best, fmin)


def _sphere_directions(n, count, seed=12345):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(count, 2 * n))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    # include the coordinate axes so axis-aligned minima are hit exactly
    eye = np.vstack([np.eye(2 * n), -np.eye(2 * n)])
    return from_real(np.vstack([eye, x]))


def raycast_distance(ray_exit, Z, n_dirs=256, starts=3):
    """Euclidean distance to the complement by minimising ray exit times.

    A fixed direction grid on the sphere is followed by a Nelder-Mead
    refinement in the tangent space of the best few grid directions.
    """
    Z = np.asarray(Z, complex)
    shape = Z.shape[:-1]
    Zf = Z.reshape(-1, Z.shape[-1])
    n = Zf.shape[-1]
    dirs = _sphere_directions(n, n_dirs)
    out = np.empty(len(Zf))
    for i, z in enumerate(Zf):
        T = ray_exit(z[None, :], dirs)
        order = np.argsort(T)[:starts]
        best = T[order[0]]
        for j in order:
            u0 = to_real(dirs[j])
            # orthonormal basis of the tangent space at u0
            q, _ = np.linalg.qr(np.column_stack([u0, np.eye(2 * n)]))
            basis = q[:, 1:2 * n]

            def obj(a, u0=u0, basis=basis):
                u = u0 + basis @ a
                u = u / np.linalg.norm(u)
                return float(ray_exit(z, from_real(u)))

            res = optimize.minimize(obj, np.zeros(2 * n - 1), method="Nelder-Mead",
                                    options={"xatol": 1e-10, "fatol": 1e-14,
                                             "initial_simplex": 0.05 * np.vstack(
                                                 [np.zeros(2 * n - 1), np.eye(2 * n - 1)])})
            best = min(best, res.fun)
        out[i] = best
    return out.reshape(shape)


class Constraint:
    """Open set ``{value < 0}``; subclasses override what they can do exactly."""

    type = "abstract"
    #: the constraint set is convex (used for supporting half-space bounds)
    convex = True

    def value(self, Z):
        raise NotImplementedError

    def gradient(self, Z, h=1e-7):
        """Real gradient of ``value`` packed as a complex vector."""
        Z = np.asarray(Z, complex)
        n = Z.shape[-1]
        g = np.zeros(Z.shape, complex)
        for k in range(n):
            for unit in (1.0, 1j):
                e = np.zeros(n, complex)
                e[k] = unit * h
                d = (self.value(Z + e) - self.value(Z - e)) / (2 * h)
                g[..., k] += d * unit
        return g

    def normal(self, Z):
        """Outward unit normal of the level set through ``Z``."""
        g = self.gradient(Z)
        ng = cnorm(g)[..., None]
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(ng > 0, g / np.where(ng > 0, ng, 1.0), 0.0)

    def ray_exit(self, Z, U, t_max):
        return march_bisect_exit(self.value, Z, U, t_max)

    def distance(self, Z, t_max):
        return raycast_distance(lambda A, B: self.ray_exit(A, B, t_max), Z)

    def line_gap(self, Z, V, t_max, coarse=False):
        phases, iters = (16, 0) if coarse else (24, 12)
        return raycast_line_gap(lambda A, B: self.ray_exit(A, B, t_max), Z, V,
                                phases=phases, refine_iters=iters)

    def disk_image(self, ell):
        """``(center, radius)`` of the image under ``z -> sum ell_i z_i``, if a disk."""
        return None

    def halfplane_image(self, ell):
        """Offset ``b`` such that the image is ``{Re w < b}``, if a half-plane."""
        return None

    def scaled(self, s):
        raise NotImplementedError

    def to_dict(self):
        raise ParseError([("type", f"constraint {self.type!r} is not serialisable")])


class EllipsoidConstraint(Constraint):
    """Complex ellipsoid ``sum |z_i - c_i|^2 / a_i^2 < 1`` (a ball if all ``a_i`` agree)."""

    type = "ellipsoid"

    def __init__(self, center, semiaxes):
        self.center = np.asarray(center, complex)
        self.semiaxes = np.asarray(semiaxes, float)
        if self.semiaxes.shape != self.center.shape or np.any(self.semiaxes <= 0):
            raise ValueError("semiaxes must be positive and match the center")
        self.is_ball = bool(np.allclose(self.semiaxes, self.semiaxes[0], rtol=0, atol=0))

    def _w(self, Z):
        return (np.asarray(Z, complex) - self.center) / self.semiaxes

    def value(self, Z):
        w = self._w(Z)
        return np.sum(w.real ** 2 + w.imag ** 2, axis=-1) - 1.0

    def gradient(self, Z, h=None):
        return 2 * (np.asarray(Z, complex) - self.center) / self.semiaxes ** 2

    def ray_exit(self, Z, U, t_max=None):
        w = self._w(Z)
        u = np.asarray(U, complex) / self.semiaxes
        a = np.sum(np.abs(u) ** 2, axis=-1)
        b = np.real(hdot(w, u))
        c = np.sum(np.abs(w) ** 2, axis=-1) - 1.0
        disc = np.maximum(b * b - a * c, 0.0)
        t = (c * -1.0) / (b + np.sqrt(disc))  # stable root of a t^2 + 2 b t + c
        t = np.where(b + np.sqrt(disc) > 0, t, np.inf)
        return np.where(c >= 0, 0.0, t)

    def line_gap(self, Z, V, t_max=None, coarse=False):
        w = self._w(Z)
        u = _unit(V) / self.semiaxes
        a = np.sum(np.abs(u) ** 2, axis=-1)
        b = hdot(w, u)
        shift = np.abs(b) / a
        rad2 = (1.0 - np.sum(np.abs(w) ** 2, axis=-1) + np.abs(b) ** 2 / a) / a
        gap = np.sqrt(np.maximum(rad2, 0.0)) - shift
        return np.maximum(gap, 0.0)

    def distance(self, Z, t_max=None):
        Z = np.asarray(Z, complex)
        x = to_real(Z - self.center)
        if self.is_ball:
            return np.maximum(self.semiaxes[0] - cnorm(Z - self.center), 0.0)
        A2 = np.repeat(self.semiaxes, 2) ** 2
        return _ellipsoid_distance(x, A2)

    def disk_image(self, ell):
        ell = np.asarray(ell, complex)
        return complex(np.sum(ell * self.center)), float(np.sqrt(np.sum(np.abs(ell) ** 2 * self.semiaxes ** 2)))

    def scaled(self, s):
        return EllipsoidConstraint(self.center * s, self.semiaxes * s)

    def to_dict(self):
        return {"type": self.type, "center": to_real(self.center).tolist(),
                "semiaxes": self.semiaxes.tolist()}


def _ellipsoid_distance(x, A2):
    """Distance from interior points ``x`` (real coords) to an ellipsoid surface.

    With ``A_i`` the squared semi-axes, solves the projection condition
    ``sum x_i^2 A_i / (A_i + t)^2 = 1`` for the multiplier ``t`` in ``(-min A, 0)``, by bisection in
    ``log(t + min A)``; the degenerate case where the components along the
    shortest axes vanish is handled separately.
    """
    shape = np.shape(x)[:-1]
    x = np.asarray(x, float).reshape(-1, np.shape(x)[-1])
    m = A2.min()
    short = np.isclose(A2, m, rtol=1e-14, atol=0)
    gap = A2 - m  # zero on the shortest axes

    def f(s):
        denom = gap[None, :] + s[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.nan_to_num(np.sum(x ** 2 * A2 / denom ** 2, axis=1) - 1.0, nan=np.inf)

    lo = np.full(len(x), np.log(m) - 300.0)
    hi = np.full(len(x), np.log(m))
    f_lo = f(np.exp(lo))
    regular = f_lo > 0
    for _ in range(90):
        mid = 0.5 * (lo + hi)
        pos = f(np.exp(mid)) > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    s = np.exp(0.5 * (lo + hi))
    y = x * A2 / (gap[None, :] + s[:, None])
    d_reg = np.sqrt(np.sum((x - y) ** 2, axis=1))
    # degenerate branch: multiplier pinned at -min A^2
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(short, 0.0, A2 / np.where(short, 1.0, gap))
    y_ns = x * ratio
    g = np.sum(np.where(short, 0.0, x ** 2 * ratio ** 2 / A2), axis=1)
    d_deg = np.sqrt(np.sum(np.where(short, 0.0, (x - y_ns) ** 2), axis=1) + m * np.maximum(1 - g, 0))
    return np.where(regular, d_reg, d_deg).reshape(shape)


class CylinderConstraint(Constraint):
    """One factor of a polydisc: ``|z_k - c| < r``."""

    type = "cylinder"

    def __init__(self, index, center, radius):
        self.index = int(index)
        self.center = complex(center)
        self.radius = float(radius)

    def value(self, Z):
        return np.abs(np.asarray(Z, complex)[..., self.index] - self.center) - self.radius

    def gradient(self, Z, h=None):
        Z = np.asarray(Z, complex)
        w = Z[..., self.index] - self.center
        g = np.zeros(Z.shape, complex)
        g[..., self.index] = w / np.maximum(np.abs(w), 1e-300)
        return g

    def ray_exit(self, Z, U, t_max=None):
        w = np.asarray(Z, complex)[..., self.index] - self.center
        u = np.asarray(U, complex)[..., self.index]
        a = np.abs(u) ** 2
        b = np.real(w * np.conj(u))
        c = np.abs(w) ** 2 - self.radius ** 2
        root = b + np.sqrt(np.maximum(b * b - a * c, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(root > 0, -c / root, np.inf)
        return np.where(c >= 0, 0.0, t)

    def line_gap(self, Z, V, t_max=None, coarse=False):
        w = np.abs(np.asarray(Z, complex)[..., self.index] - self.center)
        vk = np.abs(_unit(V)[..., self.index])
        with np.errstate(divide="ignore"):
            return np.where(vk > 0, np.maximum(self.radius - w, 0.0) / vk, np.inf)

    def distance(self, Z, t_max=None):
        return np.maximum(self.radius - np.abs(np.asarray(Z, complex)[..., self.index] - self.center), 0.0)

    def disk_image(self, ell):
        ell = np.asarray(ell, complex)
        others = np.delete(ell, self.index)
        if np.any(np.abs(others) > 1e-12 * max(1.0, np.abs(ell[self.index]))):
            return None
        lam = ell[self.index]
        return complex(lam * self.center), float(np.abs(lam) * self.radius)

    def scaled(self, s):
        return CylinderConstraint(self.index, self.center * s, self.radius * s)

    def to_dict(self):
        return {"type": self.type, "index": self.index,
                "center": [self.center.real, self.center.imag], "radius": self.radius}


class HalfspaceConstraint(Constraint):
    """Real half-space ``Re <z, a> < b`` with ``|a| = 1``."""

    type = "halfspace"

    def __init__(self, normal, offset):
        a = np.asarray(normal, complex)
        na = cnorm(a)
        if na == 0:
            raise ValueError("half-space normal must be non-zero")
        self.normal_vec = a / na
        self.offset = float(offset) / na

    def value(self, Z):
        return np.real(hdot(np.asarray(Z, complex), self.normal_vec)) - self.offset

    def gradient(self, Z, h=None):
        return np.broadcast_to(self.normal_vec, np.shape(Z)).copy()

    def ray_exit(self, Z, U, t_max=None):
        d = -self.value(Z)
        rate = np.real(hdot(np.asarray(U, complex), self.normal_vec))
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(rate > 0, d / rate, np.inf)
        return np.where(d <= 0, 0.0, t)

    def line_gap(self, Z, V, t_max=None, coarse=False):
        d = np.maximum(-self.value(Z), 0.0)
        beta = np.abs(hdot(_unit(V), self.normal_vec))
        with np.errstate(divide="ignore"):
            return np.where(beta > 0, d / beta, np.inf)

    def distance(self, Z, t_max=None):
        return np.maximum(-self.value(Z), 0.0)

    def halfplane_image(self, ell):
        ell = np.asarray(ell, complex)
        # ell(z) = sum ell_i z_i must be a positive multiple of <z, a>
        lam = np.sum(ell * self.normal_vec)
        if cnorm(ell - lam * np.conj(self.normal_vec)) > 1e-12 or lam.real <= 0 or abs(lam.imag) > 1e-12:
            return None
        return float(lam.real * self.offset)

    def scaled(self, s):
        return HalfspaceConstraint(self.normal_vec, self.offset * s)

    def to_dict(self):
        return {"type": self.type, "normal": to_real(self.normal_vec).tolist(), "offset": self.offset}


def flat_profile(r, alpha):
    """``exp(-1/r^alpha)`` extended by 0 at ``r = 0``."""
    r = np.asarray(r, float)
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(r > 0, np.exp(-np.power(np.where(r > 0, r, 1.0), -alpha)), 0.0)


def flat_profile_inverse(t, alpha):
    """Radius ``r`` with ``exp(-1/r^alpha) = t`` for ``0 < t < 1``."""
    t = np.asarray(t, float)
    return np.power(np.log(1.0 / t), -1.0 / alpha)


class ExpFlatConstraint(Constraint):
    """``Re z_1 > exp(-1/|z'|^alpha)`` with ``z' = (z_2, ..., z_n)``.

    The boundary is infinitely flat along ``z' = 0``.  The set is convex only
    where ``|z'|^alpha <= alpha / (alpha + 1)``.
    """

    type = "exp-flat"
    convex = False

    def __init__(self, alpha, scale=1.0):
        self.alpha = float(alpha)
        self.scale = float(scale)
        if self.alpha <= 0 or self.scale <= 0:
            raise ValueError("alpha and scale must be positive")

    def convexity_radius(self):
        return self.scale * (self.alpha / (self.alpha + 1.0)) ** (1.0 / self.alpha)

    def _profile(self, r):
        return self.scale * flat_profile(r / self.scale, self.alpha)

    def value(self, Z):
        Z = np.asarray(Z, complex)
        return self._profile(cnorm(Z[..., 1:])) - Z[..., 0].real

    def gradient(self, Z, h=None):
        Z = np.asarray(Z, complex)
        rest = Z[..., 1:]
        r = cnorm(rest)
        rs = r / self.scale
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            dphi = np.where(rs > 0, self.alpha * np.power(np.where(rs > 0, rs, 1.0), -self.alpha - 1)
                            * flat_profile(rs, self.alpha), 0.0)
            dirn = np.where(r[..., None] > 0, rest / np.where(r > 0, r, 1.0)[..., None], 0.0)
        g = np.zeros(Z.shape, complex)
        g[..., 0] = -1.0
        g[..., 1:] = dphi[..., None] * dirn
        return g

    def distance(self, Z, t_max=None, grid=512, iters=50):
        # nearest complement point keeps Im z_1 and the direction of z'
        Z = np.asarray(Z, complex)
        x = Z[..., 0].real
        s = cnorm(Z[..., 1:])
        reach = np.maximum(x, 0.0)
        lo = np.maximum(s - reach, 0.0)
        hi = s + reach

        def h(r):
            return np.maximum(x - self._profile(r), 0.0) ** 2 + (s - r) ** 2

        ts = np.linspace(0.0, 1.0, grid)
        R = lo[..., None] + (hi - lo)[..., None] * ts
        H = np.maximum(x[..., None] - self._profile(R), 0.0) ** 2 + (s[..., None] - R) ** 2
        k = np.argmin(H, axis=-1)
        step = (hi - lo) / (grid - 1)
        r0 = np.take_along_axis(R, k[..., None], axis=-1)[..., 0]
        best = np.take_along_axis(H, k[..., None], axis=-1)[..., 0]
        _, hmin = golden_min(h, np.maximum(r0 - step, 0.0), r0 + step, iters=iters)
        d = np.sqrt(np.minimum(best, hmin))
        return np.where(x > self._profile(s), d, 0.0)

    def lipschitz(self):
        """Lipschitz constant of ``value``: ``sqrt(1 + max phi'^2)`` in closed form."""
        k = (self.alpha + 1.0) / self.alpha
        slope = self.alpha * k ** k * np.exp(-k)
        return float(np.sqrt(1.0 + slope ** 2))

    def ray_exit(self, Z, U, t_max):
        Z, U = np.broadcast_arrays(np.asarray(Z, complex), np.asarray(U, complex))
        shape = Z.shape[:-1]
        n = Z.shape[-1]
        Z, U = Z.reshape(-1, n), U.reshape(-1, n)
        nu = cnorm(U)
        U = U / nu[:, None]
        # along the ray only these real scalars matter
        x, ux = Z[:, 0].real, U[:, 0].real
        r2 = np.sum(np.abs(Z[:, 1:]) ** 2, axis=-1)
        b = np.real(hdot(Z[:, 1:], U[:, 1:]))
        c = np.sum(np.abs(U[:, 1:]) ** 2, axis=-1)

        def fun(i, t):
            rho = np.sqrt(np.maximum(r2[i] + t * (2 * b[i] + t * c[i]), 0.0))
            return self._profile(rho) - x[i] - t * ux[i]

        f0 = self._profile(np.sqrt(r2)) - x
        t = lipschitz_root(fun, f0, np.broadcast_to(t_max * nu, nu.shape), self.lipschitz())
        return (t / nu).reshape(shape)

    def line_gap(self, Z, V, t_max, coarse=False):
        Z, V = np.broadcast_arrays(np.asarray(Z, complex), _unit(V))
        v1 = np.abs(V[..., 0])
        vr = cnorm(V[..., 1:])
        x = Z[..., 0].real
        generic = np.zeros(v1.shape)
        mixed = (vr >= 1e-14) & (v1 >= 1e-14)
        if mixed.any():
            generic[mixed] = super().line_gap(Z[mixed], V[mixed], t_max, coarse=coarse)
        # exact forms when the line moves only z_1 or only z'
        with np.errstate(divide="ignore", invalid="ignore"):
            g_half = (x - self._profile(cnorm(Z[..., 1:]))) / v1
            xs = np.clip(x / self.scale, 1e-300, 1 - 1e-16)
            rho = self.scale * flat_profile_inverse(xs, self.alpha)
            rho = np.where(x >= self.scale, np.inf, rho)
            g_disk = _disk_gap_in_line(Z[..., 1:], V[..., 1:], rho)
        out = np.where(vr < 1e-14, g_half, np.where(v1 < 1e-14, g_disk, generic))
        return np.maximum(out, 0.0)

    def scaled(self, s):
        return ExpFlatConstraint(self.alpha, self.scale * s)

    def to_dict(self):
        return {"type": self.type, "alpha": self.alpha, "scale": self.scale}


def _disk_gap_in_line(w, u, rho):
    """Gap of ``{zeta : |w + zeta u| < rho}`` seen from ``zeta = 0``."""
    a = np.sum(np.abs(u) ** 2, axis=-1)
    b = hdot(w, u)
    rad2 = (rho ** 2 - np.sum(np.abs(w) ** 2, axis=-1) + np.abs(b) ** 2 / a) / a
    return np.sqrt(np.maximum(rad2, 0.0)) - np.abs(b) / a


class FunctionConstraint(Constraint):
    """User supplied ``value`` (and optionally gradient); never serialised."""

    type = "function"

    def __init__(self, value, gradient=None, convex=True):
        self._value = value
        self._gradient = gradient
        self.convex = convex

    def value(self, Z):
        return np.asarray(self._value(np.asarray(Z, complex)), float)

    def gradient(self, Z, h=1e-7):
        if self._gradient is None:
            return super().gradient(Z, h)
        return np.asarray(self._gradient(np.asarray(Z, complex)), complex)

    def scaled(self, s):
        f, g = self._value, self._gradient
        return FunctionConstraint(lambda Z: f(Z / s),
                                  None if g is None else (lambda Z: g(Z / s) / s),
                                  convex=self.convex)


def constraint_from_dict(d, path="constraint"):
    if not isinstance(d, dict) or "type" not in d:
        raise ParseError([(path, "expected an object with a 'type' field")])
    kind = d["type"]
    fields = {"ellipsoid": {"type", "center", "semiaxes"},
              "cylinder": {"type", "index", "center", "radius"},
              "halfspace": {"type", "normal", "offset"},
              "exp-flat": {"type", "alpha", "scale"}}
    if kind not in fields:
        raise ParseError([(path + ".type", f"unknown constraint type {kind!r}")])
    extra = set(d) - fields[kind]
    if extra:
        raise ParseError([(f"{path}.{k}", "unknown field") for k in sorted(extra)])
    try:
        if kind == "ellipsoid":
            return EllipsoidConstraint(from_real(d["center"]), d["semiaxes"])
        if kind == "cylinder":
            c = d["center"]
            return CylinderConstraint(d["index"], complex(c[0], c[1]), d["radius"])
        if kind == "halfspace":
            return HalfspaceConstraint(from_real(d["normal"]), d["offset"])
        return ExpFlatConstraint(d["alpha"], d.get("scale", 1.0))
    except KeyError as exc:
        raise ParseError([(f"{path}.{exc.args[0]}", "missing field")]) from None
    except (TypeError, ValueError) as exc:
        raise ParseError([(path, str(exc))]) from None
