"""Bounded model domains in C^n and their boundary gaps.

A :class:`DomainSpec` is an intersection of :mod:`kobalab.constraints`
together with trusted convexity flags.  The boundary gaps

* ``boundary_distance(domain, z)``, the Euclidean distance to the boundary,
* ``directional_boundary_distance(domain, z, v)``, the same distance measured
  inside the complex line ``z + C v``,

are the minima of the per-constraint gaps.  Built-in constraints answer in
closed form; ``method="raycast"`` forces the generic ray-casting path, which
is what user constraints always use.

Examples
--------
>>> import numpy as np
>>> from kobalab.domains import unit_ball, boundary_distance
>>> float(boundary_distance(unit_ball(), np.array([0.5, 0.0])))
0.5
"""
import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import constraints as C
from .constraints import cnorm, from_real, to_real
from .errors import EmptyIntersection, NotInterior, ParseError

KINDS = ("unit-ball", "ellipsoid", "bidisc", "exp-model", "convex-intersection")


@dataclass(frozen=True)
class Window:
    """Localization window ``U``: an open ball or an axis-aligned box.

    ``half_widths`` (box only) holds one half-width per real coordinate, in
    the interleaved ``(Re z_1, Im z_1, ...)`` order.
    """

    center: np.ndarray
    radius: float = 0.0
    shape: str = "ball"
    half_widths: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, complex))
        if self.shape == "ball":
            if not self.radius > 0:
                raise ValueError("window radius must be positive")
        elif self.shape == "box":
            hw = tuple(float(h) for h in self.half_widths)
            if len(hw) != 2 * self.center.size or min(hw) <= 0:
                raise ValueError("box needs 2n positive half-widths")
            object.__setattr__(self, "half_widths", hw)
        else:
            raise ValueError(f"unknown window shape {self.shape!r}")

    @property
    def n(self):
        return self.center.size

    @property
    def extent(self):
        """Radius of the smallest centered ball containing the window."""
        if self.shape == "ball":
            return self.radius
        return float(np.linalg.norm(self.half_widths))

    def constraints(self):
        if self.shape == "ball":
            return [C.EllipsoidConstraint(self.center, np.full(self.n, self.radius))]
        out = []
        c = to_real(self.center)
        for k, h in enumerate(self.half_widths):
            e = np.zeros(2 * self.n)
            e[k] = 1.0
            out.append(C.HalfspaceConstraint(from_real(e), c[k] + h))
            out.append(C.HalfspaceConstraint(from_real(-e), -(c[k] - h)))
        return out

    def contains(self, Z):
        return np.max([c.value(Z) for c in self.constraints()], axis=0) < 0

    def boundary_gap(self, Z):
        """Euclidean distance from ``Z`` to the window boundary ``dist(z, dU)``."""
        return np.min([c.distance(Z) for c in self.constraints()], axis=0)

    def to_dict(self):
        d = {"center": to_real(self.center).tolist(), "shape": self.shape}
        if self.shape == "ball":
            d["radius"] = float(self.radius)
        else:
            d["half_widths"] = list(self.half_widths)
        return d

    @classmethod
    def from_dict(cls, d, path="window"):
        _check_fields(d, {"center", "shape", "radius", "half_widths"}, path, required={"center"})
        try:
            return cls(from_real(d["center"]), float(d.get("radius", 0.0)),
                       d.get("shape", "ball"), tuple(d.get("half_widths", ())))
        except (TypeError, ValueError) as exc:
            raise ParseError([(path, str(exc))]) from None


def ball_window(center, radius):
    return Window(np.asarray(center, complex), float(radius))


@dataclass(frozen=True)
class Flags:
    """Trusted geometric flags; nothing here is verified."""

    is_convex: bool = True
    is_c_convex: bool = True
    dini_window: Window = None

    def to_dict(self):
        return {"is_convex": self.is_convex, "is_c_convex": self.is_c_convex,
                "dini_window": None if self.dini_window is None else self.dini_window.to_dict()}


@dataclass(frozen=True, eq=False)
class DomainSpec:
    """Bounded domain ``{z : c(z) < 0 for every constraint c}``.

    Use the builders (:func:`unit_ball`, :func:`ellipsoid`, :func:`bidisc`,
    :func:`exp_model`, :func:`convex_intersection`) rather than the
    constructor.
    """

    kind: str
    params: dict
    constraints: tuple
    bounding_radius: float
    flags: Flags
    basepoint: np.ndarray
    #: the domain a windowed domain was cut from (not serialised)
    parent: object = field(default=None, repr=False)
    window: Window = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "basepoint", np.asarray(self.basepoint, complex))
        if not self.bounding_radius > 0:
            raise ValueError("bounding_radius must be positive")
        if not np.all(np.isfinite(to_real(self.basepoint))):
            raise ValueError("basepoint must be finite")
        if not contains(self, self.basepoint):
            raise NotInterior("basepoint must satisfy every constraint strictly")

    @property
    def n(self):
        return self.basepoint.size

    def value(self, Z):
        """Max of the constraint values; negative exactly on the domain."""
        return np.max([c.value(Z) for c in self.constraints], axis=0)

    def scaled(self, s):
        """Image of the domain under ``z -> s z`` (flags are kept)."""
        fl = self.flags
        if fl.dini_window is not None:
            w = fl.dini_window
            fl = replace(fl, dini_window=Window(w.center * s, w.radius * s, w.shape,
                                                tuple(h * s for h in w.half_widths)))
        return DomainSpec("convex-intersection", {}, tuple(c.scaled(s) for c in self.constraints),
                          self.bounding_radius * s, fl, self.basepoint * s)

    def to_dict(self):
        params = dict(self.params)
        if self.kind == "convex-intersection":
            params["constraints"] = [c.to_dict() for c in self.constraints]
        return {"kind": self.kind, "params": params,
                "bounding_radius": float(self.bounding_radius),
                "flags": self.flags.to_dict(), "basepoint": to_real(self.basepoint).tolist()}

    def digest(self):
        """Stable hash of the serialised domain, used as a cache key."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


# builders


def unit_ball(n=2, radius=1.0):
    """Ball ``|z| < radius``; Nikolov's estimate holds on all of it."""
    c = np.zeros(n, complex)
    win = Window(c, radius)
    return DomainSpec("unit-ball", {"n": n, "radius": float(radius)},
                      (C.EllipsoidConstraint(c, np.full(n, float(radius))),),
                      float(radius), Flags(True, True, win), c)


def ellipsoid(semiaxes=(2.0, 1.0)):
    """Complex ellipsoid ``sum |z_i|^2 / a_i^2 < 1``."""
    a = np.asarray(semiaxes, float)
    c = np.zeros(a.size, complex)
    return DomainSpec("ellipsoid", {"semiaxes": a.tolist()}, (C.EllipsoidConstraint(c, a),),
                      float(a.max()), Flags(True, True, None), c)


def bidisc(radii=(1.0, 1.0)):
    """Polydisc ``|z_i| < r_i``; convex but not strongly pseudoconvex."""
    r = np.asarray(radii, float)
    cons = tuple(C.CylinderConstraint(i, 0.0, ri) for i, ri in enumerate(r))
    return DomainSpec("bidisc", {"radii": r.tolist()}, cons, float(np.linalg.norm(r)),
                      Flags(True, True, None), np.zeros(r.size, complex))


def exp_model(alpha=2.0, cap_radius=1.0, n=2, is_convex=True):
    """``{Re z_1 > exp(-1/|z'|^alpha)}`` capped by the ball of radius ``cap_radius``.

    The flat set is convex only for ``|z'| <= (alpha/(alpha+1))^(1/alpha)``;
    the convexity flag is trusted as given.
    """
    cons = (C.ExpFlatConstraint(alpha), C.EllipsoidConstraint(np.zeros(n, complex), np.full(n, float(cap_radius))))
    base = np.zeros(n, complex)
    base[0] = 0.5 * cap_radius
    return DomainSpec("exp-model", {"alpha": float(alpha), "cap_radius": float(cap_radius), "n": n},
                      cons, float(cap_radius), Flags(is_convex, is_convex, None), base)


def convex_intersection(constraints, bounding_radius, basepoint, is_convex=True,
                        is_c_convex=None, dini_window=None):
    """Domain cut out by arbitrary constraints (flags trusted)."""
    if is_c_convex is None:
        is_c_convex = is_convex
    return DomainSpec("convex-intersection", {}, tuple(constraints), float(bounding_radius),
                      Flags(is_convex, is_c_convex, dini_window), np.asarray(basepoint, complex))


def intersect_window(domain, window, seed=0, budget=4096, dini_window=None):
    """The domain ``Omega ∩ U`` for a window ``U``.

    The basepoint is the deepest of ``budget`` seeded samples of the window
    that land inside; :class:`EmptyIntersection` if none does.
    """
    cons = tuple(domain.constraints) + tuple(window.constraints())
    rng = np.random.default_rng(seed)
    n = domain.n
    x = rng.normal(size=(budget, 2 * n))
    x *= (rng.uniform(size=(budget, 1)) ** (1 / (2 * n))) / np.linalg.norm(x, axis=1, keepdims=True)
    Z = window.center + window.extent * from_real(x)
    inside = np.max([c.value(Z) for c in cons], axis=0) < 0
    if not inside.any():
        raise EmptyIntersection("no interior sample of the window lies in the domain")
    Zin = Z[inside][:256]
    depth = np.min([c.distance(Zin, 2 * domain.bounding_radius) for c in cons], axis=0)
    base = Zin[int(np.argmax(depth))]
    radius = min(domain.bounding_radius, cnorm(window.center) + window.extent)
    convex = domain.flags.is_convex
    return DomainSpec("convex-intersection", {}, cons, float(radius),
                      Flags(convex, convex, dini_window), base, parent=domain, window=window)


def window_meets_boundary(domain, window, samples=2048, seed=0):
    """Sampling check that the window contains points inside and outside the domain."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(samples, 2 * domain.n))
    x *= (rng.uniform(size=(samples, 1)) ** (1 / (2 * domain.n))) / np.linalg.norm(x, axis=1, keepdims=True)
    Z = window.center + window.extent * from_real(x)
    Z = Z[window.contains(Z)]
    inside = contains(domain, Z)
    return bool(inside.any() and (~inside).any())


# gaps


def _as_points(domain, z):
    z = np.asarray(z)
    if not np.iscomplexobj(z) and z.shape[-1] == 2 * domain.n and z.shape[-1] != domain.n:
        z = from_real(z)
    z = np.asarray(z, complex)
    if z.shape[-1] != domain.n:
        raise ValueError(f"expected points of C^{domain.n}, got trailing size {z.shape[-1]}")
    return z


def contains(domain, z):
    """True where every defining constraint is strict."""
    z = _as_points(domain, z)
    return np.max([c.value(z) for c in domain.constraints], axis=0) < 0


def _require_interior(domain, z):
    inside = contains(domain, z)
    if not np.all(inside):
        raise NotInterior("point is not interior to the domain")


def ray_exit_time(domain, z, u, tol=1e-12, method="auto"):
    """Time ``t`` at which ``z + t u`` leaves the domain.

    ``u`` is a real direction of ``R^{2n}`` stored as a complex vector (it is
    normalised here).  ``method="raycast"`` brackets the exit on
    ``[0, 2 * bounding_radius]`` and bisects until the bracket is below
    ``tol``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    z = _as_points(domain, z)
    u = np.asarray(u, complex)
    u = u / cnorm(u)[..., None]
    _require_interior(domain, z)
    t_max = 2 * domain.bounding_radius
    if method == "auto":
        return np.min([c.ray_exit(z, u, t_max) for c in domain.constraints], axis=0)
    if method != "raycast":
        raise ValueError(f"unknown method {method!r}")
    bisect = max(1, int(np.ceil(np.log2(t_max / C.N_MARCH / tol))))
    return C.march_bisect_exit(domain.value, z, u, t_max, n_bisect=bisect)


def _raw_exit(domain):
    t_max = 2 * domain.bounding_radius
    return lambda Z, U: np.min([c.ray_exit(Z, U, t_max) for c in domain.constraints], axis=0)


def boundary_distance(domain, z, method="auto"):
    """Euclidean distance ``delta(z)`` from interior points to the boundary."""
    z = _as_points(domain, z)
    _require_interior(domain, z)
    if method == "auto":
        t_max = 2 * domain.bounding_radius
        return np.min([c.distance(z, t_max) for c in domain.constraints], axis=0)
    if method != "raycast":
        raise ValueError(f"unknown method {method!r}")
    t_max = 2 * domain.bounding_radius
    return C.raycast_distance(lambda Z, U: C.march_bisect_exit(domain.value, Z, U, t_max), z)


def directional_boundary_distance(domain, z, v, method="auto", phases=64):
    """Distance ``delta(z; v)`` from ``z`` to the boundary inside ``z + C v``."""
    z = _as_points(domain, z)
    v = np.asarray(v, complex)
    if np.any(cnorm(v) == 0):
        raise ValueError("direction must be non-zero")
    _require_interior(domain, z)
    t_max = 2 * domain.bounding_radius
    if method == "auto":
        return np.min([c.line_gap(z, v, t_max) for c in domain.constraints], axis=0)
    if method != "raycast":
        raise ValueError(f"unknown method {method!r}")
    return C.raycast_line_gap(lambda Z, U: C.march_bisect_exit(domain.value, Z, U, t_max), z, v,
                              phases=phases)


def line_gaps_unchecked(domain, z, v, coarse=False):
    """``delta(z; v)`` without interiority checks; 0 for points outside the domain.

    ``coarse`` trades accuracy (about 1e-4 relative) for speed on
    constraints without a closed form.
    """
    t_max = 2 * domain.bounding_radius
    return np.min([c.line_gap(z, v, t_max, coarse=coarse) for c in domain.constraints], axis=0)


def inward_normal(domain, z):
    """Inner unit normal of the constraint nearest to ``z``."""
    z = np.asarray(z, complex)
    t_max = 2 * domain.bounding_radius
    d = np.array([c.distance(z, t_max) for c in domain.constraints])
    k = np.argmin(d, axis=0)
    normals = np.array([c.normal(z) for c in domain.constraints])
    return -np.take_along_axis(normals, k[None, ..., None], axis=0)[0]


# serialisation


def _check_fields(d, allowed, path, required=()):
    if not isinstance(d, dict):
        raise ParseError([(path, "expected an object")])
    errs = [(f"{path}.{k}" if path else k, "unknown field") for k in sorted(set(d) - set(allowed))]
    errs += [(f"{path}.{k}" if path else k, "missing field") for k in sorted(set(required) - set(d))]
    if errs:
        raise ParseError(errs)


def domain_to_json(domain):
    return json.dumps(domain.to_dict(), sort_keys=True)


def domain_from_dict(d, path=""):
    """Build a domain from its JSON object; unknown fields are rejected."""
    _check_fields(d, {"kind", "params", "bounding_radius", "flags", "basepoint"}, path,
                  required={"kind"})
    p = (path + ".") if path else ""
    kind = d["kind"]
    params = d.get("params", {})
    if not isinstance(params, dict):
        raise ParseError([(p + "params", "expected an object")])
    try:
        if kind == "unit-ball":
            _check_fields(params, {"n", "radius"}, p + "params")
            dom = unit_ball(int(params.get("n", 2)), float(params.get("radius", 1.0)))
        elif kind == "ellipsoid":
            _check_fields(params, {"semiaxes"}, p + "params", required={"semiaxes"})
            dom = ellipsoid(params["semiaxes"])
        elif kind == "bidisc":
            _check_fields(params, {"radii"}, p + "params")
            dom = bidisc(params.get("radii", (1.0, 1.0)))
        elif kind == "exp-model":
            _check_fields(params, {"alpha", "cap_radius", "n"}, p + "params")
            dom = exp_model(float(params.get("alpha", 2.0)), float(params.get("cap_radius", 1.0)),
                            int(params.get("n", 2)))
        elif kind == "convex-intersection":
            _check_fields(params, {"constraints"}, p + "params", required={"constraints"})
            cons = [C.constraint_from_dict(c, f"{p}params.constraints[{i}]")
                    for i, c in enumerate(params["constraints"])]
            for key in ("bounding_radius", "basepoint"):
                if key not in d:
                    raise ParseError([(p + key, "required for convex-intersection")])
            dom = convex_intersection(cons, float(d["bounding_radius"]), from_real(d["basepoint"]))
        else:
            raise ParseError([(p + "kind", f"unknown kind {kind!r}; expected one of {', '.join(KINDS)}")])
    except ParseError:
        raise
    except (TypeError, ValueError) as exc:
        raise ParseError([(p + "params", str(exc))]) from None

    fl = dom.flags
    if "flags" in d:
        f = d["flags"]
        _check_fields(f, {"is_convex", "is_c_convex", "dini_window"}, p + "flags")
        win = fl.dini_window
        if "dini_window" in f:
            win = None if f["dini_window"] is None else Window.from_dict(f["dini_window"], p + "flags.dini_window")
        fl = Flags(bool(f.get("is_convex", fl.is_convex)), bool(f.get("is_c_convex", fl.is_c_convex)), win)
    try:
        base = from_real(d["basepoint"]) if "basepoint" in d else dom.basepoint
        radius = float(d.get("bounding_radius", dom.bounding_radius))
        return DomainSpec(dom.kind, dom.params, dom.constraints, radius, fl, base)
    except NotInterior:
        raise ParseError([(p + "basepoint", "basepoint is not interior")]) from None
    except (TypeError, ValueError) as exc:
        raise ParseError([(p + "basepoint", str(exc))]) from None


def domain_from_json(text):
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError([("", f"invalid JSON: {exc}")]) from None
    return domain_from_dict(d)
