"""Polylines and the upper length functional ``L(sigma) = int |sigma'| / delta(sigma; sigma')``.

Since the Kobayashi metric never exceeds ``|v| / delta(z; v)`` on any
domain, the functional of every interior path is an upper bound for the
distance between its endpoints.  :func:`distance_upper` minimises it over
polylines.  The optimiser works on a batch of endpoint pairs at once so
that sweeps over many pairs stay vectorised.
"""
from dataclasses import dataclass

import numpy as np

from .constraints import cnorm, from_real, to_real
from .domains import boundary_distance, contains, line_gaps_unchecked
from .errors import NotInterior, SegmentExitsDomain


@dataclass(frozen=True)
class PathPolyline:
    """Ordered vertices ``(m, n)`` of a polyline; consecutive vertices are distinct."""

    vertices: np.ndarray

    def __post_init__(self):
        V = np.atleast_2d(np.asarray(self.vertices, complex))
        if len(V) < 2:
            raise ValueError("a path needs at least two vertices")
        if np.any(cnorm(np.diff(V, axis=0)) == 0):
            raise ValueError("consecutive vertices must be distinct")
        if not np.all(np.isfinite(to_real(V))):
            raise ValueError("vertices must be finite")
        object.__setattr__(self, "vertices", V)

    @property
    def start(self):
        return self.vertices[0]

    @property
    def end(self):
        return self.vertices[-1]

    def euclidean_length(self):
        return float(cnorm(np.diff(self.vertices, axis=0)).sum())

    def reversed(self):
        return PathPolyline(self.vertices[::-1])

    def check_interior(self, domain, h=None):
        """Raise :class:`SegmentExitsDomain` unless samples at spacing ``h`` are interior."""
        V = self.vertices
        for a, b in zip(V[:-1], V[1:]):
            L = float(cnorm(b - a))
            k = max(16, int(np.ceil(L / h))) if h else 16
            s = np.linspace(0, 1, k + 1)
            if not np.all(contains(domain, a + s[:, None] * (b - a))):
                raise SegmentExitsDomain("segment leaves the domain")

    def to_rows(self):
        return [to_real(v).tolist() for v in self.vertices]

    @classmethod
    def straight(cls, p, q):
        return cls(np.array([p, q], complex))


def _gaps_on_segments(domain, A, B, s, coarse=False):
    """Directional gaps at ``A + s (B - A)`` in direction ``B - A``; shapes ``(..., len(s))``.

    Points outside the domain get gap 0.
    """
    D = B - A
    Z = A[..., None, :] + s[:, None] * D[..., None, :]
    Vd = np.broadcast_to(D[..., None, :], Z.shape)
    n = Z.shape[-1]
    g = line_gaps_unchecked(domain, Z.reshape(-1, n), Vd.reshape(-1, n), coarse=coarse)
    return g.reshape(Z.shape[:-1])


def _trapezoid_segment(domain, a, b, h, depth_max=20):
    """Adaptive composite trapezoid for one segment; returns ``(value, error estimate)``.

    Panels whose gap falls below ten panel widths are halved, level by
    level, up to ``depth_max`` times.
    """
    L = float(cnorm(b - a))
    n = max(2, int(np.ceil(L / h)))
    n += n % 2
    s = np.linspace(0.0, 1.0, n + 1)
    g = _gaps_on_segments(domain, a, b, s)
    if np.any(g <= 0):
        raise SegmentExitsDomain("segment leaves the domain")
    f = L / g
    fine = np.sum(0.5 * (f[:-1] + f[1:])) / n
    coarse = np.sum(f[:-2:2] + f[2::2]) / n
    err = abs(fine - coarse) / 3.0
    s0, s1, f0, f1, g0, g1 = s[:-1], s[1:], f[:-1], f[1:], g[:-1], g[1:]
    total = 0.0
    for _ in range(depth_max):
        need = np.minimum(g0, g1) < 10 * (s1 - s0) * L
        done = ~need
        total += np.sum(0.5 * (s1 - s0)[done] * (f0 + f1)[done])
        if not need.any():
            break
        s0, s1, f0, f1, g0, g1 = (x[need] for x in (s0, s1, f0, f1, g0, g1))
        sm = 0.5 * (s0 + s1)
        gm = _gaps_on_segments(domain, a, b, sm)
        if np.any(gm <= 0):
            raise SegmentExitsDomain("segment leaves the domain")
        fm = L / gm
        whole = 0.5 * (s1 - s0) * (f0 + f1)
        halves = 0.25 * (s1 - s0) * (f0 + 2 * fm + f1)
        err += np.sum(np.abs(whole - halves)) / 3.0
        s0, s1 = np.concatenate([s0, sm]), np.concatenate([sm, s1])
        f0, f1 = np.concatenate([f0, fm]), np.concatenate([fm, f1])
        g0, g1 = np.concatenate([g0, gm]), np.concatenate([gm, g1])
    else:
        # depth exhausted: plain trapezoid on what is left
        total += np.sum(0.5 * (s1 - s0) * (f0 + f1))
    return float(total), float(err)


def path_length_upper(domain, path, h=None, return_error=False):
    """Upper functional of a polyline by adaptive composite trapezoid.

    Parameters
    ----------
    h : float, optional
        Quadrature step.  Default is ``1e-3`` of each segment's length;
        panels where the gap drops below ``10 h`` are halved recursively.
    return_error : bool
        Also return a quadrature error estimate.

    Examples
    --------
    >>> import numpy as np
    >>> from kobalab.domains import unit_ball
    >>> round(path_length_upper(unit_ball(), PathPolyline.straight([0, 0], [0.5, 0])), 5)
    0.69315
    """
    if not isinstance(path, PathPolyline):
        path = PathPolyline(path)
    V = path.vertices
    if not np.all(contains(domain, V)):
        raise SegmentExitsDomain("path vertex outside the domain")
    total, err = 0.0, 0.0
    for a, b in zip(V[:-1], V[1:]):
        step = h if h else 1e-3 * float(cnorm(b - a))
        v, e = _trapezoid_segment(domain, a, b, step)
        total += v
        err += e
    return (total, err) if return_error else total


# batched optimiser

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def segment_costs(domain, A, B, nodes=None):
    """Gauss-Legendre estimate of the functional on segments ``A[i] -> B[i]``.

    Segments with a node outside the domain cost ``inf``.  This is a search
    proxy (coarse gaps); reported lengths come from :func:`path_length_upper`.
    """
    x, w = (_GL_X, _GL_W) if nodes is None else nodes
    L = cnorm(B - A)
    g = _gaps_on_segments(domain, A, B, x, coarse=True)
    with np.errstate(divide="ignore"):
        cost = L * np.sum(w / g, axis=-1)
    cost = np.where(np.all(g > 0, axis=-1), cost, np.inf)
    return np.where(L == 0, 0.0, cost)


def resample(vertices, m):
    """``m`` vertices equally spaced in Euclidean arclength along a polyline."""
    V = np.asarray(vertices, complex)
    seg = cnorm(np.diff(V, axis=0))
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    if cum[-1] == 0:
        return np.repeat(V[:1], m, axis=0)
    t = np.linspace(0, cum[-1], m)
    k = np.clip(np.searchsorted(cum, t, side="right") - 1, 0, len(seg) - 1)
    frac = np.where(seg[k] > 0, (t - cum[k]) / np.where(seg[k] > 0, seg[k], 1.0), 0.0)
    out = V[k] + frac[:, None] * (V[k + 1] - V[k])
    out[0], out[-1] = V[0], V[-1]
    return out


def _refine(V):
    """Insert the midpoint of every segment."""
    P, m, n = V.shape
    out = np.empty((P, 2 * m - 1, n), complex)
    out[:, ::2] = V
    out[:, 1::2] = 0.5 * (V[:, 1:] + V[:, :-1])
    return out


def optimise_paths(domain, V, rounds=60, seed=0, random_dirs=2, patience=5, rel_tol=1e-4,
                   step_scale=0.3):
    """Red-black coordinate search on interior vertices of a batch of polylines.

    ``V`` has shape ``(P, m, n)``; endpoints stay fixed.  Each interior
    vertex tries ``+-step`` along the real coordinate axes and a few seeded
    random directions; even and odd vertices alternate so that the moves
    accepted in one colour never share a segment.  A vertex's step grows
    after a success and halves after a full miss.  A pair stops once its
    relative improvement stayed below ``rel_tol`` for ``patience`` rounds.
    Returns ``(V, per-pair cost history)``; costs never increase.
    """
    rng = np.random.default_rng(seed)
    V = np.array(V, complex)
    P, m, n = V.shape
    if m < 3:
        S = segment_costs(domain, V[:, :-1], V[:, 1:])
        return V, [S.sum(axis=1)]
    S = segment_costs(domain, V[:, :-1], V[:, 1:])
    inner = V[:, 1:-1].reshape(-1, n)
    step = step_scale * boundary_distance(domain, inner).reshape(P, m - 2)
    floor = 1e-7 * step
    axes = np.vstack([np.eye(2 * n), -np.eye(2 * n)])
    active = np.ones(P, bool)
    stall = np.zeros(P, int)
    history = [S.sum(axis=1)]
    for _ in range(rounds):
        if not active.any():
            break
        dirs = axes
        if random_dirs:
            R = rng.normal(size=(random_dirs, 2 * n))
            R /= np.linalg.norm(R, axis=1, keepdims=True)
            dirs = np.vstack([axes, R, -R])
        moved = np.zeros((P, m - 2), bool)
        ap = np.flatnonzero(active)
        for colour in (1, 2):
            idx = np.arange(colour, m - 1, 2)
            if len(idx) == 0:
                continue
            for d in from_real(dirs):
                cur = V[np.ix_(ap, idx)]
                st = step[np.ix_(ap, idx - 1)]
                cand = cur + st[..., None] * d
                left = V[np.ix_(ap, idx - 1)]
                right = V[np.ix_(ap, idx + 1)]
                old = S[np.ix_(ap, idx - 1)] + S[np.ix_(ap, idx)]
                both = segment_costs(domain, np.concatenate([left, cand]), np.concatenate([cand, right]))
                cl, cr = both[: len(left)], both[len(left):]
                better = cl + cr < old
                if not better.any():
                    continue
                ii, jj = np.nonzero(better)
                pa, vi = ap[ii], idx[jj]
                V[pa, vi] = cand[ii, jj]
                S[pa, vi - 1] = cl[ii, jj]
                S[pa, vi] = cr[ii, jj]
                moved[pa, vi - 1] = True
        step = np.where(moved, 1.5 * step, 0.5 * step)
        # keep steps inside the local boundary scale
        step = np.maximum(step, floor)
        total = S.sum(axis=1)
        prev = history[-1]
        gain = (prev - total) / np.maximum(prev, 1e-300)
        stall = np.where(gain < rel_tol, stall + 1, 0)
        active &= stall < patience
        history.append(total)
    return V, history


def distance_upper_batch(domain, P, Q, vertex_budget=17, rounds=40, seed=0, init=None, h=None,
                         return_paths=False):
    """Optimised upper bounds for many pairs at once.

    Parameters
    ----------
    P, Q : arrays ``(k, n)``
    vertex_budget : int
        Largest vertex count; stages use 3, 5, 9, 17, ... vertices (each
        stage inserts a midpoint into every segment).
    init : list of vertex arrays, optional
        Warm-start polylines (for instance graph shortest paths); they are
        resampled to the first stage size that is at least their length.
    h : float, optional
        Quadrature step of the final evaluation (see :func:`path_length_upper`).

    Returns
    -------
    values : ndarray
        Trapezoid value of the best path found for each pair; ``0`` for equal endpoints.
    """
    P = np.atleast_2d(np.asarray(P, complex))
    Q = np.atleast_2d(np.asarray(Q, complex))
    if not (np.all(contains(domain, P)) and np.all(contains(domain, Q))):
        raise NotInterior("endpoints must be interior")
    k, n = P.shape
    stages = [3]
    while 2 * stages[-1] - 1 <= vertex_budget:
        stages.append(2 * stages[-1] - 1)
    m0 = stages[0]
    if init is not None:
        need = max(len(v) for v in init)
        m0 = next((s for s in stages if s >= min(need, stages[-1])), stages[-1])
        V = np.stack([resample(v, m0) for v in init])
        V[:, 0], V[:, -1] = P, Q
    else:
        s = np.linspace(0, 1, m0)
        V = P[:, None] + s[None, :, None] * (Q - P)[:, None]
    same = cnorm(P - Q) == 0
    best = V.copy()
    for i, m in enumerate(s for s in stages if s >= m0):
        if i > 0:
            V = _refine(V)
        work = ~same
        if work.any():
            V[work], _ = optimise_paths(domain, V[work], rounds=rounds, seed=seed + i)
        best = V
    values = np.zeros(k)
    paths = [None] * k
    for j in range(k):
        if same[j]:
            continue
        verts = _dedupe(best[j])
        try:
            values[j] = path_length_upper(domain, PathPolyline(verts), h=h)
        except SegmentExitsDomain:
            # fall back to the segment, which is interior for convex domains
            verts = np.array([P[j], Q[j]])
            values[j] = path_length_upper(domain, PathPolyline(verts), h=h)
        paths[j] = PathPolyline(verts)
    return (values, paths) if return_paths else values


def _dedupe(V):
    keep = np.concatenate([[True], cnorm(np.diff(V, axis=0)) > 0])
    return V[keep]


def distance_upper(domain, p, q, vertex_budget=17, rounds=40, seed=0, graph=None, h=None,
                   return_path=False):
    """Upper bound on ``K(p, q)`` from an optimised polyline.

    Starts from the straight segment, or from the shortest path in
    ``graph`` when given, and runs :func:`optimise_paths`.  The result is
    symmetric in ``(p, q)``: endpoints are put in a canonical order first.
    """
    from .metric import _canonical

    p = np.asarray(p, complex)
    q = np.asarray(q, complex)
    if not (contains(domain, p) and contains(domain, q)):
        raise NotInterior("endpoints must be interior")
    a, b = _canonical(p, q)
    if cnorm(a - b) == 0:
        return (0.0, None) if return_path else 0.0
    init = None
    if graph is not None:
        from .geodesics import shortest_path
        init = [shortest_path(graph, a, b, smooth=False).vertices]
    vals, paths = distance_upper_batch(domain, a[None], b[None], vertex_budget, rounds, seed,
                                       init, h, return_paths=True)
    path = paths[0]
    if return_path:
        if path is not None and cnorm(path.start - p) > 0:
            path = path.reversed()
        return float(vals[0]), path
    return float(vals[0])
