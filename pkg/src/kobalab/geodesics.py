"""Near-geodesics from geometric graphs, (lambda, kappa) certificates and splicing.

A :class:`GeometricGraph` fills the domain with scrambled Sobol points
(three times denser in the layer ``delta < 0.1``), joins points closer
than a connection radius whose segment stays inside, and weighs edges by
the upper length functional.  Shortest paths on it warm-start the polyline
optimiser of :mod:`kobalab.paths`.
"""
import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .constraints import cnorm, from_real, to_real
from .domains import boundary_distance, contains, line_gaps_unchecked
from .errors import Disconnected, NotInterior, SegmentExitsDomain, SpliceSegmentExits
from .paths import (PathPolyline, _dedupe, _gaps_on_segments, distance_upper_batch,
                    path_length_upper, segment_costs)

LAYER = 0.1
EDGE_SAMPLES = 16
MAX_DEGREE = 16


@dataclass
class GeometricGraph:
    """Interior nodes, interior edges and their upper-functional weights."""

    nodes: np.ndarray
    edges: np.ndarray
    weights: np.ndarray
    radius: float
    seed: int
    domain_digest: str = ""
    domain: object = field(default=None, repr=False)
    _tree: object = field(default=None, repr=False)
    _csr: object = field(default=None, repr=False)

    @property
    def tree(self):
        if self._tree is None:
            self._tree = cKDTree(to_real(self.nodes))
        return self._tree

    @property
    def csr(self):
        if self._csr is None:
            N = len(self.nodes)
            i, j = self.edges.T
            self._csr = sparse.csr_matrix((np.concatenate([self.weights, self.weights]),
                                           (np.concatenate([i, j]), np.concatenate([j, i]))), shape=(N, N))
        return self._csr

    def components(self):
        return csgraph.connected_components(self.csr, directed=False)[1]

    def to_dict(self):
        return {"domain": self.domain_digest, "seed": self.seed, "radius": self.radius,
                "nodes": to_real(self.nodes).tolist(), "edges": self.edges.tolist(),
                "weights": self.weights.tolist()}

    @classmethod
    def from_dict(cls, d, domain=None):
        return cls(from_real(np.asarray(d["nodes"], float)), np.asarray(d["edges"], int).reshape(-1, 2),
                   np.asarray(d["weights"], float), float(d["radius"]), int(d["seed"]), d["domain"], domain)


def _sample_nodes(domain, budget, seed):
    n = domain.n
    R = domain.bounding_radius
    sob = qmc.Sobol(d=2 * n, scramble=True, seed=seed)
    thin = np.random.default_rng(seed + 1)
    out = []
    count = 0
    while count < budget:
        X = (2 * sob.random(1024) - 1) * R
        Z = from_real(X)
        Z = Z[contains(domain, Z)]
        if len(Z) == 0:
            continue
        d = boundary_distance(domain, Z)
        # thinning away from the layer leaves it three times denser
        keep = (d < LAYER) | (thin.uniform(size=len(Z)) < 1.0 / 3.0)
        Z = Z[keep]
        out.append(Z)
        count += len(Z)
        if sob.num_generated > 2 ** 24:
            break
    Z = np.concatenate(out)[:budget]
    return Z


def _segments_interior(domain, A, B, k=EDGE_SAMPLES):
    s = (np.arange(k) + 0.5) / k
    pts = A[:, None, :] + s[None, :, None] * (B - A)[:, None, :]
    return contains(domain, pts.reshape(-1, A.shape[-1])).reshape(len(A), k).all(axis=1)


def build_graph(domain, node_budget=2000, radius_rule=2.0, seed=0, max_degree=MAX_DEGREE):
    """Deterministic geometric graph for ``(domain, node_budget, radius_rule, seed)``.

    The connection radius is ``radius_rule * R * node_budget^(-1/(2n))``
    with ``R`` the bounding radius; each node is joined to at most
    ``max_degree`` nearest nodes within it (edges are symmetrised).  Edges
    are kept when ``EDGE_SAMPLES`` points along them are interior; weights
    are the upper functional by 8-point Gauss-Legendre.
    """
    if node_budget < 100:
        raise ValueError("node_budget must be at least 100")
    Z = _sample_nodes(domain, node_budget, seed)
    # the basepoint is always a node
    Z = np.vstack([domain.basepoint[None], Z])[:max(node_budget, 100)]
    n = domain.n
    r = radius_rule * domain.bounding_radius * node_budget ** (-1.0 / (2 * n))
    tree = cKDTree(to_real(Z))
    dist, nb = tree.query(to_real(Z), k=min(max_degree + 1, len(Z)), distance_upper_bound=r)
    i = np.repeat(np.arange(len(Z)), nb.shape[1])
    j = nb.reshape(-1)
    ok = np.isfinite(dist.reshape(-1)) & (i != j)
    E = np.unique(np.sort(np.column_stack([i[ok], j[ok]]), axis=1), axis=0)
    if len(E):
        ok = _segments_interior(domain, Z[E[:, 0]], Z[E[:, 1]])
        E = E[ok]
    w = segment_costs(domain, Z[E[:, 0]], Z[E[:, 1]]) if len(E) else np.zeros(0)
    good = np.isfinite(w) & (w > 0)
    g = GeometricGraph(Z, E[good], w[good], float(r), int(seed), domain.digest(), domain)
    g._tree = tree
    return g


def cached_graph(domain, node_budget=2000, radius_rule=2.0, seed=0, cache_dir=None):
    """:func:`build_graph` with a JSON cache keyed by ``(domain digest, budget, seed)``."""
    if cache_dir is None:
        return build_graph(domain, node_budget, radius_rule, seed)
    key = f"graph_{domain.digest()}_{node_budget}_{radius_rule:g}_{seed}.json"
    path = os.path.join(cache_dir, key)
    if os.path.exists(path):
        with open(path) as fh:
            return GeometricGraph.from_dict(json.load(fh), domain)
    g = build_graph(domain, node_budget, radius_rule, seed)
    os.makedirs(cache_dir, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(g.to_dict(), fh)
    return g


def _attach(domain, graph, z, k=24):
    """Edges from a query point to nearby nodes with an interior segment."""
    dist, idx = graph.tree.query(to_real(z), k=min(k, len(graph.nodes)),
                                 distance_upper_bound=2 * graph.radius)
    # a coincident node would give a zero weight, which the sparse graph drops anyway
    idx = idx[np.isfinite(dist) & (dist > 0)]
    if len(idx) == 0:
        return idx, np.zeros(0)
    A = np.repeat(z[None], len(idx), axis=0)
    B = graph.nodes[idx]
    ok = _segments_interior(domain, A, B)
    idx, B = idx[ok], B[ok]
    if len(idx) == 0:
        return idx, np.zeros(0)
    w = segment_costs(domain, A[: len(idx)], B)
    fin = np.isfinite(w) & (w > 0)
    return idx[fin], w[fin]


def shortest_paths(domain, graph, P, Q, smooth=True):
    """Graph shortest paths for many pairs (one Dijkstra per distinct source).

    Query points are attached to up to 24 nearby nodes; a pair whose points
    are in different components raises :class:`Disconnected`.
    """
    P = np.atleast_2d(np.asarray(P, complex))
    Q = np.atleast_2d(np.asarray(Q, complex))
    if not (np.all(contains(domain, P)) and np.all(contains(domain, Q))):
        raise NotInterior("endpoints must be interior")
    N = len(graph.nodes)
    k = len(P)
    rows, cols, vals = [], [], []
    for j, z in enumerate(np.vstack([P, Q])):
        idx, w = _attach(domain, graph, z)
        rows.append(np.full(len(idx), N + j))
        cols.append(idx)
        vals.append(w)
    rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    i0, j0 = graph.edges.T
    M = sparse.csr_matrix((np.concatenate([graph.weights, graph.weights, vals, vals]),
                           (np.concatenate([i0, j0, rows, cols]), np.concatenate([j0, i0, cols, rows]))),
                          shape=(N + 2 * k, N + 2 * k))
    dist, pred = csgraph.dijkstra(M, directed=False, indices=N + np.arange(k), return_predecessors=True)
    out = []
    for j in range(k):
        if cnorm(P[j] - Q[j]) == 0:
            out.append(None)
            continue
        target = N + k + j
        if not np.isfinite(dist[j, target]):
            raise Disconnected("query points are not connected in the graph")
        chain = [target]
        while chain[-1] != N + j:
            chain.append(pred[j, chain[-1]])
        chain = chain[::-1]
        allpts = np.vstack([graph.nodes, P, Q])
        path = PathPolyline(_dedupe(allpts[chain]))
        if smooth:
            path = shortcut_smooth(domain, path)
        out.append(path)
    return out


def shortest_path(graph, p, q, domain=None, smooth=True):
    """Graph shortest path between two interior points (see :func:`shortest_paths`)."""
    if domain is None:
        domain = graph.domain
    return shortest_paths(domain, graph, np.asarray(p, complex)[None], np.asarray(q, complex)[None], smooth)[0]


def shortcut_smooth(domain, path, max_passes=3):
    """Replace runs of vertices by a chord when the chord is interior and cheaper.

    From each kept vertex the farthest later vertex whose chord beats the
    chain between them is joined directly; all candidate chords of a vertex
    are costed in one vectorised call.
    """
    V = np.asarray(path.vertices)
    for _ in range(max_passes):
        if len(V) <= 2:
            break
        chain = np.concatenate([[0.0], np.cumsum(segment_costs(domain, V[:-1], V[1:]))])
        keep = [0]
        i = 0
        while i < len(V) - 1:
            js = np.arange(i + 2, len(V))
            nxt = i + 1
            if len(js):
                A = np.repeat(V[i][None], len(js), axis=0)
                ok = _segments_interior(domain, A, V[js])
                c = np.full(len(js), np.inf)
                if ok.any():
                    c[ok] = segment_costs(domain, A[ok], V[js][ok])
                better = np.flatnonzero(c < chain[js] - chain[i])
                if len(better):
                    nxt = int(js[better[-1]])
            keep.append(nxt)
            i = nxt
        if len(keep) == len(V):
            break
        V = V[keep]
    return PathPolyline(V)


# parametrisation and certificates


@dataclass
class ArcLengthCurve:
    """Polyline reparametrised by the upper functional: ``sigma(t)``, ``0 <= t <= length``."""

    domain: object
    path: PathPolyline
    knots: np.ndarray
    points: np.ndarray

    @property
    def length(self):
        return float(self.knots[-1])

    def __call__(self, t):
        t = np.clip(np.asarray(t, float), 0.0, self.length)
        k = np.clip(np.searchsorted(self.knots, t, side="right") - 1, 0, len(self.knots) - 2)
        w = (t - self.knots[k]) / (self.knots[k + 1] - self.knots[k])
        return self.points[k] + w[..., None] * (self.points[k + 1] - self.points[k])

    def speeds(self, per_piece=3):
        """Upper-metric speed ``|sigma'| / delta(sigma; sigma')`` sampled inside every piece."""
        u = (np.arange(per_piece) + 0.5) / per_piece
        A, B = self.points[:-1], self.points[1:]
        dv = (B - A) / np.diff(self.knots)[:, None]
        Z = A[:, None] + u[None, :, None] * (B - A)[:, None]
        dvs = np.broadcast_to(dv[:, None], Z.shape)
        n = Z.shape[-1]
        g = line_gaps_unchecked(self.domain, Z.reshape(-1, n), dvs.reshape(-1, n))
        return cnorm(dvs.reshape(-1, n)) / g


def parametrize_by_arclength(domain, path, tol=1e-3):
    """Reparametrise so that the upper-metric speed is ``1 +- tol``.

    Segments are cut into affine pieces across which ``log delta(sigma;
    sigma')`` moves by at most ``tol / 2``; the parameter advances by each
    piece's functional value, so the parameter interval is
    ``[0, path_length_upper]`` up to quadrature error.
    """
    if not isinstance(path, PathPolyline):
        path = PathPolyline(path)
    V = path.vertices
    pts, knots = [V[0]], [0.0]
    grid = np.linspace(0, 1, 257)
    for a, b in zip(V[:-1], V[1:]):
        g = _gaps_on_segments(domain, a, b, grid)
        if np.any(g <= 0):
            raise SegmentExitsDomain("segment leaves the domain")
        counts = np.maximum(1, np.ceil(np.abs(np.diff(np.log(g))) / (tol / 2))).astype(int)
        cuts = np.concatenate([np.linspace(grid[i], grid[i + 1], c + 1)[:-1]
                               for i, c in enumerate(counts)] + [[1.0]])
        A = a + cuts[:-1, None] * (b - a)
        B = a + cuts[1:, None] * (b - a)
        w = segment_costs(domain, A, B)
        knots.extend(knots[-1] + np.cumsum(w))
        pts.extend(B)
    return ArcLengthCurve(domain, path, np.asarray(knots), np.asarray(pts))


@dataclass
class AlmostGeodesicCert:
    """Measured ``(lambda, kappa)`` quality of a parametrised path.

    ``kappa_hat`` is the least ``kappa`` such that on every sampled pair
    ``(s, t)`` both ``|t-s|/lambda - kappa <= K_upper`` and
    ``K_lower <= lambda |t-s| + kappa`` hold, where ``K_lower``/``K_upper``
    bracket ``K(sigma(s), sigma(t))``.  ``speed_excess`` is the largest
    upper-metric speed found, which should be 1.
    """

    lambda_hat: float
    kappa_hat: float
    pairs: int
    speed_excess: float
    length: float
    records: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return {"lambda_hat": self.lambda_hat, "kappa_hat": self.kappa_hat, "pairs": self.pairs,
                "speed_excess": self.speed_excess, "length": self.length}


def certify(domain, curve, pairs=50, lam=2.0, seed=0, projection=False):
    """Certificate of a parametrised curve from distance brackets on sampled pairs.

    The upper bracket of ``K(sigma(s), sigma(t))`` is the functional of the
    sub-path (``|t - s|`` by construction) improved by Nikolov's estimate in
    a declared Dini window; the lower bracket is the best rigorous lower bound.
    """
    from .metric import lower_bounds, nikolov_upper

    rng = np.random.default_rng(seed)
    T = curve.length
    st = np.sort(rng.uniform(0, T, size=(pairs, 2)), axis=1)
    kappa = 0.0
    recs = []
    win = domain.flags.dini_window
    for s, t in st:
        x, y = curve(s), curve(t)
        dt = t - s
        if cnorm(x - y) == 0:
            lo = up = 0.0
        else:
            lows = lower_bounds(domain, x, y, projection=projection)
            lo = max(lows.values()) if lows else 0.0
            up = dt
            if win is not None and win.contains(x) and win.contains(y):
                up = min(up, nikolov_upper(domain, x, y))
        k = max(dt / lam - up, lo - lam * dt, 0.0)
        kappa = max(kappa, k)
        recs.append({"s": float(s), "t": float(t), "lower": float(lo), "upper": float(up)})
    speeds = curve.speeds()
    return AlmostGeodesicCert(float(lam), float(kappa), int(pairs), float(speeds.max()), T, recs)


def almost_geodesics(domain, P, Q, graph=None, node_budget=2000, seed=0, pairs=50, optimise=True,
                     vertex_budget=17, rounds=40, h=None):
    """Batched :func:`almost_geodesic` for pairs ``P[i] -> Q[i]``.

    All pairs share one graph and one Dijkstra sweep, and the optimiser
    runs on the whole batch.  Returns ``(paths, certificates, lengths)``
    where ``lengths`` are :func:`~kobalab.paths.path_length_upper` values.
    With ``pairs=0`` no certificate is computed and ``certificates`` holds
    ``None``.
    """
    P = np.atleast_2d(np.asarray(P, complex))
    Q = np.atleast_2d(np.asarray(Q, complex))
    if np.any(cnorm(P - Q) == 0):
        raise ValueError("endpoints must differ")
    if graph is None:
        graph = build_graph(domain, node_budget, seed=seed)
    paths = shortest_paths(domain, graph, P, Q)
    lengths = [None] * len(paths)
    if optimise:
        vals, opt = distance_upper_batch(domain, P, Q, vertex_budget, rounds, seed,
                                         [p.vertices for p in paths], h=h, return_paths=True)
        # keep the optimised path unless the search proxy prefers the graph path
        for j, cand in enumerate(opt):
            V0, V1 = paths[j].vertices, cand.vertices
            c0 = segment_costs(domain, V0[:-1], V0[1:]).sum()
            c1 = segment_costs(domain, V1[:-1], V1[1:]).sum()
            if c1 <= c0:
                paths[j], lengths[j] = cand, float(vals[j])
    lengths = [float(path_length_upper(domain, p, h=h)) if L is None else L
               for p, L in zip(paths, lengths)]
    certs = [None] * len(paths)
    if pairs:
        certs = [certify(domain, parametrize_by_arclength(domain, p), pairs, seed=seed) for p in paths]
    return paths, certs, lengths


def almost_geodesic(domain, p, q, graph=None, node_budget=2000, seed=0, pairs=50, optimise=True,
                    vertex_budget=17, rounds=40):
    """Near-geodesic from ``p`` to ``q`` and its ``(2, kappa_hat)`` certificate.

    Graph shortest path, shortcut smoothing, then the polyline optimiser of
    :mod:`kobalab.paths`; the result is reparametrised by the upper functional.
    """
    p = np.asarray(p, complex)
    q = np.asarray(q, complex)
    paths, certs, _ = almost_geodesics(domain, p[None], q[None], graph, node_budget, seed, pairs,
                                       optimise, vertex_budget, rounds)
    return paths[0], certs[0]


# splicing


def splice_rough_geodesic(domain, path, xi, eps, resolution=1e-3, optimise=False):
    """Replace the excursion of ``path`` outside ``B_{eps/2}(xi)`` by a chord.

    If the path stays in ``B_eps(xi)`` it is returned unchanged.  Otherwise
    ``a'`` (first exit from the half ball) and ``b'`` (last entry) are found
    by sampling the path at ``resolution`` of its length, and the part in
    between becomes the straight segment, which must be interior.
    """
    if not isinstance(path, PathPolyline):
        path = PathPolyline(path)
    xi = np.asarray(xi, complex)
    V = path.vertices
    seg = cnorm(np.diff(V, axis=0))
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    t = np.linspace(0, cum[-1], int(np.ceil(1 / resolution)) + 1)
    k = np.clip(np.searchsorted(cum, t, side="right") - 1, 0, len(seg) - 1)
    pts = V[k] + ((t - cum[k]) / seg[k])[:, None] * (V[k + 1] - V[k])
    r = cnorm(pts - xi)
    if np.all(r < eps):
        return path
    out = np.flatnonzero(r >= eps / 2)
    ia, ib = max(out[0] - 1, 0), min(out[-1] + 1, len(t) - 1)
    a, b = pts[ia], pts[ib]
    if not _segments_interior(domain, a[None], b[None], k=256)[0]:
        raise SpliceSegmentExits("the chord between the exit and entry points leaves the domain")
    head = np.vstack([V[: k[ia] + 1], a[None]])
    tail = np.vstack([b[None], V[k[ib] + 1:]])
    new = PathPolyline(_dedupe(np.vstack([head, tail])))
    new = shortcut_smooth(domain, new)
    return new
