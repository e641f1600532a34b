"""Fréchet distances, immersed trees and a truncated spanning-forest metric."""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from numba import njit

from .errors import UsageError
from .forest import COMPACTIFIED, PLANE, TORUS_FLAT, PolylinePath, SpanningTree, site_polyline, tree_sites_path

_METRIC_CODE = {PLANE: 0, TORUS_FLAT: 1, COMPACTIFIED: 2}


@njit(cache=True, inline="always")
def _dist(ax, ay, bx, by, code, period):
    dx = ax - bx
    dy = ay - by
    if code == 1:
        dx -= period * np.rint(dx / period)
        dy -= period * np.rint(dy / period)
    d = np.sqrt(dx * dx + dy * dy)
    if code == 2:
        # chordal distance on the unit sphere after stereographic projection
        d = 2.0 * d / np.sqrt((1.0 + ax * ax + ay * ay) * (1.0 + bx * bx + by * by))
    return d


@njit(cache=True)
def _frechet(p, q, code, period):
    n = p.shape[0]
    m = q.shape[0]
    prev = np.empty(m, dtype=np.float64)
    cur = np.empty(m, dtype=np.float64)
    for j in range(m):
        d = _dist(p[0, 0], p[0, 1], q[j, 0], q[j, 1], code, period)
        prev[j] = d if j == 0 else max(prev[j - 1], d)
    for i in range(1, n):
        d = _dist(p[i, 0], p[i, 1], q[0, 0], q[0, 1], code, period)
        cur[0] = max(prev[0], d)
        for j in range(1, m):
            d = _dist(p[i, 0], p[i, 1], q[j, 0], q[j, 1], code, period)
            best = min(prev[j], prev[j - 1], cur[j - 1])
            cur[j] = max(best, d)
        prev, cur = cur, prev
    return prev[m - 1]


@njit(cache=True)
def _directed_hausdorff(p, q, code, period):
    worst = 0.0
    for i in range(p.shape[0]):
        best = np.inf
        for j in range(q.shape[0]):
            d = _dist(p[i, 0], p[i, 1], q[j, 0], q[j, 1], code, period)
            if d < best:
                best = d
                if best <= worst:
                    break
        if best > worst:
            worst = best
    return worst


def _common_metric(a, b):
    if a.metric != b.metric:
        raise UsageError(f"metric mismatch: {a.metric} vs {b.metric}")
    if a.metric == TORUS_FLAT and a.period != b.period:
        raise UsageError("torus periods differ")
    return _METRIC_CODE[a.metric], float(a.period or 0.0)


def point_distance(a, b, metric=PLANE, period=None):
    """Distance between two points under a metric tag."""
    code = _METRIC_CODE[metric]
    return float(_dist(float(a[0]), float(a[1]), float(b[0]), float(b[1]), code,
                       float(period or 0.0)))


def frechet(p1, p2):
    """Discrete Fréchet distance between two polylines."""
    code, period = _common_metric(p1, p2)
    return float(_frechet(p1.points, p2.points, code, period))


def hausdorff(p1, p2):
    """Hausdorff distance between the vertex sets of two polylines."""
    code, period = _common_metric(p1, p2)
    return float(max(_directed_hausdorff(p1.points, p2.points, code, period),
                     _directed_hausdorff(p2.points, p1.points, code, period)))


# ---------------------------------------------------------------- immersed trees


@dataclass(frozen=True, eq=False)
class ImmersedTree:
    """A tree drawn in the plane or torus, indexed by a reference tree.

    ``ref_edges`` joins reference vertices; ``polylines[k]`` draws edge ``k``
    from ``ref_edges[k][0]`` to ``ref_edges[k][1]``. ``leaves[i]`` is the
    reference vertex of the ``i``-th leaf of the tuple (several leaves may
    share a vertex after snapping).
    """

    vertices: np.ndarray = field(repr=False)
    ref_edges: tuple
    polylines: tuple = field(repr=False)
    leaves: tuple
    metric: str = PLANE
    period: float = None

    @property
    def leaf_points(self):
        return self.vertices[list(self.leaves)]

    def image(self):
        """All vertices of all polylines (and of the reference vertices)."""
        pts = [self.vertices] + [p.points for p in self.polylines]
        return PolylinePath(np.concatenate(pts), self.metric, None, self.period)

    def splits(self):
        """Per reference edge, the leaves on the side away from leaf 0.

        Returns ``(keys, oriented)`` where ``oriented[k]`` is True when
        ``ref_edges[k]`` already points away from leaf 0.
        """
        nv = self.vertices.shape[0]
        adj = [[] for _ in range(nv)]
        for k, (a, b) in enumerate(self.ref_edges):
            adj[a].append((b, k))
            adj[b].append((a, k))
        root = self.leaves[0]
        parent = {root: (None, None)}
        order = [root]
        for u in order:
            for v, k in adj[u]:
                if v not in parent:
                    parent[v] = (u, k)
                    order.append(v)
        below = {v: set() for v in order}
        for i, leaf in enumerate(self.leaves):
            below[leaf].add(i)
        for v in reversed(order[1:]):
            below[parent[v][0]] |= below[v]
        keys = {}
        oriented = {}
        for v in order[1:]:
            u, k = parent[v]
            keys[k] = frozenset(below[v])
            oriented[k] = self.ref_edges[k][0] == u
        return keys, oriented


def tree_dist(t1, t2):
    """``(lower, upper)`` bounds on the distance between two immersed trees.

    ``lower`` is the Hausdorff distance between the images; ``upper`` the
    largest Fréchet distance between corresponding edges, matched by the
    leaf bipartition each edge induces.
    """
    if t1.metric != t2.metric:
        raise UsageError("metric mismatch")
    if len(t1.leaves) != len(t2.leaves):
        raise UsageError("trees have different leaf counts")
    k1, o1 = t1.splits()
    k2, o2 = t2.splits()
    if set(k1.values()) != set(k2.values()) or len(k1) != len(k2):
        raise UsageError("reference tree shapes differ")
    lower = hausdorff(t1.image(), t2.image())
    by_key = {key: k for k, key in k2.items()}
    upper = 0.0
    for k, key in k1.items():
        j = by_key[key]
        a = t1.polylines[k] if o1[k] else _reverse(t1.polylines[k])
        b = t2.polylines[j] if o2[j] else _reverse(t2.polylines[j])
        upper = max(upper, frechet(a, b))
    if not k1:
        # a single reference vertex: compare the two points
        upper = lower
    return lower, max(upper, lower)


def _reverse(path):
    sites = None if path.sites is None else path.sites[::-1]
    return PolylinePath(path.points[::-1], path.metric, sites, path.period)


def _decompose(nodes, adj_edges, leaf_nodes, draw):
    """Split a Steiner subtree into reference vertices and chains.

    ``adj_edges`` maps a node to its Steiner-subtree neighbours and
    ``draw(u, v)`` returns the drawn walk of the tree edge ``u -> v`` as a
    list of points (unwrapped, starting at ``u``'s point).
    """
    special = set(leaf_nodes) | {u for u in nodes if len(adj_edges[u]) != 2}
    special_list = list(leaf_nodes) + sorted(special - set(leaf_nodes))
    index = {u: i for i, u in enumerate(special_list)}
    chains = []
    seen = set()
    for s in special_list:
        for nxt in adj_edges[s]:
            if (s, nxt) in seen:
                continue
            walk = [s, nxt]
            while walk[-1] not in special:
                a, b = adj_edges[walk[-1]]
                walk.append(b if a == walk[-2] else a)
            for u, v in zip(walk, walk[1:]):
                seen.add((u, v))
                seen.add((v, u))
            pts = [draw(walk[0], walk[1])]
            for u, v in zip(walk[1:], walk[2:]):
                seg = draw(u, v)
                pts.append(seg[1:] - seg[0] + pts[-1][-1])
            chains.append((index[walk[0]], index[walk[-1]], np.concatenate(pts)))
    return special_list, chains


@dataclass(frozen=True, eq=False)
class ForestSample:
    """Immersed trees extracted at leaf tuples, grouped by leaf count.

    ``trees[ell]`` lists the trees of all tuples with ``ell`` leaves in the
    order of ``tuples[ell]``.
    """

    tuples: dict = field(repr=False)
    trees: dict = field(repr=False)
    ell_max: int = 2
    metric: str = PLANE
    period: float = None


def _tuple_closure(leaf_tuples, ell_max):
    out = {}
    for tup in leaf_tuples:
        tup = tuple(tuple(float(c) for c in pt) for pt in tup)
        if not 1 <= len(tup) <= ell_max:
            raise UsageError(f"tuple sizes must lie in 1..{ell_max}")
        for size in range(1, len(tup) + 1):
            for sub in combinations(tup, size):
                bucket = out.setdefault(size, [])
                if sub not in bucket:
                    bucket.append(sub)
    return out


def _spanning_adapter(tree):
    g = tree.geometry
    verts = tree.vertices()
    if verts.shape[0] == 0:
        verts = np.arange(g.site_count) if tree.spanning else np.zeros(0, dtype=np.int64)
    pos = g.positions(verts)

    def snap(point):
        d = g.distance(pos, np.asarray(point, dtype=float))
        return int(verts[int(np.argmin(d))])

    def path(a, b):
        return tree_sites_path(tree, a, b)

    def draw(u, v):
        return site_polyline(g, [u, v]).points

    def where(u):
        return g.positions(u)

    return snap, path, draw, where


def _cutoff_adapter(tree):
    g = tree.geometry
    net = tree.forest.network
    pos = net.router_positions[tree.routers]

    def snap(point):
        d = g.distance(pos, np.asarray(point, dtype=float))
        return int(tree.routers[int(np.argmin(d))])

    def path(a, b):
        walk = [a]
        for _, v, _, _ in tree.router_path(a, b):
            walk.append(v)
        return walk

    pivot = {}
    for (a, b), piv in zip(tree.edges, tree.pivotal):
        pivot[(int(a), int(b))] = int(piv)
        pivot[(int(b), int(a))] = int(piv)

    def draw(u, v):
        return site_polyline(g, tree.forest.edge_sites(u, v, pivot[(u, v)])).points

    def where(u):
        return g.positions(int(net.routers[u]))

    return snap, path, draw, where


def _extract_one(adapter, points, metric, period):
    snap, path, draw, where = adapter
    nodes_of_leaf = [snap(p) for p in points]
    leaf_nodes = list(dict.fromkeys(nodes_of_leaf))
    adj = {leaf_nodes[0]: set()}
    for other in leaf_nodes[1:]:
        walk = path(leaf_nodes[0], other)
        for u, v in zip(walk, walk[1:]):
            adj.setdefault(u, set()).add(v)
            adj.setdefault(v, set()).add(u)
    adj = {u: sorted(vs) for u, vs in adj.items()}
    special, chains = _decompose(list(adj), adj, leaf_nodes, draw)
    # place reference vertices on the unwrapped drawing, starting from leaf 0
    place = {0: np.asarray(where(special[0]), dtype=float)}
    todo = [0]
    while todo:
        u = todo.pop()
        for a, b, pts in chains:
            if a == u and b not in place:
                place[b] = place[u] + (pts[-1] - pts[0])
                todo.append(b)
            elif b == u and a not in place:
                place[a] = place[u] - (pts[-1] - pts[0])
                todo.append(a)
    vertices = np.array([place[i] for i in range(len(special))]).reshape(-1, 2)
    edges = []
    lines = []
    for a, b, pts in chains:
        edges.append((a, b))
        lines.append(PolylinePath(pts - pts[0] + place[a], metric, None, period))
    index = {u: i for i, u in enumerate(special)}
    leaves = tuple(index[u] for u in nodes_of_leaf)
    return ImmersedTree(vertices, tuple(edges), tuple(lines), leaves, metric, period)


def extract_sample(tree, leaf_tuples, ell_max):
    """Immersed subtrees of ``tree`` spanned by the snapped leaf tuples.

    Every sub-tuple of a given tuple is extracted too, so the sample is
    closed under taking leaf subsets.
    """
    if int(ell_max) < 2:
        raise UsageError("ell_max must be at least 2")
    ell_max = int(ell_max)
    tuples = _tuple_closure(leaf_tuples, ell_max)
    g = tree.geometry
    metric = TORUS_FLAT if g.spec.torus else PLANE
    period = 2.0 * g.m if g.spec.torus else None
    degenerate = getattr(tree, "degenerate", False)
    trees = {}
    if degenerate:
        point = np.asarray(tree.point, dtype=float)
        for size, tups in tuples.items():
            trees[size] = [ImmersedTree(point[None, :], (), (), tuple([0] * size), metric,
                                        period) for _ in tups]
        return ForestSample(tuples, trees, ell_max, metric, period)
    adapter = _spanning_adapter(tree) if isinstance(tree, SpanningTree) else _cutoff_adapter(tree)
    for size, tups in tuples.items():
        trees[size] = [_extract_one(adapter, tup, metric, period) for tup in tups]
    return ForestSample(tuples, trees, ell_max, metric, period)


@dataclass(frozen=True)
class OmegaDistance:
    """Truncated forest distance: certified-style upper value and matching lower aggregate."""

    upper: float
    lower: float
    mismatched: int = 0


def d_omega_truncated(f1, f2, on_mismatch="error"):
    """``sum_ell 2^-ell * max over matched tuples`` of tree distances.

    The one-leaf term is the Hausdorff distance between the snapped leaf
    positions. With ``on_mismatch="skip"`` tuples whose reference shapes
    differ are left out of both aggregates and counted in ``mismatched``.
    """
    if f1.ell_max != f2.ell_max or f1.tuples != f2.tuples:
        raise UsageError("samples were not built from the same leaf tuples")
    if f1.metric != f2.metric or f1.period != f2.period:
        raise UsageError("samples live in different metric spaces")
    upper = 0.0
    lower = 0.0
    skipped = 0
    for ell in range(1, f1.ell_max + 1):
        a = f1.trees.get(ell, [])
        b = f2.trees.get(ell, [])
        if not a:
            continue
        w = 2.0 ** -ell
        if ell == 1:
            pa = PolylinePath(np.array([t.vertices[t.leaves[0]] for t in a]), f1.metric, None,
                              f1.period)
            pb = PolylinePath(np.array([t.vertices[t.leaves[0]] for t in b]), f1.metric, None,
                              f1.period)
            h = hausdorff(pa, pb)
            upper += w * h
            lower += w * h
            continue
        hi = 0.0
        lo = 0.0
        for t1, t2 in zip(a, b):
            try:
                l, u = tree_dist(t1, t2)
            except UsageError:
                if on_mismatch != "skip":
                    raise
                skipped += 1
                continue
            hi = max(hi, u)
            lo = max(lo, l)
        upper += w * hi
        lower += w * lo
    return OmegaDistance(upper, lower, skipped)
