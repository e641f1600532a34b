"""Minimal spanning trees, invasion percolation and cluster labeling."""

from dataclasses import dataclass, field
import warnings

import numpy as np
from numba import njit

from .errors import UnreachableError, UsageError
from .geometry import TRIANGULAR

LEXICOGRAPHIC = "lexicographic"
MAX_ONLY = "max-only"

TORUS_FLAT = "torus-flat"
PLANE = "plane"
COMPACTIFIED = "compactified"
METRICS = (TORUS_FLAT, PLANE, COMPACTIFIED)

FULL = "full-spanning"
BOUNDARY = "boundary"
TARGET = "target"


@dataclass(frozen=True)
class PolylinePath:
    """Ordered points in the embedding with a metric tag.

    On the torus the points are an unwrapped representative: consecutive
    points differ by one lattice step, never by a jump across the seam.
    ``sites`` records the lattice sites behind the points when known and
    ``period`` the torus side for the flat torus metric.
    """

    points: np.ndarray
    metric: str = PLANE
    sites: tuple = None
    period: float = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if pts.shape[0] == 0:
            raise UsageError("a path needs at least one point")
        if self.metric not in METRICS:
            raise UsageError(f"unknown metric tag {self.metric!r}")
        if self.metric == TORUS_FLAT and not (self.period and self.period > 0):
            raise UsageError("the torus metric needs a positive period")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class StopRule:
    """When an invasion halts: after spanning, at the box boundary, or at a target site."""

    kind: str = FULL
    target: int = None

    def __post_init__(self):
        if self.kind not in (FULL, BOUNDARY, TARGET):
            raise UsageError(f"unknown stop rule {self.kind!r}")
        if self.kind == TARGET and self.target is None:
            raise UsageError("target rule needs a target site")

    @classmethod
    def full(cls):
        return cls(FULL)

    @classmethod
    def boundary(cls):
        return cls(BOUNDARY)

    @classmethod
    def at(cls, site):
        return cls(TARGET, int(site))


# ---------------------------------------------------------------- edge order


def edge_keys(labels, rule=LEXICOGRAPHIC):
    """Per-edge ``(hi, lo)`` comparison values under an ordering rule."""
    hi, lo = labels.edge_hi_lo()
    if rule == MAX_ONLY:
        lo = np.zeros_like(hi)
    elif rule != LEXICOGRAPHIC:
        raise UsageError(f"unknown edge order rule {rule!r}")
    return hi, lo


def edge_order(labels, rule=LEXICOGRAPHIC):
    """Edge ids sorted ascending by label; remaining ties broken by edge id."""
    if rule not in (LEXICOGRAPHIC, MAX_ONLY):
        raise UsageError(f"unknown edge order rule {rule!r}")
    if labels.carrier == "edge":
        return np.argsort(labels.values, kind="stable")
    # site labels are distinct, so integer ranks reproduce the (hi, lo) order
    g = labels.geometry
    n = g.site_count
    site_rank = np.empty(n, dtype=np.int64)
    site_rank[np.argsort(labels.values)] = np.arange(n)
    a = site_rank[g.edges[:, 0]]
    b = site_rank[g.edges[:, 1]]
    if rule == LEXICOGRAPHIC:
        key = np.maximum(a, b) * n + np.minimum(a, b)
    else:
        key = np.maximum(a, b) * g.edge_count + np.arange(g.edge_count)
    return np.argsort(key, kind="stable")


def edge_rank(order):
    rank = np.empty_like(order)
    rank[order] = np.arange(order.shape[0])
    return rank


# ---------------------------------------------------------------- kernels


@njit(cache=True)
def _find(parent, a):
    while parent[a] != a:
        parent[a] = parent[parent[a]]
        a = parent[a]
    return a


@njit(cache=True)
def _kruskal(n, edges, order):
    parent = np.arange(n)
    size = np.ones(n, dtype=np.int64)
    taken = np.empty(n - 1 if n > 0 else 0, dtype=np.int64)
    count = 0
    for q in range(order.shape[0]):
        e = order[q]
        a = _find(parent, edges[e, 0])
        b = _find(parent, edges[e, 1])
        if a == b:
            continue
        if size[a] < size[b]:
            a, b = b, a
        parent[b] = a
        size[a] += size[b]
        taken[count] = e
        count += 1
        if count == n - 1:
            break
    return taken[:count]


@njit(cache=True)
def _heap_push(heap, n, item):
    i = n
    heap[i] = item
    while i > 0:
        p = (i - 1) >> 1
        if heap[p] <= heap[i]:
            break
        heap[p], heap[i] = heap[i], heap[p]
        i = p
    return n + 1


@njit(cache=True)
def _heap_pop(heap, n):
    top = heap[0]
    n -= 1
    heap[0] = heap[n]
    i = 0
    while True:
        l = 2 * i + 1
        if l >= n:
            break
        c = l
        if l + 1 < n and heap[l + 1] < heap[l]:
            c = l + 1
        if heap[i] <= heap[c]:
            break
        heap[i], heap[c] = heap[c], heap[i]
        i = c
    return top, n




@njit(cache=True)
def _invade(nbr, edge_of, edges, rank, order, start, mode, target, on_boundary):
    # mode 0: full spanning, 1: boundary, 2: target
    n = nbr.shape[0]
    deg = nbr.shape[1]
    inside = np.zeros(n, dtype=np.bool_)
    heap = np.empty(n * deg + 1, dtype=np.int64)
    taken = np.empty(max(n - 1, 0), dtype=np.int64)
    count = 0
    hn = 0
    inside[start] = True
    if (mode == 1 and on_boundary[start]) or (mode == 2 and start == target):
        return taken[:0], True
    for k in range(deg):
        v = nbr[start, k]
        if v >= 0:
            hn = _heap_push(heap, hn, rank[edge_of[start, k]])
    while hn > 0:
        top, hn = _heap_pop(heap, hn)
        e = order[top]
        a = edges[e, 0]
        b = edges[e, 1]
        if inside[a] and inside[b]:
            continue
        u = b if inside[a] else a
        inside[u] = True
        taken[count] = e
        count += 1
        if (mode == 1 and on_boundary[u]) or (mode == 2 and u == target):
            return taken[:count], True
        for k in range(deg):
            v = nbr[u, k]
            if v >= 0 and not inside[v]:
                hn = _heap_push(heap, hn, rank[edge_of[u, k]])
    return taken[:count], mode == 0


@njit(cache=True)
def _tree_bfs(n, edges, tree_edges):
    # CSR adjacency of the forest, then BFS from the smallest site of each component
    deg = np.zeros(n + 1, dtype=np.int64)
    for q in range(tree_edges.shape[0]):
        e = tree_edges[q]
        deg[edges[e, 0] + 1] += 1
        deg[edges[e, 1] + 1] += 1
    start = np.cumsum(deg)
    fill = start[:-1].copy()
    adj = np.empty(2 * tree_edges.shape[0], dtype=np.int64)
    adj_e = np.empty(2 * tree_edges.shape[0], dtype=np.int64)
    for q in range(tree_edges.shape[0]):
        e = tree_edges[q]
        a = edges[e, 0]
        b = edges[e, 1]
        adj[fill[a]] = b
        adj_e[fill[a]] = e
        fill[a] += 1
        adj[fill[b]] = a
        adj_e[fill[b]] = e
        fill[b] += 1
    parent = np.full(n, -1, dtype=np.int64)
    parent_edge = np.full(n, -1, dtype=np.int64)
    depth = np.full(n, -1, dtype=np.int64)
    comp = np.full(n, -1, dtype=np.int64)
    order = np.empty(n, dtype=np.int64)
    head = 0
    tail = 0
    ncomp = 0
    for root in range(n):
        if depth[root] >= 0:
            continue
        depth[root] = 0
        comp[root] = ncomp
        order[tail] = root
        tail += 1
        while head < tail:
            u = order[head]
            head += 1
            for q in range(start[u], start[u + 1]):
                v = adj[q]
                if depth[v] < 0:
                    depth[v] = depth[u] + 1
                    parent[v] = u
                    parent_edge[v] = adj_e[q]
                    comp[v] = ncomp
                    order[tail] = v
                    tail += 1
        ncomp += 1
    return parent, parent_edge, depth, comp, order, start, adj


@njit(cache=True)
def _label_clusters(nbr, offsets, site_open, edge_open, edge_of, use_edges, L, torus):
    # BFS labeling with unwrapped coordinates; detects clusters winding the torus
    n = nbr.shape[0]
    deg = nbr.shape[1]
    cid = np.full(n, -1, dtype=np.int64)
    ux = np.zeros(n, dtype=np.int64)
    uy = np.zeros(n, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    sizes = np.zeros(n, dtype=np.int64)
    box = np.zeros((n, 4), dtype=np.int64)
    wraps = np.zeros(n, dtype=np.bool_)
    nc = 0
    for s in range(n):
        if cid[s] >= 0:
            continue
        if use_edges:
            anyopen = False
            for k in range(deg):
                e = edge_of[s, k]
                if e >= 0 and edge_open[e]:
                    anyopen = True
                    break
            if not anyopen:
                continue
        elif not site_open[s]:
            continue
        cid[s] = nc
        ux[s] = s % L
        uy[s] = s // L
        box[nc, 0] = ux[s]
        box[nc, 1] = uy[s]
        box[nc, 2] = ux[s]
        box[nc, 3] = uy[s]
        head = 0
        tail = 1
        queue[0] = s
        while head < tail:
            u = queue[head]
            head += 1
            sizes[nc] += 1
            for k in range(deg):
                v = nbr[u, k]
                if v < 0:
                    continue
                if use_edges:
                    if not edge_open[edge_of[u, k]]:
                        continue
                elif not site_open[v]:
                    continue
                vx = ux[u] + offsets[k, 0]
                vy = uy[u] + offsets[k, 1]
                if cid[v] < 0:
                    cid[v] = nc
                    ux[v] = vx
                    uy[v] = vy
                    box[nc, 0] = min(box[nc, 0], vx)
                    box[nc, 1] = min(box[nc, 1], vy)
                    box[nc, 2] = max(box[nc, 2], vx)
                    box[nc, 3] = max(box[nc, 3], vy)
                    queue[tail] = v
                    tail += 1
                elif torus and (ux[v] != vx or uy[v] != vy):
                    wraps[nc] = True
        nc += 1
    return cid, sizes[:nc], box[:nc], wraps[:nc]


# ---------------------------------------------------------------- trees


@dataclass(eq=False)
class SpanningTree:
    """Acyclic edge set over the sites of a geometry.

    ``edges`` are edge ids in acceptance order and ``values`` the comparison
    label of each at acceptance time. ``spanning`` is False when the tree
    does not reach every site (a forest, or a stopped invasion).
    """

    geometry: object = field(repr=False)
    edges: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    spanning: bool = True
    _bfs: tuple = field(default=None, repr=False)

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)

    @property
    def edge_count(self):
        return int(self.edges.shape[0])

    def edge_set(self):
        return frozenset(int(e) for e in self.edges)

    def _ensure(self):
        if self._bfs is None:
            g = self.geometry
            self._bfs = _tree_bfs(g.site_count, g.edges.astype(np.int64), self.edges)
        return self._bfs

    @property
    def parent(self):
        """Parent site in the BFS rooted at each component's smallest site (-1 at roots)."""
        return self._ensure()[0]

    @property
    def parent_edge(self):
        return self._ensure()[1]

    @property
    def depth(self):
        return self._ensure()[2]

    @property
    def component(self):
        return self._ensure()[3]

    @property
    def bfs_order(self):
        return self._ensure()[4]

    @property
    def adjacency(self):
        """CSR ``(start, neighbours)`` of the tree."""
        b = self._ensure()
        return b[5], b[6]

    def vertices(self):
        """Sites touched by the tree edges."""
        if self.edge_count == 0:
            return np.zeros(0, dtype=np.int64)
        return np.unique(self.geometry.edges[self.edges].ravel())


def mst_kruskal(geometry, labels, rule=LEXICOGRAPHIC):
    """Minimal spanning tree by ascending Kruskal under the edge order ``rule``."""
    if labels.geometry is not geometry and labels.geometry.spec != geometry.spec:
        raise UsageError("labels belong to a different geometry")
    order = edge_order(labels, rule)
    taken = _kruskal(geometry.site_count, geometry.edges.astype(np.int64), order)
    hi, _ = edge_keys(labels, rule)
    spanning = taken.shape[0] == geometry.site_count - 1
    if not spanning:
        warnings.warn("geometry is disconnected; returning a spanning forest", RuntimeWarning)
    return SpanningTree(geometry, taken, hi[taken], spanning)


def _on_boundary(geometry):
    L = geometry.side
    i, j = geometry.coords(np.arange(geometry.site_count))
    return (i == 0) | (j == 0) | (i == L - 1) | (j == L - 1)


def invade(geometry, labels, start, stop=None, rule=LEXICOGRAPHIC):
    """Invasion percolation from ``start``; returns ``(tree, trace)``.

    ``trace`` holds the comparison label of every invaded edge in order.
    """
    stop = stop or StopRule.full()
    start = int(start)
    if not 0 <= start < geometry.site_count:
        raise UsageError(f"start site {start} out of range")
    if stop.kind == BOUNDARY and geometry.spec.torus:
        raise UsageError("the boundary stop rule needs a box domain")
    target = -1
    if stop.kind == TARGET:
        target = int(stop.target)
        if not 0 <= target < geometry.site_count:
            raise UsageError(f"target site {target} out of range")
    order = edge_order(labels, rule)
    rank = edge_rank(order)
    mode = {FULL: 0, BOUNDARY: 1, TARGET: 2}[stop.kind]
    on_boundary = _on_boundary(geometry) if mode == 1 else np.zeros(1, dtype=np.bool_)
    taken, reached = _invade(geometry.nbr, geometry.edge_of, geometry.edges, rank, order,
                             start, mode, target, on_boundary)
    if not reached:
        raise UnreachableError("the stop condition lies outside the start component")
    hi, _ = edge_keys(labels, rule)
    trace = hi[taken]
    spanning = taken.shape[0] == geometry.site_count - 1
    return SpanningTree(geometry, taken, trace, spanning), trace


def tree_sites_path(tree, x, y):
    """Site sequence of the unique tree path from ``x`` to ``y``."""
    g = tree.geometry
    x, y = int(x), int(y)
    for s in (x, y):
        if not 0 <= s < g.site_count:
            raise UsageError(f"site {s} out of range")
    if x == y:
        return [x]
    if tree.component[x] != tree.component[y]:
        raise UsageError("sites lie in different tree components")
    parent = tree.parent
    depth = tree.depth
    left = [x]
    right = [y]
    a, b = x, y
    while depth[a] > depth[b]:
        a = int(parent[a])
        left.append(a)
    while depth[b] > depth[a]:
        b = int(parent[b])
        right.append(b)
    while a != b:
        a = int(parent[a])
        b = int(parent[b])
        left.append(a)
        right.append(b)
    return left + right[-2::-1]


def unwrap_sites(geometry, sites):
    """Embedding points along a site walk, unwrapped across the torus seam."""
    sites = np.asarray(sites, dtype=np.int64)
    pos = geometry.positions(sites)
    if sites.shape[0] > 1 and geometry.spec.torus:
        steps = geometry.displacement(pos[:-1], pos[1:])
        pos = np.concatenate([pos[:1], pos[:1] + np.cumsum(steps, axis=0)])
    return pos


def tree_path(tree, x, y):
    """Unique simple tree path from ``x`` to ``y`` as an unwrapped polyline."""
    sites = tree_sites_path(tree, x, y)
    g = tree.geometry
    return site_polyline(g, sites)


def site_polyline(geometry, sites):
    """Unwrapped polyline through lattice sites with the domain's metric tag."""
    g = geometry
    if g.spec.torus:
        return PolylinePath(unwrap_sites(g, sites), TORUS_FLAT, tuple(sites), 2.0 * g.m)
    return PolylinePath(unwrap_sites(g, sites), PLANE, tuple(sites))


# ---------------------------------------------------------------- clusters


@dataclass(frozen=True, eq=False)
class ClusterLabeling:
    """Open clusters of a threshold view.

    ``cluster_id`` is -1 on closed sites (for bond percolation: sites with no
    open edge). ``bbox`` rows are unwrapped ``(x0, y0, x1, y1)`` in
    embedding units; ``diameter`` is the max-norm extent, ``2M`` for a
    cluster winding around the torus.
    """

    p: float
    cluster_id: np.ndarray = field(repr=False)
    sizes: np.ndarray = field(repr=False)
    diameter: np.ndarray = field(repr=False)
    bbox: np.ndarray = field(repr=False)
    wraps: np.ndarray = field(repr=False)

    @property
    def count(self):
        return int(self.sizes.shape[0])


def clusters_at(geometry, config):
    """Label the open clusters of ``config``."""
    g = geometry
    use_edges = g.spec.kind != TRIANGULAR
    if use_edges:
        edge_open = config.edge_open
        site_open = np.zeros(1, dtype=np.bool_)
    else:
        site_open = config.site_open
        edge_open = np.zeros(1, dtype=np.bool_)
    cid, sizes, box, wraps = _label_clusters(g.nbr, g.offsets, site_open, edge_open,
                                             g.edge_of, use_edges, g.side, g.spec.torus)
    ext = np.maximum(box[:, 2] - box[:, 0], box[:, 3] - box[:, 1]) * g.eta
    diameter = np.where(wraps, 2.0 * g.m, np.minimum(ext, 2.0 * g.m))
    bbox = -g.m + box * g.eta
    return ClusterLabeling(config.p, cid, sizes, diameter, bbox, wraps)


def path_in_cluster_check(tree, labels, p, x, y, clusters=None):
    """True iff the tree path between two sites of one ``p``-cluster stays in it.

    A precomputed labeling of the same threshold may be passed as ``clusters``.
    """
    from .ensemble import config_at

    if clusters is None:
        clusters = clusters_at(tree.geometry, config_at(labels, p))
    cx, cy = clusters.cluster_id[int(x)], clusters.cluster_id[int(y)]
    if cx < 0 or cx != cy:
        raise UsageError("x and y must be open and in the same cluster")
    sites = tree_sites_path(tree, x, y)
    return bool(np.all(clusters.cluster_id[sites] == cx))
