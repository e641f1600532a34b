"""Important sites, switch events, enhanced networks and cut-off trees."""

from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy import ndimage

from . import _arms
from .ensemble import lambda_to_p, p_to_lambda
from .errors import IntegrityError, UsageError
from .forest import PLANE, TORUS_FLAT, PolylinePath, site_polyline, unwrap_sites
from .geometry import TRIANGULAR


@dataclass(frozen=True)
class ImportantSite:
    """A site with four alternating arms from itself to the 3-cell box around its cell."""

    site: int
    epsilon: float
    open: bool
    cell: int


@dataclass(frozen=True)
class SwitchEvent:
    """A closed important site opening at ``time`` inside the window."""

    site: int
    time: float
    index: int


def cell_bounds(geometry, epsilon):
    """Cell boundaries (site units, per axis) of the grid ``epsilon * Z^2``.

    The last cell is narrower when ``epsilon`` does not divide the side.
    """
    g = geometry
    L = g.side
    k0 = int(np.floor(-g.m / epsilon + 1e-9))
    k1 = int(np.ceil(g.m / epsilon - 1e-9))
    edges = np.ceil((np.arange(k0, k1 + 1) * epsilon + g.m) / g.eta - 1e-9).astype(np.int64)
    edges = np.unique(np.clip(edges, 0, L))
    if edges[0] != 0:
        edges = np.concatenate([[0], edges])
    if edges[-1] != L:
        edges = np.concatenate([edges, [L]])
    return edges


def find_important(geometry, config, epsilon):
    """Sites with four alternating arms from the site to the boundary of the
    box of three cells (side ``3 epsilon``) concentric with its ``epsilon``-cell.

    Returns ImportantSite records sorted by site id.
    """
    g = geometry
    if g.spec.kind != TRIANGULAR:
        raise UsageError("important sites are implemented for the triangular site lattice")
    epsilon = float(epsilon)
    if not epsilon > 0 or 3 * epsilon > 2 * g.m + 1e-12:
        raise UsageError("need 0 < 3*epsilon <= domain side")
    bounds = cell_bounds(g, epsilon)
    if np.any(np.diff(bounds) < 1):
        raise UsageError("epsilon is below the mesh")
    flags = _arms.important_scan(np.ascontiguousarray(config.site_open), g.side,
                                 g.spec.torus, bounds, bounds)
    sites = np.nonzero(flags)[0]
    ncell = bounds.shape[0] - 1
    i, j = g.coords(sites)
    cx = np.searchsorted(bounds, i, side="right") - 1
    cy = np.searchsorted(bounds, j, side="right") - 1
    state = config.site_open[sites]
    return [ImportantSite(int(s), epsilon, bool(o), int(b * ncell + a))
            for s, o, a, b in zip(sites, state, cx, cy)]


def switches(labels, important, window, cal):
    """Closed important sites whose label lies in ``(p(lambda), p(lambda')]``, by time."""
    p_lo = lambda_to_p(window.lambda_lo, cal)
    p_hi = lambda_to_p(window.lambda_hi, cal)
    found = []
    for imp in important:
        v = float(labels.values[imp.site])
        if p_lo < v <= p_hi:
            found.append((p_to_lambda(v, cal), imp.site))
    found.sort()
    return [SwitchEvent(s, t, k) for k, (t, s) in enumerate(found)]


# ---------------------------------------------------------------- networks


@njit(cache=True)
def _router_bfs(nbr, active, roots):
    # BFS forest inside the active sites from each root; parent -1 at roots
    n = nbr.shape[0]
    parent = np.full(n, -2, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    for q in range(roots.shape[0]):
        r = roots[q]
        parent[r] = -1
        head = 0
        tail = 1
        queue[0] = r
        while head < tail:
            u = queue[head]
            head += 1
            for k in range(nbr.shape[1]):
                v = nbr[u, k]
                if v >= 0 and active[v] and parent[v] == -2:
                    parent[v] = u
                    queue[tail] = v
                    tail += 1
    return parent


@dataclass(eq=False)
class EnhancedNetwork:
    """Bipartite pivotal-router graph of one configuration.

    Clusters are the open clusters of the configuration with the pivotal
    sites removed. Each cluster adjacent to a pivotal has a router, its
    lowest-then-leftmost site (the minimal site id). ``incidence`` rows are
    ``(pivotal index, router index, attachment site)`` where the attachment
    site is the smallest cluster site adjacent to the pivotal.
    """

    geometry: object = field(repr=False)
    pivotals: np.ndarray = field(repr=False)
    pivotal_open: np.ndarray = field(repr=False)
    routers: np.ndarray = field(repr=False)
    cluster_id: np.ndarray = field(repr=False)
    incidence: np.ndarray = field(repr=False)
    _tree: np.ndarray = field(default=None, repr=False)

    @property
    def router_positions(self):
        return self.geometry.positions(self.routers)

    def routers_of(self, pivotal_index):
        rows = self.incidence[self.incidence[:, 0] == pivotal_index]
        return rows[:, 1], rows[:, 2]

    def cluster_path(self, site, router_index):
        """Sites from ``site`` to the router of its cluster inside the cluster."""
        if self._tree is None:
            active = self.cluster_id >= 0
            self._tree = _router_bfs(self.geometry.nbr, active, self.routers.astype(np.int64))
        path = [int(site)]
        target = int(self.routers[router_index])
        while path[-1] != target:
            nxt = int(self._tree[path[-1]])
            if nxt < 0:
                raise IntegrityError("site is not in the router's cluster")
            path.append(nxt)
        return path


def build_network(geometry, config, pivotals, labels=None):
    """Enhanced network of ``config`` for the pivotal set ``pivotals``.

    ``pivotals`` is a list of ImportantSite or of site ids.
    """
    from .forest import clusters_at
    from .ensemble import ConfigView

    g = geometry
    sites = np.array(sorted(int(getattr(x, "site", x)) for x in pivotals), dtype=np.int64)
    removed = np.zeros(g.site_count, dtype=bool)
    removed[sites] = True
    open_mask = config.site_open & ~removed
    view = _MaskView(open_mask, config.p)
    lab = clusters_at(g, view)
    cid = lab.cluster_id
    # cluster adjacency of each pivotal; attachment = smallest adjacent cluster site
    rows = []
    for pi, x in enumerate(sites):
        seen = {}
        for v in g.nbr[x]:
            if v >= 0 and cid[v] >= 0:
                c = int(cid[v])
                seen[c] = min(seen.get(c, g.site_count), int(v))
        for c, att in seen.items():
            rows.append((pi, c, att))
    used = sorted({c for _, c, _ in rows})
    # router = minimal site id of the cluster, i.e. lowest row then leftmost
    first = np.full(lab.count, -1, dtype=np.int64)
    active = np.nonzero(cid >= 0)[0]
    order = active[::-1]
    first[cid[order]] = order
    router_sites = first[used] if used else np.zeros(0, dtype=np.int64)
    sort = np.argsort(router_sites, kind="stable")
    router_sites = router_sites[sort]
    index_of = {c: k for k, c in enumerate(np.asarray(used)[sort])}
    inc = np.array(sorted((pi, index_of[c], att) for pi, c, att in rows),
                   dtype=np.int64).reshape(-1, 3)
    keep = np.full(lab.count, -1, dtype=np.int64)
    for c, k in index_of.items():
        keep[c] = k
    router_cluster = np.where(cid >= 0, keep[np.maximum(cid, 0)], -1)
    return EnhancedNetwork(g, sites, config.site_open[sites].copy(), router_sites,
                           router_cluster, inc)


@dataclass(frozen=True, eq=False)
class _MaskView:
    site_open: np.ndarray
    p: float


# ---------------------------------------------------------------- cut-off forest


class _DSU:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        a, b = self.find(a), self.find(b)
        if a == b:
            return False
        self.parent[max(a, b)] = min(a, b)
        return True


@dataclass(eq=False)
class CutoffForest:
    """Labeled forest on the routers of an enhanced network.

    ``edges`` rows are router index pairs, ``labels`` their labels (``lambda``
    for edges through open pivotals, the switch time otherwise) and
    ``pivotal`` the site of the pivotal each edge passes through.
    ``candidates`` holds the whole labeled router multigraph the forest was
    extracted from, in the same column layout.
    """

    network: EnhancedNetwork = field(repr=False)
    lam: float
    edges: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    pivotal: np.ndarray = field(repr=False)
    candidates: tuple = field(repr=False)

    @property
    def router_count(self):
        return int(self.network.routers.shape[0])

    def components(self):
        """Component index of each router."""
        dsu = _DSU(self.router_count)
        for a, b in self.edges:
            dsu.union(int(a), int(b))
        roots = [dsu.find(k) for k in range(self.router_count)]
        _, comp = np.unique(roots, return_inverse=True)
        return comp

    def edge_sites(self, a, b, pivotal):
        """Lattice walk drawing the edge ``a -> b`` through its pivotal and clusters."""
        net = self.network
        pi = int(np.searchsorted(net.pivotals, pivotal))
        routers, att = net.routers_of(pi)
        sa = int(att[routers == a][0])
        sb = int(att[routers == b][0])
        left = net.cluster_path(sa, a)[::-1]
        right = net.cluster_path(sb, b)
        return left + [int(pivotal)] + right


def _star_edges(network, allowed):
    # one edge from the smallest router of each pivotal to each of its others
    out = []
    inc = network.incidence
    for pi in allowed:
        rs = np.unique(inc[inc[:, 0] == pi][:, 1])
        for r in rs[1:]:
            out.append((int(rs[0]), int(r), pi))
    return out


def cutoff_forest(network, events, lam):
    """Minimal spanning forest on routers with ``lambda`` edges through open
    pivotals and switch-time edges through the closed pivotals that open.
    """
    pindex = {int(s): k for k, s in enumerate(network.pivotals)}
    for ev in events:
        k = pindex.get(int(ev.site))
        if k is None or network.pivotal_open[k]:
            raise IntegrityError(f"event site {ev.site} is not a closed pivotal of the network")
    times = [float(ev.time) for ev in events]
    if any(b < a for a, b in zip(times, times[1:])):
        raise IntegrityError("events must be sorted by time")
    open_idx = [k for k in range(network.pivotals.shape[0]) if network.pivotal_open[k]]
    cand = []
    # step edges in the deterministic order of the smallest incident pivotal site
    for a, b, pi in _star_edges(network, open_idx):
        cand.append((a, b, float(lam), int(network.pivotals[pi])))
    for ev in events:
        for a, b, _ in _star_edges(network, [pindex[int(ev.site)]]):
            cand.append((a, b, float(ev.time), int(ev.site)))
    dsu = _DSU(network.routers.shape[0])
    keep = []
    for q, (a, b, t, piv) in enumerate(cand):
        if a != b and dsu.union(a, b):
            keep.append(q)
    cand_arr = (np.array([c[:2] for c in cand], dtype=np.int64).reshape(-1, 2),
                np.array([c[2] for c in cand], dtype=float),
                np.array([c[3] for c in cand], dtype=np.int64))
    return CutoffForest(network, float(lam), cand_arr[0][keep], cand_arr[1][keep],
                        cand_arr[2][keep], cand_arr)


# ---------------------------------------------------------------- trees


@dataclass(eq=False)
class CutoffTree:
    """One component of a cut-off forest, or a degenerate single point."""

    forest: CutoffForest = field(repr=False)
    routers: np.ndarray = field(repr=False)
    edges: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    pivotal: np.ndarray = field(repr=False)
    degenerate: bool = False
    point: tuple = (0.0, 0.0)
    trace: dict = field(default=None, repr=False)

    @property
    def geometry(self):
        return self.forest.network.geometry

    def router_sites(self):
        return self.forest.network.routers[self.routers]

    def _adjacency(self):
        adj = {int(r): [] for r in self.routers}
        for (a, b), t, piv in zip(self.edges, self.labels, self.pivotal):
            adj[int(a)].append((int(b), float(t), int(piv)))
            adj[int(b)].append((int(a), float(t), int(piv)))
        return adj

    def router_path(self, a, b):
        """Router-level path ``[(router, label, pivotal), ...]`` from ``a`` to ``b``."""
        adj = self._adjacency()
        if a not in adj or b not in adj:
            raise UsageError("routers are not in this tree")
        prev = {a: None}
        todo = [a]
        while todo:
            u = todo.pop()
            for v, t, piv in adj[u]:
                if v not in prev:
                    prev[v] = (u, t, piv)
                    todo.append(v)
        if b not in prev:
            raise UsageError("routers lie in different components")
        out = []
        v = b
        while prev[v] is not None:
            u, t, piv = prev[v]
            out.append((u, v, t, piv))
            v = u
        return out[::-1]

    def sites_path(self, a, b):
        """Lattice walk of the tree path between routers ``a`` and ``b``."""
        net = self.forest.network
        walk = [int(net.routers[a])]
        for u, v, _, piv in self.router_path(a, b):
            walk.extend(self.forest.edge_sites(u, v, piv)[1:])
        return walk

    def path(self, a, b):
        """Unwrapped polyline of the tree path between routers ``a`` and ``b``."""
        g = self.geometry
        if self.degenerate:
            if g.spec.torus:
                return PolylinePath(np.array([self.point]), TORUS_FLAT, None, 2.0 * g.m)
            return PolylinePath(np.array([self.point]), PLANE)
        return site_polyline(g, self.sites_path(a, b))

    def switch_sites(self, a, b):
        """Closed pivotals crossed by the path between routers ``a`` and ``b``."""
        lam = self.forest.lam
        return {piv for _, _, t, piv in self.router_path(a, b) if t != lam}

    def drawing_sites(self):
        """Every lattice site on the drawing of the tree."""
        net = self.forest.network
        out = set(int(s) for s in net.routers[self.routers])
        for (a, b), piv in zip(self.edges, self.pivotal):
            out.update(self.forest.edge_sites(int(a), int(b), int(piv)))
        return np.array(sorted(out), dtype=np.int64)


def _degenerate(forest, trace=None):
    z = np.zeros(0, dtype=np.int64)
    return CutoffTree(forest, z, z.reshape(0, 2), np.zeros(0), z, True, (0.0, 0.0), trace)


def _component_extent(tree):
    # max-norm extent of the unwrapped drawing, following the tree from its first router
    g = tree.geometry
    net = tree.forest.network
    root = int(tree.routers[0])
    origin = g.positions(int(net.routers[root]))
    place = {root: origin}
    pts = [origin[None, :]]
    adj = tree._adjacency()
    todo = [root]
    while todo:
        u = todo.pop()
        for v, _, piv in adj[u]:
            if v in place:
                continue
            walk = unwrap_sites(g, tree.forest.edge_sites(u, v, piv))
            walk = walk - walk[0] + place[u]
            place[v] = walk[-1]
            pts.append(walk)
            todo.append(v)
    pts = np.concatenate(pts)
    ext = pts.max(axis=0) - pts.min(axis=0)
    return float(min(ext.max(), 2 * g.m))


def _coverage_radius(geometry, sites):
    # largest distance from any lattice site to the given sites (torus aware)
    g = geometry
    L = g.side
    grid = np.ones((L, L), dtype=bool)
    i, j = g.coords(sites)
    grid[j, i] = False
    if g.spec.torus:
        big = np.tile(grid, (3, 3))
        dist = ndimage.distance_transform_edt(big)[L:2 * L, L:2 * L]
    else:
        dist = ndimage.distance_transform_edt(grid)
    return float(dist.max()) * g.eta


def giant(forest, s):
    """The unique component within ``s`` of every point while all others
    have diameter at most ``s``; a degenerate point tree otherwise.
    """
    if not s > 0:
        raise UsageError("s must be positive")
    n = forest.router_count
    if n == 0:
        return _degenerate(forest)
    comp = forest.components()
    trees = []
    for c in range(comp.max() + 1):
        rs = np.nonzero(comp == c)[0]
        mask = np.isin(forest.edges[:, 0], rs) if forest.edges.size else np.zeros(0, bool)
        trees.append(CutoffTree(forest, rs, forest.edges[mask], forest.labels[mask],
                                forest.pivotal[mask]))
    g = forest.network.geometry
    extent = [_component_extent(t) for t in trees]
    big = [k for k, e in enumerate(extent) if e > s]
    if len(big) > 1:
        return _degenerate(forest)
    # a set within s of every point has extent at least 2M - 2s along each axis
    span = 2 * g.m - 2 * (s + 2 * g.eta)
    found = [k for k in range(len(trees))
             if extent[k] >= span - 1e-12 and (not big or big == [k])
             and _coverage_radius(g, trees[k].drawing_sites()) <= s + g.eta]
    if len(found) == 1:
        return trees[found[0]]
    return _degenerate(forest)


# ---------------------------------------------------------------- invasion


BOUNDARY_BAND = "boundary-band"
SITE = "site"
BAND = "band"


def _nearest_router(net, point):
    g = net.geometry
    d = g.distance(net.router_positions, np.asarray(point, dtype=float))
    best = np.min(d)
    # ties go to the minimal (y, x) position, i.e. the smallest router site
    return int(np.nonzero(d <= best + 1e-12)[0][0])


def target_routers(network, target, s, point=None):
    """Router indices forming the invasion target."""
    g = network.geometry
    pos = network.router_positions
    if network.routers.shape[0] == 0:
        return set()
    if target == BOUNDARY_BAND:
        dist = np.min(np.stack([pos[:, 0] + g.m, g.m - pos[:, 0],
                                pos[:, 1] + g.m, g.m - pos[:, 1]], axis=-1), axis=-1)
        return set(np.nonzero(dist <= s)[0].tolist())
    if point is None:
        raise UsageError("site and band targets need a target point")
    if target == SITE:
        return {_nearest_router(network, point)}
    if target == BAND:
        d = g.distance(pos, np.asarray(point, dtype=float))
        return set(np.nonzero(d <= s)[0].tolist())
    raise UsageError(f"unknown target kind {target!r}")


def cutoff_invasion(forest, origin, target, s, point=None):
    """Invasion on the labeled router multigraph of ``forest``.

    All frontier edges labeled ``lambda`` are invaded in one batch; the run
    stops once a batch (or single edge) reaches a target router. The tree
    returned follows the batch convention; ``trace`` also records where the
    single-edge convention would have stopped.
    """
    net = forest.network
    if net.routers.shape[0] == 0:
        return _degenerate(forest, {"batch_stop": 0, "edge_stop": 0, "steps": []})
    lam = forest.lam
    start = _nearest_router(net, origin)
    targets = target_routers(net, target, s, point)
    ends, labs, pivs = forest.candidates
    adj = {}
    for q, (a, b) in enumerate(ends):
        a, b = int(a), int(b)
        if a == b:
            continue
        adj.setdefault(a, []).append(q)
        adj.setdefault(b, []).append(q)
    inside = {start}
    taken = []
    steps = []
    edge_stop = None
    if start in targets or not targets:
        edge_stop = 0
    else:
        while True:
            frontier = sorted({q for u in inside for q in adj.get(u, [])
                               if not (int(ends[q, 0]) in inside and int(ends[q, 1]) in inside)},
                              key=lambda q: (labs[q], q))
            if not frontier:
                break
            if labs[frontier[0]] == lam:
                batch = [q for q in frontier if labs[q] == lam]
            else:
                batch = frontier[:1]
            hit = False
            for q in batch:
                a, b = int(ends[q, 0]), int(ends[q, 1])
                if a in inside and b in inside:
                    continue
                new = b if a in inside else a
                inside.add(new)
                taken.append(q)
                if new in targets:
                    hit = True
                    if edge_stop is None:
                        edge_stop = len(taken)
            steps.append(len(taken))
            if hit:
                break
    if edge_stop is None:
        edge_stop = len(taken)
    taken = np.array(taken, dtype=np.int64)
    trace = {"batch_stop": int(taken.shape[0]), "edge_stop": int(edge_stop), "steps": steps,
             "origin_router": start, "targets": sorted(targets)}
    return CutoffTree(forest, np.array(sorted(inside), dtype=np.int64), ends[taken],
                      labs[taken], pivs[taken], False,
                      tuple(net.router_positions[start]), trace)
