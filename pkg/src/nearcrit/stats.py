"""Arm frequencies, stability ratios, cluster volumes, degree census and box counting."""

from dataclasses import dataclass, field
import math

import numpy as np
from numba import njit
from scipy.stats import linregress

from . import _arms
from .ensemble import Window, binomial_interval, lambda_to_p
from .errors import FitError, UsageError
from .forest import clusters_at
from .geometry import TRIANGULAR
from .rng import as_seed

OPEN = "O"
CLOSED = "C"
CLUSTER_DIMENSION = 91.0 / 48.0


def _sites(x, eta):
    v = x / eta
    k = int(round(v))
    if abs(v - k) > 1e-6:
        raise UsageError(f"scale {x} is not a multiple of the mesh")
    return k


# ---------------------------------------------------------------- arm events


@dataclass(frozen=True)
class ArmSpec:
    """Arm event family: ``palette`` is the cyclic colour sequence ("O"/"C").

    ``radii`` holds ``(r, R)`` pairs in embedding units and ``window`` the
    thresholds: primal arms use labels at most ``p(lambda')``, dual arms
    labels above ``p(lambda)``; ``lambda == lambda'`` is a static event.
    """

    palette: tuple
    radii: tuple
    window: tuple = (0.0, 0.0)
    samples: int = 1000
    monochromatic: bool = False

    def __post_init__(self):
        pal = tuple(str(c).upper() for c in self.palette)
        object.__setattr__(self, "palette", pal)
        object.__setattr__(self, "radii", tuple((float(a), float(b)) for a, b in self.radii))
        if isinstance(self.window, Window):
            object.__setattr__(self, "window", (self.window.lambda_lo, self.window.lambda_hi))
        object.__setattr__(self, "window", tuple(float(x) for x in self.window))
        if not pal or any(c not in (OPEN, CLOSED) for c in pal):
            raise UsageError("palette must be a non-empty sequence of 'O'/'C'")
        if self.monochromatic and len(set(pal)) != 1:
            raise UsageError("a monochromatic palette has a single colour")
        if not self.radii:
            raise UsageError("need at least one radius pair")
        for a, b in self.radii:
            if not 0 <= a <= b:
                raise UsageError("radius pairs need 0 <= r <= R")
        lo, hi = self.window
        if lo > hi:
            raise UsageError("window needs lambda <= lambda'")
        if self.samples < 1:
            raise UsageError("need at least one sample")

    @property
    def k(self):
        return len(self.palette)

    @property
    def static(self):
        return self.window[0] == self.window[1]

    @property
    def alternating(self):
        k = self.k
        return k % 2 == 0 and all(self.palette[i] != self.palette[(i + 1) % k] for i in range(k))


@dataclass(frozen=True)
class ArmEstimate:
    """Hit counts per radius pair, with exact 95% intervals."""

    radii: tuple
    hits: tuple
    samples: int

    @property
    def frequency(self):
        return tuple(h / self.samples for h in self.hits)

    @property
    def intervals(self):
        return tuple(binomial_interval(h, self.samples) for h in self.hits)

    def rows(self):
        for (r, R), h, f, (lo, hi) in zip(self.radii, self.hits, self.frequency, self.intervals):
            yield {"r": r, "R": R, "hits": h, "samples": self.samples,
                   "frequency": f, "ci_lo": lo, "ci_hi": hi}


def _arm_setup(spec, geometry, cal):
    if geometry.spec.kind != TRIANGULAR:
        raise UsageError("arm events are implemented for the triangular site lattice")
    eta = geometry.eta
    inner = np.array([_sites(a, eta) for a, _ in spec.radii], dtype=np.int64)
    outer = np.array([_sites(b, eta) for _, b in spec.radii], dtype=np.int64)
    if outer.max() > geometry.side // 2:
        raise UsageError("outer radius exceeds the domain half-side")
    if spec.k > 1 and np.any((inner < 1) & (inner < outer)):
        if not (spec.k == 4 and spec.alternating and spec.static):
            raise UsageError("multi-arm events need an inner radius of at least one mesh step "
                             "(a single site is allowed for the static alternating 4-arm event)")
    palette = np.array([1 if c == OPEN else 0 for c in spec.palette], dtype=np.int64)
    p_lo = lambda_to_p(spec.window[0], cal)
    p_hi = lambda_to_p(spec.window[1], cal)
    return inner, outer, palette, p_lo, p_hi


def arm_probability(spec, geometry, cal, seed):
    """Monte Carlo frequency of the arm event between concentric box boundaries.

    Each sample draws fresh labels on the box of radius ``max R`` around a
    site; a pair with ``r == R`` counts as a hit.
    """
    inner, outer, palette, p_lo, p_hi = _arm_setup(spec, geometry, cal)
    hits = _arms.arm_hits(as_seed(seed), int(spec.samples), int(outer.max()), inner, outer,
                          palette, spec.alternating, p_lo, p_hi)
    return ArmEstimate(spec.radii, tuple(int(h) for h in hits), int(spec.samples))


def fit_exponent(estimate, eta=None, min_scale=None):
    """Arm exponent from a family sharing one inner radius: ``-slope`` of
    ``log frequency`` against ``log R``, with its standard error.

    Pairs with ``R`` below ``min_scale`` (default ``4 eta`` when ``eta`` is
    given) and pairs without hits are dropped.
    """
    if min_scale is None:
        min_scale = 4 * eta if eta is not None else 0.0
    pts = [(R, f) for (r, R), f in zip(estimate.radii, estimate.frequency)
           if R >= min_scale and R > r and f > 0]
    if len(pts) < 2:
        raise FitError("need at least two usable radius pairs")
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    if np.ptp(x) == 0:
        raise FitError("radii are degenerate")
    fit = linregress(x, y)
    return -float(fit.slope), float(fit.stderr) if len(pts) > 2 else 0.0


@dataclass(frozen=True)
class StabilityRatio:
    """Near-critical over critical frequency at one radius pair.

    ``interval`` is a 95% normal interval for the log ratio that accounts
    for the pairing; ``unbounded`` marks pairs without critical hits.
    """

    r: float
    R: float
    critical: int
    near: int
    both: int
    samples: int
    ratio: float
    interval: tuple
    unbounded: bool


def stability_ratio(spec, geometry, cal, seed):
    """Paired near-critical/critical arm frequencies on shared labels.

    The critical event uses the threshold ``1/2`` for both colours; with
    ``lambda = lambda' = 0`` both events coincide and every ratio is 1.
    """
    inner, outer, palette, p_lo, p_hi = _arm_setup(spec, geometry, cal)
    n = int(spec.samples)
    out = _arms.paired_arm_hits(as_seed(seed), n, int(outer.max()), inner, outer,
                                palette, spec.alternating, p_lo, p_hi)
    result = []
    for q, (r, R) in enumerate(spec.radii):
        c, nc, both = (int(v) for v in out[:, q])
        if c == 0:
            result.append(StabilityRatio(r, R, c, nc, both, n, math.inf, (0.0, math.inf), True))
            continue
        ratio = nc / c
        if nc == 0:
            result.append(StabilityRatio(r, R, c, nc, both, n, 0.0, (0.0, 0.0), False))
            continue
        pc, pn, pb = c / n, nc / n, both / n
        var = (1 - pn) / (n * pn) + (1 - pc) / (n * pc) - 2 * (pb - pn * pc) / (n * pn * pc)
        half = 1.96 * math.sqrt(max(var, 0.0))
        result.append(StabilityRatio(r, R, c, nc, both, n, ratio,
                                     (ratio * math.exp(-half), ratio * math.exp(half)), False))
    return result


def stability_spread(ratios):
    """``max / min`` of the bounded ratios (``inf`` if any bounded ratio is 0)."""
    vals = [s.ratio for s in ratios if not s.unbounded]
    if not vals:
        return math.nan
    lo = min(vals)
    return math.inf if lo == 0 else max(vals) / lo


# ---------------------------------------------------------------- cluster volumes


@dataclass(frozen=True)
class VolumeReport:
    """Clusters of diameter at least ``rho`` and their volume ratios."""

    rho: float
    zeta: float
    r: float
    cluster_ids: np.ndarray = field(repr=False)
    ratios: np.ndarray = field(repr=False)

    @property
    def empty(self):
        return self.ratios.size == 0

    @property
    def min_ratio(self):
        return float(self.ratios.min()) if self.ratios.size else math.nan

    @property
    def passed(self):
        return int(np.count_nonzero(self.ratios >= 1.0))

    @property
    def pass_fraction(self):
        return self.passed / self.ratios.size if self.ratios.size else math.nan


@njit(cache=True)
def _square_counts(cid, ncl, L, rs, shift):
    # number of distinct r-squares met by each cluster
    nb = (L + rs - 1) // rs + 1
    seen = np.full(nb * nb, -1, dtype=np.int64)
    counts = np.zeros(ncl, dtype=np.int64)
    # visit sites cluster by cluster through a counting sort
    start = np.zeros(ncl + 1, dtype=np.int64)
    for s in range(cid.shape[0]):
        if cid[s] >= 0:
            start[cid[s] + 1] += 1
    for c in range(ncl):
        start[c + 1] += start[c]
    fill = start[:-1].copy()
    order = np.empty(start[ncl], dtype=np.int64)
    for s in range(cid.shape[0]):
        c = cid[s]
        if c >= 0:
            order[fill[c]] = s
            fill[c] += 1
    for c in range(ncl):
        for q in range(start[c], start[c + 1]):
            s = order[q]
            i = s % L
            j = s // L
            b = ((j + shift) // rs) * nb + (i + shift) // rs
            if seen[b] != c:
                seen[b] = c
                counts[c] += 1
    return counts


def cluster_volume_law(config, rho, zeta, r=None):
    """Volume ratios of the clusters of diameter at least ``rho``.

    The ratio is ``size / (rho/eta)^(91/48 - zeta)``, or with ``r`` given the
    number of ``r``-squares met over ``(rho/r)^(91/48 - zeta)``; a cluster
    passes when its ratio is at least 1.
    """
    g = config.geometry
    if not 0 < zeta < CLUSTER_DIMENSION:
        raise UsageError("zeta must lie in (0, 91/48)")
    if not 0 < rho <= 2 * g.m:
        raise UsageError("rho must lie in (0, domain side]")
    lab = clusters_at(g, config)
    big = np.nonzero(lab.diameter >= rho - 1e-12)[0]
    power = CLUSTER_DIMENSION - zeta
    if r is None:
        ratios = lab.sizes[big] / (rho / g.eta) ** power
    else:
        rs = _sites(r, g.eta)
        if rs < 1 or r > rho:
            raise UsageError("need eta <= r <= rho")
        counts = _square_counts(lab.cluster_id, lab.count, g.side, rs, 0)
        ratios = counts[big] / (rho / r) ** power
    return VolumeReport(float(rho), float(zeta), None if r is None else float(r),
                        big.astype(np.int64), np.asarray(ratios, dtype=np.float64))


# ---------------------------------------------------------------- degree census


@njit(cache=True)
def _unwrap_tree(parent, order, L, torus):
    # unwrapped coordinates along the tree and the bounding box of each subtree
    n = parent.shape[0]
    ux = np.empty(n, dtype=np.int64)
    uy = np.empty(n, dtype=np.int64)
    h = L // 2
    for q in range(n):
        v = order[q]
        u = parent[v]
        i = v % L
        j = v // L
        if u < 0:
            ux[v] = i
            uy[v] = j
            continue
        di = i - u % L
        dj = j - u // L
        if torus:
            di = (di + h) % L - h
            dj = (dj + h) % L - h
        ux[v] = ux[u] + di
        uy[v] = uy[u] + dj
    x0 = ux.copy()
    x1 = ux.copy()
    y0 = uy.copy()
    y1 = uy.copy()
    for q in range(n - 1, 0, -1):
        v = order[q]
        u = parent[v]
        if u < 0:
            continue
        x0[u] = min(x0[u], x0[v])
        x1[u] = max(x1[u], x1[v])
        y0[u] = min(y0[u], y0[v])
        y1[u] = max(y1[u], y1[v])
    return ux, uy, x0, x1, y0, y1


@njit(cache=True, inline="always")
def _rel(a, o, L, torus, lo):
    d = a - o
    if torus:
        d = (d - lo) % L + lo
    return d


@njit(cache=True, inline="always")
def _in_box(s, ox, oy, L, torus, lo, hi):
    dx = _rel(s % L, ox, L, torus, lo)
    if dx < lo or dx >= hi:
        return False
    dy = _rel(s // L, oy, L, torus, lo)
    return lo <= dy < hi


@njit(cache=True)
def _census(parent, cstart, cadj, ux, uy, x0, x1, y0, y1, L, torus, rs, es, shift,
            k0, nbx):
    n = parent.shape[0]
    nbox = nbx * nbx
    degree = np.zeros(nbox, dtype=np.int64)
    ngroups = np.zeros(nbox, dtype=np.int64)
    biggest = np.zeros(nbox, dtype=np.int64)
    singles = np.zeros(nbox, dtype=np.int64)
    pairs = np.zeros(nbox, dtype=np.int64)
    cross_box = np.empty(n, dtype=np.int64)
    cross_top = np.empty(n, dtype=np.int64)
    cross_group = np.empty(n, dtype=np.int64)
    ncross = 0
    mark = np.full(n, -1, dtype=np.int64)
    wmark = np.full(n, -1, dtype=np.int64)
    wtop = np.empty(n, dtype=np.int64)
    walk = np.empty(n, dtype=np.int64)
    stack = np.empty(n, dtype=np.int64)
    tops = np.empty(n, dtype=np.int64)
    keys = np.empty(n, dtype=np.int64)
    qlo = -es
    qhi = rs + es
    for by in range(nbx):
        for bx in range(nbx):
            b = by * nbx + bx
            ox = (k0 + bx) * rs + shift
            oy = (k0 + by) * rs + shift
            if torus:
                ox %= L
                oy %= L
            ntop = 0
            for dj in range(rs):
                j = oy + dj
                if torus:
                    j %= L
                elif j < 0 or j >= L:
                    continue
                for di in range(rs):
                    i = ox + di
                    if torus:
                        i %= L
                    elif i < 0 or i >= L:
                        continue
                    u = j * L + i
                    pu = parent[u]
                    for q in range(cstart[u], cstart[u + 1] + 1):
                        # the extra slot stands for the parent
                        if q == cstart[u + 1]:
                            v = pu
                            if v < 0:
                                continue
                        else:
                            v = cadj[q]
                            if v == pu:
                                continue
                        if _in_box(v, ox, oy, L, torus, 0, rs):
                            continue
                        t = v
                        if v == pu:
                            # climb to the component top, reusing earlier climbs in this box
                            nw = 0
                            while True:
                                if wmark[t] == b:
                                    t = wtop[t]
                                    break
                                walk[nw] = t
                                nw += 1
                                pt = parent[t]
                                if pt < 0 or not _in_box(pt, ox, oy, L, torus, qlo, qhi) \
                                        or _in_box(pt, ox, oy, L, torus, 0, rs):
                                    break
                                t = pt
                            for a in range(nw):
                                wmark[walk[a]] = b
                                wtop[walk[a]] = t
                        if mark[t] == b:
                            continue
                        mark[t] = b
                        pt = parent[t]
                        hit = pt >= 0 and not _in_box(pt, ox, oy, L, torus, qlo, qhi)
                        if not hit:
                            # Q in the unwrapped frame of this component
                            ax = ux[t] - _rel(t % L, ox, L, torus, qlo)
                            ay = uy[t] - _rel(t // L, oy, L, torus, qlo)
                            top = 0
                            stack[top] = t
                            top += 1
                            while top > 0 and not hit:
                                top -= 1
                                x = stack[top]
                                for r in range(cstart[x], cstart[x + 1]):
                                    w = cadj[r]
                                    if w == parent[x]:
                                        continue
                                    if not _in_box(w, ox, oy, L, torus, qlo, qhi):
                                        hit = True
                                        break
                                    if _in_box(w, ox, oy, L, torus, 0, rs):
                                        continue
                                    if x0[w] >= ax + qlo and x1[w] < ax + qhi \
                                            and y0[w] >= ay + qlo and y1[w] < ay + qhi:
                                        continue
                                    stack[top] = w
                                    top += 1
                        if hit:
                            tops[ntop] = t
                            ntop += 1
            degree[b] = ntop
            if ntop == 0:
                continue
            # group crossings by the top of their component in the tree within Q
            for a in range(ntop):
                gkey = tops[a]
                while parent[gkey] >= 0 and _in_box(parent[gkey], ox, oy, L, torus, qlo, qhi):
                    gkey = parent[gkey]
                keys[a] = gkey
            ng = 0
            for a in range(ntop):
                first = True
                for c in range(a):
                    if keys[c] == keys[a]:
                        first = False
                        break
                if not first:
                    continue
                ng += 1
                size = 0
                for c in range(ntop):
                    if keys[c] == keys[a]:
                        size += 1
                if size > biggest[b]:
                    biggest[b] = size
                if size == 1:
                    singles[b] += 1
                else:
                    pairs[b] += 1
            ngroups[b] = ng
            for a in range(ntop):
                cross_box[ncross] = b
                cross_top[ncross] = tops[a]
                cross_group[ncross] = keys[a]
                ncross += 1
    return (degree, ngroups, biggest, singles, pairs,
            cross_box[:ncross].copy(), cross_top[:ncross].copy(), cross_group[:ncross].copy())


@dataclass(frozen=True, eq=False)
class DegreeCensus:
    """Annulus degrees of the boxes of side ``r`` inside concentric boxes of radius ``rho``.

    Per box: ``degree`` counts the components of the tree restricted to the
    annulus that join the inner box to the outside of the outer box;
    crossings are grouped when connected inside the outer box.
    ``crossings`` rows are ``(box, component top, group key)``.
    """

    r: float
    rho: float
    shift: float
    boxes_per_side: int
    origin: int
    degree: np.ndarray = field(repr=False)
    group_count: np.ndarray = field(repr=False)
    largest_group: np.ndarray = field(repr=False)
    singleton_groups: np.ndarray = field(repr=False)
    multi_groups: np.ndarray = field(repr=False)
    crossings: np.ndarray = field(repr=False)

    @property
    def box_count(self):
        return int(self.degree.shape[0])

    def at_least(self, d):
        return int(np.count_nonzero(self.degree >= d))

    @property
    def counts(self):
        """Boxes with degree at least ``d`` for ``d = 2..6``."""
        return {d: self.at_least(d) for d in range(2, 7)}

    @property
    def pinching(self):
        """Boxes with two groups of at least two crossings each."""
        return self.multi_groups >= 2

    @property
    def figure_six(self):
        """Boxes of type (2,1): a group of two or more plus a singleton, not pinching."""
        return (self.multi_groups == 1) & (self.singleton_groups >= 1)

    @property
    def pinching_count(self):
        return int(np.count_nonzero(self.pinching))

    @property
    def figure_six_count(self):
        return int(np.count_nonzero(self.figure_six))

    def box_index(self, b):
        """Grid index ``(bx, by)`` of box ``b`` (offset by ``origin``)."""
        b = np.asarray(b)
        return b % self.boxes_per_side + self.origin, b // self.boxes_per_side + self.origin

    def trunk(self):
        return frozenset(zip(*(v.tolist() for v in self.box_index(np.nonzero(self.degree >= 2)[0]))))


def _census_setup(tree, r, rho, shift):
    g = tree.geometry
    L = g.side
    rs = _sites(r, g.eta)
    ps = _sites(rho, g.eta)
    if rs < 2:
        raise UsageError("boxes need a side of at least two sites")
    if 4 * r > rho + 1e-12:
        raise UsageError("need r <= rho/4")
    if rho > g.m + 1e-12 or (g.spec.torus and 2 * ps >= L):
        raise UsageError("rho must be smaller than the domain half-side")
    if L % rs:
        raise UsageError("the box side must divide the domain side")
    sh = int(round(shift / g.eta)) % rs
    if g.spec.torus:
        k0, nbx = 0, L // rs
    else:
        k0 = -1 if sh else 0
        nbx = (L - 1 - sh) // rs - k0 + 1
    return g, L, rs, ps - rs // 2, sh, k0, nbx


def degree_census(tree, r, rho, shift=0.0):
    """Annulus-degree census of ``tree`` over the boxes of side ``r``.

    Boxes tile the domain from its lower-left corner, moved by ``shift``
    (embedding units, rounded to sites). The outer box of a box is the box
    of radius ``rho`` with the same centre.
    """
    g, L, rs, es, sh, k0, nbx = _census_setup(tree, r, rho, shift)
    parent = tree.parent
    cstart, cadj = tree.adjacency
    ux, uy, x0, x1, y0, y1 = _unwrap_tree(parent, tree.bfs_order, L, g.spec.torus)
    out = _census(parent, cstart, cadj, ux, uy, x0, x1, y0, y1, L, g.spec.torus,
                  rs, es, sh, k0, nbx)
    degree, ngroups, biggest, singles, multi, cb, ct, cg = out
    crossings = np.stack([cb, ct, cg], axis=1) if cb.size else np.zeros((0, 3), dtype=np.int64)
    return DegreeCensus(float(r), float(rho), sh * g.eta, nbx, k0, degree, ngroups, biggest,
                        singles, multi, crossings)


def trunk_boxes(tree, rho, r, shift=0.0):
    """Grid indices ``(bx, by)`` of the boxes with annulus degree at least 2."""
    return degree_census(tree, r, rho, shift).trunk()


# ---------------------------------------------------------------- box counting


@dataclass(frozen=True)
class BoxCountCurve:
    """Trunk box counts ``N(r)`` at one outer radius ``rho``."""

    rho: float
    scales: tuple
    counts: tuple

    def fit(self):
        return minkowski_fit(self)


def trunk_curve(tree, rho, scales, shift=0.0):
    """Trunk box counts of ``tree`` over several box sides."""
    scales = tuple(float(r) for r in scales)
    counts = tuple(len(trunk_boxes(tree, rho, r, shift)) for r in scales)
    return BoxCountCurve(float(rho), scales, counts)


def minkowski_fit(curve):
    """Least-squares slope of ``log N(r)`` against ``log(1/r)`` and its standard error."""
    scales = np.asarray(curve.scales, dtype=float)
    counts = np.asarray(curve.counts, dtype=float)
    if scales.size < 3:
        raise FitError("need at least three scales")
    if np.any(scales <= 0) or np.any(counts <= 0):
        raise FitError("scales and counts must be positive")
    if np.unique(scales).size < scales.size:
        raise FitError("scales must be distinct")
    fit = linregress(-np.log(scales), np.log(counts))
    return float(fit.slope), float(fit.stderr)
