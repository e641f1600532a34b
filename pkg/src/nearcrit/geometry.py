"""Lattices, domains and dyadic box grids.

Sites live on an ``L x L`` integer grid with ``L = 2M/eta``; site ``(i, j)``
has id ``j * L + i`` and sits at ``(-M + i*eta, -M + j*eta)`` in embedding
units. The triangular lattice is the sheared square grid carrying the extra
diagonal ``(1, -1)``; in these sheared coordinates adjacent sites are one
mesh apart in the max norm, and the torus stays the square ``[-M, M)^2``.
``rhombus_positions`` gives the equilateral picture for rendering.
"""

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ConfigurationError, UsageError

TRIANGULAR = "triangular-site"
SQUARE = "square-bond"
TORUS = "torus"
BOX = "box"

# Counter-clockwise in the rhombus embedding, starting east.
TRIANGULAR_OFFSETS = np.array(
    [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)], dtype=np.int64
)
# Counter-clockwise, starting east.
SQUARE_OFFSETS = np.array([(1, 0), (0, 1), (-1, 0), (0, -1)], dtype=np.int64)


def _exact(value):
    if isinstance(value, float):
        return Fraction(value).limit_denominator(1 << 40)
    return Fraction(value)


@dataclass(frozen=True)
class LatticeSpec:
    """Lattice kind, mesh ``1/n`` and domain ``[-m, m]^2`` (torus or box)."""

    kind: str
    n: int
    m: float = 1.0
    domain: str = TORUS

    def __post_init__(self):
        if self.kind not in (TRIANGULAR, SQUARE):
            raise ConfigurationError(f"unknown lattice kind {self.kind!r}")
        if self.domain not in (TORUS, BOX):
            raise ConfigurationError(f"unknown domain {self.domain!r}")
        if int(self.n) != self.n or self.n < 2:
            raise ConfigurationError("mesh must be 1/N with integer N >= 2")
        if self.m <= 0:
            raise ConfigurationError("half-side M must be positive")
        side = 2 * _exact(self.m) * int(self.n)
        if side.denominator != 1:
            raise ConfigurationError("2M/eta must be an integer")
        object.__setattr__(self, "n", int(self.n))

    @property
    def eta(self):
        return 1.0 / self.n

    @property
    def side(self):
        """Number of sites along each axis."""
        return int(2 * _exact(self.m) * self.n)

    @property
    def torus(self):
        return self.domain == TORUS

    @property
    def carrier(self):
        """``"site"`` for triangular-site, ``"edge"`` for square-bond."""
        return "site" if self.kind == TRIANGULAR else "edge"


@dataclass(frozen=True, eq=False)
class Geometry:
    """Immutable neighbor, edge and position tables for one lattice spec.

    Attributes
    ----------
    nbr : (site_count, degree) int32
        Neighbor ids in the cyclic order of the offsets, ``-1`` if absent.
    edges : (edge_count, 2) int32
        Endpoints of each edge; edges are numbered by (site, forward slot).
    edge_of : (site_count, degree) int32
        Edge id joining a site to each neighbor slot, ``-1`` if absent.
    """

    spec: LatticeSpec
    offsets: np.ndarray = field(repr=False)
    nbr: np.ndarray = field(repr=False)
    edges: np.ndarray = field(repr=False)
    edge_of: np.ndarray = field(repr=False)

    @property
    def side(self):
        return self.spec.side

    @property
    def eta(self):
        return self.spec.eta

    @property
    def m(self):
        return float(self.spec.m)

    @property
    def site_count(self):
        return self.nbr.shape[0]

    @property
    def edge_count(self):
        return self.edges.shape[0]

    @property
    def degree(self):
        return self.offsets.shape[0]

    @property
    def carrier_count(self):
        return self.site_count if self.spec.carrier == "site" else self.edge_count

    def coords(self, sites):
        """Integer grid coordinates ``(i, j)`` of site ids."""
        sites = np.asarray(sites)
        return sites % self.side, sites // self.side

    def site_at(self, i, j):
        """Site id at grid coordinates, wrapping on the torus."""
        i = np.asarray(i)
        j = np.asarray(j)
        if self.spec.torus:
            i = i % self.side
            j = j % self.side
        elif np.any((i < 0) | (i >= self.side) | (j < 0) | (j >= self.side)):
            raise UsageError("grid coordinates outside the box")
        return j * self.side + i

    def positions(self, sites=None):
        """Embedding coordinates, shape ``(..., 2)``."""
        if sites is None:
            sites = np.arange(self.site_count)
        i, j = self.coords(sites)
        return np.stack([-self.m + i * self.eta, -self.m + j * self.eta], axis=-1)

    def rhombus_positions(self, sites=None):
        """Equilateral embedding of the triangular lattice (rendering only)."""
        p = self.positions(sites)
        if self.spec.kind == TRIANGULAR:
            x = p[..., 0] + 0.5 * (p[..., 1] + self.m)
            y = -self.m + (p[..., 1] + self.m) * np.sqrt(3.0) / 2.0
            p = np.stack([x, y], axis=-1)
        return p

    def nearest_site(self, point):
        """Site closest to a point in embedding coordinates."""
        x, y = point
        i = int(np.rint((x + self.m) / self.eta))
        j = int(np.rint((y + self.m) / self.eta))
        if self.spec.torus:
            return int(self.site_at(i, j))
        i = min(max(i, 0), self.side - 1)
        j = min(max(j, 0), self.side - 1)
        return int(self.site_at(i, j))

    def displacement(self, a, b):
        """Vector from ``a`` to ``b`` (points, shape (..., 2)), minimal image on the torus."""
        d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
        if self.spec.torus:
            w = 2.0 * self.m
            d = d - w * np.rint(d / w)
        return d

    def distance(self, a, b):
        """Euclidean distance between points, minimal image on the torus."""
        return np.hypot(*np.moveaxis(self.displacement(a, b), -1, 0))


def build_geometry(spec):
    """Build neighbor, edge and position tables for ``spec``."""
    if not isinstance(spec, LatticeSpec):
        raise ConfigurationError("build_geometry expects a LatticeSpec")
    L = spec.side
    offsets = TRIANGULAR_OFFSETS if spec.kind == TRIANGULAR else SQUARE_OFFSETS
    deg = offsets.shape[0]
    jj, ii = np.divmod(np.arange(L * L, dtype=np.int64), L)
    nbr = np.empty((L * L, deg), dtype=np.int32)
    for k, (di, dj) in enumerate(offsets):
        ni, nj = ii + di, jj + dj
        if spec.torus:
            nbr[:, k] = (nj % L) * L + (ni % L)
        else:
            ok = (ni >= 0) & (ni < L) & (nj >= 0) & (nj < L)
            nbr[:, k] = np.where(ok, nj * L + ni, -1)
    # forward slots: the first half of the cyclic order
    forward = deg // 2
    valid = nbr[:, :forward] >= 0
    ids = np.full((L * L, forward), -1, dtype=np.int64)
    ids[valid] = np.arange(int(valid.sum()))
    edges = np.empty((int(valid.sum()), 2), dtype=np.int32)
    src = np.repeat(np.arange(L * L), forward).reshape(L * L, forward)
    edges[:, 0] = src[valid]
    edges[:, 1] = nbr[:, :forward][valid]
    edge_of = np.full((L * L, deg), -1, dtype=np.int32)
    edge_of[:, :forward] = ids
    # backward slot k + forward points to the forward edge of the neighbor
    for k in range(forward):
        back = k + forward
        has = nbr[:, back] >= 0
        edge_of[has, back] = ids[nbr[has, back], k]
    for a in (offsets, nbr, edges, edge_of):
        a.setflags(write=False)
    return Geometry(spec, offsets, nbr, edges, edge_of)


def neighbors(geometry, site):
    """Neighbors of ``site`` in the fixed counter-clockwise slot order."""
    if not 0 <= int(site) < geometry.site_count:
        raise UsageError(f"site {site} out of range")
    row = geometry.nbr[int(site)]
    return [int(s) for s in row if s >= 0]


def _dyadic_exponent(r):
    fr = _exact(r)
    if fr <= 0 or fr.numerator != 1 or fr.denominator & (fr.denominator - 1):
        return None
    return fr.denominator.bit_length() - 1


@dataclass(frozen=True, eq=False)
class BoxGrid:
    """Overlapping r-squares, one per r/2-cell.

    The square attached to the cell ``[a, a + r/2)`` (per axis, ``a`` a multiple
    of ``r/2``) is ``[a - r/4, a + 3r/4)``, so every site of the cell is at
    distance at least ``r/4`` from the square boundary, and squares of dyadic
    scales are nested.
    """

    geometry: Geometry = field(repr=False)
    r: float
    cells: int
    origin: int
    cell_of_site: np.ndarray = field(repr=False)
    offset: float = 0.0

    @property
    def count(self):
        return self.cells * self.cells

    def cell_xy(self, square):
        square = np.asarray(square)
        return square % self.cells + self.origin, square // self.cells + self.origin

    def bounds(self, square):
        """``(x0, y0, x1, y1)`` of r-squares (half-open, embedding units)."""
        cx, cy = self.cell_xy(square)
        h = self.r / 2.0
        q = self.r / 4.0
        o = self.offset
        return np.stack([cx * h - q + o, cy * h - q + o, cx * h + 3 * q + o, cy * h + 3 * q + o],
                        axis=-1)

    def square_of(self, sites):
        return self.cell_of_site[np.asarray(sites)]

    def site_ranges(self, square):
        """Unwrapped grid index ranges ``(i0, i1, j0, j1)`` (half-open) of r-squares."""
        b = self.bounds(square)
        g = self.geometry
        lo = np.ceil((b[..., :2] + g.m) / g.eta - 1e-9).astype(np.int64)
        hi = np.ceil((b[..., 2:] + g.m) / g.eta - 1e-9).astype(np.int64)
        return lo[..., 0], hi[..., 0], lo[..., 1], hi[..., 1]

    def margin(self, sites):
        """Distance from each site to the boundary of its r-square."""
        p = self.geometry.positions(sites)
        b = self.bounds(self.square_of(sites))
        return np.min(
            np.stack([p[..., 0] - b[..., 0], b[..., 2] - p[..., 0],
                      p[..., 1] - b[..., 1], b[..., 3] - p[..., 1]], axis=-1),
            axis=-1,
        )


def box_cover(geometry, r, offset=0.0):
    """Dyadic covering at scale ``r``; ``offset`` shifts the grid (diagnostics only)."""
    k = _dyadic_exponent(r)
    if k is None:
        raise UsageError(f"scale {r} is not a dyadic 2^-k")
    if r > 2 * geometry.m:
        raise UsageError("scale exceeds the domain side")
    h = r / 2.0
    p = geometry.positions() - offset
    cx = np.floor(p[:, 0] / h + 1e-12).astype(np.int64)
    cy = np.floor(p[:, 1] / h + 1e-12).astype(np.int64)
    origin = int(min(cx.min(), cy.min()))
    cells = int(max(cx.max(), cy.max())) - origin + 1
    cell = (cy - origin) * cells + (cx - origin)
    cell.setflags(write=False)
    return BoxGrid(geometry, float(r), cells, origin, cell, float(offset))
