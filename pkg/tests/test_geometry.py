import numpy as np
import pytest

from nearcrit import BOX, SQUARE, TORUS, TRIANGULAR, LatticeSpec, box_cover, build_geometry, neighbors
from nearcrit.errors import ConfigurationError, UsageError


def test_site_and_edge_counts():
    g = build_geometry(LatticeSpec(TRIANGULAR, 4, 1.0, TORUS))
    assert g.side == 8 and g.site_count == 64
    # three forward edges per site on the triangular torus
    assert g.edge_count == 3 * 64
    b = build_geometry(LatticeSpec(SQUARE, 4, 1.0, BOX))
    assert b.edge_count == 2 * 8 * 7


def test_neighbor_tables_are_symmetric():
    for kind in (TRIANGULAR, SQUARE):
        for domain in (TORUS, BOX):
            g = build_geometry(LatticeSpec(kind, 4, 0.75, domain))
            for s in range(g.site_count):
                for t in neighbors(g, s):
                    assert s in neighbors(g, t)
            a, b = g.edges[:, 0], g.edges[:, 1]
            assert np.all(a != b)
            # edge_of agrees with the edge endpoints from both sides
            for e, (x, y) in enumerate(g.edges):
                assert e in g.edge_of[x] and e in g.edge_of[y]


def test_box_boundary_degree():
    g = build_geometry(LatticeSpec(TRIANGULAR, 4, 1.0, BOX))
    assert len(neighbors(g, 0)) == 2
    assert len(neighbors(g, g.side - 1)) == 3
    assert len(neighbors(g, g.site_at(3, 3))) == 6


def test_positions_and_wrap():
    g = build_geometry(LatticeSpec(TRIANGULAR, 4, 1.0, TORUS))
    assert np.allclose(g.positions([0]), [[-1.0, -1.0]])
    assert g.site_at(-1, 0) == g.side - 1
    assert g.distance(g.positions(0), g.positions(g.side - 1)) == pytest.approx(g.eta)
    assert g.nearest_site((0.0, 0.0)) == g.site_at(4, 4)


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        LatticeSpec("hexagonal", 4)
    with pytest.raises(ConfigurationError):
        LatticeSpec(TRIANGULAR, 4, 0.3)
    with pytest.raises(ConfigurationError):
        LatticeSpec(TRIANGULAR, 1)
    g = build_geometry(LatticeSpec(TRIANGULAR, 4, 1.0, BOX))
    with pytest.raises(UsageError):
        g.site_at(-1, 0)


def test_box_cover_margin_and_nesting():
    g = build_geometry(LatticeSpec(TRIANGULAR, 16, 1.0, TORUS))
    fine = box_cover(g, 0.25)
    coarse = box_cover(g, 0.5)
    # every site is at least r/4 inside its own square
    assert fine.margin(np.arange(g.site_count)).min() >= 0.25 / 4 - 1e-12
    # each fine square lies inside the coarse square of any of its sites
    for sq in range(fine.count):
        sites = np.nonzero(fine.cell_of_site == sq)[0]
        if sites.size == 0:
            continue
        fb = fine.bounds(sq)
        cb = coarse.bounds(coarse.square_of(sites[0]))
        assert cb[0] <= fb[0] and cb[1] <= fb[1] and fb[2] <= cb[2] and fb[3] <= cb[3]
    with pytest.raises(UsageError):
        box_cover(g, 0.3)
