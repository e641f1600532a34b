import numpy as np
import pytest

from oracles import frechet_brute

from nearcrit import LatticeSpec, build_geometry, sample_labels
from nearcrit.errors import UsageError
from nearcrit.forest import COMPACTIFIED, PLANE, TORUS_FLAT, PolylinePath, mst_kruskal
from nearcrit.treespace import (
    d_omega_truncated,
    extract_sample,
    frechet,
    hausdorff,
    point_distance,
    tree_dist,
)


def _poly(rng, n, metric=PLANE, period=None):
    return PolylinePath(rng.normal(size=(n, 2)), metric, None, period)


def test_frechet_matches_coupling_enumeration():
    rng = np.random.default_rng(0)
    for n in range(1, 6):
        for m in range(1, 6):
            p, q = _poly(rng, n), _poly(rng, m)
            d = np.linalg.norm(p.points[:, None, :] - q.points[None, :, :], axis=-1)
            assert frechet(p, q) == frechet_brute(d)


def test_frechet_symmetry_and_bounds():
    rng = np.random.default_rng(1)
    for _ in range(50):
        p, q = _poly(rng, 7), _poly(rng, 4)
        assert frechet(p, q) == frechet(q, p)
        assert frechet(p, p) == 0.0
        # Fréchet dominates Hausdorff and the endpoint distances
        f = frechet(p, q)
        assert f >= hausdorff(p, q) - 1e-12
        assert f >= np.linalg.norm(p.points[0] - q.points[0]) - 1e-12


def test_metric_mismatch():
    rng = np.random.default_rng(2)
    with pytest.raises(UsageError):
        frechet(_poly(rng, 3), _poly(rng, 3, TORUS_FLAT, 2.0))
    with pytest.raises(UsageError):
        frechet(_poly(rng, 3, TORUS_FLAT, 2.0), _poly(rng, 3, TORUS_FLAT, 4.0))
    with pytest.raises(UsageError):
        PolylinePath(np.zeros((2, 2)), TORUS_FLAT)


def test_point_distances():
    assert point_distance((0.9, 0.0), (-0.9, 0.0), TORUS_FLAT, 2.0) == pytest.approx(0.2)
    assert point_distance((0.9, 0.0), (-0.9, 0.0)) == pytest.approx(1.8)
    # chordal distance is bounded by the sphere diameter
    assert point_distance((1e6, 0.0), (-1e6, 0.0), COMPACTIFIED) <= 2.0
    assert point_distance((0.0, 0.0), (1.0, 0.0), COMPACTIFIED) == pytest.approx(2 / np.sqrt(2))


@pytest.fixture(scope="module")
def mst():
    g = build_geometry(LatticeSpec("triangular-site", 8, 1.0, "torus"))
    return mst_kruskal(g, sample_labels(g, 3))


def test_extracted_tree_distance_to_itself(mst):
    tuples = [((-0.5, -0.5), (0.5, 0.25), (0.0, 0.75))]
    f = extract_sample(mst, tuples, 3)
    assert sorted(f.trees) == [1, 2, 3]
    assert len(f.trees[2]) == 3
    for t in f.trees[3]:
        lo, hi = tree_dist(t, t)
        assert lo == hi == 0.0
    d = d_omega_truncated(f, f)
    assert d.upper == 0.0 and d.lower == 0.0


def test_tree_dist_bounds_for_different_trees(mst):
    g = mst.geometry
    other = mst_kruskal(g, sample_labels(g, 4))
    tuples = [((-0.5, -0.5), (0.5, 0.25))]
    a = extract_sample(mst, tuples, 2)
    b = extract_sample(other, tuples, 2)
    lo, hi = tree_dist(a.trees[2][0], b.trees[2][0])
    assert 0.0 <= lo <= hi
    d = d_omega_truncated(a, b)
    assert 0.0 <= d.lower <= d.upper
    with pytest.raises(UsageError):
        d_omega_truncated(a, extract_sample(other, [((0.0, 0.0), (0.5, 0.5))], 2))


def test_extract_validation(mst):
    with pytest.raises(UsageError):
        extract_sample(mst, [((0.0, 0.0),)], 1)
    with pytest.raises(UsageError):
        extract_sample(mst, [((0.0, 0.0), (0.1, 0.1), (0.2, 0.2))], 2)
