import math
from collections import deque

import numpy as np
import pytest

from oracles import arm_event_brute

from nearcrit import Calibration, LatticeSpec, build_geometry, config_at, sample_labels
from nearcrit import _arms
from nearcrit.errors import FitError, UsageError
from nearcrit.forest import mst_kruskal
from nearcrit.stats import (
    ArmEstimate,
    ArmSpec,
    BoxCountCurve,
    arm_probability,
    cluster_volume_law,
    degree_census,
    fit_exponent,
    minkowski_fit,
    stability_ratio,
    stability_spread,
    trunk_boxes,
    trunk_curve,
)

CAL = Calibration("theoretical", 0.05)


# ---------------------------------------------------------------- arm events


def test_arm_kernel_matches_path_enumeration():
    rng = np.random.default_rng(0)
    R = 3
    S = 2 * R + 1
    seen = np.zeros(S * S + 1, np.int64)
    queue = np.empty(S * S, np.int64)
    hits = total = 0
    for trial in range(240):
        lab = rng.random(S * S)
        p_lo, p_hi = [(0.5, 0.5), (0.4, 0.6), (0.35, 0.45), (0.6, 0.7)][trial % 4]
        primal = lab <= p_hi
        dual = lab > p_lo
        for pal in ([1], [0], [1, 0], [1, 0, 1, 0], [1, 1, 0], [1, 1]):
            k = len(pal)
            alt = k % 2 == 0 and all(pal[i] != pal[(i + 1) % k] for i in range(k))
            for r in (1, 2):
                got = _arms.arm_event(primal, dual, S, r, R, np.array(pal, np.int64), alt,
                                      p_lo == p_hi, seen, queue)
                want = arm_event_brute(primal, dual, S, r, R, pal)
                assert got == want, (trial, pal, r)
                hits += want
                total += 1
    # the comparison must exercise both outcomes
    assert 0.3 < hits / total < 0.95


def test_site_centred_four_arms_need_two_crossings():
    # a plus-shaped open cross from the centre gives four alternating arms
    R = 3
    S = 2 * R + 1
    c = S // 2
    primal = np.zeros(S * S, np.bool_)
    for d in range(R + 1):
        primal[c * S + c + d] = primal[c * S + c - d] = True
    seen = np.zeros(S * S + 1, np.int64)
    queue = np.empty(S * S, np.int64)
    pal = np.array([1, 0, 1, 0], np.int64)
    assert _arms.arm_event(primal, ~primal, S, 0, R, pal, True, True, seen, queue)
    # a single horizontal arm is not enough
    primal[c * S + c - 1 :: -1] = False
    primal[c * S + c] = True
    assert not _arms.arm_event(primal, ~primal, S, 0, R, pal, True, True, seen, queue)


def test_arm_probability_is_deterministic_and_monotone():
    g = build_geometry(LatticeSpec("triangular-site", 16, 1.0, "torus"))
    spec = ArmSpec("O", [(0, 0.125), (0, 0.25), (0, 0.5)], samples=400)
    a = arm_probability(spec, g, CAL, 3)
    assert a == arm_probability(spec, g, CAL, 3)
    # nested events: frequencies decrease with the outer radius
    assert a.hits[0] >= a.hits[1] >= a.hits[2] > 0
    rows = list(a.rows())
    assert rows[0]["ci_lo"] <= rows[0]["frequency"] <= rows[0]["ci_hi"]


def test_arm_spec_validation():
    g = build_geometry(LatticeSpec("triangular-site", 16, 1.0, "torus"))
    with pytest.raises(UsageError):
        ArmSpec("OX", [(0, 0.25)])
    with pytest.raises(UsageError):
        ArmSpec("O", [(0.5, 0.25)])
    with pytest.raises(UsageError):
        arm_probability(ArmSpec("OC", [(0, 0.25)]), g, CAL, 0)
    with pytest.raises(UsageError):
        arm_probability(ArmSpec("O", [(0, 2.0)]), g, CAL, 0)
    assert ArmSpec("OCOC", [(0, 0.25)]).alternating
    assert not ArmSpec("OOC", [(0, 0.25)]).alternating


def test_fit_exponent_recovers_a_power_law():
    radii = tuple((0.0, 2.0 ** -k) for k in range(6, 1, -1))
    hits = tuple(int(round(1e6 * (R / radii[0][1]) ** -0.5)) for _, R in radii)
    slope, err = fit_exponent(ArmEstimate(radii, hits, 10 ** 6))
    assert slope == pytest.approx(0.5, abs=1e-3)
    with pytest.raises(FitError):
        fit_exponent(ArmEstimate(radii[:1], hits[:1], 10 ** 6))


def test_static_stability_ratio_is_one():
    g = build_geometry(LatticeSpec("triangular-site", 16, 1.0, "torus"))
    spec = ArmSpec("OCOC", [(0.0625, 0.25), (0.125, 0.5)], (0.0, 0.0), 300)
    ratios = stability_ratio(spec, g, CAL, 1)
    for s in ratios:
        assert s.unbounded or (s.ratio == 1.0 and s.critical == s.near == s.both)
    near = stability_ratio(ArmSpec("OCOC", spec.radii, (-1.0, 1.0), 300), g, CAL, 1)
    # widening the window can only add near-critical hits
    assert all(s.near >= s.critical for s in near)
    assert stability_spread(near) >= 1.0 or math.isnan(stability_spread(near))


# ---------------------------------------------------------------- cluster volumes


def test_volume_law_threshold():
    g = build_geometry(LatticeSpec("triangular-site", 32, 1.0, "torus"))
    view = config_at(sample_labels(g, 2), 0.5)
    rep = cluster_volume_law(view, 0.25, 0.1)
    assert not rep.empty
    from nearcrit.forest import clusters_at

    lab = clusters_at(g, view)
    big = lab.diameter >= 0.25
    assert set(rep.cluster_ids.tolist()) == set(np.nonzero(big)[0].tolist())
    assert np.allclose(rep.ratios, lab.sizes[big] / (8.0 ** (91 / 48 - 0.1)))
    # a larger slack never turns a pass into a failure
    looser = cluster_volume_law(view, 0.25, 0.5)
    assert looser.passed >= rep.passed
    squares = cluster_volume_law(view, 0.25, 0.1, r=0.0625)
    assert squares.ratios.size == rep.ratios.size
    with pytest.raises(UsageError):
        cluster_volume_law(view, 0.25, 0.0)


# ---------------------------------------------------------------- degree census


def _census_brute(tree, r, rho, shift):
    """Degree and group sizes of every box by plain BFS."""
    g = tree.geometry
    L = g.side
    rs = round(r / g.eta)
    es = round(rho / g.eta) - rs // 2
    sh = round(shift / g.eta) % rs
    torus = g.spec.torus
    adj = [[] for _ in range(g.site_count)]
    for e in tree.edges:
        a, b = g.edges[e]
        adj[a].append(b)
        adj[b].append(a)
    if torus:
        ks, k0 = range(L // rs), 0
    else:
        k0 = -1 if sh else 0
        ks = range((L - 1 - sh) // rs - k0 + 1)
    out = {}
    for by in ks:
        for bx in ks:
            ox, oy = (k0 + bx) * rs + sh, (k0 + by) * rs + sh

            def rel(a, o):
                d = a - o
                return (d + es) % L - es if torus else d

            def inside(s, lo, hi):
                dx, dy = rel(s % L, ox), rel(s // L, oy)
                return lo <= dx < hi and lo <= dy < hi

            in_box = [inside(s, 0, rs) for s in range(g.site_count)]
            in_q = [inside(s, -es, rs + es) for s in range(g.site_count)]
            ring = {s for s in range(g.site_count) if in_q[s] and not in_box[s]}
            seen = {}
            crossing = []
            for s in ring:
                if s in seen:
                    continue
                seen[s] = True
                todo, members, to_b, to_out = deque([s]), [s], False, False
                while todo:
                    u = todo.popleft()
                    for v in adj[u]:
                        if v in ring:
                            if v not in seen:
                                seen[v] = True
                                todo.append(v)
                                members.append(v)
                        elif in_box[v]:
                            to_b = True
                        else:
                            to_out = True
                if to_b and to_out:
                    crossing.append(members[0])
            # group crossings by their component of the tree inside Q
            comp = {}
            for s in range(g.site_count):
                if not in_q[s] or s in comp:
                    continue
                comp[s] = s
                todo = [s]
                while todo:
                    u = todo.pop()
                    for v in adj[u]:
                        if in_q[v] and v not in comp:
                            comp[v] = s
                            todo.append(v)
            keys = [comp[m] for m in crossing]
            sizes = sorted((keys.count(k) for k in set(keys)), reverse=True)
            out[by * len(ks) + bx] = (len(crossing), sizes)
    return out


@pytest.mark.parametrize("kind", ["triangular-site", "square-bond"])
@pytest.mark.parametrize("domain", ["torus", "box"])
def test_degree_census_matches_bfs(kind, domain):
    g = build_geometry(LatticeSpec(kind, 16, 1.0, domain))
    tree = mst_kruskal(g, sample_labels(g, 9))
    cases = [(0.25, 1.0, 0.0), (0.25, 1.0, 0.125)] if domain == "box" else [(0.125, 0.5, 0.0),
                                                                              (0.125, 0.625, 0.125)]
    for r, rho, shift in cases:
        c = degree_census(tree, r, rho, shift)
        ref = _census_brute(tree, r, rho, shift)
        assert c.box_count == len(ref)
        for k, (deg, sizes) in ref.items():
            assert c.degree[k] == deg
            keys = list(c.crossings[c.crossings[:, 0] == k][:, 2])
            assert sorted((keys.count(x) for x in set(keys)), reverse=True) == sizes
            assert c.pinching[k] == (sum(1 for s in sizes if s >= 2) >= 2)


def test_census_scale_checks():
    g = build_geometry(LatticeSpec("triangular-site", 32, 1.0, "torus"))
    tree = mst_kruskal(g, sample_labels(g, 0))
    with pytest.raises(UsageError):
        degree_census(tree, 0.25, 0.5)  # r > rho / 4
    with pytest.raises(UsageError):
        degree_census(tree, 0.0625, 1.0)  # rho reaches the torus size
    c = degree_census(tree, 0.0625, 0.5)
    assert c.counts[2] >= c.counts[3] >= c.counts[4]
    assert trunk_boxes(tree, 0.5, 0.0625) == frozenset(
        (int(k % c.boxes_per_side), int(k // c.boxes_per_side)) for k in np.nonzero(c.degree >= 2)[0])


def test_minkowski_fit():
    scales = (0.125, 0.0625, 0.03125, 0.015625)
    counts = tuple(int(round(3 * s ** -1.25)) for s in scales)
    slope, err = minkowski_fit(BoxCountCurve(0.5, scales, counts))
    assert slope == pytest.approx(1.25, abs=0.01)
    with pytest.raises(FitError):
        minkowski_fit(BoxCountCurve(0.5, scales[:2], counts[:2]))
    with pytest.raises(FitError):
        minkowski_fit(BoxCountCurve(0.5, scales, (0,) + counts[1:]))
    g = build_geometry(LatticeSpec("triangular-site", 64, 1.0, "torus"))
    curve = trunk_curve(mst_kruskal(g, sample_labels(g, 0)), 0.5, scales[:3])
    assert curve.counts[0] <= curve.counts[1] <= curve.counts[2]
