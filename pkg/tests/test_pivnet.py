import numpy as np
import pytest

from oracles import HEX, bfs_components

from nearcrit import Calibration, LatticeSpec, Window, build_geometry, config_at, sample_labels
from nearcrit.ensemble import labels_from_array, lambda_to_p
from nearcrit.errors import IntegrityError, UsageError
from nearcrit.pivnet import (
    SITE,
    ImportantSite,
    SwitchEvent,
    build_network,
    cell_bounds,
    cutoff_forest,
    cutoff_invasion,
    find_important,
    giant,
    switches,
)

CAL = Calibration("theoretical", 0.1)


def _important_brute(g, open_mask, epsilon):
    """Two boundary-reaching opposite-colour clusters next to the site, inside the 3-cell box."""
    L = g.side
    bounds = cell_bounds(g, epsilon)
    out = set()
    for s in range(g.site_count):
        i, j = s % L, s // L
        cx = np.searchsorted(bounds, i, side="right") - 1
        cy = np.searchsorted(bounds, j, side="right") - 1
        hx = bounds[cx + 1] - bounds[cx]
        hy = bounds[cy + 1] - bounds[cy]
        x0, y0 = bounds[cx] - hx, bounds[cy] - hy
        w, h = 3 * hx, 3 * hy
        glob = {}
        for b in range(h):
            for a in range(w):
                gi, gj = x0 + a, y0 + b
                if g.spec.torus:
                    glob[(a, b)] = (gj % L) * L + gi % L
                elif 0 <= gi < L and 0 <= gj < L:
                    glob[(a, b)] = gj * L + gi
        nodes = sorted(glob)
        index = {q: k for k, q in enumerate(nodes)}
        colour = open_mask[s]
        active = [open_mask[glob[q]] != colour for q in nodes]
        adj = [[index[(a + da, b + db)] for da, db in HEX if (a + da, b + db) in index]
               for a, b in nodes]
        comp = bfs_components(len(nodes), adj, active)
        touching = {comp[index[(a, b)]] for a, b in nodes
                    if comp[index[(a, b)]] >= 0 and (a in (0, w - 1) or b in (0, h - 1))}
        me = (i - x0, j - y0)
        near = {comp[index[(me[0] + da, me[1] + db)]] for da, db in HEX
                if (me[0] + da, me[1] + db) in index}
        if len(near & touching) >= 2:
            out.add(s)
    return out


@pytest.mark.parametrize("domain", ["torus", "box"])
@pytest.mark.parametrize("epsilon", [0.25, 0.3])
def test_important_sites_match_bfs(domain, epsilon):
    g = build_geometry(LatticeSpec("triangular-site", 8, 1.0, domain))
    for seed in range(3):
        view = config_at(sample_labels(g, seed), 0.5)
        found = find_important(g, view, epsilon)
        assert {x.site for x in found} == _important_brute(g, view.site_open, epsilon)
        assert all(x.open == view.site_open[x.site] for x in found)


def test_important_validation():
    g = build_geometry(LatticeSpec("triangular-site", 8, 1.0, "torus"))
    view = config_at(sample_labels(g, 0), 0.5)
    with pytest.raises(UsageError):
        find_important(g, view, 1.0)
    sq = build_geometry(LatticeSpec("square-bond", 8, 1.0, "torus"))
    with pytest.raises(UsageError):
        find_important(sq, config_at(sample_labels(sq, 0), 0.5), 0.25)


def test_switch_events_lie_in_the_window():
    g = build_geometry(LatticeSpec("triangular-site", 16, 1.0, "torus"))
    lab = sample_labels(g, 4)
    window = Window(-2.0, 2.0)
    view = config_at(lab, lambda_to_p(window.lambda_lo, CAL))
    important = find_important(g, view, 0.25)
    events = switches(lab, important, window, CAL)
    times = [e.time for e in events]
    assert times == sorted(times)
    closed = {x.site for x in important if not x.open}
    for e in events:
        assert e.site in closed and -2.0 < e.time <= 2.0


def _two_halves():
    # open box cut by a closed column; one column site opens inside the window
    g = build_geometry(LatticeSpec("triangular-site", 8, 1.0, "box"))
    L = g.side
    vals = np.full(g.site_count, 0.1)
    col = g.site_at(8, np.arange(L))
    vals[col] = 0.95
    piv = int(g.site_at(8, 5))
    vals[piv] = 0.5
    lab = labels_from_array(g, vals)
    return g, lab, piv


def test_cutoff_tree_on_a_cut_box():
    g, lab, piv = _two_halves()
    window = Window(-2.0, 2.0)
    view = config_at(lab, lambda_to_p(window.lambda_lo, CAL))
    imp = [ImportantSite(piv, 0.25, False, 0)]
    events = switches(lab, imp, window, CAL)
    assert [e.site for e in events] == [piv]
    net = build_network(g, view, imp)
    # routers are the smallest sites of the two halves
    assert net.routers.tolist() == [0, 9]
    assert net.incidence.shape[0] == 2
    forest = cutoff_forest(net, events, window.lambda_lo)
    assert forest.edges.shape[0] == 1 and forest.pivotal.tolist() == [piv]
    tree = giant(forest, 2.0)
    assert not tree.degenerate
    walk = tree.sites_path(0, 1)
    assert walk[0] == 0 and walk[-1] == 9 and piv in walk
    assert tree.switch_sites(0, 1) == {piv}
    # without the switch the halves stay apart and no unique giant exists
    split = cutoff_forest(net, [], window.lambda_lo)
    assert split.edges.shape[0] == 0
    assert giant(split, 2.0).degenerate
    inv = cutoff_invasion(forest, g.positions(0), SITE, 0.25, g.positions(9))
    assert not inv.degenerate
    assert set(inv.routers.tolist()) == {0, 1}


def test_cutoff_forest_rejects_bad_events():
    g, lab, piv = _two_halves()
    view = config_at(lab, 0.3)
    net = build_network(g, view, [piv])
    with pytest.raises(IntegrityError):
        cutoff_forest(net, [SwitchEvent(0, 0.0, 0)], -2.0)
    ev = [SwitchEvent(piv, 1.0, 0), SwitchEvent(piv, 0.0, 1)]
    with pytest.raises(IntegrityError):
        cutoff_forest(net, ev, -2.0)


def test_random_cutoff_forest_is_acyclic():
    g = build_geometry(LatticeSpec("triangular-site", 32, 1.0, "torus"))
    lab = sample_labels(g, 1)
    window = Window(-2.0, 2.0)
    view = config_at(lab, lambda_to_p(window.lambda_lo, CAL))
    important = find_important(g, view, 0.125)
    events = switches(lab, important, window, CAL)
    net = build_network(g, view, important)
    forest = cutoff_forest(net, events, window.lambda_lo)
    comps = forest.components()
    # a forest has routers minus components edges
    assert forest.edges.shape[0] == forest.router_count - (comps.max() + 1)
    # every forest edge walks through its pivotal between its two routers
    for (a, b), p in zip(forest.edges[:20], forest.pivotal[:20]):
        walk = forest.edge_sites(int(a), int(b), int(p))
        assert walk[0] == net.routers[a] and walk[-1] == net.routers[b] and p in walk
        steps = [w for w in zip(walk, walk[1:])]
        assert all(v in g.nbr[u] for u, v in steps)
