"""Independent brute-force oracles shared by the test suite.

Everything here is deliberately naive: exhaustive enumeration, plain Python,
no numba, and no code shared with the package beyond the data structures.
"""

import itertools

import numpy as np

HEX = [(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)]


def ring_sites(S, d):
    """Sites of the max-norm ring at radius ``d`` around the box centre, counter-clockwise."""
    c = S // 2
    if d == 0:
        return [(c, c)]
    out = []
    for k in range(2 * d):
        out.append((c - d + k, c - d))
    for k in range(2 * d):
        out.append((c + d, c - d + k))
    for k in range(2 * d):
        out.append((c + d - k, c + d))
    for k in range(2 * d):
        out.append((c - d, c + d - k))
    return out


def clean_arms(eligible, S, r, R):
    """All simple paths from ring ``r`` to ring ``R`` through ``eligible`` sites
    that meet ring ``r`` only at their start and ring ``R`` only at their end.

    Returns a list of ``(start_index_on_inner_ring, frozenset_of_sites)``.
    """
    c = S // 2
    dist = lambda a, b: max(abs(a - c), abs(b - c))
    inner = ring_sites(S, r)
    arms = []
    for idx, (a0, b0) in enumerate(inner):
        if not eligible[b0 * S + a0]:
            continue
        stack = [((a0, b0), [(a0, b0)])]
        while stack:
            (a, b), path = stack.pop()
            for da, db in HEX:
                va, vb = a + da, b + db
                d = dist(va, vb)
                if d <= r or d > R or (va, vb) in path:
                    continue
                if not eligible[vb * S + va]:
                    continue
                if d == R:
                    arms.append((idx, frozenset(path + [(va, vb)])))
                else:
                    stack.append(((va, vb), path + [(va, vb)]))
    return arms


def arm_event_brute(primal, dual, S, r, R, palette):
    """Disjoint arms with the cyclic colour sequence ``palette`` (1 primal, 0 dual)."""
    if r >= R:
        return True
    k = len(palette)
    arms = {1: clean_arms(primal, S, r, R) if 1 in palette else [],
            0: clean_arms(dual, S, r, R) if 0 in palette else []}
    by_colour = {col: sorted(v, key=lambda t: t[0]) for col, v in arms.items()}
    rotations = {tuple(palette[i:] + palette[:i]) for i in range(k)}
    for rot in rotations:
        # choose arms with strictly increasing inner start index
        def search(j, last, used):
            if j == k:
                return True
            for idx, sites in by_colour[rot[j]]:
                if idx <= last or used & sites:
                    continue
                if search(j + 1, idx, used | sites):
                    return True
            return False

        if search(0, -1, frozenset()):
            return True
    return False


def spanning_trees(n, edges):
    """Yield every spanning tree (as a tuple of edge indices) of a small multigraph."""
    for combo in itertools.combinations(range(len(edges)), n - 1):
        parent = list(range(n))

        def find(a):
            while parent[a] != a:
                a = parent[a]
            return a

        ok = True
        for e in combo:
            x, y = find(edges[e][0]), find(edges[e][1])
            if x == y:
                ok = False
                break
            parent[x] = y
        if ok:
            yield combo


def bfs_components(n, adjacency, active):
    """Component ids over ``active`` vertices by plain BFS, -1 for inactive."""
    comp = [-1] * n
    cid = 0
    for s in range(n):
        if not active[s] or comp[s] >= 0:
            continue
        comp[s] = cid
        todo = [s]
        while todo:
            u = todo.pop()
            for v in adjacency[u]:
                if active[v] and comp[v] < 0:
                    comp[v] = cid
                    todo.append(v)
        cid += 1
    return np.array(comp)


def frechet_brute(d):
    """Minimax over all monotone couplings of a distance matrix, by enumeration."""
    n, m = d.shape
    best = np.inf

    def walk(i, j, cur):
        nonlocal best
        cur = max(cur, d[i, j])
        if cur >= best:
            return
        if i == n - 1 and j == m - 1:
            best = cur
            return
        if i + 1 < n:
            walk(i + 1, j, cur)
        if j + 1 < m:
            walk(i, j + 1, cur)
        if i + 1 < n and j + 1 < m:
            walk(i + 1, j + 1, cur)

    walk(0, 0, -np.inf)
    return best
