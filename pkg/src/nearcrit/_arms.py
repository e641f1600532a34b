"""Arm-event kernels on the triangular site lattice (sheared coordinates).

Local boxes are ``S x S`` arrays indexed ``b * S + a``; the ring at radius
``d`` around the center ``(c, c)`` is the set of sites at max-norm distance
``d``. Three detectors are provided:

* crossing-cluster counts: in an annulus of the triangular lattice, ``j >= 2``
  open clusters crossing from the inner to the outer ring exist iff the
  alternating ``2j``-arm event holds (self-matching duality in each sector);
* a site-centred version of the same count for pivotal detection;
* a greedy leftmost-arm search on a finite cyclic cover of the annulus for
  arbitrary palettes and for near-critical arms, where a site may serve as
  primal (label <= p') or dual (label > p) or both.
"""

import numpy as np
from numba import njit

from .rng import hash_counter, uniform_at

OFFSETS = np.array([(1, 0), (0, 1), (-1, 1), (-1, 0), (0, -1), (1, -1)], dtype=np.int64)


@njit(cache=True, inline="always")
def _ring(a, b, c):
    return max(abs(a - c), abs(b - c))


@njit(cache=True, inline="always")
def _chord(k, ua, ub, dv, c, r):
    # the two diagonal edges joining inner-ring sites across a corner of the
    # ring; dropping them makes the inner ring the boundary of the hole face
    if r == 0 or dv != r or (k != 2 and k != 5):
        return False
    return _ring(ua, ub, c) == r


@njit(cache=True)
def fill_box_labels(seed, out):
    for i in range(out.shape[0]):
        out[i] = uniform_at(seed, np.uint64(i))


@njit(cache=True)
def crossing_clusters(mask, S, r, R, stop_at, seen, queue):
    """Number of ``mask`` clusters of the annulus ``r <= d <= R`` touching both rings.

    Counting stops once ``stop_at`` is reached. ``seen`` is a stamp array of
    length ``S*S + 1`` whose last entry holds the current stamp; ``queue`` is
    scratch of length ``S*S``.
    """
    c = S // 2
    found = 0
    stamp = seen[S * S] + 1
    seen[S * S] = stamp
    for t in range(8 * r if r > 0 else 1):
        # walk the inner ring
        if r == 0:
            if t > 0:
                break
            a0, b0 = c, c
        else:
            side = t // (2 * r)
            k = t % (2 * r)
            if side == 0:
                a0, b0 = c - r + k, c - r
            elif side == 1:
                a0, b0 = c + r, c - r + k
            elif side == 2:
                a0, b0 = c + r - k, c + r
            else:
                a0, b0 = c - r, c + r - k
        start = b0 * S + a0
        if not mask[start] or seen[start] == stamp:
            continue
        seen[start] = stamp
        head = 0
        tail = 1
        queue[0] = start
        outer = False
        while head < tail:
            u = queue[head]
            head += 1
            ua = u % S
            ub = u // S
            if _ring(ua, ub, c) == R:
                outer = True
            for k in range(6):
                va = ua + OFFSETS[k, 0]
                vb = ub + OFFSETS[k, 1]
                if va < 0 or vb < 0 or va >= S or vb >= S:
                    continue
                d = _ring(va, vb, c)
                if d < r or d > R or _chord(k, ua, ub, d, c, r):
                    continue
                v = vb * S + va
                if mask[v] and seen[v] != stamp:
                    seen[v] = stamp
                    queue[tail] = v
                    tail += 1
        if outer:
            found += 1
            if found >= stop_at:
                return found
    return found


@njit(cache=True)
def annulus_connected(mask, S, r, R, seen, queue):
    """True iff a ``mask`` path joins the rings ``r`` and ``R``."""
    return crossing_clusters(mask, S, r, R, 1, seen, queue) >= 1


@njit(cache=True)
def site_opposite_crossings(mask, S, x, R, seen, queue):
    """Distinct clusters of the colour opposite to ``x`` adjacent to ``x`` reaching ring ``R``.

    ``mask`` holds the open state; the centre of the ring is ``(S//2, S//2)``.
    Returns the count capped at 2.
    """
    c = S // 2
    xa = x % S
    xb = x // S
    colour = mask[x]
    stamp = seen[S * S] + 1
    seen[S * S] = stamp
    seen[x] = stamp
    found = 0
    for k in range(6):
        sa = xa + OFFSETS[k, 0]
        sb = xb + OFFSETS[k, 1]
        if sa < 0 or sb < 0 or sa >= S or sb >= S or _ring(sa, sb, c) > R:
            continue
        s = sb * S + sa
        if mask[s] == colour or seen[s] == stamp:
            continue
        seen[s] = stamp
        head = 0
        tail = 1
        queue[0] = s
        outer = False
        while head < tail:
            u = queue[head]
            head += 1
            ua = u % S
            ub = u // S
            if _ring(ua, ub, c) == R:
                outer = True
            for j in range(6):
                va = ua + OFFSETS[j, 0]
                vb = ub + OFFSETS[j, 1]
                if va < 0 or vb < 0 or va >= S or vb >= S or _ring(va, vb, c) > R:
                    continue
                v = vb * S + va
                if mask[v] != colour and seen[v] != stamp:
                    seen[v] = stamp
                    queue[tail] = v
                    tail += 1
        if outer:
            found += 1
            if found >= 2:
                return found
    return found


@njit(cache=True)
def center_four_arm_hits(seed, samples, R, p):
    """Monte Carlo count of alternating 4 arms from the centre site to ring ``R``."""
    S = 2 * R + 1
    labels = np.empty(S * S, dtype=np.float64)
    mask = np.empty(S * S, dtype=np.bool_)
    seen = np.zeros(S * S + 1, dtype=np.int64)
    queue = np.empty(S * S, dtype=np.int64)
    centre = R * S + R
    hits = 0
    for s in range(samples):
        sub = hash_counter(seed, np.uint64(s))
        fill_box_labels(sub, labels)
        for i in range(S * S):
            mask[i] = labels[i] <= p
        if site_opposite_crossings(mask, S, centre, R, seen, queue) >= 2:
            hits += 1
    return hits


# ---------------------------------------------------------------- cyclic cover


@njit(cache=True)
def _annulus_index(S, r, R):
    c = S // 2
    loc = np.full(S * S, -1, dtype=np.int64)
    n = 0
    for b in range(S):
        for a in range(S):
            d = _ring(a, b, c)
            if r <= d <= R:
                loc[b * S + a] = n
                n += 1
    sites = np.empty(n, dtype=np.int64)
    for idx in range(S * S):
        if loc[idx] >= 0:
            sites[loc[idx]] = idx
    # neighbour table with sheet shifts across the cut (ray right of centre,
    # between rows c-1 and c; crossing upward is counter-clockwise)
    nb = np.full((n, 6), -1, dtype=np.int64)
    sh = np.zeros((n, 6), dtype=np.int64)
    for t in range(n):
        u = sites[t]
        ua = u % S
        ub = u // S
        for k in range(6):
            va = ua + OFFSETS[k, 0]
            vb = ub + OFFSETS[k, 1]
            if va < 0 or vb < 0 or va >= S or vb >= S:
                continue
            v = vb * S + va
            if loc[v] < 0 or _chord(k, ua, ub, _ring(va, vb, c), c, r):
                continue
            nb[t, k] = loc[v]
            if ub == c - 1 and vb == c:
                # crossing point of the edge with the line between the rows
                if (va == ua and ua > c) or (va == ua - 1 and ua >= c + 1):
                    sh[t, k] = 1
            elif ub == c and vb == c - 1:
                if (va == ua and ua > c) or (va == ua + 1 and va >= c + 1):
                    sh[t, k] = -1
    return sites, nb, sh


@njit(cache=True)
def cover_arms(primal, dual, S, r, R, palette, sheets):
    """Greedy leftmost arms on the cyclic cover; True iff the cyclic arm system exists.

    ``primal``/``dual`` are eligibility masks on the local box; ``palette`` is
    the cyclic colour sequence (1 = primal, 0 = dual). A step of colour ``c``
    extends the current left region through sites that are not ``c``-eligible
    and then adds its outer boundary, which is the leftmost ``c``-arm to the
    right of the previous one. The system exists iff for some ``i`` and ``p``
    the region after ``i + p*k`` arms lies inside the ``p``-fold deck
    translate of the region after ``i`` arms.
    """
    k = palette.shape[0]
    sites, nb, sh = _annulus_index(S, r, R)
    n = sites.shape[0]
    total = n * sheets
    join = np.full(total, -1, dtype=np.int64)
    layer = np.empty(total, dtype=np.int64)
    queue = np.empty(total, dtype=np.int64)
    for t in range(n):
        join[t] = 0
        layer[t] = t
    layer_len = n
    last = 0
    max_steps = 4 * k * sheets
    for step in range(1, max_steps + 1):
        colour = palette[(step - 1) % k]
        head = 0
        tail = 0
        for q in range(layer_len):
            queue[tail] = layer[q]
            tail += 1
        new_len = 0
        overflow = False
        while head < tail:
            u = queue[head]
            head += 1
            us = u // n
            ut = u % n
            for j in range(6):
                vt = nb[ut, j]
                if vt < 0:
                    continue
                vs = us + sh[ut, j]
                if vs < 0:
                    continue
                if vs >= sheets:
                    overflow = True
                    continue
                v = vs * n + vt
                if join[v] >= 0:
                    continue
                if vs == sheets - 1:
                    overflow = True
                join[v] = step
                site = sites[vt]
                eligible = primal[site] if colour == 1 else dual[site]
                if eligible:
                    layer[new_len] = v
                    new_len += 1
                else:
                    queue[tail] = v
                    tail += 1
        if overflow or new_len == 0:
            break
        last = step
        layer_len = new_len
    if last < k + 1:
        return False
    big = last + 1
    best = np.empty(last + 1, dtype=np.int64)
    for p in range(1, sheets):
        if 1 + p * k > last:
            break
        for j in range(last + 1):
            best[j] = 0
        for v in range(p * n, total):
            jv = join[v]
            if jv < 0 or jv > last:
                continue
            w = join[v - p * n]
            val = big if (w < 0 or w > last) else w
            if val > best[jv]:
                best[jv] = val
        run = 0
        for j in range(last + 1):
            if best[j] > run:
                run = best[j]
            best[j] = run
        for i in range(1, last - p * k + 1):
            if best[i + p * k] <= i:
                return True
    return False


@njit(cache=True)
def arm_event(primal, dual, S, r, R, palette, alternating, static, seen, queue):
    """Arm event in the annulus ``r..R`` for eligibility masks ``primal``/``dual``."""
    if r >= R:
        return True
    k = palette.shape[0]
    if r == 0 and k > 1:
        # only the static alternating 4-arm event from a single site is defined
        if k == 4 and alternating and static:
            c = S // 2
            return site_opposite_crossings(primal, S, c * S + c, R, seen, queue) >= 2
        return False
    has_p = False
    has_d = False
    for i in range(k):
        if palette[i] == 1:
            has_p = True
        else:
            has_d = True
    a = 0
    b = 0
    if has_p:
        a = crossing_clusters(primal, S, r, R, k, seen, queue)
        if a == 0:
            return False
    if has_d:
        b = crossing_clusters(dual, S, r, R, k, seen, queue)
        if b == 0:
            return False
    if k == 1:
        return True
    if alternating:
        j = k // 2
        if j == 1:
            if static:
                return True
        elif a >= j or b >= j:
            return True
        elif static:
            return False
    sheets = 3 * k + 4
    return cover_arms(primal, dual, S, r, R, palette, sheets)


@njit(cache=True)
def arm_hits(seed, samples, R_max, inner, outer, palette, alternating, p_lo, p_hi):
    """Per-sample arm events for all radius pairs; returns (pairs,) hit counts.

    Primal sites have label <= ``p_hi``; dual sites have label > ``p_lo``.
    """
    S = 2 * R_max + 1
    labels = np.empty(S * S, dtype=np.float64)
    primal = np.empty(S * S, dtype=np.bool_)
    dual = np.empty(S * S, dtype=np.bool_)
    seen = np.zeros(S * S + 1, dtype=np.int64)
    queue = np.empty(S * S, dtype=np.int64)
    static = p_lo == p_hi
    pairs = inner.shape[0]
    hits = np.zeros(pairs, dtype=np.int64)
    for s in range(samples):
        sub = hash_counter(seed, np.uint64(s))
        fill_box_labels(sub, labels)
        for i in range(S * S):
            primal[i] = labels[i] <= p_hi
            dual[i] = labels[i] > p_lo
        for q in range(pairs):
            if arm_event(primal, dual, S, inner[q], outer[q], palette,
                         alternating, static, seen, queue):
                hits[q] += 1
    return hits


@njit(cache=True)
def paired_arm_hits(seed, samples, R_max, inner, outer, palette, alternating, p_lo, p_hi):
    """Critical and near-critical hits on shared labels: returns (crit, near, both)."""
    S = 2 * R_max + 1
    labels = np.empty(S * S, dtype=np.float64)
    primal = np.empty(S * S, dtype=np.bool_)
    dual = np.empty(S * S, dtype=np.bool_)
    crit = np.empty(S * S, dtype=np.bool_)
    anti = np.empty(S * S, dtype=np.bool_)
    seen = np.zeros(S * S + 1, dtype=np.int64)
    queue = np.empty(S * S, dtype=np.int64)
    pairs = inner.shape[0]
    out = np.zeros((3, pairs), dtype=np.int64)
    for s in range(samples):
        sub = hash_counter(seed, np.uint64(s))
        fill_box_labels(sub, labels)
        for i in range(S * S):
            primal[i] = labels[i] <= p_hi
            dual[i] = labels[i] > p_lo
            crit[i] = labels[i] <= 0.5
            anti[i] = labels[i] > 0.5
        for q in range(pairs):
            c = arm_event(crit, anti, S, inner[q], outer[q], palette,
                          alternating, True, seen, queue)
            if c:
                # the critical event is contained in the near-critical one
                # whenever p_lo <= 1/2 <= p_hi
                if p_lo <= 0.5 <= p_hi:
                    nc = True
                else:
                    nc = arm_event(primal, dual, S, inner[q], outer[q], palette,
                                   alternating, p_lo == p_hi, seen, queue)
            else:
                nc = arm_event(primal, dual, S, inner[q], outer[q], palette,
                               alternating, p_lo == p_hi, seen, queue)
            if c:
                out[0, q] += 1
            if nc:
                out[1, q] += 1
            if c and nc:
                out[2, q] += 1
    return out


# ---------------------------------------------------------------- pivotal scan


@njit(cache=True)
def important_scan(open_mask, L, torus, bounds_x, bounds_y):
    """Flag sites with four alternating arms from the site to the boundary of
    the concentric 3-cell box of their grid cell.

    ``bounds_x``/``bounds_y`` are increasing cell boundaries in site units
    covering ``[0, L)``. Returns a boolean array over sites.
    """
    out = np.zeros(L * L, dtype=np.bool_)
    wmax = 0
    for a in range(bounds_x.shape[0] - 1):
        wmax = max(wmax, bounds_x[a + 1] - bounds_x[a])
    for a in range(bounds_y.shape[0] - 1):
        wmax = max(wmax, bounds_y[a + 1] - bounds_y[a])
    B = 3 * wmax
    comp = np.full(B * B, -1, dtype=np.int64)
    glob = np.full(B * B, -1, dtype=np.int64)
    queue = np.empty(B * B, dtype=np.int64)
    touches = np.zeros(B * B + 1, dtype=np.bool_)
    for cy in range(bounds_y.shape[0] - 1):
        y0 = bounds_y[cy]
        hy = bounds_y[cy + 1] - y0
        for cx in range(bounds_x.shape[0] - 1):
            x0 = bounds_x[cx]
            hx = bounds_x[cx + 1] - x0
            bw = 3 * hx
            bh = 3 * hy
            # local box: rows y0-hy .. y0+2hy, cols x0-hx .. x0+2hx
            for lb in range(bh):
                for la in range(bw):
                    gi = x0 - hx + la
                    gj = y0 - hy + lb
                    li = lb * bw + la
                    comp[li] = -1
                    if torus:
                        glob[li] = (gj % L) * L + (gi % L)
                    elif gi < 0 or gj < 0 or gi >= L or gj >= L:
                        glob[li] = -1
                    else:
                        glob[li] = gj * L + gi
            ncomp = 0
            for li0 in range(bw * bh):
                if glob[li0] < 0 or comp[li0] >= 0:
                    continue
                colour = open_mask[glob[li0]]
                comp[li0] = ncomp
                touches[ncomp] = False
                head = 0
                tail = 1
                queue[0] = li0
                while head < tail:
                    u = queue[head]
                    head += 1
                    ua = u % bw
                    ub = u // bw
                    if ua == 0 or ub == 0 or ua == bw - 1 or ub == bh - 1:
                        touches[ncomp] = True
                    for k in range(6):
                        va = ua + OFFSETS[k, 0]
                        vb = ub + OFFSETS[k, 1]
                        if va < 0 or vb < 0 or va >= bw or vb >= bh:
                            continue
                        v = vb * bw + va
                        if glob[v] < 0 or comp[v] >= 0:
                            continue
                        if open_mask[glob[v]] != colour:
                            continue
                        comp[v] = ncomp
                        queue[tail] = v
                        tail += 1
                ncomp += 1
            for lb in range(hy, 2 * hy):
                for la in range(hx, 2 * hx):
                    li = lb * bw + la
                    g = glob[li]
                    if g < 0:
                        continue
                    colour = open_mask[g]
                    first = -1
                    second = False
                    for k in range(6):
                        va = la + OFFSETS[k, 0]
                        vb = lb + OFFSETS[k, 1]
                        v = vb * bw + va
                        if glob[v] < 0 or open_mask[glob[v]] == colour:
                            continue
                        cid = comp[v]
                        if not touches[cid]:
                            continue
                        if first < 0:
                            first = cid
                        elif cid != first:
                            second = True
                            break
                    if second:
                        out[g] = True
    return out
