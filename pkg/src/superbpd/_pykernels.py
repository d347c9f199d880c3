"""Pure-Python (numpy) kernels.

Drop-in twins of the compiled kernels in ``_core.pyx``. They are used when the
extension is not built, and serve as the reference the compiled code is
checked against. Outputs must match bit for bit.
"""
import math

import numpy as np

INV_SQRT2 = 0.7071067811865476

# N, NE, E, SE, S, SW, W, NW
OFF_R = np.array([-1, -1, 0, 1, 1, 1, 0, -1])
OFF_C = np.array([0, 1, 1, 1, 0, -1, -1, -1])
UNIT_R = (-1.0, -INV_SQRT2, 0.0, INV_SQRT2, 1.0, INV_SQRT2, 0.0, -INV_SQRT2)
UNIT_C = (0.0, INV_SQRT2, 1.0, INV_SQRT2, 0.0, -INV_SQRT2, -1.0, -INV_SQRT2)


def _column_pass(grid):
    gh, gw = grid.shape
    h = (gh + 1) // 2
    has = grid >= 0
    rows = np.arange(gh)[:, None]
    up = np.maximum.accumulate(np.where(has, rows, -1), axis=0)[::2]
    big = np.iinfo(np.int64).max
    down = np.minimum.accumulate(np.where(has, rows, big)[::-1], axis=0)[::-1][::2]
    y = 2 * np.arange(h)[:, None]
    cols = np.broadcast_to(np.arange(gw), (h, gw))

    has_up = up >= 0
    has_down = down != big
    du = np.where(has_up, y - up, big)
    dd = np.where(has_down, down - y, big)
    iu = np.where(has_up, grid[np.where(has_up, up, 0), cols], -1)
    idn = np.where(has_down, grid[np.where(has_down, down, 0), cols], -1)
    take_up = has_up & (~has_down | (du < dd) | ((du == dd) & (iu < idn)))
    gidx = np.where(take_up, iu, idn)
    dist = np.where(take_up, du, dd)
    g2 = np.where(gidx >= 0, dist * np.where(gidx >= 0, dist, 0), 0)
    return g2, gidx


def _envelope_row(g2, gidx, w):
    v, zn, zd = [], [], []
    for q, (gq, iq) in enumerate(zip(g2, gidx)):
        if iq < 0:
            continue
        fq = gq + q * q
        if not v:
            v.append(q)
            zn.append(0)
            zd.append(1)
            continue
        while True:
            p = v[-1]
            sn = fq - (g2[p] + p * p)
            sd = 2 * (q - p)
            # pop only when strictly dominated; touching parabolas stay for ties
            if len(v) > 1 and sn * zd[-1] < zn[-1] * sd:
                v.pop()
                zn.pop()
                zd.pop()
                continue
            break
        v.append(q)
        zn.append(sn)
        zd.append(sd)

    m = len(v) - 1
    out_idx = [0] * w
    out_d2 = [0] * w
    k = 0
    for c in range(w):
        x = 2 * c
        while k < m and zn[k + 1] < x * zd[k + 1]:
            k += 1
        p = v[k]
        best_d = (x - p) ** 2 + g2[p]
        best_i = gidx[p]
        j = k + 1
        while j <= m and zn[j] == x * zd[j]:
            p = v[j]
            d = (x - p) ** 2 + g2[p]
            if d < best_d or (d == best_d and gidx[p] < best_i):
                best_d, best_i = d, gidx[p]
            j += 1
        out_idx[c] = best_i
        out_d2[c] = best_d
    return out_idx, out_d2


def nearest_sites(grid, num_threads=1):
    grid = np.ascontiguousarray(grid, dtype=np.int64)
    gh, gw = grid.shape
    h, w = (gh + 1) // 2, (gw + 1) // 2
    g2, gidx = _column_pass(grid)
    out_idx = np.empty((h, w), dtype=np.int64)
    out_d2 = np.empty((h, w), dtype=np.int64)
    for r in range(h):
        out_idx[r], out_d2[r] = _envelope_row(g2[r].tolist(), gidx[r].tolist(), w)
    return out_idx, out_d2


def build_parents(vec, cos_theta):
    h, w = vec.shape[:2]
    d0 = vec[..., 0].astype(np.float64)
    d1 = vec[..., 1].astype(np.float64)
    dots = np.stack([d0 * ur + d1 * uc for ur, uc in zip(UNIT_R, UNIT_C)])
    best = np.argmax(dots, axis=0)
    rr, cc = np.mgrid[0:h, 0:w]
    nr = rr + OFF_R[best]
    nc = cc + OFF_C[best]
    inside = (nr >= 0) & (nr < h) & (nc >= 0) & (nc < w)
    nr_safe = np.where(inside, nr, rr)
    nc_safe = np.where(inside, nc, cc)
    dot = d0 * d0[nr_safe, nc_safe] + d1 * d1[nr_safe, nc_safe]
    link = inside & (dot > cos_theta)
    own = (rr * w + cc).ravel()
    return np.where(link.ravel(), (nr_safe * w + nc_safe).ravel(), own).astype(np.int64)


def break_cycles(parent):
    n = parent.shape[0]
    idx = np.arange(n)
    rounds = max(1, math.ceil(math.log2(max(n, 2))) + 1)
    jump = parent.copy()
    for _ in range(rounds):
        jump = jump[jump]
    # parent^(2^rounds) lands on a cycle, and covers every cycle node
    on_cycle = np.zeros(n, dtype=bool)
    on_cycle[jump] = True
    on_cycle &= parent != idx
    if not on_cycle.any():
        return parent
    lowest = idx.copy()
    jump = parent.copy()
    for _ in range(rounds):
        lowest = np.minimum(lowest, lowest[jump])
        jump = jump[jump]
    lows = np.unique(lowest[on_cycle])
    parent[lows] = lows
    return parent


def flatten(parent):
    out = np.array(parent, dtype=np.int64, copy=True)
    while True:
        nxt = out[out]
        if np.array_equal(nxt, out):
            return out
        out = nxt


def merge_roots(parent, h, w, vec=None, thr=2.0):
    n = h * w
    idx = np.arange(n).reshape(h, w)
    roots = (np.asarray(parent) == idx.ravel()).reshape(h, w)
    guard = vec is not None and thr <= 1.0
    if guard:
        d0 = vec[..., 0].astype(np.float64)
        d1 = vec[..., 1].astype(np.float64)
    target = np.full((h, w), -1, dtype=np.int64)
    # later assignments win: "last" root in E, SW, S, SE order
    for dr, dc, ur, uc in ((0, 1, 0.0, 1.0), (1, -1, INV_SQRT2, -INV_SQRT2),
                           (1, 0, 1.0, 0.0), (1, 1, INV_SQRT2, INV_SQRT2)):
        src = (slice(0, h - dr), slice(max(0, -dc), w - max(0, dc)))
        dst = (slice(dr, h), slice(max(0, dc), w + min(0, dc)))
        cond = np.zeros((h, w), dtype=bool)
        cond[src] = roots[dst]
        if guard:
            dq = np.zeros((h, w))
            dq[src] = d0[dst] * ur + d1[dst] * uc
            dp = d0 * ur + d1 * uc
            cond &= ~((dq >= thr) | (-dp >= thr))
        target[cond] = idx[cond] + dr * w + dc
    out = np.array(parent, dtype=np.int64, copy=True)
    sel = (roots & (target >= 0)).ravel()
    out[sel] = target.ravel()[sel]
    return out


def boundary_pairs(labels):
    h, w = labels.shape
    idx = np.arange(h * w, dtype=np.int64).reshape(h, w)
    east = labels[:, :-1] != labels[:, 1:]
    south = labels[:-1, :] != labels[1:, :]
    pe = idx[:, :-1][east]
    ps = idx[:-1, :][south]
    p = np.concatenate([pe, ps])
    q = np.concatenate([pe + 1, ps + w])
    order = np.argsort(np.concatenate([2 * pe, 2 * ps + 1]), kind="stable")
    return p[order], q[order]


def pair_products(vec, parent, p, q, steps):
    flat = vec.reshape(-1, 2).astype(np.float64)
    a = np.asarray(p, dtype=np.int64)
    b = np.asarray(q, dtype=np.int64)
    for _ in range(steps):
        a = parent[a]
        b = parent[b]
    a0, a1 = flat[a, 0], flat[a, 1]
    b0, b1 = flat[b, 0], flat[b, 1]
    return a0 * b0 + a1 * b1, a0 * b1 - a1 * b0


def relabel_dense(labels, n_labels):
    # labels in [0, n_labels); renumber by first occurrence in raster order
    labels = np.asarray(labels, dtype=np.int64)
    uniq, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(len(uniq), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(uniq))
    return rank[inverse.ravel()]


def partition(areas, eu, ev, sim, order, s0, theta_l, theta_s, a_s, a_t):
    n = len(areas)
    parent = list(range(n))
    area = [int(a) for a in areas]
    repulsive = [set() for _ in range(n)]
    members = [[i] for i in range(n)]
    eu_l, ev_l, sim_l = eu.tolist(), ev.tolist(), sim.tolist()
    kind, tr_s, tr_a, tr_b, tr_m = [], [], [], [], []

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(a, b):
        # larger area survives, ties to the smaller index
        if (area[a], -a) < (area[b], -b):
            a, b = b, a
        parent[b] = a
        area[a] += area[b]
        members[a].extend(members[b])
        members[b] = []
        for x in repulsive[b]:
            repulsive[x].discard(b)
            repulsive[x].add(a)
        repulsive[a] |= repulsive[b]
        repulsive[b] = set()

    for e in range(len(sim_l)):
        if sim_l[e] < s0:
            repulsive[eu_l[e]].add(ev_l[e])
            repulsive[ev_l[e]].add(eu_l[e])

    for e in order.tolist():
        s = sim_l[e]
        a, b = find(eu_l[e]), find(ev_l[e])
        merged = False
        if a != b and b not in repulsive[a]:
            h = theta_l if min(area[a], area[b]) >= a_s else theta_s
            if s > h:
                union(a, b)
                merged = True
        kind.append(0)
        tr_s.append(s)
        tr_a.append(a)
        tr_b.append(b)
        tr_m.append(merged)

    neighbours = [[] for _ in range(n)]
    for a, b, s in zip(eu_l, ev_l, sim_l):
        neighbours[a].append((b, s))
        neighbours[b].append((a, s))
    tiny = sorted((area[i], i) for i in range(n) if parent[i] == i and area[i] < a_t)
    for _, i in tiny:
        c = find(i)
        if area[c] >= a_t:
            continue
        best, best_s = -1, -math.inf
        for m in members[c]:
            for nb, s in neighbours[m]:
                b = find(nb)
                if b == c or b in repulsive[c]:
                    continue
                if s > best_s or (s == best_s and b < best):
                    best, best_s = b, s
        if best >= 0:
            union(c, best)
            kind.append(1)
            tr_s.append(best_s)
            tr_a.append(c)
            tr_b.append(best)
            tr_m.append(True)

    rep = np.array([find(i) for i in range(n)], dtype=np.int64)
    trace = (
        np.array(kind, dtype=np.int8),
        np.array(tr_s, dtype=np.float64),
        np.array(tr_a, dtype=np.int64),
        np.array(tr_b, dtype=np.int64),
        np.array(tr_m, dtype=bool),
    )
    return rep, trace
