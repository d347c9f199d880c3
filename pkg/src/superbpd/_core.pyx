# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# distutils: language = c++
"""Compiled kernels for the hot raster loops.

Every function here has a numpy twin in :mod:`superbpd._pykernels` with the
same signature; the two must return identical arrays (see
``tests/test_backends.py``).
"""
import numpy as np
cimport numpy as cnp
from cython.parallel cimport parallel, prange
from libc.stdlib cimport malloc, free
from libc.stdint cimport int64_t
from libcpp.unordered_set cimport unordered_set
from libcpp.vector cimport vector

cnp.import_array()

ctypedef int64_t i64

cdef double INV_SQRT2 = 0.7071067811865476

# N, NE, E, SE, S, SW, W, NW
cdef int OFF_R[8]
cdef int OFF_C[8]
cdef double UNIT_R[8]
cdef double UNIT_C[8]
OFF_R[:] = [-1, -1, 0, 1, 1, 1, 0, -1]
OFF_C[:] = [0, 1, 1, 1, 0, -1, -1, -1]
UNIT_R[:] = [-1.0, -INV_SQRT2, 0.0, INV_SQRT2, 1.0, INV_SQRT2, 0.0, -INV_SQRT2]
UNIT_C[:] = [0.0, INV_SQRT2, 1.0, INV_SQRT2, 0.0, -INV_SQRT2, -1.0, -INV_SQRT2]


cdef void _envelope_row(const i64[:, ::1] g2, const i64[:, ::1] gidx,
                        i64[:, ::1] out_idx, i64[:, ::1] out_d2,
                        Py_ssize_t r, Py_ssize_t gw, Py_ssize_t w,
                        i64* v, i64* zn, i64* zd) noexcept nogil:
    cdef Py_ssize_t m = -1, k, j, c
    cdef i64 q, p, fq, fp, sn, sd, x, d, best_d, best_i, dx
    for q in range(gw):
        if gidx[r, q] < 0:
            continue
        fq = g2[r, q] + q * q
        if m < 0:
            m = 0
            v[0] = q
            continue
        while True:
            p = v[m]
            fp = g2[r, p] + p * p
            sn = fq - fp
            sd = 2 * (q - p)
            # pop only when strictly dominated; touching parabolas stay for ties
            if m > 0 and sn * zd[m] < zn[m] * sd:
                m -= 1
                continue
            break
        m += 1
        v[m] = q
        zn[m] = sn
        zd[m] = sd
    k = 0
    for c in range(w):
        x = 2 * c
        while k < m and zn[k + 1] < x * zd[k + 1]:
            k += 1
        p = v[k]
        dx = x - p
        best_d = dx * dx + g2[r, p]
        best_i = gidx[r, p]
        j = k + 1
        while j <= m and zn[j] == x * zd[j]:
            p = v[j]
            dx = x - p
            d = dx * dx + g2[r, p]
            if d < best_d or (d == best_d and gidx[r, p] < best_i):
                best_d = d
                best_i = gidx[r, p]
            j += 1
        out_idx[r, c] = best_i
        out_d2[r, c] = best_d


def nearest_sites(const i64[:, ::1] grid, int num_threads=1):
    """Exact nearest site for every pixel of a doubled-coordinate site grid.

    ``grid`` has shape (2H-1, 2W-1) and holds the site index at each site
    position, -1 elsewhere. Returns (index, squared distance in doubled
    units), both (H, W).
    """
    cdef Py_ssize_t gh = grid.shape[0], gw = grid.shape[1]
    cdef Py_ssize_t h = (gh + 1) // 2, w = (gw + 1) // 2
    cdef Py_ssize_t X, Y, r, last
    cdef i64 du, dd, iu, id_
    g2_arr = np.empty((h, gw), dtype=np.int64)
    gidx_arr = np.full((h, gw), -1, dtype=np.int64)
    up_arr = np.empty(gh, dtype=np.int64)
    down_arr = np.empty(gh, dtype=np.int64)
    cdef i64[:, ::1] g2 = g2_arr
    cdef i64[:, ::1] gidx = gidx_arr
    cdef i64[::1] up = up_arr
    cdef i64[::1] down = down_arr

    with nogil:
        for X in range(gw):
            last = -1
            for Y in range(gh):
                if grid[Y, X] >= 0:
                    last = Y
                up[Y] = last
            last = -1
            for Y in range(gh - 1, -1, -1):
                if grid[Y, X] >= 0:
                    last = Y
                down[Y] = last
            for r in range(h):
                Y = 2 * r
                if up[Y] < 0 and down[Y] < 0:
                    continue
                if down[Y] < 0:
                    g2[r, X] = (Y - up[Y]) * (Y - up[Y])
                    gidx[r, X] = grid[up[Y], X]
                elif up[Y] < 0:
                    g2[r, X] = (down[Y] - Y) * (down[Y] - Y)
                    gidx[r, X] = grid[down[Y], X]
                else:
                    du = Y - up[Y]
                    dd = down[Y] - Y
                    iu = grid[up[Y], X]
                    id_ = grid[down[Y], X]
                    if du < dd or (du == dd and iu < id_):
                        g2[r, X] = du * du
                        gidx[r, X] = iu
                    else:
                        g2[r, X] = dd * dd
                        gidx[r, X] = id_

    out_idx_arr = np.empty((h, w), dtype=np.int64)
    out_d2_arr = np.empty((h, w), dtype=np.int64)
    cdef i64[:, ::1] out_idx = out_idx_arr
    cdef i64[:, ::1] out_d2 = out_d2_arr
    cdef i64* v
    cdef i64* zn
    cdef i64* zd
    if num_threads < 1:
        num_threads = 1
    with nogil, parallel(num_threads=num_threads):
        v = <i64*> malloc(gw * sizeof(i64))
        zn = <i64*> malloc(gw * sizeof(i64))
        zd = <i64*> malloc(gw * sizeof(i64))
        for r in prange(h, schedule="static"):
            _envelope_row(g2, gidx, out_idx, out_d2, r, gw, w, v, zn, zd)
        free(v)
        free(zn)
        free(zd)
    return out_idx_arr, out_d2_arr


def build_parents(const float[:, :, ::1] vec, double cos_theta):
    """Raster pass of the super-BPD grouping: parent = next pixel or self."""
    cdef Py_ssize_t h = vec.shape[0], w = vec.shape[1]
    cdef Py_ssize_t r, c, k, best, nr, nc
    cdef double d0, d1, dot, best_dot
    parent_arr = np.empty(h * w, dtype=np.int64)
    cdef i64[::1] parent = parent_arr
    with nogil:
        for r in range(h):
            for c in range(w):
                d0 = vec[r, c, 0]
                d1 = vec[r, c, 1]
                best = 0
                best_dot = d0 * UNIT_R[0] + d1 * UNIT_C[0]
                for k in range(1, 8):
                    dot = d0 * UNIT_R[k] + d1 * UNIT_C[k]
                    if dot > best_dot:
                        best_dot = dot
                        best = k
                nr = r + OFF_R[best]
                nc = c + OFF_C[best]
                parent[r * w + c] = r * w + c
                if nr < 0 or nr >= h or nc < 0 or nc >= w:
                    continue
                dot = d0 * <double> vec[nr, nc, 0] + d1 * <double> vec[nr, nc, 1]
                if dot > cos_theta:
                    parent[r * w + c] = nr * w + nc
    return parent_arr


def break_cycles(i64[::1] parent):
    """Promote the smallest pixel of every directed cycle to a root, in place."""
    cdef Py_ssize_t n = parent.shape[0]
    cdef Py_ssize_t i, j, lo, i2
    stamp_arr = np.full(n, -1, dtype=np.int64)
    cdef i64[::1] stamp = stamp_arr
    with nogil:
        for i in range(n):
            if stamp[i] >= 0:
                continue
            j = i
            while stamp[j] < 0:
                stamp[j] = i
                j = parent[j]
            if stamp[j] == i and parent[j] != j:
                # j lies on a cycle first closed by this walk
                lo = j
                i2 = parent[j]
                while i2 != j:
                    if i2 < lo:
                        lo = i2
                    i2 = parent[i2]
                parent[lo] = lo
    return np.asarray(parent)


def flatten(const i64[::1] parent):
    """Root pixel of every pixel, with full path compression on a copy."""
    cdef Py_ssize_t n = parent.shape[0]
    cdef Py_ssize_t i, root, j, nxt
    out_arr = np.array(parent, dtype=np.int64, copy=True)
    cdef i64[::1] out = out_arr
    with nogil:
        for i in range(n):
            root = i
            while out[root] != root:
                root = out[root]
            j = i
            while out[j] != root:
                nxt = out[j]
                out[j] = root
                j = nxt
    return out_arr


cdef inline bint _departs(const float[:, :, ::1] vec, Py_ssize_t p, Py_ssize_t q,
                          Py_ssize_t w, double ur, double uc, double thr) noexcept nogil:
    # q points away from p, or p away from q, within the cone cos >= thr
    cdef double dq = vec[q // w, q % w, 0] * ur + vec[q // w, q % w, 1] * uc
    cdef double dp = vec[p // w, p % w, 0] * ur + vec[p // w, p % w, 1] * uc
    return dq >= thr or -dp >= thr


def merge_roots(const i64[::1] parent, Py_ssize_t h, Py_ssize_t w,
                const float[:, :, ::1] vec=None, double thr=2.0):
    """Link each root to the last root among its forward 3x3 neighbours.

    With ``vec``, a candidate is skipped when either root points away from
    the other (``thr`` is the cosine of the cone); ``thr > 1`` disables it.
    """
    cdef Py_ssize_t r, c, p, q, target
    cdef bint guard = vec is not None and thr <= 1.0
    out_arr = np.array(parent, dtype=np.int64, copy=True)
    cdef i64[::1] out = out_arr
    with nogil:
        for r in range(h):
            for c in range(w):
                p = r * w + c
                if parent[p] != p:
                    continue
                target = -1
                # forward neighbours are scanned later, so their root status is original
                q = p + 1
                if c + 1 < w and parent[q] == q:
                    if not (guard and _departs(vec, p, q, w, 0.0, 1.0, thr)):
                        target = q
                if r + 1 < h:
                    q = p + w - 1
                    if c > 0 and parent[q] == q:
                        if not (guard and _departs(vec, p, q, w, INV_SQRT2, -INV_SQRT2, thr)):
                            target = q
                    q = p + w
                    if parent[q] == q:
                        if not (guard and _departs(vec, p, q, w, 1.0, 0.0, thr)):
                            target = q
                    q = p + w + 1
                    if c + 1 < w and parent[q] == q:
                        if not (guard and _departs(vec, p, q, w, INV_SQRT2, INV_SQRT2, thr)):
                            target = q
                if target >= 0:
                    out[p] = target
    return out_arr


def boundary_pairs(const i64[:, ::1] labels):
    """4-adjacent differing-label pixel pairs in raster discovery order (E then S)."""
    cdef Py_ssize_t h = labels.shape[0], w = labels.shape[1]
    cdef Py_ssize_t r, c, n = 0, k = 0
    with nogil:
        for r in range(h):
            for c in range(w):
                if c + 1 < w and labels[r, c] != labels[r, c + 1]:
                    n += 1
                if r + 1 < h and labels[r, c] != labels[r + 1, c]:
                    n += 1
    p_arr = np.empty(n, dtype=np.int64)
    q_arr = np.empty(n, dtype=np.int64)
    cdef i64[::1] p = p_arr
    cdef i64[::1] q = q_arr
    with nogil:
        for r in range(h):
            for c in range(w):
                if c + 1 < w and labels[r, c] != labels[r, c + 1]:
                    p[k] = r * w + c
                    q[k] = r * w + c + 1
                    k += 1
                if r + 1 < h and labels[r, c] != labels[r + 1, c]:
                    p[k] = r * w + c
                    q[k] = (r + 1) * w + c
                    k += 1
    return p_arr, q_arr


def pair_products(const float[:, :, ::1] vec, const i64[::1] parent,
                  const i64[::1] p, const i64[::1] q, int steps):
    """Dot and cross products of the directions ``steps`` parent hops from p and q."""
    cdef Py_ssize_t w = vec.shape[1]
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t i, k, a, b
    cdef double a0, a1, b0, b1
    dot_arr = np.empty(n, dtype=np.float64)
    cross_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] dot = dot_arr
    cdef double[::1] cross = cross_arr
    with nogil:
        for i in range(n):
            a = p[i]
            b = q[i]
            for k in range(steps):
                a = parent[a]
                b = parent[b]
            a0 = vec[a // w, a % w, 0]
            a1 = vec[a // w, a % w, 1]
            b0 = vec[b // w, b % w, 0]
            b1 = vec[b // w, b % w, 1]
            dot[i] = a0 * b0 + a1 * b1
            cross[i] = a0 * b1 - a1 * b0
    return dot_arr, cross_arr


def relabel_dense(const i64[::1] labels, Py_ssize_t n_labels):
    """Renumber labels in [0, n_labels) by first occurrence in raster order."""
    cdef Py_ssize_t n = labels.shape[0], i
    cdef i64 k = 0, lab
    rank_arr = np.full(n_labels, -1, dtype=np.int64)
    out_arr = np.empty(n, dtype=np.int64)
    cdef i64[::1] rank = rank_arr
    cdef i64[::1] out = out_arr
    with nogil:
        for i in range(n):
            lab = labels[i]
            if rank[lab] < 0:
                rank[lab] = k
                k += 1
            out[i] = rank[lab]
    return out_arr


cdef struct _UF:
    i64* parent
    i64* area
    i64* head
    i64* tail
    i64* link


cdef inline i64 _find(i64* parent, i64 i) noexcept nogil:
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


cdef i64 _union(_UF* uf, vector[unordered_set[i64]]& rep, i64 a, i64 b) noexcept nogil:
    cdef i64 t
    # larger area survives, ties to the smaller index
    if uf.area[a] < uf.area[b] or (uf.area[a] == uf.area[b] and a > b):
        t = a
        a = b
        b = t
    uf.parent[b] = a
    uf.area[a] += uf.area[b]
    uf.link[uf.tail[a]] = uf.head[b]
    uf.tail[a] = uf.tail[b]
    for t in rep[b]:
        rep[t].erase(b)
        rep[t].insert(a)
        rep[a].insert(t)
    rep[b].clear()
    return a


def partition(const i64[::1] areas, const i64[::1] eu, const i64[::1] ev,
              const double[::1] sim, const i64[::1] order, double s0,
              double theta_l, double theta_s, i64 a_s, i64 a_t):
    """Greedy attractive/repulsive merge plus tiny-region pass.

    Returns the representative of every region and the trace arrays
    (kind, similarity, a, b, merged), kind 0 = attractive edge, 1 = tiny merge.
    """
    cdef Py_ssize_t n = areas.shape[0], m = eu.shape[0]
    cdef Py_ssize_t i, e, j, k
    cdef i64 a, b, c, nb, best, mem
    cdef double s, h, best_s
    cdef bint merged
    parent_arr = np.arange(n, dtype=np.int64)
    area_arr = np.array(areas, dtype=np.int64, copy=True)
    head_arr = np.arange(n, dtype=np.int64)
    tail_arr = np.arange(n, dtype=np.int64)
    link_arr = np.full(n, -1, dtype=np.int64)
    cdef i64[::1] parent = parent_arr
    cdef i64[::1] area = area_arr
    cdef i64[::1] head = head_arr
    cdef i64[::1] tail = tail_arr
    cdef i64[::1] link = link_arr
    cdef _UF uf
    cdef vector[unordered_set[i64]] rep
    cdef vector[signed char] tr_kind
    cdef vector[double] tr_s
    cdef vector[i64] tr_a, tr_b
    cdef vector[signed char] tr_m
    if n > 0:
        uf.parent = &parent[0]
        uf.area = &area[0]
        uf.head = &head[0]
        uf.tail = &tail[0]
        uf.link = &link[0]
    rep.resize(n)

    # adjacency in CSR form for the tiny pass
    deg_arr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(deg_arr, np.asarray(eu) + 1, 1)
    np.add.at(deg_arr, np.asarray(ev) + 1, 1)
    ptr_arr = np.cumsum(deg_arr)
    fill_arr = ptr_arr[:-1].copy()
    nbr_arr = np.empty(2 * m, dtype=np.int64)
    nbs_arr = np.empty(2 * m, dtype=np.float64)
    cdef i64[::1] ptr = ptr_arr
    cdef i64[::1] fill = fill_arr
    cdef i64[::1] nbr = nbr_arr
    cdef double[::1] nbs = nbs_arr

    with nogil:
        for e in range(m):
            nbr[fill[eu[e]]] = ev[e]
            nbs[fill[eu[e]]] = sim[e]
            fill[eu[e]] += 1
            nbr[fill[ev[e]]] = eu[e]
            nbs[fill[ev[e]]] = sim[e]
            fill[ev[e]] += 1
            if sim[e] < s0:
                rep[eu[e]].insert(ev[e])
                rep[ev[e]].insert(eu[e])

        for j in range(order.shape[0]):
            e = order[j]
            s = sim[e]
            a = _find(uf.parent, eu[e])
            b = _find(uf.parent, ev[e])
            merged = False
            if a != b and rep[a].count(b) == 0:
                h = theta_l if (area[a] if area[a] < area[b] else area[b]) >= a_s else theta_s
                if s > h:
                    _union(&uf, rep, a, b)
                    merged = True
            tr_kind.push_back(0)
            tr_s.push_back(s)
            tr_a.push_back(a)
            tr_b.push_back(b)
            tr_m.push_back(merged)

    cand = np.flatnonzero((parent_arr == np.arange(n)) & (area_arr < a_t))
    tiny_arr = cand[np.lexsort((cand, area_arr[cand]))].astype(np.int64)
    cdef i64[::1] tiny = tiny_arr

    with nogil:
        for j in range(tiny.shape[0]):
            c = _find(uf.parent, tiny[j])
            if area[c] >= a_t:
                continue
            best = -1
            best_s = -1.0
            mem = head[c]
            while mem >= 0:
                for k in range(ptr[mem], ptr[mem + 1]):
                    b = _find(uf.parent, nbr[k])
                    if b == c or rep[c].count(b) != 0:
                        continue
                    s = nbs[k]
                    if best < 0 or s > best_s or (s == best_s and b < best):
                        best = b
                        best_s = s
                mem = link[mem]
            if best >= 0:
                _union(&uf, rep, c, best)
                tr_kind.push_back(1)
                tr_s.push_back(best_s)
                tr_a.push_back(c)
                tr_b.push_back(best)
                tr_m.push_back(True)

    rep_out = np.empty(n, dtype=np.int64)
    cdef i64[::1] ro = rep_out
    with nogil:
        for i in range(n):
            ro[i] = _find(uf.parent, i)
    trace = (
        np.array(tr_kind, dtype=np.int8),
        np.array(tr_s, dtype=np.float64),
        np.array(tr_a, dtype=np.int64),
        np.array(tr_b, dtype=np.int64),
        np.array(tr_m, dtype=bool),
    )
    return rep_out, trace
