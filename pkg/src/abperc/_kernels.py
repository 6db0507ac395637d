"""Compiled inner loops: cell-list pair search, union-find and crossing tests.

Everything here works on plain arrays so it can be shared by the public
geometry/graph layer and by the per-trial estimator loops.  Cells are stored
as a dense CSR over the bounding grid: ``order`` lists point indices sorted by
linear cell id and ``cell_start[c]:cell_start[c + 1]`` slices cell ``c``.
"""

import itertools

import numpy as np
from numba import njit


def cell_offsets(d, reach):
    """All integer offset vectors in ``{-reach..reach}^d`` as an ``(m, d)`` array."""
    rng = range(-reach, reach + 1)
    return np.array(list(itertools.product(rng, repeat=d)), dtype=np.int64).reshape(-1, d)


def grid_layout(points, cell_size, origin=None):
    """Bin points into cells; returns ``(origin, dims, order, cell_start, cells)``."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    n, d = points.shape
    if origin is None:
        origin = points.min(axis=0) if n else np.zeros(d)
    origin = np.ascontiguousarray(origin, dtype=np.float64)
    cells, dims, order, cell_start = _counting_sort(points, origin, float(cell_size))
    return origin, dims, order, cell_start, cells


@njit(cache=True, nogil=True)
def _counting_sort(points, origin, cell_size):
    n, d = points.shape
    cells = np.empty((n, d), dtype=np.int64)
    dims = np.ones(d, dtype=np.int64)
    for i in range(n):
        for k in range(d):
            c = np.int64(np.floor((points[i, k] - origin[k]) / cell_size))
            if c < 0:
                c = 0
            cells[i, k] = c
            if c + 1 > dims[k]:
                dims[k] = c + 1
    ncell = 1
    for k in range(d):
        ncell *= dims[k]
    linear = np.empty(n, dtype=np.int64)
    cell_start = np.zeros(ncell + 1, dtype=np.int64)
    for i in range(n):
        lin = 0
        for k in range(d):
            lin = lin * dims[k] + cells[i, k]
        linear[i] = lin
        cell_start[lin + 1] += 1
    for c in range(ncell):
        cell_start[c + 1] += cell_start[c]
    fill = cell_start[:-1].copy()
    order = np.empty(n, dtype=np.int64)
    for i in range(n):
        order[fill[linear[i]]] = i
        fill[linear[i]] += 1
    return cells, dims, order, cell_start


@njit(cache=True, nogil=True)
def _cell_of(x, origin, cell_size, out):
    for k in range(x.shape[0]):
        out[k] = np.int64(np.floor((x[k] - origin[k]) / cell_size))


@njit(cache=True, nogil=True)
def _linear_neighbor(base, off, dims):
    # -1 when the shifted cell falls outside the grid
    lin = 0
    for k in range(base.shape[0]):
        c = base[k] + off[k]
        if c < 0 or c >= dims[k]:
            return -1
        lin = lin * dims[k] + c
    return lin


@njit(cache=True, nogil=True)
def _dist2(a, i, b, j):
    s = 0.0
    for k in range(a.shape[1]):
        t = a[i, k] - b[j, k]
        s += t * t
    return s


@njit(cache=True, nogil=True)
def query_ball(points, order, cell_start, dims, origin, cell_size, offsets, q, radius):
    """Indices of ``points`` within closed distance ``radius`` of ``q`` (sorted)."""
    d = points.shape[1]
    base = np.empty(d, dtype=np.int64)
    _cell_of(q, origin, cell_size, base)
    r2 = radius * radius
    hits = []
    for m in range(offsets.shape[0]):
        lin = _linear_neighbor(base, offsets[m], dims)
        if lin < 0:
            continue
        for s in range(cell_start[lin], cell_start[lin + 1]):
            j = order[s]
            acc = 0.0
            for k in range(d):
                t = points[j, k] - q[k]
                acc += t * t
            if acc <= r2:
                hits.append(j)
    out = np.empty(len(hits), dtype=np.int64)
    for t in range(len(hits)):
        out[t] = hits[t]
    out.sort()
    return out


@njit(cache=True, nogil=True)
def _pair_scan(points, order, cell_start, dims, origin, cell_size, offsets, radius, pi, pj, fill):
    n, d = points.shape
    base = np.empty(d, dtype=np.int64)
    r2 = radius * radius
    count = 0
    for i in range(n):
        _cell_of(points[i], origin, cell_size, base)
        for k in range(d):
            if base[k] < 0:
                base[k] = 0
        for m in range(offsets.shape[0]):
            lin = _linear_neighbor(base, offsets[m], dims)
            if lin < 0:
                continue
            for s in range(cell_start[lin], cell_start[lin + 1]):
                j = order[s]
                if j <= i:
                    continue
                if _dist2(points, i, points, j) <= r2:
                    if fill:
                        pi[count] = i
                        pj[count] = j
                    count += 1
    return count


@njit(cache=True, nogil=True)
def pairs_within(points, order, cell_start, dims, origin, cell_size, offsets, radius):
    """All index pairs ``i < j`` with ``|x_i - x_j| <= radius``, ordered by ``i``."""
    dummy = np.empty(0, dtype=np.int64)
    m = _pair_scan(points, order, cell_start, dims, origin, cell_size, offsets, radius,
                   dummy, dummy, False)
    pi = np.empty(m, dtype=np.int64)
    pj = np.empty(m, dtype=np.int64)
    _pair_scan(points, order, cell_start, dims, origin, cell_size, offsets, radius, pi, pj, True)
    return pi, pj


@njit(cache=True, nogil=True)
def _cross_scan(a, b, order, cell_start, dims, origin, cell_size, offsets, radius, pi, pj, fill):
    n, d = a.shape
    base = np.empty(d, dtype=np.int64)
    r2 = radius * radius
    count = 0
    for i in range(n):
        _cell_of(a[i], origin, cell_size, base)
        for m in range(offsets.shape[0]):
            lin = _linear_neighbor(base, offsets[m], dims)
            if lin < 0:
                continue
            for s in range(cell_start[lin], cell_start[lin + 1]):
                j = order[s]
                if _dist2(a, i, b, j) <= r2:
                    if fill:
                        pi[count] = i
                        pj[count] = j
                    count += 1
    return count


@njit(cache=True, nogil=True)
def cross_pairs_within(a, b, order, cell_start, dims, origin, cell_size, offsets, radius):
    """Pairs ``(i, j)`` with ``|a_i - b_j| <= radius``; ``b`` is the gridded set."""
    dummy = np.empty(0, dtype=np.int64)
    m = _cross_scan(a, b, order, cell_start, dims, origin, cell_size, offsets, radius,
                    dummy, dummy, False)
    pi = np.empty(m, dtype=np.int64)
    pj = np.empty(m, dtype=np.int64)
    _cross_scan(a, b, order, cell_start, dims, origin, cell_size, offsets, radius, pi, pj, True)
    return pi, pj


@njit(cache=True, nogil=True)
def uf_find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root


@njit(cache=True, nogil=True)
def uf_union(parent, size, i, j):
    ri = uf_find(parent, i)
    rj = uf_find(parent, j)
    if ri == rj:
        return ri
    if size[ri] < size[rj] or (size[ri] == size[rj] and rj < ri):
        ri, rj = rj, ri
    parent[rj] = ri
    size[ri] += size[rj]
    return ri


@njit(cache=True, nogil=True)
def union_edges(n, pi, pj, active):
    """Union-find over ``n`` vertices using only edges whose endpoints are active.

    Returns ``(parent, size)`` with every path fully compressed, so
    ``parent[i]`` is the root of ``i``.  Inactive vertices stay singletons.
    """
    parent = np.arange(n, dtype=np.int64)
    size = np.ones(n, dtype=np.int64)
    for e in range(pi.shape[0]):
        i = pi[e]
        j = pj[e]
        if active[i] and active[j]:
            uf_union(parent, size, i, j)
    for i in range(n):
        uf_find(parent, i)
    return parent, size


@njit(cache=True, nogil=True)
def roots_cross(root, active, inner, outer):
    """True iff some root owns an active inner witness and an active outer witness."""
    n = root.shape[0]
    has_in = np.zeros(n, dtype=np.bool_)
    has_out = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        if not active[i]:
            continue
        r = root[i]
        if inner[i]:
            has_in[r] = True
        if outer[i]:
            has_out[r] = True
        if has_in[r] and has_out[r]:
            return True
    return False


@njit(cache=True, nogil=True)
def masked_crossing(n, pi, pj, active, inner, outer):
    parent, _ = union_edges(n, pi, pj, active)
    return roots_cross(parent, active, inner, outer)


@njit(cache=True, nogil=True)
def csr_adjacency(n, pi, pj):
    """Symmetric CSR adjacency (``indptr``, ``indices``) from an undirected pair list."""
    deg = np.zeros(n + 1, dtype=np.int64)
    for e in range(pi.shape[0]):
        deg[pi[e] + 1] += 1
        deg[pj[e] + 1] += 1
    for i in range(n):
        deg[i + 1] += deg[i]
    fill = deg[:-1].copy()
    indices = np.empty(2 * pi.shape[0], dtype=np.int64)
    for e in range(pi.shape[0]):
        a = pi[e]
        b = pj[e]
        indices[fill[a]] = b
        fill[a] += 1
        indices[fill[b]] = a
        fill[b] += 1
    return deg, indices


@njit(cache=True, nogil=True)
def _reaches(indptr, indices, active, inner, outer, skip, queue, seen):
    # multi-source BFS from active inner witnesses, ignoring vertex `skip`
    n = active.shape[0]
    for i in range(n):
        seen[i] = False
    head = 0
    tail = 0
    for i in range(n):
        if active[i] and inner[i] and i != skip:
            if outer[i]:
                return True
            seen[i] = True
            queue[tail] = i
            tail += 1
    while head < tail:
        v = queue[head]
        head += 1
        for s in range(indptr[v], indptr[v + 1]):
            w = indices[s]
            if w == skip or seen[w] or not active[w]:
                continue
            if outer[w]:
                return True
            seen[w] = True
            queue[tail] = w
            tail += 1
    return False


@njit(cache=True, nogil=True)
def _one_path(indptr, indices, active, inner, outer, queue, prev, seen):
    # BFS path from the inner witnesses to the first outer witness found
    n = active.shape[0]
    for i in range(n):
        seen[i] = False
        prev[i] = -1
    head = 0
    tail = 0
    target = -1
    for i in range(n):
        if active[i] and inner[i]:
            seen[i] = True
            queue[tail] = i
            tail += 1
            if outer[i] and target < 0:
                target = i
    while head < tail and target < 0:
        v = queue[head]
        head += 1
        for s in range(indptr[v], indptr[v + 1]):
            w = indices[s]
            if seen[w] or not active[w]:
                continue
            seen[w] = True
            prev[w] = v
            queue[tail] = w
            tail += 1
            if outer[w]:
                target = w
                break
    path = []
    v = target
    while v >= 0:
        path.append(v)
        v = prev[v]
    return path


@njit(cache=True, nogil=True)
def pivotal_flags(indptr, indices, retained, inner, outer):
    """Flag every vertex that is pivotal for the inner-to-outer crossing event.

    Vertex ``x`` is pivotal when the retained set with ``x`` forced in crosses
    and the retained set with ``x`` forced out does not.  All other vertices
    keep their retention state.
    """
    n = retained.shape[0]
    piv = np.zeros(n, dtype=np.bool_)
    if n == 0:
        return piv
    queue = np.empty(n, dtype=np.int64)
    seen = np.empty(n, dtype=np.bool_)
    prev = np.empty(n, dtype=np.int64)
    if _reaches(indptr, indices, retained, inner, outer, -1, queue, seen):
        # only vertices on one crossing path can be pivotal; test each by removal
        path = _one_path(indptr, indices, retained, inner, outer, queue, prev, seen)
        for t in range(len(path)):
            x = path[t]
            if not _reaches(indptr, indices, retained, inner, outer, x, queue, seen):
                piv[x] = True
        return piv
    # no crossing: a removed vertex is pivotal iff it bridges an inner and an outer cluster
    parent = np.arange(n, dtype=np.int64)
    size = np.ones(n, dtype=np.int64)
    for v in range(n):
        if not retained[v]:
            continue
        for s in range(indptr[v], indptr[v + 1]):
            w = indices[s]
            if w > v and retained[w]:
                uf_union(parent, size, v, w)
    has_in = np.zeros(n, dtype=np.bool_)
    has_out = np.zeros(n, dtype=np.bool_)
    for v in range(n):
        if retained[v]:
            r = uf_find(parent, v)
            if inner[v]:
                has_in[r] = True
            if outer[v]:
                has_out[r] = True
    for x in range(n):
        if retained[x]:
            continue
        hit_in = inner[x]
        hit_out = outer[x]
        for s in range(indptr[x], indptr[x + 1]):
            w = indices[s]
            if retained[w]:
                r = uf_find(parent, w)
                hit_in = hit_in or has_in[r]
                hit_out = hit_out or has_out[r]
        piv[x] = hit_in and hit_out
    return piv


@njit(cache=True, nogil=True)
def added_point_pivotal(points, active, inner, outer, x, x_inner, x_outer, radius, pi, pj):
    """Whether adding the extra vertex ``x`` turns the crossing event on.

    Returns ``(crosses_without, crosses_with)``.
    """
    n = points.shape[0]
    parent, _ = union_edges(n, pi, pj, active)
    if roots_cross(parent, active, inner, outer):
        return True, True
    has_in = np.zeros(n, dtype=np.bool_)
    has_out = np.zeros(n, dtype=np.bool_)
    for v in range(n):
        if active[v]:
            r = parent[v]
            if inner[v]:
                has_in[r] = True
            if outer[v]:
                has_out[r] = True
    hit_in = x_inner
    hit_out = x_outer
    r2 = radius * radius
    d = points.shape[1]
    for v in range(n):
        if not active[v]:
            continue
        acc = 0.0
        for k in range(d):
            t = points[v, k] - x[k]
            acc += t * t
        if acc <= r2:
            r = parent[v]
            hit_in = hit_in or has_in[r]
            hit_out = hit_out or has_out[r]
    return False, hit_in and hit_out
