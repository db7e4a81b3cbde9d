"""Compiled inner loops for Vietoris-Rips persistence in degrees 0 and 1.

Simplices are ordered by (filtration value, lexicographic vertex tuple).
Edge filtration values are replaced by their rank among the distinct edge
values so triangles can be encoded as a single int64 key::

    key(a, b, c) = value_rank * n**3 + s0 * n**2 + s1 * n + s2

with ``s0 < s1 < s2`` the sorted vertices. Integer comparison of keys is then
exactly the simplex order.

Degree 1 uses persistent cohomology: edge columns are reduced in decreasing
filtration order, pivots are the smallest coface, and edges that are pivots
in degree 0 (spanning-tree edges) are cleared. Columns whose smallest coface
is unclaimed pair immediately without materialising the coboundary.
"""

import numpy as np
from numba import njit, types
from numba.typed import Dict

MAX_POINTS = 7000  # keeps rank * n**3 + n**3 inside int64


@njit(cache=True, nogil=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@njit(cache=True, nogil=True)
def union_find_deaths(n, ei, ej, vals):
    """Kruskal sweep over edges already sorted in filtration order.

    Returns the merge values (length n - 1 for a connected sweep) and a
    boolean mask over the edge list marking spanning-tree edges.
    """
    parent = np.arange(n)
    size = np.ones(n, dtype=np.int64)
    deaths = np.empty(n - 1, dtype=np.float64)
    in_tree = np.zeros(ei.shape[0], dtype=np.bool_)
    found = 0
    for p in range(ei.shape[0]):
        if found == n - 1:
            break
        ra = _find(parent, ei[p])
        rb = _find(parent, ej[p])
        if ra == rb:
            continue
        if size[ra] < size[rb]:
            ra, rb = rb, ra
        parent[rb] = ra
        size[ra] += size[rb]
        deaths[found] = vals[p]
        in_tree[p] = True
        found += 1
    return deaths[:found], in_tree


@njit(cache=True, nogil=True)
def _tri_key(rank, a, b, c, n):
    r = np.int64(rank[a, b])
    if rank[a, c] > r:
        r = rank[a, c]
    if rank[b, c] > r:
        r = rank[b, c]
    s0, s1, s2 = a, b, c
    if s0 > s1:
        s0, s1 = s1, s0
    if s1 > s2:
        s1, s2 = s2, s1
    if s0 > s1:
        s0, s1 = s1, s0
    return r * n * n * n + (s0 * n + s1) * n + s2


@njit(cache=True, nogil=True)
def _min_coface(rank, a, b, n):
    rab = rank[a, b]
    # Among cofaces sharing the edge's value, the lexicographic order is
    # monotone in the third vertex, so the first hit is the minimum.
    for c in range(n):
        if c == a or c == b:
            continue
        rac = rank[a, c]
        rbc = rank[b, c]
        if 0 <= rac <= rab and 0 <= rbc <= rab:
            return _tri_key(rank, a, b, c, n)
    best = -1
    for c in range(n):
        if c == a or c == b:
            continue
        if rank[a, c] < 0 or rank[b, c] < 0:
            continue
        k = _tri_key(rank, a, b, c, n)
        if best < 0 or k < best:
            best = k
    return best


@njit(cache=True, nogil=True)
def _coboundary(rank, a, b, n):
    out = np.empty(n, dtype=np.int64)
    m = 0
    for c in range(n):
        if c == a or c == b:
            continue
        if rank[a, c] < 0 or rank[b, c] < 0:
            continue
        out[m] = _tri_key(rank, a, b, c, n)
        m += 1
    return out[:m]


@njit(cache=True, nogil=True)
def _cancel_pairs(sorted_keys):
    # keep entries with odd multiplicity (sum over GF(2))
    out = np.empty(sorted_keys.shape[0], dtype=np.int64)
    m = 0
    i = 0
    total = sorted_keys.shape[0]
    while i < total:
        j = i
        while j < total and sorted_keys[j] == sorted_keys[i]:
            j += 1
        if (j - i) % 2 == 1:
            out[m] = sorted_keys[i]
            m += 1
        i = j
    return out[:m]


@njit(cache=True, nogil=True)
def _xor_sorted(x, y):
    return _cancel_pairs(np.sort(np.concatenate((x, y))))


@njit(cache=True, nogil=True)
def _heap_push(heap, size, x):
    if size == heap.shape[0]:
        grown = np.empty(2 * heap.shape[0], dtype=np.int64)
        grown[:size] = heap[:size]
        heap = grown
    i = size
    heap[i] = x
    while i > 0:
        parent = (i - 1) >> 1
        if heap[parent] <= heap[i]:
            break
        heap[parent], heap[i] = heap[i], heap[parent]
        i = parent
    return heap, size + 1


@njit(cache=True, nogil=True)
def _heap_pop(heap, size):
    top = heap[0]
    size -= 1
    heap[0] = heap[size]
    i = 0
    while True:
        left = 2 * i + 1
        if left >= size:
            break
        small = left
        if left + 1 < size and heap[left + 1] < heap[left]:
            small = left + 1
        if heap[i] <= heap[small]:
            break
        heap[i], heap[small] = heap[small], heap[i]
        i = small
    return top, size


@njit(cache=True, nogil=True)
def _heap_pivot(heap, size):
    """Smallest key with odd multiplicity; cancelled keys are discarded."""
    while size > 0:
        x, size = _heap_pop(heap, size)
        count = 1
        while size > 0 and heap[0] == x:
            _, size = _heap_pop(heap, size)
            count += 1
        if count % 2 == 1:
            heap, size = _heap_push(heap, size, x)
            return x, heap, size
    return np.int64(-1), heap, size


@njit(cache=True, nogil=True)
def _push_coboundary(heap, size, rank, a, b, n):
    for c in range(n):
        if c == a or c == b:
            continue
        if rank[a, c] < 0 or rank[b, c] < 0:
            continue
        heap, size = _heap_push(heap, size, _tri_key(rank, a, b, c, n))
    return heap, size


@njit(cache=True, nogil=True)
def _owner(key, n, n3, edge_pos, claimed, extra):
    """Column currently holding ``key`` as pivot, or -1.

    A pivot taken without column additions is always a coface of its
    column, so checking the three facets suffices; pivots of reduced
    columns live in ``extra``.
    """
    lex = key % n3
    s2 = lex % n
    s1 = (lex // n) % n
    s0 = lex // (n * n)
    p = edge_pos[s0, s1]
    if p >= 0 and claimed[p] == key:
        return p
    p = edge_pos[s0, s2]
    if p >= 0 and claimed[p] == key:
        return p
    p = edge_pos[s1, s2]
    if p >= 0 and claimed[p] == key:
        return p
    if key in extra:
        return extra[key]
    return -1


@njit(cache=True, nogil=True)
def cohomology_h1(n, rank, edge_pos, ei, ej, erank, cleared):
    """Reduce degree-1 coboundary columns.

    ``ei, ej, erank`` describe the edges with value at most the threshold,
    sorted in filtration order; ``rank`` is the n x n matrix of value ranks
    (-1 above the threshold) and ``edge_pos`` maps a vertex pair to its
    position in the edge list. Returns birth ranks, death ranks (-1 for
    classes still alive at the threshold) and the count of columns that
    needed at least one column addition.
    """
    n3 = np.int64(n) * n * n
    claimed = np.full(ei.shape[0], -1, dtype=np.int64)
    extra = Dict.empty(key_type=types.int64, value_type=types.int64)
    stored = Dict.empty(key_type=types.int64, value_type=types.int64[:])
    births = np.empty(ei.shape[0], dtype=np.int64)
    deaths = np.empty(ei.shape[0], dtype=np.int64)
    n_pairs = 0
    n_reduced = 0
    for p in range(ei.shape[0] - 1, -1, -1):
        if cleared[p]:
            continue
        a = ei[p]
        b = ej[p]
        k = _min_coface(rank, a, b, n)
        if k >= 0 and _owner(k, n, n3, edge_pos, claimed, extra) < 0:
            claimed[p] = k
            if k // n3 > erank[p]:
                births[n_pairs] = erank[p]
                deaths[n_pairs] = k // n3
                n_pairs += 1
            continue
        n_reduced += 1
        heap = np.empty(4 * n, dtype=np.int64)
        heap, size = _push_coboundary(heap, 0, rank, a, b, n)
        basis = np.array([p], dtype=np.int64)
        while True:
            piv, heap, size = _heap_pivot(heap, size)
            if piv < 0:
                births[n_pairs] = erank[p]
                deaths[n_pairs] = -1
                n_pairs += 1
                break
            q = _owner(piv, n, n3, edge_pos, claimed, extra)
            if q >= 0:
                if q in stored:
                    other = stored[q]
                else:
                    other = np.array([q], dtype=np.int64)
                for e in other:
                    heap, size = _push_coboundary(heap, size, rank, ei[e], ej[e], n)
                basis = _xor_sorted(basis, other)
                continue
            extra[piv] = p
            if basis.shape[0] > 1:
                stored[p] = basis
            if piv // n3 > erank[p]:
                births[n_pairs] = erank[p]
                deaths[n_pairs] = piv // n3
                n_pairs += 1
            break
    return births[:n_pairs], deaths[:n_pairs], n_reduced
